use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use durage::eval::{fit_final, EvalConfig, EvalModel};
use durage::functionals::read_jsonl;
use durage::stacking::{meta_grid, ModelClass};

fn durage(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_durage"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = durage(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth_and_extract(dir: &Path, speakers: usize, seed: u64) -> PathBuf {
    let data = dir.join("data");
    let feats = dir.join("feats.jsonl");
    ok(&["synth", "--speakers", &speakers.to_string(), "--seed", &seed.to_string(), "--out", p(&data)]);
    ok(&["extract", "--ctm", p(&data), "--manifest", p(&data.join("manifest.csv")), "--out", p(&feats)]);
    feats
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|f| (f.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&f).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn missing_out_is_a_usage_error() {
    assert_eq!(durage(&["synth", "--seed", "1"]).status.code(), Some(2));
    assert_eq!(durage(&["evaluate", "--model", "forest"]).status.code(), Some(2));
}

#[test]
fn synth_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["synth", "--speakers", "6", "--seed", "11", "--out", p(&a)]);
    ok(&["synth", "--speakers", "6", "--seed", "11", "--jobs", "2", "--out", p(&b)]);
    let (mut fa, mut fb) = (dir_bytes(&a), dir_bytes(&b));
    fa.retain(|f| f.0 != "run.json");
    fb.retain(|f| f.0 != "run.json");
    assert_eq!(fa.len(), 6 + 1);
    assert_eq!(fa, fb);
}

#[test]
fn extract_writes_one_record_per_speaker() {
    let tmp = tempfile::tempdir().unwrap();
    let feats = synth_and_extract(tmp.path(), 7, 2);
    let text = std::fs::read_to_string(&feats).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert!(feats.with_file_name("feats.jsonl.run.json").exists());

    let again = tmp.path().join("again.jsonl");
    let data = tmp.path().join("data");
    ok(&["extract", "--ctm", p(&data), "--manifest", p(&data.join("manifest.csv")), "--out", p(&again)]);
    assert_eq!(std::fs::read(&feats).unwrap(), std::fs::read(&again).unwrap());
}

fn stressed_corpus(dir: &Path) -> (PathBuf, PathBuf) {
    let mut labels = vec!["SIL".to_string()];
    for base in ["AA", "IY"] {
        for stress in 0..3 {
            for pos in ["B", "I", "E", "S"] {
                labels.push(format!("{base}{stress}_{pos}"));
            }
        }
    }
    let ctm = dir.join("s.ctm");
    let mut text = String::new();
    for spk in ["k1", "k2"] {
        for (i, l) in labels.iter().enumerate() {
            text.push_str(&format!("{spk}-u1 1 {:.2} 0.10 {l}\n", i as f64 * 0.1));
        }
    }
    std::fs::write(&ctm, text).unwrap();
    let manifest = dir.join("m.csv");
    std::fs::write(&manifest, "speaker_id,age_value,age_unit\nk1,5,years\nk2,9,years\n").unwrap();
    (ctm, manifest)
}

fn category_count(feats: &Path) -> usize {
    let f = std::fs::File::open(feats).unwrap();
    read_jsonl(std::io::BufReader::new(f)).unwrap().n_categories()
}

#[test]
fn stripping_stress_at_least_halves_the_inventory() {
    let tmp = tempfile::tempdir().unwrap();
    let (ctm, manifest) = stressed_corpus(tmp.path());
    let with = tmp.path().join("with.jsonl");
    let without = tmp.path().join("without.jsonl");
    ok(&["extract", "--ctm", p(&ctm), "--manifest", p(&manifest), "--with-stress", "--out", p(&with)]);
    ok(&["extract", "--ctm", p(&ctm), "--manifest", p(&manifest), "--with-stress", "--no-stress", "--out", p(&without)]);
    let (a, b) = (category_count(&with), category_count(&without));
    assert!(2 * b <= a, "with stress {a}, without {b}");
}

#[test]
fn histogram_covers_every_age_bucket() {
    let tmp = tempfile::tempdir().unwrap();
    let (ctm, manifest) = stressed_corpus(tmp.path());
    let out = tmp.path().join("h.csv");
    ok(&["histogram", "--ctm", p(&ctm), "--manifest", p(&manifest), "--category", "AA", "--out", p(&out)]);
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text, "age,bin_start,bin_end,count\n5,0.10,0.11,12\n9,0.10,0.11,12\n");
    let bad = durage(&["histogram", "--ctm", p(&ctm), "--manifest", p(&manifest), "--category", "ZH", "--out", p(&out)]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn baseline_report_on_three_speakers() {
    let tmp = tempfile::tempdir().unwrap();
    let feats = tmp.path().join("f.jsonl");
    let block = "[0.1,0.0,0.1,0.1,0.0,0.0,0.0,0.0]";
    let lines: String = [("a", 1), ("b", 2), ("c", 4)]
        .iter()
        .map(|(s, a)| format!("{{\"speaker_id\":\"{s}\",\"age\":{a},\"age_unit\":\"grade\",\"features\":{{\"AA\":{block}}},\"missing\":[]}}\n"))
        .collect();
    std::fs::write(&feats, lines).unwrap();
    let rep = tmp.path().join("rep");
    ok(&["evaluate", "--features", p(&feats), "--model", "baseline", "--report", p(&rep)]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(rep.join("report.json")).unwrap()).unwrap();
    let mae = report["metrics"]["mae"].as_f64().unwrap();
    assert!((mae - 5.0 / 3.0).abs() < 1e-12);
    for f in ["scatter.csv", "per_age_mae.csv", "run.json"] {
        assert!(rep.join(f).exists(), "{f}");
    }
    assert!(!rep.join("importance.csv").exists());
}

#[test]
fn adaboost_importance_is_written() {
    let tmp = tempfile::tempdir().unwrap();
    let feats = synth_and_extract(tmp.path(), 12, 4);
    let rep = tmp.path().join("rep");
    ok(&[
        "evaluate", "--features", p(&feats), "--model", "adaboost", "--grid", "none", "--seed", "3",
        "--report", p(&rep), "--importance",
    ]);
    let text = std::fs::read_to_string(rep.join("importance.csv")).unwrap();
    let total: f64 = text
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-9);

    let svr = durage(&["evaluate", "--features", p(&feats), "--model", "svr", "--grid", "none", "--report", p(&rep), "--importance"]);
    assert_eq!(svr.status.code(), Some(2));
}

#[test]
fn train_predict_matches_library_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let feats = synth_and_extract(tmp.path(), 14, 5);
    let model = tmp.path().join("model.json");
    let preds = tmp.path().join("preds.csv");
    ok(&["train", "--features", p(&feats), "--model", "svr", "--grid", "small", "--seed", "9", "--out", p(&model)]);
    ok(&["predict", "--model", p(&model), "--features", p(&feats), "--out", p(&preds)]);

    let m = read_jsonl(std::io::BufReader::new(std::fs::File::open(&feats).unwrap())).unwrap();
    let mut cfg = EvalConfig::new(EvalModel::Svr, 9);
    cfg.meta_grid = meta_grid(ModelClass::Svr, true);
    let want = fit_final(&m, &cfg).unwrap().model.predict(&m).unwrap();

    let text = std::fs::read_to_string(&preds).unwrap();
    let got: Vec<(String, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let (s, v) = l.split_once(',').unwrap();
            (s.to_string(), v.parse().unwrap())
        })
        .collect();
    assert_eq!(got.len(), 14);
    for ((s, g), (id, w)) in got.iter().zip(m.speaker_ids.iter().zip(&want)) {
        assert_eq!(s, id);
        assert!(g.is_finite());
        assert_eq!(g, w);
    }
}

#[test]
fn predict_rejects_a_different_inventory() {
    let tmp = tempfile::tempdir().unwrap();
    let feats = synth_and_extract(tmp.path(), 8, 6);
    let model = tmp.path().join("model.json");
    ok(&["train", "--features", p(&feats), "--grid", "none", "--out", p(&model)]);

    let (ctm, manifest) = stressed_corpus(tmp.path());
    let other = tmp.path().join("other.jsonl");
    ok(&["extract", "--ctm", p(&ctm), "--manifest", p(&manifest), "--out", p(&other)]);
    let out = durage(&["predict", "--model", p(&model), "--features", p(&other), "--out", p(&tmp.path().join("x.csv"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("layout mismatch"));
}

#[test]
fn config_file_sits_under_explicit_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"seed": 5, "synth": {"speakers": 3}}"#).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["synth", "--config", p(&cfg), "--out", p(&a)]);
    ok(&["--config", p(&cfg), "synth", "--seed", "8", "--out", p(&b)]);

    let run = |d: &Path| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(d.join("run.json")).unwrap()).unwrap()
    };
    assert_eq!(run(&a)["config"]["seed"], 5);
    assert_eq!(run(&a)["config"]["n_speakers"], 3);
    assert_eq!(run(&b)["config"]["seed"], 8);

    std::fs::write(&cfg, r#"{"synth": {"sede": 5}}"#).unwrap();
    assert_eq!(durage(&["synth", "--config", p(&cfg), "--out", p(&a)]).status.code(), Some(2));
}
