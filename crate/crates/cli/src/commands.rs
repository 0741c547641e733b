use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use durage::align::{load_corpus, Corpus, CtmOptions};
use durage::eval::{fit_final, loso_evaluate, EvalConfig, EvalModel};
use durage::functionals::{accumulate, build_feature_matrix, read_jsonl, write_csv, write_jsonl, FeatureMatrix};
use durage::importance::meta_importance;
use durage::learners::ModelDocument;
use durage::phone::{build_inventory, CategoryKey, PhoneClassTable};
use durage::stacking::{meta_grid, LearnerSpec, StackedModel};
use durage::synth::{default_spec, export_histogram, generate_corpus, planted_spec, write_corpus, write_histogram_csv, SynthSpec};
use serde::Serialize;

use crate::run::{sidecar, write_json, write_run};
use crate::{CliError, CorpusArgs, EvaluateArgs, ExtractArgs, FitArgs, GridArg, HistogramArgs, ModelArg, Outcome, PredictArgs, SynthArgs, TrainArgs};

fn create(path: &Path) -> Result<BufWriter<std::fs::File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(BufWriter::new(f))
}

fn write_with<F>(path: &Path, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<std::fs::File>) -> std::io::Result<()>,
{
    let mut w = create(path)?;
    body(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn read_features(path: &Path) -> Result<FeatureMatrix, CliError> {
    let f = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(read_jsonl(std::io::BufReader::new(f))?)
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        log::warn!("{w}");
    }
}

pub fn synth(args: &SynthArgs) -> Result<Outcome, CliError> {
    let mut inputs = Vec::new();
    let mut spec = match args.spec.as_str() {
        "default" => default_spec(),
        "planted" => planted_spec(),
        path => {
            inputs.push(PathBuf::from(path));
            SynthSpec::from_json(&read_text(Path::new(path))?)?
        }
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(n) = args.speakers {
        spec.n_speakers = n;
    }
    if args.null {
        spec = spec.without_signal();
    }
    let corpus = generate_corpus(&spec)?;
    write_corpus(&corpus, &args.out)?;
    log::info!(
        "wrote {} speakers, {} segments to {}",
        corpus.speakers.len(),
        corpus.n_segments(),
        args.out.display()
    );
    write_run(&args.out.join("run.json"), "synth", args, &spec, &inputs)?;
    Ok(Outcome::default())
}

/// Expand directories into their `*.ctm` files, sorted by name.
fn ctm_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| CliError::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "ctm"))
                .collect();
            found.sort();
            if found.is_empty() {
                return Err(CliError::Usage(format!("{}: no .ctm files", p.display())));
            }
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn load(args: &CorpusArgs) -> Result<(Corpus, Vec<PathBuf>), CliError> {
    let files = ctm_files(&args.ctm)?;
    let classes = match &args.phone_classes {
        Some(path) => PhoneClassTable::with_override_file(path)?,
        None => PhoneClassTable::arpabet(),
    };
    let options = CtmOptions {
        classes,
        skip_nonpositive: args.skip_nonpositive,
    };
    let loaded = load_corpus(&files, &args.manifest, &options)?;
    warn_all(&loaded.warnings);
    let mut inputs = files;
    inputs.push(args.manifest.clone());
    inputs.extend(args.phone_classes.iter().cloned());
    Ok((loaded.corpus, inputs))
}

pub fn extract(args: &ExtractArgs) -> Result<Outcome, CliError> {
    if !(0.0..=1.0).contains(&args.min_speaker_fraction) {
        return Err(CliError::Usage("--min-speaker-fraction must lie in [0, 1]".into()));
    }
    let (corpus, inputs) = load(&args.corpus)?;
    let inventory = build_inventory(&corpus, args.corpus.stress.enabled(), args.min_speaker_fraction)?;
    let table = accumulate(&corpus, &inventory);
    let features = build_feature_matrix(&table, &inventory, &corpus.records())?;
    log::info!(
        "{} speakers, {} categories",
        features.n_speakers(),
        features.n_categories()
    );

    let mut w = create(&args.out)?;
    write_jsonl(&mut w, &features)?;
    w.flush().map_err(|e| CliError::io(&args.out, e))?;
    if let Some(csv) = &args.csv {
        write_with(csv, |w| write_csv(w, &features))?;
    }
    write_run(&sidecar(&args.out), "extract", args, (), &inputs)?;
    Ok(Outcome::default())
}

fn eval_config(model: ModelArg, fit: &FitArgs) -> Result<EvalConfig, CliError> {
    let model = match model {
        ModelArg::Baseline => EvalModel::Baseline,
        ModelArg::Svr => EvalModel::Svr,
        ModelArg::Adaboost => EvalModel::Adaboost,
    };
    let mut cfg = EvalConfig::new(model, fit.seed);
    cfg.inner_folds = fit.inner_folds;
    cfg.stacking.meta_folds = fit.meta_folds;
    if let Some(class) = model.class() {
        cfg.meta_grid = match fit.grid {
            GridArg::Default => meta_grid(class, false),
            GridArg::Small => meta_grid(class, true),
            GridArg::None => vec![LearnerSpec::default_meta(class)],
        };
    }
    if fit.meta_folds < 2 {
        return Err(CliError::Usage("--meta-folds must be at least 2".into()));
    }
    if fit.inner_folds < 2 && cfg.meta_grid.len() > 1 {
        return Err(CliError::Usage("--inner-folds must be at least 2".into()));
    }
    Ok(cfg)
}

pub fn evaluate(args: &EvaluateArgs) -> Result<Outcome, CliError> {
    let cfg = eval_config(args.model, &args.fit)?;
    if args.importance && cfg.model == EvalModel::Baseline {
        return Err(CliError::Usage("--importance needs a stacked model".into()));
    }
    let features = read_features(&args.fit.features)?;
    let report = loso_evaluate(&features, &cfg)?;
    let mut nonconverged = report.nonconverged;

    let dir = &args.report;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_json(&dir.join("report.json"), &report)?;
    write_with(&dir.join("scatter.csv"), |w| report.write_scatter_csv(w))?;
    write_with(&dir.join("per_age_mae.csv"), |w| report.write_per_age_csv(w))?;
    if args.importance {
        let fit = fit_final(&features, &cfg)?;
        warn_all(&fit.warnings);
        nonconverged += fit.nonconverged;
        let importance = meta_importance(&fit.model)?;
        write_with(&dir.join("importance.csv"), |w| importance.write_csv(w))?;
    }
    log::info!(
        "MAE {:.3} (baseline {:.3}), R2 {:.3}, r {:.3}",
        report.metrics.mae,
        report.baseline.loso.mae,
        report.metrics.r2,
        report.metrics.pearson
    );
    write_run(&dir.join("run.json"), "evaluate", args, &cfg, &[args.fit.features.clone()])?;
    Ok(Outcome { nonconverged })
}

pub fn train(args: &TrainArgs) -> Result<Outcome, CliError> {
    if args.model == ModelArg::Baseline {
        return Err(CliError::Usage("train needs --model svr or adaboost".into()));
    }
    let cfg = eval_config(args.model, &args.fit)?;
    let features = read_features(&args.fit.features)?;
    let fit = fit_final(&features, &cfg)?;
    warn_all(&fit.warnings);
    let json = fit.model.to_document().to_json()?;
    write_with(&args.out, |w| w.write_all(json.as_bytes()))?;
    write_run(&sidecar(&args.out), "train", args, &cfg, &[args.fit.features.clone()])?;
    Ok(Outcome {
        nonconverged: fit.nonconverged,
    })
}

pub fn predict(args: &PredictArgs) -> Result<Outcome, CliError> {
    let doc = ModelDocument::<StackedModel>::from_json(&read_text(&args.model)?)?;
    let features = read_features(&args.features)?;
    let preds = doc.model.predict(&features)?;
    write_with(&args.out, |w| {
        writeln!(w, "speaker_id,predicted_age")?;
        for (s, p) in features.speaker_ids.iter().zip(&preds) {
            writeln!(w, "{s},{p:.16e}")?;
        }
        Ok(())
    })?;
    write_run(
        &sidecar(&args.out),
        "predict",
        args,
        (),
        &[args.model.clone(), args.features.clone()],
    )?;
    Ok(Outcome::default())
}

#[derive(Serialize)]
struct HistogramConfig<'a> {
    category: &'a str,
    with_stress: bool,
}

pub fn histogram(args: &HistogramArgs) -> Result<Outcome, CliError> {
    let (corpus, inputs) = load(&args.corpus)?;
    let inventory = build_inventory(&corpus, args.corpus.stress.enabled(), 0.0)?;
    let key = CategoryKey::new(args.category.as_str());
    if inventory.index_of(&key).is_none() {
        return Err(CliError::Usage(format!("category {key} does not occur in the corpus")));
    }
    let table = accumulate(&corpus, &inventory);
    let rows = export_histogram(&table, &corpus.records(), &key)?;
    write_with(&args.out, |w| write_histogram_csv(w, &rows))?;
    let config = HistogramConfig {
        category: &args.category,
        with_stress: args.corpus.stress.enabled(),
    };
    write_run(&sidecar(&args.out), "histogram", args, config, &inputs)?;
    Ok(Outcome::default())
}
