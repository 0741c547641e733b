//! Browser bindings for the demo page in `www/`.
//!
//! Each operation has a plain Rust form returning JSON text, which the
//! native tests call, and a `wasm_bindgen` export that forwards to it.

use durage::eval::{loso_evaluate, EvalConfig, EvalModel, Metrics};
use durage::functionals::{accumulate, build_feature_matrix, compute_functionals};
use durage::phone::{build_inventory, CategoryKey};
use durage::synth::{default_spec, export_histogram, generate_corpus, HistogramRow};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest corpus the page may request; LOSO cost grows quickly with it.
pub const MAX_SPEAKERS: usize = 40;

fn parse_durations(text: &str) -> Result<Vec<f64>, String> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("not a number: {t}")))
        .collect()
}

fn json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

fn demo_corpus(n_speakers: usize, seed: u64) -> Result<durage::align::Corpus, String> {
    if !(2..=MAX_SPEAKERS).contains(&n_speakers) {
        return Err(format!("speakers must lie in 2..={MAX_SPEAKERS}"));
    }
    let mut spec = default_spec();
    spec.n_speakers = n_speakers;
    spec.seed = seed;
    generate_corpus(&spec).map_err(|e| e.to_string())
}

/// The eight descriptors of a pasted list of durations in seconds.
pub fn describe(text: &str) -> Result<String, String> {
    let d = parse_durations(text)?;
    let f = compute_functionals(&d).map_err(|e| e.to_string())?;
    json(&f)
}

#[derive(Serialize)]
struct Histogram {
    category: String,
    rows: Vec<HistogramRow>,
}

/// Per-age 10 ms histogram of one category in a small synthetic corpus.
pub fn histogram(n_speakers: usize, seed: u64, category: &str) -> Result<String, String> {
    let corpus = demo_corpus(n_speakers, seed)?;
    let inventory = build_inventory(&corpus, true, 0.0).map_err(|e| e.to_string())?;
    let key = CategoryKey::new(category);
    if inventory.index_of(&key).is_none() {
        return Err(format!("category {key} does not occur"));
    }
    let table = accumulate(&corpus, &inventory);
    let rows = export_histogram(&table, &corpus.records(), &key).map_err(|e| e.to_string())?;
    json(&Histogram {
        category: key.to_string(),
        rows,
    })
}

#[derive(Serialize)]
struct Scatter {
    metrics: Metrics,
    baseline: Metrics,
    points: Vec<[f64; 2]>,
}

/// Leave-one-speaker-out scatter of a stacked model without tuning.
pub fn scatter(n_speakers: usize, seed: u64, model: &str) -> Result<String, String> {
    let model = match model {
        "baseline" => EvalModel::Baseline,
        "svr" => EvalModel::Svr,
        "adaboost" => EvalModel::Adaboost,
        other => return Err(format!("unknown model {other}")),
    };
    let corpus = demo_corpus(n_speakers, seed)?;
    let inventory = build_inventory(&corpus, true, 0.0).map_err(|e| e.to_string())?;
    let table = accumulate(&corpus, &inventory);
    let features =
        build_feature_matrix(&table, &inventory, &corpus.records()).map_err(|e| e.to_string())?;
    let mut cfg = EvalConfig::new(model, seed);
    if let Some(class) = model.class() {
        cfg.meta_grid = vec![durage::stacking::LearnerSpec::default_meta(class)];
    }
    let report = loso_evaluate(&features, &cfg).map_err(|e| e.to_string())?;
    json(&Scatter {
        metrics: report.metrics,
        baseline: report.baseline.loso,
        points: report
            .predictions
            .iter()
            .map(|p| [p.true_age, p.predicted_age])
            .collect(),
    })
}

#[wasm_bindgen(js_name = describe)]
pub fn describe_js(text: &str) -> Result<String, JsError> {
    describe(text).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = histogram)]
pub fn histogram_js(n_speakers: usize, seed: u32, category: &str) -> Result<String, JsError> {
    histogram(n_speakers, seed.into(), category).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = scatter)]
pub fn scatter_js(n_speakers: usize, seed: u32, model: &str) -> Result<String, JsError> {
    scatter(n_speakers, seed.into(), model).map_err(|e| JsError::new(&e))
}
