//! Leave-one-speaker-out evaluation and regression metrics.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::AgeUnit;
use crate::error::{Error, Result};
use crate::functionals::FeatureMatrix;
use crate::learners::{fingerprint, fit_mean_baseline};
use crate::stacking::{fit_stacked_tuned, meta_grid, LearnerSpec, ModelClass, StackedFit, StackingConfig};

pub fn mae(y: &[f64], p: &[f64]) -> Result<f64> {
    check_pair(y, p)?;
    Ok(y.iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

/// Coefficient of determination. With constant targets it is 1 for a
/// perfect prediction and 0 otherwise.
pub fn r2(y: &[f64], p: &[f64]) -> Result<f64> {
    check_pair(y, p)?;
    let m = y.iter().sum::<f64>() / y.len() as f64;
    let ss_res: f64 = y.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|a| (a - m).powi(2)).sum();
    if ss_tot == 0.0 {
        return Ok(if ss_res == 0.0 { 1.0 } else { 0.0 });
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// Pearson correlation; 0 when either side is constant.
pub fn pearson(y: &[f64], p: &[f64]) -> Result<f64> {
    check_pair(y, p)?;
    let constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    if constant(y) || constant(p) {
        return Ok(0.0);
    }
    let n = y.len() as f64;
    let my = y.iter().sum::<f64>() / n;
    let mp = p.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in y.iter().zip(p) {
        sxy += (a - my) * (b - mp);
        sxx += (a - my).powi(2);
        syy += (b - mp).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn check_pair(y: &[f64], p: &[f64]) -> Result<()> {
    if y.len() != p.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: p.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::EmptyInput("metric input"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub r2: f64,
    pub pearson: f64,
}

impl Metrics {
    pub fn compute(y: &[f64], p: &[f64]) -> Result<Self> {
        Ok(Self {
            mae: mae(y, p)?,
            r2: r2(y, p)?,
            pearson: pearson(y, p)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeBucketError {
    pub age: i64,
    pub n: usize,
    pub mae: f64,
}

pub fn per_age_mae(y: &[f64], p: &[f64], unit: AgeUnit) -> Result<Vec<AgeBucketError>> {
    check_pair(y, p)?;
    let mut acc: BTreeMap<i64, (usize, f64)> = BTreeMap::new();
    for (a, b) in y.iter().zip(p) {
        let e = acc.entry(unit.bucket(*a)).or_default();
        e.0 += 1;
        e.1 += (a - b).abs();
    }
    Ok(acc
        .into_iter()
        .map(|(age, (n, s))| AgeBucketError {
            age,
            n,
            mae: s / n as f64,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalModel {
    Baseline,
    Svr,
    Adaboost,
}

impl EvalModel {
    pub fn class(self) -> Option<ModelClass> {
        match self {
            EvalModel::Baseline => None,
            EvalModel::Svr => Some(ModelClass::Svr),
            EvalModel::Adaboost => Some(ModelClass::Adaboost),
        }
    }
}

impl std::str::FromStr for EvalModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(EvalModel::Baseline),
            "svr" => Ok(EvalModel::Svr),
            "adaboost" => Ok(EvalModel::Adaboost),
            other => Err(Error::Config(format!(
                "unknown model '{other}' (expected svr, adaboost or baseline)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub model: EvalModel,
    /// Ignored for the baseline apart from the seed.
    pub stacking: StackingConfig,
    pub meta_grid: Vec<LearnerSpec>,
    pub inner_folds: usize,
}

impl EvalConfig {
    pub fn new(model: EvalModel, seed: u64) -> Self {
        let class = model.class().unwrap_or(ModelClass::Svr);
        Self {
            model,
            stacking: StackingConfig::new(class, seed),
            meta_grid: meta_grid(class, false),
            inner_folds: 5,
        }
    }

    pub fn seed(&self) -> u64 {
        self.stacking.seed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub speaker_id: String,
    pub true_age: f64,
    pub predicted_age: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineMetrics {
    pub loso: Metrics,
    pub in_sample: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: EvalModel,
    pub seed: u64,
    pub config_fingerprint: String,
    pub n_speakers: usize,
    pub n_categories: usize,
    pub age_unit: AgeUnit,
    pub metrics: Metrics,
    pub per_age: Vec<AgeBucketError>,
    pub baseline: BaselineMetrics,
    /// How often each meta grid point was chosen across outer folds.
    pub meta_choices: Vec<usize>,
    pub nonconverged: usize,
    pub predictions: Vec<Prediction>,
}

impl EvalReport {
    pub fn write_scatter_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "true_age,predicted_age,speaker_id")?;
        for p in &self.predictions {
            writeln!(w, "{:.16e},{:.16e},{}", p.true_age, p.predicted_age, p.speaker_id)?;
        }
        Ok(())
    }

    pub fn write_per_age_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "age,n,mae")?;
        for b in &self.per_age {
            writeln!(w, "{},{},{:.16e}", b.age, b.n, b.mae)?;
        }
        Ok(())
    }
}

/// Fit the configured model (tuned by inner CV) on every row of `features`.
pub fn fit_final(features: &FeatureMatrix, config: &EvalConfig) -> Result<StackedFit> {
    if config.model.class().is_none() {
        return Err(Error::Config("the baseline has no stacked model to fit".into()));
    }
    fit_stacked_tuned(features, &config.stacking, &config.meta_grid, config.inner_folds)
}

/// Leave-one-speaker-out evaluation. Rows are processed in speaker-id order,
/// so the report does not depend on manifest order.
pub fn loso_evaluate(features: &FeatureMatrix, config: &EvalConfig) -> Result<EvalReport> {
    let n = features.n_speakers();
    if n < 2 {
        return Err(Error::TooFewSpeakers { needed: 2, have: n });
    }
    if let Some(class) = config.model.class() {
        if config.stacking.model_class != class {
            return Err(Error::Config("model and stacking class disagree".into()));
        }
    }
    let order = features.rows_by_speaker_id();
    let sorted = features.select_rows(&order);
    let ages = sorted.ages.clone();

    let outcomes: Vec<(f64, Option<usize>, usize)> = (0..n)
        .into_par_iter()
        .map(|held| {
            let train: Vec<usize> = (0..n).filter(|&i| i != held).collect();
            match config.model {
                EvalModel::Baseline => {
                    let m = fit_mean_baseline(&train.iter().map(|&i| ages[i]).collect::<Vec<_>>())?;
                    Ok((m.mean, None, 0))
                }
                _ => {
                    let sub = sorted.select_rows(&train);
                    let fit = fit_final(&sub, config)?;
                    let p = fit
                        .model
                        .predict_one(&sorted.values[held], &sorted.present[held])?;
                    Ok((p, fit.chosen_meta, fit.nonconverged))
                }
            }
        })
        .collect::<Result<_>>()?;

    let preds: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
    let mut meta_choices = vec![0; if config.model.class().is_some() { config.meta_grid.len() } else { 0 }];
    for o in &outcomes {
        if let Some(c) = o.1 {
            meta_choices[c] += 1;
        }
    }

    let baseline_loso: Vec<f64> = {
        let total: f64 = ages.iter().sum();
        ages.iter().map(|a| (total - a) / (n - 1) as f64).collect()
    };
    let global = ages.iter().sum::<f64>() / n as f64;

    Ok(EvalReport {
        model: config.model,
        seed: config.seed(),
        config_fingerprint: fingerprint(config),
        n_speakers: n,
        n_categories: features.n_categories(),
        age_unit: features.age_unit,
        metrics: Metrics::compute(&ages, &preds)?,
        per_age: per_age_mae(&ages, &preds, features.age_unit)?,
        baseline: BaselineMetrics {
            loso: Metrics::compute(&ages, &baseline_loso)?,
            in_sample: Metrics::compute(&ages, &vec![global; n])?,
        },
        meta_choices,
        nonconverged: outcomes.iter().map(|o| o.2).sum(),
        predictions: sorted
            .speaker_ids
            .iter()
            .zip(&ages)
            .zip(&preds)
            .map(|((s, &t), &p)| Prediction {
                speaker_id: s.clone(),
                true_age: t,
                predicted_age: p,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_closed_forms() {
        let y = [1.0, 2.0, 3.0];
        assert_eq!(mae(&y, &[1.0, 2.0, 4.0]).unwrap(), 1.0 / 3.0);
        assert_eq!(r2(&y, &y).unwrap(), 1.0);
        assert_eq!(r2(&y, &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert!((pearson(&y, &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&y, &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(pearson(&y, &[5.0; 3]).unwrap(), 0.0);
        assert_eq!(pearson(&[0.1, 0.7, 0.2, 0.9, 0.3], &[0.43; 5]).unwrap(), 0.0);
        assert_eq!(r2(&[4.0; 3], &[4.0; 3]).unwrap(), 1.0);
        assert_eq!(r2(&[4.0; 3], &[4.0, 4.0, 5.0]).unwrap(), 0.0);
        assert!(mae(&y, &[1.0]).is_err());
        assert!(mae(&[], &[]).is_err());
    }

    #[test]
    fn per_age_groups_by_bucket() {
        let y = [1.0, 1.0, 2.0];
        let p = [1.5, 2.0, 2.0];
        let b = per_age_mae(&y, &p, AgeUnit::Grade).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!((b[0].age, b[0].n, b[0].mae), (1, 2, 0.75));
        assert_eq!((b[1].age, b[1].n, b[1].mae), (2, 1, 0.0));
    }

    #[test]
    fn model_names_parse() {
        assert_eq!("svr".parse::<EvalModel>().unwrap(), EvalModel::Svr);
        assert!(matches!("gbm".parse::<EvalModel>(), Err(Error::Config(_))));
    }
}
