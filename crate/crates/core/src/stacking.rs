//! Two-layer stacked regressor.
//!
//! One base estimator per phone category maps that category's eight
//! descriptors to age. A meta estimator of the same class is trained on the
//! base estimators' out-of-fold predictions, so it sees one input column per
//! category. Categories a speaker never produced are filled with the mean
//! training age.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::FeatureMatrix;
use crate::learners::{
    fingerprint, fit_adaboost_r2, fit_svr, AdaBoostParams, BaseLearner, ForestParams, MaxFeatures,
    ModelDocument, Regressor, Sampling, Standardizer, SvrParams, TreeParams,
};
use crate::phone::{CategoryKey, PhoneInventory};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelClass {
    Svr,
    Adaboost,
}

impl std::fmt::Display for ModelClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelClass::Svr => "svr",
            ModelClass::Adaboost => "adaboost",
        })
    }
}

/// Hyperparameters of one estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum LearnerSpec {
    Svr(SvrParams),
    Adaboost(AdaBoostParams),
}

impl LearnerSpec {
    pub fn class(&self) -> ModelClass {
        match self {
            LearnerSpec::Svr(_) => ModelClass::Svr,
            LearnerSpec::Adaboost(_) => ModelClass::Adaboost,
        }
    }

    pub fn fit(&self, x: &[Vec<f64>], y: &[f64], seed: u64) -> Result<Regressor> {
        match self {
            LearnerSpec::Svr(p) => fit_svr(x, y, p).map(Regressor::Svr),
            LearnerSpec::Adaboost(p) => fit_adaboost_r2(x, y, p, seed).map(Regressor::AdaboostR2),
        }
    }

    pub fn default_base(class: ModelClass) -> Self {
        match class {
            ModelClass::Svr => LearnerSpec::Svr(SvrParams::default()),
            ModelClass::Adaboost => LearnerSpec::Adaboost(AdaBoostParams {
                n_rounds: 10,
                base: BaseLearner::Forest(ForestParams::default()),
                sampling: Sampling::Resample,
            }),
        }
    }

    pub fn default_meta(class: ModelClass) -> Self {
        match class {
            ModelClass::Svr => LearnerSpec::Svr(SvrParams::default()),
            ModelClass::Adaboost => LearnerSpec::Adaboost(AdaBoostParams {
                n_rounds: 25,
                base: BaseLearner::Forest(ForestParams::default()),
                sampling: Sampling::Resample,
            }),
        }
    }
}

/// Hyperparameter grid for the meta estimator.
pub fn meta_grid(class: ModelClass, small: bool) -> Vec<LearnerSpec> {
    match (class, small) {
        (ModelClass::Svr, false) => {
            let mut g = Vec::new();
            for c in [0.1, 1.0, 10.0, 100.0] {
                for epsilon in [0.1, 0.5, 1.0] {
                    for gamma in [1.0, 0.1, 10.0] {
                        g.push(LearnerSpec::Svr(SvrParams {
                            c,
                            epsilon,
                            gamma: crate::learners::Gamma::PerFeature(gamma),
                            ..SvrParams::default()
                        }));
                    }
                }
            }
            g
        }
        (ModelClass::Svr, true) => {
            let mut g = Vec::new();
            for c in [1.0, 10.0] {
                for epsilon in [0.1, 0.5] {
                    g.push(LearnerSpec::Svr(SvrParams {
                        c,
                        epsilon,
                        ..SvrParams::default()
                    }));
                }
            }
            g
        }
        (ModelClass::Adaboost, small) => {
            let rounds: &[usize] = if small { &[25] } else { &[25, 50] };
            let depths: &[usize] = if small { &[2, 3] } else { &[2, 3, 5] };
            let mut g = Vec::new();
            for &n_rounds in rounds {
                for &depth in depths {
                    g.push(LearnerSpec::Adaboost(AdaBoostParams {
                        n_rounds,
                        base: BaseLearner::Forest(ForestParams {
                            tree: TreeParams {
                                max_depth: Some(depth),
                                min_leaf: 1,
                                max_features: MaxFeatures::Third,
                            },
                            ..ForestParams::default()
                        }),
                        sampling: Sampling::Resample,
                    }));
                }
            }
            g
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackingConfig {
    pub model_class: ModelClass,
    pub base: LearnerSpec,
    pub meta: LearnerSpec,
    pub meta_folds: usize,
    pub seed: u64,
}

impl StackingConfig {
    pub fn new(model_class: ModelClass, seed: u64) -> Self {
        Self {
            model_class,
            base: LearnerSpec::default_base(model_class),
            meta: LearnerSpec::default_meta(model_class),
            meta_folds: 5,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.base.class() != self.model_class || self.meta.class() != self.model_class {
            return Err(Error::Config(
                "base and meta estimators must both be of the configured model class".into(),
            ));
        }
        if self.meta_folds < 2 {
            return Err(Error::Config("meta_folds must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseEstimator {
    pub category: CategoryKey,
    /// `None` when fewer than two training speakers had the category; the
    /// imputation constant is then always used.
    pub fitted: Option<FittedBase>,
    pub imputation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedBase {
    pub standardizer: Standardizer,
    pub model: Regressor,
}

impl FittedBase {
    fn predict(&self, block: &[f64]) -> f64 {
        self.model
            .predict_unchecked(&self.standardizer.transform_row(block))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedModel {
    pub inventory: PhoneInventory,
    pub bases: Vec<BaseEstimator>,
    pub meta_standardizer: Standardizer,
    pub meta: Regressor,
    pub config: StackingConfig,
}

/// Out-of-fold base predictions: one row per training speaker (ordered by
/// speaker id), one column per category.
#[derive(Debug, Clone, PartialEq)]
pub struct OofMatrix {
    pub speaker_ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub ages: Vec<f64>,
    pub folds: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct StackedFit {
    pub model: StackedModel,
    pub oof: OofMatrix,
    /// Index into the tuning grid of the chosen meta hyperparameters.
    pub chosen_meta: Option<usize>,
    pub nonconverged: usize,
    pub warnings: Vec<String>,
}

const META_FOLD_KEY: u64 = 0x6d65_7461;
const TUNE_FOLD_KEY: u64 = 0x7475_6e65;
const META_MODEL_KEY: u64 = u64::MAX;

fn category_rows(features: &FeatureMatrix, rows: &[usize], c: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    rows.iter()
        .filter(|&&r| features.present[r][c])
        .map(|&r| (features.block(r, c).to_vec(), features.ages[r]))
        .unzip()
}

fn fit_base(
    features: &FeatureMatrix,
    rows: &[usize],
    c: usize,
    spec: &LearnerSpec,
    seed: u64,
) -> Result<Option<FittedBase>> {
    let (x, y) = category_rows(features, rows, c);
    if y.len() < 2 {
        return Ok(None);
    }
    let standardizer = Standardizer::fit(&x)?;
    let xs = standardizer.transform(&x);
    let model = spec.fit(&xs, &y, seed)?;
    Ok(Some(FittedBase {
        standardizer,
        model,
    }))
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Build the out-of-fold meta matrix on all rows of `features`.
pub fn out_of_fold(features: &FeatureMatrix, config: &StackingConfig) -> Result<(OofMatrix, usize)> {
    config.validate()?;
    let n = features.n_speakers();
    if n < config.meta_folds + 1 {
        return Err(Error::TooFewSpeakers {
            needed: config.meta_folds + 1,
            have: n,
        });
    }
    let k = features.n_categories();
    if k == 0 {
        return Err(Error::EmptyInventory);
    }
    let order = features.rows_by_speaker_id();
    let ids: Vec<&str> = order.iter().map(|&r| features.speaker_ids[r].as_str()).collect();
    let folds = rng::hashed_folds(rng::derive_seed(config.seed, &[META_FOLD_KEY]), &ids, config.meta_folds);

    let train_rows: Vec<Vec<usize>> = (0..config.meta_folds)
        .map(|f| {
            order
                .iter()
                .zip(&folds)
                .filter(|(_, &g)| g != f)
                .map(|(&r, _)| r)
                .collect()
        })
        .collect();
    let train_mean: Vec<f64> = train_rows
        .iter()
        .map(|rows| mean(rows.iter().map(|&r| features.ages[r])))
        .collect();

    let jobs: Vec<(usize, usize)> = (0..config.meta_folds)
        .flat_map(|f| (0..k).map(move |c| (f, c)))
        .collect();
    let fitted: Vec<Option<FittedBase>> = jobs
        .par_iter()
        .map(|&(f, c)| {
            let seed = rng::derive_seed(config.seed, &[c as u64, f as u64]);
            fit_base(features, &train_rows[f], c, &config.base, seed)
        })
        .collect::<Result<_>>()?;

    let nonconverged = fitted
        .iter()
        .flatten()
        .filter(|b| !b.model.converged())
        .count();
    let mut rows = vec![vec![0.0; k]; n];
    for (pos, (&r, &f)) in order.iter().zip(&folds).enumerate() {
        for c in 0..k {
            let base = &fitted[f * k + c];
            rows[pos][c] = match base {
                Some(b) if features.present[r][c] => b.predict(features.block(r, c)),
                _ => train_mean[f],
            };
        }
    }
    Ok((
        OofMatrix {
            speaker_ids: ids.iter().map(|s| s.to_string()).collect(),
            rows,
            ages: order.iter().map(|&r| features.ages[r]).collect(),
            folds,
        },
        nonconverged,
    ))
}

/// Refit every base estimator on all rows.
pub fn fit_bases(features: &FeatureMatrix, config: &StackingConfig) -> Result<Vec<BaseEstimator>> {
    let order = features.rows_by_speaker_id();
    let imputation = mean(order.iter().map(|&r| features.ages[r]));
    let k = features.n_categories();
    let deploy_fold = config.meta_folds as u64;
    (0..k)
        .into_par_iter()
        .map(|c| {
            let seed = rng::derive_seed(config.seed, &[c as u64, deploy_fold]);
            Ok(BaseEstimator {
                category: features.inventory.keys[c].clone(),
                fitted: fit_base(features, &order, c, &config.base, seed)?,
                imputation,
            })
        })
        .collect()
}

fn fit_meta(oof: &OofMatrix, spec: &LearnerSpec, seed: u64) -> Result<(Standardizer, Regressor)> {
    let standardizer = Standardizer::fit(&oof.rows)?;
    let xs = standardizer.transform(&oof.rows);
    let model = spec.fit(&xs, &oof.ages, rng::derive_seed(seed, &[META_MODEL_KEY]))?;
    Ok((standardizer, model))
}

/// Inner cross-validated MAE of each meta grid point on the OOF matrix.
pub fn tune_meta(
    oof: &OofMatrix,
    grid: &[LearnerSpec],
    inner_folds: usize,
    seed: u64,
) -> Result<(usize, Vec<f64>)> {
    if grid.is_empty() {
        return Err(Error::Config("tuning grid is empty".into()));
    }
    let n = oof.rows.len();
    if inner_folds < 2 || n < inner_folds + 1 {
        return Err(Error::TooFewSpeakers {
            needed: inner_folds.max(2) + 1,
            have: n,
        });
    }
    let folds = rng::hashed_folds(rng::derive_seed(seed, &[TUNE_FOLD_KEY]), &oof.speaker_ids, inner_folds);
    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| (0..inner_folds).map(move |f| (g, f)))
        .collect();
    let errors: Vec<f64> = jobs
        .par_iter()
        .map(|&(g, f)| {
            let (train, test): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| folds[i] != f);
            let sub = OofMatrix {
                speaker_ids: train.iter().map(|&i| oof.speaker_ids[i].clone()).collect(),
                rows: train.iter().map(|&i| oof.rows[i].clone()).collect(),
                ages: train.iter().map(|&i| oof.ages[i]).collect(),
                folds: Vec::new(),
            };
            let (st, model) = fit_meta(&sub, &grid[g], seed)?;
            Ok(test
                .iter()
                .map(|&i| (model.predict_unchecked(&st.transform_row(&oof.rows[i])) - oof.ages[i]).abs())
                .sum::<f64>())
        })
        .collect::<Result<_>>()?;
    let scores: Vec<f64> = (0..grid.len())
        .map(|g| errors[g * inner_folds..(g + 1) * inner_folds].iter().sum::<f64>() / n as f64)
        .collect();
    let mut best = 0;
    for (g, &s) in scores.iter().enumerate() {
        if s < scores[best] {
            best = g;
        }
    }
    Ok((best, scores))
}

/// Fit with the meta hyperparameters in `config.meta`.
pub fn fit_stacked(features: &FeatureMatrix, config: &StackingConfig) -> Result<StackedFit> {
    fit_stacked_tuned(features, config, &[], 0)
}

/// Fit, choosing meta hyperparameters from `grid` by inner k-fold CV on the
/// out-of-fold matrix. A grid of fewer than two points skips tuning.
pub fn fit_stacked_tuned(
    features: &FeatureMatrix,
    config: &StackingConfig,
    grid: &[LearnerSpec],
    inner_folds: usize,
) -> Result<StackedFit> {
    let (oof, mut nonconverged) = out_of_fold(features, config)?;
    let mut warnings = Vec::new();
    for (c, key) in features.inventory.keys.iter().enumerate() {
        if !(0..features.n_speakers()).any(|r| features.present[r][c]) {
            warnings.push(format!("category {key} is absent for every speaker; imputed"));
        }
    }

    let mut config = config.clone();
    let mut chosen_meta = None;
    if grid.len() > 1 {
        if grid.iter().any(|g| g.class() != config.model_class) {
            return Err(Error::Config("tuning grid mixes model classes".into()));
        }
        let (best, _) = tune_meta(&oof, grid, inner_folds, config.seed)?;
        config.meta = grid[best];
        chosen_meta = Some(best);
    } else if let Some(only) = grid.first() {
        config.meta = *only;
        chosen_meta = Some(0);
    }
    config.validate()?;

    let (meta_standardizer, meta) = fit_meta(&oof, &config.meta, config.seed)?;
    if !meta.converged() {
        nonconverged += 1;
    }
    let bases = fit_bases(features, &config)?;
    nonconverged += bases
        .iter()
        .filter_map(|b| b.fitted.as_ref())
        .filter(|b| !b.model.converged())
        .count();
    if nonconverged > 0 {
        warnings.push(format!("{nonconverged} estimators did not converge"));
    }
    Ok(StackedFit {
        model: StackedModel {
            inventory: features.inventory.clone(),
            bases,
            meta_standardizer,
            meta,
            config,
        },
        oof,
        chosen_meta,
        nonconverged,
        warnings,
    })
}

impl StackedModel {
    /// Meta-layer input for one speaker: base predictions, imputed where masked.
    pub fn meta_features(&self, values: &[f64], present: &[bool]) -> Result<Vec<f64>> {
        let k = self.bases.len();
        if present.len() != k || values.len() != k * crate::functionals::N_FUNCTIONALS {
            return Err(Error::LayoutMismatch(format!(
                "model expects {k} categories, input has {}",
                present.len()
            )));
        }
        Ok(self
            .bases
            .iter()
            .enumerate()
            .map(|(c, b)| match &b.fitted {
                Some(f) if present[c] => f.predict(&values[c * 8..(c + 1) * 8]),
                _ => b.imputation,
            })
            .collect())
    }

    pub fn predict_one(&self, values: &[f64], present: &[bool]) -> Result<f64> {
        let m = self.meta_features(values, present)?;
        Ok(self
            .meta
            .predict_unchecked(&self.meta_standardizer.transform_row(&m)))
    }

    /// Predict every speaker; the feature inventory must match the model's.
    pub fn predict(&self, features: &FeatureMatrix) -> Result<Vec<f64>> {
        if !self.inventory.same_layout(&features.inventory) {
            let missing = self
                .inventory
                .keys
                .iter()
                .filter(|k| features.inventory.index_of(k).is_none())
                .count();
            let extra = features
                .inventory
                .keys
                .iter()
                .filter(|k| self.inventory.index_of(k).is_none())
                .count();
            return Err(Error::LayoutMismatch(format!(
                "inventory differs from the model's ({missing} categories missing, {extra} unexpected)"
            )));
        }
        (0..features.n_speakers())
            .map(|s| self.predict_one(&features.values[s], &features.present[s]))
            .collect()
    }

    pub fn to_document(&self) -> ModelDocument<StackedModel> {
        ModelDocument::new(self.clone(), fingerprint(&self.config))
    }
}
