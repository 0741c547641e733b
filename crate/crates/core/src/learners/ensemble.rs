//! Random forest and AdaBoost.R2.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree_presorted, MaxFeatures, Presorted, RegressionTree, TreeParams};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub tree: TreeParams,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 10,
            tree: TreeParams {
                max_depth: Some(3),
                min_leaf: 1,
                max_features: MaxFeatures::Third,
            },
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<RegressionTree>,
}

impl RandomForest {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// Mean of the member trees' raw importances.
    pub fn impurity_importance(&self) -> Vec<f64> {
        let mut acc: Vec<f64> = Vec::new();
        for t in &self.trees {
            let imp = t.impurity_importance();
            if acc.is_empty() {
                acc = vec![0.0; imp.len()];
            }
            for (a, v) in acc.iter_mut().zip(imp) {
                *a += v;
            }
        }
        let n = self.trees.len().max(1) as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }
}

pub fn fit_forest(x: &[Vec<f64>], y: &[f64], params: &ForestParams, seed: u64) -> RandomForest {
    let presorted = Presorted::new(x);
    fit_forest_on(x, y, &vec![1; y.len()], None, &presorted, params, seed)
}

/// Fit on the multiset of rows described by `counts`, optionally scaling
/// each row by a sample weight.
pub(crate) fn fit_forest_on(
    x: &[Vec<f64>],
    y: &[f64],
    counts: &[u32],
    row_weights: Option<&[f64]>,
    presorted: &Presorted,
    params: &ForestParams,
    seed: u64,
) -> RandomForest {
    let pool: Vec<u32> = counts
        .iter()
        .enumerate()
        .flat_map(|(i, &c)| std::iter::repeat_n(i as u32, c as usize))
        .collect();
    let trees = (0..params.n_trees.max(1))
        .map(|t| {
            let mut rng = rng::stream(seed, &[t as u64]);
            let tree_counts = if params.bootstrap && !pool.is_empty() {
                let mut c = vec![0u32; y.len()];
                for _ in 0..pool.len() {
                    c[pool[rng.random_range(0..pool.len())] as usize] += 1;
                }
                c
            } else {
                counts.to_vec()
            };
            let w: Vec<f64> = match row_weights {
                Some(rw) => tree_counts.iter().zip(rw).map(|(&c, &r)| c as f64 * r).collect(),
                None => tree_counts.iter().map(|&c| c as f64).collect(),
            };
            fit_tree_presorted(x, y, &w, &tree_counts, presorted, &params.tree, Some(&mut rng))
        })
        .collect();
    RandomForest { trees }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseLearner {
    Tree(TreeParams),
    Forest(ForestParams),
}

/// How each boosting round presents the sample distribution to its learner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Draw n rows with replacement in proportion to the boosting weights.
    Resample,
    /// Fit directly on the weighted rows (deterministic; used for tracing).
    Reweight,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostParams {
    pub n_rounds: usize,
    pub base: BaseLearner,
    pub sampling: Sampling,
}

impl Default for AdaBoostParams {
    fn default() -> Self {
        Self {
            n_rounds: 50,
            base: BaseLearner::Forest(ForestParams::default()),
            sampling: Sampling::Resample,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoostMember {
    Tree(RegressionTree),
    Forest(RandomForest),
}

impl BoostMember {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            BoostMember::Tree(t) => t.predict(x),
            BoostMember::Forest(f) => f.predict(x),
        }
    }

    pub fn impurity_importance(&self) -> Vec<f64> {
        match self {
            BoostMember::Tree(t) => t.impurity_importance(),
            BoostMember::Forest(f) => f.impurity_importance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostR2 {
    pub members: Vec<BoostMember>,
    /// ln(1/β) per member.
    pub member_weights: Vec<f64>,
}

/// One boosting round, recorded for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrace {
    /// Sample distribution the round was fitted on.
    pub weights: Vec<f64>,
    pub predictions: Vec<f64>,
    pub average_loss: f64,
    /// `None` when the round stopped boosting (perfect fit or L̄ ≥ 0.5).
    pub beta: Option<f64>,
    pub kept: bool,
}

/// Weighted median: the first prediction in ascending order whose cumulative
/// weight reaches half the total.
pub fn weighted_median(values: &[f64], weights: &[f64]) -> f64 {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let half = 0.5 * weights.iter().sum::<f64>();
    let mut cum = 0.0;
    for &i in &idx {
        cum += weights[i];
        if cum >= half {
            return values[i];
        }
    }
    values[*idx.last().expect("weighted median of empty set")]
}

impl AdaBoostR2 {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let preds: Vec<f64> = self.members.iter().map(|m| m.predict(x)).collect();
        weighted_median(&preds, &self.member_weights)
    }
}

pub fn fit_adaboost_r2(
    x: &[Vec<f64>],
    y: &[f64],
    params: &AdaBoostParams,
    seed: u64,
) -> Result<AdaBoostR2> {
    fit_adaboost_r2_traced(x, y, params, seed).map(|(m, _)| m)
}

/// Drucker's AdaBoost.R2 with linear loss.
pub fn fit_adaboost_r2_traced(
    x: &[Vec<f64>],
    y: &[f64],
    params: &AdaBoostParams,
    seed: u64,
) -> Result<(AdaBoostR2, Vec<RoundTrace>)> {
    let n = y.len();
    if n < 2 {
        return Err(Error::TooFewSpeakers { needed: 2, have: n });
    }
    if x.len() != n {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: n,
        });
    }
    let presorted = Presorted::new(x);
    let mut w = vec![1.0 / n as f64; n];
    let mut model = AdaBoostR2 {
        members: Vec::new(),
        member_weights: Vec::new(),
    };
    let mut trace = Vec::new();

    for round in 0..params.n_rounds.max(1) {
        let mut rng = rng::stream(seed, &[round as u64]);
        let (fit_w, counts) = match params.sampling {
            Sampling::Resample => {
                let counts = draw_counts(&w, &mut rng);
                (counts.iter().map(|&c| c as f64).collect(), counts)
            }
            Sampling::Reweight => (w.clone(), vec![1u32; n]),
        };
        let member_seed = rng::derive_seed(seed, &[round as u64, 1]);
        let member = match &params.base {
            BaseLearner::Tree(tp) => {
                let mut tree_rng = rng::stream(member_seed, &[]);
                BoostMember::Tree(fit_tree_presorted(
                    x,
                    y,
                    &fit_w,
                    &counts,
                    &presorted,
                    tp,
                    Some(&mut tree_rng),
                ))
            }
            BaseLearner::Forest(fp) => {
                let row_weights = match params.sampling {
                    Sampling::Resample => None,
                    Sampling::Reweight => Some(fit_w.as_slice()),
                };
                BoostMember::Forest(fit_forest_on(
                    x,
                    y,
                    &counts,
                    row_weights,
                    &presorted,
                    fp,
                    member_seed,
                ))
            }
        };

        let predictions: Vec<f64> = x.iter().map(|r| member.predict(r)).collect();
        let errors: Vec<f64> = predictions
            .iter()
            .zip(y)
            .map(|(p, t)| (p - t).abs())
            .collect();
        let max_err = errors.iter().copied().fold(0.0, f64::max);
        let mut rec = RoundTrace {
            weights: w.clone(),
            predictions,
            average_loss: 0.0,
            beta: None,
            kept: false,
        };

        if max_err <= 0.0 {
            model.members.push(member);
            model.member_weights.push(1.0);
            rec.kept = true;
            trace.push(rec);
            break;
        }
        let losses: Vec<f64> = errors.iter().map(|e| e / max_err).collect();
        let avg: f64 = losses.iter().zip(&w).map(|(l, wi)| l * wi).sum();
        rec.average_loss = avg;
        if avg >= 0.5 {
            if model.members.is_empty() {
                model.members.push(member);
                model.member_weights.push(1.0);
                rec.kept = true;
            }
            trace.push(rec);
            break;
        }
        let beta = avg / (1.0 - avg);
        for (wi, l) in w.iter_mut().zip(&losses) {
            *wi *= beta.powf(1.0 - l);
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|wi| *wi /= total);

        model.members.push(member);
        model.member_weights.push((1.0 / beta).ln());
        rec.beta = Some(beta);
        rec.kept = true;
        trace.push(rec);
    }
    Ok((model, trace))
}

/// Multinomial draw of n rows under `weights` (which sum to 1).
fn draw_counts(weights: &[f64], rng: &mut rng::StreamRng) -> Vec<u32> {
    let mut cdf = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for &w in weights {
        acc += w;
        cdf.push(acc);
    }
    let total = acc;
    let mut counts = vec![0u32; weights.len()];
    for _ in 0..weights.len() {
        let u = rng.random::<f64>() * total;
        let i = cdf.partition_point(|&c| c <= u).min(weights.len() - 1);
        counts[i] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::tree::fit_tree_unweighted;

    #[test]
    fn weighted_median_definition() {
        assert_eq!(weighted_median(&[1.0, 2.0, 3.0], &[0.2, 0.2, 0.6]), 3.0);
        assert_eq!(weighted_median(&[3.0, 1.0, 2.0], &[0.6, 0.2, 0.2]), 3.0);
        assert_eq!(weighted_median(&[1.0, 2.0], &[0.5, 0.5]), 1.0);
        assert_eq!(weighted_median(&[5.0], &[0.1]), 5.0);
    }

    #[test]
    fn single_unbootstrapped_tree_forest_equals_tree() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![(i * 7 % 11) as f64, (i % 4) as f64]).collect();
        let y: Vec<f64> = (0..20).map(|i| (i as f64).sin() * 3.0).collect();
        let tp = TreeParams {
            max_depth: Some(4),
            min_leaf: 1,
            max_features: MaxFeatures::All,
        };
        let f = fit_forest(
            &x,
            &y,
            &ForestParams {
                n_trees: 1,
                tree: tp,
                bootstrap: false,
            },
            9,
        );
        assert_eq!(f.trees[0], fit_tree_unweighted(&x, &y, &tp));
    }

    #[test]
    fn forest_on_constant_target() {
        let x: Vec<Vec<f64>> = (0..15).map(|i| vec![i as f64, (i * i) as f64, 1.0]).collect();
        let f = fit_forest(&x, &[2.5; 15], &ForestParams::default(), 1);
        assert!(x.iter().all(|r| f.predict(r) == 2.5));
    }

    #[test]
    fn forest_is_seed_deterministic() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![(i * 13 % 7) as f64, (i % 5) as f64, i as f64]).collect();
        let y: Vec<f64> = (0..30).map(|i| (i % 9) as f64).collect();
        let a = fit_forest(&x, &y, &ForestParams::default(), 77);
        let b = fit_forest(&x, &y, &ForestParams::default(), 77);
        let c = fit_forest(&x, &y, &ForestParams::default(), 78);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn perfect_first_round_keeps_single_member() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let y = [1.0, 1.0, 4.0, 4.0];
        let p = AdaBoostParams {
            n_rounds: 10,
            base: BaseLearner::Tree(TreeParams::default()),
            sampling: Sampling::Reweight,
        };
        let (m, trace) = fit_adaboost_r2_traced(&x, &y, &p, 0).unwrap();
        assert_eq!(m.members.len(), 1);
        assert_eq!(trace.len(), 1);
        assert_eq!(m.predict(&[2.5]), 4.0);
        assert!(m.member_weights.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn boosting_weights_stay_normalized() {
        let x: Vec<Vec<f64>> = (0..25).map(|i| vec![i as f64, ((i * 7) % 5) as f64]).collect();
        let y: Vec<f64> = (0..25).map(|i| ((i * 37) % 11) as f64).collect();
        for sampling in [Sampling::Resample, Sampling::Reweight] {
            let p = AdaBoostParams {
                n_rounds: 8,
                base: BaseLearner::Tree(TreeParams {
                    max_depth: Some(2),
                    ..Default::default()
                }),
                sampling,
            };
            let (m, trace) = fit_adaboost_r2_traced(&x, &y, &p, 4).unwrap();
            for r in &trace {
                assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            assert!(m.member_weights.iter().all(|&w| w > 0.0));
        }
    }
}
