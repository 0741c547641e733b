//! CART regression tree grown by weighted variance reduction.
//!
//! Rows carry a real weight and an integer count. Plain fits use count 1;
//! bootstrap and boosting resamples are expressed as counts over the original
//! rows so that one presorted index can be shared by every tree of an
//! ensemble. `min_leaf` is measured in counts.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::StreamRng;

/// Relative tolerance under which two split gains are considered tied.
pub const GAIN_TIE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    /// ⌈d/3⌉ features per node.
    Third,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        match self {
            MaxFeatures::All => d,
            MaxFeatures::Third => d.div_ceil(3).max(1),
            MaxFeatures::Count(k) => k.clamp(1, d.max(1)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or too small.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub max_features: MaxFeatures,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: Some(3),
            min_leaf: 1,
            max_features: MaxFeatures::All,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
        n_samples: usize,
        weight: f64,
        /// Weighted variance of the targets in this node.
        impurity: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        n_samples: usize,
        weight: f64,
        impurity: f64,
        /// Weighted sum-of-squares removed by this split.
        sse_decrease: f64,
    },
}

impl Node {
    pub fn weight(&self) -> f64 {
        match self {
            Node::Leaf { weight, .. } | Node::Split { weight, .. } => *weight,
        }
    }

    pub fn impurity(&self) -> f64 {
        match self {
            Node::Leaf { impurity, .. } | Node::Split { impurity, .. } => *impurity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
    pub n_features: usize,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Per-feature sum over splits of (node weight fraction × impurity
    /// decrease), i.e. SSE decrease divided by the root weight. Not normalized.
    pub fn impurity_importance(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.n_features];
        let root = self.nodes[0].weight();
        if root <= 0.0 {
            return imp;
        }
        for n in &self.nodes {
            if let Node::Split {
                feature,
                sse_decrease,
                ..
            } = n
            {
                imp[*feature] += sse_decrease / root;
            }
        }
        imp
    }
}

/// Row indices sorted by each feature (ties by row index).
#[derive(Debug, Clone)]
pub struct Presorted {
    order: Vec<Vec<u32>>,
}

impl Presorted {
    pub fn new(x: &[Vec<f64>]) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let order = (0..d)
            .map(|f| {
                let mut idx: Vec<u32> = (0..x.len() as u32).collect();
                idx.sort_by(|&a, &b| {
                    x[a as usize][f]
                        .total_cmp(&x[b as usize][f])
                        .then(a.cmp(&b))
                });
                idx
            })
            .collect();
        Self { order }
    }
}

pub fn fit_tree(
    x: &[Vec<f64>],
    y: &[f64],
    weights: &[f64],
    params: &TreeParams,
    rng: Option<&mut StreamRng>,
) -> RegressionTree {
    let counts: Vec<u32> = weights.iter().map(|&w| u32::from(w > 0.0)).collect();
    let presorted = Presorted::new(x);
    fit_tree_presorted(x, y, weights, &counts, &presorted, params, rng)
}

/// Unit weights.
pub fn fit_tree_unweighted(x: &[Vec<f64>], y: &[f64], params: &TreeParams) -> RegressionTree {
    fit_tree(x, y, &vec![1.0; y.len()], params, None)
}

pub(crate) fn fit_tree_presorted(
    x: &[Vec<f64>],
    y: &[f64],
    weights: &[f64],
    counts: &[u32],
    presorted: &Presorted,
    params: &TreeParams,
    rng: Option<&mut StreamRng>,
) -> RegressionTree {
    let d = x.first().map_or(0, Vec::len);
    let rows: Vec<Vec<(u32, f64)>> = presorted
        .order
        .iter()
        .enumerate()
        .map(|(f, o)| {
            o.iter()
                .filter(|&&r| counts[r as usize] > 0)
                .map(|&r| (r, x[r as usize][f]))
                .collect()
        })
        .collect();
    let mut b = Builder {
        y,
        weights,
        counts,
        params,
        rng,
        n_subsample: params.max_features.resolve(d),
        d,
        nodes: Vec::with_capacity(params.max_depth.map_or(64, |m| (1usize << (m + 1).min(7)) - 1)),
        goes_left: vec![false; y.len()],
        cols: rows,
        scratch: Vec::new(),
    };
    if d == 0 || b.cols[0].is_empty() {
        // Degenerate input: a single leaf over whatever rows carry weight.
        let (w, s, c) = (0..y.len())
            .filter(|&i| counts[i] > 0)
            .fold((0.0, 0.0, 0usize), |(w, s, c), i| {
                (w + weights[i], s + weights[i] * y[i], c + counts[i] as usize)
            });
        b.nodes.push(Node::Leaf {
            value: if w > 0.0 { s / w } else { 0.0 },
            n_samples: c,
            weight: w,
            impurity: 0.0,
        });
    } else {
        let end = b.cols[0].len();
        b.grow(0, end, 0);
    }
    RegressionTree {
        nodes: b.nodes,
        n_features: d,
    }
}

struct Builder<'a, 'r> {
    y: &'a [f64],
    weights: &'a [f64],
    counts: &'a [u32],
    params: &'a TreeParams,
    rng: Option<&'r mut StreamRng>,
    n_subsample: usize,
    d: usize,
    nodes: Vec<Node>,
    goes_left: Vec<bool>,
    /// Per feature, the active (row, value) pairs in ascending value order.
    /// Each node owns the same `start..end` range in every column.
    cols: Vec<Vec<(u32, f64)>>,
    scratch: Vec<(u32, f64)>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Builder<'_, '_> {
    fn candidate_features(&mut self) -> Vec<usize> {
        if self.n_subsample >= self.d {
            return (0..self.d).collect();
        }
        let rng = self
            .rng
            .as_mut()
            .expect("feature subsampling requires a random stream");
        let mut all: Vec<usize> = (0..self.d).collect();
        for i in 0..self.n_subsample {
            let j = rng.random_range(i..self.d);
            all.swap(i, j);
        }
        let mut picked = all[..self.n_subsample].to_vec();
        picked.sort_unstable();
        picked
    }

    fn grow(&mut self, start: usize, end: usize, depth: usize) -> usize {
        let members = &self.cols[0][start..end];
        let (mut w, mut s, mut count) = (0.0, 0.0, 0usize);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &(r, _) in members {
            let r = r as usize;
            w += self.weights[r];
            s += self.weights[r] * self.y[r];
            count += self.counts[r] as usize;
            lo = lo.min(self.y[r]);
            hi = hi.max(self.y[r]);
        }
        let mean = if w > 0.0 { s / w } else { 0.0 };
        let sse: f64 = members
            .iter()
            .map(|&(r, _)| {
                let r = r as usize;
                self.weights[r] * (self.y[r] - mean).powi(2)
            })
            .sum();
        let impurity = if w > 0.0 { sse / w } else { 0.0 };

        let idx = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: mean,
            n_samples: count,
            weight: w,
            impurity,
        });

        let depth_ok = self.params.max_depth.is_none_or(|m| depth < m);
        let min_leaf = self.params.min_leaf.max(1);
        if !depth_ok || count < 2 * min_leaf || hi <= lo || w <= 0.0 {
            return idx;
        }

        let features = self.candidate_features();
        let Some(best) = self.best_split(start, end, &features, w, sse) else {
            return idx;
        };

        for &(r, v) in &self.cols[best.feature][start..end] {
            self.goes_left[r as usize] = v <= best.threshold;
        }
        let mut mid = start;
        for col in &mut self.cols {
            // Stable partition of the node's range.
            self.scratch.clear();
            let mut k = start;
            for i in start..end {
                let item = col[i];
                if self.goes_left[item.0 as usize] {
                    col[k] = item;
                    k += 1;
                } else {
                    self.scratch.push(item);
                }
            }
            col[k..end].copy_from_slice(&self.scratch);
            mid = k;
        }
        let left = self.grow(start, mid, depth + 1);
        let right = self.grow(mid, end, depth + 1);
        self.nodes[idx] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
            n_samples: count,
            weight: w,
            impurity,
            sse_decrease: best.gain,
        };
        idx
    }

    fn best_split(
        &self,
        start: usize,
        end: usize,
        features: &[usize],
        w_total: f64,
        sse: f64,
    ) -> Option<BestSplit> {
        let min_leaf = self.params.min_leaf.max(1);
        let members = &self.cols[0][start..end];
        let total_count: usize = members.iter().map(|&(r, _)| self.counts[r as usize] as usize).sum();
        let s_total: f64 = members
            .iter()
            .map(|&(r, _)| self.weights[r as usize] * self.y[r as usize])
            .sum();
        let min_gain = sse * GAIN_TIE_TOLERANCE;
        let mut best: Option<BestSplit> = None;
        for &f in features {
            let list = &self.cols[f][start..end];
            let (mut wl, mut sl, mut cl) = (0.0, 0.0, 0usize);
            for k in 0..list.len() - 1 {
                let (r, xa) = list[k];
                let r = r as usize;
                wl += self.weights[r];
                sl += self.weights[r] * self.y[r];
                cl += self.counts[r] as usize;
                let xb = list[k + 1].1;
                if xa == xb {
                    continue;
                }
                let cr = total_count - cl;
                if cl < min_leaf || cr < min_leaf {
                    continue;
                }
                let wr = w_total - wl;
                if wl <= 0.0 || wr <= 0.0 {
                    continue;
                }
                let sr = s_total - sl;
                let diff = sl / wl - sr / wr;
                let gain = wl * wr / w_total * diff * diff;
                if gain <= min_gain {
                    continue;
                }
                let better = match &best {
                    None => true,
                    Some(b) => gain > b.gain * (1.0 + GAIN_TIE_TOLERANCE),
                };
                if better {
                    let mut threshold = xa + (xb - xa) / 2.0;
                    if threshold >= xb {
                        threshold = xa;
                    }
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_pair() {
        let t = fit_tree_unweighted(&[vec![0.0], vec![1.0]], &[0.0, 10.0], &TreeParams::default());
        match &t.nodes[0] {
            Node::Split { threshold, .. } => assert_eq!(*threshold, 0.5),
            other => panic!("expected split, got {other:?}"),
        }
        assert_eq!(t.predict(&[0.0]), 0.0);
        assert_eq!(t.predict(&[0.9]), 10.0);
        assert_eq!(t.predict(&[0.4]), 0.0);
    }

    #[test]
    fn constant_target_is_one_leaf() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * 7 % 3) as f64]).collect();
        let t = fit_tree_unweighted(&x, &[4.5; 10], &TreeParams::default());
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict(&[100.0, -3.0]), 4.5);
    }

    #[test]
    fn ties_prefer_lowest_feature() {
        // Two identical features: the split must use feature 0.
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, i as f64]).collect();
        let y = [0.0, 0.0, 0.0, 5.0, 5.0, 5.0];
        let t = fit_tree_unweighted(&x, &y, &TreeParams::default());
        match &t.nodes[0] {
            Node::Split {
                feature, threshold, ..
            } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 2.5);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn min_leaf_and_depth_limits() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..8).map(|i| (i * i) as f64).collect();
        let p = TreeParams {
            max_depth: None,
            min_leaf: 3,
            max_features: MaxFeatures::All,
        };
        let t = fit_tree_unweighted(&x, &y, &p);
        for n in &t.nodes {
            if let Node::Leaf { n_samples, .. } = n {
                assert!(*n_samples >= 3);
            }
        }
        let stump = fit_tree_unweighted(
            &x,
            &y,
            &TreeParams {
                max_depth: Some(1),
                ..p
            },
        );
        assert_eq!(stump.n_leaves(), 2);
    }

    #[test]
    fn zero_weight_rows_are_ignored() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        let t = fit_tree(&x, &[0.0, 10.0, 1000.0], &[1.0, 1.0, 0.0], &TreeParams::default(), None);
        assert_eq!(t.predict(&[5.0]), 10.0);
        assert_eq!(t.nodes[0].weight(), 2.0);
    }

    #[test]
    fn weights_shift_leaf_means() {
        let x = vec![vec![0.0], vec![0.0], vec![1.0]];
        let t = fit_tree(&x, &[1.0, 4.0, 9.0], &[3.0, 1.0, 1.0], &TreeParams::default(), None);
        assert!((t.predict(&[0.0]) - 7.0 / 4.0).abs() < 1e-15);
    }
}
