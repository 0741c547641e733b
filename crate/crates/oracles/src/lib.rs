//! Slow, direct reference computations for checking the optimized code.

pub mod functionals {
    /// Neumaier-compensated sum.
    pub fn sum(xs: impl IntoIterator<Item = f64>) -> f64 {
        let (mut s, mut c) = (0.0f64, 0.0f64);
        for x in xs {
            let t = s + x;
            if s.abs() >= x.abs() {
                c += (s - t) + x;
            } else {
                c += (x - t) + s;
            }
            s = t;
        }
        s + c
    }

    /// mean, variance, min, max, skewness, excess kurtosis, entropy, MAD.
    pub fn naive(xs: &[f64]) -> [f64; 8] {
        let mut v = xs.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let mean = sum(v.iter().copied()) / n;
        let central = |k: i32| sum(v.iter().map(|x| (x - mean).powi(k))) / n;
        let m2 = central(2);
        let (skew, kurt) = if m2 < 1e-12 {
            (0.0, 0.0)
        } else {
            (central(3) / (m2 * m2.sqrt()), central(4) / (m2 * m2) - 3.0)
        };
        let mad = sum(v.iter().map(|x| (x - mean).abs())) / n;

        let bins: Vec<i64> = v.iter().map(|x| (x * 100.0 + 1e-6).floor() as i64).collect();
        let mut counts = Vec::new();
        let mut i = 0;
        while i < bins.len() {
            let j = bins[i..].iter().take_while(|&&b| b == bins[i]).count();
            counts.push(j as f64);
            i += j;
        }
        let entropy = -sum(counts.iter().map(|c| (c / n) * (c / n).ln()));
        [mean, m2, v[0], v[v.len() - 1], skew, kurt, entropy.max(0.0), mad]
    }
}

pub mod svr {
    pub struct QpSolution {
        /// α − α*.
        pub theta: Vec<f64>,
        pub alpha: Vec<f64>,
        pub alpha_star: Vec<f64>,
        pub bias: f64,
        pub objective: f64,
    }

    pub fn rbf_kernel(x: &[Vec<f64>], gamma: f64) -> Vec<Vec<f64>> {
        x.iter()
            .map(|a| {
                x.iter()
                    .map(|b| {
                        let d2: f64 = a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum();
                        (-gamma * d2).exp()
                    })
                    .collect()
            })
            .collect()
    }

    fn objective(k: &[Vec<f64>], y: &[f64], eps: f64, a: &[f64], s: &[f64]) -> f64 {
        let n = y.len();
        let th: Vec<f64> = (0..n).map(|i| a[i] - s[i]).collect();
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                q += th[i] * k[i][j] * th[j];
            }
        }
        0.5 * q + (0..n).map(|i| eps * (a[i] + s[i]) - y[i] * th[i]).sum::<f64>()
    }

    /// Euclidean projection onto {0 ≤ β ≤ C, Σα − Σα* = 0} by bisection on
    /// the multiplier of the equality constraint.
    fn project(va: &[f64], vs: &[f64], c: f64, a: &mut [f64], s: &mut [f64]) {
        let at = |lam: f64, a: &mut [f64], s: &mut [f64]| {
            for i in 0..va.len() {
                a[i] = (va[i] - lam).clamp(0.0, c);
                s[i] = (vs[i] + lam).clamp(0.0, c);
            }
            a.iter().sum::<f64>() - s.iter().sum::<f64>()
        };
        let span = va.iter().chain(vs).fold(0.0f64, |m, v| m.max(v.abs())) + c + 1.0;
        let (mut lo, mut hi) = (-span, span);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if at(mid, a, s) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        at(0.5 * (lo + hi), a, s);
    }

    /// Accelerated projected gradient with restarts on the 2n-variable dual.
    pub fn dense_qp(k: &[Vec<f64>], y: &[f64], c: f64, eps: f64, iterations: usize) -> QpSolution {
        let n = y.len();
        let lip = 2.0
            * k.iter()
                .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0, f64::max);
        let step = 1.0 / lip;
        let (mut a, mut s) = (vec![0.0; n], vec![0.0; n]);
        let (mut ya, mut ys) = (a.clone(), s.clone());
        let (mut na, mut ns) = (a.clone(), s.clone());
        let mut t = 1.0f64;
        let mut f_prev = objective(k, y, eps, &a, &s);
        let (mut va, mut vs) = (vec![0.0; n], vec![0.0; n]);
        for _ in 0..iterations {
            for i in 0..n {
                let kt: f64 = (0..n).map(|j| k[i][j] * (ya[j] - ys[j])).sum();
                va[i] = ya[i] - step * (kt + eps - y[i]);
                vs[i] = ys[i] - step * (-kt + eps + y[i]);
            }
            project(&va, &vs, c, &mut na, &mut ns);
            let f = objective(k, y, eps, &na, &ns);
            if f > f_prev {
                // Restart momentum.
                t = 1.0;
                ya.copy_from_slice(&a);
                ys.copy_from_slice(&s);
                continue;
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let mom = (t - 1.0) / t_next;
            for i in 0..n {
                ya[i] = na[i] + mom * (na[i] - a[i]);
                ys[i] = ns[i] + mom * (ns[i] - s[i]);
            }
            a.copy_from_slice(&na);
            s.copy_from_slice(&ns);
            t = t_next;
            f_prev = f;
        }
        let theta: Vec<f64> = (0..n).map(|i| a[i] - s[i]).collect();
        let kt: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| k[i][j] * theta[j]).sum())
            .collect();

        // Bias from the KKT conditions.
        let slack = 1e-7 * c.max(1.0);
        let mut free = Vec::new();
        let (mut lb, mut ub) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..n {
            let r = y[i] - kt[i];
            let th = theta[i];
            if th.abs() <= slack {
                lb = lb.max(r - eps);
                ub = ub.min(r + eps);
            } else if th >= c - slack {
                ub = ub.min(r - eps);
            } else if th <= -c + slack {
                lb = lb.max(r + eps);
            } else {
                free.push(r - eps * th.signum());
            }
        }
        let bias = if free.is_empty() {
            0.5 * (lb + ub)
        } else {
            free.iter().sum::<f64>() / free.len() as f64
        };
        QpSolution {
            objective: objective(k, y, eps, &a, &s),
            theta,
            alpha: a,
            alpha_star: s,
            bias,
        }
    }
}

pub mod tree {
    #[derive(Debug, Clone, PartialEq)]
    pub enum BruteNode {
        Leaf(f64),
        Split {
            feature: usize,
            threshold: f64,
            left: Box<BruteNode>,
            right: Box<BruteNode>,
        },
    }

    impl BruteNode {
        pub fn predict(&self, x: &[f64]) -> f64 {
            match self {
                BruteNode::Leaf(v) => *v,
                BruteNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if x[*feature] <= *threshold {
                        left.predict(x)
                    } else {
                        right.predict(x)
                    }
                }
            }
        }
    }

    fn sse(y: &[f64], idx: &[usize]) -> f64 {
        let m = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
        idx.iter().map(|&i| (y[i] - m).powi(2)).sum()
    }

    /// Exhaustive CART: every feature, every midpoint between distinct
    /// values; gains computed from direct SSEs. Earlier (feature, threshold)
    /// candidates win unless beaten by more than the relative tolerance.
    pub fn brute_force(
        x: &[Vec<f64>],
        y: &[f64],
        max_depth: Option<usize>,
        min_leaf: usize,
        tol: f64,
    ) -> BruteNode {
        let idx: Vec<usize> = (0..y.len()).collect();
        grow(x, y, &idx, 0, max_depth, min_leaf.max(1), tol)
    }

    fn grow(
        x: &[Vec<f64>],
        y: &[f64],
        idx: &[usize],
        depth: usize,
        max_depth: Option<usize>,
        min_leaf: usize,
        tol: f64,
    ) -> BruteNode {
        let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
        let leaf = BruteNode::Leaf(mean);
        if max_depth.is_some_and(|m| depth >= m) || idx.len() < 2 * min_leaf {
            return leaf;
        }
        let parent = sse(y, idx);
        let mut best: Option<(f64, usize, f64)> = None;
        for f in 0..x[0].len() {
            let mut vals: Vec<f64> = idx.iter().map(|&i| x[i][f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let (a, b) = (w[0], w[1]);
                let mut thr = a + (b - a) / 2.0;
                if thr >= b {
                    thr = a;
                }
                let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][f] <= thr);
                if l.len() < min_leaf || r.len() < min_leaf {
                    continue;
                }
                let gain = parent - sse(y, &l) - sse(y, &r);
                if gain <= parent * tol {
                    continue;
                }
                if best.is_none_or(|(g, _, _)| gain > g * (1.0 + tol)) {
                    best = Some((gain, f, thr));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return leaf;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][feature] <= threshold);
        BruteNode::Split {
            feature,
            threshold,
            left: Box::new(grow(x, y, &l, depth + 1, max_depth, min_leaf, tol)),
            right: Box::new(grow(x, y, &r, depth + 1, max_depth, min_leaf, tol)),
        }
    }
}

pub mod ols {
    use nalgebra::{DMatrix, DVector};

    /// Leave-one-out MAE of ordinary least squares with an intercept.
    pub fn loo_mae(x: &[Vec<f64>], y: &[f64]) -> f64 {
        let n = y.len();
        let d = x[0].len() + 1;
        let design = DMatrix::from_fn(n, d, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] });
        let mut total = 0.0;
        for h in 0..n {
            let keep: Vec<usize> = (0..n).filter(|&i| i != h).collect();
            let a = DMatrix::from_fn(keep.len(), d, |r, c| design[(keep[r], c)]);
            let b = DVector::from_iterator(keep.len(), keep.iter().map(|&i| y[i]));
            let w = (a.transpose() * &a)
                .lu()
                .solve(&(a.transpose() * b))
                .expect("singular design");
            let pred: f64 = (0..d).map(|j| design[(h, j)] * w[j]).sum();
            total += (pred - y[h]).abs();
        }
        total / n as f64
    }
}
