use ndarray::ArrayView2;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::logreg::{check_training_data, sigmoid, softplus};
use crate::error::{Error, Result};
use crate::rng::{child_rng, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    Log2,
    All,
}

impl MaxFeatures {
    pub fn count(self, p: usize) -> usize {
        let k = match self {
            MaxFeatures::Sqrt => (p as f64).sqrt() as usize,
            MaxFeatures::Log2 => (p as f64).log2() as usize,
            MaxFeatures::All => p,
        };
        k.clamp(1, p.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SplitCriterion {
    #[default]
    FriedmanMse,
    Mse,
    Mae,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbParams {
    pub learning_rate: f64,
    pub n_estimators: usize,
    pub subsample: f64,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_depth: usize,
    pub max_features: MaxFeatures,
    #[serde(default)]
    pub criterion: SplitCriterion,
}

impl GbParams {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.n_estimators == 0 {
            return bad("n_estimators must be >= 1".into());
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad(format!("subsample must be in (0,1], got {}", self.subsample));
        }
        if self.min_samples_split < 2 || self.min_samples_leaf < 1 || self.max_depth < 1 {
            return bad("min_samples_split >= 2, min_samples_leaf >= 1, max_depth >= 1 required".into());
        }
        if self.criterion == SplitCriterion::Mae {
            return Err(Error::Capability("the 'mae' split criterion is not implemented".into()));
        }
        Ok(())
    }
}

/// Regression tree stored as parallel node arrays. `feature[i] < 0` marks a
/// leaf; internal nodes send `x[feature] <= cut` to `left`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Tree {
    pub feature: Vec<i64>,
    pub cut: Vec<f64>,
    pub left: Vec<i64>,
    pub right: Vec<i64>,
    pub value: Vec<f64>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0usize;
        while self.feature[i] >= 0 {
            i = if row[self.feature[i] as usize] <= self.cut[i] {
                self.left[i] as usize
            } else {
                self.right[i] as usize
            };
        }
        self.value[i]
    }

    pub fn n_nodes(&self) -> usize {
        self.feature.len()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            if t.feature[i] < 0 {
                0
            } else {
                1 + go(t, t.left[i] as usize).max(go(t, t.right[i] as usize))
            }
        }
        go(self, 0)
    }

    fn push(&mut self) -> usize {
        self.feature.push(-1);
        self.cut.push(0.0);
        self.left.push(-1);
        self.right.push(-1);
        self.value.push(0.0);
        self.feature.len() - 1
    }
}

/// Gradient-boosted trees for binary deviance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbModel {
    pub init: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

impl GbModel {
    pub fn raw_score(&self, row: &[f64]) -> f64 {
        self.init + self.learning_rate * self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        sigmoid(self.raw_score(row))
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|r| self.predict_row(r.as_slice().expect("standard layout")))
            .collect()
    }

    /// Mean log-loss after each stage (index 0 is the constant model).
    pub fn staged_log_loss(&self, x: ArrayView2<f64>, y: &[u8]) -> Vec<f64> {
        let mut f = vec![self.init; y.len()];
        let loss = |f: &[f64]| {
            f.iter()
                .zip(y)
                .map(|(&z, &t)| if t == 1 { softplus(-z) } else { softplus(z) })
                .sum::<f64>()
                / y.len() as f64
        };
        let mut out = vec![loss(&f)];
        for t in &self.trees {
            for (i, r) in x.rows().into_iter().enumerate() {
                f[i] += self.learning_rate * t.predict(r.as_slice().expect("standard layout"));
            }
            out.push(loss(&f));
        }
        out
    }
}

struct Builder<'a> {
    x: ArrayView2<'a, f64>,
    resid: &'a [f64],
    hess: &'a [f64],
    params: &'a GbParams,
    n_features: usize,
}

struct Split {
    feature: usize,
    cut: f64,
    gain: f64,
}

impl Builder<'_> {
    fn best_split(&self, rows: &[usize], rng: &mut Rng) -> Option<Split> {
        let p = self.x.ncols();
        let mut feats: Vec<usize> = sample(rng, p, self.n_features).into_vec();
        feats.sort_unstable();
        let n = rows.len();
        let total: f64 = rows.iter().map(|&i| self.resid[i]).sum();
        let min_leaf = self.params.min_samples_leaf;
        let mut best: Option<Split> = None;
        let mut order = rows.to_vec();
        for &j in &feats {
            order.sort_by(|&a, &b| self.x[[a, j]].total_cmp(&self.x[[b, j]]));
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += self.resid[order[k]];
                let (xa, xb) = (self.x[[order[k], j]], self.x[[order[k + 1], j]]);
                let nl = k + 1;
                let nr = n - nl;
                if xa == xb || nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let ml = left_sum / nl as f64;
                let mr = (total - left_sum) / nr as f64;
                let gain = match self.params.criterion {
                    SplitCriterion::FriedmanMse => {
                        (nl * nr) as f64 / n as f64 * (ml - mr) * (ml - mr)
                    }
                    _ => {
                        left_sum * ml + (total - left_sum) * mr - total * total / n as f64
                    }
                };
                if gain > 1e-12 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mut cut = xa + (xb - xa) / 2.0;
                    if cut >= xb {
                        cut = xa;
                    }
                    best = Some(Split { feature: j, cut, gain });
                }
            }
        }
        best
    }

    fn grow(&self, tree: &mut Tree, node: usize, rows: Vec<usize>, depth: usize, rng: &mut Rng) {
        let splittable = depth < self.params.max_depth
            && rows.len() >= self.params.min_samples_split
            && rows.len() >= 2 * self.params.min_samples_leaf;
        if splittable {
            if let Some(s) = self.best_split(&rows, rng) {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    rows.into_iter().partition(|&i| self.x[[i, s.feature]] <= s.cut);
                let li = tree.push();
                let ri = tree.push();
                tree.feature[node] = s.feature as i64;
                tree.cut[node] = s.cut;
                tree.left[node] = li as i64;
                tree.right[node] = ri as i64;
                self.grow(tree, li, l, depth + 1, rng);
                self.grow(tree, ri, r, depth + 1, rng);
                return;
            }
        }
        // Newton step for the deviance in this leaf.
        let num: f64 = rows.iter().map(|&i| self.resid[i]).sum();
        let den: f64 = rows.iter().map(|&i| self.hess[i]).sum();
        tree.value[node] = if den.abs() < 1e-150 { 0.0 } else { num / den };
    }
}

/// Stagewise boosting on the binary deviance. Each stage fits a regression
/// tree to the residuals `y - p` on a row subsample drawn without replacement
/// and sets leaf values by one Newton step.
pub fn fit_gbtrees(x: ArrayView2<f64>, y: &[u8], params: &GbParams, seed: u64) -> Result<GbModel> {
    params.validate()?;
    check_training_data(x, y)?;
    let x = x.as_standard_layout();
    let x = x.view();
    let n = y.len();
    let prior = y.iter().filter(|&&v| v == 1).count() as f64 / n as f64;
    let init = (prior / (1.0 - prior)).ln();
    let n_features = params.max_features.count(x.ncols());
    let n_inbag = ((params.subsample * n as f64) as usize).max(1);
    let mut f = vec![init; n];
    let mut resid = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(params.n_estimators);
    for stage in 0..params.n_estimators {
        for i in 0..n {
            let p = sigmoid(f[i]);
            resid[i] = f64::from(y[i]) - p;
            hess[i] = p * (1.0 - p);
        }
        let mut rng = child_rng(seed, &[stage as u64]);
        let mut rows: Vec<usize> = if n_inbag < n {
            sample(&mut rng, n, n_inbag).into_vec()
        } else {
            (0..n).collect()
        };
        rows.sort_unstable();
        let builder = Builder {
            x,
            resid: &resid,
            hess: &hess,
            params,
            n_features,
        };
        let mut tree = Tree::default();
        let root = tree.push();
        builder.grow(&mut tree, root, rows, 0, &mut rng);
        for (i, r) in x.rows().into_iter().enumerate() {
            f[i] += params.learning_rate * tree.predict(r.as_slice().expect("standard layout"));
        }
        trees.push(tree);
    }
    Ok(GbModel {
        init,
        learning_rate: params.learning_rate,
        trees,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng as _;

    fn params() -> GbParams {
        GbParams {
            learning_rate: 0.1,
            n_estimators: 30,
            subsample: 1.0,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_depth: 3,
            max_features: MaxFeatures::All,
            criterion: SplitCriterion::FriedmanMse,
        }
    }

    #[test]
    fn single_stump_recovers_threshold() {
        let xs: Vec<f64> = (0..20).map(f64::from).collect();
        let y: Vec<u8> = xs.iter().map(|&v| u8::from(v >= 12.0)).collect();
        let x = Array2::from_shape_vec((20, 1), xs).unwrap();
        let p = GbParams { learning_rate: 1.0, n_estimators: 1, max_depth: 1, ..params() };
        let m = fit_gbtrees(x.view(), &y, &p, 0).unwrap();
        let t = &m.trees[0];
        assert_eq!(t.feature[0], 0);
        assert_eq!(t.cut[0], 11.5);
        assert_eq!(t.depth(), 1);
        let probs = m.predict_proba(x.view());
        for (p, &l) in probs.iter().zip(&y) {
            assert_eq!(*p > 0.5, l == 1);
        }
    }

    #[test]
    fn staged_loss_non_increasing() {
        let mut rng = crate::rng::rng_from_seed(11);
        let x = Array2::from_shape_fn((200, 4), |_| rng.random::<f64>());
        let y: Vec<u8> = (0..200)
            .map(|i| u8::from(x[[i, 0]] + 0.5 * x[[i, 1]] + 0.3 * rng.random::<f64>() > 0.9))
            .collect();
        let m = fit_gbtrees(x.view(), &y, &params(), 5).unwrap();
        let losses = m.staged_log_loss(x.view(), &y);
        for w in losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{w:?}");
        }
    }

    #[test]
    fn constraints_honored_and_seeded() {
        let mut rng = crate::rng::rng_from_seed(12);
        let x = Array2::from_shape_fn((150, 6), |_| rng.random::<f64>());
        let y: Vec<u8> = (0..150).map(|i| u8::from(x[[i, 2]] > 0.4)).collect();
        let p = GbParams {
            subsample: 0.6,
            min_samples_leaf: 7,
            max_depth: 4,
            max_features: MaxFeatures::Sqrt,
            ..params()
        };
        let a = fit_gbtrees(x.view(), &y, &p, 9).unwrap();
        assert_eq!(a, fit_gbtrees(x.view(), &y, &p, 9).unwrap());
        assert_ne!(a, fit_gbtrees(x.view(), &y, &p, 10).unwrap());
        assert!(a.trees.iter().all(|t| t.depth() <= 4));
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(serde_json::from_str::<GbModel>(&json).unwrap(), a);
    }

    #[test]
    fn max_features_counts() {
        assert_eq!(MaxFeatures::Sqrt.count(35), 5);
        assert_eq!(MaxFeatures::Log2.count(35), 5);
        assert_eq!(MaxFeatures::Log2.count(1), 1);
    }

    #[test]
    fn mae_is_a_capability_error() {
        let x = Array2::from_shape_vec((4, 1), vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let p = GbParams { criterion: SplitCriterion::Mae, ..params() };
        assert!(matches!(fit_gbtrees(x.view(), &[0, 0, 1, 1], &p, 0), Err(Error::Capability(_))));
    }
}
