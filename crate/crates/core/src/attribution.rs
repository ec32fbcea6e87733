//! Shapley-value attribution: exact subset enumeration for small feature
//! counts, permutation sampling otherwise. Absent features are filled from a
//! background set and averaged.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::matrix::FeatureMatrix;
use crate::rng::{child_rng, derive_seed, rng_from_seed};

pub const DEFAULT_EXACT_LIMIT: usize = 12;
pub const MAX_EXACT_LIMIT: usize = 20;
pub const MIN_PERMUTATIONS: usize = 100;
pub const DEFAULT_PERMUTATIONS: usize = 500;
pub const DEFAULT_BACKGROUND: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapConfig {
    pub background: Vec<Vec<f64>>,
    pub exact_limit: usize,
    pub n_permutations: usize,
    pub seed: u64,
}

impl ShapConfig {
    pub fn new(background: Vec<Vec<f64>>, seed: u64) -> Self {
        Self { background, exact_limit: DEFAULT_EXACT_LIMIT, n_permutations: DEFAULT_PERMUTATIONS, seed }
    }

    fn check(&self, k: usize) -> Result<()> {
        if self.background.is_empty() {
            return Err(Error::InvalidInput("SHAP background set is empty".into()));
        }
        if self.exact_limit > MAX_EXACT_LIMIT {
            return Err(Error::InvalidInput(format!("exact_limit {} exceeds {MAX_EXACT_LIMIT}", self.exact_limit)));
        }
        if let Some(b) = self.background.iter().find(|b| b.len() != k) {
            return Err(Error::InvalidInput(format!("background row has {} features, expected {k}", b.len())));
        }
        Ok(())
    }

    fn base_value(&self, f: &dyn Fn(&[f64]) -> f64) -> f64 {
        self.background.iter().map(|b| f(b)).sum::<f64>() / self.background.len() as f64
    }
}

/// `n` background rows drawn without replacement (all rows when `n` ≥ nrows).
pub fn background_rows(m: &FeatureMatrix, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let rows: Vec<usize> = if n >= m.nrows() {
        (0..m.nrows()).collect()
    } else {
        let mut idx = rand::seq::index::sample(&mut rng_from_seed(seed), m.nrows(), n).into_vec();
        idx.sort_unstable();
        idx
    };
    rows.iter().map(|&r| m.values.row(r).to_vec()).collect()
}

/// Exact Shapley values of `f` at `x` by enumerating all feature subsets.
pub fn exact_shap(f: &dyn Fn(&[f64]) -> f64, x: &[f64], cfg: &ShapConfig) -> Result<Vec<f64>> {
    let k = x.len();
    cfg.check(k)?;
    if k > cfg.exact_limit {
        return Err(Error::Precondition(format!(
            "{k} features exceed the exact limit {}; use sampled mode",
            cfg.exact_limit
        )));
    }
    let mut z = vec![0.0; k];
    let value: Vec<f64> = (0..1usize << k)
        .map(|mask| {
            let mut total = 0.0;
            for b in &cfg.background {
                for i in 0..k {
                    z[i] = if mask >> i & 1 == 1 { x[i] } else { b[i] };
                }
                total += f(&z);
            }
            total / cfg.background.len() as f64
        })
        .collect();
    // weight(s) = s! (k-s-1)! / k! = 1 / (k * C(k-1, s))
    let mut weight = vec![0.0; k.max(1)];
    let mut binom = 1.0;
    for (s, w) in weight.iter_mut().enumerate().take(k) {
        *w = 1.0 / (k as f64 * binom);
        binom = binom * (k - 1 - s) as f64 / (s + 1) as f64;
    }
    let mut phi = vec![0.0; k];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        for mask in 0..1usize << k {
            if mask & bit == 0 {
                *p += weight[mask.count_ones() as usize] * (value[mask | bit] - value[mask]);
            }
        }
    }
    Ok(phi)
}

/// Permutation-sampling estimate: each draw takes a random feature order and
/// a random background row, then switches features to `x` one at a time and
/// credits each change in output to the switched feature.
pub fn sampled_shap(f: &dyn Fn(&[f64]) -> f64, x: &[f64], cfg: &ShapConfig) -> Result<Vec<f64>> {
    let k = x.len();
    cfg.check(k)?;
    if cfg.n_permutations < MIN_PERMUTATIONS {
        return Err(Error::InvalidInput(format!(
            "n_permutations {} below minimum {MIN_PERMUTATIONS}",
            cfg.n_permutations
        )));
    }
    let mut rng = rng_from_seed(cfg.seed);
    let mut order: Vec<usize> = (0..k).collect();
    let mut phi = vec![0.0; k];
    for _ in 0..cfg.n_permutations {
        order.shuffle(&mut rng);
        let mut z = cfg.background[rng.random_range(0..cfg.background.len())].clone();
        let mut prev = f(&z);
        for &j in &order {
            z[j] = x[j];
            let cur = f(&z);
            phi[j] += cur - prev;
            prev = cur;
        }
    }
    phi.iter_mut().for_each(|p| *p /= cfg.n_permutations as f64);
    Ok(phi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapMode {
    Exact,
    Sampled,
}

/// Per-row, per-feature attributions of a model's probability output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapMatrix {
    pub ids: Vec<String>,
    pub columns: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub base_value: f64,
    pub outputs: Vec<f64>,
    pub mode: ShapMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub feature: String,
    pub mean_abs: f64,
}

#[derive(Serialize)]
struct ShapSummary<'a> {
    mode: ShapMode,
    base_value: f64,
    rows: usize,
    ranking: &'a [RankedFeature],
}

impl ShapMatrix {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["id".to_string()];
        header.extend(self.columns.iter().cloned());
        wtr.write_record(&header)?;
        for (id, row) in self.ids.iter().zip(&self.values) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|v| format!("{v:?}")));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// JSON summary with the mean-|value| ranking.
    pub fn summary_json(&self) -> Result<String> {
        let ranking = rank_features(self)?;
        Ok(serde_json::to_string_pretty(&ShapSummary {
            mode: self.mode,
            base_value: self.base_value,
            rows: self.values.len(),
            ranking: &ranking,
        })?)
    }
}

/// Attribute every row of `m` (restricted to `rows` when given). Exact mode
/// is used when the column count fits `cfg.exact_limit`. Row `r` samples
/// from a stream derived from `(cfg.seed, r)`.
pub fn explain_matrix(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    m: &FeatureMatrix,
    rows: Option<&[usize]>,
    cfg: &ShapConfig,
    exec: Execution,
) -> Result<ShapMatrix> {
    let k = m.ncols();
    cfg.check(k)?;
    let rows: Vec<usize> = rows.map_or_else(|| (0..m.nrows()).collect(), <[usize]>::to_vec);
    if rows.is_empty() {
        return Err(Error::InvalidInput("no rows to explain".into()));
    }
    let mode = if k <= cfg.exact_limit { ShapMode::Exact } else { ShapMode::Sampled };
    let values: Vec<Vec<f64>> = map_indexed(exec, rows.len(), |i| {
        let x = m.values.row(rows[i]).to_vec();
        match mode {
            ShapMode::Exact => exact_shap(f, &x, cfg),
            ShapMode::Sampled => {
                let row_cfg = ShapConfig { seed: derive_seed(cfg.seed, &[rows[i] as u64]), ..cfg.clone() };
                sampled_shap(f, &x, &row_cfg)
            }
        }
    })
    .into_iter()
    .collect::<Result<_>>()?;
    Ok(ShapMatrix {
        ids: rows.iter().map(|&r| m.ids[r].clone()).collect(),
        columns: m.columns.clone(),
        outputs: rows.iter().map(|&r| f(&m.values.row(r).to_vec())).collect(),
        base_value: cfg.base_value(f),
        values,
        mode,
    })
}

/// Features by descending mean |value|; ties keep column order.
pub fn rank_features(shap: &ShapMatrix) -> Result<Vec<RankedFeature>> {
    if shap.values.is_empty() || shap.columns.is_empty() {
        return Err(Error::InvalidInput("empty SHAP matrix".into()));
    }
    let n = shap.values.len() as f64;
    let mut ranked: Vec<RankedFeature> = shap
        .columns
        .iter()
        .enumerate()
        .map(|(j, c)| RankedFeature {
            feature: c.clone(),
            mean_abs: shap.values.iter().map(|r| r[j].abs()).sum::<f64>() / n,
        })
        .collect();
    ranked.sort_by(|a, b| b.mean_abs.total_cmp(&a.mean_abs));
    Ok(ranked)
}

/// Seeded random background for tests and benches.
pub fn random_rows(n: usize, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = child_rng(seed, &[0]);
    (0..n).map(|_| (0..k).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn cfg(k: usize, seed: u64) -> ShapConfig {
        ShapConfig::new(random_rows(20, k, seed), seed)
    }

    #[test]
    fn linear_closed_form() {
        let w = [0.5, -1.0, 2.0, 0.0, 0.25];
        let f = |z: &[f64]| z.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + 0.1;
        let c = cfg(5, 1);
        let x = [0.3, -0.7, 0.9, 0.4, -0.2];
        let phi = exact_shap(&f, &x, &c).unwrap();
        for i in 0..5 {
            let mean_b = c.background.iter().map(|b| b[i]).sum::<f64>() / 20.0;
            assert!((phi[i] - w[i] * (x[i] - mean_b)).abs() < 1e-12);
        }
        assert_eq!(phi[3], 0.0);
    }

    #[test]
    fn efficiency_and_single_feature() {
        let f = |z: &[f64]| 1.0 / (1.0 + (-(z[0] * z[1] + z[2].sin() - z[3])).exp());
        let c = cfg(6, 2);
        let x = [0.9, -0.4, 0.2, 0.7, 0.1, 0.3];
        let phi = exact_shap(&f, &x, &c).unwrap();
        let base = c.base_value(&f);
        assert!((phi.iter().sum::<f64>() + base - f(&x)).abs() < 1e-12);
        assert_eq!((phi[4], phi[5]), (0.0, 0.0));

        let g = |z: &[f64]| z[0];
        let phi = exact_shap(&g, &x, &c).unwrap();
        assert!((phi[0] - (x[0] - c.base_value(&g))).abs() < 1e-12);
        assert!(phi[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sampled_is_seeded_and_constant_model_is_zero() {
        let c = ShapConfig { n_permutations: 200, ..cfg(4, 3) };
        let f = |z: &[f64]| z[0] * z[1] + z[2];
        let x = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(sampled_shap(&f, &x, &c).unwrap(), sampled_shap(&f, &x, &c).unwrap());
        let k = |_: &[f64]| 0.42;
        assert!(sampled_shap(&k, &x, &c).unwrap().iter().all(|v| v.abs() < 1e-12));
        let low = ShapConfig { n_permutations: 99, ..c };
        assert!(sampled_shap(&f, &x, &low).is_err());
    }

    #[test]
    fn config_errors() {
        let f = |z: &[f64]| z[0];
        let empty = ShapConfig::new(vec![], 1);
        assert!(exact_shap(&f, &[0.0], &empty).is_err());
        let big = ShapConfig { exact_limit: 21, ..cfg(2, 1) };
        assert!(exact_shap(&f, &[0.0, 0.0], &big).is_err());
        let small = ShapConfig { exact_limit: 1, ..cfg(2, 1) };
        assert!(exact_shap(&f, &[0.0, 0.0], &small).is_err());
    }

    #[test]
    fn ranking_is_stable() {
        let s = ShapMatrix {
            ids: vec!["a".into(), "b".into()],
            columns: vec!["x".into(), "y".into(), "z".into()],
            values: vec![vec![0.0; 3]; 2],
            base_value: 0.0,
            outputs: vec![0.0; 2],
            mode: ShapMode::Exact,
        };
        let names: Vec<String> = rank_features(&s).unwrap().into_iter().map(|r| r.feature).collect();
        assert_eq!(names, ["x", "y", "z"]);
        let mut t = s.clone();
        t.values[0][2] = -3.0;
        assert_eq!(rank_features(&t).unwrap()[0].feature, "z");
    }

    #[test]
    fn explain_matrix_modes_agree_with_direct_calls() {
        let k = 4;
        let bg = random_rows(10, k, 5);
        let values = Array2::from_shape_vec((3, k), random_rows(3, k, 6).concat()).unwrap();
        let m = FeatureMatrix::new(
            (0..k).map(|j| format!("f{j}")).collect(),
            vec!["r0".into(), "r1".into(), "r2".into()],
            values,
            vec![None; 3],
        )
        .unwrap();
        let f = |z: &[f64]| (z[0] - z[3]).tanh();
        let c = ShapConfig::new(bg, 7);
        let s = explain_matrix(&f, &m, None, &c, Execution::Parallel).unwrap();
        assert_eq!(s.mode, ShapMode::Exact);
        for r in 0..3 {
            let direct = exact_shap(&f, &m.values.row(r).to_vec(), &c).unwrap();
            assert_eq!(s.values[r], direct);
            assert!((s.values[r].iter().sum::<f64>() + s.base_value - s.outputs[r]).abs() < 1e-12);
        }
        let sampled_cfg = ShapConfig { exact_limit: 2, n_permutations: 100, ..c };
        let a = explain_matrix(&f, &m, Some(&[2, 0]), &sampled_cfg, Execution::Sequential).unwrap();
        let b = explain_matrix(&f, &m, Some(&[2, 0]), &sampled_cfg, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.mode, ShapMode::Sampled);
        assert_eq!(a.ids, ["r2", "r0"]);
        let mut csv = Vec::new();
        a.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 3);
        assert!(a.summary_json().unwrap().contains("ranking"));
    }
}
