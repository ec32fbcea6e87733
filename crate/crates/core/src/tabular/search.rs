use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::folds::FoldAssignment;
use super::model::{fit_spec, TrainedTabular};
use super::space::{HyperSpace, LearnerSpec};
use super::threshold::{select_threshold, ThresholdPolicy};
use crate::error::{Error, Result};
use crate::evaluation::compute_metrics;
use crate::exec::{map_indexed, Execution};
use crate::matrix::FeatureMatrix;
use crate::rng::rng_from_seed;

pub const DEFAULT_F1_FLOOR: f64 = 0.25;
pub const DEFAULT_N_ITER: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchEntry {
    /// Position in the sampled sequence.
    pub sample_index: usize,
    pub spec: LearnerSpec,
    pub fold_f1: Vec<f64>,
    pub mean_f1: f64,
    pub floor_pass: bool,
}

/// Leaderboard ranked by (floor pass, mean F1), best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub seed: u64,
    pub floor: f64,
    pub entries: Vec<SearchEntry>,
    /// True when no spec cleared the floor on every fold.
    pub floor_warning: bool,
    /// Out-of-fold probabilities of the winner, in row order.
    pub oof_scores: Vec<f64>,
}

impl SearchResult {
    pub fn winner(&self) -> &SearchEntry {
        &self.entries[0]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Index of the winning fold-F1 vector: the best mean among vectors whose
/// minimum exceeds `floor`, else the best mean overall (flagged). Ties go to
/// the earlier entry.
pub fn select_winner(fold_f1: &[Vec<f64>], floor: f64) -> Option<(usize, bool)> {
    let mean = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let best = |pass_only: bool| {
        let mut best: Option<(usize, f64)> = None;
        for (i, v) in fold_f1.iter().enumerate() {
            if pass_only && !v.iter().all(|&f| f > floor) {
                continue;
            }
            let m = mean(v);
            if best.is_none_or(|(_, b)| m > b) {
                best = Some((i, m));
            }
        }
        best.map(|b| b.0)
    };
    best(true).map(|i| (i, false)).or_else(|| best(false).map(|i| (i, true)))
}

struct JobOutput {
    scores: Vec<f64>,
    f1: f64,
}

fn run_job(
    spec: &LearnerSpec,
    x: ArrayView2<f64>,
    y: &[u8],
    folds: &FoldAssignment,
    fold: usize,
    policy: ThresholdPolicy,
) -> Result<JobOutput> {
    let tr = folds.train_indices(fold);
    let va = folds.valid_indices(fold);
    let ytr: Vec<u8> = tr.iter().map(|&i| y[i]).collect();
    let yva: Vec<u8> = va.iter().map(|&i| y[i]).collect();
    let model = fit_spec(spec, x.select(Axis(0), &tr).view(), &ytr)?;
    let scores = model.predict_proba(x.select(Axis(0), &va).view());
    let t = select_threshold(&scores, &yva, policy)?;
    let f1 = compute_metrics(&yva, &scores, t)?.f1.unwrap_or(0.0);
    Ok(JobOutput { scores, f1 })
}

/// Randomized search with k-fold cross-validation. Every (spec, fold) job is
/// independent; results are reduced in spec-then-fold order.
#[allow(clippy::too_many_arguments)]
pub fn random_search_cv(
    space: &HyperSpace,
    x: ArrayView2<f64>,
    y: &[u8],
    folds: &FoldAssignment,
    n_iter: usize,
    seed: u64,
    floor: f64,
    policy: ThresholdPolicy,
    exec: Execution,
) -> Result<SearchResult> {
    if folds.len() != y.len() || x.nrows() != y.len() {
        return Err(Error::InvalidInput("matrix, labels and folds must have equal length".into()));
    }
    let specs = space.sample_specs(n_iter, &mut rng_from_seed(seed))?;
    let k = folds.k;
    let jobs = map_indexed(exec, specs.len() * k, |j| {
        run_job(&specs[j / k], x, y, folds, j % k, policy)
    });
    let jobs: Vec<JobOutput> = jobs.into_iter().collect::<Result<_>>()?;
    let fold_f1: Vec<Vec<f64>> = (0..specs.len())
        .map(|s| (0..k).map(|f| jobs[s * k + f].f1).collect())
        .collect();
    let (win, floor_warning) = select_winner(&fold_f1, floor).expect("at least one spec");
    if floor_warning {
        log::warn!("no spec reached F1 > {floor} on every fold; using best mean F1");
    }
    let mut oof_scores = vec![0.0; y.len()];
    for f in 0..k {
        for (&row, &s) in folds.valid_indices(f).iter().zip(&jobs[win * k + f].scores) {
            oof_scores[row] = s;
        }
    }
    let mut entries: Vec<SearchEntry> = specs
        .iter()
        .zip(fold_f1)
        .enumerate()
        .map(|(i, (spec, f1s))| SearchEntry {
            sample_index: i,
            spec: *spec,
            mean_f1: f1s.iter().sum::<f64>() / k as f64,
            floor_pass: f1s.iter().all(|&f| f > floor),
            fold_f1: f1s,
        })
        .collect();
    let winner = entries.remove(win);
    entries.sort_by(|a, b| {
        b.floor_pass
            .cmp(&a.floor_pass)
            .then(b.mean_f1.total_cmp(&a.mean_f1))
            .then(a.sample_index.cmp(&b.sample_index))
    });
    entries.insert(0, winner);
    Ok(SearchResult {
        seed,
        floor,
        entries,
        floor_warning,
        oof_scores,
    })
}

/// Search, then refit the winner on all rows. The threshold is chosen on the
/// winner's pooled out-of-fold predictions.
#[allow(clippy::too_many_arguments)]
pub fn train_tabular(
    space: &HyperSpace,
    m: &FeatureMatrix,
    folds: &FoldAssignment,
    n_iter: usize,
    seed: u64,
    floor: f64,
    policy: ThresholdPolicy,
    exec: Execution,
) -> Result<(SearchResult, TrainedTabular)> {
    let y = m.labels()?;
    let result = random_search_cv(space, m.values.view(), &y, folds, n_iter, seed, floor, policy, exec)?;
    let spec = result.winner().spec;
    let model = fit_spec(&spec, m.values.view(), &y)?;
    let threshold = select_threshold(&result.oof_scores, &y, policy)?;
    Ok((
        result,
        TrainedTabular {
            columns: m.columns.clone(),
            spec,
            model,
            threshold,
            threshold_policy: policy,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::folds::make_stratified_folds;
    use ndarray::Array2;
    use rand::Rng as _;

    #[test]
    fn floor_filters_unstable_spec() {
        let f = vec![vec![0.3; 4], vec![0.9, 0.9, 0.9, 0.2]];
        assert_eq!(select_winner(&f, 0.25), Some((0, false)));
        let g = vec![vec![0.1; 4], vec![0.9, 0.9, 0.9, 0.2]];
        assert_eq!(select_winner(&g, 0.25), Some((1, true)));
    }

    fn data(seed: u64) -> (Array2<f64>, Vec<u8>) {
        let mut rng = crate::rng::rng_from_seed(seed);
        let x = Array2::from_shape_fn((160, 3), |_| rng.random::<f64>() * 2.0 - 1.0);
        let y = (0..160)
            .map(|i| u8::from(2.0 * x[[i, 0]] - x[[i, 1]] + rng.random::<f64>() - 0.5 > 0.6))
            .collect();
        (x, y)
    }

    #[test]
    fn single_spec_wins_and_search_is_deterministic() {
        let (x, y) = data(1);
        let folds = make_stratified_folds(&y, 4, 2020).unwrap();
        let space = HyperSpace::logreg_only();
        let run = |exec| {
            random_search_cv(&space, x.view(), &y, &folds, 1, 3, 0.25, ThresholdPolicy::MaxF1, exec).unwrap()
        };
        let a = run(Execution::Sequential);
        assert_eq!(a.entries.len(), 1);
        assert_eq!(a, run(Execution::Parallel));
        assert!(a.winner().mean_f1 > 0.5);
    }

    #[test]
    fn winner_respects_floor_when_possible() {
        let (x, y) = data(2);
        let folds = make_stratified_folds(&y, 4, 2020).unwrap();
        let mut space = HyperSpace::default();
        if let Some(g) = space.grad_boost_trees.as_mut() {
            g.n_estimators = crate::tabular::IntRange::new(5, 20);
        }
        let r = random_search_cv(&space, x.view(), &y, &folds, 3, 4, 0.25, ThresholdPolicy::MaxF1, Execution::Parallel)
            .unwrap();
        assert_eq!(r.entries.len(), 6);
        if r.entries.iter().any(|e| e.floor_pass) {
            assert!(r.winner().floor_pass && !r.floor_warning);
        }
        let best = r
            .entries
            .iter()
            .filter(|e| e.floor_pass)
            .map(|e| e.mean_f1)
            .fold(f64::MIN, f64::max);
        assert_eq!(r.winner().mean_f1, best);
    }
}
