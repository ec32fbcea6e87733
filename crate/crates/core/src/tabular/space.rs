use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::gbtrees::{GbParams, MaxFeatures, SplitCriterion};
use super::logreg::{LogRegParams, Penalty};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    LogregElasticnet,
    GradBoostTrees,
}

/// Hyperparameters of one learner, tagged by kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerParams {
    LogregElasticnet(LogRegParams),
    GradBoostTrees(GbParams),
}

impl LearnerParams {
    pub fn kind(&self) -> LearnerKind {
        match self {
            LearnerParams::LogregElasticnet(_) => LearnerKind::LogregElasticnet,
            LearnerParams::GradBoostTrees(_) => LearnerKind::GradBoostTrees,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub params: LearnerParams,
    pub seed: u64,
}

/// Continuous uniform on [low, high].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Uniform {
    pub low: f64,
    pub high: f64,
}

/// Integer uniform on low..=high.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntRange {
    pub low: usize,
    pub high: usize,
}

impl Uniform {
    pub const fn new(low: f64, high: f64) -> Self {
        Self { low, high }
    }

    fn sample(&self, rng: &mut Rng) -> f64 {
        self.low + (self.high - self.low) * rng.random::<f64>()
    }

    pub fn contains(&self, v: f64) -> bool {
        (self.low..=self.high).contains(&v)
    }

    fn check(&self, name: &str) -> Result<()> {
        if self.low.is_finite() && self.high.is_finite() && self.low <= self.high {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("{name}: invalid range [{}, {}]", self.low, self.high)))
        }
    }
}

impl IntRange {
    pub const fn new(low: usize, high: usize) -> Self {
        Self { low, high }
    }

    fn sample(&self, rng: &mut Rng) -> usize {
        rng.random_range(self.low..=self.high)
    }

    pub fn contains(&self, v: usize) -> bool {
        (self.low..=self.high).contains(&v)
    }

    fn check(&self, name: &str) -> Result<()> {
        if self.low <= self.high {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("{name}: invalid range {}..={}", self.low, self.high)))
        }
    }
}

fn pick<T: Copy>(xs: &[T], rng: &mut Rng, name: &str) -> Result<T> {
    if xs.is_empty() {
        return Err(Error::InvalidInput(format!("{name}: empty choice set")));
    }
    Ok(xs[rng.random_range(0..xs.len())])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegSpace {
    pub alpha: Uniform,
    pub penalty: Vec<Penalty>,
    pub l1_ratio: Uniform,
}

impl Default for LogRegSpace {
    fn default() -> Self {
        Self {
            alpha: Uniform::new(0.0001, 0.001),
            penalty: vec![Penalty::L1, Penalty::L2, Penalty::Elasticnet],
            l1_ratio: Uniform::new(0.01, 0.30),
        }
    }
}

impl LogRegSpace {
    fn sample(&self, rng: &mut Rng) -> Result<LogRegParams> {
        Ok(LogRegParams {
            alpha: self.alpha.sample(rng),
            penalty: pick(&self.penalty, rng, "penalty")?,
            l1_ratio: self.l1_ratio.sample(rng),
        })
    }

    pub fn contains(&self, p: &LogRegParams) -> bool {
        self.alpha.contains(p.alpha) && self.penalty.contains(&p.penalty) && self.l1_ratio.contains(p.l1_ratio)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbSpace {
    pub learning_rate: Uniform,
    pub n_estimators: IntRange,
    pub subsample: Uniform,
    pub criterion: Vec<SplitCriterion>,
    pub min_samples_split: IntRange,
    pub min_samples_leaf: IntRange,
    pub max_depth: IntRange,
    pub max_features: Vec<MaxFeatures>,
}

impl Default for GbSpace {
    fn default() -> Self {
        Self {
            learning_rate: Uniform::new(0.003, 0.3),
            n_estimators: IntRange::new(200, 1000),
            subsample: Uniform::new(0.1, 1.0),
            criterion: vec![SplitCriterion::FriedmanMse, SplitCriterion::Mse],
            min_samples_split: IntRange::new(2, 12),
            min_samples_leaf: IntRange::new(2, 12),
            max_depth: IntRange::new(3, 12),
            max_features: vec![MaxFeatures::Sqrt, MaxFeatures::Log2],
        }
    }
}

impl GbSpace {
    fn sample(&self, rng: &mut Rng) -> Result<GbParams> {
        let learning_rate = self.learning_rate.sample(rng);
        let n_estimators = self.n_estimators.sample(rng);
        // A zero draw would be an empty bag.
        let subsample = self.subsample.sample(rng).max(f64::MIN_POSITIVE);
        let criterion = pick(&self.criterion, rng, "criterion")?;
        Ok(GbParams {
            learning_rate,
            n_estimators,
            subsample,
            criterion,
            min_samples_split: self.min_samples_split.sample(rng),
            min_samples_leaf: self.min_samples_leaf.sample(rng),
            max_depth: self.max_depth.sample(rng),
            max_features: pick(&self.max_features, rng, "max_features")?,
        })
    }

    pub fn contains(&self, p: &GbParams) -> bool {
        self.learning_rate.contains(p.learning_rate)
            && self.n_estimators.contains(p.n_estimators)
            && self.subsample.contains(p.subsample)
            && self.criterion.contains(&p.criterion)
            && self.min_samples_split.contains(p.min_samples_split)
            && self.min_samples_leaf.contains(p.min_samples_leaf)
            && self.max_depth.contains(p.max_depth)
            && self.max_features.contains(&p.max_features)
    }
}

/// Per-kind search distributions. A kind with `None` is not searched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperSpace {
    #[serde(default)]
    pub logreg_elasticnet: Option<LogRegSpace>,
    #[serde(default)]
    pub grad_boost_trees: Option<GbSpace>,
}

impl Default for HyperSpace {
    fn default() -> Self {
        Self {
            logreg_elasticnet: Some(LogRegSpace::default()),
            grad_boost_trees: Some(GbSpace::default()),
        }
    }
}

impl HyperSpace {
    pub fn logreg_only() -> Self {
        Self {
            logreg_elasticnet: Some(LogRegSpace::default()),
            grad_boost_trees: None,
        }
    }

    pub fn kinds(&self) -> Vec<LearnerKind> {
        let mut k = Vec::new();
        if self.logreg_elasticnet.is_some() {
            k.push(LearnerKind::LogregElasticnet);
        }
        if self.grad_boost_trees.is_some() {
            k.push(LearnerKind::GradBoostTrees);
        }
        k
    }

    pub fn validate(&self) -> Result<()> {
        if self.kinds().is_empty() {
            return Err(Error::InvalidInput("hyperparameter space is empty".into()));
        }
        if let Some(s) = &self.logreg_elasticnet {
            s.alpha.check("alpha")?;
            s.l1_ratio.check("l1_ratio")?;
            if s.alpha.low < 0.0 || s.l1_ratio.low < 0.0 || s.l1_ratio.high > 1.0 {
                return Err(Error::InvalidInput("alpha must be >= 0 and l1_ratio in [0,1]".into()));
            }
        }
        if let Some(s) = &self.grad_boost_trees {
            s.learning_rate.check("learning_rate")?;
            s.subsample.check("subsample")?;
            s.n_estimators.check("n_estimators")?;
            s.min_samples_split.check("min_samples_split")?;
            s.min_samples_leaf.check("min_samples_leaf")?;
            s.max_depth.check("max_depth")?;
            if s.n_estimators.low == 0 || s.learning_rate.low <= 0.0 || s.subsample.high > 1.0 {
                return Err(Error::InvalidInput("gradient boosting ranges out of domain".into()));
            }
        }
        Ok(())
    }

    pub fn contains(&self, spec: &LearnerSpec) -> bool {
        match (&spec.params, &self.logreg_elasticnet, &self.grad_boost_trees) {
            (LearnerParams::LogregElasticnet(p), Some(s), _) => s.contains(p),
            (LearnerParams::GradBoostTrees(p), _, Some(s)) => s.contains(p),
            _ => false,
        }
    }

    /// Draw `n_iter` specs per enabled kind, kinds in declaration order.
    pub fn sample_specs(&self, n_iter: usize, rng: &mut Rng) -> Result<Vec<LearnerSpec>> {
        self.validate()?;
        if n_iter == 0 {
            return Err(Error::InvalidInput("n_iter must be >= 1".into()));
        }
        let mut out = Vec::new();
        for kind in self.kinds() {
            for _ in 0..n_iter {
                let params = match kind {
                    LearnerKind::LogregElasticnet => LearnerParams::LogregElasticnet(
                        self.logreg_elasticnet.as_ref().expect("enabled").sample(rng)?,
                    ),
                    LearnerKind::GradBoostTrees => LearnerParams::GradBoostTrees(
                        self.grad_boost_trees.as_ref().expect("enabled").sample(rng)?,
                    ),
                };
                out.push(LearnerSpec {
                    params,
                    seed: rng.random(),
                });
            }
        }
        Ok(out)
    }
}
