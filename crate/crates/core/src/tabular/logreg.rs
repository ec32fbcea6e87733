use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LOGREG_TOL: f64 = 1e-6;
pub const LOGREG_MAX_ITER: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    L1,
    L2,
    Elasticnet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    pub alpha: f64,
    pub penalty: Penalty,
    /// Only used when `penalty` is `Elasticnet`.
    pub l1_ratio: f64,
}

impl LogRegParams {
    /// (l1 weight, l2 weight) multiplying alpha.
    pub fn mix(&self) -> (f64, f64) {
        match self.penalty {
            Penalty::L1 => (1.0, 0.0),
            Penalty::L2 => (0.0, 1.0),
            Penalty::Elasticnet => (self.l1_ratio, 1.0 - self.l1_ratio),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::InvalidInput(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if self.penalty == Penalty::Elasticnet && !(0.0..=1.0).contains(&self.l1_ratio) {
            return Err(Error::InvalidInput(format!("l1_ratio must be in [0,1], got {}", self.l1_ratio)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^t) without overflow.
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

impl LogisticModel {
    pub fn decision(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        sigmoid(self.decision(row))
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Vec<f64> {
        let w = ArrayView1::from(&self.weights[..]);
        x.dot(&w).iter().map(|z| sigmoid(z + self.intercept)).collect()
    }
}

pub(crate) fn check_training_data(x: ArrayView2<f64>, y: &[u8]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::InvalidInput(format!(
            "{} rows but {} labels",
            x.nrows(),
            y.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature matrix contains NaN or infinity".into()));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::InvalidInput("labels must be 0 or 1".into()));
    }
    let pos = y.iter().filter(|&&v| v == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::Precondition("training labels contain a single class".into()));
    }
    Ok(())
}

fn mean_logloss(margins: &Array1<f64>, y: &[u8]) -> f64 {
    margins
        .iter()
        .zip(y)
        .map(|(&z, &t)| if t == 1 { softplus(-z) } else { softplus(z) })
        .sum::<f64>()
        / y.len() as f64
}

fn penalty_value(w: &Array1<f64>, alpha: f64, (r1, r2): (f64, f64)) -> f64 {
    let l1: f64 = w.iter().map(|v| v.abs()).sum();
    let l2: f64 = w.iter().map(|v| v * v).sum();
    alpha * (r1 * l1 + r2 * l2 / 2.0)
}

/// Mean log-loss plus penalty; the intercept is not penalized.
pub fn logreg_objective(
    x: ArrayView2<f64>,
    y: &[u8],
    weights: &[f64],
    intercept: f64,
    params: &LogRegParams,
) -> f64 {
    let w = Array1::from(weights.to_vec());
    let margins = x.dot(&w) + intercept;
    mean_logloss(&margins, y) + penalty_value(&w, params.alpha, params.mix())
}

struct Problem<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [u8],
    alpha: f64,
    mix: (f64, f64),
}

impl Problem<'_> {
    fn smooth(&self, w: &Array1<f64>, b: f64) -> f64 {
        mean_logloss(&(self.x.dot(w) + b), self.y)
    }

    fn smooth_grad(&self, w: &Array1<f64>, b: f64) -> (f64, Array1<f64>, f64) {
        let margins = self.x.dot(w) + b;
        let n = self.y.len() as f64;
        let resid: Array1<f64> = margins
            .iter()
            .zip(self.y)
            .map(|(&z, &t)| (sigmoid(z) - f64::from(t)) / n)
            .collect();
        (mean_logloss(&margins, self.y), self.x.t().dot(&resid), resid.sum())
    }

    fn prox(&self, v: &Array1<f64>, step: f64) -> Array1<f64> {
        let thr = step * self.alpha * self.mix.0;
        let shrink = 1.0 + step * self.alpha * self.mix.1;
        v.mapv(|a| (a.signum() * (a.abs() - thr).max(0.0)) / shrink)
    }

    fn objective(&self, w: &Array1<f64>, b: f64) -> f64 {
        self.smooth(w, b) + penalty_value(w, self.alpha, self.mix)
    }
}

/// Largest eigenvalue of [X 1]^T [X 1] / n by power iteration.
fn lipschitz_estimate(x: ArrayView2<f64>) -> f64 {
    let n = x.nrows() as f64;
    let p = x.ncols();
    let mut v = Array1::from_elem(p + 1, 1.0 / ((p + 1) as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..50 {
        let xv = x.dot(&v.slice(ndarray::s![..p])) + v[p];
        let mut u = Array1::zeros(p + 1);
        u.slice_mut(ndarray::s![..p]).assign(&x.t().dot(&xv));
        u[p] = xv.sum();
        u /= n;
        let norm = u.dot(&u).sqrt();
        if norm == 0.0 {
            break;
        }
        lambda = norm;
        v = u / norm;
    }
    // The logistic curvature is at most 1/4.
    (lambda / 4.0).max(1e-12)
}

/// Penalized logistic regression by accelerated proximal gradient (FISTA)
/// with backtracking and function-value restarts. Stops when the gradient
/// mapping norm drops below `LOGREG_TOL`. The returned iterate is the best
/// objective value seen, starting from zero weights at the prior intercept.
pub fn fit_logreg_elasticnet(
    x: ArrayView2<f64>,
    y: &[u8],
    params: &LogRegParams,
) -> Result<LogisticModel> {
    params.validate()?;
    check_training_data(x, y)?;
    let prob = Problem {
        x,
        y,
        alpha: params.alpha,
        mix: params.mix(),
    };
    let p = x.ncols();
    let prior = y.iter().filter(|&&v| v == 1).count() as f64 / y.len() as f64;

    let mut w = Array1::<f64>::zeros(p);
    let mut b = (prior / (1.0 - prior)).ln();
    let mut f_cur = prob.objective(&w, b);
    let (mut yw, mut yb) = (w.clone(), b);
    let mut t: f64 = 1.0;
    let mut lip = lipschitz_estimate(x);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < LOGREG_MAX_ITER {
        iterations += 1;
        let (fy, gw, gb) = prob.smooth_grad(&yw, yb);
        let (nw, nb) = loop {
            let step = 1.0 / lip;
            let nw = prob.prox(&(&yw - &(&gw * step)), step);
            let nb = yb - gb * step;
            let dw = &nw - &yw;
            let db = nb - yb;
            let model = fy + gw.dot(&dw) + gb * db + lip / 2.0 * (dw.dot(&dw) + db * db);
            if prob.smooth(&nw, nb) <= model + 1e-12 * fy.abs().max(1.0) {
                break (nw, nb);
            }
            lip *= 2.0;
        };
        let mapping = ((&yw - &nw).mapv(f64::abs).fold(0.0f64, |a, &v| a.max(v)))
            .max((yb - nb).abs())
            * lip;
        let f_new = prob.objective(&nw, nb);
        if f_new > f_cur {
            // Momentum overshot: restart from the current point.
            t = 1.0;
            yw = w.clone();
            yb = b;
            continue;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let beta = (t - 1.0) / t_next;
        yw = &nw + &((&nw - &w) * beta);
        yb = nb + (nb - b) * beta;
        w = nw;
        b = nb;
        f_cur = f_new;
        t = t_next;
        if mapping < LOGREG_TOL {
            converged = true;
            break;
        }
    }
    if !f_cur.is_finite() {
        return Err(Error::NonFinite("logistic objective diverged".into()));
    }
    Ok(LogisticModel {
        weights: w.to_vec(),
        intercept: b,
        iterations,
        converged,
    })
}
