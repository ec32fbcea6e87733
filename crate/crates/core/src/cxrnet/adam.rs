use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

/// Adam with bias correction and no weight decay.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, shapes: &[usize]) -> Self {
        Self {
            cfg,
            t: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Vec<f64>>, grads: &[&Vec<f64>], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.cfg.beta1.powi(self.t);
        let c2 = 1.0 - self.cfg.beta2.powi(self.t);
        for (k, p) in params.into_iter().enumerate() {
            let (m, v, g) = (&mut self.m[k], &mut self.v[k], grads[k]);
            for j in 0..p.len() {
                m[j] = self.cfg.beta1 * m[j] + (1.0 - self.cfg.beta1) * g[j];
                v[j] = self.cfg.beta2 * v[j] + (1.0 - self.cfg.beta2) * g[j] * g[j];
                p[j] -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + self.cfg.epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = vec![1.0, -2.0];
        let g = vec![0.5, -3.0];
        let mut opt = Adam::new(AdamConfig::default(), &[2]);
        opt.step(vec![&mut p], &[&g], 0.01);
        assert!((p[0] - 0.99).abs() < 1e-8);
        assert!((p[1] + 1.99).abs() < 1e-8);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut p = vec![3.0];
        let mut opt = Adam::new(AdamConfig::default(), &[1]);
        for _ in 0..2000 {
            let g = vec![2.0 * (p[0] - 0.5)];
            opt.step(vec![&mut p], &[&g], 0.05);
        }
        assert!((p[0] - 0.5).abs() < 1e-3);
    }
}
