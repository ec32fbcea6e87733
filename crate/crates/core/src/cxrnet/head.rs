use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{child_rng, Rng};
use crate::tabular::{sigmoid, softplus};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu { slope: f64 },
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => f64::from(u8::from(z > 0.0)),
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BiasInit {
    None,
    #[default]
    Calculated,
}

/// Class weights `(w_neg, w_pos)` applied to the per-example loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub negative: f64,
    pub positive: f64,
}

impl ClassWeights {
    pub const UNIT: ClassWeights = ClassWeights {
        negative: 1.0,
        positive: 1.0,
    };

    #[inline]
    pub fn of(&self, y: u8) -> f64 {
        if y == 1 {
            self.positive
        } else {
            self.negative
        }
    }
}

impl Default for ClassWeights {
    fn default() -> Self {
        Self::UNIT
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub dropout: f64,
    pub output_bias_init: BiasInit,
    pub class_weights: ClassWeights,
    /// Standardize each input feature with the training partition's mean
    /// and standard deviation (frozen into the head).
    #[serde(default = "yes")]
    pub standardize_inputs: bool,
}

fn yes() -> bool {
    true
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![128, 64],
            activation: Activation::LeakyRelu { slope: DEFAULT_LEAKY_SLOPE },
            dropout: 0.5,
            output_bias_init: BiasInit::Calculated,
            class_weights: ClassWeights::UNIT,
            standardize_inputs: true,
        }
    }
}

impl HeadConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidInput(format!("dropout must be in [0,1), got {}", self.dropout)));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::InvalidInput("hidden layer widths must be positive".into()));
        }
        if !(self.class_weights.negative > 0.0 && self.class_weights.positive > 0.0) {
            return Err(Error::InvalidInput("class weights must be positive".into()));
        }
        Ok(())
    }
}

/// Fully connected layer; `w` is row-major `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    fn forward(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_out)
            .map(|o| {
                let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
                self.b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }
}

/// Classification head: hidden dense layers, one dropout layer before the
/// single-logit output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "HeadFile", try_from = "HeadFile")]
pub struct Head {
    pub feature_dim: usize,
    pub activation: Activation,
    pub dropout: f64,
    /// Inputs enter the first layer as `(x - input_shift) * input_scale`.
    pub input_shift: Vec<f64>,
    pub input_scale: Vec<f64>,
    /// Hidden layers followed by the output layer.
    pub layers: Vec<Dense>,
}

/// Parameter gradients, one (dW, db) pair per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrads {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl HeadGrads {
    pub fn zeros_like(head: &Head) -> Self {
        Self {
            layers: head
                .layers
                .iter()
                .map(|l| (vec![0.0; l.w.len()], vec![0.0; l.b.len()]))
                .collect(),
        }
    }

    fn scale(&mut self, s: f64) {
        for (w, b) in &mut self.layers {
            w.iter_mut().chain(b.iter_mut()).for_each(|v| *v *= s);
        }
    }
}

struct Cache {
    /// Input to each layer (after activation and dropout where applicable).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Vec<f64>>,
    /// Dropout multipliers applied to the output layer input.
    mask: Option<Vec<f64>>,
    logit: f64,
}

fn uniform_fill(rng: &mut Rng, n: usize, limit: f64) -> Vec<f64> {
    (0..n).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * limit).collect()
}

/// Hidden layers use He-uniform (limit sqrt(6/fan_in)); the output layer uses
/// LeCun-uniform (limit sqrt(3/fan_in)). Biases start at zero except the
/// output bias, which is ln(pos/neg) when calculated.
pub fn init_head(
    cfg: &HeadConfig,
    feature_dim: usize,
    pos_count: usize,
    neg_count: usize,
    seed: u64,
) -> Result<Head> {
    cfg.validate()?;
    if feature_dim == 0 {
        return Err(Error::InvalidInput("feature_dim must be positive".into()));
    }
    let out_bias = match cfg.output_bias_init {
        BiasInit::None => 0.0,
        BiasInit::Calculated => {
            if pos_count == 0 || neg_count == 0 {
                return Err(Error::Precondition(
                    "calculated output bias needs positive and negative counts".into(),
                ));
            }
            (pos_count as f64 / neg_count as f64).ln()
        }
    };
    let mut widths = vec![feature_dim];
    widths.extend(&cfg.hidden_layers);
    widths.push(1);
    let n_layers = widths.len() - 1;
    let layers = (0..n_layers)
        .map(|i| {
            let (n_in, n_out) = (widths[i], widths[i + 1]);
            let last = i + 1 == n_layers;
            let limit = if last { (3.0 / n_in as f64).sqrt() } else { (6.0 / n_in as f64).sqrt() };
            let mut rng = child_rng(seed, &[i as u64]);
            Dense {
                n_in,
                n_out,
                w: uniform_fill(&mut rng, n_in * n_out, limit),
                b: if last { vec![out_bias] } else { vec![0.0; n_out] },
            }
        })
        .collect();
    Ok(Head {
        feature_dim,
        activation: cfg.activation,
        dropout: cfg.dropout,
        input_shift: vec![0.0; feature_dim],
        input_scale: vec![1.0; feature_dim],
        layers,
    })
}

/// Per-example weighted binary cross-entropy in log-sigmoid form.
#[inline]
pub fn weighted_bce(logit: f64, y: u8, w: ClassWeights) -> f64 {
    w.of(y) * if y == 1 { softplus(-logit) } else { softplus(logit) }
}

impl Head {
    pub fn hidden_layers(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.n_out).collect()
    }

    pub fn output_bias(&self) -> f64 {
        self.layers.last().expect("output layer").b[0]
    }

    /// Fit the input standardization to a feature sample. Constant features
    /// get scale 0.
    pub fn fit_standardization(&mut self, features: &[Vec<f64>]) -> Result<()> {
        if features.is_empty() || features.iter().any(|f| f.len() != self.feature_dim) {
            return Err(Error::InvalidInput("standardization sample must be nonempty and match feature_dim".into()));
        }
        let n = features.len() as f64;
        for j in 0..self.feature_dim {
            let mean = features.iter().map(|f| f[j]).sum::<f64>() / n;
            let var = features.iter().map(|f| (f[j] - mean).powi(2)).sum::<f64>() / n;
            self.input_shift[j] = mean;
            self.input_scale[j] = if var.sqrt() > 1e-12 { 1.0 / var.sqrt() } else { 0.0 };
        }
        Ok(())
    }

    /// Draw a dropout mask (inverted scaling) for the output-layer input.
    pub fn sample_mask(&self, rng: &mut Rng) -> Option<Vec<f64>> {
        if self.dropout == 0.0 {
            return None;
        }
        let n = self.layers.last().expect("output layer").n_in;
        let keep = 1.0 - self.dropout;
        Some(
            (0..n)
                .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect(),
        )
    }

    fn forward_cache(&self, x: &[f64], mask: Option<&[f64]>) -> Cache {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut h: Vec<f64> =
            x.iter().zip(&self.input_shift).zip(&self.input_scale).map(|((v, m), s)| (v - m) * s).collect();
        for layer in &self.layers[..last] {
            let z = layer.forward(&h);
            inputs.push(h);
            h = z.iter().map(|&v| self.activation.apply(v)).collect();
            pre.push(z);
        }
        if let Some(m) = mask {
            h.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
        }
        let logit = self.layers[last].forward(&h)[0];
        inputs.push(h);
        Cache {
            inputs,
            pre,
            mask: mask.map(<[f64]>::to_vec),
            logit,
        }
    }

    /// Evaluation-mode logit (no dropout).
    pub fn logit(&self, x: &[f64]) -> f64 {
        self.forward_cache(x, None).logit
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    /// Accumulate gradients of `dlogit * logit` into `grads`; returns d/dx.
    fn backward(&self, cache: &Cache, dlogit: f64, grads: &mut HeadGrads) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut delta = vec![dlogit];
        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            let input = &cache.inputs[l];
            let (gw, gb) = &mut grads.layers[l];
            for o in 0..layer.n_out {
                gb[o] += delta[o];
                let row = &mut gw[o * layer.n_in..(o + 1) * layer.n_in];
                row.iter_mut().zip(input).for_each(|(g, a)| *g += delta[o] * a);
            }
            let mut dx = vec![0.0; layer.n_in];
            for o in 0..layer.n_out {
                let row = &layer.w[o * layer.n_in..(o + 1) * layer.n_in];
                dx.iter_mut().zip(row).for_each(|(d, w)| *d += delta[o] * w);
            }
            if l == last {
                if let Some(m) = &cache.mask {
                    dx.iter_mut().zip(m).for_each(|(d, k)| *d *= k);
                }
            }
            if l == 0 {
                dx.iter_mut().zip(&self.input_scale).for_each(|(d, s)| *d *= s);
                return dx;
            }
            let z = &cache.pre[l - 1];
            delta = dx.iter().zip(z).map(|(d, &zv)| d * self.activation.derivative(zv)).collect();
        }
        unreachable!("head has an output layer")
    }

    /// d logit / d features in evaluation mode.
    pub fn input_gradient(&self, x: &[f64]) -> Vec<f64> {
        let cache = self.forward_cache(x, None);
        let mut scratch = HeadGrads::zeros_like(self);
        self.backward(&cache, 1.0, &mut scratch)
    }

    /// Mean weighted BCE over the batch with parameter gradients and
    /// per-example feature gradients. `masks` enables dropout.
    pub fn loss_and_grad(
        &self,
        batch: &[&[f64]],
        labels: &[u8],
        weights: ClassWeights,
        masks: Option<&[Option<Vec<f64>>]>,
    ) -> (f64, HeadGrads, Vec<Vec<f64>>) {
        let n = batch.len() as f64;
        let mut grads = HeadGrads::zeros_like(self);
        let mut loss = 0.0;
        let mut dxs = Vec::with_capacity(batch.len());
        for (i, (x, &y)) in batch.iter().zip(labels).enumerate() {
            let mask = masks.and_then(|m| m[i].as_deref());
            let cache = self.forward_cache(x, mask);
            loss += weighted_bce(cache.logit, y, weights);
            let dlogit = weights.of(y) * (sigmoid(cache.logit) - f64::from(y)) / n;
            let dx = self.backward(&cache, dlogit, &mut grads);
            dxs.push(dx);
        }
        (loss / n, grads, dxs)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.w, &mut l.b])
            .collect()
    }
}

impl HeadGrads {
    pub fn flat(&self) -> Vec<&Vec<f64>> {
        self.layers.iter().flat_map(|(w, b)| [w, b]).collect()
    }

    pub fn add(&mut self, other: &HeadGrads) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            w.iter_mut().zip(ow).for_each(|(a, c)| *a += c);
            b.iter_mut().zip(ob).for_each(|(a, c)| *a += c);
        }
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.scale(s);
        self
    }
}

/// Evaluation-mode probabilities and mean weighted loss.
pub fn forward_bce(
    head: &Head,
    features: &[Vec<f64>],
    labels: &[u8],
    weights: ClassWeights,
) -> Result<(Vec<f64>, f64)> {
    if features.len() != labels.len() || features.is_empty() {
        return Err(Error::InvalidInput("features and labels must be nonempty and aligned".into()));
    }
    let mut probs = Vec::with_capacity(features.len());
    let mut loss = 0.0;
    for (x, &y) in features.iter().zip(labels) {
        if x.len() != head.feature_dim {
            return Err(Error::InvalidInput(format!(
                "feature length {} != head input {}",
                x.len(),
                head.feature_dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("non-finite feature".into()));
        }
        if y > 1 {
            return Err(Error::InvalidInput("labels must be 0 or 1".into()));
        }
        let z = head.logit(x);
        probs.push(sigmoid(z));
        loss += weighted_bce(z, y, weights);
    }
    Ok((probs, loss / labels.len() as f64))
}

fn encode(v: &[f64]) -> String {
    let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
    B64.encode(bytes)
}

fn decode(s: &str, len: usize) -> std::result::Result<Vec<f64>, String> {
    let bytes = B64.decode(s).map_err(|e| e.to_string())?;
    if bytes.len() != len * 8 {
        return Err(format!("expected {} values, found {} bytes", len, bytes.len()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    n_in: usize,
    n_out: usize,
    weight: String,
    bias: String,
}

/// Portable head file: a small header plus little-endian f64 arrays in base64.
#[derive(Serialize, Deserialize)]
pub struct HeadFile {
    feature_dim: usize,
    hidden_layers: Vec<usize>,
    activation: Activation,
    dropout: f64,
    bias: f64,
    input_shift: String,
    input_scale: String,
    layers: Vec<LayerFile>,
}

impl From<Head> for HeadFile {
    fn from(h: Head) -> Self {
        HeadFile {
            feature_dim: h.feature_dim,
            hidden_layers: h.hidden_layers(),
            activation: h.activation,
            dropout: h.dropout,
            bias: h.output_bias(),
            input_shift: encode(&h.input_shift),
            input_scale: encode(&h.input_scale),
            layers: h
                .layers
                .iter()
                .map(|l| LayerFile {
                    n_in: l.n_in,
                    n_out: l.n_out,
                    weight: encode(&l.w),
                    bias: encode(&l.b),
                })
                .collect(),
        }
    }
}

impl TryFrom<HeadFile> for Head {
    type Error = String;

    fn try_from(f: HeadFile) -> std::result::Result<Self, String> {
        let layers = f
            .layers
            .iter()
            .map(|l| {
                Ok(Dense {
                    n_in: l.n_in,
                    n_out: l.n_out,
                    w: decode(&l.weight, l.n_in * l.n_out)?,
                    b: decode(&l.bias, l.n_out)?,
                })
            })
            .collect::<std::result::Result<Vec<_>, String>>()?;
        let widths_ok = !layers.is_empty()
            && layers[0].n_in == f.feature_dim
            && layers.windows(2).all(|w| w[0].n_out == w[1].n_in)
            && layers.last().is_some_and(|l| l.n_out == 1);
        if !widths_ok {
            return Err("inconsistent layer widths in head file".into());
        }
        Ok(Head {
            feature_dim: f.feature_dim,
            activation: f.activation,
            dropout: f.dropout,
            input_shift: decode(&f.input_shift, f.feature_dim)?,
            input_scale: decode(&f.input_scale, f.feature_dim)?,
            layers,
        })
    }
}
