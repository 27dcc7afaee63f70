//! Task heads and the joint forward/backward pass.
//!
//! Each head is `dense → GELU → layer norm → linear`, applied to the shared
//! encoder output:
//!
//! ```text
//! logits = LN(gelu(h·W1 + b1)) · W2 + b2
//! ```
//!
//! Gradients are accumulated by hand-written reverse mode through this fixed
//! stack, including the encoder projection in surrogate mode.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::Sample;
use crate::encoder::{self, EncoderConfig, EncoderInput, EncoderMode, EncoderParams};
use crate::error::{Error, Result};
use crate::labels::{LabelTriple, Task, TaskMask};
use crate::tensor::Matrix;

/// Probabilities below this are clamped before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact GELU, `x·Φ(x)`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

/// Derivative of [`gelu`]: `Φ(x) + x·φ(x)`.
pub fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2));
    let pdf = FRAC_1_SQRT_2PI * (-0.5 * x * x).exp();
    cdf + x * pdf
}

/// Layer normalization with biased variance.
pub fn layer_norm(v: &[f64], gain: &[f64], bias: &[f64], eps: f64) -> Vec<f64> {
    let (xhat, _) = normalize(v, eps);
    xhat.iter()
        .zip(gain)
        .zip(bias)
        .map(|((x, g), b)| g * x + b)
        .collect()
}

fn normalize(v: &[f64], eps: f64) -> (Vec<f64>, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let inv_std = 1.0 / (var + eps).sqrt();
    (v.iter().map(|x| (x - mean) * inv_std).collect(), inv_std)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub layer_norm_eps: f64,
}

/// Head settings shared by all three heads; input width and class count are
/// derived from the encoder and the task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadSettings {
    pub hidden_dim: usize,
    pub layer_norm_eps: f64,
}

impl Default for HeadSettings {
    fn default() -> Self {
        HeadSettings {
            hidden_dim: 64,
            layer_norm_eps: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub head: HeadSettings,
}

impl ModelConfig {
    pub fn head_config(&self, task: Task) -> HeadConfig {
        HeadConfig {
            input_dim: self.encoder.dim,
            hidden_dim: self.head.hidden_dim,
            num_classes: task.num_classes(),
            layer_norm_eps: self.head.layer_norm_eps,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut problems = self.encoder.validate();
        if self.head.hidden_dim == 0 {
            problems.push("head.hidden_dim must be >= 1".into());
        }
        if !(self.head.layer_norm_eps > 0.0 && self.head.layer_norm_eps.is_finite()) {
            problems.push("head.layer_norm_eps must be positive".into());
        }
        problems
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub ln_gain: Vec<f64>,
    pub ln_bias: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl HeadParams {
    pub fn zeros(cfg: &HeadConfig) -> Self {
        HeadParams {
            w1: Matrix::zeros(cfg.input_dim, cfg.hidden_dim),
            b1: vec![0.0; cfg.hidden_dim],
            ln_gain: vec![0.0; cfg.hidden_dim],
            ln_bias: vec![0.0; cfg.hidden_dim],
            w2: Matrix::zeros(cfg.hidden_dim, cfg.num_classes),
            b2: vec![0.0; cfg.num_classes],
        }
    }

    fn init(cfg: &HeadConfig, rng: &mut impl Rng) -> Self {
        let std1 = 1.0 / (cfg.input_dim as f64).sqrt();
        let std2 = 1.0 / (cfg.hidden_dim as f64).sqrt();
        HeadParams {
            w1: Matrix::from_fn(cfg.input_dim, cfg.hidden_dim, |_, _| std1 * rng.sample::<f64, _>(StandardNormal)),
            b1: vec![0.0; cfg.hidden_dim],
            ln_gain: vec![1.0; cfg.hidden_dim],
            ln_bias: vec![0.0; cfg.hidden_dim],
            w2: Matrix::from_fn(cfg.hidden_dim, cfg.num_classes, |_, _| std2 * rng.sample::<f64, _>(StandardNormal)),
            b2: vec![0.0; cfg.num_classes],
        }
    }

    fn check(&self, cfg: &HeadConfig) -> Result<()> {
        let checks = [
            ("w1 rows", cfg.input_dim, self.w1.rows),
            ("w1 cols", cfg.hidden_dim, self.w1.cols),
            ("b1", cfg.hidden_dim, self.b1.len()),
            ("ln_gain", cfg.hidden_dim, self.ln_gain.len()),
            ("ln_bias", cfg.hidden_dim, self.ln_bias.len()),
            ("w2 rows", cfg.hidden_dim, self.w2.rows),
            ("w2 cols", cfg.num_classes, self.w2.cols),
            ("b2", cfg.num_classes, self.b2.len()),
        ];
        for (context, expected, actual) in checks {
            if expected != actual {
                return Err(Error::Shape {
                    context: context.into(),
                    expected,
                    actual,
                });
            }
        }
        Ok(())
    }
}

/// Intermediate values of one head, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct HeadTrace {
    z1: Vec<f64>,
    xhat: Vec<f64>,
    inv_std: f64,
    y: Vec<f64>,
    pub logits: Vec<f64>,
}

fn head_trace(h: &[f64], p: &HeadParams, cfg: &HeadConfig) -> Result<HeadTrace> {
    if h.len() != cfg.input_dim {
        return Err(Error::Shape {
            context: "head input".into(),
            expected: cfg.input_dim,
            actual: h.len(),
        });
    }
    p.check(cfg)?;
    let mut z1 = p.w1.vec_mul(h);
    for (z, b) in z1.iter_mut().zip(&p.b1) {
        *z += b;
    }
    let a: Vec<f64> = z1.iter().map(|&z| gelu(z)).collect();
    let (xhat, inv_std) = normalize(&a, cfg.layer_norm_eps);
    let y: Vec<f64> = xhat
        .iter()
        .zip(&p.ln_gain)
        .zip(&p.ln_bias)
        .map(|((x, g), b)| g * x + b)
        .collect();
    let mut logits = p.w2.vec_mul(&y);
    for (l, b) in logits.iter_mut().zip(&p.b2) {
        *l += b;
    }
    Ok(HeadTrace {
        z1,
        xhat,
        inv_std,
        y,
        logits,
    })
}

pub fn head_forward(h: &[f64], p: &HeadParams, cfg: &HeadConfig) -> Result<Vec<f64>> {
    Ok(head_trace(h, p, cfg)?.logits)
}

/// Backpropagates `dlogits` through a head, accumulating into `grad` and
/// returning the gradient with respect to the head input.
fn head_backward(h: &[f64], p: &HeadParams, trace: &HeadTrace, dlogits: &[f64], grad: &mut HeadParams) -> Vec<f64> {
    grad.w2.add_outer(&trace.y, dlogits);
    for (g, d) in grad.b2.iter_mut().zip(dlogits) {
        *g += d;
    }
    let dy = p.w2.mul_vec(dlogits);
    let n = dy.len() as f64;
    let mut dxhat = Vec::with_capacity(dy.len());
    for (i, &d) in dy.iter().enumerate() {
        grad.ln_gain[i] += d * trace.xhat[i];
        grad.ln_bias[i] += d;
        dxhat.push(d * p.ln_gain[i]);
    }
    let mean_d = dxhat.iter().sum::<f64>() / n;
    let mean_dx = dxhat.iter().zip(&trace.xhat).map(|(d, x)| d * x).sum::<f64>() / n;
    let dz1: Vec<f64> = (0..dxhat.len())
        .map(|i| {
            let da = trace.inv_std * (dxhat[i] - mean_d - trace.xhat[i] * mean_dx);
            da * gelu_grad(trace.z1[i])
        })
        .collect();
    grad.w1.add_outer(h, &dz1);
    for (g, d) in grad.b1.iter_mut().zip(&dz1) {
        *g += d;
    }
    p.w1.mul_vec(&dz1)
}

/// One probability distribution per head. HSC follows the canonical
/// category order, `None` first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbTriple {
    pub offd: Vec<f64>,
    pub hsd: Vec<f64>,
    pub hsc: Vec<f64>,
}

impl ProbTriple {
    pub fn head(&self, task: Task) -> &[f64] {
        match task {
            Task::Offd => &self.offd,
            Task::Hsd => &self.hsd,
            Task::Hsc => &self.hsc,
        }
    }

    pub fn head_mut(&mut self, task: Task) -> &mut Vec<f64> {
        match task {
            Task::Offd => &mut self.offd,
            Task::Hsd => &mut self.hsd,
            Task::Hsc => &mut self.hsc,
        }
    }

    pub fn uniform() -> Self {
        ProbTriple {
            offd: vec![0.5; 2],
            hsd: vec![0.5; 2],
            hsc: vec![1.0 / 7.0; 7],
        }
    }

    /// Checks widths and that each head is a distribution (±1e-6).
    pub fn validate(&self) -> Result<()> {
        for task in Task::ALL {
            let p = self.head(task);
            if p.len() != task.num_classes() {
                return Err(Error::Shape {
                    context: format!("{task} probabilities"),
                    expected: task.num_classes(),
                    actual: p.len(),
                });
            }
            let sum: f64 = p.iter().sum();
            if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
                return Err(Error::Mismatch(format!("{task} probabilities do not form a distribution")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub encoder: EncoderParams,
    pub offd: HeadParams,
    pub hsd: HeadParams,
    pub hsc: HeadParams,
}

/// Read-only view of one named parameter tensor.
pub struct ParamView<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

/// Whether weight decay applies to a tensor (weights only; not biases or
/// layer-norm vectors).
pub fn decays(name: &str) -> bool {
    let leaf = name.rsplit('.').next().unwrap_or(name);
    matches!(leaf, "w1" | "w2" | "projection")
}

/// The head a tensor belongs to, or `None` for the shared encoder.
pub fn tensor_task(name: &str) -> Option<Task> {
    name.split('.').next().and_then(|p| p.parse().ok())
}

impl ModelParams {
    /// Random initialization: N(0,1) projection, fan-in scaled dense layers,
    /// unit layer-norm gain, zero biases.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let projection = match cfg.encoder.mode {
            EncoderMode::Surrogate => Some(Matrix::from_fn(cfg.encoder.hash_buckets, cfg.encoder.dim, |_, _| {
                rng.sample::<f64, _>(StandardNormal)
            })),
            EncoderMode::Passthrough => None,
        };
        ModelParams {
            encoder: EncoderParams { projection },
            offd: HeadParams::init(&cfg.head_config(Task::Offd), &mut rng),
            hsd: HeadParams::init(&cfg.head_config(Task::Hsd), &mut rng),
            hsc: HeadParams::init(&cfg.head_config(Task::Hsc), &mut rng),
        }
    }

    pub fn zeros(cfg: &ModelConfig) -> Self {
        let projection = match cfg.encoder.mode {
            EncoderMode::Surrogate => Some(Matrix::zeros(cfg.encoder.hash_buckets, cfg.encoder.dim)),
            EncoderMode::Passthrough => None,
        };
        ModelParams {
            encoder: EncoderParams { projection },
            offd: HeadParams::zeros(&cfg.head_config(Task::Offd)),
            hsd: HeadParams::zeros(&cfg.head_config(Task::Hsd)),
            hsc: HeadParams::zeros(&cfg.head_config(Task::Hsc)),
        }
    }

    pub fn head(&self, task: Task) -> &HeadParams {
        match task {
            Task::Offd => &self.offd,
            Task::Hsd => &self.hsd,
            Task::Hsc => &self.hsc,
        }
    }

    pub fn head_mut(&mut self, task: Task) -> &mut HeadParams {
        match task {
            Task::Offd => &mut self.offd,
            Task::Hsd => &mut self.hsd,
            Task::Hsc => &mut self.hsc,
        }
    }

    /// All tensors in a fixed order with dotted names such as `hsc.w1`.
    pub fn tensors(&self) -> Vec<ParamView<'_>> {
        let mut out = Vec::new();
        if let Some(w) = &self.encoder.projection {
            out.push(ParamView {
                name: "encoder.projection".into(),
                shape: vec![w.rows, w.cols],
                data: &w.data,
            });
        }
        for task in Task::ALL {
            let h = self.head(task);
            let p = task.as_str();
            out.push(ParamView { name: format!("{p}.w1"), shape: vec![h.w1.rows, h.w1.cols], data: &h.w1.data });
            out.push(ParamView { name: format!("{p}.b1"), shape: vec![h.b1.len()], data: &h.b1 });
            out.push(ParamView { name: format!("{p}.ln_gain"), shape: vec![h.ln_gain.len()], data: &h.ln_gain });
            out.push(ParamView { name: format!("{p}.ln_bias"), shape: vec![h.ln_bias.len()], data: &h.ln_bias });
            out.push(ParamView { name: format!("{p}.w2"), shape: vec![h.w2.rows, h.w2.cols], data: &h.w2.data });
            out.push(ParamView { name: format!("{p}.b2"), shape: vec![h.b2.len()], data: &h.b2 });
        }
        out
    }

    /// Mutable tensors in the same order and naming as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        if let Some(w) = &mut self.encoder.projection {
            out.push(("encoder.projection".into(), &mut w.data));
        }
        for (task, h) in [(Task::Offd, &mut self.offd), (Task::Hsd, &mut self.hsd), (Task::Hsc, &mut self.hsc)] {
            let p = task.as_str();
            out.push((format!("{p}.w1"), &mut h.w1.data));
            out.push((format!("{p}.b1"), &mut h.b1));
            out.push((format!("{p}.ln_gain"), &mut h.ln_gain));
            out.push((format!("{p}.ln_bias"), &mut h.ln_bias));
            out.push((format!("{p}.w2"), &mut h.w2.data));
            out.push((format!("{p}.b2"), &mut h.b2));
        }
        out
    }

    pub fn set_zero(&mut self) {
        for (_, t) in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Checks head widths against the encoder width.
    pub fn check(&self, cfg: &ModelConfig) -> Result<()> {
        for task in Task::ALL {
            self.head(task).check(&cfg.head_config(task))?;
        }
        match (&self.encoder.projection, cfg.encoder.mode) {
            (Some(w), EncoderMode::Surrogate) if w.rows == cfg.encoder.hash_buckets && w.cols == cfg.encoder.dim => Ok(()),
            (None, EncoderMode::Passthrough) => Ok(()),
            _ => Err(Error::Checkpoint("encoder parameters do not match encoder config".into())),
        }
    }
}

/// Probabilities of all three heads for a prepared input.
pub fn forward_input(input: &EncoderInput, m: &ModelParams, cfg: &ModelConfig) -> Result<ProbTriple> {
    let h = encoder::encode_input(input, &m.encoder)?;
    let probs = |task: Task| -> Result<Vec<f64>> {
        Ok(softmax(&head_forward(&h, m.head(task), &cfg.head_config(task))?))
    };
    Ok(ProbTriple {
        offd: probs(Task::Offd)?,
        hsd: probs(Task::Hsd)?,
        hsc: probs(Task::Hsc)?,
    })
}

/// Encodes once and runs all three heads on the shared representation.
pub fn model_forward(sample: &Sample, m: &ModelParams, cfg: &ModelConfig) -> Result<ProbTriple> {
    forward_input(&encoder::prepare(sample, &cfg.encoder)?, m, cfg)
}

fn nll(p: f64) -> f64 {
    -p.max(PROB_FLOOR).ln()
}

/// Sum of the three heads' negative log-likelihoods.
pub fn joint_nll(pt: &ProbTriple, gold: &LabelTriple) -> f64 {
    masked_nll(pt, gold, TaskMask::ALL)
}

/// Joint NLL restricted to the heads in `mask`.
pub fn masked_nll(pt: &ProbTriple, gold: &LabelTriple, mask: TaskMask) -> f64 {
    mask.tasks().map(|t| nll(pt.head(t)[gold.class_of(t)])).sum()
}

/// Forward and backward pass for one sample. Adds the gradient of the masked
/// joint NLL into `grads` and returns the loss. Heads outside the mask get no
/// gradient.
pub fn accumulate_gradients(
    input: &EncoderInput,
    gold: &LabelTriple,
    m: &ModelParams,
    cfg: &ModelConfig,
    mask: TaskMask,
    grads: &mut ModelParams,
) -> Result<f64> {
    let h = encoder::encode_input(input, &m.encoder)?;
    let mut dh = vec![0.0; h.len()];
    let mut loss = 0.0;
    for task in mask.tasks() {
        let head_cfg = cfg.head_config(task);
        let trace = head_trace(&h, m.head(task), &head_cfg)?;
        let mut dlogits = softmax(&trace.logits);
        let gold_class = gold.class_of(task);
        let p_gold = dlogits[gold_class];
        loss += nll(p_gold);
        if p_gold < PROB_FLOOR {
            // clamped region: the loss is locally constant
            continue;
        }
        dlogits[gold_class] -= 1.0;
        let dhi = head_backward(&h, m.head(task), &trace, &dlogits, grads.head_mut(task));
        for (a, b) in dh.iter_mut().zip(dhi) {
            *a += b;
        }
    }
    if let (EncoderInput::Features(f), Some(gw)) = (input, grads.encoder.projection.as_mut()) {
        for &(idx, v) in &f.entries {
            for (g, d) in gw.row_mut(idx as usize).iter_mut().zip(&dh) {
                *g += v * d;
            }
        }
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gelu_values() {
        assert_eq!(gelu(0.0), 0.0);
        // 1·Φ(1), Φ(1) = 0.841344746068543 (high-precision normal CDF)
        assert!((gelu(1.0) - 0.841_344_746).abs() < 1e-5);
        assert!(gelu(-10.0).abs() < 1e-8);
    }

    #[test]
    fn gelu_grad_matches_difference() {
        for x in [-3.0, -0.7, 0.0, 0.4, 2.5] {
            let fd = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6;
            assert!((gelu_grad(x) - fd).abs() < 1e-7);
        }
    }

    #[test]
    fn layer_norm_examples() {
        assert_eq!(layer_norm(&[1.0, 1.0, 1.0], &[1.0; 3], &[0.0; 3], 1e-5), vec![0.0; 3]);
        assert_eq!(layer_norm(&[1.0, -1.0], &[1.0; 2], &[0.0; 2], 0.0), vec![1.0, -1.0]);
        assert_eq!(layer_norm(&[3.0, -7.0, 0.5], &[0.0; 3], &[2.5; 3], 1e-5), vec![2.5; 3]);
    }

    fn small_cfg() -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                dim: 5,
                hash_buckets: 16,
                ..EncoderConfig::default()
            },
            head: HeadSettings {
                hidden_dim: 4,
                layer_norm_eps: 1e-5,
            },
        }
    }

    /// Scalar-loop reference of the head formula.
    #[allow(clippy::needless_range_loop)]
    fn reference_head(h: &[f64], p: &HeadParams, eps: f64) -> Vec<f64> {
        let hidden = p.b1.len();
        let classes = p.b2.len();
        let mut a = vec![0.0; hidden];
        for j in 0..hidden {
            let mut z = p.b1[j];
            for i in 0..h.len() {
                z += h[i] * p.w1.data[i * hidden + j];
            }
            let phi = 0.5 * (1.0 + libm::erf(z / 2f64.sqrt()));
            a[j] = z * phi;
        }
        let mut mean = 0.0;
        for v in &a {
            mean += v;
        }
        mean /= hidden as f64;
        let mut var = 0.0;
        for v in &a {
            var += (v - mean) * (v - mean);
        }
        var /= hidden as f64;
        let mut out = vec![0.0; classes];
        for k in 0..classes {
            let mut l = p.b2[k];
            for j in 0..hidden {
                let y = p.ln_gain[j] * (a[j] - mean) / (var + eps).sqrt() + p.ln_bias[j];
                l += y * p.w2.data[j * classes + k];
            }
            out[k] = l;
        }
        out
    }

    #[test]
    fn head_matches_reference_loop() {
        let cfg = small_cfg();
        for seed in 0..10 {
            let params = ModelParams::init(&cfg, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let h: Vec<f64> = (0..5).map(|_| rand::Rng::random_range(&mut rng, -2.0..2.0)).collect();
            for task in Task::ALL {
                let got = head_forward(&h, params.head(task), &cfg.head_config(task)).unwrap();
                let want = reference_head(&h, params.head(task), 1e-5);
                for (g, w) in got.iter().zip(want) {
                    assert!((g - w).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn head_linear_collapse_and_scaling() {
        let cfg = small_cfg();
        let hc = cfg.head_config(Task::Hsc);
        let mut p = HeadParams::zeros(&hc);
        p.b2 = (0..7).map(|i| i as f64 * 0.1).collect();
        let h = [0.3, -1.0, 2.0, 0.0, 1.0];
        assert_eq!(head_forward(&h, &p, &hc).unwrap(), p.b2);

        let params = ModelParams::init(&cfg, 3);
        let mut p = params.hsc.clone();
        p.b2 = vec![0.5; 7];
        let base = head_forward(&h, &p, &hc).unwrap();
        p.w2.data.iter_mut().for_each(|w| *w *= 2.0);
        let doubled = head_forward(&h, &p, &hc).unwrap();
        for (b, d) in base.iter().zip(doubled) {
            assert!(((d - 0.5) - 2.0 * (b - 0.5)).abs() < 1e-12);
        }
        assert!(head_forward(&h[..4], &p, &hc).is_err());
    }

    #[test]
    fn zeroed_model_is_uniform() {
        let cfg = small_cfg();
        let params = ModelParams::zeros(&cfg);
        let pt = model_forward(&Sample::new("a", "some words here", None), &params, &cfg).unwrap();
        assert_eq!(pt.offd, vec![0.5, 0.5]);
        assert_eq!(pt.hsd, vec![0.5, 0.5]);
        for p in &pt.hsc {
            assert!((p - 1.0 / 7.0).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_is_a_distribution_and_deterministic() {
        let cfg = small_cfg();
        let params = ModelParams::init(&cfg, 1);
        let a = model_forward(&Sample::new("a", "@x  hello world", None), &params, &cfg).unwrap();
        let b = model_forward(&Sample::new("b", "@y hello\tworld", None), &params, &cfg).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        assert!(a.hsc.iter().all(|p| *p > 0.0));
    }

    #[test]
    fn nll_examples() {
        let gold = LabelTriple::new(true, true, crate::labels::HsCategory::Race).unwrap();
        let mut perfect = ProbTriple {
            offd: vec![0.0, 1.0],
            hsd: vec![0.0, 1.0],
            hsc: vec![0.0; 7],
        };
        perfect.hsc[2] = 1.0;
        assert_eq!(joint_nll(&perfect, &gold), 0.0);
        let u = joint_nll(&ProbTriple::uniform(), &gold);
        assert!((u - (2.0 * 2f64.ln() + 7f64.ln())).abs() < 1e-12);
        assert!((u - 3.3322).abs() < 1e-4);
        let only = masked_nll(&ProbTriple::uniform(), &gold, TaskMask::only(Task::Offd));
        assert!((only - 2f64.ln()).abs() < 1e-12);
        let mut zero = ProbTriple::uniform();
        zero.offd = vec![1.0, 0.0];
        assert!((masked_nll(&zero, &gold, TaskMask::only(Task::Offd)) - 1e-12f64.ln().abs()).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn softmax_shift_invariance(logits in proptest::collection::vec(-20.0f64..20.0, 2..8), c in -50.0f64..50.0) {
            let shifted: Vec<f64> = logits.iter().map(|l| l + c).collect();
            for (a, b) in softmax(&logits).iter().zip(softmax(&shifted)) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn masked_heads_get_no_gradient() {
        let cfg = small_cfg();
        let params = ModelParams::init(&cfg, 4);
        let mut grads = ModelParams::zeros(&cfg);
        let input = encoder::prepare(&Sample::new("a", "alpha beta", None), &cfg.encoder).unwrap();
        let gold = LabelTriple::CLEAN;
        accumulate_gradients(&input, &gold, &params, &cfg, TaskMask::only(Task::Offd), &mut grads).unwrap();
        for view in grads.tensors() {
            let nonzero = view.data.iter().any(|v| *v != 0.0);
            match tensor_task(&view.name) {
                Some(Task::Hsd) | Some(Task::Hsc) => assert!(!nonzero, "{}", view.name),
                _ => {}
            }
        }
        assert!(grads.offd.w2.data.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn decay_set() {
        assert!(decays("encoder.projection"));
        assert!(decays("hsc.w1"));
        assert!(!decays("hsc.b1"));
        assert!(!decays("offd.ln_gain"));
        assert!(!decays("offd.ln_bias"));
        assert_eq!(tensor_task("hsd.w2"), Some(Task::Hsd));
        assert_eq!(tensor_task("encoder.projection"), None);
    }
}
