//! Trainable feature extractors and the supervised pre-training stage.
//!
//! Parameters live in one flat `Vec<f64>` so that the optimizer, checkpoints
//! and gradient checks can treat every backbone uniformly. Each backbone
//! provides a forward pass that records a [`Tape`] and a backward pass that
//! accumulates parameter gradients from an embedding gradient.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::episodes::DatasetSplit;
use crate::error::{Error, Result};
use crate::optim::{Sgd, SgdConfig};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Arch {
    /// `linear -> relu -> linear`, for vector samples.
    Mlp2 { hidden: usize },
    /// Four `conv3x3 -> relu -> maxpool2` blocks and a linear projection, for
    /// `[C, H, W]` images with `H, W >= 16`.
    Conv4 { channels: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub arch: Arch,
    pub embed_dim: usize,
    pub input_shape: Vec<usize>,
    pub seed: u64,
}

impl EncoderConfig {
    pub fn mlp2(input_dim: usize, hidden: usize, embed_dim: usize, seed: u64) -> Self {
        EncoderConfig { arch: Arch::Mlp2 { hidden }, embed_dim, input_shape: vec![input_dim], seed }
    }

    pub fn input_dim(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim < 2 {
            return Err(Error::invalid(format!("embed_dim must be >= 2, got {}", self.embed_dim)));
        }
        match self.arch {
            Arch::Mlp2 { hidden } => {
                if hidden == 0 || self.input_dim() == 0 {
                    return Err(Error::invalid("mlp-2 needs positive input and hidden sizes"));
                }
            }
            Arch::Conv4 { channels } => {
                let ok = self.input_shape.len() == 3
                    && self.input_shape[0] > 0
                    && self.input_shape[1] >= 16
                    && self.input_shape[2] >= 16
                    && channels > 0;
                if !ok {
                    return Err(Error::invalid(format!(
                        "conv-4 needs [C, H, W] input with H, W >= 16, got {:?}",
                        self.input_shape
                    )));
                }
            }
        }
        Ok(())
    }

    fn layout(&self) -> Layout {
        match self.arch {
            Arch::Mlp2 { hidden } => {
                let d = self.input_dim();
                let e = self.embed_dim;
                let w1 = 0;
                let b1 = w1 + hidden * d;
                let w2 = b1 + hidden;
                let b2 = w2 + e * hidden;
                Layout::Mlp2 { d, hidden, e, w1, b1, w2, b2, total: b2 + e }
            }
            Arch::Conv4 { channels } => {
                let (mut c, mut h, mut w) = (self.input_shape[0], self.input_shape[1], self.input_shape[2]);
                let mut offset = 0;
                let mut blocks = Vec::with_capacity(4);
                for _ in 0..4 {
                    let weight = offset;
                    let bias = weight + channels * c * 9;
                    offset = bias + channels;
                    blocks.push(ConvBlock { c_in: c, c_out: channels, h, w, weight, bias });
                    c = channels;
                    h /= 2;
                    w /= 2;
                }
                let features = c * h * w;
                let proj_w = offset;
                let proj_b = proj_w + self.embed_dim * features;
                Layout::Conv4 { blocks, features, e: self.embed_dim, proj_w, proj_b, total: proj_b + self.embed_dim }
            }
        }
    }

    pub fn num_params(&self) -> usize {
        self.layout().total()
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvBlock {
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    weight: usize,
    bias: usize,
}

#[derive(Debug, Clone)]
enum Layout {
    Mlp2 { d: usize, hidden: usize, e: usize, w1: usize, b1: usize, w2: usize, b2: usize, total: usize },
    Conv4 { blocks: Vec<ConvBlock>, features: usize, e: usize, proj_w: usize, proj_b: usize, total: usize },
}

impl Layout {
    fn total(&self) -> usize {
        match *self {
            Layout::Mlp2 { total, .. } | Layout::Conv4 { total, .. } => total,
        }
    }
}

/// Intermediate values of a forward pass needed by the backward pass.
#[derive(Debug, Clone)]
pub struct Tape(TapeInner);

#[derive(Debug, Clone)]
enum TapeInner {
    Mlp2 { x: Array2<f64>, z1: Array2<f64> },
    Conv4 { batch: usize, blocks: Vec<ConvTape>, features: Array2<f64> },
}

#[derive(Debug, Clone)]
struct ConvTape {
    input: Vec<f64>,
    pre: Vec<f64>,
    argmax: Vec<usize>,
}

/// Encoder parameters plus the number of optimizer updates applied so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderState {
    pub config: EncoderConfig,
    pub params: Vec<f64>,
    pub step: u64,
}

impl EncoderState {
    /// He-normal weights for layers followed by a ReLU, `N(0, 1/fan_in)` for
    /// the output layer, zero biases. Deterministic in `config.seed`.
    pub fn new(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        let mut params = vec![0.0; layout.total()];
        let mut rng = rng::stream(config.seed, "init", 0);
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize, gain: f64, rng: &mut Rng| {
            let normal = Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("valid std");
            params[range].iter_mut().for_each(|p| *p = normal.sample(rng));
        };
        match &layout {
            Layout::Mlp2 { d, hidden, e, w1, w2, .. } => {
                fill(*w1..w1 + hidden * d, *d, 2.0, &mut rng);
                fill(*w2..w2 + e * hidden, *hidden, 1.0, &mut rng);
            }
            Layout::Conv4 { blocks, features, e, proj_w, .. } => {
                for b in blocks {
                    fill(b.weight..b.bias, b.c_in * 9, 2.0, &mut rng);
                }
                fill(*proj_w..proj_w + e * features, *features, 1.0, &mut rng);
            }
        }
        Ok(EncoderState { config, params, step: 0 })
    }

    /// State with the given parameters; rejects wrong sizes and non-finite values.
    pub fn from_params(config: EncoderConfig, params: Vec<f64>, step: u64) -> Result<Self> {
        config.validate()?;
        let state = EncoderState { config, params, step };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        let expected = self.config.num_params();
        if self.params.len() != expected {
            return Err(Error::shape(format!("{} parameters, config needs {expected}", self.params.len())));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("encoder parameter".into()));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn embed_dim(&self) -> usize {
        self.config.embed_dim
    }

    pub fn encode(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward(batch)?.0)
    }

    pub fn forward(&self, batch: ArrayView2<f64>) -> Result<(Array2<f64>, Tape)> {
        forward_with(&self.config, &self.params, batch)
    }

    /// Adds `d(sum(grad_out * encode(x)))/d params` into `grads`.
    pub fn backward(&self, tape: &Tape, grad_out: ArrayView2<f64>, grads: &mut [f64]) {
        backward_with(&self.config, &self.params, tape, grad_out, grads)
    }
}

/// Forward pass with explicit parameters (used by gradient checks).
pub fn forward_with(config: &EncoderConfig, params: &[f64], batch: ArrayView2<f64>) -> Result<(Array2<f64>, Tape)> {
    let d = config.input_dim();
    if batch.ncols() != d {
        return Err(Error::shape(format!("batch has {} features, encoder expects {d}", batch.ncols())));
    }
    match config.layout() {
        Layout::Mlp2 { d, hidden, e, w1, b1, w2, b2, .. } => {
            let w1 = ArrayView2::from_shape((hidden, d), &params[w1..b1]).expect("layout");
            let w2 = ArrayView2::from_shape((e, hidden), &params[w2..b2]).expect("layout");
            let mut z1 = batch.dot(&w1.t());
            z1 += &ndarray::aview1(&params[b1..b1 + hidden]);
            let a1 = z1.mapv(relu);
            let mut out = a1.dot(&w2.t());
            out += &ndarray::aview1(&params[b2..b2 + e]);
            Ok((out, Tape(TapeInner::Mlp2 { x: batch.to_owned(), z1 })))
        }
        Layout::Conv4 { blocks, features, e, proj_w, proj_b, .. } => {
            let b = batch.nrows();
            let mut act = batch.as_standard_layout().iter().copied().collect::<Vec<_>>();
            let mut tapes = Vec::with_capacity(4);
            for blk in &blocks {
                let pre = conv3x3_forward(&act, b, blk, params);
                let relu: Vec<f64> = pre.iter().map(|&v| relu(v)).collect();
                let (pooled, argmax) = maxpool2_forward(&relu, b * blk.c_out, blk.h, blk.w);
                tapes.push(ConvTape { input: act, pre, argmax });
                act = pooled;
            }
            let feats = Array2::from_shape_vec((b, features), act).expect("layout");
            let wp = ArrayView2::from_shape((e, features), &params[proj_w..proj_b]).expect("layout");
            let mut out = feats.dot(&wp.t());
            out += &ndarray::aview1(&params[proj_b..proj_b + e]);
            Ok((out, Tape(TapeInner::Conv4 { batch: b, blocks: tapes, features: feats })))
        }
    }
}

pub fn backward_with(config: &EncoderConfig, params: &[f64], tape: &Tape, grad_out: ArrayView2<f64>, grads: &mut [f64]) {
    assert_eq!(grads.len(), params.len(), "gradient buffer size");
    match (config.layout(), &tape.0) {
        (Layout::Mlp2 { d, hidden, e, w1, b1, w2, b2, .. }, TapeInner::Mlp2 { x, z1 }) => {
            let w2v = ArrayView2::from_shape((e, hidden), &params[w2..b2]).expect("layout");
            let a1 = z1.mapv(relu);
            let dw2 = grad_out.t().dot(&a1);
            add_into(&mut grads[w2..b2], dw2.iter());
            add_into(&mut grads[b2..b2 + e], grad_out.sum_axis(Axis(0)).iter());
            let mut dz1 = grad_out.dot(&w2v);
            dz1.zip_mut_with(z1, |g, &z| {
                if z <= 0.0 {
                    *g = 0.0
                }
            });
            let dw1 = dz1.t().dot(x);
            debug_assert_eq!(dw1.dim(), (hidden, d));
            add_into(&mut grads[w1..b1], dw1.iter());
            add_into(&mut grads[b1..b1 + hidden], dz1.sum_axis(Axis(0)).iter());
        }
        (Layout::Conv4 { blocks, features, e, proj_w, proj_b, .. }, TapeInner::Conv4 { batch, blocks: tapes, features: feats }) => {
            let wp = ArrayView2::from_shape((e, features), &params[proj_w..proj_b]).expect("layout");
            add_into(&mut grads[proj_w..proj_b], grad_out.t().dot(feats).iter());
            add_into(&mut grads[proj_b..proj_b + e], grad_out.sum_axis(Axis(0)).iter());
            let mut d_act: Vec<f64> = grad_out.dot(&wp).iter().copied().collect();
            for (i, (blk, t)) in blocks.iter().zip(tapes).enumerate().rev() {
                let mut d_pre = vec![0.0; t.pre.len()];
                for (&src, &g) in t.argmax.iter().zip(&d_act) {
                    d_pre[src] += g;
                }
                for (g, &z) in d_pre.iter_mut().zip(&t.pre) {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                }
                d_act = conv3x3_backward(&t.input, &d_pre, *batch, blk, params, grads, i > 0);
            }
        }
        _ => panic!("tape does not match encoder architecture"),
    }
}

/// NaN-propagating ReLU.
fn relu(v: f64) -> f64 {
    if v < 0.0 {
        0.0
    } else {
        v
    }
}

fn add_into<'a>(dst: &mut [f64], src: impl Iterator<Item = &'a f64>) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

fn conv3x3_forward(input: &[f64], batch: usize, blk: &ConvBlock, params: &[f64]) -> Vec<f64> {
    let ConvBlock { c_in, c_out, h, w, weight, bias } = *blk;
    let wts = &params[weight..bias];
    let mut out = vec![0.0; batch * c_out * h * w];
    for b in 0..batch {
        for o in 0..c_out {
            let plane = &mut out[(b * c_out + o) * h * w..(b * c_out + o + 1) * h * w];
            plane.iter_mut().for_each(|v| *v = params[bias + o]);
            for c in 0..c_in {
                let src = &input[(b * c_in + c) * h * w..(b * c_in + c + 1) * h * w];
                let k = &wts[(o * c_in + c) * 9..(o * c_in + c + 1) * 9];
                for ki in 0..3 {
                    for kj in 0..3 {
                        let wv = k[ki * 3 + kj];
                        for i in 0..h {
                            let si = i as isize + ki as isize - 1;
                            if si < 0 || si >= h as isize {
                                continue;
                            }
                            let srow = &src[si as usize * w..(si as usize + 1) * w];
                            let orow = &mut plane[i * w..(i + 1) * w];
                            let (j0, j1) = (if kj == 0 { 1 } else { 0 }, if kj == 2 { w - 1 } else { w });
                            for j in j0..j1 {
                                orow[j] += wv * srow[j + kj - 1];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight/bias gradients; returns the input gradient when `need_input`.
fn conv3x3_backward(
    input: &[f64],
    d_out: &[f64],
    batch: usize,
    blk: &ConvBlock,
    params: &[f64],
    grads: &mut [f64],
    need_input: bool,
) -> Vec<f64> {
    let ConvBlock { c_in, c_out, h, w, weight, bias } = *blk;
    let mut d_in = if need_input { vec![0.0; input.len()] } else { Vec::new() };
    for b in 0..batch {
        for o in 0..c_out {
            let g = &d_out[(b * c_out + o) * h * w..(b * c_out + o + 1) * h * w];
            grads[bias + o] += g.iter().sum::<f64>();
            for c in 0..c_in {
                let base = (b * c_in + c) * h * w;
                let kbase = weight + (o * c_in + c) * 9;
                for ki in 0..3 {
                    for kj in 0..3 {
                        let wv = params[kbase + ki * 3 + kj];
                        let mut acc = 0.0;
                        for i in 0..h {
                            let si = i as isize + ki as isize - 1;
                            if si < 0 || si >= h as isize {
                                continue;
                            }
                            let si = si as usize;
                            let (j0, j1) = (if kj == 0 { 1 } else { 0 }, if kj == 2 { w - 1 } else { w });
                            for j in j0..j1 {
                                let gv = g[i * w + j];
                                let sidx = base + si * w + j + kj - 1;
                                acc += gv * input[sidx];
                                if need_input {
                                    d_in[sidx] += gv * wv;
                                }
                            }
                        }
                        grads[kbase + ki * 3 + kj] += acc;
                    }
                }
            }
        }
    }
    d_in
}

/// 2x2 max pooling with stride 2 over `planes` planes of `h x w`; odd edges are dropped.
fn maxpool2_forward(x: &[f64], planes: usize, h: usize, w: usize) -> (Vec<f64>, Vec<usize>) {
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(planes * ho * wo);
    let mut argmax = Vec::with_capacity(planes * ho * wo);
    for p in 0..planes {
        for i in 0..ho {
            for j in 0..wo {
                let mut best = p * h * w + 2 * i * w + 2 * j;
                for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = p * h * w + (2 * i + di) * w + 2 * j + dj;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    (out, argmax)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: SgdConfig,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            epochs: 10,
            batch_size: 64,
            optimizer: SgdConfig { lr: 0.05, momentum: 0.9, weight_decay: 5e-4 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct Pretrained {
    pub state: EncoderState,
    pub history: Vec<PretrainEpoch>,
    /// Accuracy of the temporary linear head over the whole split after training.
    pub final_accuracy: f64,
}

/// Supervised classification over all classes of `split` with a temporary
/// linear head on top of the encoder. The head is discarded afterwards.
pub fn pretrain(state: &EncoderState, split: &DatasetSplit, cfg: &PretrainConfig, rng: &mut Rng) -> Result<Pretrained> {
    if split.is_empty() {
        return Err(Error::invalid("pre-training split is empty"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch_size must be positive"));
    }
    cfg.optimizer.validate()?;
    if split.sample_dim() != state.config.input_dim() {
        return Err(Error::shape(format!(
            "split samples have {} features, encoder expects {}",
            split.sample_dim(),
            state.config.input_dim()
        )));
    }
    let mut state = state.clone();
    if cfg.epochs == 0 {
        return Ok(Pretrained { state, history: Vec::new(), final_accuracy: f64::NAN });
    }

    let classes = split.num_classes();
    let e = state.embed_dim();
    let normal = Normal::new(0.0, (1.0 / e as f64).sqrt()).expect("valid std");
    let mut head_w = Array2::from_shape_fn((classes, e), |_| normal.sample(rng));
    let mut head_b = ndarray::Array1::<f64>::zeros(classes);
    let mut enc_opt = Sgd::new(cfg.optimizer, state.num_params());
    let mut head_opt = Sgd::new(cfg.optimizer, classes * e + classes);

    let mut order: Vec<usize> = (0..split.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let x = split.samples.select(Axis(0), chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| split.labels[i]).collect();
            let (emb, tape) = state.forward(x.view())?;
            let mut logits = emb.dot(&head_w.t());
            logits += &head_b;
            let bsz = chunk.len() as f64;
            let mut d_logits = Array2::<f64>::zeros(logits.dim());
            for (r, (row, &label)) in logits.rows().into_iter().zip(&y).enumerate() {
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                loss_sum += lse - row[label];
                let pred = row.iter().enumerate().fold(0, |best, (k, &v)| if v > row[best] { k } else { best });
                correct += usize::from(pred == label);
                for (k, &v) in row.iter().enumerate() {
                    d_logits[(r, k)] = ((v - lse).exp() - f64::from(u8::from(k == label))) / bsz;
                }
            }
            if !loss_sum.is_finite() {
                return Err(Error::Divergence(format!("pre-training loss became {loss_sum} in epoch {epoch}")));
            }
            let d_emb = d_logits.dot(&head_w);
            let mut head_grad: Vec<f64> = d_logits.t().dot(&emb).iter().copied().collect();
            head_grad.extend(d_logits.sum_axis(Axis(0)).iter());
            let mut head_params: Vec<f64> = head_w.iter().chain(head_b.iter()).copied().collect();
            head_opt.step(&mut head_params, &head_grad);
            head_w.as_slice_mut().expect("standard layout").copy_from_slice(&head_params[..classes * e]);
            head_b.as_slice_mut().expect("standard layout").copy_from_slice(&head_params[classes * e..]);

            let mut grads = vec![0.0; state.num_params()];
            state.backward(&tape, d_emb.view(), &mut grads);
            enc_opt.step(&mut state.params, &grads);
            state.step += 1;
        }
        if state.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence(format!("non-finite encoder parameter after epoch {epoch}")));
        }
        let n = split.len() as f64;
        history.push(PretrainEpoch { epoch, loss: loss_sum / n, accuracy: correct as f64 / n });
    }

    let emb = state.encode(split.samples.view())?;
    let mut logits = emb.dot(&head_w.t());
    logits += &head_b;
    let correct = logits
        .rows()
        .into_iter()
        .zip(&split.labels)
        .filter(|(row, &label)| {
            let pred = row.iter().enumerate().fold(0, |best, (k, &v)| if v > row[best] { k } else { best });
            pred == label
        })
        .count();
    let final_accuracy = correct as f64 / split.len() as f64;
    Ok(Pretrained { state, history, final_accuracy })
}

/// Splits a `[support; query]` embedding stack back into its two parts.
pub(crate) fn split_rows(x: &Array2<f64>, first: usize) -> (ArrayView2<'_, f64>, ArrayView2<'_, f64>) {
    (x.slice(s![..first, ..]), x.slice(s![first.., ..]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episodes::{make_synthetic_dataset, SyntheticParams};
    use rand::Rng as _;

    fn numeric_grad_check(config: EncoderConfig, batch: usize, samples: usize) -> f64 {
        let state = EncoderState::new(config.clone()).unwrap();
        let mut r = rng::seeded(5);
        let x = Array2::from_shape_fn((batch, config.input_dim()), |_| r.random_range(-1.0..1.0));
        let g = Array2::from_shape_fn((batch, config.embed_dim), |_| r.random_range(-1.0..1.0));
        let objective = |p: &[f64]| (forward_with(&config, p, x.view()).unwrap().0 * &g).sum();
        let (_, tape) = state.forward(x.view()).unwrap();
        let mut grads = vec![0.0; state.num_params()];
        state.backward(&tape, g.view(), &mut grads);
        let mut worst: f64 = 0.0;
        let mut params = state.params.clone();
        for _ in 0..samples {
            let i = r.random_range(0..params.len());
            let orig = params[i];
            params[i] = orig + 1e-6;
            let up = objective(&params);
            params[i] = orig - 1e-6;
            let down = objective(&params);
            params[i] = orig;
            let fd = (up - down) / 2e-6;
            worst = worst.max((fd - grads[i]).abs() / fd.abs().max(grads[i].abs()).max(1e-6));
        }
        worst
    }

    #[test]
    fn mlp_shapes_and_purity() {
        let state = EncoderState::new(EncoderConfig::mlp2(10, 16, 64, 1)).unwrap();
        let x = Array2::from_shape_fn((75, 10), |(i, j)| (i * j) as f64 * 0.01);
        let a = state.encode(x.view()).unwrap();
        assert_eq!(a.dim(), (75, 64));
        assert_eq!(a, state.encode(x.view()).unwrap());
        assert!(a.iter().all(|v| v.is_finite()));
        assert!(matches!(state.encode(Array2::zeros((2, 9)).view()), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_weights_give_zero_embeddings() {
        let mut state = EncoderState::new(EncoderConfig::mlp2(4, 8, 3, 1)).unwrap();
        state.params.iter_mut().for_each(|p| *p = 0.0);
        let x = Array2::from_elem((5, 4), 2.5);
        assert!(state.encode(x.view()).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn embed_dim_must_be_at_least_two() {
        assert!(EncoderState::new(EncoderConfig::mlp2(4, 8, 1, 1)).is_err());
    }

    #[test]
    fn mlp_backward_matches_finite_differences() {
        assert!(numeric_grad_check(EncoderConfig::mlp2(6, 7, 4, 3), 5, 150) < 1e-6);
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let cfg = EncoderConfig { arch: Arch::Conv4 { channels: 3 }, embed_dim: 4, input_shape: vec![2, 16, 16], seed: 2 };
        assert!(numeric_grad_check(cfg, 2, 150) < 1e-5);
    }

    #[test]
    fn conv_rejects_small_images() {
        let cfg = EncoderConfig { arch: Arch::Conv4 { channels: 3 }, embed_dim: 4, input_shape: vec![3, 8, 8], seed: 2 };
        assert!(EncoderState::new(cfg).is_err());
    }

    fn two_blobs() -> DatasetSplit {
        make_synthetic_dataset(&SyntheticParams {
            num_classes: 2,
            dim: 8,
            per_class: 40,
            class_sep: 3.0,
            intra_std: 0.5,
            seed: 3,
        })
        .unwrap()
    }

    #[test]
    fn pretrain_separates_two_classes() {
        let split = two_blobs();
        let state = EncoderState::new(EncoderConfig::mlp2(8, 16, 8, 0)).unwrap();
        let cfg = PretrainConfig { epochs: 50, batch_size: 16, optimizer: SgdConfig { lr: 0.05, momentum: 0.9, weight_decay: 5e-4 } };
        let out = pretrain(&state, &split, &cfg, &mut rng::seeded(1)).unwrap();
        assert_eq!(out.history.len(), 50);
        assert!(out.history.last().unwrap().accuracy >= 0.95);
        assert!(out.final_accuracy >= 0.95);
        assert!(out.state.params.iter().all(|p| p.is_finite()));
        assert!(out.state.step > 0);
    }

    #[test]
    fn zero_epochs_returns_input() {
        let split = two_blobs();
        let state = EncoderState::new(EncoderConfig::mlp2(8, 16, 8, 0)).unwrap();
        let cfg = PretrainConfig { epochs: 0, ..Default::default() };
        let out = pretrain(&state, &split, &cfg, &mut rng::seeded(1)).unwrap();
        assert_eq!(out.state, state);
    }

    #[test]
    fn non_finite_loss_aborts() {
        let mut split = two_blobs();
        split.samples[(3, 2)] = f64::NAN;
        let state = EncoderState::new(EncoderConfig::mlp2(8, 16, 8, 0)).unwrap();
        let err = pretrain(&state, &split, &PretrainConfig::default(), &mut rng::seeded(1)).unwrap_err();
        assert!(matches!(err, Error::Divergence(_)), "{err}");
    }
}
