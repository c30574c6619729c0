//! A small deterministic feed-forward engine: dense, 2D convolution, ReLU,
//! sigmoid, batch normalization, Adam, and squared-L2 loss.
//!
//! Everything is written against the shapes this problem actually needs.
//! Syndromes of the surface codes reshape into two check grids; a network
//! that starts from grids carries them as one tensor of shape
//! `[grid, channel, rows, cols]` so a single filter bank processes both
//! grids with shared weights. `Flatten` turns `[g, c, h, w]` into
//! `[g, c*h*w]` and `Concat` turns `[g, f]` into `[g*f]`, after which the
//! dense head sees one flat vector per sample.
//!
//! Determinism: initialization, shuffling, and every reduction have a fixed
//! order, so a (specs, seed, data) triple reproduces parameters and the loss
//! trace bit for bit. Training is single threaded by design.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codes::{Family, StabilizerCode};
use crate::gf2::BitVec;
use crate::noise::CounterRng;

const QNN_MAGIC: [u8; 4] = *b"QNN\0";
pub const QNN_FORMAT_VERSION: u32 = 1;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const BN_MOMENTUM: f64 = 0.9;
const BN_EPS: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("syndrome grids are only defined for the surface families, not {0}")]
    UnsupportedFamily(Family),
    #[error("no convolutional architecture for {family} at d = {d}")]
    UnsupportedDistance { family: Family, d: usize },
    #[error("checkpoint format version {found}, this build reads {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// ==================== tensors ====================

/// A dense row-major tensor of `f64`. All entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; len] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(data.len(), shape.iter().product::<usize>(), "shape does not match data length");
        assert!(data.iter().all(|v| v.is_finite()), "tensor entries must be finite");
        Tensor { shape: shape.to_vec(), data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Same data, new shape; element count must match.
    fn reshaped(&self, shape: &[usize]) -> Tensor {
        assert_eq!(self.data.len(), shape.iter().product::<usize>());
        Tensor { shape: shape.to_vec(), data: self.data.clone() }
    }
}

// ==================== layer specs ====================

/// One layer of a network. The spec list fixes the architecture; parameter
/// tensors live in the network's state, in spec order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { input: usize, output: usize },
    Conv2D { kh: usize, kw: usize, in_ch: usize, out_ch: usize, stride_v: usize, stride_h: usize },
    ReLU,
    Sigmoid,
    BatchNorm { dim: usize },
    /// `[g, c, h, w]` (or any rank >= 2) to `[g, rest]`.
    Flatten,
    /// `[g, f]` to `[g * f]`.
    Concat,
}

/// Output shape of a layer, or a message naming the mismatch.
fn output_shape(spec: &LayerSpec, input: &[usize]) -> Result<Vec<usize>, String> {
    match *spec {
        LayerSpec::Dense { input: di, output } => {
            if input != [di] {
                return Err(format!("dense expects input [{di}], got {input:?}"));
            }
            Ok(vec![output])
        }
        LayerSpec::Conv2D { kh, kw, in_ch, out_ch, stride_v, stride_h } => {
            assert!(kh >= 1 && kw >= 1 && stride_v >= 1 && stride_h >= 1);
            let [g, ci, h, w] = input else {
                return Err(format!("conv expects input [g, c, h, w], got {input:?}"));
            };
            if *ci != in_ch {
                return Err(format!("conv expects {in_ch} input channels, got {ci}"));
            }
            if *h < kh || *w < kw {
                return Err(format!("conv filter {kh}x{kw} does not fit a {h}x{w} map"));
            }
            let oh = (h - kh) / stride_v + 1;
            let ow = (w - kw) / stride_h + 1;
            Ok(vec![*g, out_ch, oh, ow])
        }
        LayerSpec::ReLU | LayerSpec::Sigmoid => Ok(input.to_vec()),
        LayerSpec::BatchNorm { dim } => {
            if input != [dim] {
                return Err(format!("batchnorm expects input [{dim}], got {input:?}"));
            }
            Ok(vec![dim])
        }
        LayerSpec::Flatten => {
            if input.len() < 2 {
                return Err(format!("flatten expects rank >= 2, got {input:?}"));
            }
            Ok(vec![input[0], input[1..].iter().product()])
        }
        LayerSpec::Concat => {
            if input.len() != 2 {
                return Err(format!("concat expects rank 2, got {input:?}"));
            }
            Ok(vec![input[0] * input[1]])
        }
    }
}

// ==================== network ====================

/// Parameter tensors for one layer.
#[derive(Debug, Clone, PartialEq)]
enum LayerState {
    Empty,
    /// `w: [out, in]`, `b: [out]`.
    Dense { w: Tensor, b: Tensor },
    /// `w: [out_ch, in_ch, kh, kw]`, `b: [out_ch]`.
    Conv { w: Tensor, b: Tensor },
    /// Learned scale/shift plus running statistics (not trained).
    BatchNorm { gamma: Tensor, beta: Tensor, run_mean: Tensor, run_var: Tensor },
}

impl LayerState {
    /// Trainable tensors, in a fixed order.
    fn trainables(&self) -> Vec<&Tensor> {
        match self {
            LayerState::Empty => vec![],
            LayerState::Dense { w, b } | LayerState::Conv { w, b } => vec![w, b],
            LayerState::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
        }
    }

    fn trainables_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            LayerState::Empty => vec![],
            LayerState::Dense { w, b } | LayerState::Conv { w, b } => vec![w, b],
            LayerState::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
        }
    }

    /// Non-trained buffers (batchnorm running statistics).
    fn buffers(&self) -> Vec<&Tensor> {
        match self {
            LayerState::BatchNorm { run_mean, run_var, .. } => vec![run_mean, run_var],
            _ => vec![],
        }
    }

    fn buffers_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            LayerState::BatchNorm { run_mean, run_var, .. } => vec![run_mean, run_var],
            _ => vec![],
        }
    }

    /// Trainables followed by buffers, the checkpoint serialization order.
    fn all_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            LayerState::Empty => vec![],
            LayerState::Dense { w, b } | LayerState::Conv { w, b } => vec![w, b],
            LayerState::BatchNorm { gamma, beta, run_mean, run_var } => {
                vec![gamma, beta, run_mean, run_var]
            }
        }
    }
}

/// Per-layer gradients, shaped exactly like the layer's trainable tensors.
#[derive(Debug, Clone)]
pub struct Gradients {
    per_layer: Vec<Vec<Tensor>>,
}

/// Adam first/second moments, parallel to each layer's trainables.
#[derive(Debug, Clone, PartialEq)]
struct AdamState {
    step: u64,
    m: Vec<Vec<Tensor>>,
    v: Vec<Vec<Tensor>>,
}

/// A feed-forward network: immutable spec list, parameter state, optimizer
/// moments, and the loss trace of any training run applied to it.
///
/// Checkpoints persist specs, parameters, buffers, seed, and loss trace;
/// optimizer moments start at zero on load.
#[derive(Debug, Clone)]
pub struct Network {
    specs: Vec<LayerSpec>,
    states: Vec<LayerState>,
    adam: AdamState,
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    seed: u64,
    pub loss_trace: Vec<f64>,
}

/// Activation following a parameterized layer, for picking the init scale.
#[derive(Clone, Copy, PartialEq)]
enum FollowingAct {
    Relu,
    Other,
}

fn following_activation(specs: &[LayerSpec], i: usize) -> FollowingAct {
    for spec in &specs[i + 1..] {
        match spec {
            LayerSpec::ReLU => return FollowingAct::Relu,
            LayerSpec::Sigmoid => return FollowingAct::Other,
            LayerSpec::Dense { .. } | LayerSpec::Conv2D { .. } => break,
            _ => continue,
        }
    }
    FollowingAct::Other
}

/// Standard normal via Box-Muller; consumes two uniforms per call.
fn gaussian(rng: &mut CounterRng) -> f64 {
    let u1 = 1.0 - rng.next_f64();
    let u2 = rng.next_f64();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

impl Network {
    /// Builds a network and initializes its parameters from `seed`.
    ///
    /// Weights feeding a ReLU use He initialization, everything else Xavier;
    /// biases start at zero, batchnorm at identity. Panics if adjacent layer
    /// shapes do not compose: the architecture is a build-time decision, not
    /// an input.
    pub fn new(specs: Vec<LayerSpec>, input_shape: Vec<usize>, seed: u64) -> Self {
        let mut rng = CounterRng::new(seed, 0);
        let mut shape = input_shape.clone();
        let mut states = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            shape = match output_shape(spec, &shape) {
                Ok(s) => s,
                Err(msg) => panic!("layer {i}: {msg}"),
            };
            let state = match *spec {
                LayerSpec::Dense { input, output } => {
                    let std = init_std(input, output, following_activation(&specs, i));
                    let w = (0..output * input).map(|_| std * gaussian(&mut rng)).collect();
                    LayerState::Dense {
                        w: Tensor::from_vec(&[output, input], w),
                        b: Tensor::zeros(&[output]),
                    }
                }
                LayerSpec::Conv2D { kh, kw, in_ch, out_ch, .. } => {
                    let fan_in = in_ch * kh * kw;
                    let fan_out = out_ch * kh * kw;
                    let std = init_std(fan_in, fan_out, following_activation(&specs, i));
                    let w =
                        (0..out_ch * in_ch * kh * kw).map(|_| std * gaussian(&mut rng)).collect();
                    LayerState::Conv {
                        w: Tensor::from_vec(&[out_ch, in_ch, kh, kw], w),
                        b: Tensor::zeros(&[out_ch]),
                    }
                }
                LayerSpec::BatchNorm { dim } => LayerState::BatchNorm {
                    gamma: Tensor::from_vec(&[dim], vec![1.0; dim]),
                    beta: Tensor::zeros(&[dim]),
                    run_mean: Tensor::zeros(&[dim]),
                    run_var: Tensor::from_vec(&[dim], vec![1.0; dim]),
                },
                _ => LayerState::Empty,
            };
            states.push(state);
        }
        let adam = AdamState {
            step: 0,
            m: states
                .iter()
                .map(|st| st.trainables().iter().map(|t| Tensor::zeros(t.shape())).collect())
                .collect(),
            v: states
                .iter()
                .map(|st| st.trainables().iter().map(|t| Tensor::zeros(t.shape())).collect())
                .collect(),
        };
        Network {
            specs,
            states,
            adam,
            input_shape,
            output_shape: shape,
            seed,
            loss_trace: Vec::new(),
        }
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of trainable parameters. Shared conv filters count once even
    /// though they process every grid in the group dimension.
    pub fn param_count(&self) -> usize {
        self.states.iter().flat_map(|st| st.trainables().into_iter().map(Tensor::len)).sum()
    }

    /// Evaluation-mode forward pass (batchnorm uses running statistics).
    pub fn forward(&self, x: &Tensor) -> Tensor {
        assert_eq!(x.shape(), &self.input_shape[..], "input shape mismatch");
        let cache = self.forward_batch(std::slice::from_ref(x), Mode::Eval);
        cache.acts.last().unwrap()[0].clone()
    }

    /// Training-mode forward and backward over one batch under squared-L2
    /// loss, `mean_b ||y_b - t_b||^2`. Pure: no parameter or buffer updates.
    pub fn backward(&self, inputs: &[Tensor], targets: &[Tensor]) -> (f64, Gradients) {
        assert_eq!(inputs.len(), targets.len());
        assert!(!inputs.is_empty(), "backward needs at least one sample");
        let cache = self.forward_batch(inputs, Mode::Train);
        self.backward_from_cache(&cache, targets)
    }

    /// Loss and gradients from an existing forward cache.
    /// `dL/dy_b = 2 (y_b - t_b) / B`.
    fn backward_from_cache(&self, cache: &BatchCache, targets: &[Tensor]) -> (f64, Gradients) {
        let outs = cache.acts.last().unwrap();
        assert_eq!(outs.len(), targets.len());
        let batch = targets.len() as f64;
        let mut loss = 0.0;
        let mut d: Vec<Tensor> = outs
            .iter()
            .zip(targets)
            .map(|(y, t)| {
                assert_eq!(y.shape(), t.shape(), "target shape mismatch");
                let mut g = Tensor::zeros(y.shape());
                for i in 0..y.len() {
                    let r = y.data[i] - t.data[i];
                    loss += r * r;
                    g.data[i] = 2.0 * r / batch;
                }
                g
            })
            .collect();
        loss /= batch;
        let mut grads = self.zero_gradients();
        for l in (0..self.specs.len()).rev() {
            d = self.backward_layer(l, cache, d, &mut grads.per_layer[l]);
        }
        (loss, grads)
    }

    /// All-zero gradients shaped like this network's trainables.
    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            per_layer: self
                .states
                .iter()
                .map(|st| st.trainables().iter().map(|t| Tensor::zeros(t.shape())).collect())
                .collect(),
        }
    }

    /// One Adam step with coupled L2 weight decay. A zero gradient with zero
    /// decay leaves parameters unchanged.
    pub fn apply_adam(&mut self, grads: &Gradients, lr: f64, weight_decay: f64) {
        self.adam.step += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.adam.step as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.adam.step as i32);
        for (l, state) in self.states.iter_mut().enumerate() {
            for (t, param) in state.trainables_mut().into_iter().enumerate() {
                let g = &grads.per_layer[l][t];
                assert_eq!(g.shape(), param.shape());
                let m = &mut self.adam.m[l][t];
                let v = &mut self.adam.v[l][t];
                for i in 0..param.data.len() {
                    let ge = g.data[i] + weight_decay * param.data[i];
                    m.data[i] = ADAM_BETA1 * m.data[i] + (1.0 - ADAM_BETA1) * ge;
                    v.data[i] = ADAM_BETA2 * v.data[i] + (1.0 - ADAM_BETA2) * ge * ge;
                    param.data[i] -=
                        lr * (m.data[i] / bc1) / ((v.data[i] / bc2).sqrt() + ADAM_EPS);
                }
            }
        }
    }

    // ---------- forward internals ----------

    fn forward_batch(&self, batch: &[Tensor], mode: Mode) -> BatchCache {
        let mut acts: Vec<Vec<Tensor>> = vec![batch.to_vec()];
        let mut bn: Vec<Option<BnAux>> = (0..self.specs.len()).map(|_| None).collect();
        for (l, spec) in self.specs.iter().enumerate() {
            let xs = acts.last().unwrap();
            let ys = match (spec, &self.states[l]) {
                (LayerSpec::Dense { .. }, LayerState::Dense { w, b }) => {
                    xs.iter().map(|x| dense_forward(w, b, x)).collect()
                }
                (
                    LayerSpec::Conv2D { kh, kw, stride_v, stride_h, .. },
                    LayerState::Conv { w, b },
                ) => xs
                    .iter()
                    .map(|x| conv_forward(w, b, x, *kh, *kw, *stride_v, *stride_h))
                    .collect(),
                (LayerSpec::ReLU, _) => xs
                    .iter()
                    .map(|x| {
                        let mut y = x.clone();
                        for v in &mut y.data {
                            if *v < 0.0 {
                                *v = 0.0;
                            }
                        }
                        y
                    })
                    .collect(),
                (LayerSpec::Sigmoid, _) => xs
                    .iter()
                    .map(|x| {
                        let mut y = x.clone();
                        for v in &mut y.data {
                            *v = 1.0 / (1.0 + (-*v).exp());
                        }
                        y
                    })
                    .collect(),
                (
                    LayerSpec::BatchNorm { dim },
                    LayerState::BatchNorm { gamma, beta, run_mean, run_var },
                ) => match mode {
                    Mode::Eval => xs
                        .iter()
                        .map(|x| {
                            let mut y = Tensor::zeros(&[*dim]);
                            for i in 0..*dim {
                                let xh = (x.data[i] - run_mean.data[i])
                                    / (run_var.data[i] + BN_EPS).sqrt();
                                y.data[i] = gamma.data[i] * xh + beta.data[i];
                            }
                            y
                        })
                        .collect(),
                    Mode::Train => {
                        let (ys, aux) = batchnorm_train_forward(gamma, beta, xs, *dim);
                        bn[l] = Some(aux);
                        ys
                    }
                },
                (LayerSpec::Flatten, _) => xs
                    .iter()
                    .map(|x| x.reshaped(&[x.shape[0], x.len() / x.shape[0]]))
                    .collect(),
                (LayerSpec::Concat, _) => xs.iter().map(|x| x.reshaped(&[x.len()])).collect(),
                _ => unreachable!("spec/state mismatch"),
            };
            acts.push(ys);
        }
        BatchCache { acts, bn }
    }

    /// Propagates output gradients `d` through layer `l`, accumulating
    /// parameter gradients into `out`.
    fn backward_layer(
        &self,
        l: usize,
        cache: &BatchCache,
        d: Vec<Tensor>,
        out: &mut [Tensor],
    ) -> Vec<Tensor> {
        let xs = &cache.acts[l];
        let ys = &cache.acts[l + 1];
        match (&self.specs[l], &self.states[l]) {
            (LayerSpec::Dense { .. }, LayerState::Dense { w, .. }) => {
                // Sum parameter gradients over the batch; dy already carries 1/B.
                let (dw, db) = out.split_at_mut(1);
                let mut dxs = Vec::with_capacity(d.len());
                for (x, dy) in xs.iter().zip(&d) {
                    dxs.push(dense_backward(w, x, dy, &mut dw[0], &mut db[0]));
                }
                dxs
            }
            (LayerSpec::Conv2D { kh, kw, stride_v, stride_h, .. }, LayerState::Conv { w, .. }) => {
                let (dw, db) = out.split_at_mut(1);
                let mut dxs = Vec::with_capacity(d.len());
                for (x, dy) in xs.iter().zip(&d) {
                    dxs.push(conv_backward(
                        w, x, dy, &mut dw[0], &mut db[0], *kh, *kw, *stride_v, *stride_h,
                    ));
                }
                dxs
            }
            (LayerSpec::ReLU, _) => xs
                .iter()
                .zip(d)
                .map(|(x, mut dy)| {
                    for i in 0..dy.len() {
                        if x.data[i] <= 0.0 {
                            dy.data[i] = 0.0;
                        }
                    }
                    dy
                })
                .collect(),
            (LayerSpec::Sigmoid, _) => ys
                .iter()
                .zip(d)
                .map(|(y, mut dy)| {
                    for i in 0..dy.len() {
                        dy.data[i] *= y.data[i] * (1.0 - y.data[i]);
                    }
                    dy
                })
                .collect(),
            (LayerSpec::BatchNorm { dim }, LayerState::BatchNorm { gamma, .. }) => {
                let aux = cache.bn[l].as_ref().expect("train-mode cache");
                let (dg, db) = out.split_at_mut(1);
                batchnorm_backward(gamma, aux, &d, *dim, &mut dg[0], &mut db[0])
            }
            (LayerSpec::Flatten, _) | (LayerSpec::Concat, _) => {
                xs.iter().zip(d).map(|(x, dy)| dy.reshaped(x.shape())).collect()
            }
            _ => unreachable!("spec/state mismatch"),
        }
    }

    /// Updates batchnorm running statistics from one training batch.
    fn update_bn_buffers(&mut self, cache: &BatchCache) {
        for l in 0..self.specs.len() {
            let Some(aux) = &cache.bn[l] else { continue };
            let mut bufs = self.states[l].buffers_mut();
            let [run_mean, run_var] = &mut bufs[..] else { unreachable!() };
            for i in 0..aux.mean.len() {
                run_mean.data[i] = BN_MOMENTUM * run_mean.data[i] + (1.0 - BN_MOMENTUM) * aux.mean[i];
                run_var.data[i] = BN_MOMENTUM * run_var.data[i] + (1.0 - BN_MOMENTUM) * aux.var[i];
            }
        }
    }
}

fn init_std(fan_in: usize, fan_out: usize, act: FollowingAct) -> f64 {
    match act {
        FollowingAct::Relu => (2.0 / fan_in as f64).sqrt(),
        FollowingAct::Other => (2.0 / (fan_in + fan_out) as f64).sqrt(),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Eval,
    Train,
}

struct BatchCache {
    /// `acts[l]` is the batch entering layer `l`; the last entry is the output.
    acts: Vec<Vec<Tensor>>,
    bn: Vec<Option<BnAux>>,
}

struct BnAux {
    /// Normalized inputs per sample.
    xhat: Vec<Tensor>,
    inv_std: Vec<f64>,
    mean: Vec<f64>,
    /// Biased batch variance.
    var: Vec<f64>,
}

// ==================== layer kernels ====================

fn dense_forward(w: &Tensor, b: &Tensor, x: &Tensor) -> Tensor {
    let (out, inp) = (w.shape[0], w.shape[1]);
    let mut y = Tensor::zeros(&[out]);
    for o in 0..out {
        let row = &w.data[o * inp..(o + 1) * inp];
        let dot: f64 = row.iter().zip(&x.data).map(|(wi, xi)| wi * xi).sum();
        y.data[o] = b.data[o] + dot;
    }
    y
}

fn dense_backward(w: &Tensor, x: &Tensor, dy: &Tensor, dw: &mut Tensor, db: &mut Tensor) -> Tensor {
    let (out, inp) = (w.shape[0], w.shape[1]);
    let mut dx = Tensor::zeros(&[inp]);
    for o in 0..out {
        let g = dy.data[o];
        db.data[o] += g;
        let row = &w.data[o * inp..(o + 1) * inp];
        let drow = &mut dw.data[o * inp..(o + 1) * inp];
        for (dwi, xi) in drow.iter_mut().zip(&x.data) {
            *dwi += g * xi;
        }
        for (dxi, wi) in dx.data.iter_mut().zip(row) {
            *dxi += g * wi;
        }
    }
    dx
}

/// Valid (no padding) convolution over `[g, ci, h, w]`; the same filters are
/// applied to every slice of the leading group dimension.
fn conv_forward(
    w: &Tensor,
    b: &Tensor,
    x: &Tensor,
    kh: usize,
    kw: usize,
    sv: usize,
    sh: usize,
) -> Tensor {
    let [g, ci, h, ww] = x.shape[..] else { unreachable!() };
    let co = w.shape[0];
    let oh = (h - kh) / sv + 1;
    let ow = (ww - kw) / sh + 1;
    let mut y = Tensor::zeros(&[g, co, oh, ow]);
    for gr in 0..g {
        for oc in 0..co {
            for oi in 0..oh {
                for oj in 0..ow {
                    let mut acc = b.data[oc];
                    for c in 0..ci {
                        for di in 0..kh {
                            let xrow = ((gr * ci + c) * h + oi * sv + di) * ww + oj * sh;
                            let wrow = ((oc * ci + c) * kh + di) * kw;
                            for dj in 0..kw {
                                acc += w.data[wrow + dj] * x.data[xrow + dj];
                            }
                        }
                    }
                    y.data[((gr * co + oc) * oh + oi) * ow + oj] = acc;
                }
            }
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    w: &Tensor,
    x: &Tensor,
    dy: &Tensor,
    dw: &mut Tensor,
    db: &mut Tensor,
    kh: usize,
    kw: usize,
    sv: usize,
    sh: usize,
) -> Tensor {
    let [g, ci, h, ww] = x.shape[..] else { unreachable!() };
    let [_, co, oh, ow] = dy.shape[..] else { unreachable!() };
    let mut dx = Tensor::zeros(x.shape());
    for gr in 0..g {
        for oc in 0..co {
            for oi in 0..oh {
                for oj in 0..ow {
                    let go = dy.data[((gr * co + oc) * oh + oi) * ow + oj];
                    db.data[oc] += go;
                    for c in 0..ci {
                        for di in 0..kh {
                            let xrow = ((gr * ci + c) * h + oi * sv + di) * ww + oj * sh;
                            let wrow = ((oc * ci + c) * kh + di) * kw;
                            for dj in 0..kw {
                                dw.data[wrow + dj] += go * x.data[xrow + dj];
                                dx.data[xrow + dj] += go * w.data[wrow + dj];
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Training-mode batchnorm over a batch of rank-1 tensors, using biased batch
/// variance.
fn batchnorm_train_forward(
    gamma: &Tensor,
    beta: &Tensor,
    xs: &[Tensor],
    dim: usize,
) -> (Vec<Tensor>, BnAux) {
    let batch = xs.len() as f64;
    let mut mean = vec![0.0; dim];
    for x in xs {
        for i in 0..dim {
            mean[i] += x.data[i];
        }
    }
    for m in &mut mean {
        *m /= batch;
    }
    let mut var = vec![0.0; dim];
    for x in xs {
        for i in 0..dim {
            let c = x.data[i] - mean[i];
            var[i] += c * c;
        }
    }
    for v in &mut var {
        *v /= batch;
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut xhat = Vec::with_capacity(xs.len());
    let mut ys = Vec::with_capacity(xs.len());
    for x in xs {
        let mut xh = Tensor::zeros(&[dim]);
        let mut y = Tensor::zeros(&[dim]);
        for i in 0..dim {
            xh.data[i] = (x.data[i] - mean[i]) * inv_std[i];
            y.data[i] = gamma.data[i] * xh.data[i] + beta.data[i];
        }
        xhat.push(xh);
        ys.push(y);
    }
    (ys, BnAux { xhat, inv_std, mean, var })
}

fn batchnorm_backward(
    gamma: &Tensor,
    aux: &BnAux,
    d: &[Tensor],
    dim: usize,
    dgamma: &mut Tensor,
    dbeta: &mut Tensor,
) -> Vec<Tensor> {
    let batch = d.len() as f64;
    let mut sum_dy = vec![0.0; dim];
    let mut sum_dy_xhat = vec![0.0; dim];
    for (dy, xh) in d.iter().zip(&aux.xhat) {
        for i in 0..dim {
            sum_dy[i] += dy.data[i];
            sum_dy_xhat[i] += dy.data[i] * xh.data[i];
        }
    }
    for i in 0..dim {
        dgamma.data[i] += sum_dy_xhat[i];
        dbeta.data[i] += sum_dy[i];
    }
    d.iter()
        .zip(&aux.xhat)
        .map(|(dy, xh)| {
            let mut dx = Tensor::zeros(&[dim]);
            for i in 0..dim {
                dx.data[i] = gamma.data[i] * aux.inv_std[i]
                    * (dy.data[i] - sum_dy[i] / batch - xh.data[i] * sum_dy_xhat[i] / batch);
            }
            dx
        })
        .collect()
}

// ==================== training ====================

/// Training hyperparameters. The learning rate decays exponentially from
/// `lr_start` to `lr_end` across the epoch budget.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub weight_decay: f64,
    /// Shuffle seed; independent of the network's init seed.
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(epochs: usize, batch_size: usize, seed: u64) -> Self {
        TrainConfig { epochs, batch_size, lr_start: 1e-3, lr_end: 1e-5, weight_decay: 0.0, seed }
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 || self.lr_start == 0.0 {
            return self.lr_start;
        }
        let frac = epoch as f64 / (self.epochs - 1) as f64;
        self.lr_start * (self.lr_end / self.lr_start).powf(frac)
    }
}

/// Trains `net` on samples `0..count` served by `fetch`, which must be a pure
/// function of the index. Returns the per-epoch mean training loss (measured
/// on each batch before its update) and appends it to the network's trace.
///
/// Deterministic: epoch shuffles come from counter-mode streams of
/// `cfg.seed`, batches are visited in shuffled order, and all reductions are
/// sequential.
pub fn train(
    net: &mut Network,
    count: usize,
    fetch: impl Fn(usize) -> (Tensor, Tensor),
    cfg: &TrainConfig,
) -> Vec<f64> {
    assert!(count > 0, "cannot train on an empty dataset");
    assert!(cfg.batch_size > 0);
    let mut order: Vec<usize> = (0..count).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut rng = CounterRng::new(cfg.seed, epoch as u64 + 1);
        for i in (1..count).rev() {
            let j = rng.next_below(i as u64 + 1) as usize;
            order.swap(i, j);
        }
        let lr = cfg.lr_at(epoch);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut inputs = Vec::with_capacity(chunk.len());
            let mut targets = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let (x, t) = fetch(i);
                inputs.push(x);
                targets.push(t);
            }
            // One fused pass: loss, gradients, and the batchnorm statistics
            // that update the running buffers.
            let cache = net.forward_batch(&inputs, Mode::Train);
            let (loss, grads) = net.backward_from_cache(&cache, &targets);
            net.update_bn_buffers(&cache);
            net.apply_adam(&grads, lr, cfg.weight_decay);
            epoch_loss += loss * chunk.len() as f64;
        }
        trace.push(epoch_loss / count as f64);
    }
    net.loss_trace.extend_from_slice(&trace);
    trace
}

// ==================== gradient checking ====================

/// Compares analytic gradients against central finite differences on a fixed
/// 4-sample batch of uniform inputs and targets. Samples `trials` parameter
/// coordinates and returns the worst relative error
/// `|a - n| / max(|a|, |n|, 1e-12)`.
pub fn grad_check(net: &mut Network, trials: usize, eps: f64) -> f64 {
    const BATCH: usize = 4;
    let mut rng = CounterRng::new(3, 0);
    let in_shape = net.input_shape.clone();
    let out_shape = net.output_shape.clone();
    let in_len: usize = in_shape.iter().product();
    let out_len: usize = out_shape.iter().product();
    let mut inputs = Vec::with_capacity(BATCH);
    let mut targets = Vec::with_capacity(BATCH);
    for _ in 0..BATCH {
        inputs.push(Tensor::from_vec(&in_shape, (0..in_len).map(|_| rng.next_f64()).collect()));
        targets.push(Tensor::from_vec(&out_shape, (0..out_len).map(|_| rng.next_f64()).collect()));
    }
    let (_, analytic) = net.backward(&inputs, &targets);

    // Coordinate table: (layer, tensor, element count).
    let mut slots: Vec<(usize, usize, usize)> = Vec::new();
    for (l, st) in net.states.iter().enumerate() {
        for (t, tensor) in st.trainables().iter().enumerate() {
            slots.push((l, t, tensor.len()));
        }
    }
    let total: usize = slots.iter().map(|s| s.2).sum();
    assert!(total > 0, "network has no trainable parameters");

    let loss_of = |net: &Network| {
        let cache = net.forward_batch(&inputs, Mode::Train);
        let outs = cache.acts.last().unwrap();
        let mut loss = 0.0;
        for (y, t) in outs.iter().zip(&targets) {
            for i in 0..y.len() {
                let r = y.data[i] - t.data[i];
                loss += r * r;
            }
        }
        loss / BATCH as f64
    };

    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let mut pick = rng.next_below(total as u64) as usize;
        let &(l, t, _) = slots
            .iter()
            .find(|&&(_, _, len)| {
                if pick < len {
                    true
                } else {
                    pick -= len;
                    false
                }
            })
            .unwrap();
        let a = analytic.per_layer[l][t].data[pick];
        let orig = net.states[l].trainables()[t].data[pick];
        net.states[l].trainables_mut()[t].data[pick] = orig + eps;
        let up = loss_of(net);
        net.states[l].trainables_mut()[t].data[pick] = orig - eps;
        let down = loss_of(net);
        net.states[l].trainables_mut()[t].data[pick] = orig;
        let n = (up - down) / (2.0 * eps);
        let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-12);
        worst = worst.max(rel);
    }
    worst
}

// ==================== syndrome reshaping ====================

/// Grid dimensions `(rows, cols)` of each check grid for a surface family.
pub fn syndrome_grid_dims(family: Family, d: usize) -> Result<(usize, usize), NnError> {
    match family {
        Family::SurfaceUnrotated => Ok((d, d - 1)),
        Family::SurfaceRotated => Ok((d - 1, (d + 1) / 2)),
        _ => Err(NnError::UnsupportedFamily(family)),
    }
}

/// Reshapes a syndrome into its two check grids (X grid, Z grid), one bit per
/// cell. Every syndrome bit lands in exactly one cell.
///
/// For the unrotated family checks sit on the odd lattice lines, so X checks
/// at `(i, j)` (`i` odd, `j` even) map to row `j/2`, column `(i-1)/2` and Z
/// checks (even, odd) to row `i/2`, column `(j-1)/2`: two `d x (d-1)` grids.
/// For the rotated family X rows follow the first doubled coordinate and Z
/// rows the second, with columns collapsed by `(c+1)/4` so the boundary
/// half-checks at `-1` / `2d-1` join the bulk: two `(d-1) x (d+1)/2` grids.
pub fn reshape_syndrome(code: &StabilizerCode, s: &BitVec) -> Result<(Tensor, Tensor), NnError> {
    let (rows, cols) = syndrome_grid_dims(code.family, code.d)?;
    assert_eq!(s.len(), code.n - code.k, "syndrome length mismatch");
    let mut xg = Tensor::zeros(&[rows, cols]);
    let mut zg = Tensor::zeros(&[rows, cols]);
    let mx = code.num_x_stabs();
    let rotated = code.family == Family::SurfaceRotated;
    for (bit, &(ci, cj)) in code.stab_coords_x.iter().enumerate() {
        let (r, c) = if rotated {
            (((ci - 1) / 2) as usize, ((cj + 1) / 4) as usize)
        } else {
            ((cj / 2) as usize, ((ci - 1) / 2) as usize)
        };
        if s.get(bit) {
            xg.data[r * cols + c] = 1.0;
        }
    }
    for (bit, &(ci, cj)) in code.stab_coords_z.iter().enumerate() {
        let (r, c) = if rotated {
            (((cj - 1) / 2) as usize, ((ci + 1) / 4) as usize)
        } else {
            ((ci / 2) as usize, ((cj - 1) / 2) as usize)
        };
        if s.get(mx + bit) {
            zg.data[r * cols + c] = 1.0;
        }
    }
    Ok((xg, zg))
}

/// Stacks the two check grids into the `[2, 1, rows, cols]` tensor a
/// convolutional network consumes.
pub fn cnn_input(code: &StabilizerCode, s: &BitVec) -> Result<Tensor, NnError> {
    let (xg, zg) = reshape_syndrome(code, s)?;
    let (rows, cols) = (xg.shape[0], xg.shape[1]);
    let mut data = Vec::with_capacity(2 * rows * cols);
    data.extend_from_slice(&xg.data);
    data.extend_from_slice(&zg.data);
    Ok(Tensor::from_vec(&[2, 1, rows, cols], data))
}

/// Flattens a syndrome to the rank-1 input an MLP consumes.
pub fn mlp_input(s: &BitVec) -> Tensor {
    Tensor::from_vec(&[s.len()], (0..s.len()).map(|i| f64::from(u8::from(s.get(i)))).collect())
}

/// Diagnosis bits as a rank-1 training target.
pub fn diagnosis_target(g: &BitVec) -> Tensor {
    mlp_input(g)
}

// ==================== architectures ====================

/// Hidden width used for the dense decoders: 256 up to d = 5, 512 above.
pub fn default_mlp_hidden(d: usize) -> usize {
    if d <= 5 {
        256
    } else {
        512
    }
}

/// Two ReLU hidden layers and a sigmoid output head, optionally normalizing
/// the input batch first.
///
/// Batchnorm sits on the input rather than between hidden layers: a bias
/// directly upstream of a normalization is cancelled by the batch mean and
/// carries no gradient, which would leave dead parameters in the net.
pub fn mlp_specs(input: usize, hidden: usize, output: usize, batch_norm: bool) -> Vec<LayerSpec> {
    let mut specs = Vec::new();
    if batch_norm {
        specs.push(LayerSpec::BatchNorm { dim: input });
    }
    specs.push(LayerSpec::Dense { input, output: hidden });
    specs.push(LayerSpec::ReLU);
    specs.push(LayerSpec::Dense { input: hidden, output: hidden });
    specs.push(LayerSpec::ReLU);
    specs.push(LayerSpec::Dense { input: hidden, output });
    specs.push(LayerSpec::Sigmoid);
    specs
}

/// Per-distance convolution plan: three `(kh, kw, stride_v, stride_h)`
/// filters plus the dense hidden width.
///
/// Channel counts are `10d, 10d, 5d`. Filters are the largest that compose
/// under valid (no padding) convolution on the actual grid sizes; on the
/// rotated family at `d >= 7` the first layer strides 2 horizontally.
fn conv_table(family: Family, d: usize) -> Option<([(usize, usize, usize, usize); 3], usize)> {
    let plan = match (family, d) {
        (Family::SurfaceUnrotated, 3) => ([(2, 2, 1, 1), (2, 1, 1, 1), (1, 1, 1, 1)], 500),
        (Family::SurfaceUnrotated, 5) => ([(2, 2, 1, 1), (2, 2, 1, 1), (2, 2, 1, 1)], 1000),
        (Family::SurfaceUnrotated, 7) => ([(2, 2, 1, 1), (3, 3, 1, 1), (3, 3, 1, 1)], 3000),
        (Family::SurfaceUnrotated, 9) => ([(3, 3, 1, 1), (3, 3, 1, 1), (4, 4, 1, 1)], 5000),
        (Family::SurfaceUnrotated, 11) => ([(4, 4, 1, 1), (4, 4, 1, 1), (4, 4, 1, 1)], 7000),
        (Family::SurfaceRotated, 3) => ([(2, 2, 1, 1), (1, 1, 1, 1), (1, 1, 1, 1)], 500),
        (Family::SurfaceRotated, 5) => ([(2, 2, 1, 1), (2, 2, 1, 1), (2, 1, 1, 1)], 1000),
        (Family::SurfaceRotated, 7) => ([(2, 2, 1, 2), (3, 2, 1, 1), (3, 1, 1, 1)], 3000),
        (Family::SurfaceRotated, 9) => ([(2, 3, 1, 2), (3, 2, 1, 1), (4, 1, 1, 1)], 5000),
        (Family::SurfaceRotated, 11) => ([(2, 4, 1, 2), (3, 2, 1, 1), (4, 1, 1, 1)], 7000),
        _ => return None,
    };
    Some(plan)
}

/// Convolutional decoder head for a surface code: three shared-filter conv
/// layers over the two check grids, flatten, concat, one dense hidden layer,
/// sigmoid output of width `output`.
pub fn cnn_specs(family: Family, d: usize, output: usize) -> Result<Vec<LayerSpec>, NnError> {
    let (rows, cols) = syndrome_grid_dims(family, d)?;
    let Some((filters, neurons)) = conv_table(family, d) else {
        return Err(NnError::UnsupportedDistance { family, d });
    };
    let channels = [10 * d, 10 * d, 5 * d];
    let mut specs = Vec::new();
    let (mut h, mut w, mut ch) = (rows, cols, 1);
    for (i, &(kh, kw, sv, sh)) in filters.iter().enumerate() {
        specs.push(LayerSpec::Conv2D {
            kh,
            kw,
            in_ch: ch,
            out_ch: channels[i],
            stride_v: sv,
            stride_h: sh,
        });
        specs.push(LayerSpec::ReLU);
        h = (h - kh) / sv + 1;
        w = (w - kw) / sh + 1;
        ch = channels[i];
    }
    specs.push(LayerSpec::Flatten);
    specs.push(LayerSpec::Concat);
    specs.push(LayerSpec::Dense { input: 2 * ch * h * w, output: neurons });
    specs.push(LayerSpec::ReLU);
    specs.push(LayerSpec::Dense { input: neurons, output });
    specs.push(LayerSpec::Sigmoid);
    Ok(specs)
}

// ==================== checkpoints ====================

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format_version: u32,
    specs: Vec<LayerSpec>,
    input_shape: Vec<usize>,
    seed: u64,
    loss_trace: Vec<f64>,
}

/// State tensors in serialization order: each layer's trainables, then its
/// buffers.
fn state_tensor_lens(net: &Network) -> Vec<usize> {
    net.states
        .iter()
        .flat_map(|st| {
            st.trainables().into_iter().chain(st.buffers()).map(Tensor::len).collect::<Vec<_>>()
        })
        .collect()
}

/// Writes a `.qnn` checkpoint: magic, version, JSON header, then every state
/// tensor as raw little-endian `f64`. Optimizer moments are not persisted.
pub fn save_network(net: &Network, path: &Path) -> Result<(), NnError> {
    let header = CheckpointHeader {
        format_version: QNN_FORMAT_VERSION,
        specs: net.specs.clone(),
        input_shape: net.input_shape.clone(),
        seed: net.seed,
        loss_trace: net.loss_trace.clone(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let count: usize = state_tensor_lens(net).iter().sum();
    let mut bytes = Vec::with_capacity(4 + 4 + 8 + json.len() + 8 + 8 * count);
    bytes.extend_from_slice(&QNN_MAGIC);
    bytes.extend_from_slice(&QNN_FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    bytes.extend_from_slice(&(count as u64).to_le_bytes());
    for st in &net.states {
        for t in st.trainables().into_iter().chain(st.buffers()) {
            for v in t.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn take<'a>(bytes: &'a [u8], off: &mut usize, len: usize) -> Result<&'a [u8], NnError> {
    let end = off.checked_add(len).filter(|&e| e <= bytes.len());
    let Some(end) = end else {
        return Err(NnError::CorruptCheckpoint("truncated file".into()));
    };
    let s = &bytes[*off..end];
    *off = end;
    Ok(s)
}

/// Reads a `.qnn` checkpoint. The network is rebuilt from its header and the
/// stored tensors overwrite the seeded initialization; Adam state starts
/// fresh.
pub fn load_network(path: &Path) -> Result<Network, NnError> {
    let bytes = fs::read(path)?;
    let mut off = 0;
    if take(&bytes, &mut off, 4)? != QNN_MAGIC {
        return Err(NnError::CorruptCheckpoint("bad magic".into()));
    }
    let found = u32::from_le_bytes(take(&bytes, &mut off, 4)?.try_into().unwrap());
    if found != QNN_FORMAT_VERSION {
        return Err(NnError::VersionMismatch { found, expected: QNN_FORMAT_VERSION });
    }
    let json_len = u64::from_le_bytes(take(&bytes, &mut off, 8)?.try_into().unwrap()) as usize;
    let header: CheckpointHeader = serde_json::from_slice(take(&bytes, &mut off, json_len)?)
        .map_err(|e| NnError::CorruptCheckpoint(format!("bad header: {e}")))?;
    let count = u64::from_le_bytes(take(&bytes, &mut off, 8)?.try_into().unwrap()) as usize;

    let mut net = Network::new(header.specs, header.input_shape, header.seed);
    net.loss_trace = header.loss_trace;
    let expected: usize = state_tensor_lens(&net).iter().sum();
    if count != expected {
        return Err(NnError::CorruptCheckpoint(format!(
            "payload holds {count} values, specs need {expected}"
        )));
    }
    let payload = take(&bytes, &mut off, 8 * count)?;
    if off != bytes.len() {
        return Err(NnError::CorruptCheckpoint("trailing bytes".into()));
    }
    let mut k = 0;
    for st in &mut net.states {
        for t in st.all_tensors_mut() {
            for v in t.data_mut() {
                *v = f64::from_le_bytes(payload[8 * k..8 * k + 8].try_into().unwrap());
                if !v.is_finite() {
                    return Err(NnError::CorruptCheckpoint("non-finite parameter".into()));
                }
                k += 1;
            }
        }
    }
    Ok(net)
}
