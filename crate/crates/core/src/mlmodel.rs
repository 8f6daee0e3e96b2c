//! A small feedforward regressor for cost-to-horizon.
//!
//! Inputs are one-hot occupancy channels (vehicle, red light, forbidden lane
//! change, ego projection) over every `(ks, kt, l)` cell, flattened in
//! `(channel, ks, kt, l)` order, followed by four normalized scalars
//! `kv, kt, ks, l`. Hidden layers use a rectifier, the output is linear.
//!
//! Encoded situations are very sparse, so the first layer also accepts a
//! [`SparseInput`]; it produces bit-identical results to the dense path.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, Label};
use crate::heuristics::{h_dp, DpTable, EpsilonBand};
use crate::lattice::{
    build_occupancy_grid, for_each_projected_cell, CellCode, LatticeError, LatticeParams, OccupancyGrid,
    SituationTensor, State,
};

pub const MODEL_FORMAT_VERSION: &str = "sbomp-mlp/1";
const CHANNELS: usize = 4;
const SCALARS: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("input has {found} entries, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("malformed model file at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported model format version {found:?} (expected {MODEL_FORMAT_VERSION:?})")]
    Version { found: String },
    #[error("unsupported activation {0:?}")]
    Activation(String),
    #[error("inconsistent model shape: {0}")]
    Shape(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("the {0} set is empty after label mapping")]
    Empty(&'static str),
    #[error("record references unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("loss became non-finite ({loss}) in epoch {epoch}; learning rate {learning_rate} is probably too high")]
    Diverged {
        epoch: usize,
        learning_rate: f64,
        loss: f64,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// Length of the encoded input vector for a lattice.
pub fn input_dim(params: &LatticeParams) -> usize {
    CHANNELS * params.cell_count() + SCALARS
}

fn channel(code: CellCode) -> Option<usize> {
    match code {
        CellCode::Free => None,
        CellCode::Vehicle => Some(0),
        CellCode::RedLight => Some(1),
        CellCode::LcForbidden => Some(2),
        CellCode::EgoVirtual => Some(3),
    }
}

fn scalars(state: &State, params: &LatticeParams) -> [f64; SCALARS] {
    [
        state.kv as f64 / (params.n_kv - 1) as f64,
        state.kt as f64 / (params.n_kt - 1) as f64,
        state.ks as f64 / (params.n_ks - 1) as f64,
        state.l as f64 / (params.n_kl.max(2) - 1) as f64,
    ]
}

/// Dense encoding of a situation tensor.
pub fn encode(tensor: &SituationTensor, params: &LatticeParams) -> Result<Vec<f64>, ModelError> {
    if tensor.dims() != params.dims() {
        return Err(ModelError::Config(format!(
            "tensor dims {:?} do not match lattice dims {:?}",
            tensor.dims(),
            params.dims()
        )));
    }
    let cells = params.cell_count();
    let mut x = vec![0.0; input_dim(params)];
    for (i, &code) in tensor.cells().iter().enumerate() {
        if let Some(ch) = channel(code) {
            x[ch * cells + i] = 1.0;
        }
    }
    x[CHANNELS * cells..].copy_from_slice(&scalars(&tensor.origin, params));
    Ok(x)
}

/// Nonzero entries of an input vector, ascending by index.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseInput {
    pub dim: usize,
    pub entries: Vec<(u32, f64)>,
}

impl SparseInput {
    pub fn to_dense(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        for &(j, v) in &self.entries {
            x[j as usize] = v;
        }
        x
    }
}

/// Sparse encoding of `render_situation(state, grid)` without materializing
/// the tensor.
pub fn encode_state(state: &State, grid: &OccupancyGrid, params: &LatticeParams) -> SparseInput {
    let cells = params.cell_count();
    let (_, n_kt, n_kl) = grid.dims();
    let flat = |ks: usize, kt: usize, l: usize| (ks * n_kt + kt) * n_kl + l;
    let projected =
        |ks: usize, kt: usize, l: usize| l == state.l && kt >= state.kt && ks == state.ks + state.kv * (kt - state.kt);

    let mut entries = Vec::new();
    for ((ks, kt, l), code) in grid.occupied() {
        if projected(ks, kt, l) {
            continue;
        }
        if let Some(ch) = channel(code) {
            entries.push(((ch * cells + flat(ks, kt, l)) as u32, 1.0));
        }
    }
    for_each_projected_cell(state, grid.dims(), |ks, kt, l| {
        entries.push(((3 * cells + flat(ks, kt, l)) as u32, 1.0));
    });
    for (k, v) in scalars(state, params).into_iter().enumerate() {
        if v != 0.0 {
            entries.push(((CHANNELS * cells + k) as u32, v));
        }
    }
    entries.sort_unstable_by_key(|e| e.0);
    SparseInput {
        dim: input_dim(params),
        entries,
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    n_in: usize,
    n_out: usize,
    /// Row-major `n_out × n_in`.
    w: Vec<f64>,
    b: Vec<f64>,
}

impl Dense {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            w: vec![0.0; n_in * n_out],
            b: vec![0.0; n_out],
        }
    }

    fn forward(&self, x: &[f64], z: &mut Vec<f64>) {
        z.clear();
        z.extend(self.w.chunks_exact(self.n_in).zip(&self.b).map(|(row, &b)| {
            let mut acc = b;
            for (w, x) in row.iter().zip(x) {
                acc += w * x;
            }
            acc
        }));
    }

    fn forward_sparse(&self, x: &SparseInput, z: &mut Vec<f64>) {
        z.clear();
        z.extend(self.w.chunks_exact(self.n_in).zip(&self.b).map(|(row, &b)| {
            let mut acc = b;
            for &(j, v) in &x.entries {
                acc += row[j as usize] * v;
            }
            acc
        }));
    }
}

enum Input<'a> {
    Dense(&'a [f64]),
    Sparse(&'a SparseInput),
}

/// Per-layer pre-activations (and post-activations) of one forward pass.
struct Trace {
    z: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
}

/// Gradient buffers shaped like the model's parameters.
#[derive(Debug, Clone)]
struct Grads {
    w: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

impl Grads {
    fn zeros_like(m: &MlpModel) -> Self {
        Self {
            w: m.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            b: m.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        }
    }

    fn clear(&mut self) {
        self.w.iter_mut().chain(self.b.iter_mut()).for_each(|v| v.fill(0.0));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_dims: Vec<usize>,
    layers: Vec<Dense>,
    init_seed: u64,
}

impl MlpModel {
    /// He-uniform weights and zero biases drawn from `seed`.
    pub fn new(layer_dims: &[usize], seed: u64) -> Self {
        let mut m = Self::zeros(layer_dims);
        m.init_seed = seed;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut m.layers {
            let limit = (6.0 / layer.n_in as f64).sqrt();
            layer.w.iter_mut().for_each(|w| *w = rng.gen_range(-limit..limit));
        }
        m
    }

    pub fn zeros(layer_dims: &[usize]) -> Self {
        assert!(layer_dims.len() >= 2, "need at least an input and an output layer");
        assert_eq!(*layer_dims.last().unwrap(), 1, "output must be a single value");
        assert!(layer_dims.iter().all(|d| *d > 0), "layer widths must be positive");
        Self {
            layer_dims: layer_dims.to_vec(),
            layers: layer_dims.windows(2).map(|d| Dense::zeros(d[0], d[1])).collect(),
            init_seed: 0,
        }
    }

    /// Reference architecture: two hidden layers of 64 units.
    pub fn for_lattice(params: &LatticeParams, hidden: &[usize], seed: u64) -> Self {
        let mut dims = vec![input_dim(params)];
        dims.extend_from_slice(hidden);
        dims.push(1);
        Self::new(&dims, seed)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn set_output_bias(&mut self, b: f64) {
        self.layers.last_mut().unwrap().b[0] = b;
    }

    /// Weight `(row, col)` of layer `layer`.
    pub fn weight_mut(&mut self, layer: usize, row: usize, col: usize) -> &mut f64 {
        let l = &mut self.layers[layer];
        &mut l.w[row * l.n_in + col]
    }

    pub fn bias_mut(&mut self, layer: usize, row: usize) -> &mut f64 {
        &mut self.layers[layer].b[row]
    }

    fn param_mut(&mut self, mut k: usize) -> &mut f64 {
        for layer in &mut self.layers {
            if k < layer.w.len() {
                return &mut layer.w[k];
            }
            k -= layer.w.len();
            if k < layer.b.len() {
                return &mut layer.b[k];
            }
            k -= layer.b.len();
        }
        panic!("parameter index out of range")
    }

    pub fn check_input_dim(&self, params: &LatticeParams) -> Result<(), ModelError> {
        let expected = input_dim(params);
        if self.input_dim() != expected {
            return Err(ModelError::Config(format!(
                "model takes {} inputs but a {}x{}x{} lattice encodes to {expected}",
                self.input_dim(),
                params.n_ks,
                params.n_kt,
                params.n_kl
            )));
        }
        Ok(())
    }

    fn forward(&self, input: Input<'_>) -> Trace {
        let n = self.layers.len();
        let mut z = Vec::with_capacity(n);
        let mut a: Vec<Vec<f64>> = Vec::with_capacity(n);
        for (i, layer) in self.layers.iter().enumerate() {
            let mut zi = Vec::with_capacity(layer.n_out);
            match (i, &input) {
                (0, Input::Dense(x)) => layer.forward(x, &mut zi),
                (0, Input::Sparse(x)) => layer.forward_sparse(x, &mut zi),
                _ => layer.forward(&a[i - 1], &mut zi),
            }
            let ai = if i + 1 < n {
                zi.iter().map(|v| v.max(0.0)).collect()
            } else {
                zi.clone()
            };
            z.push(zi);
            a.push(ai);
        }
        Trace { z, a }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, ModelError> {
        if x.len() != self.input_dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        Ok(self.forward(Input::Dense(x)).a.last().unwrap()[0])
    }

    pub fn predict_sparse(&self, x: &SparseInput) -> f64 {
        debug_assert_eq!(x.dim, self.input_dim());
        self.forward(Input::Sparse(x)).a.last().unwrap()[0]
    }

    /// Adds `scale · ∂y/∂θ` into `grads` and returns the prediction `y`.
    fn accumulate(&self, input: Input<'_>, dloss_dy: impl FnOnce(f64) -> f64, grads: &mut Grads) -> f64 {
        let trace = self.forward(input.reborrow());
        let y = trace.a.last().unwrap()[0];
        let mut delta = vec![dloss_dy(y)];
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            for (gb, d) in grads.b[i].iter_mut().zip(&delta) {
                *gb += d;
            }
            let gw = &mut grads.w[i];
            match (i, &input) {
                (0, Input::Sparse(x)) => {
                    for (o, d) in delta.iter().enumerate() {
                        let row = &mut gw[o * layer.n_in..(o + 1) * layer.n_in];
                        for &(j, v) in &x.entries {
                            row[j as usize] += d * v;
                        }
                    }
                }
                _ => {
                    let prev: &[f64] = match (i, &input) {
                        (0, Input::Dense(x)) => x,
                        _ => &trace.a[i - 1],
                    };
                    for (o, d) in delta.iter().enumerate() {
                        let row = &mut gw[o * layer.n_in..(o + 1) * layer.n_in];
                        for (g, p) in row.iter_mut().zip(prev) {
                            *g += d * p;
                        }
                    }
                }
            }
            if i > 0 {
                let mut next = vec![0.0; layer.n_in];
                for (o, d) in delta.iter().enumerate() {
                    for (n, w) in next.iter_mut().zip(&layer.w[o * layer.n_in..(o + 1) * layer.n_in]) {
                        *n += w * d;
                    }
                }
                for (n, z) in next.iter_mut().zip(&trace.z[i - 1]) {
                    if *z <= 0.0 {
                        *n = 0.0;
                    }
                }
                delta = next;
            }
        }
        y
    }

    fn apply_momentum(&mut self, grads: &Grads, velocity: &mut Grads, lr: f64, momentum: f64, scale: f64) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            for ((p, v), g) in layer.w.iter_mut().zip(&mut velocity.w[i]).zip(&grads.w[i]) {
                *v = momentum * *v - lr * scale * g;
                *p += *v;
            }
            for ((p, v), g) in layer.b.iter_mut().zip(&mut velocity.b[i]).zip(&grads.b[i]) {
                *v = momentum * *v - lr * scale * g;
                *p += *v;
            }
        }
    }

    fn flat_grads(g: &Grads) -> Vec<f64> {
        g.w.iter()
            .zip(&g.b)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }
}

impl Input<'_> {
    fn reborrow(&self) -> Input<'_> {
        match self {
            Input::Dense(x) => Input::Dense(x),
            Input::Sparse(x) => Input::Sparse(x),
        }
    }
}

/// Max relative error between backprop and central-difference gradients of
/// `(predict(x) − target)²` over every parameter.
///
/// Relative error is `|a − n| / max(|a|, |n|, 1e-6)`; the floor keeps
/// vanishing gradients from amplifying round-off.
pub fn grad_check(model: &MlpModel, x: &[f64], target: f64) -> f64 {
    const STEP: f64 = 1e-5;
    let mut grads = Grads::zeros_like(model);
    model.accumulate(Input::Dense(x), |y| 2.0 * (y - target), &mut grads);
    let analytic = MlpModel::flat_grads(&grads);

    let loss = |m: &MlpModel| {
        let y = m.forward(Input::Dense(x)).a.last().unwrap()[0];
        (y - target) * (y - target)
    };
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (k, a) in analytic.iter().enumerate() {
        let orig = *probe.param_mut(k);
        *probe.param_mut(k) = orig + STEP;
        let up = loss(&probe);
        *probe.param_mut(k) = orig - STEP;
        let down = loss(&probe);
        *probe.param_mut(k) = orig;
        let numeric = (up - down) / (2.0 * STEP);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

/// How dead-end records enter training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LabelCapMode {
    /// Target `ε · h_dp(node)`, the top of the clamp band.
    #[default]
    EpsilonCeiling,
    /// Leave dead ends out.
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub label_cap_mode: LabelCapMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            momentum: 0.9,
            batch_size: 32,
            epochs: 30,
            seed: 0,
            label_cap_mode: LabelCapMode::EpsilonCeiling,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(TrainError::Config("momentum must lie in [0, 1)".into()));
        }
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "epoch,train_mse,val_mse")?;
        for e in &self.epochs {
            writeln!(w, "{},{},{}", e.epoch, e.train_mse, e.val_mse)?;
        }
        Ok(())
    }
}

/// Encoded inputs and regression targets.
#[derive(Debug, Clone)]
pub struct Samples {
    pub inputs: Vec<SparseInput>,
    pub targets: Vec<f64>,
}

impl Samples {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Encodes every record of `data`, mapping dead ends per `mode`.
pub fn build_samples(
    data: &Dataset,
    table: &DpTable,
    band: EpsilonBand,
    mode: LabelCapMode,
) -> Result<Samples, TrainError> {
    let mut grids: HashMap<&str, (LatticeParams, OccupancyGrid)> = HashMap::new();
    for s in &data.scenarios {
        grids.insert(&s.id, (s.params, build_occupancy_grid(s)?));
    }
    let mut inputs = Vec::with_capacity(data.records.len());
    let mut targets = Vec::with_capacity(data.records.len());
    for r in &data.records {
        let (params, grid) = grids
            .get(r.scenario_id.as_str())
            .ok_or_else(|| TrainError::UnknownScenario(r.scenario_id.clone()))?;
        let target = match (r.label, mode) {
            (Label::Cost(c), _) => c,
            (Label::DeadEnd, LabelCapMode::EpsilonCeiling) => band.epsilon() * h_dp(&r.state, table, params),
            (Label::DeadEnd, LabelCapMode::Skip) => continue,
        };
        inputs.push(encode_state(&r.state, grid, params));
        targets.push(target);
    }
    Ok(Samples { inputs, targets })
}

pub fn mse(model: &MlpModel, samples: &Samples) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let sum: f64 = samples
        .inputs
        .iter()
        .zip(&samples.targets)
        .map(|(x, t)| {
            let e = model.predict_sparse(x) - t;
            e * e
        })
        .sum();
    sum / samples.len() as f64
}

/// Mini-batch gradient descent with momentum on the squared error.
pub fn train(
    model: &MlpModel,
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
    table: &DpTable,
    band: EpsilonBand,
) -> Result<(MlpModel, TrainLog), TrainError> {
    cfg.validate()?;
    let train_samples = build_samples(train_set, table, band, cfg.label_cap_mode)?;
    let val_samples = build_samples(val_set, table, band, cfg.label_cap_mode)?;
    if train_samples.is_empty() {
        return Err(TrainError::Empty("training"));
    }
    if val_samples.is_empty() {
        return Err(TrainError::Empty("validation"));
    }
    if let Some(x) = train_samples.inputs.first() {
        if x.dim != model.input_dim() {
            return Err(ModelError::DimensionMismatch {
                expected: model.input_dim(),
                found: x.dim,
            }
            .into());
        }
    }
    train_samples_with(model, &train_samples, &val_samples, cfg)
}

/// [`train`] on pre-encoded samples.
pub fn train_samples_with(
    model: &MlpModel,
    train_samples: &Samples,
    val_samples: &Samples,
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainLog), TrainError> {
    cfg.validate()?;
    let mut model = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_samples.len()).collect();
    let mut grads = Grads::zeros_like(&model);
    let mut velocity = Grads::zeros_like(&model);
    let mut log = TrainLog::default();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grads.clear();
            for &k in batch {
                let t = train_samples.targets[k];
                model.accumulate(Input::Sparse(&train_samples.inputs[k]), |y| 2.0 * (y - t), &mut grads);
            }
            model.apply_momentum(
                &grads,
                &mut velocity,
                cfg.learning_rate,
                cfg.momentum,
                1.0 / batch.len() as f64,
            );
        }
        let train_mse = mse(&model, train_samples);
        let val_mse = mse(&model, val_samples);
        if !train_mse.is_finite() || !val_mse.is_finite() {
            return Err(TrainError::Diverged {
                epoch,
                learning_rate: cfg.learning_rate,
                loss: train_mse,
            });
        }
        log.epochs.push(EpochLog {
            epoch,
            train_mse,
            val_mse,
        });
    }
    Ok((model, log))
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    version: String,
    layer_dims: Vec<usize>,
    activation: String,
    #[serde(default)]
    init_seed: u64,
    /// `weights[layer][row][col]`.
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
}

impl MlpModel {
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            version: MODEL_FORMAT_VERSION.into(),
            layer_dims: self.layer_dims.clone(),
            activation: "relu".into(),
            init_seed: self.init_seed,
            weights: self
                .layers
                .iter()
                .map(|l| l.w.chunks_exact(l.n_in).map(<[f64]>::to_vec).collect())
                .collect(),
            biases: self.layers.iter().map(|l| l.b.clone()).collect(),
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| ModelError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        if file.version != MODEL_FORMAT_VERSION {
            return Err(ModelError::Version { found: file.version });
        }
        if file.activation != "relu" {
            return Err(ModelError::Activation(file.activation));
        }
        let dims = &file.layer_dims;
        if dims.len() < 2 || dims.last() != Some(&1) || dims.contains(&0) {
            return Err(ModelError::Shape(format!("bad layer_dims {dims:?}")));
        }
        if file.weights.len() != dims.len() - 1 || file.biases.len() != dims.len() - 1 {
            return Err(ModelError::Shape("layer count disagrees with layer_dims".into()));
        }
        let mut model = MlpModel::zeros(dims);
        model.init_seed = file.init_seed;
        for (i, (layer, (w, b))) in model
            .layers
            .iter_mut()
            .zip(file.weights.iter().zip(&file.biases))
            .enumerate()
        {
            if w.len() != layer.n_out || w.iter().any(|row| row.len() != layer.n_in) || b.len() != layer.n_out {
                return Err(ModelError::Shape(format!(
                    "layer {i} is not {}x{}",
                    layer.n_out, layer.n_in
                )));
            }
            layer.w = w.concat();
            layer.b.clone_from(b);
        }
        Ok(model)
    }
}

pub fn save_model(model: &MlpModel, path: &Path) -> Result<(), ModelError> {
    fs::write(path, model.to_json()).map_err(|e| ModelError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn load_model(path: &Path) -> Result<MlpModel, ModelError> {
    let text = fs::read_to_string(path).map_err(|e| ModelError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    MlpModel::from_json(&text)
}
