//! Latent-set denoiser `D(context, condition, t, x)`.
//!
//! A learned set of `M` latent vectors is refined by `L` stages. Stage `l`
//! cross-attends from the latents into the `l`-th contiguous chunk of the
//! context tokens together with all condition tokens, then runs a
//! self-attention block whose layer norms are modulated by the time
//! embedding (AdaLN). Query coordinates finally cross-attend into the latent
//! set and a linear head emits the function value. Every query row is
//! processed independently, so a prediction at `x` never depends on which
//! other points are queried alongside it.
//!
//! The forward pass is split into [`Denoiser::encode`] (context, condition
//! and `t` to latents) and [`Denoiser::decode`] (latents and queries to
//! values) so a sampler can evaluate one denoiser state at any number of
//! points.

mod checkpoint;
mod net;

use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adcore::{Tape, Tensor, Var};
use crate::dataset::{Condition, Task};
use crate::domain::Points;
use crate::error::{Error, Result};
use crate::rng;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta};

/// User-facing model hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Fourier frequency bands per coordinate axis.
    pub num_frequencies: usize,
    pub num_latents: usize,
    pub width: usize,
    pub stages: usize,
    pub heads: usize,
    /// MLP hidden width as a multiple of `width`.
    pub mlp_ratio: usize,
    /// Typical magnitude of the target values. Context inputs are rescaled
    /// to unit variance and the head output is multiplied by it; 1 disables
    /// the rescaling. Omitted from serialized configs when 1 so hashes of
    /// older configs and checkpoints stay valid.
    #[serde(skip_serializing_if = "is_one")]
    pub data_std: f64,
}

fn is_one(v: &f64) -> bool {
    *v == 1.0
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_frequencies: 6,
            num_latents: 64,
            width: 64,
            stages: 2,
            heads: 4,
            mlp_ratio: 2,
            data_std: 1.0,
        }
    }
}

/// Full architecture description: hyperparameters plus the task's shapes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiserConfig {
    pub model: ModelConfig,
    pub dim_in: usize,
    pub dim_out: usize,
    pub cond_dim: usize,
}

impl DenoiserConfig {
    pub fn for_task(model: ModelConfig, task: Task) -> Self {
        Self {
            model,
            dim_in: task.domain().dim(),
            dim_out: task.dim_out(),
            cond_dim: task.cond_dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.num_latents == 0 || m.width == 0 || m.stages == 0 || m.heads == 0 || m.mlp_ratio == 0 {
            return Err(Error::Range("model sizes must all be >= 1".into()));
        }
        if m.width % m.heads != 0 {
            return Err(Error::Range(format!("width {} not divisible by {} heads", m.width, m.heads)));
        }
        if m.width % 2 != 0 {
            return Err(Error::Range("width must be even for the sinusoidal time embedding".into()));
        }
        if !(m.data_std.is_finite() && m.data_std > 0.0) {
            return Err(Error::Range(format!("data_std {} must be finite and > 0", m.data_std)));
        }
        if !(1..=3).contains(&self.dim_in) || self.dim_out == 0 {
            return Err(Error::Range("dim_in must be 1-3 and dim_out >= 1".into()));
        }
        Ok(())
    }

    pub fn coord_width(&self) -> usize {
        self.dim_in * (2 * self.model.num_frequencies + 1)
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(json))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Named parameter tensors in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserParams {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl DenoiserParams {
    pub fn from_parts(names: Vec<String>, tensors: Vec<Tensor>) -> Result<Self> {
        if names.len() != tensors.len() {
            return Err(Error::dim("parameter names and tensors differ in count"));
        }
        let mut index = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::dim(format!("duplicate parameter name {n}")));
            }
        }
        Ok(Self { names, tensors, index })
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}

enum Init {
    /// N(0, 1 / fan_in).
    Fan,
    Zero,
    Normal(f64),
}

struct Builder {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    seed: u64,
}

impl Builder {
    fn add(&mut self, name: String, rows: usize, cols: usize, init: Init) {
        let mut r = rng::stream(rng::derive(self.seed, &[self.names.len() as u64]));
        let std = match init {
            Init::Fan => (1.0 / rows as f64).sqrt(),
            Init::Zero => 0.0,
            Init::Normal(s) => s,
        };
        let data = (0..rows * cols)
            .map(|_| if std == 0.0 { 0.0 } else { std * r.sample::<f64, _>(StandardNormal) })
            .collect();
        self.names.push(name);
        self.tensors.push(Tensor::matrix(rows, cols, data).expect("shape"));
    }

    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize, init: Init) {
        self.add(format!("{name}.w"), fan_in, fan_out, init);
        self.add(format!("{name}.b"), 1, fan_out, Init::Zero);
    }

    fn mlp(&mut self, name: &str, fan_in: usize, hidden: usize, fan_out: usize) {
        self.linear(&format!("{name}.l1"), fan_in, hidden, Init::Fan);
        self.linear(&format!("{name}.l2"), hidden, fan_out, Init::Fan);
    }

    fn attention(&mut self, name: &str, d: usize) {
        for p in ["q", "k", "v", "o"] {
            self.linear(&format!("{name}.{p}"), d, d, Init::Fan);
        }
    }
}

/// The denoising network: configuration plus parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Denoiser {
    config: DenoiserConfig,
    params: DenoiserParams,
}

impl Denoiser {
    /// Freshly initialized network. The AdaLN modulation heads start at zero
    /// so every stage begins with scale 1 and shift 0.
    pub fn new(config: DenoiserConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let m = &config.model;
        let (d, e) = (m.width, config.coord_width());
        let hidden = m.mlp_ratio * d;
        let mut b = Builder {
            names: Vec::new(),
            tensors: Vec::new(),
            seed,
        };
        b.mlp("context", e + config.dim_out, hidden, d);
        b.mlp("condition", e + config.cond_dim, hidden, d);
        b.add("condition.tag".into(), 1, d, Init::Normal(0.1));
        b.mlp("query", e, hidden, d);
        b.add("latents".into(), m.num_latents, d, Init::Normal(1.0));
        b.linear("time.l1", d, d, Init::Fan);
        b.linear("time.l2", d, d, Init::Fan);
        for s in 0..m.stages {
            b.attention(&format!("stage{s}.cross"), d);
            b.mlp(&format!("stage{s}.cross_mlp"), d, hidden, d);
            b.linear(&format!("stage{s}.adaln"), d, 4 * d, Init::Zero);
            b.attention(&format!("stage{s}.self"), d);
            b.mlp(&format!("stage{s}.self_mlp"), d, hidden, d);
        }
        b.attention("decoder.cross", d);
        b.mlp("decoder.mlp", d, hidden, d);
        b.linear("decoder.head", d, config.dim_out, Init::Fan);
        let params = DenoiserParams::from_parts(b.names, b.tensors)?;
        Ok(Self { config, params })
    }

    /// Rebuilds a network from stored parameters, checking names and shapes
    /// against a fresh initialization of `config`.
    pub fn from_params(config: DenoiserConfig, params: DenoiserParams) -> Result<Self> {
        let reference = Self::new(config.clone(), 0)?;
        if reference.params.names() != params.names() {
            return Err(Error::dim("parameter names do not match the architecture"));
        }
        for (n, (a, b)) in params.names().iter().zip(reference.params.tensors().iter().zip(params.tensors())) {
            if a.shape() != b.shape() {
                return Err(Error::dim(format!(
                    "parameter {n}: expected shape {:?}, found {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn params(&self) -> &DenoiserParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut DenoiserParams {
        &mut self.params
    }

    /// Records the full forward pass on `tape`. `param_vars` must come from
    /// [`Denoiser::push_params`] on the same tape. Returns `|Q| x dim_out`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        param_vars: &[Var],
        ctx: &Points,
        values: &[f64],
        cond: &Condition,
        t: f64,
        queries: &Points,
    ) -> Result<Var> {
        let mut net = net::Net::new(self, tape, param_vars);
        let latents = net.encode(ctx, values, cond, t)?;
        net.decode(latents, queries)
    }

    /// Pushes every parameter onto `tape` as a leaf.
    pub fn push_params(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.params.tensors().iter().map(|p| tape.leaf(p.clone(), trainable)).collect()
    }

    /// Latent set (`M x d`, layer-normalized) for one denoiser state.
    pub fn encode(&self, ctx: &Points, values: &[f64], cond: &Condition, t: f64) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.push_params(&mut tape, false);
        let mut net = net::Net::new(self, &mut tape, &vars);
        let z = net.encode(ctx, values, cond, t)?;
        Ok(tape.value(z).clone())
    }

    /// Predicted values (`|Q| * dim_out`, row-major) from encoded latents.
    /// Rows are computed in fixed-size blocks; each row's value is
    /// independent of the block it lands in.
    pub fn decode(&self, latents: &Tensor, queries: &Points) -> Result<Vec<f64>> {
        const BLOCK: usize = 256;
        let n = queries.len();
        let mut out = Vec::with_capacity(n * self.config.dim_out);
        let mut start = 0;
        while start < n {
            let end = (start + BLOCK).min(n);
            let idx: Vec<usize> = (start..end).collect();
            let block = queries.select(&idx);
            let mut tape = Tape::new();
            let vars = self.push_params(&mut tape, false);
            let mut net = net::Net::new(self, &mut tape, &vars);
            let z = net.tape.constant(latents.clone());
            let y = net.decode(z, &block)?;
            out.extend_from_slice(tape.value(y).data());
            start = end;
        }
        Ok(out)
    }

    /// Convenience: encode then decode.
    pub fn predict(&self, ctx: &Points, values: &[f64], cond: &Condition, t: f64, queries: &Points) -> Result<Vec<f64>> {
        let z = self.encode(ctx, values, cond, t)?;
        self.decode(&z, queries)
    }

    /// Time embedding after the projection MLP (width `d`).
    pub fn embed_time(&self, t: f64) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let vars = self.push_params(&mut tape, false);
        let mut net = net::Net::new(self, &mut tape, &vars);
        let e = net.time_embedding(t)?;
        Ok(tape.value(e).data().to_vec())
    }

    /// Per-stage AdaLN modulation at time `t`: `(scale, shift)` pairs for
    /// the attention and MLP norms of each self-attention block, with
    /// `scale = 1 + raw`.
    pub fn adaln_modulation(&self, t: f64) -> Result<Vec<[(Vec<f64>, Vec<f64>); 2]>> {
        let mut tape = Tape::new();
        let vars = self.push_params(&mut tape, false);
        let mut net = net::Net::new(self, &mut tape, &vars);
        let temb = net.time_embedding(t)?;
        let mut out = Vec::new();
        for s in 0..self.config.model.stages {
            let m = net.modulation(temb, s)?;
            let v = |x: Var| tape_row(net.tape, x);
            out.push([(v(m.scale1), v(m.shift1)), (v(m.scale2), v(m.shift2))]);
        }
        Ok(out)
    }
}

fn tape_row(tape: &Tape, v: Var) -> Vec<f64> {
    tape.value(v).data().to_vec()
}

/// Fourier features of each point: the raw coordinates, then
/// `sin(2^k pi x_a)` for all axes and bands, then the matching cosines.
/// Width `dim * (2F + 1)`.
pub fn embed_coords(points: &Points, num_frequencies: usize) -> Tensor {
    let dim = points.dim();
    let f = num_frequencies;
    let width = dim * (2 * f + 1);
    let mut data = Vec::with_capacity(points.len() * width);
    for p in points.iter() {
        data.extend_from_slice(p);
        for k in 0..f {
            let w = (1u64 << k) as f64 * std::f64::consts::PI;
            data.extend(p.iter().map(|x| (w * x).sin()));
        }
        for k in 0..f {
            let w = (1u64 << k) as f64 * std::f64::consts::PI;
            data.extend(p.iter().map(|x| (w * x).cos()));
        }
    }
    Tensor::matrix(points.len(), width, data).expect("shape")
}

/// Sinusoidal embedding of `t` of even width `d`: `[sin(1000 t w_i), cos(1000 t w_i)]`
/// with `w_i = 10000^(-i / (d/2))`.
pub fn sinusoidal_time(t: f64, d: usize) -> Vec<f64> {
    let half = d / 2;
    let mut out = vec![0.0; d];
    for i in 0..half {
        let w = (-(10000f64.ln()) * i as f64 / half as f64).exp();
        let a = 1000.0 * t * w;
        out[i] = a.sin();
        out[half + i] = a.cos();
    }
    out
}
