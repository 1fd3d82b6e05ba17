use super::{embed_coords, sinusoidal_time, Denoiser};
use crate::adcore::{Tape, Tensor, Var};
use crate::dataset::Condition;
use crate::domain::Points;
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;

pub(super) struct Modulation {
    pub shift1: Var,
    pub scale1: Var,
    pub shift2: Var,
    pub scale2: Var,
}

/// One forward pass recorded on a tape.
pub(super) struct Net<'a> {
    model: &'a Denoiser,
    pub tape: &'a mut Tape,
    vars: &'a [Var],
}

impl<'a> Net<'a> {
    pub fn new(model: &'a Denoiser, tape: &'a mut Tape, vars: &'a [Var]) -> Self {
        Self { model, tape, vars }
    }

    fn p(&self, name: &str) -> Var {
        let i = self
            .model
            .params
            .position(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        self.vars[i]
    }

    fn linear(&mut self, x: Var, name: &str) -> Result<Var> {
        let w = self.p(&format!("{name}.w"));
        let b = self.p(&format!("{name}.b"));
        let y = self.tape.matmul(x, w)?;
        self.tape.add_row(y, b)
    }

    fn mlp(&mut self, x: Var, name: &str) -> Result<Var> {
        let h = self.linear(x, &format!("{name}.l1"))?;
        let h = self.tape.gelu(h);
        self.linear(h, &format!("{name}.l2"))
    }

    fn ln(&mut self, x: Var) -> Result<Var> {
        self.tape.layer_norm(x, None, None, LN_EPS)
    }

    /// Multi-head attention from `q_in` rows into `kv_in` rows.
    fn attention(&mut self, q_in: Var, kv_in: Var, name: &str) -> Result<Var> {
        let heads = self.model.config.model.heads;
        let dh = self.model.config.model.width / heads;
        let q = self.linear(q_in, &format!("{name}.q"))?;
        let k = self.linear(kv_in, &format!("{name}.k"))?;
        let v = self.linear(kv_in, &format!("{name}.v"))?;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let (qh, kh, vh) = if heads == 1 {
                (q, k, v)
            } else {
                (
                    self.tape.slice(q, 1, h * dh, dh)?,
                    self.tape.slice(k, 1, h * dh, dh)?,
                    self.tape.slice(v, 1, h * dh, dh)?,
                )
            };
            let s = self.tape.matmul_t(qh, kh)?;
            let s = self.tape.scale(s, scale);
            let a = self.tape.softmax(s, 1)?;
            outs.push(self.tape.matmul(a, vh)?);
        }
        let o = if heads == 1 { outs[0] } else { self.tape.concat(&outs, 1)? };
        self.linear(o, &format!("{name}.o"))
    }

    pub fn time_embedding(&mut self, t: f64) -> Result<Var> {
        // Schedules may run past t = 1 (see `schedule.t_max`).
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::Range(format!("denoiser time {t} must be finite and >= 0")));
        }
        let d = self.model.config.model.width;
        let e = self.tape.constant(Tensor::row(sinusoidal_time(t, d)));
        let h = self.linear(e, "time.l1")?;
        let h = self.tape.gelu(h);
        self.linear(h, "time.l2")
    }

    pub fn modulation(&mut self, temb: Var, stage: usize) -> Result<Modulation> {
        let d = self.model.config.model.width;
        let h = self.tape.gelu(temb);
        let m = self.linear(h, &format!("stage{stage}.adaln"))?;
        let ones = self.tape.constant(Tensor::full(vec![1, d], 1.0));
        let shift1 = self.tape.slice(m, 1, 0, d)?;
        let raw1 = self.tape.slice(m, 1, d, d)?;
        let shift2 = self.tape.slice(m, 1, 2 * d, d)?;
        let raw2 = self.tape.slice(m, 1, 3 * d, d)?;
        let scale1 = self.tape.add(raw1, ones)?;
        let scale2 = self.tape.add(raw2, ones)?;
        Ok(Modulation {
            shift1,
            scale1,
            shift2,
            scale2,
        })
    }

    fn modulated_ln(&mut self, x: Var, scale: Var, shift: Var) -> Result<Var> {
        let h = self.ln(x)?;
        let h = self.tape.mul_row(h, scale)?;
        self.tape.add_row(h, shift)
    }

    fn tokens(&mut self, points: &Points, values: &[f64], value_dim: usize, name: &str) -> Result<Var> {
        let f = self.model.config.model.num_frequencies;
        let emb = embed_coords(points, f);
        let (n, e) = (points.len(), emb.shape()[1]);
        let mut data = Vec::with_capacity(n * (e + value_dim));
        for i in 0..n {
            data.extend_from_slice(&emb.data()[i * e..(i + 1) * e]);
            data.extend_from_slice(&values[i * value_dim..(i + 1) * value_dim]);
        }
        let x = self.tape.constant(Tensor::matrix(n, e + value_dim, data)?);
        self.mlp(x, name)
    }

    /// Latent set after all stages, layer-normalized (`M x d`).
    pub fn encode(&mut self, ctx: &Points, values: &[f64], cond: &Condition, t: f64) -> Result<Var> {
        let model = self.model;
        let cfg = &model.config;
        if ctx.is_empty() {
            return Err(Error::Empty("denoiser needs at least one context point".into()));
        }
        if ctx.dim() != cfg.dim_in || cond.points.dim() != cfg.dim_in {
            return Err(Error::dim(format!(
                "denoiser expects {}-d points, got context {}-d / condition {}-d",
                cfg.dim_in,
                ctx.dim(),
                cond.points.dim()
            )));
        }
        if values.len() != ctx.len() * cfg.dim_out {
            return Err(Error::dim(format!(
                "{} context points need {} values, got {}",
                ctx.len(),
                ctx.len() * cfg.dim_out,
                values.len()
            )));
        }
        if !cond.is_empty() && cond.value_dim != cfg.cond_dim {
            return Err(Error::dim(format!(
                "condition carries {} values per point, model expects {}",
                cond.value_dim, cfg.cond_dim
            )));
        }
        let (stages, dim_out) = (cfg.model.stages, cfg.dim_out);

        let temb = self.time_embedding(t)?;
        // Inputs are brought to unit scale: f_t has variance
        // alpha^2 s^2 + sigma^2 = (s^2 + t^2) / (t^2 + 1) for data std s.
        let s = cfg.model.data_std;
        let (values, cond_values) = if s == 1.0 {
            (values.to_vec(), cond.values.clone())
        } else {
            let c_in = ((t * t + 1.0) / (s * s + t * t)).sqrt();
            (values.iter().map(|v| v * c_in).collect(), cond.values.iter().map(|v| v / s).collect())
        };
        let ctx_tokens = self.tokens(ctx, &values, dim_out, "context")?;
        let cond_tokens = if cond.is_empty() {
            None
        } else {
            let c = self.tokens(&cond.points, &cond_values, cond.value_dim, "condition")?;
            let tag = self.p("condition.tag");
            Some(self.tape.add_row(c, tag)?)
        };

        // Contiguous chunks; the last one wraps around to stay full.
        let n = ctx.len();
        let chunk = n.div_ceil(stages);
        let mut z = self.p("latents");
        for s in 0..stages {
            let idx: Vec<usize> = (0..chunk).map(|j| (s * chunk + j) % n).collect();
            let part = self.tape.gather(ctx_tokens, &idx)?;
            let kv = match cond_tokens {
                Some(c) => self.tape.concat(&[part, c], 0)?,
                None => part,
            };
            let kv = self.ln(kv)?;
            let q = self.ln(z)?;
            let a = self.attention(q, kv, &format!("stage{s}.cross"))?;
            z = self.tape.add(z, a)?;
            let h = self.ln(z)?;
            let h = self.mlp(h, &format!("stage{s}.cross_mlp"))?;
            z = self.tape.add(z, h)?;

            let m = self.modulation(temb, s)?;
            let h = self.modulated_ln(z, m.scale1, m.shift1)?;
            let a = self.attention(h, h, &format!("stage{s}.self"))?;
            z = self.tape.add(z, a)?;
            let h = self.modulated_ln(z, m.scale2, m.shift2)?;
            let h = self.mlp(h, &format!("stage{s}.self_mlp"))?;
            z = self.tape.add(z, h)?;
        }
        self.ln(z)
    }

    /// Values at `queries` from encoded latents (`|Q| x dim_out`).
    pub fn decode(&mut self, latents: Var, queries: &Points) -> Result<Var> {
        let model = self.model;
        let cfg = &model.config;
        if queries.dim() != cfg.dim_in {
            return Err(Error::dim(format!(
                "denoiser expects {}-d queries, got {}-d",
                cfg.dim_in,
                queries.dim()
            )));
        }
        if queries.is_empty() {
            return Ok(self.tape.constant(Tensor::zeros(vec![0, cfg.dim_out])));
        }
        let q = self.tokens(queries, &[], 0, "query")?;
        let h = self.ln(q)?;
        let a = self.attention(h, latents, "decoder.cross")?;
        let q = self.tape.add(q, a)?;
        let h = self.ln(q)?;
        let h = self.mlp(h, "decoder.mlp")?;
        let q = self.tape.add(q, h)?;
        let h = self.ln(q)?;
        let y = self.linear(h, "decoder.head")?;
        let s = cfg.model.data_std;
        Ok(if s == 1.0 { y } else { self.tape.scale(y, s) })
    }
}
