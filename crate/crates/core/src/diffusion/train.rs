use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forward_noise;
use crate::adcore::{Tape, Tensor, Var};
use crate::dataset::{
    draw_condition, generate_family, sample_context, sample_queries, Condition, DatasetConfig, FunctionSample,
};
use crate::denoiser::{Checkpoint, CheckpointMeta, Denoiser, DenoiserConfig};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::noise_field::{NoiseConfig, NoiseFunction};
use crate::rng;
use crate::schedule::{LossWeight, NoiseSchedule};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Cosine decay from `lr` to `lr * min_lr_ratio` over the run.
    Cosine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_schedule: LrSchedule,
    pub warmup_steps: u64,
    pub min_lr_ratio: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    pub seed: u64,
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 8,
            lr: 3e-4,
            lr_schedule: LrSchedule::Constant,
            warmup_steps: 0,
            min_lr_ratio: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip: 1.0,
            seed: 0,
            checkpoint_every: 500,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Range("train.batch_size must be >= 1".into()));
        }
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Range("need lr > 0 and betas in [0, 1)".into()));
        }
        if !(self.adam_eps > 0.0) || !(self.grad_clip >= 0.0) || !(0.0..=1.0).contains(&self.min_lr_ratio) {
            return Err(Error::Range("need adam_eps > 0, grad_clip >= 0, min_lr_ratio in [0, 1]".into()));
        }
        Ok(())
    }

    /// Learning rate for the update that produces step `step + 1`.
    pub fn lr_at(&self, step: u64) -> f64 {
        let warm = if self.warmup_steps > 0 && step < self.warmup_steps {
            (step + 1) as f64 / self.warmup_steps as f64
        } else {
            1.0
        };
        let decay = match self.lr_schedule {
            LrSchedule::Constant => 1.0,
            LrSchedule::Cosine => {
                let p = (step as f64 / self.steps.max(1) as f64).min(1.0);
                let c = 0.5 * (1.0 + (std::f64::consts::PI * p).cos());
                self.min_lr_ratio + (1.0 - self.min_lr_ratio) * c
            }
        };
        self.lr * warm * decay
    }
}

/// Everything that defines the training data stream.
#[derive(Clone, Debug)]
pub struct TrainSetup {
    pub schedule: NoiseSchedule,
    pub loss_weight: LossWeight,
    pub dataset: DatasetConfig,
    pub noise: NoiseConfig,
    pub train: TrainConfig,
}

/// One draw of (function, t, noise, context, queries).
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingExample {
    pub sample_index: usize,
    pub t: f64,
    /// Seed of the noise function `g`.
    pub noise_seed: u64,
    pub coords: crate::domain::Points,
    /// `f_t` at `coords`.
    pub values: Vec<f64>,
    pub queries: crate::domain::Points,
    /// `f0` at `queries`.
    pub targets: Vec<f64>,
    /// Freshly drawn condition under `dataset.resample_condition`; otherwise
    /// the sample's stored one is used.
    pub condition: Option<Condition>,
}

/// Draws the `b`-th example of optimizer step `step`. Every random choice is
/// keyed by `(seed, step, b)`, so the stream needs no stored RNG state.
pub fn draw_example(setup: &TrainSetup, family: &[FunctionSample], step: u64, b: usize) -> Result<TrainingExample> {
    let ds = &setup.dataset;
    let domain = ds.task.domain();
    let seed = rng::derive(setup.train.seed, &[0x7e57, step, b as u64]);
    let mut r = rng::stream(rng::derive(seed, &[0]));
    let sample_index = r.gen_range(0..family.len());
    let t = setup.schedule.sample_t(&mut r);
    let sample = &family[sample_index];
    let coords = sample_context(&domain, ds.context_size, rng::derive(seed, &[1]), ds.context_strategy)?;
    let noise_seed = rng::derive(seed, &[2]);
    let g = NoiseFunction::sample(&domain, &setup.noise.resolution_for(domain.dim()), ds.task.dim_out(), noise_seed)?;
    let f0 = sample.target.eval_batch(&coords)?;
    let values = forward_noise(&setup.schedule, &f0, &g.eval_batch(&coords)?, t)?;
    let queries = sample_queries(&domain, ds, &sample.target, &coords, rng::derive(seed, &[3]))?;
    let targets = sample.target.eval_batch(&queries)?;
    let condition = if ds.resample_condition {
        Some(draw_condition(&sample.target, ds.n_cond(), rng::derive(seed, &[4]))?)
    } else {
        None
    };
    Ok(TrainingExample {
        sample_index,
        t,
        noise_seed,
        coords,
        values,
        queries,
        targets,
        condition,
    })
}

/// `w(t) * sum_Q |D - f0|^2 / |Q|` recorded on `tape`.
pub fn example_loss(
    model: &Denoiser,
    tape: &mut Tape,
    vars: &[Var],
    ex: &TrainingExample,
    family: &[FunctionSample],
    weight: &LossWeight,
) -> Result<Var> {
    let cond = ex.condition.as_ref().unwrap_or(&family[ex.sample_index].condition);
    let y = model.forward(tape, vars, &ex.coords, &ex.values, cond, ex.t, &ex.queries)?;
    let nq = ex.queries.len();
    let target = tape.constant(Tensor::matrix(nq, model.config().dim_out, ex.targets.clone())?);
    let d = tape.sub(y, target)?;
    let sq = tape.mul(d, d)?;
    let s = tape.sum(sq);
    Ok(tape.scale(s, weight.at(ex.t) / nq as f64))
}

/// Bias-corrected Adam without weight decay.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    /// Updates applied so far.
    pub t: u64,
}

impl Adam {
    pub fn new(shapes: &[Tensor]) -> Self {
        Self {
            m: shapes.iter().map(|p| vec![0.0; p.numel()]).collect(),
            v: shapes.iter().map(|p| vec![0.0; p.numel()]).collect(),
            t: 0,
        }
    }

    pub fn update(&mut self, params: &mut [Tensor], grads: &[Vec<f64>], lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for (i, w) in p.data_mut().iter_mut().enumerate() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                *w -= lr * mh / (vh.sqrt() + cfg.adam_eps);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepStats {
    /// Step count after this update.
    pub step: u64,
    /// Batch-mean loss before the update.
    pub loss: f64,
    /// `(t, loss)` for every example in the batch.
    pub examples: Vec<(f64, f64)>,
    pub grad_norm: f64,
    pub lr: f64,
}

pub struct Trainer {
    pub setup: TrainSetup,
    pub model: Denoiser,
    pub adam: Adam,
    pub family: Vec<FunctionSample>,
}

impl Trainer {
    pub fn new(setup: TrainSetup, config: DenoiserConfig) -> Result<Self> {
        setup.train.validate()?;
        setup.dataset.validate()?;
        let model = Denoiser::new(config, rng::derive(setup.train.seed, &[0x30de1]))?;
        let family = generate_family(&setup.dataset, setup.dataset.count, setup.dataset.seed)?;
        let adam = Adam::new(model.params().tensors());
        Ok(Self {
            setup,
            model,
            adam,
            family,
        })
    }

    /// Restores full-precision weights and optimizer state written by
    /// [`Trainer::checkpoint`].
    pub fn resume(setup: TrainSetup, ckpt: Checkpoint) -> Result<Self> {
        let mut t = Self::new(setup, ckpt.model.config().clone())?;
        let missing = |n: &str| Error::Checkpoint {
            path: Default::default(),
            message: format!("checkpoint lacks training state {n}; cannot resume"),
        };
        let find = |n: String| -> Result<&Tensor> {
            ckpt.extra.iter().find(|(k, _)| *k == n).map(|(_, v)| v).ok_or_else(|| missing(&n))
        };
        let names: Vec<String> = t.model.params().names().to_vec();
        for (i, n) in names.iter().enumerate() {
            let w = find(format!("master.{n}"))?.clone();
            t.adam.m[i] = find(format!("adam.m.{n}"))?.data().to_vec();
            t.adam.v[i] = find(format!("adam.v.{n}"))?.data().to_vec();
            *t.model.params_mut().get_mut(n).expect("name from same model") = w;
        }
        t.adam.t = ckpt.meta.step;
        Ok(t)
    }

    pub fn step_count(&self) -> u64 {
        self.adam.t
    }

    /// Per-example loss and gradients for example `b` of the current step.
    fn example_grads(&self, b: usize) -> Result<(f64, f64, Vec<Vec<f64>>)> {
        let ex = draw_example(&self.setup, &self.family, self.adam.t, b)?;
        let mut tape = Tape::new();
        let vars = self.model.push_params(&mut tape, true);
        let loss = example_loss(&self.model, &mut tape, &vars, &ex, &self.family, &self.setup.loss_weight)?;
        let value = tape.value(loss).item()?;
        if !value.is_finite() {
            return Err(Error::NonFinite {
                step: self.adam.t + 1,
                t: ex.t,
                loss: value,
            });
        }
        let mut grads = tape.backward(loss)?;
        let g = vars
            .iter()
            .zip(self.model.params().tensors())
            .map(|(v, p)| grads.take(*v).map(Tensor::into_data).unwrap_or_else(|| vec![0.0; p.numel()]))
            .collect();
        Ok((ex.t, value, g))
    }

    /// One optimizer step over a batch. Example gradients may be computed in
    /// parallel; they are summed in batch order, so results do not depend on
    /// the thread count.
    pub fn step(&mut self) -> Result<StepStats> {
        let bs = self.setup.train.batch_size;
        let results: Vec<Result<(f64, f64, Vec<Vec<f64>>)>> =
            (0..bs).into_par_iter().map(|b| self.example_grads(b)).collect();
        let mut examples = Vec::with_capacity(bs);
        let mut total: Option<Vec<Vec<f64>>> = None;
        for r in results {
            let (t, loss, g) = r?;
            examples.push((t, loss));
            match &mut total {
                None => total = Some(g),
                Some(acc) => {
                    for (a, gi) in acc.iter_mut().zip(&g) {
                        a.iter_mut().zip(gi).for_each(|(x, y)| *x += y);
                    }
                }
            }
        }
        let mut grads = total.expect("batch_size >= 1");
        let inv = 1.0 / bs as f64;
        grads.iter_mut().flatten().for_each(|g| *g *= inv);
        let loss = examples.iter().map(|e| e.1).sum::<f64>() * inv;
        let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFinite {
                step: self.adam.t + 1,
                t: examples.iter().map(|e| e.0).fold(f64::NAN, f64::max),
                loss: norm,
            });
        }
        let clip = self.setup.train.grad_clip;
        if clip > 0.0 && norm > clip {
            let s = clip / norm;
            grads.iter_mut().flatten().for_each(|g| *g *= s);
        }
        let lr = self.setup.train.lr_at(self.adam.t);
        let cfg = self.setup.train.clone();
        self.adam.update(self.model.params_mut().tensors_mut(), &grads, lr, &cfg);
        Ok(StepStats {
            step: self.adam.t,
            loss,
            examples,
            grad_norm: norm,
            lr,
        })
    }

    /// Checkpoint carrying full-precision weights and optimizer moments.
    pub fn checkpoint(&self, run_config_hash: Option<String>) -> Checkpoint {
        let p = self.model.params();
        let mut extra = Vec::with_capacity(3 * p.len());
        for (i, (n, w)) in p.names().iter().zip(p.tensors()).enumerate() {
            let shape = w.shape().to_vec();
            extra.push((format!("master.{n}"), w.clone()));
            extra.push((
                format!("adam.m.{n}"),
                Tensor::new(shape.clone(), self.adam.m[i].clone()).expect("shape"),
            ));
            extra.push((
                format!("adam.v.{n}"),
                Tensor::new(shape, self.adam.v[i].clone()).expect("shape"),
            ));
        }
        Checkpoint {
            model: self.model.clone(),
            meta: CheckpointMeta {
                step: self.adam.t,
                run_config_hash,
            },
            extra,
        }
    }
}
