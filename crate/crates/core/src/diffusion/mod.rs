//! Forward noising, the deterministic sampler, and training.
//!
//! A noised state is `f_t = alpha_t f0 + sigma_t g` for a noise function `g`.
//! The sampler keeps its state as values at a fixed set of context points and
//! steps it down a timestep grid with
//!
//! ```text
//! f_s = (sigma_s / sigma_t) f_t + (alpha_s - sigma_s alpha_t / sigma_t) D(f_t, t)
//! ```
//!
//! Since `sigma_0 = 0`, the final function is `D` evaluated on the state at
//! the smallest nonzero grid time, which can be queried at arbitrary points.

mod train;

use crate::adcore::Tensor;
use crate::dataset::{sample_context, Condition, ContextStrategy};
use crate::denoiser::Denoiser;
use crate::domain::{DomainSpec, Points};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::noise_field::NoiseFunction;
use crate::rng;
use crate::schedule::{GridSpacing, NoiseSchedule};

pub use train::{
    draw_example, example_loss, Adam, LrSchedule, StepStats, TrainConfig, TrainSetup, Trainer,
    TrainingExample,
};

/// `alpha_t * f0 + sigma_t * g`, element-wise.
pub fn forward_noise(schedule: &NoiseSchedule, f0: &[f64], g: &[f64], t: f64) -> Result<Vec<f64>> {
    if f0.len() != g.len() {
        return Err(Error::dim(format!("f0 has {} values, g has {}", f0.len(), g.len())));
    }
    let (a, s) = schedule.alpha_sigma(t)?;
    Ok(f0.iter().zip(g).map(|(x, n)| a * x + s * n).collect())
}

/// Something that maps a noised context state to a denoised function.
pub trait Denoise: Sync {
    fn dim_out(&self) -> usize;

    /// The denoised function for one state, evaluable at any point.
    fn prepare<'a>(&'a self, ctx: &Points, values: &[f64], cond: &Condition, t: f64) -> Result<Box<dyn Field + 'a>>;
}

/// A denoiser state with its latents computed once.
pub struct LatentField<'a> {
    model: &'a Denoiser,
    latents: Tensor,
}

impl LatentField<'_> {
    pub fn latents(&self) -> &Tensor {
        &self.latents
    }
}

impl Field for LatentField<'_> {
    fn dim_in(&self) -> usize {
        self.model.config().dim_in
    }

    fn dim_out(&self) -> usize {
        self.model.config().dim_out
    }

    fn eval_batch(&self, points: &Points) -> Result<Vec<f64>> {
        self.model.decode(&self.latents, points)
    }
}

impl Denoise for Denoiser {
    fn dim_out(&self) -> usize {
        self.config().dim_out
    }

    fn prepare<'a>(&'a self, ctx: &Points, values: &[f64], cond: &Condition, t: f64) -> Result<Box<dyn Field + 'a>> {
        let latents = self.encode(ctx, values, cond, t)?;
        Ok(Box::new(LatentField { model: self, latents }))
    }
}

/// The perfect denoiser for one known clean function: it ignores the state
/// and returns `f0`.
pub struct OracleDenoiser<'f> {
    target: &'f dyn Field,
}

impl<'f> OracleDenoiser<'f> {
    pub fn new(target: &'f dyn Field) -> Self {
        Self { target }
    }
}

struct Borrowed<'a>(&'a dyn Field);

impl Field for Borrowed<'_> {
    fn dim_in(&self) -> usize {
        self.0.dim_in()
    }

    fn dim_out(&self) -> usize {
        self.0.dim_out()
    }

    fn eval_batch(&self, points: &Points) -> Result<Vec<f64>> {
        self.0.eval_batch(points)
    }
}

impl Denoise for OracleDenoiser<'_> {
    fn dim_out(&self) -> usize {
        self.target.dim_out()
    }

    fn prepare<'a>(&'a self, _ctx: &Points, _values: &[f64], _cond: &Condition, _t: f64) -> Result<Box<dyn Field + 'a>> {
        Ok(Box::new(Borrowed(self.target)))
    }
}

/// Sampler state: values of `f_t` at fixed context coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionState {
    pub coords: Points,
    pub values: Vec<f64>,
    pub t: f64,
    /// Grid index of `t` (counts down to 1).
    pub k: usize,
}

/// Coefficients `(sigma_s / sigma_t, alpha_s - sigma_s alpha_t / sigma_t)`.
/// `s == t` gives exactly `(1, 0)` and `s == 0` gives exactly `(0, 1)`.
pub fn ddim_coefficients(schedule: &NoiseSchedule, t: f64, s: f64) -> Result<(f64, f64)> {
    if !(s >= 0.0 && s <= t) {
        return Err(Error::Range(format!("sampler step needs 0 <= s <= t, got s={s}, t={t}")));
    }
    let (at, st) = schedule.alpha_sigma(t)?;
    if !(st > schedule.eps_sigma) {
        return Err(Error::Range(format!(
            "sigma_t = {st} at t = {t} is below the guard {}",
            schedule.eps_sigma
        )));
    }
    let (as_, ss) = schedule.alpha_sigma(s)?;
    let ratio = ss / st;
    Ok((ratio, as_ - ratio * at))
}

/// `f_s` at the context points given the denoiser's prediction there.
pub fn ddim_update(schedule: &NoiseSchedule, state: &DiffusionState, s: f64, denoised: &[f64]) -> Result<Vec<f64>> {
    if denoised.len() != state.values.len() {
        return Err(Error::dim("denoised values do not match the state"));
    }
    let (ratio, coef) = ddim_coefficients(schedule, state.t, s)?;
    Ok(state.values.iter().zip(denoised).map(|(f, d)| ratio * f + coef * d).collect())
}

/// One sampler step from `state.t` to `s` with the denoiser evaluated at the
/// context coordinates.
pub fn ddim_step(
    denoiser: &dyn Denoise,
    schedule: &NoiseSchedule,
    state: &DiffusionState,
    cond: &Condition,
    s: f64,
) -> Result<DiffusionState> {
    ddim_coefficients(schedule, state.t, s)?;
    let d = denoiser.prepare(&state.coords, &state.values, cond, state.t)?;
    let pred = d.eval_batch(&state.coords)?;
    Ok(DiffusionState {
        coords: state.coords.clone(),
        values: ddim_update(schedule, state, s, &pred)?,
        t: s,
        k: state.k.saturating_sub(1),
    })
}

/// Sampling run parameters.
#[derive(Clone, Debug)]
pub struct SampleSpec {
    pub domain: DomainSpec,
    pub steps: usize,
    pub spacing: GridSpacing,
    pub context_size: usize,
    pub context_strategy: ContextStrategy,
    pub noise_resolution: Vec<usize>,
    pub seed: u64,
}

/// One recorded sampler step.
pub struct TraceStep<'a> {
    /// Grid index of the step's starting time.
    pub k: usize,
    pub t: f64,
    pub s: f64,
    /// Root-mean-square change of the context values over the step.
    pub context_rmse_change: f64,
    /// The denoiser's estimate of the clean function at time `t`.
    pub estimate: Box<dyn Field + 'a>,
}

/// Output of a sampling run: a function evaluable anywhere in the domain.
pub struct GeneratedFunction<'a> {
    field: Box<dyn Field + 'a>,
    /// Context state the final function was computed from.
    pub state: DiffusionState,
    pub trace: Vec<TraceStep<'a>>,
}

impl Field for GeneratedFunction<'_> {
    fn dim_in(&self) -> usize {
        self.field.dim_in()
    }

    fn dim_out(&self) -> usize {
        self.field.dim_out()
    }

    fn eval_batch(&self, points: &Points) -> Result<Vec<f64>> {
        self.field.eval_batch(points)
    }
}

fn rms_change(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len().max(1) as f64).sqrt()
}

/// Generates one function: draws the context points and a noise function
/// once, sets the state to the noise, steps down to the smallest nonzero grid
/// time, and returns the denoiser's output there.
pub fn sample<'a>(
    denoiser: &'a dyn Denoise,
    schedule: &NoiseSchedule,
    cond: &Condition,
    spec: &SampleSpec,
    record_trace: bool,
) -> Result<GeneratedFunction<'a>> {
    let grid = schedule.grid(spec.steps, spec.spacing)?;
    let coords = sample_context(&spec.domain, spec.context_size, rng::derive(spec.seed, &[0]), spec.context_strategy)?;
    let noise = NoiseFunction::sample(
        &spec.domain,
        &spec.noise_resolution,
        denoiser.dim_out(),
        rng::derive(spec.seed, &[1]),
    )?;
    let values = noise.eval_batch(&coords)?;
    let n = spec.steps;
    let mut state = DiffusionState {
        coords,
        values,
        t: grid.at(n),
        k: n,
    };
    let mut trace = Vec::new();
    for k in (2..=n).rev() {
        let s = grid.at(k - 1);
        let d = denoiser.prepare(&state.coords, &state.values, cond, state.t)?;
        let pred = d.eval_batch(&state.coords)?;
        let next = ddim_update(schedule, &state, s, &pred)?;
        if record_trace {
            trace.push(TraceStep {
                k,
                t: state.t,
                s,
                context_rmse_change: rms_change(&next, &state.values),
                estimate: d,
            });
        }
        state = DiffusionState {
            coords: state.coords,
            values: next,
            t: s,
            k: k - 1,
        };
    }
    let field = denoiser.prepare(&state.coords, &state.values, cond, state.t)?;
    if record_trace {
        let last = field.eval_batch(&state.coords)?;
        let estimate = denoiser.prepare(&state.coords, &state.values, cond, state.t)?;
        trace.push(TraceStep {
            k: 1,
            t: state.t,
            s: 0.0,
            context_rmse_change: rms_change(&last, &state.values),
            estimate,
        });
    }
    Ok(GeneratedFunction { field, state, trace })
}
