//! Noise schedule `alpha_t = 1/sqrt(t^2+1)`, `sigma_t = t/sqrt(t^2+1)`.
//!
//! `alpha_t^2 + sigma_t^2 = 1` and the signal-to-noise ratio is
//! `alpha_t^2 / sigma_t^2 = 1 / t^2`. Time runs from 0 (clean) to `t_max`
//! (noisiest), 1 by default. At `t = 1` the SNR is still 1, so a larger
//! `t_max` brings the last training noise level close to the pure noise the
//! sampler starts from.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// `alpha = 1/sqrt(t^2+1)`, `sigma = t/sqrt(t^2+1)`.
    #[default]
    Rational,
}

/// How sampling timesteps `T(k)` are spaced on `[0, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSpacing {
    /// `T(k) = k / N`.
    #[default]
    Linear,
    /// `T(k) = (k / N)^2`, denser near `t = 0`.
    Quadratic,
}

/// Training-time distribution of `t`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeDistribution {
    /// Uniform on `[eps_sigma, t_max]`.
    #[default]
    Uniform,
    /// `t = t_max u^2` for uniform `u`, floored at `eps_sigma`; matches the
    /// quadratic sampling grid.
    Quadratic,
}

/// Loss weighting `w(t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum LossWeight {
    Constant(f64),
}

impl Default for LossWeight {
    fn default() -> Self {
        LossWeight::Constant(1.0)
    }
}

impl LossWeight {
    pub fn at(&self, _t: f64) -> f64 {
        match *self {
            LossWeight::Constant(w) => w,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    pub num_steps: usize,
    pub eps_sigma: f64,
    pub spacing: GridSpacing,
    pub loss_weight: LossWeight,
    pub t_max: f64,
    pub train_t: TimeDistribution,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            kind: ScheduleKind::Rational,
            num_steps: 50,
            eps_sigma: 1e-6,
            spacing: GridSpacing::Linear,
            loss_weight: LossWeight::default(),
            t_max: 1.0,
            train_t: TimeDistribution::Uniform,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSchedule {
    pub kind: ScheduleKind,
    /// Smallest `sigma` the sampler will divide by; also the lower end of
    /// the training-time distribution of `t`.
    pub eps_sigma: f64,
    /// Largest time; the sampler starts here.
    pub t_max: f64,
    pub train_t: TimeDistribution,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self {
            kind: ScheduleKind::Rational,
            eps_sigma: 1e-6,
            t_max: 1.0,
            train_t: TimeDistribution::Uniform,
        }
    }
}

impl NoiseSchedule {
    pub fn from_config(cfg: &ScheduleConfig) -> Result<Self> {
        if !(cfg.eps_sigma > 0.0 && cfg.eps_sigma < 1.0) {
            return Err(Error::Config {
                path: "schedule.eps_sigma".into(),
                message: format!("must lie in (0, 1), got {}", cfg.eps_sigma),
            });
        }
        if !(cfg.t_max.is_finite() && cfg.t_max > cfg.eps_sigma) {
            return Err(Error::Config {
                path: "schedule.t_max".into(),
                message: format!("must be finite and above eps_sigma, got {}", cfg.t_max),
            });
        }
        Ok(Self {
            kind: cfg.kind,
            eps_sigma: cfg.eps_sigma,
            t_max: cfg.t_max,
            train_t: cfg.train_t,
        })
    }

    /// `(alpha_t, sigma_t)` for `t` in `[0, t_max]`.
    pub fn alpha_sigma(&self, t: f64) -> Result<(f64, f64)> {
        if !(0.0..=self.t_max).contains(&t) {
            return Err(Error::Range(format!("timestep {t} outside [0, {}]", self.t_max)));
        }
        match self.kind {
            ScheduleKind::Rational => {
                let norm = (t * t + 1.0).sqrt();
                Ok((1.0 / norm, t / norm))
            }
        }
    }

    /// `alpha_t^2 / sigma_t^2`; infinite at `t = 0`, so rejected below `eps_sigma`.
    pub fn snr(&self, t: f64) -> Result<f64> {
        if t <= self.eps_sigma {
            return Err(Error::Range(format!("SNR is unbounded at t = {t}")));
        }
        let (a, s) = self.alpha_sigma(t)?;
        Ok((a * a) / (s * s))
    }

    /// Training-time draw of `t`. Consumes one uniform draw either way.
    pub fn sample_t<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.train_t {
            TimeDistribution::Uniform => rng.gen_range(self.eps_sigma..=self.t_max),
            TimeDistribution::Quadratic => {
                let u: f64 = rng.gen_range(0.0..=1.0);
                (self.t_max * u * u).max(self.eps_sigma)
            }
        }
    }

    /// Sampling grid ending at `t_max`.
    pub fn grid(&self, n: usize, spacing: GridSpacing) -> Result<TimestepGrid> {
        TimestepGrid::with_end(n, spacing, self.t_max)
    }
}

/// Sampling timesteps `t_N = 1 > t_{N-1} > ... > t_0 = 0` (or scaled to end
/// at `t_max`), stored in traversal order (descending).
#[derive(Clone, Debug, PartialEq)]
pub struct TimestepGrid {
    values: Vec<f64>,
}

impl TimestepGrid {
    pub fn new(n: usize, spacing: GridSpacing) -> Result<Self> {
        Self::with_end(n, spacing, 1.0)
    }

    /// Grid with `T(N) = end`.
    pub fn with_end(n: usize, spacing: GridSpacing, end: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Range("timestep grid needs at least one step".into()));
        }
        let values = (0..=n)
            .rev()
            .map(|k| {
                let u = k as f64 / n as f64;
                end * match spacing {
                    GridSpacing::Linear => u,
                    GridSpacing::Quadratic => u * u,
                }
            })
            .collect();
        Ok(Self { values })
    }

    /// Number of steps `N`.
    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    /// `[t_N, ..., t_0]`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `T(k)`.
    pub fn at(&self, k: usize) -> f64 {
        self.values[self.steps() - k]
    }

    /// Consecutive `(t, s)` pairs with `s < t`, in sampling order.
    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values.windows(2).map(|w| (w[0], w[1]))
    }
}

/// Linear grid `T(k) = k / N`.
pub fn timestep_grid(n: usize) -> Result<TimestepGrid> {
    TimestepGrid::new(n, GridSpacing::Linear)
}
