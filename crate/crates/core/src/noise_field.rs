//! Continuous noise functions: i.i.d. standard normals on a regular grid over
//! the domain box, extended by multilinear interpolation.
//!
//! Manifold domains need no special handling: the field lives in the ambient
//! box and is simply evaluated at the manifold's coordinates.

use serde::{Deserialize, Serialize};

use crate::domain::{DomainSpec, Points};
use crate::error::{Error, Result};
use crate::field::{check_dim, Field};
use crate::rng;

/// Coordinates within this distance (in grid units) of a node snap onto it.
const NODE_SNAP: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Nodes per axis; empty selects 32 per axis in 1D/2D and 16 in 3D.
    pub resolution: Vec<usize>,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            resolution: Vec::new(),
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn resolution_for(&self, dim: usize) -> Vec<usize> {
        if self.resolution.is_empty() {
            vec![if dim == 3 { 16 } else { 32 }; dim]
        } else {
            self.resolution.clone()
        }
    }
}

/// One scalar noise function.
#[derive(Clone, Debug, PartialEq)]
pub struct GridNoiseField {
    domain: DomainSpec,
    resolution: Vec<usize>,
    node_values: Vec<f64>,
    seed: u64,
}

/// Draws a noise field; node `i` gets the counter-based normal `(seed, i)`.
pub fn sample_noise_field(domain: &DomainSpec, resolution: &[usize], seed: u64) -> Result<GridNoiseField> {
    if resolution.len() != domain.dim() {
        return Err(Error::dim(format!(
            "noise resolution {resolution:?} does not match a {}-d domain",
            domain.dim()
        )));
    }
    if let Some(r) = resolution.iter().find(|&&r| r < 2) {
        return Err(Error::Range(format!("noise resolution must be >= 2 per axis, got {r}")));
    }
    let n: usize = resolution.iter().product();
    let node_values = (0..n as u64).map(|i| rng::normal_at(seed, i)).collect();
    Ok(GridNoiseField {
        domain: domain.clone(),
        resolution: resolution.to_vec(),
        node_values,
        seed,
    })
}

impl GridNoiseField {
    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn node_values(&self) -> &[f64] {
        &self.node_values
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Flat index of a multi-index (x fastest).
    pub fn node_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.resolution)
            .rev()
            .fold(0, |acc, (&i, &r)| acc * r + i)
    }

    /// Coordinates of node `idx`.
    pub fn node_coord(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(a, &i)| {
                let (lo, hi) = (self.domain.lo()[a], self.domain.hi()[a]);
                lo + (hi - lo) * i as f64 / (self.resolution[a] - 1) as f64
            })
            .collect()
    }

    /// Grid spacing along each axis.
    pub fn spacing(&self) -> Vec<f64> {
        (0..self.domain.dim())
            .map(|a| (self.domain.hi()[a] - self.domain.lo()[a]) / (self.resolution[a] - 1) as f64)
            .collect()
    }

    /// Lower corner cell index and fractional offset along each axis.
    fn locate(&self, x: &[f64]) -> ([usize; 3], [f64; 3]) {
        let mut cell = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..x.len() {
            let (lo, hi) = (self.domain.lo()[a], self.domain.hi()[a]);
            let last = (self.resolution[a] - 1) as f64;
            let mut u = (x[a] - lo) / (hi - lo) * last;
            let r = u.round();
            if (u - r).abs() < NODE_SNAP {
                u = r;
            }
            let i = (u.floor().max(0.0) as usize).min(self.resolution[a] - 2);
            cell[a] = i;
            frac[a] = u - i as f64;
        }
        (cell, frac)
    }

    /// Multilinear interpolation of the surrounding `2^dim` node values.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.domain.check(x)?;
        Ok(self.interp(x))
    }

    fn interp(&self, x: &[f64]) -> f64 {
        let dim = x.len();
        let (cell, frac) = self.locate(x);
        let mut acc = 0.0;
        for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            let mut idx = [0usize; 3];
            for a in 0..dim {
                let bit = (corner >> a) & 1;
                idx[a] = cell[a] + bit;
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
            }
            acc += w * self.node_values[self.node_index(&idx[..dim])];
        }
        acc
    }

    /// Values of the `2^dim` nodes around `x`.
    pub fn corner_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.domain.check(x)?;
        let dim = x.len();
        let (cell, _) = self.locate(x);
        Ok((0..(1usize << dim))
            .map(|corner| {
                let idx: Vec<usize> = (0..dim).map(|a| cell[a] + ((corner >> a) & 1)).collect();
                self.node_values[self.node_index(&idx)]
            })
            .collect())
    }

    /// Element-wise [`GridNoiseField::evaluate`].
    pub fn evaluate_batch(&self, points: &Points) -> Result<Vec<f64>> {
        check_dim(self.domain.dim(), points)?;
        points.iter().map(|p| self.evaluate(p)).collect()
    }

    /// Largest absolute difference between neighbouring nodes divided by the
    /// grid spacing along that axis; a Lipschitz bound per axis.
    pub fn lipschitz_bound(&self) -> f64 {
        let dim = self.domain.dim();
        let spacing = self.spacing();
        let mut best: f64 = 0.0;
        let n = self.node_values.len();
        for flat in 0..n {
            let mut rem = flat;
            let mut idx = [0usize; 3];
            for a in 0..dim {
                idx[a] = rem % self.resolution[a];
                rem /= self.resolution[a];
            }
            for a in 0..dim {
                if idx[a] + 1 < self.resolution[a] {
                    let mut nb = idx;
                    nb[a] += 1;
                    let d = (self.node_values[self.node_index(&nb[..dim])] - self.node_values[flat]).abs();
                    best = best.max(d / spacing[a]);
                }
            }
        }
        best
    }
}

/// Vector-valued noise function: one independent [`GridNoiseField`] per
/// output channel.
#[derive(Clone, Debug)]
pub struct NoiseFunction {
    channels: Vec<GridNoiseField>,
}

impl NoiseFunction {
    /// Channel `c` is keyed by `rng::derive(seed, [c])`.
    pub fn sample(domain: &DomainSpec, resolution: &[usize], channels: usize, seed: u64) -> Result<Self> {
        let channels = (0..channels as u64)
            .map(|c| sample_noise_field(domain, resolution, rng::derive(seed, &[c])))
            .collect::<Result<_>>()?;
        Ok(Self { channels })
    }

    pub fn channels(&self) -> &[GridNoiseField] {
        &self.channels
    }
}

impl Field for NoiseFunction {
    fn dim_in(&self) -> usize {
        self.channels[0].domain.dim()
    }

    fn dim_out(&self) -> usize {
        self.channels.len()
    }

    fn eval_batch(&self, points: &Points) -> Result<Vec<f64>> {
        check_dim(self.dim_in(), points)?;
        let k = self.channels.len();
        let mut out = vec![0.0; points.len() * k];
        for (c, field) in self.channels.iter().enumerate() {
            for (i, p) in points.iter().enumerate() {
                out[i * k + c] = field.evaluate(p)?;
            }
        }
        Ok(out)
    }
}

impl Field for GridNoiseField {
    fn dim_in(&self) -> usize {
        self.domain.dim()
    }

    fn dim_out(&self) -> usize {
        1
    }

    fn eval_batch(&self, points: &Points) -> Result<Vec<f64>> {
        self.evaluate_batch(points)
    }
}
