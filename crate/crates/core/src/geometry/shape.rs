use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::Points;
use crate::error::{Error, Result};
use crate::field::{check_dim, Field};
use crate::rng;

/// A shape with an exact (positive-inside) signed distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AnalyticShape {
    /// Interval, disk or ball.
    Ball { center: Vec<f64>, radius: f64 },
    /// Axis-aligned box.
    Cuboid { center: Vec<f64>, half_extents: Vec<f64> },
    Union { members: Vec<AnalyticShape> },
}

impl AnalyticShape {
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Range(format!("ball radius must be positive, got {radius}")));
        }
        Ok(AnalyticShape::Ball { center, radius })
    }

    pub fn cuboid(center: Vec<f64>, half_extents: Vec<f64>) -> Result<Self> {
        if center.len() != half_extents.len() {
            return Err(Error::dim("cuboid center and half-extents differ in dimension"));
        }
        if half_extents.iter().any(|h| !(*h > 0.0)) {
            return Err(Error::Range(format!("half-extents must be positive, got {half_extents:?}")));
        }
        Ok(AnalyticShape::Cuboid { center, half_extents })
    }

    pub fn union(members: Vec<AnalyticShape>) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(Error::Empty("union of zero shapes".into()));
        };
        let d = first.dim();
        if members.iter().any(|m| m.dim() != d) {
            return Err(Error::dim("union members differ in dimension"));
        }
        Ok(AnalyticShape::Union { members })
    }

    pub fn dim(&self) -> usize {
        match self {
            AnalyticShape::Ball { center, .. } => center.len(),
            AnalyticShape::Cuboid { center, .. } => center.len(),
            AnalyticShape::Union { members } => members[0].dim(),
        }
    }

    /// Signed distance, positive inside.
    pub fn sdf(&self, x: &[f64]) -> f64 {
        match self {
            AnalyticShape::Ball { center, radius } => radius - dist(x, center),
            AnalyticShape::Cuboid { center, half_extents } => {
                let mut outside = 0.0;
                let mut qmax = f64::NEG_INFINITY;
                for ((xi, ci), hi) in x.iter().zip(center).zip(half_extents) {
                    let q = (xi - ci).abs() - hi;
                    outside += q.max(0.0) * q.max(0.0);
                    qmax = qmax.max(q);
                }
                -(outside.sqrt() + qmax.min(0.0))
            }
            AnalyticShape::Union { members } => members
                .iter()
                .map(|m| m.sdf(x))
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Whether `x` lies within `margin` of a point where the SDF has a kink
    /// (ball centers, box medial planes, union ridges).
    pub fn near_medial_axis(&self, x: &[f64], margin: f64) -> bool {
        match self {
            AnalyticShape::Ball { center, .. } => dist(x, center) < margin,
            AnalyticShape::Cuboid { center, half_extents } => {
                if self.sdf(x) <= 0.0 {
                    return false;
                }
                let mut faces: Vec<f64> = Vec::with_capacity(2 * x.len());
                for ((xi, ci), hi) in x.iter().zip(center).zip(half_extents) {
                    faces.push(hi - (xi - ci));
                    faces.push(hi + (xi - ci));
                }
                faces.sort_by(f64::total_cmp);
                faces[1] - faces[0] < margin
            }
            AnalyticShape::Union { members } => {
                if members.iter().any(|m| m.near_medial_axis(x, margin)) {
                    return true;
                }
                let mut vals: Vec<f64> = members.iter().map(|m| m.sdf(x)).collect();
                vals.sort_by(|a, b| b.total_cmp(a));
                vals.len() > 1 && vals[0] - vals[1] < margin
            }
        }
    }

    fn primitives(&self) -> Vec<&AnalyticShape> {
        match self {
            AnalyticShape::Union { members } => members.iter().flat_map(|m| m.primitives()).collect(),
            other => vec![other],
        }
    }

    /// Boundary measure of a primitive (arc length, area, or point count in 1D).
    fn boundary_measure(&self) -> f64 {
        use std::f64::consts::PI;
        match self {
            AnalyticShape::Ball { center, radius } => match center.len() {
                1 => 2.0,
                2 => 2.0 * PI * radius,
                _ => 4.0 * PI * radius * radius,
            },
            AnalyticShape::Cuboid { half_extents: h, .. } => match h.len() {
                1 => 2.0,
                2 => 4.0 * (h[0] + h[1]),
                _ => 8.0 * (h[0] * h[1] + h[1] * h[2] + h[0] * h[2]),
            },
            AnalyticShape::Union { .. } => unreachable!("primitives only"),
        }
    }

    fn sample_primitive_boundary<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            AnalyticShape::Ball { center, radius } => {
                let dir: Vec<f64> = if center.len() == 1 {
                    vec![if rng.gen::<bool>() { 1.0 } else { -1.0 }]
                } else {
                    loop {
                        let v: Vec<f64> = (0..center.len()).map(|_| rng.sample(StandardNormal)).collect();
                        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                        if n > 1e-12 {
                            break v.into_iter().map(|a| a / n).collect();
                        }
                    }
                };
                center.iter().zip(dir).map(|(c, d)| c + radius * d).collect()
            }
            AnalyticShape::Cuboid { center, half_extents } => {
                let d = center.len();
                // Face pair `a` has measure prod of the other half-extents.
                let weights: Vec<f64> = (0..d)
                    .map(|a| (0..d).filter(|&b| b != a).map(|b| half_extents[b]).product())
                    .collect();
                let total: f64 = weights.iter().sum();
                let mut u = rng.gen::<f64>() * total;
                let mut axis = d - 1;
                for (a, w) in weights.iter().enumerate() {
                    if u < *w {
                        axis = a;
                        break;
                    }
                    u -= w;
                }
                let side = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                (0..d)
                    .map(|b| {
                        if b == axis {
                            center[b] + side * half_extents[b]
                        } else {
                            center[b] + half_extents[b] * rng.gen_range(-1.0..=1.0)
                        }
                    })
                    .collect()
            }
            AnalyticShape::Union { .. } => unreachable!("primitives only"),
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `n` points uniformly distributed over the boundary measure of `shape`.
///
/// Candidates are drawn on each primitive in proportion to its boundary
/// measure; candidates that fall inside another union member are rejected.
pub fn sample_boundary(shape: &AnalyticShape, n: usize, seed: u64) -> Result<Points> {
    if n == 0 {
        return Err(Error::Empty("boundary sample of zero points".into()));
    }
    let prims = shape.primitives();
    let weights: Vec<f64> = prims.iter().map(|p| p.boundary_measure()).collect();
    let total: f64 = weights.iter().sum();
    let mut rng = rng::stream(seed);
    let mut out = Points::with_capacity(shape.dim(), n);
    let max_attempts = 10_000 * n.max(10);
    let mut attempts = 0;
    while out.len() < n {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::Range("boundary sampling failed: union boundary is (nearly) empty".into()));
        }
        let mut u = rng.gen::<f64>() * total;
        let mut pick = prims.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                pick = i;
                break;
            }
            u -= w;
        }
        let p = prims[pick].sample_primitive_boundary(&mut rng);
        if shape.sdf(&p).abs() < 1e-12 {
            out.push(&p)?;
        }
    }
    Ok(out)
}

impl Field for AnalyticShape {
    fn dim_in(&self) -> usize {
        self.dim()
    }

    fn dim_out(&self) -> usize {
        1
    }

    fn eval_batch(&self, points: &Points) -> Result<Vec<f64>> {
        check_dim(self.dim(), points)?;
        Ok(points.iter().map(|p| self.sdf(p)).collect())
    }
}
