//! Training function families, conditions, and context / query sampling.
//!
//! Two task families are provided:
//!
//! - `sdf2d` / `sdf3d`: unions of random disks (1-3) or balls (1-2) inside
//!   `[-0.8, 0.8]^dim`, conditioned on points sampled from their boundary.
//! - `deform_circle`: smooth displacement fields on the unit circle,
//!   conditioned on a few point / displacement correspondences.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{DomainSpec, Manifold, Points};
use crate::error::{Error, Result};
use crate::field::{check_dim, Field};
use crate::geometry::{sample_boundary, AnalyticShape};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Sdf2d,
    Sdf3d,
    DeformCircle,
}

impl Task {
    pub fn domain(self) -> DomainSpec {
        match self {
            Task::Sdf2d => DomainSpec::unit_box(2),
            Task::Sdf3d => DomainSpec::unit_box(3),
            Task::DeformCircle => DomainSpec::with_manifold(Manifold::UnitCircle),
        }
    }

    /// Width of the function's values.
    pub fn dim_out(self) -> usize {
        match self {
            Task::Sdf2d | Task::Sdf3d => 1,
            Task::DeformCircle => 2,
        }
    }

    /// Width of the values attached to each condition point.
    pub fn cond_dim(self) -> usize {
        match self {
            Task::Sdf2d | Task::Sdf3d => 0,
            Task::DeformCircle => 2,
        }
    }

    pub fn default_n_cond(self) -> usize {
        match self {
            Task::Sdf2d | Task::DeformCircle => 8,
            Task::Sdf3d => 64,
        }
    }

    pub fn is_sdf(self) -> bool {
        matches!(self, Task::Sdf2d | Task::Sdf3d)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextStrategy {
    /// i.i.d. uniform in the box, or uniform on the manifold.
    Uniform,
    /// Regular lattice including the box corners (size must be `r^dim`), or
    /// equally spaced angles on the unit circle.
    Grid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryStrategy {
    /// Uniform points mixed with Gaussian offsets from the target's boundary
    /// (SDF tasks); uniform on the manifold otherwise.
    Mixture,
    Uniform,
    /// Queries are the context points themselves.
    SameAsContext,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub task: Task,
    pub count: usize,
    pub seed: u64,
    /// Condition points per sample; `None` picks the task default.
    pub n_cond: Option<usize>,
    pub context_size: usize,
    pub query_size: usize,
    pub context_strategy: ContextStrategy,
    pub query_strategy: QueryStrategy,
    /// Share of near-boundary queries under the mixture strategy.
    pub near_boundary_fraction: f64,
    pub near_boundary_sigma: f64,
    pub radius_range: [f64; 2],
    /// Bound on the sum of absolute deformation coefficients.
    pub deform_amplitude: f64,
    /// Highest trigonometric order of deformation fields.
    pub deform_order: usize,
    /// Draw a fresh condition from the target for every training example
    /// instead of reusing the one stored with the sample. Omitted from
    /// serialized configs when off.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub resample_condition: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            task: Task::Sdf2d,
            count: 512,
            seed: 0,
            n_cond: None,
            context_size: 256,
            query_size: 64,
            context_strategy: ContextStrategy::Uniform,
            query_strategy: QueryStrategy::Mixture,
            near_boundary_fraction: 0.5,
            near_boundary_sigma: 0.05,
            radius_range: [0.15, 0.4],
            deform_amplitude: 0.3,
            deform_order: 2,
            resample_condition: false,
        }
    }
}

impl DatasetConfig {
    pub fn n_cond(&self) -> usize {
        self.n_cond.unwrap_or_else(|| self.task.default_n_cond())
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Range("dataset.count must be >= 1".into()));
        }
        if self.context_size == 0 || self.query_size == 0 {
            return Err(Error::Range("context and query sizes must be >= 1".into()));
        }
        let [lo, hi] = self.radius_range;
        if !(lo > 0.0 && lo <= hi && hi < 0.8) {
            return Err(Error::Range(format!("radius range {lo}..{hi} invalid (need 0 < lo <= hi < 0.8)")));
        }
        if !(0.0..=1.0).contains(&self.near_boundary_fraction) || !(self.near_boundary_sigma >= 0.0) {
            return Err(Error::Range("near-boundary fraction must be in [0,1] and sigma >= 0".into()));
        }
        if !(self.deform_amplitude >= 0.0) {
            return Err(Error::Range("deform_amplitude must be >= 0".into()));
        }
        Ok(())
    }
}

/// Condition set: points plus `value_dim` values per point (empty for SDF
/// boundary points, whose implied value is 0).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub points: Points,
    pub values: Vec<f64>,
    pub value_dim: usize,
}

impl Condition {
    pub fn new(points: Points, values: Vec<f64>, value_dim: usize) -> Result<Self> {
        if values.len() != points.len() * value_dim {
            return Err(Error::dim(format!(
                "{} condition points with {value_dim} values each need {} values, got {}",
                points.len(),
                points.len() * value_dim,
                values.len()
            )));
        }
        Ok(Self { points, values, value_dim })
    }

    /// Points only (SDF boundary condition).
    pub fn points(points: Points) -> Self {
        Self {
            points,
            values: Vec::new(),
            value_dim: 0,
        }
    }

    /// No conditioning at all.
    pub fn none(dim: usize, value_dim: usize) -> Self {
        Self {
            points: Points::empty(dim),
            values: Vec::new(),
            value_dim,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Displacement field on the unit circle: radial and tangential components
/// are trigonometric polynomials in the polar angle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircleDeformation {
    /// `[a0, a1, b1, a2, b2, ...]`: `a0 + sum_k a_k cos(k theta) + b_k sin(k theta)`.
    pub radial: Vec<f64>,
    pub tangential: Vec<f64>,
}

impl CircleDeformation {
    pub fn zero(order: usize) -> Self {
        Self {
            radial: vec![0.0; 2 * order + 1],
            tangential: vec![0.0; 2 * order + 1],
        }
    }

    fn series(c: &[f64], theta: f64) -> f64 {
        let mut v = c[0];
        for k in 1..=(c.len() - 1) / 2 {
            let kt = k as f64 * theta;
            v += c[2 * k - 1] * kt.cos() + c[2 * k] * kt.sin();
        }
        v
    }

    /// Displacement at `x`; the direction frame comes from the angle of `x`,
    /// so any nonzero ambient point can be evaluated.
    pub fn displacement(&self, x: &[f64]) -> [f64; 2] {
        let norm = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let (nx, ny) = if norm > 0.0 { (x[0] / norm, x[1] / norm) } else { (1.0, 0.0) };
        let theta = ny.atan2(nx);
        let r = Self::series(&self.radial, theta);
        let t = Self::series(&self.tangential, theta);
        [r * nx - t * ny, r * ny + t * nx]
    }

    pub fn coefficient_l1(&self) -> f64 {
        self.radial.iter().chain(&self.tangential).map(|c| c.abs()).sum()
    }
}

impl Field for CircleDeformation {
    fn dim_in(&self) -> usize {
        2
    }

    fn dim_out(&self) -> usize {
        2
    }

    fn eval_batch(&self, points: &Points) -> Result<Vec<f64>> {
        check_dim(2, points)?;
        Ok(points.iter().flat_map(|p| self.displacement(p)).collect())
    }
}

/// Ground-truth function of a sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    Sdf { shape: AnalyticShape },
    Deformation { field: CircleDeformation },
}

impl Target {
    pub fn shape(&self) -> Option<&AnalyticShape> {
        match self {
            Target::Sdf { shape } => Some(shape),
            Target::Deformation { .. } => None,
        }
    }
}

impl Field for Target {
    fn dim_in(&self) -> usize {
        match self {
            Target::Sdf { shape } => shape.dim(),
            Target::Deformation { field } => field.dim_in(),
        }
    }

    fn dim_out(&self) -> usize {
        match self {
            Target::Sdf { .. } => 1,
            Target::Deformation { field } => field.dim_out(),
        }
    }

    fn eval_batch(&self, points: &Points) -> Result<Vec<f64>> {
        match self {
            Target::Sdf { shape } => shape.eval_batch(points),
            Target::Deformation { field } => field.eval_batch(points),
        }
    }
}

/// One training / evaluation function with its condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionSample {
    pub index: usize,
    pub seed: u64,
    pub target: Target,
    pub condition: Condition,
}

/// Dispatches to the family generator of `cfg.task`. Sample `i` is generated
/// from `rng::derive(seed, [i])`, so families with a common prefix agree.
pub fn generate_family(cfg: &DatasetConfig, count: usize, seed: u64) -> Result<Vec<FunctionSample>> {
    match cfg.task {
        Task::Sdf2d | Task::Sdf3d => generate_sdf_family(count, seed, cfg),
        Task::DeformCircle => generate_deformation_family(count, seed, cfg),
    }
}

pub fn generate_sdf_family(count: usize, seed: u64, cfg: &DatasetConfig) -> Result<Vec<FunctionSample>> {
    if count == 0 {
        return Err(Error::Range("family size must be >= 1".into()));
    }
    let (dim, max_members) = match cfg.task {
        Task::Sdf3d => (3, 2),
        _ => (2, 3),
    };
    (0..count)
        .map(|i| {
            let s = rng::derive(seed, &[i as u64]);
            let target = Target::Sdf {
                shape: random_union(dim, max_members, cfg.radius_range, s)?,
            };
            Ok(FunctionSample {
                index: i,
                seed: s,
                condition: draw_condition(&target, cfg.n_cond(), rng::derive(s, &[1]))?,
                target,
            })
        })
        .collect()
}

/// Condition observed from `target`: boundary points of an SDF, or
/// point / displacement correspondences on the circle.
pub fn draw_condition(target: &Target, n: usize, seed: u64) -> Result<Condition> {
    match target {
        Target::Sdf { shape } => Ok(Condition::points(sample_boundary(shape, n, seed)?)),
        Target::Deformation { field } => {
            let domain = Task::DeformCircle.domain();
            let pts = sample_context(&domain, n, seed, ContextStrategy::Uniform)?;
            let values = field.eval_batch(&pts)?;
            Condition::new(pts, values, 2)
        }
    }
}

fn random_union(dim: usize, max_members: usize, radius: [f64; 2], seed: u64) -> Result<AnalyticShape> {
    let mut r = rng::stream(seed);
    let k = r.gen_range(1..=max_members);
    let members = (0..k)
        .map(|_| {
            let rad = r.gen_range(radius[0]..=radius[1]);
            let center: Vec<f64> = (0..dim).map(|_| r.gen_range(-(0.8 - rad)..=(0.8 - rad))).collect();
            AnalyticShape::ball(center, rad)
        })
        .collect::<Result<Vec<_>>>()?;
    if members.len() == 1 {
        Ok(members.into_iter().next().expect("one member"))
    } else {
        AnalyticShape::union(members)
    }
}

pub fn generate_deformation_family(count: usize, seed: u64, cfg: &DatasetConfig) -> Result<Vec<FunctionSample>> {
    if count == 0 {
        return Err(Error::Range("family size must be >= 1".into()));
    }
    (0..count)
        .map(|i| {
            let s = rng::derive(seed, &[i as u64]);
            let target = Target::Deformation {
                field: random_deformation(cfg.deform_order, cfg.deform_amplitude, s),
            };
            Ok(FunctionSample {
                index: i,
                seed: s,
                condition: draw_condition(&target, cfg.n_cond(), rng::derive(s, &[1]))?,
                target,
            })
        })
        .collect()
}

/// Coefficients drawn uniformly, then rescaled so their absolute sum is
/// `amplitude * u` with `u ~ U[0.5, 1]`. The displacement norm is bounded
/// by that sum.
fn random_deformation(order: usize, amplitude: f64, seed: u64) -> CircleDeformation {
    let mut r = rng::stream(seed);
    let n = 2 * order + 1;
    // Higher orders get smaller weights to keep fields smooth.
    let weight = |j: usize| 1.0 / (1 + j.div_ceil(2)) as f64;
    let mut radial: Vec<f64> = (0..n).map(|j| r.gen_range(-1.0..1.0) * weight(j)).collect();
    let mut tangential: Vec<f64> = (0..n).map(|j| r.gen_range(-1.0..1.0) * weight(j)).collect();
    let l1: f64 = radial.iter().chain(&tangential).map(|c: &f64| c.abs()).sum();
    let target = amplitude * r.gen_range(0.5..=1.0);
    let k = if l1 > 0.0 { target / l1 } else { 0.0 };
    radial.iter_mut().chain(tangential.iter_mut()).for_each(|c| *c *= k);
    CircleDeformation { radial, tangential }
}

/// Context coordinates: `size` points in the domain (on the manifold for
/// manifold domains).
pub fn sample_context(domain: &DomainSpec, size: usize, seed: u64, strategy: ContextStrategy) -> Result<Points> {
    if size == 0 {
        return Err(Error::Range("context size must be >= 1".into()));
    }
    let dim = domain.dim();
    let mut out = Points::with_capacity(dim, size);
    match (strategy, domain.manifold()) {
        (ContextStrategy::Uniform, None) => {
            let mut r = rng::stream(seed);
            let mut p = vec![0.0; dim];
            for _ in 0..size {
                for a in 0..dim {
                    p[a] = r.gen_range(domain.lo()[a]..=domain.hi()[a]);
                }
                out.push(&p)?;
            }
        }
        (ContextStrategy::Grid, None) => {
            let side = (size as f64).powf(1.0 / dim as f64).round() as usize;
            if side < 2 || side.pow(dim as u32) != size {
                return Err(Error::Range(format!(
                    "grid context of size {size} is not a {dim}-th power of an integer >= 2"
                )));
            }
            return Ok(crate::geometry::ScalarGrid::nodes(domain, &vec![side; dim]));
        }
        (ContextStrategy::Uniform, Some(m)) => {
            let mut r = rng::stream(seed);
            for _ in 0..size {
                out.push(&uniform_on_manifold(m, &mut r))?;
            }
        }
        (ContextStrategy::Grid, Some(Manifold::UnitCircle)) => {
            for k in 0..size {
                let th = TAU * k as f64 / size as f64;
                out.push(&[th.cos(), th.sin()])?;
            }
        }
        (ContextStrategy::Grid, Some(Manifold::UnitSphere)) => {
            // Fibonacci lattice.
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            for k in 0..size {
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / size as f64;
                let rho = (1.0 - z * z).sqrt();
                let th = golden * k as f64;
                out.push(&[rho * th.cos(), rho * th.sin(), z])?;
            }
        }
    }
    Ok(out)
}

fn uniform_on_manifold<R: Rng>(m: Manifold, r: &mut R) -> Vec<f64> {
    match m {
        Manifold::UnitCircle => {
            let th = r.gen_range(0.0..TAU);
            vec![th.cos(), th.sin()]
        }
        Manifold::UnitSphere => loop {
            let v: Vec<f64> = (0..3).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-12 {
                break v.iter().map(|x| x / n).collect();
            }
        },
    }
}

/// Query coordinates for one training example. `context` is used by
/// [`QueryStrategy::SameAsContext`]; `target` supplies boundary points for
/// the near-boundary part of the mixture.
pub fn sample_queries(
    domain: &DomainSpec,
    cfg: &DatasetConfig,
    target: &Target,
    context: &Points,
    seed: u64,
) -> Result<Points> {
    let size = cfg.query_size;
    match cfg.query_strategy {
        QueryStrategy::SameAsContext => Ok(context.clone()),
        QueryStrategy::Uniform => sample_context(domain, size, seed, ContextStrategy::Uniform),
        QueryStrategy::Mixture => {
            let Some(shape) = target.shape() else {
                return sample_context(domain, size, seed, ContextStrategy::Uniform);
            };
            let near = ((size as f64) * cfg.near_boundary_fraction).round() as usize;
            let mut out = if size > near {
                sample_context(domain, size - near, rng::derive(seed, &[0]), ContextStrategy::Uniform)?
            } else {
                Points::empty(domain.dim())
            };
            if near > 0 {
                let anchors = sample_boundary(shape, near, rng::derive(seed, &[1]))?;
                let mut r = rng::stream(rng::derive(seed, &[2]));
                for a in anchors.iter() {
                    let p: Vec<f64> = a
                        .iter()
                        .enumerate()
                        .map(|(ax, &v)| {
                            let o: f64 = r.sample(StandardNormal);
                            (v + cfg.near_boundary_sigma * o).clamp(domain.lo()[ax], domain.hi()[ax])
                        })
                        .collect();
                    out.push(&p)?;
                }
            }
            Ok(out)
        }
    }
}

/// Pointwise mean of a family's target functions.
pub struct MeanField {
    targets: Vec<Target>,
}

impl MeanField {
    pub fn new(samples: &[FunctionSample]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("mean field of an empty family".into()));
        }
        Ok(Self {
            targets: samples.iter().map(|s| s.target.clone()).collect(),
        })
    }
}

impl Field for MeanField {
    fn dim_in(&self) -> usize {
        self.targets[0].dim_in()
    }

    fn dim_out(&self) -> usize {
        self.targets[0].dim_out()
    }

    fn eval_batch(&self, points: &Points) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; points.len() * self.dim_out()];
        for t in &self.targets {
            for (a, v) in acc.iter_mut().zip(t.eval_batch(points)?) {
                *a += v;
            }
        }
        let n = self.targets.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sdf_cfg() -> DatasetConfig {
        DatasetConfig::default()
    }

    #[test]
    fn sdf_conditions_on_boundary() {
        let fam = generate_sdf_family(50, 3, &sdf_cfg()).unwrap();
        for s in &fam {
            assert_eq!(s.condition.len(), 8);
            for p in s.condition.points.iter() {
                assert!(s.target.eval(p).unwrap()[0].abs() < 1e-9);
            }
        }
        assert_eq!(fam, generate_sdf_family(50, 3, &sdf_cfg()).unwrap());
    }

    #[test]
    fn sdf_shapes_stay_in_bounds() {
        let fam = generate_sdf_family(1000, 11, &sdf_cfg()).unwrap();
        for s in &fam {
            let shape = s.target.shape().unwrap();
            let members = match shape {
                AnalyticShape::Union { members } => members.clone(),
                other => vec![other.clone()],
            };
            assert!((1..=3).contains(&members.len()));
            for m in members {
                let AnalyticShape::Ball { center, radius } = m else { panic!("disk expected") };
                assert!((0.15..=0.4).contains(&radius));
                assert!(center.iter().all(|c| c.abs() + radius <= 0.8 + 1e-12));
            }
        }
    }

    #[test]
    fn sdf3d_family() {
        let cfg = DatasetConfig {
            task: Task::Sdf3d,
            ..Default::default()
        };
        let fam = generate_family(&cfg, 5, 1).unwrap();
        for s in &fam {
            assert_eq!(s.condition.len(), 64);
            assert_eq!(s.condition.points.dim(), 3);
        }
    }

    #[test]
    fn zero_deformation_is_zero() {
        let d = CircleDeformation::zero(2);
        let pts = sample_context(&Task::DeformCircle.domain(), 100, 0, ContextStrategy::Uniform).unwrap();
        assert!(d.eval_batch(&pts).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn deformation_conditions_and_bound() {
        let cfg = DatasetConfig {
            task: Task::DeformCircle,
            ..Default::default()
        };
        let fam = generate_family(&cfg, 20, 5).unwrap();
        let probe = sample_context(&Task::DeformCircle.domain(), 10_000, 9, ContextStrategy::Uniform).unwrap();
        for s in &fam {
            assert_eq!(s.condition.values, s.target.eval_batch(&s.condition.points).unwrap());
            assert!(s.target.eval_batch(&probe).unwrap().chunks(2).all(|v| v[0].hypot(v[1]) <= 0.3));
            let Target::Deformation { field } = &s.target else { unreachable!() };
            assert!(field.coefficient_l1() <= 0.3 + 1e-12);
        }
    }

    #[test]
    fn redrawn_conditions_match_the_target() {
        for task in [Task::Sdf2d, Task::DeformCircle] {
            let cfg = DatasetConfig { task, ..Default::default() };
            let s = &generate_family(&cfg, 3, 2).unwrap()[1];
            assert_eq!(draw_condition(&s.target, cfg.n_cond(), rng::derive(s.seed, &[1])).unwrap(), s.condition);
            let fresh = draw_condition(&s.target, cfg.n_cond(), 77).unwrap();
            assert_ne!(fresh, s.condition);
            let v = s.target.eval_batch(&fresh.points).unwrap();
            match task {
                Task::DeformCircle => assert_eq!(fresh.values, v),
                _ => assert!(v.iter().all(|x| x.abs() < 1e-9)),
            }
        }
    }

    #[test]
    fn grid_context_lattice() {
        let d = DomainSpec::unit_box(2);
        let g = sample_context(&d, 16, 0, ContextStrategy::Grid).unwrap();
        assert_eq!(g.len(), 16);
        let ticks = [-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0];
        for (i, p) in g.iter().enumerate() {
            assert!((p[0] - ticks[i % 4]).abs() < 1e-15 && (p[1] - ticks[i / 4]).abs() < 1e-15);
        }
        assert!(sample_context(&d, 15, 0, ContextStrategy::Grid).is_err());
        assert!(sample_context(&d, 0, 0, ContextStrategy::Uniform).is_err());
    }

    #[test]
    fn manifold_context_on_circle() {
        let d = Task::DeformCircle.domain();
        for strat in [ContextStrategy::Uniform, ContextStrategy::Grid] {
            let pts = sample_context(&d, 300, 2, strat).unwrap();
            for p in pts.iter() {
                assert!((p[0].hypot(p[1]) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn uniform_quadrant_counts() {
        let n = 100_000;
        let pts = sample_context(&DomainSpec::unit_box(2), n, 4, ContextStrategy::Uniform).unwrap();
        let mut counts = [0usize; 4];
        for p in pts.iter() {
            counts[usize::from(p[0] > 0.0) + 2 * usize::from(p[1] > 0.0)] += 1;
        }
        let expect = n as f64 / 4.0;
        let sd = (n as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - expect).abs() < 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn mixture_queries() {
        let cfg = sdf_cfg();
        let s = &generate_sdf_family(1, 0, &cfg).unwrap()[0];
        let d = DomainSpec::unit_box(2);
        let ctx = sample_context(&d, 256, 1, ContextStrategy::Uniform).unwrap();
        let q = sample_queries(&d, &cfg, &s.target, &ctx, 7).unwrap();
        assert_eq!(q.len(), 64);
        assert!(q.iter().all(|p| d.contains(p)));
        let near = q.iter().skip(32).filter(|p| s.target.eval(p).unwrap()[0].abs() < 0.2).count();
        assert!(near >= 30);
        let same = DatasetConfig {
            query_strategy: QueryStrategy::SameAsContext,
            ..cfg
        };
        assert_eq!(sample_queries(&d, &same, &s.target, &ctx, 7).unwrap(), ctx);
    }

    #[test]
    fn mean_field_averages() {
        let fam = generate_sdf_family(4, 0, &sdf_cfg()).unwrap();
        let mf = MeanField::new(&fam).unwrap();
        let x = [0.1, -0.2];
        let expect: f64 = fam.iter().map(|s| s.target.eval(&x).unwrap()[0]).sum::<f64>() / 4.0;
        assert!((mf.eval(&x).unwrap()[0] - expect).abs() < 1e-15);
    }
}
