//! Function-space and PDE-residual metrics, and model evaluation reports.
//!
//! All metrics consume [`Field`]s, so generated functions, analytic oracles
//! and baselines are scored by the same code.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    generate_family, sample_context, ContextStrategy, DatasetConfig, FunctionSample, MeanField, Target,
};
use crate::diffusion::{sample, Denoise, SampleSpec};
use crate::domain::{DomainSpec, Points};
use crate::error::{Error, Result};
use crate::field::{ConstantField, Field};
use crate::geometry::{
    chamfer, fd_gradients, fscore, marching_cubes, marching_squares, sample_boundary, AnalyticShape, ScalarGrid,
};
use crate::rng;
use crate::schedule::{GridSpacing, NoiseSchedule};

fn non_empty(points: &Points, what: &str) -> Result<()> {
    if points.is_empty() {
        return Err(Error::Empty(format!("{what} needs at least one point")));
    }
    Ok(())
}

fn same_out(f: &dyn Field, g: &dyn Field) -> Result<()> {
    if f.dim_out() != g.dim_out() {
        return Err(Error::dim(format!("fields of output width {} and {}", f.dim_out(), g.dim_out())));
    }
    Ok(())
}

/// Squared differences summed over output components, one per point.
fn squared_errors(f: &dyn Field, g: &dyn Field, points: &Points) -> Result<Vec<f64>> {
    same_out(f, g)?;
    let k = f.dim_out();
    let a = f.eval_batch(points)?;
    let b = g.eval_batch(points)?;
    Ok(a.chunks(k)
        .zip(b.chunks(k))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum())
        .collect())
}

/// Monte-Carlo L2 distance `sqrt(sum_Q |f - g|^2)`.
pub fn mc_l2(f: &dyn Field, g: &dyn Field, q: &Points) -> Result<f64> {
    non_empty(q, "mc_l2")?;
    Ok(squared_errors(f, g, q)?.iter().sum::<f64>().sqrt())
}

/// `sqrt(mean_Q |f - g|^2)`, comparable across query-set sizes.
pub fn mc_l2_normalized(f: &dyn Field, g: &dyn Field, q: &Points) -> Result<f64> {
    non_empty(q, "mc_l2")?;
    let e = squared_errors(f, g, q)?;
    Ok((e.iter().sum::<f64>() / e.len() as f64).sqrt())
}

/// Per-point Eikonal residuals `(|grad f| - 1)^2` by central differences.
pub fn eikonal_residuals(f: &dyn Field, points: &Points, h: f64, domain: &DomainSpec) -> Result<Vec<f64>> {
    non_empty(points, "eikonal metric")?;
    let dim = points.dim();
    let grads = fd_gradients(f, points, h, domain)?;
    Ok(grads
        .chunks(dim)
        .map(|g| {
            let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            (n - 1.0) * (n - 1.0)
        })
        .collect())
}

/// Mean Eikonal residual over `points`.
pub fn eikonal_metric(f: &dyn Field, points: &Points, h: f64, domain: &DomainSpec) -> Result<f64> {
    Ok(mean(&eikonal_residuals(f, points, h, domain)?))
}

/// Mean of `(f - q)^2` over boundary points.
pub fn boundary_metric(f: &dyn Field, points: &Points, q: &dyn Field) -> Result<f64> {
    non_empty(points, "boundary metric")?;
    Ok(mean(&squared_errors(f, q, points)?))
}

/// Mean squared vector error over manifold samples.
pub fn deformation_mse(pred: &dyn Field, gt: &dyn Field, samples: &Points) -> Result<f64> {
    non_empty(samples, "deformation mse")?;
    Ok(mean(&squared_errors(pred, gt, samples)?))
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean and standard error of the mean.
pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let m = mean(v);
    if v.len() < 2 {
        return (m, f64::NAN);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64;
    (m, (var / v.len() as f64).sqrt())
}

/// Evaluation point sets for one ground-truth shape.
#[derive(Clone, Debug)]
pub struct EvalSets {
    /// Uniform in the box shrunk by `2h`, away from the shape's medial axis.
    pub interior: Points,
    /// On the shape's boundary.
    pub boundary: Points,
}

impl EvalSets {
    pub fn for_shape(
        shape: &AnalyticShape,
        domain: &DomainSpec,
        n_interior: usize,
        n_boundary: usize,
        h: f64,
        medial_margin: f64,
        seed: u64,
    ) -> Result<Self> {
        let dim = domain.dim();
        let lo: Vec<f64> = domain.lo().iter().map(|l| l + 2.0 * h).collect();
        let hi: Vec<f64> = domain.hi().iter().map(|u| u - 2.0 * h).collect();
        let inner = DomainSpec::new(lo, hi, None)?;
        let mut interior = Points::with_capacity(dim, n_interior);
        let mut round = 0u64;
        while interior.len() < n_interior {
            let cand = sample_context(&inner, n_interior, rng::derive(seed, &[0, round]), ContextStrategy::Uniform)?;
            for p in cand.iter() {
                if interior.len() < n_interior && !shape.near_medial_axis(p, medial_margin) {
                    interior.push(p)?;
                }
            }
            round += 1;
            if round > 1000 {
                return Err(Error::Range("medial-axis exclusion rejects nearly the whole box".into()));
            }
        }
        let boundary = sample_boundary(shape, n_boundary, rng::derive(seed, &[1]))?;
        Ok(Self { interior, boundary })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Held-out conditions to evaluate.
    pub num_samples: usize,
    /// Seed of the held-out family and of all evaluation randomness.
    pub seed: u64,
    /// Sampler steps; `None` uses `schedule.num_steps`.
    pub steps: Option<usize>,
    pub interior_points: usize,
    pub boundary_points: usize,
    /// Points drawn from each contour for Chamfer / F-score.
    pub surface_points: usize,
    pub fscore_tau: f64,
    /// Nodes per axis of the contouring grid.
    pub contour_resolution: usize,
    pub fd_step: f64,
    pub medial_margin: f64,
    /// Uniform points for the Monte-Carlo L2 distance.
    pub mc_points: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            num_samples: 64,
            seed: 9001,
            steps: None,
            interior_points: 10_000,
            boundary_points: 10_000,
            surface_points: 2048,
            fscore_tau: 0.02,
            contour_resolution: 128,
            fd_step: 1e-3,
            medial_margin: 0.05,
            mc_points: 4096,
        }
    }
}

/// Scores of one function against one ground truth. Metrics that do not
/// apply to the task are `None`; Chamfer is `None` when the function has no
/// zero contour in the box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub sample_id: String,
    pub row: String,
    pub index: usize,
    pub chamfer: Option<f64>,
    pub fscore: Option<f64>,
    pub boundary: Option<f64>,
    pub eikonal: Option<f64>,
    pub mc_l2: f64,
    pub mc_l2_normalized: f64,
    pub deformation_mse: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RowSummary {
    pub count: usize,
    pub empty_contours: usize,
    pub chamfer: Option<f64>,
    pub fscore: Option<f64>,
    pub boundary: Option<f64>,
    pub eikonal: Option<f64>,
    pub mc_l2: f64,
    pub mc_l2_normalized: f64,
    pub deformation_mse: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config_hash: Option<String>,
    pub model_hash: Option<String>,
    pub eval: EvalConfig,
    pub steps: usize,
    /// Mean per row label (`model`, `oracle`, `baseline`).
    pub summary: BTreeMap<String, RowSummary>,
    pub samples: Vec<SampleMetrics>,
}

fn opt_mean(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let xs: Vec<f64> = v.flatten().collect();
    (!xs.is_empty()).then(|| mean(&xs))
}

impl Report {
    fn summarize(samples: &[SampleMetrics]) -> BTreeMap<String, RowSummary> {
        let mut rows: BTreeMap<String, Vec<&SampleMetrics>> = BTreeMap::new();
        for s in samples {
            rows.entry(s.row.clone()).or_default().push(s);
        }
        rows.into_iter()
            .map(|(k, v)| {
                let is_sdf = v.iter().any(|s| s.fscore.is_some());
                let summary = RowSummary {
                    count: v.len(),
                    empty_contours: if is_sdf { v.iter().filter(|s| s.chamfer.is_none()).count() } else { 0 },
                    chamfer: opt_mean(v.iter().map(|s| s.chamfer)),
                    fscore: opt_mean(v.iter().map(|s| s.fscore)),
                    boundary: opt_mean(v.iter().map(|s| s.boundary)),
                    eikonal: opt_mean(v.iter().map(|s| s.eikonal)),
                    mc_l2: mean(&v.iter().map(|s| s.mc_l2).collect::<Vec<_>>()),
                    mc_l2_normalized: mean(&v.iter().map(|s| s.mc_l2_normalized).collect::<Vec<_>>()),
                    deformation_mse: opt_mean(v.iter().map(|s| s.deformation_mse)),
                };
                (k, summary)
            })
            .collect()
    }

    /// One line per sample row: `sample_id,chamfer,fscore,boundary,eikonal,mc_l2`.
    /// Inapplicable or undefined entries are left blank.
    pub fn to_csv(&self) -> String {
        let f = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        let mut out = String::from("sample_id,chamfer,fscore,boundary,eikonal,mc_l2\n");
        for s in &self.samples {
            out.push_str(&format!(
                "{},{},{},{},{},{:e}\n",
                s.sample_id,
                f(s.chamfer),
                f(s.fscore),
                f(s.boundary),
                f(s.eikonal),
                s.mc_l2
            ));
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let json = dir.join("report.json");
        std::fs::write(&json, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&json, e))?;
        let csv = dir.join("report.csv");
        std::fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))
    }
}

/// Surface scores of `f` against a ground-truth shape: its zero contour on
/// a regular grid, sampled and compared with boundary samples.
fn surface_scores(
    f: &dyn Field,
    domain: &DomainSpec,
    truth_points: &Points,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<(Option<f64>, f64)> {
    let res = vec![cfg.contour_resolution; domain.dim()];
    let grid = ScalarGrid::sample(f, domain, &res)?;
    let contour = if domain.dim() == 2 {
        marching_squares(&grid)?
    } else {
        marching_cubes(&grid)?
    };
    match contour.sample_points(cfg.surface_points, seed) {
        Ok(pred) => Ok((Some(chamfer(&pred, truth_points)?), fscore(&pred, truth_points, cfg.fscore_tau)?)),
        Err(Error::Empty(_)) => Ok((None, 0.0)),
        Err(e) => Err(e),
    }
}

/// Scores `f` against sample `s`.
pub fn score_function(
    row: &str,
    f: &dyn Field,
    s: &FunctionSample,
    domain: &DomainSpec,
    cfg: &EvalConfig,
) -> Result<SampleMetrics> {
    let seed = rng::derive(cfg.seed, &[0xe7a1, s.index as u64]);
    let mc_points = sample_context(domain, cfg.mc_points, rng::derive(seed, &[0]), ContextStrategy::Uniform)?;
    let mut m = SampleMetrics {
        sample_id: format!("{row}/{}", s.index),
        row: row.to_owned(),
        index: s.index,
        chamfer: None,
        fscore: None,
        boundary: None,
        eikonal: None,
        mc_l2: mc_l2(f, &s.target, &mc_points)?,
        mc_l2_normalized: mc_l2_normalized(f, &s.target, &mc_points)?,
        deformation_mse: None,
    };
    match &s.target {
        Target::Sdf { shape } => {
            let sets = EvalSets::for_shape(
                shape,
                domain,
                cfg.interior_points,
                cfg.boundary_points,
                cfg.fd_step,
                cfg.medial_margin,
                rng::derive(seed, &[1]),
            )?;
            let zero = ConstantField { dim_in: domain.dim(), value: vec![0.0] };
            m.boundary = Some(boundary_metric(f, &sets.boundary, &zero)?);
            m.eikonal = Some(eikonal_metric(f, &sets.interior, cfg.fd_step, domain)?);
            let truth = sample_boundary(shape, cfg.surface_points, rng::derive(seed, &[2]))?;
            let (c, fs) = surface_scores(f, domain, &truth, cfg, rng::derive(seed, &[3]))?;
            m.chamfer = c;
            m.fscore = Some(fs);
        }
        Target::Deformation { .. } => {
            m.deformation_mse = Some(deformation_mse(f, &s.target, &mc_points)?);
        }
    }
    Ok(m)
}

/// Sampler settings used for evaluation.
pub struct EvalSampling {
    pub schedule: NoiseSchedule,
    pub steps: usize,
    pub spacing: GridSpacing,
    pub context_size: usize,
    pub context_strategy: ContextStrategy,
    pub noise_resolution: Vec<usize>,
}

/// Held-out family for evaluation: the training task with the evaluation seed.
pub fn held_out_family(dataset: &DatasetConfig, cfg: &EvalConfig) -> Result<Vec<FunctionSample>> {
    if cfg.num_samples == 0 {
        return Err(Error::Range("eval.num_samples must be >= 1".into()));
    }
    if cfg.seed == dataset.seed {
        return Err(Error::Config {
            path: "eval.seed".into(),
            message: "must differ from dataset.seed so evaluation uses held-out functions".into(),
        });
    }
    generate_family(dataset, cfg.num_samples, cfg.seed)
}

/// Scores the model (if any), the ground-truth oracle, and the baseline on
/// every held-out sample. The baseline is the training family's mean field
/// for SDF tasks and the zero displacement for deformation tasks.
pub fn evaluate_model(
    model: Option<&dyn Denoise>,
    training: &[FunctionSample],
    held_out: &[FunctionSample],
    dataset: &DatasetConfig,
    sampling: &EvalSampling,
    cfg: &EvalConfig,
) -> Result<Report> {
    let domain = dataset.task.domain();
    let baseline: Box<dyn Field> = if dataset.task.is_sdf() {
        Box::new(MeanField::new(training)?)
    } else {
        Box::new(ConstantField { dim_in: domain.dim(), value: vec![0.0; dataset.task.dim_out()] })
    };
    let per_sample: Vec<Result<Vec<SampleMetrics>>> = held_out
        .par_iter()
        .map(|s| {
            let mut rows = Vec::with_capacity(3);
            if let Some(m) = model {
                let spec = SampleSpec {
                    domain: domain.clone(),
                    steps: sampling.steps,
                    spacing: sampling.spacing,
                    context_size: sampling.context_size,
                    context_strategy: sampling.context_strategy,
                    noise_resolution: sampling.noise_resolution.clone(),
                    seed: rng::derive(cfg.seed, &[0x5a, s.index as u64]),
                };
                let gen = sample(m, &sampling.schedule, &s.condition, &spec, false)?;
                rows.push(score_function("model", &gen, s, &domain, cfg)?);
            }
            rows.push(score_function("oracle", &s.target, s, &domain, cfg)?);
            rows.push(score_function("baseline", baseline.as_ref(), s, &domain, cfg)?);
            Ok(rows)
        })
        .collect();
    let mut samples = Vec::new();
    for r in per_sample {
        samples.extend(r?);
    }
    // Group rows: all model rows, then oracle, then baseline.
    let order = |r: &str| match r {
        "model" => 0,
        "oracle" => 1,
        _ => 2,
    };
    samples.sort_by_key(|s| (order(&s.row), s.index));
    Ok(Report {
        config_hash: None,
        model_hash: None,
        eval: cfg.clone(),
        steps: sampling.steps,
        summary: Report::summarize(&samples),
        samples,
    })
}
