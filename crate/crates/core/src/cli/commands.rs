use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::RunConfig;
use crate::dataset::{generate_family, Condition, Task};
use crate::denoiser::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::diffusion::{sample, SampleSpec, StepStats, Trainer};
use crate::domain::{DomainSpec, Points};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::geometry::export::{write_obj, write_pgm, write_raw};
use crate::geometry::{marching_cubes, marching_squares, IsoContour, ScalarGrid};
use crate::metrics::{evaluate_model, held_out_family, EvalSampling, Report};
use crate::schedule::{GridSpacing, NoiseSchedule};

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &serde_json::to_string_pretty(value)?)
}

const LOSS_HEADER: &str = "step,loss,loss_t0,loss_t1,loss_t2,loss_t3,grad_norm,lr,wall_time";

/// Mean loss of the batch examples whose `t` falls in each quarter of [0, 1];
/// the last bucket also collects `t > 1` under an extended schedule.
fn bucket_losses(stats: &StepStats) -> [Option<f64>; 4] {
    let mut sum = [0.0; 4];
    let mut n = [0usize; 4];
    for &(t, l) in &stats.examples {
        let b = ((t * 4.0) as usize).min(3);
        sum[b] += l;
        n[b] += 1;
    }
    std::array::from_fn(|b| (n[b] > 0).then(|| sum[b] / n[b] as f64))
}

fn loss_row(stats: &StepStats, wall: Duration) -> String {
    let mut row = format!("{},{}", stats.step, stats.loss);
    for b in bucket_losses(stats) {
        row.push(',');
        if let Some(v) = b {
            write!(row, "{v}").unwrap();
        }
    }
    write!(row, ",{},{},{:.3}", stats.grad_norm, stats.lr, wall.as_secs_f64()).unwrap();
    row
}

/// Opens `loss.csv` for appending; when resuming, rows past `start` left by
/// an interrupted run are dropped first.
fn open_loss_log(path: &Path, start: u64) -> Result<fs::File> {
    let mut keep = vec![LOSS_HEADER.to_owned()];
    if start > 0 && path.exists() {
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        for line in BufReader::new(f).lines().skip(1) {
            let line = line.map_err(|e| Error::io(path, e))?;
            let step: Option<u64> = line.split(',').next().and_then(|s| s.parse().ok());
            if step.is_some_and(|s| s <= start) {
                keep.push(line);
            }
        }
    }
    write_text(path, &(keep.join("\n") + "\n"))?;
    fs::OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))
}

fn checkpoint_error(path: &Path, e: Error) -> Error {
    match e {
        Error::Checkpoint { path: p, message } if p.as_os_str().is_empty() => Error::Checkpoint {
            path: path.to_owned(),
            message,
        },
        other => other,
    }
}

/// Trains until `train.steps`, writing `config.json`, `loss.csv`,
/// `ckpt_<step>.fndf` every `train.checkpoint_every` steps, `final.fndf`, and
/// `model.fndf`, which holds the final weights without optimizer state.
pub fn cmd_train(cfg: &RunConfig, out: &Path, resume: Option<&Path>) -> Result<()> {
    cfg.validate()?;
    create_dir(out)?;
    let hash = cfg.hash();
    write_json(&out.join("config.json"), cfg)?;
    let setup = cfg.train_setup();
    let mut trainer = match resume {
        Some(p) => {
            let ck = load_checkpoint(p, Some(&cfg.denoiser_config()))?;
            if ck.meta.run_config_hash.as_deref() != Some(hash.as_str()) {
                return Err(Error::Checkpoint {
                    path: p.to_owned(),
                    message: "written by a run with a different configuration".into(),
                });
            }
            Trainer::resume(setup, ck).map_err(|e| checkpoint_error(p, e))?
        }
        None => Trainer::new(setup, cfg.denoiser_config())?,
    };
    let total = cfg.train.steps;
    let mut log = open_loss_log(&out.join("loss.csv"), trainer.step_count())?;
    let every = cfg.train.checkpoint_every;
    let report_every = (total / 50).max(1);
    let clock = Instant::now();
    while trainer.step_count() < total {
        let stats = trainer.step()?;
        writeln!(log, "{}", loss_row(&stats, clock.elapsed())).map_err(|e| Error::io(out.join("loss.csv"), e))?;
        if every > 0 && stats.step % every == 0 {
            save_checkpoint(&trainer.checkpoint(Some(hash.clone())), &out.join(format!("ckpt_{}.fndf", stats.step)))?;
        }
        if stats.step % report_every == 0 || stats.step == total {
            eprintln!(
                "step {}/{} loss {:.5} lr {:.2e} {:.1}s",
                stats.step,
                total,
                stats.loss,
                stats.lr,
                clock.elapsed().as_secs_f64()
            );
        }
    }
    let mut ck = trainer.checkpoint(Some(hash));
    save_checkpoint(&ck, &out.join("final.fndf"))?;
    ck.extra.clear();
    save_checkpoint(&ck, &out.join("model.fndf"))
}

/// Inputs of `fundiff sample` that are not part of the run configuration.
#[derive(Clone, Debug, Default)]
pub struct SampleArgs {
    pub ckpt: PathBuf,
    pub queries: Option<PathBuf>,
    pub condition: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ConditionJson {
    Points(Vec<Vec<f64>>),
    Full {
        points: Vec<Vec<f64>>,
        #[serde(default)]
        values: Vec<Vec<f64>>,
    },
}

fn condition_error(message: impl Into<String>) -> Error {
    Error::Config {
        path: "--condition".into(),
        message: message.into(),
    }
}

fn parse_condition(text: &str, task: Task) -> Result<Condition> {
    let parsed: ConditionJson = serde_json::from_str(text).map_err(|e| condition_error(e.to_string()))?;
    let (points, values) = match parsed {
        ConditionJson::Points(p) => (p, Vec::new()),
        ConditionJson::Full { points, values } => (points, values),
    };
    let dim = task.domain().dim();
    let pts = Points::from_rows(dim, &points).map_err(|e| condition_error(e.to_string()))?;
    let k = task.cond_dim();
    if k == 0 {
        if !values.is_empty() {
            return Err(condition_error("this task takes condition points without values"));
        }
        return Ok(Condition::points(pts));
    }
    if values.len() != points.len() || values.iter().any(|v| v.len() != k) {
        return Err(condition_error(format!("need one {k}-vector of values per condition point")));
    }
    Condition::new(pts, values.concat(), k).map_err(|e| condition_error(e.to_string()))
}

fn read_queries(path: &Path, dim: usize) -> Result<Points> {
    let bad = |line: usize, msg: String| Error::Config {
        path: format!("{}:{line}", path.display()),
        message: msg,
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut pts = Points::empty(dim);
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        match parsed {
            Ok(row) if row.len() == dim => pts.push(&row).map_err(|e| bad(i + 1, e.to_string()))?,
            Ok(row) => return Err(bad(i + 1, format!("expected {dim} coordinates, got {}", row.len()))),
            // A non-numeric first line is a header.
            Err(_) if i == 0 => {}
            Err(e) => return Err(bad(i + 1, e.to_string())),
        }
    }
    Ok(pts)
}

fn coord_names(dim: usize) -> Vec<String> {
    ["x", "y", "z"][..dim].iter().map(|s| s.to_string()).collect()
}

fn value_names(k: usize) -> Vec<String> {
    if k == 1 {
        vec!["value".into()]
    } else {
        (0..k).map(|i| format!("value_{i}")).collect()
    }
}

/// CSV of points and values; numbers are written in shortest round-trip form.
fn points_csv(points: &Points, values: &[f64], k: usize) -> String {
    let mut out = [coord_names(points.dim()), value_names(k)].concat().join(",");
    out.push('\n');
    for (p, v) in points.iter().zip(values.chunks(k)) {
        let row: Vec<String> = p.iter().chain(v).map(|x| x.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn zero_contour(grid: &ScalarGrid) -> Result<IsoContour> {
    if grid.domain.dim() == 2 {
        marching_squares(grid)
    } else {
        marching_cubes(grid)
    }
}

/// Closed polyline through `x + f(x)` for `n` equally spaced points `x` on
/// the unit circle.
fn deformed_circle(f: &dyn Field, n: usize) -> Result<(Points, IsoContour)> {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / n as f64;
            vec![a.cos(), a.sin()]
        })
        .collect();
    let pts = Points::from_rows(2, &rows)?;
    let d = f.eval_batch(&pts)?;
    let moved: Vec<f64> = pts.as_slice().iter().zip(&d).map(|(x, dx)| x + dx).collect();
    let mut line: Vec<usize> = (0..n).collect();
    line.push(0);
    let contour = IsoContour::Polylines {
        vertices: Points::new(2, moved)?,
        lines: vec![line],
    };
    Ok((pts, contour))
}

/// Renders one function: a PGM for 2D SDFs, an isosurface OBJ for 3D SDFs,
/// the deformed circle for deformation fields.
fn render(f: &dyn Field, task: Task, domain: &DomainSpec, res: usize, stem: &Path) -> Result<()> {
    match task {
        Task::Sdf2d => write_pgm(&ScalarGrid::sample(f, domain, &[res, res])?, &stem.with_extension("pgm")),
        Task::Sdf3d => {
            let grid = ScalarGrid::sample(f, domain, &[res, res, res])?;
            write_obj(&zero_contour(&grid)?, &stem.with_extension("obj"))
        }
        Task::DeformCircle => write_obj(&deformed_circle(f, 256)?.1, &stem.with_extension("obj")),
    }
}

/// Evenly spaced picks of `k` indices out of `n`, always including the last.
fn frame_indices(n: usize, k: usize) -> Vec<usize> {
    let k = k.min(n);
    if k == 1 {
        return vec![n - 1];
    }
    (0..k).map(|j| (j * (n - 1) + (k - 1) / 2) / (k - 1)).collect()
}

#[derive(Serialize)]
struct SampleMeta<'a> {
    config_hash: String,
    model_hash: String,
    checkpoint_step: u64,
    checkpoint_run_config_hash: Option<&'a str>,
    seed: u64,
    steps: usize,
    condition: &'a Condition,
}

fn load_model(path: &Path, cfg: &RunConfig) -> Result<Checkpoint> {
    load_checkpoint(path, Some(&cfg.denoiser_config()))
}

/// Generates one function and writes its dumps into `out`.
pub fn cmd_sample(cfg: &RunConfig, out: &Path, args: &SampleArgs) -> Result<()> {
    cfg.validate()?;
    let ck = load_model(&args.ckpt, cfg)?;
    let task = cfg.task();
    let domain = task.domain();
    let cond = match &args.condition {
        Some(text) => parse_condition(text, task)?,
        None => {
            let i = cfg.sample.sample_index;
            if i >= cfg.dataset.count {
                return Err(Error::Config {
                    path: "sample.sample_index".into(),
                    message: format!("{i} is out of range for a family of {}", cfg.dataset.count),
                });
            }
            let family = generate_family(&cfg.dataset, cfg.dataset.count, cfg.dataset.seed)?;
            family[i].condition.clone()
        }
    };
    let queries = match &args.queries {
        Some(p) => Some(read_queries(p, domain.dim())?),
        None => None,
    };
    create_dir(out)?;
    let steps = cfg.sample_steps();
    let spec = SampleSpec {
        domain: domain.clone(),
        steps,
        spacing: cfg.schedule.spacing,
        context_size: cfg.sample.context_size.unwrap_or(cfg.dataset.context_size),
        context_strategy: cfg.sample.context_strategy,
        noise_resolution: cfg.noise_resolution(),
        seed: cfg.sample.seed,
    };
    let gen = sample(&ck.model, &cfg.schedule(), &cond, &spec, cfg.sample.trace > 0)?;
    let k = task.dim_out();
    let res = cfg.sample.grid;

    if task == Task::DeformCircle {
        let (pts, contour) = deformed_circle(&gen, 256)?;
        write_obj(&contour, &out.join("final.obj"))?;
        write_text(&out.join("circle.csv"), &points_csv(&pts, &gen.eval_batch(&pts)?, k))?;
    } else {
        let dim = domain.dim();
        let contour_res = if res > 0 { res } else { cfg.eval.contour_resolution };
        let grid = ScalarGrid::sample(&gen, &domain, &vec![contour_res; dim])?;
        write_obj(&zero_contour(&grid)?, &out.join("final.obj"))?;
        if res > 0 {
            if dim == 2 {
                write_pgm(&grid, &out.join("grid.pgm"))?;
                let nodes = ScalarGrid::nodes(&domain, &grid.resolution);
                write_text(&out.join("grid.csv"), &points_csv(&nodes, &grid.values, 1))?;
            } else {
                write_raw(&grid, &out.join("grid.raw"), Some(&cfg.hash()))?;
            }
        }
    }

    if cfg.sample.trace > 0 {
        let mut csv = String::from("step,t,context_rmse_change\n");
        for s in &gen.trace {
            writeln!(csv, "{},{},{}", s.k, s.t, s.context_rmse_change).unwrap();
        }
        write_text(&out.join("trace.csv"), &csv)?;
        let frame_res = if res > 0 { res } else { 64 };
        for (j, i) in frame_indices(gen.trace.len(), cfg.sample.trace).into_iter().enumerate() {
            render(gen.trace[i].estimate.as_ref(), task, &domain, frame_res, &out.join(format!("trace_{j:02}")))?;
        }
    }

    if let Some(q) = &queries {
        write_text(&out.join("queries.csv"), &points_csv(q, &gen.eval_batch(q)?, k))?;
    }

    write_json(
        &out.join("meta.json"),
        &SampleMeta {
            config_hash: cfg.hash(),
            model_hash: ck.model.config().hash(),
            checkpoint_step: ck.meta.step,
            checkpoint_run_config_hash: ck.meta.run_config_hash.as_deref(),
            seed: cfg.sample.seed,
            steps,
            condition: &cond,
        },
    )
}

/// Evaluates on the held-out family and writes `report.json` / `report.csv`.
pub fn cmd_eval(cfg: &RunConfig, out: &Path, ckpt: Option<&Path>) -> Result<Report> {
    cfg.validate()?;
    let model = match ckpt {
        Some(p) => Some(load_model(p, cfg)?),
        None => None,
    };
    create_dir(out)?;
    let training = generate_family(&cfg.dataset, cfg.dataset.count, cfg.dataset.seed)?;
    let held_out = held_out_family(&cfg.dataset, &cfg.eval)?;
    let sampling = EvalSampling {
        schedule: cfg.schedule(),
        steps: cfg.eval.steps.unwrap_or(cfg.schedule.num_steps),
        spacing: cfg.schedule.spacing,
        context_size: cfg.sample.context_size.unwrap_or(cfg.dataset.context_size),
        context_strategy: cfg.sample.context_strategy,
        noise_resolution: cfg.noise_resolution(),
    };
    let denoise = model.as_ref().map(|c| &c.model as &dyn crate::diffusion::Denoise);
    let mut report = evaluate_model(denoise, &training, &held_out, &cfg.dataset, &sampling, &cfg.eval)?;
    report.config_hash = Some(cfg.hash());
    report.model_hash = model.as_ref().map(|c| c.model.config().hash());
    report.write(out)?;
    println!("{}", summary_table(&report));
    Ok(report)
}

fn summary_table(report: &Report) -> String {
    let f = |v: Option<f64>| v.map(|x| format!("{x:.4e}")).unwrap_or_else(|| "-".into());
    let mut s = format!(
        "{:<9} {:>5} {:>11} {:>11} {:>11} {:>11} {:>11} {:>11}\n",
        "row", "n", "chamfer", "fscore", "boundary", "eikonal", "mc_l2", "deform_mse"
    );
    for (row, m) in &report.summary {
        writeln!(
            s,
            "{:<9} {:>5} {:>11} {:>11} {:>11} {:>11} {:>11} {:>11}",
            row,
            m.count,
            f(m.chamfer),
            f(m.fscore),
            f(m.boundary),
            f(m.eikonal),
            f(Some(m.mc_l2)),
            f(m.deformation_mse)
        )
        .unwrap();
    }
    s
}

/// `k, t, alpha, sigma, snr, alpha^2 + sigma^2` for `k = 0..=n`.
pub fn schedule_table(schedule: &NoiseSchedule, n: usize, spacing: GridSpacing) -> Result<String> {
    let grid = schedule.grid(n, spacing)?;
    let mut s = String::from("k\tt\talpha\tsigma\tsnr\talpha2+sigma2\n");
    for k in 0..=n {
        let t = grid.at(k);
        let (a, sg) = schedule.alpha_sigma(t)?;
        // SNR diverges at t = 0.
        let snr = schedule.snr(t).unwrap_or(f64::INFINITY);
        writeln!(s, "{k}\t{t:.6}\t{a:.6}\t{sg:.6}\t{snr:.6}\t{:.6}", a * a + sg * sg).unwrap();
    }
    Ok(s)
}

pub fn cmd_inspect_schedule(cfg: &RunConfig, n: usize) -> Result<()> {
    cfg.validate()?;
    let table = schedule_table(&cfg.schedule(), n, cfg.schedule.spacing).map_err(|e| Error::Config {
        path: "--steps".into(),
        message: e.to_string(),
    })?;
    print!("{table}");
    Ok(())
}
