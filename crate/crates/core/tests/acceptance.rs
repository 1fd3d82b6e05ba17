//! End-to-end acceptance checks, one test per criterion. Each test writes a
//! single `criterion N ... PASS|FAIL` line straight to stdout so the lines
//! survive cargo's output capture.
//!
//! Criteria 9 and 10 evaluate the trained runs under `artifacts/`. Each run
//! directory holds the config it was trained with, its `loss.csv` and the
//! final weights. When a run is missing, or `FUNDIFF_RETRAIN=1` is set, the
//! test retrains it from `configs/` first, which takes tens of minutes.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fundiff::adcore::{gradcheck, Tape, Tensor, Var};
use fundiff::cli::{cmd_eval, cmd_train, RunConfig};
use fundiff::dataset::{
    generate_sdf_family, sample_context, Condition, ContextStrategy, DatasetConfig, QueryStrategy, Task,
};
use fundiff::denoiser::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, Denoiser, DenoiserConfig, ModelConfig};
use fundiff::diffusion::{
    ddim_step, draw_example, example_loss, forward_noise, sample, DiffusionState, OracleDenoiser, SampleSpec,
    TrainConfig, TrainSetup,
};
use fundiff::geometry::{chamfer, marching_squares, sample_boundary, AnalyticShape, ScalarGrid};
use fundiff::metrics::{boundary_metric, eikonal_metric, EvalSets, Report};
use fundiff::noise_field::{sample_noise_field, NoiseConfig};
use fundiff::schedule::{GridSpacing, LossWeight, NoiseSchedule};
use fundiff::{rng, DomainSpec, Field, Points};

type Outcome = Result<String, String>;

fn report(n: u32, name: &str, start: Instant, outcome: Outcome) {
    let secs = start.elapsed().as_secs_f64();
    let line = match &outcome {
        Ok(d) => format!("criterion {n:>2} {name}: PASS ({d}; {secs:.1}s)"),
        Err(d) => format!("criterion {n:>2} {name}: FAIL ({d}; {secs:.1}s)"),
    };
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}").unwrap();
    out.flush().unwrap();
    if let Err(d) = outcome {
        panic!("criterion {n} failed: {d}");
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn uniform(n: usize, seed: u64) -> Points {
    sample_context(&DomainSpec::unit_box(2), n, seed, ContextStrategy::Uniform).unwrap()
}

fn small_config() -> DenoiserConfig {
    DenoiserConfig::for_task(
        ModelConfig {
            num_frequencies: 4,
            num_latents: 16,
            width: 16,
            stages: 2,
            heads: 2,
            mlp_ratio: 2,
            data_std: 1.0,
        },
        Task::Sdf2d,
    )
}

#[test]
fn criterion_01_schedule_identity() {
    let start = Instant::now();
    let s = NoiseSchedule::default();
    let run = || -> Outcome {
        let n = 10_000;
        let mut worst = 0.0f64;
        let mut prev: Option<(f64, f64)> = None;
        for i in 0..=n {
            let t = i as f64 / n as f64;
            let (a, sg) = s.alpha_sigma(t).map_err(e2s)?;
            worst = worst.max((a * a + sg * sg - 1.0).abs());
            if let Some((pa, ps)) = prev {
                ensure(a < pa && sg > ps, || format!("monotonicity broken at t={t}"))?;
            }
            prev = Some((a, sg));
        }
        ensure(worst <= 1e-12, || format!("max |a^2+s^2-1| = {worst:e}"))?;
        ensure(start.elapsed().as_secs_f64() < 1.0, || "slower than 1 s".into())?;
        Ok(format!("max |a^2+s^2-1| = {worst:.1e} over {} values", n + 1))
    };
    report(1, "schedule identity", start, run());
}

fn rand_matrix(m: usize, n: usize, seed: u64) -> Tensor {
    Tensor::matrix(m, n, (0..m * n).map(|i| rng::normal_at(seed, i as u64)).collect()).unwrap()
}

fn project(t: &mut Tape, y: Var, seed: u64) -> fundiff::Result<Var> {
    let (m, n) = t.value(y).dims2()?;
    let w = t.constant(rand_matrix(m, n, seed));
    let p = t.mul(y, w)?;
    Ok(t.sum(p))
}

#[test]
fn criterion_02_autodiff_integrity() {
    let start = Instant::now();
    let run = || -> Outcome {
        type Case = (&'static str, Vec<Tensor>, Box<dyn Fn(&mut Tape, &[Var]) -> fundiff::Result<Var>>);
        let cases: Vec<Case> = vec![
            ("matmul", vec![rand_matrix(4, 5, 1), rand_matrix(5, 3, 2)], Box::new(|t, v| {
                let y = t.matmul(v[0], v[1])?;
                project(t, y, 3)
            })),
            ("matmul_t", vec![rand_matrix(4, 5, 4), rand_matrix(3, 5, 5)], Box::new(|t, v| {
                let y = t.matmul_t(v[0], v[1])?;
                project(t, y, 6)
            })),
            ("add/sub/mul/scale", vec![rand_matrix(3, 4, 7), rand_matrix(3, 4, 8)], Box::new(|t, v| {
                let a = t.add(v[0], v[1])?;
                let b = t.sub(a, v[1])?;
                let c = t.mul(b, v[1])?;
                let y = t.scale(c, 0.7);
                project(t, y, 9)
            })),
            ("add_row/mul_row", vec![rand_matrix(3, 4, 10), rand_matrix(1, 4, 11)], Box::new(|t, v| {
                let a = t.add_row(v[0], v[1])?;
                let y = t.mul_row(a, v[1])?;
                project(t, y, 12)
            })),
            ("gelu", vec![rand_matrix(4, 4, 13)], Box::new(|t, v| {
                let y = t.gelu(v[0]);
                project(t, y, 14)
            })),
            ("softmax axis 0", vec![rand_matrix(5, 6, 15)], Box::new(|t, v| {
                let y = t.softmax(v[0], 0)?;
                project(t, y, 16)
            })),
            ("softmax axis 1", vec![rand_matrix(5, 6, 17)], Box::new(|t, v| {
                let y = t.softmax(v[0], 1)?;
                project(t, y, 18)
            })),
            ("layer_norm", vec![rand_matrix(4, 6, 19), rand_matrix(1, 6, 20), rand_matrix(1, 6, 21)], Box::new(|t, v| {
                let y = t.layer_norm(v[0], Some(v[1]), Some(v[2]), 1e-5)?;
                project(t, y, 22)
            })),
            ("concat/slice/transpose/gather", vec![rand_matrix(3, 2, 23), rand_matrix(3, 4, 24), rand_matrix(5, 2, 25)], Box::new(|t, v| {
                let c = t.concat(&[v[0], v[1]], 1)?;
                let s = t.slice(c, 1, 1, 4)?;
                let r = t.concat(&[v[0], v[2]], 0)?;
                let rs = t.slice(r, 0, 2, 4)?;
                let p = t.matmul(s, rs)?;
                let p = t.transpose(p)?;
                let y = t.gather(p, &[1, 0, 1])?;
                project(t, y, 26)
            })),
        ];
        let mut worst = 0.0f64;
        for (name, inputs, f) in &cases {
            let r = gradcheck::check(inputs, f, 1e-5, 1e-8).map_err(e2s)?;
            ensure(r.max_rel_err < 1e-4, || format!("{name}: rel err {:e}", r.max_rel_err))?;
            worst = worst.max(r.max_rel_err);
        }

        let cfg = DenoiserConfig {
            model: ModelConfig {
                num_frequencies: 2,
                num_latents: 4,
                width: 8,
                stages: 2,
                heads: 2,
                mlp_ratio: 2,
                data_std: 1.0,
            },
            dim_in: 2,
            dim_out: 1,
            cond_dim: 0,
        };
        let mut m = Denoiser::new(cfg, 1).map_err(e2s)?;
        // Redraw every parameter so no path starts switched off.
        for (i, t) in m.params_mut().tensors_mut().iter_mut().enumerate() {
            for (j, v) in t.data_mut().iter_mut().enumerate() {
                *v = 0.5 * rng::normal_at(rng::derive(99, &[i as u64]), j as u64);
            }
        }
        let (ctx, q) = (uniform(6, 1), uniform(3, 2));
        let vals: Vec<f64> = (0..6).map(|i| rng::normal_at(3, i)).collect();
        let target: Vec<f64> = (0..3).map(|i| rng::normal_at(4, i)).collect();
        let cond = Condition::points(uniform(2, 5));
        let r = gradcheck::check(
            m.params().tensors(),
            |tape, vars| {
                let y = m.forward(tape, vars, &ctx, &vals, &cond, 0.35, &q)?;
                let t = tape.constant(Tensor::matrix(3, 1, target.clone())?);
                let d = tape.sub(y, t)?;
                let sq = tape.mul(d, d)?;
                Ok(tape.sum(sq))
            },
            1e-3,
            1e-6,
        )
        .map_err(e2s)?;
        ensure(r.max_rel_err < 1e-4, || format!("micro-denoiser rel err {:e}", r.max_rel_err))?;
        ensure(start.elapsed().as_secs_f64() < 30.0, || "slower than 30 s".into())?;
        Ok(format!(
            "{} ops max rel err {worst:.1e}; micro-denoiser {} params max rel err {:.1e}",
            cases.len(),
            r.checked,
            r.max_rel_err
        ))
    };
    report(2, "autodiff integrity", start, run());
}

#[test]
fn criterion_03_process_algebra() {
    let start = Instant::now();
    let run = || -> Outcome {
        let s = NoiseSchedule::default();
        let f0: Vec<f64> = (0..50).map(|i| rng::normal_at(1, i)).collect();
        let g: Vec<f64> = (0..50).map(|i| rng::normal_at(2, i)).collect();
        ensure(forward_noise(&s, &f0, &g, 0.0).map_err(e2s)? == f0, || "forward_noise(t=0) != f0".into())?;

        let model = Denoiser::new(small_config(), 7).map_err(e2s)?;
        let coords = uniform(50, 3);
        let cond = Condition::points(uniform(8, 4));
        let mut worst = 0.0f64;
        for t in [0.1, 0.5, 1.0] {
            let state = DiffusionState {
                coords: coords.clone(),
                values: g.clone(),
                t,
                k: 2,
            };
            let same = ddim_step(&model, &s, &state, &cond, t).map_err(e2s)?;
            for (a, b) in same.values.iter().zip(&g) {
                worst = worst.max((a - b).abs());
            }
            let last = ddim_step(&model, &s, &state, &cond, 0.0).map_err(e2s)?;
            let d = model.predict(&coords, &g, &cond, t, &coords).map_err(e2s)?;
            ensure(last.values == d, || format!("s=0 step differs from D at t={t}"))?;
        }
        ensure(worst <= 1e-15, || format!("s=t step moved values by {worst:e}"))?;
        Ok(format!("s=t max change {worst:e}; s=0 equals D exactly"))
    };
    report(3, "forward/backward process algebra", start, run());
}

#[test]
fn criterion_04_oracle_sampler() {
    let start = Instant::now();
    let run = || -> Outcome {
        let schedule = NoiseSchedule::default();
        let fam = generate_sdf_family(20, 404, &DatasetConfig::default()).map_err(e2s)?;
        let mut worst = 0.0f64;
        for (i, s) in fam.iter().enumerate() {
            let oracle = OracleDenoiser::new(&s.target);
            let q = uniform(1000, rng::derive(4, &[i as u64]));
            let truth = s.target.eval_batch(&q).map_err(e2s)?;
            for n in [1, 2, 10, 50] {
                let spec = SampleSpec {
                    domain: DomainSpec::unit_box(2),
                    steps: n,
                    spacing: GridSpacing::Linear,
                    context_size: 256,
                    context_strategy: ContextStrategy::Uniform,
                    noise_resolution: vec![32, 32],
                    seed: rng::derive(44, &[i as u64]),
                };
                let gen = sample(&oracle, &schedule, &s.condition, &spec, false).map_err(e2s)?;
                for (a, b) in gen.eval_batch(&q).map_err(e2s)?.iter().zip(&truth) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
        ensure(worst <= 1e-9, || format!("max error {worst:e}"))?;
        ensure(start.elapsed().as_secs_f64() < 60.0, || "slower than 1 min".into())?;
        Ok(format!("20 shapes x N in {{1,2,10,50}} x 1000 queries, max error {worst:e}"))
    };
    report(4, "oracle sampler equivalence", start, run());
}

/// Grid with `cells` cells per axis over [-1, 1]^2, nodes included.
fn cell_grid(cells: usize) -> Points {
    ScalarGrid::nodes(&DomainSpec::unit_box(2), &[cells + 1, cells + 1])
}

#[test]
fn criterion_05_resolution_independence() {
    let start = Instant::now();
    let run = || -> Outcome {
        let dir = tempfile::tempdir().map_err(e2s)?;
        let path = dir.path().join("fixed.fndf");
        let model = Denoiser::new(DenoiserConfig::for_task(ModelConfig::default(), Task::Sdf2d), 5).map_err(e2s)?;
        let ck = Checkpoint {
            model,
            meta: CheckpointMeta {
                step: 0,
                run_config_hash: None,
            },
            extra: Vec::new(),
        };
        save_checkpoint(&ck, &path).map_err(e2s)?;
        let loaded = load_checkpoint(&path, None).map_err(e2s)?;
        let cond = Condition::points(uniform(8, 6));
        let spec = SampleSpec {
            domain: DomainSpec::unit_box(2),
            steps: 10,
            spacing: GridSpacing::Linear,
            context_size: 256,
            context_strategy: ContextStrategy::Uniform,
            noise_resolution: vec![32, 32],
            seed: 55,
        };
        let gen = sample(&loaded.model, &NoiseSchedule::default(), &cond, &spec, false).map_err(e2s)?;
        let (coarse, fine) = (cell_grid(32), cell_grid(128));
        let (vc, vf) = (gen.eval_batch(&coarse).map_err(e2s)?, gen.eval_batch(&fine).map_err(e2s)?);
        let mut shared = 0;
        for i in 0..33 {
            for j in 0..33 {
                let (ci, fi) = (i * 33 + j, (4 * i) * 129 + 4 * j);
                ensure(coarse.get(ci) == fine.get(fi), || "grid coordinates differ".into())?;
                ensure(vc[ci].to_bits() == vf[fi].to_bits(), || format!("value differs at node ({i}, {j})"))?;
                shared += 1;
            }
        }
        Ok(format!("{shared} shared nodes of the 32^2- and 128^2-cell grids agree bit-exactly"))
    };
    report(5, "resolution independence", start, run());
}

#[test]
fn criterion_06_dpm_degeneration() {
    let start = Instant::now();
    let run = || -> Outcome {
        let side = 16;
        let setup = TrainSetup {
            schedule: NoiseSchedule::default(),
            loss_weight: LossWeight::Constant(1.0),
            dataset: DatasetConfig {
                count: 8,
                context_size: side * side,
                context_strategy: ContextStrategy::Grid,
                query_strategy: QueryStrategy::SameAsContext,
                ..DatasetConfig::default()
            },
            // Noise lattice equal to the context grid: i.i.d. normals per pixel.
            noise: NoiseConfig {
                resolution: vec![side, side],
                seed: 0,
            },
            train: TrainConfig {
                seed: 6,
                ..TrainConfig::default()
            },
        };
        let fam = generate_sdf_family(8, 66, &setup.dataset).map_err(e2s)?;
        let model = Denoiser::new(small_config(), 9).map_err(e2s)?;
        let mut worst = 0.0f64;
        for (step, b) in [(0u64, 0usize), (3, 1), (17, 2), (250, 5)] {
            let ex = draw_example(&setup, &fam, step, b).map_err(e2s)?;
            let mut tape = Tape::new();
            let vars = model.push_params(&mut tape, false);
            let l = example_loss(&model, &mut tape, &vars, &ex, &fam, &setup.loss_weight).map_err(e2s)?;
            let loss = tape.value(l).item().map_err(e2s)?;

            // Fixed-grid diffusion loss coded directly from the same stream.
            let seed = rng::derive(setup.train.seed, &[0x7e57, step, b as u64]);
            let mut r = rng::stream(rng::derive(seed, &[0]));
            let idx = rand::Rng::gen_range(&mut r, 0..fam.len());
            let t = setup.schedule.sample_t(&mut r);
            let shape = fam[idx].target.shape().ok_or("not an SDF")?;
            let channel_seed = rng::derive(rng::derive(seed, &[2]), &[0]);
            let (alpha, sigma) = (1.0 / (t * t + 1.0).sqrt(), t / (t * t + 1.0).sqrt());
            let mut pixels = Vec::new();
            let mut clean = Vec::new();
            let mut noisy = Vec::new();
            for iy in 0..side {
                for ix in 0..side {
                    let x = [
                        -1.0 + 2.0 * ix as f64 / (side - 1) as f64,
                        -1.0 + 2.0 * iy as f64 / (side - 1) as f64,
                    ];
                    let f0 = shape.sdf(&x);
                    let g = rng::normal_at(channel_seed, (iy * side + ix) as u64);
                    pixels.extend_from_slice(&x);
                    clean.push(f0);
                    noisy.push(alpha * f0 + sigma * g);
                }
            }
            let grid = Points::new(2, pixels).map_err(e2s)?;
            let d = model.predict(&grid, &noisy, &fam[idx].condition, t, &grid).map_err(e2s)?;
            let direct: f64 = d.iter().zip(&clean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / clean.len() as f64;
            worst = worst.max((loss - direct).abs());
        }
        ensure(worst <= 1e-12, || format!("max loss difference {worst:e}"))?;
        ensure(start.elapsed().as_secs_f64() < 10.0, || "slower than 10 s".into())?;
        Ok(format!("4 draws, max |loss - grid loss| = {worst:e}"))
    };
    report(6, "DPM degeneration", start, run());
}

#[test]
fn criterion_07_noise_statistics() {
    let start = Instant::now();
    let run = || -> Outcome {
        let domain = DomainSpec::unit_box(2);
        let res = [4, 4];
        let seeds = 10_000;
        let mut sum = [0.0; 16];
        let mut sq = [0.0; 16];
        for s in 0..seeds {
            let f = sample_noise_field(&domain, &res, rng::derive(7, &[s])).map_err(e2s)?;
            for (i, v) in f.node_values().iter().enumerate() {
                sum[i] += v;
                sq[i] += v * v;
            }
        }
        let n = seeds as f64;
        let (mut mean_worst, mut var_worst) = (0.0f64, 0.0f64);
        for i in 0..16 {
            let mean = sum[i] / n;
            let var = sq[i] / n - mean * mean;
            ensure(mean.abs() <= 0.05, || format!("node {i} mean {mean}"))?;
            ensure((0.95..=1.05).contains(&var), || format!("node {i} variance {var}"))?;
            mean_worst = mean_worst.max(mean.abs());
            var_worst = var_worst.max((var - 1.0).abs());
        }

        let field = sample_noise_field(&domain, &[9, 7], 77).map_err(e2s)?;
        let probes = uniform(100_000, 78);
        for p in probes.iter() {
            let v = field.evaluate(p).map_err(e2s)?;
            let c = field.corner_values(p).map_err(e2s)?;
            let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            ensure(v >= lo && v <= hi, || format!("value {v} outside [{lo}, {hi}] at {p:?}"))?;
        }
        ensure(start.elapsed().as_secs_f64() < 30.0, || "slower than 30 s".into())?;
        Ok(format!(
            "max |mean| {mean_worst:.4}, max |var-1| {var_worst:.4}; 1e5 probes inside corner hulls"
        ))
    };
    report(7, "noise-field statistics", start, run());
}

#[test]
fn criterion_08_metric_floors() {
    let start = Instant::now();
    let run = || -> Outcome {
        let domain = DomainSpec::unit_box(2);
        let zero = fundiff::field::ConstantField {
            dim_in: 2,
            value: vec![0.0],
        };
        let cell = 2.0 / 127.0;
        let (mut e_worst, mut b_worst, mut c_worst) = (0.0f64, 0.0f64, 0.0f64);
        for (i, (c, r)) in [([0.0, 0.0], 0.5), ([0.3, -0.2], 0.25), ([-0.4, 0.35], 0.4)].into_iter().enumerate() {
            let circle = AnalyticShape::ball(c.to_vec(), r).map_err(e2s)?;
            let sets = EvalSets::for_shape(&circle, &domain, 10_000, 10_000, 1e-3, 0.05, i as u64).map_err(e2s)?;
            e_worst = e_worst.max(eikonal_metric(&circle, &sets.interior, 1e-3, &domain).map_err(e2s)?);
            b_worst = b_worst.max(boundary_metric(&circle, &sets.boundary, &zero).map_err(e2s)?);
            let grid = ScalarGrid::sample(&circle, &domain, &[128, 128]).map_err(e2s)?;
            let contour = marching_squares(&grid).map_err(e2s)?;
            let pred = contour.sample_points(2048, 1).map_err(e2s)?;
            let truth = sample_boundary(&circle, 2048, 2).map_err(e2s)?;
            c_worst = c_worst.max(chamfer(&pred, &truth).map_err(e2s)?);
        }
        ensure(e_worst <= 1e-5, || format!("Eikonal {e_worst:e}"))?;
        ensure(b_worst <= 1e-12, || format!("Boundary {b_worst:e}"))?;
        ensure(c_worst <= 2.0 * cell, || format!("Chamfer {c_worst:e} vs cell {cell:e}"))?;
        ensure(start.elapsed().as_secs_f64() < 30.0, || "slower than 30 s".into())?;
        Ok(format!(
            "Eikonal {e_worst:.1e}, Boundary {b_worst:.1e}, Chamfer {c_worst:.2e} (2 cells = {:.2e})",
            2.0 * cell
        ))
    };
    report(8, "metric floors", start, run());
}

/// A trained run: its config and the path of its final weights.
struct TrainedRun {
    cfg: RunConfig,
    weights: PathBuf,
    steps: u64,
    wall_secs: f64,
    first_loss: f64,
    last_loss: f64,
}

/// Loads `artifacts/<name>` or retrains it from `configs/<name>.json`.
fn trained_run(name: &str) -> Result<TrainedRun, String> {
    let root = workspace();
    let cfg = RunConfig::load(&root.join("configs").join(format!("{name}.json"))).map_err(e2s)?;
    let mut dir = root.join("artifacts").join(name);
    let retrain = std::env::var("FUNDIFF_RETRAIN").is_ok_and(|v| v == "1");
    if retrain || !dir.join("model.fndf").exists() {
        dir = root.join("target").join("acceptance").join(name);
        cmd_train(&cfg, &dir, None).map_err(e2s)?;
    }
    let weights = dir.join("model.fndf");
    let ck = load_checkpoint(&weights, Some(&cfg.denoiser_config())).map_err(e2s)?;
    ensure(ck.meta.run_config_hash.as_deref() == Some(cfg.hash().as_str()), || {
        format!("{} was not trained with configs/{name}.json", weights.display())
    })?;
    let log = std::fs::read_to_string(dir.join("loss.csv")).map_err(e2s)?;
    let rows: Vec<Vec<f64>> = log
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap_or(f64::NAN)).collect())
        .collect();
    let last = rows.last().ok_or("empty loss log")?;
    let mean = |r: &[Vec<f64>]| r.iter().map(|x| x[1]).sum::<f64>() / r.len() as f64;
    let k = rows.len().min(100);
    Ok(TrainedRun {
        steps: last[0] as u64,
        wall_secs: last[8],
        first_loss: mean(&rows[..k]),
        last_loss: mean(&rows[rows.len() - k..]),
        cfg,
        weights,
    })
}

fn evaluate(run: &TrainedRun, name: &str, samples: usize, steps: usize) -> Result<Report, String> {
    let mut cfg = run.cfg.clone();
    cfg.eval.num_samples = samples;
    cfg.eval.steps = Some(steps);
    let out = workspace().join("target").join("acceptance").join(format!("{name}-eval"));
    cmd_eval(&cfg, &out, Some(&run.weights)).map_err(e2s)
}

#[test]
fn criterion_09_sdf_experiment() {
    let start = Instant::now();
    let run = || -> Outcome {
        let tr = trained_run("sdf2d")?;
        let (c, m) = (&tr.cfg, &tr.cfg.model);
        ensure(
            c.dataset.task == Task::Sdf2d
                && m.stages == 2
                && m.num_latents == 64
                && m.width == 64
                && c.dataset.context_size == 256
                && c.dataset.query_size == 64
                && c.dataset.count == 512,
            || "config is not the default desk-scale setup".into(),
        )?;
        ensure(tr.steps <= 50_000, || format!("{} training steps", tr.steps))?;
        ensure(tr.wall_secs <= 45.0 * 60.0, || format!("training took {:.0} s", tr.wall_secs))?;
        let rep = evaluate(&tr, "sdf2d", 64, 50)?;
        let row = |k: &str| rep.summary.get(k).cloned().ok_or(format!("missing {k} row"));
        let (model, oracle, base) = (row("model")?, row("oracle")?, row("baseline")?);
        let mb = model.boundary.ok_or("no boundary")?;
        let me = model.eikonal.ok_or("no eikonal")?;
        let mf = model.fscore.ok_or("no fscore")?;
        let ob = oracle.boundary.ok_or("no boundary")?;
        let bb = base.boundary.ok_or("no boundary")?;
        let detail = format!(
            "{} steps in {:.0} s, loss {:.4} -> {:.4}; model boundary {mb:.4} eikonal {me:.4} fscore {mf:.3} \
             chamfer {} mc_l2 {:.3} vs baseline {:.3}; oracle boundary {ob:.1e}; baseline boundary {bb:.4}",
            tr.steps,
            tr.wall_secs,
            tr.first_loss,
            tr.last_loss,
            model.chamfer.map_or("-".into(), |v| format!("{v:.4}")),
            model.mc_l2,
            base.mc_l2,
        );
        ensure(oracle.mc_l2 < model.mc_l2 && model.mc_l2 < base.mc_l2, || format!("mc_l2 ordering; {detail}"))?;
        ensure(ob < mb && mb < bb, || format!("boundary ordering; {detail}"))?;
        ensure(mb < 0.05 && me < 0.3, || format!("(a) failed; {detail}"))?;
        ensure(model.mc_l2 <= 0.5 * base.mc_l2, || format!("(b) failed; {detail}"))?;
        ensure(mf > 0.5, || format!("(c) failed; {detail}"))?;
        Ok(detail)
    };
    report(9, "desk-scale SDF experiment", start, run());
}

#[test]
fn criterion_10_deformation_smoke() {
    let start = Instant::now();
    let run = || -> Outcome {
        let tr = trained_run("deform")?;
        ensure(tr.cfg.dataset.task == Task::DeformCircle, || "not the deformation task".into())?;
        ensure(tr.cfg.dataset.n_cond() == 8, || "not 8 correspondences".into())?;
        ensure(tr.wall_secs <= 15.0 * 60.0, || format!("training took {:.0} s", tr.wall_secs))?;
        let rep = evaluate(&tr, "deform", 64, tr.cfg.schedule.num_steps)?;
        let mse = |k: &str| rep.summary.get(k).and_then(|r| r.deformation_mse).ok_or(format!("missing {k} row"));
        let (model, base) = (mse("model")?, mse("baseline")?);
        let detail = format!(
            "{} steps in {:.0} s; deformation mse {model:.3e} vs zero baseline {base:.3e} (ratio {:.3})",
            tr.steps,
            tr.wall_secs,
            model / base
        );
        ensure(model <= 0.5 * base, || detail.clone())?;
        Ok(detail)
    };
    report(10, "deformation smoke", start, run());
}

fn fundiff(args: &[&str]) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_fundiff")).args(args).output().unwrap()
}

fn strip_wall_time(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn criterion_11_determinism() {
    let start = Instant::now();
    let run = || -> Outcome {
        let dir = tempfile::tempdir().map_err(e2s)?;
        let d = dir.path();
        let cfg = r#"{
            "dataset": {"count": 16, "context_size": 64, "query_size": 32},
            "model": {"num_frequencies": 4, "num_latents": 16, "width": 16, "heads": 2},
            "train": {"steps": 20, "batch_size": 4, "checkpoint_every": 10},
            "schedule": {"num_steps": 10},
            "eval": {"num_samples": 3, "interior_points": 500, "boundary_points": 500, "mc_points": 500}
        }"#;
        let cfg_path = d.join("cfg.json");
        std::fs::write(&cfg_path, cfg).map_err(e2s)?;
        let c = cfg_path.to_str().unwrap();
        let path = |p: &str| d.join(p).to_str().unwrap().to_owned();
        let ok = |o: std::process::Output| -> Result<(), String> {
            ensure(o.status.success(), || String::from_utf8_lossy(&o.stderr).into_owned())
        };
        for run in ["a", "b"] {
            ok(fundiff(&["train", "--config", c, "--threads", "1", "--out", &path(run)]))?;
        }
        let read = |p: String| std::fs::read(p).map_err(e2s);
        let text = |p: String| std::fs::read_to_string(p).map_err(e2s);
        ensure(read(path("a/final.fndf"))? == read(path("b/final.fndf"))?, || "train checkpoints differ".into())?;
        let loss_a = strip_wall_time(&text(path("a/loss.csv"))?);
        ensure(loss_a == strip_wall_time(&text(path("b/loss.csv"))?), || "loss streams differ".into())?;

        ok(fundiff(&["train", "--config", c, "--threads", "1", "--out", &path("r"), "--resume", &path("a/ckpt_10.fndf")]))?;
        ensure(read(path("a/final.fndf"))? == read(path("r/final.fndf"))?, || "resumed checkpoint differs".into())?;
        let resumed = strip_wall_time(&text(path("r/loss.csv"))?);
        let tail: Vec<&str> = loss_a.lines().skip(11).collect();
        ensure(resumed.lines().skip(1).collect::<Vec<_>>() == tail, || "resumed loss stream differs".into())?;

        for run in ["sa", "sb"] {
            ok(fundiff(&[
                "sample", "--config", c, "--ckpt", &path("a/final.fndf"), "--out", &path(run), "--grid", "32", "--trace", "3",
                "--seed", "5",
            ]))?;
        }
        for f in ["grid.csv", "grid.pgm", "final.obj", "trace_00.pgm", "trace_02.pgm", "meta.json"] {
            ensure(read(path(&format!("sa/{f}")))? == read(path(&format!("sb/{f}")))?, || format!("sample {f} differs"))?;
        }
        for run in ["ea", "eb"] {
            ok(fundiff(&["eval", "--config", c, "--ckpt", &path("a/final.fndf"), "--out", &path(run)]))?;
        }
        ensure(read(path("ea/report.csv"))? == read(path("eb/report.csv"))?, || "eval reports differ".into())?;
        ensure(read(path("ea/report.json"))? == read(path("eb/report.json"))?, || "eval reports differ".into())?;
        Ok("train x2, resume from step 10, sample x2, eval x2: all outputs identical".into())
    };
    report(11, "determinism", start, run());
}
