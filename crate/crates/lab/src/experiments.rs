//! Replicated experiments.
//!
//! Replication `r` (zero-based) draws its data with seed
//! `mix_seed(spec.seed, r)` and its partitions with
//! `mix_seed(data_seed, PLAN_STREAM)`, so every replication is independent of
//! the worker count and of the other replications. Replications run on a rayon
//! pool and are collected in index order.

use std::fs;
use std::path::Path;
use std::time::Instant;

use fmgd::datagen::{generate, write_csv, DataGenSpec, Dataset, Model};
use fmgd::dynsys::stable_solution_from_stats;
use fmgd::engine::{precompute_batch_stats, run_in_memory, Init, Method, Record, RunConfig, RunTrajectory};
use fmgd::losses::{newton_mle, ols, LossKind};
use fmgd::partition::{make_fixed, make_shuffled};
use fmgd::rng::mix_seed;
use fmgd::schedule::Schedule;
use fmgd::source::InMemory;
use fmgd::store::{pack, PackedStore, ShuffledCsv};
use fmgd::tensor::distance;
use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::report::{mean, Cell, Curve, ExperimentReport, Sample, TimingRow};
use crate::spec::{ExperimentSpec, Kind};

pub const PLAN_STREAM: u64 = 0x706c_616e;

pub fn data_seed(spec: &ExperimentSpec, r: usize) -> u64 {
    mix_seed(spec.seed, r as u64)
}

pub fn plan_seed(data_seed: u64) -> u64 {
    mix_seed(data_seed, PLAN_STREAM)
}

/// `||a - b||^2 / p`.
pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    distance(a, b).powi(2) / a.len() as f64
}

fn replicate<T, F>(spec: &ExperimentSpec, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| LabError::Spec(format!("cannot start {} workers: {e}", spec.workers)))?;
    pool.install(|| (0..spec.replications()).into_par_iter().map(f).collect())
}

fn reference_name(model: Model) -> &'static str {
    match model {
        Model::Linear => "ols",
        _ => "mle",
    }
}

/// One learning-rate setting of a sweep.
pub struct Setting {
    pub label: String,
    pub param: f64,
    pub schedule: Schedule,
}

fn constant_settings(alphas: &[f64]) -> Result<Vec<Setting>> {
    alphas
        .iter()
        .map(|&a| {
            Ok(Setting {
                label: format!("alpha={a}"),
                param: a,
                schedule: Schedule::constant(a)?,
            })
        })
        .collect()
}

fn gamma_settings(c: f64, gammas: &[f64]) -> Result<Vec<Setting>> {
    gammas
        .iter()
        .map(|&g| {
            Ok(Setting {
                label: format!("gamma={g}"),
                param: g,
                schedule: Schedule::polynomial(c, g)?,
            })
        })
        .collect()
}

struct Replication {
    data: Dataset,
    truth: Vec<f64>,
    reference: Option<Vec<f64>>,
    plan_seed: u64,
    note: Option<String>,
}

fn prepare(spec: &ExperimentSpec, model: Model, r: usize) -> Result<Replication> {
    let seed = data_seed(spec, r);
    let gen: DataGenSpec = spec.data_spec(model, seed);
    let data = generate(&gen)?;
    let (reference, note) = match model {
        Model::Linear => (Some(ols(&data)?), None),
        _ => match newton_mle(&data, LossKind::for_model(model)) {
            Ok(fit) if fit.converged => (Some(fit.theta), None),
            Ok(fit) => (
                None,
                Some(format!(
                    "{model} replication {}: Newton stopped after {} steps at gradient norm {:e}; replication aborted",
                    r + 1,
                    fit.iterations,
                    fit.grad_norm
                )),
            ),
            Err(e) => (None, Some(format!("{model} replication {}: {e}; replication aborted", r + 1))),
        },
    };
    Ok(Replication {
        data,
        truth: gen.theta_true,
        reference,
        plan_seed: plan_seed(seed),
        note,
    })
}

fn config(spec: &ExperimentSpec, method: Method, model: Model, schedule: Schedule, n_total: usize, seed: u64) -> RunConfig {
    RunConfig::new(
        method,
        LossKind::for_model(model),
        schedule,
        n_total / spec.batch_size,
        spec.epochs,
    )
    .with_seed(seed)
    .with_init(Init::Zeros)
}

fn final_sample(traj: &RunTrajectory, truth: &[f64]) -> Sample {
    if traj.diverged || traj.final_theta.iter().any(|v| !v.is_finite()) {
        Sample::Diverged
    } else {
        Sample::Ok(mse(&traj.final_theta, truth).ln())
    }
}

/// Runs every method under every setting on `B` replications of `model`,
/// plus the whole-sample reference estimator. Cells come out grouped by
/// setting, methods in spec order, reference last.
pub fn sweep(spec: &ExperimentSpec, model: Model, settings: &[Setting]) -> Result<(Vec<Cell>, Vec<String>)> {
    let per_rep = replicate(spec, |r| {
        let rep = prepare(spec, model, r)?;
        let mut samples = Vec::with_capacity(settings.len() * (spec.methods.len() + 1));
        for s in settings {
            for &method in &spec.methods {
                if rep.reference.is_none() {
                    samples.push(Sample::Failed);
                    continue;
                }
                let cfg = config(spec, method, model, s.schedule.clone(), rep.data.len(), rep.plan_seed)
                    .with_record(Record::FinalOnly);
                samples.push(final_sample(&run_in_memory(&rep.data, &cfg)?, &rep.truth));
            }
            samples.push(match &rep.reference {
                Some(theta) => Sample::Ok(mse(theta, &rep.truth).ln()),
                None => Sample::Failed,
            });
        }
        Ok((samples, rep.note))
    })?;

    let mut cells = Vec::new();
    let mut k = 0;
    for s in settings {
        let names = spec
            .methods
            .iter()
            .map(|m| m.as_str())
            .chain(std::iter::once(reference_name(model)));
        for name in names {
            cells.push(Cell {
                model,
                method: name.to_string(),
                setting: s.label.clone(),
                param: s.param,
                samples: per_rep.iter().map(|(v, _)| v[k]).collect(),
            });
            k += 1;
        }
    }
    let notes = per_rep.into_iter().filter_map(|(_, n)| n).collect();
    Ok((cells, notes))
}

fn seeds(spec: &ExperimentSpec) -> Vec<u64> {
    (0..spec.replications()).map(|r| data_seed(spec, r)).collect()
}

/// Constant learning rates: log(MSE) boxes per rate for each method and OLS.
pub fn run_case1(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new(spec, seeds(spec));
    let (cells, notes) = sweep(spec, Model::Linear, &constant_settings(&spec.alphas)?)?;
    report.cells = cells;
    report.notes = notes;
    Ok(report)
}

/// Polynomial schedules `c_alpha * t^-gamma` over the gamma grid.
pub fn run_case2(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new(spec, seeds(spec));
    let (cells, notes) = sweep(spec, Model::Linear, &gamma_settings(spec.c_alpha, &spec.gammas)?)?;
    report.cells = cells;
    report.notes = notes;
    Ok(report)
}

/// The gamma sweep for each non-linear model, with the Newton MLE as reference.
pub fn run_general_loss(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new(spec, seeds(spec));
    let settings = gamma_settings(spec.c_alpha, &spec.gammas)?;
    for model in spec.models() {
        let (cells, notes) = sweep(spec, model, &settings)?;
        report.cells.extend(cells);
        report.notes.extend(notes);
    }
    Ok(report)
}

fn log_mean_curve(runs: &[&Vec<f64>], epochs: usize) -> Vec<f64> {
    (0..epochs)
        .map(|t| mean(&runs.iter().map(|r| r[t]).collect::<Vec<_>>()).ln())
        .collect()
}

/// Per-epoch numerical and estimation error curves for constant `alpha = 0.1`
/// and for `c_alpha * t^-0.6`. Besides one curve per method, the report holds
/// the OLS estimation error (`ols`) and, for the constant rate, the distance
/// from the FMGD stable solution to OLS (`fmgd-stable`), where the FMGD
/// numerical error settles.
pub fn run_convergence(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    const ALPHA: f64 = 0.1;
    const GAMMA: f64 = 0.6;
    let model = Model::Linear;
    let mut report = ExperimentReport::new(spec, seeds(spec));
    let settings = [
        Setting {
            label: format!("alpha={ALPHA}"),
            param: ALPHA,
            schedule: Schedule::constant(ALPHA)?,
        },
        Setting {
            label: format!("gamma={GAMMA}"),
            param: GAMMA,
            schedule: Schedule::polynomial(spec.c_alpha, GAMMA)?,
        },
    ];
    let epochs = spec.epochs as usize;

    struct Run {
        sample: Sample,
        numerical: Vec<f64>,
        estimation: Vec<f64>,
    }
    struct Rep {
        runs: Vec<Run>,
        ols_error: f64,
        ols_sample: Sample,
        stable_distance: f64,
    }

    let reps = replicate(spec, |r| {
        let rep = prepare(spec, model, r)?;
        let theta_ols = rep.reference.expect("least squares always has a reference");
        let mut runs = Vec::new();
        for s in &settings {
            for &method in &spec.methods {
                let cfg = config(spec, method, model, s.schedule.clone(), rep.data.len(), rep.plan_seed)
                    .with_record(Record::PerEpoch)
                    .with_global(theta_ols.clone())
                    .with_truth(rep.truth.clone());
                let traj = run_in_memory(&rep.data, &cfg)?;
                runs.push(Run {
                    sample: final_sample(&traj, &rep.truth),
                    numerical: traj.numerical_error,
                    estimation: traj.estimation_error,
                });
            }
        }
        let cfg = config(spec, Method::Fmgd, model, settings[0].schedule.clone(), rep.data.len(), rep.plan_seed);
        let plan = make_fixed(rep.data.len(), cfg.batches, rep.plan_seed)?;
        let stats = precompute_batch_stats(&mut InMemory::new(&rep.data), &plan)?;
        let stable = stable_solution_from_stats(&stats, ALPHA)?;
        Ok(Rep {
            runs,
            ols_error: distance(&theta_ols, &rep.truth),
            ols_sample: Sample::Ok(mse(&theta_ols, &rep.truth).ln()),
            stable_distance: distance(stable.last_block(), &theta_ols),
        })
    })?;

    let mut k = 0;
    for s in &settings {
        for &method in &spec.methods {
            let samples: Vec<Sample> = reps.iter().map(|r| r.runs[k].sample).collect();
            let finished: Vec<&Run> = reps
                .iter()
                .map(|r| &r.runs[k])
                .filter(|run| matches!(run.sample, Sample::Ok(_)) && run.numerical.len() == epochs)
                .collect();
            for (metric, pick) in [
                ("numerical", (|r: &Run| &r.numerical) as fn(&Run) -> &Vec<f64>),
                ("estimation", |r: &Run| &r.estimation),
            ] {
                let series: Vec<&Vec<f64>> = finished.iter().map(|r| pick(r)).collect();
                report.curves.push(Curve {
                    model,
                    method: method.to_string(),
                    setting: s.label.clone(),
                    metric: metric.into(),
                    values: log_mean_curve(&series, epochs),
                    n: series.len(),
                });
            }
            report.cells.push(Cell {
                model,
                method: method.to_string(),
                setting: s.label.clone(),
                param: s.param,
                samples,
            });
            k += 1;
        }
        let ols_level = mean(&reps.iter().map(|r| r.ols_error).collect::<Vec<_>>()).ln();
        report.curves.push(Curve {
            model,
            method: "ols".into(),
            setting: s.label.clone(),
            metric: "estimation".into(),
            values: vec![ols_level; epochs],
            n: reps.len(),
        });
        report.cells.push(Cell {
            model,
            method: "ols".into(),
            setting: s.label.clone(),
            param: s.param,
            samples: reps.iter().map(|r| r.ols_sample).collect(),
        });
    }
    let plateau = mean(&reps.iter().map(|r| r.stable_distance).collect::<Vec<_>>()).ln();
    report.curves.push(Curve {
        model,
        method: "fmgd-stable".into(),
        setting: settings[0].label.clone(),
        metric: "numerical".into(),
        values: vec![plateau; epochs],
        n: reps.len(),
    });
    Ok(report)
}

/// Packed versus shuffled per-epoch read times for `N = kappa * rows_per_kappa`.
///
/// For each kappa a linear dataset is written to CSV under `work_dir`, packed
/// with a fixed plan (timed), and indexed for random access (timed). Then
/// `io.replications` epochs are read from each side, the shuffled side with a
/// fresh plan per epoch. The first epoch is reported as `cold`, the mean of
/// the rest as `warm_mean`, the mean of all as `epoch_mean`. The data files
/// are removed unless `keep_data` is set.
pub fn run_io_benchmark(spec: &ExperimentSpec, work_dir: &Path, keep_data: bool) -> Result<ExperimentReport> {
    let io = &spec.io;
    let mut report = ExperimentReport::new(spec, Vec::new());
    report.replications = io.replications;
    fs::create_dir_all(work_dir).map_err(|e| LabError::io(work_dir, e))?;
    for &kappa in &io.kappas {
        let n_total = kappa * io.rows_per_kappa;
        let m = n_total / spec.batch_size;
        let seed = mix_seed(spec.seed, kappa as u64);
        report.seeds.push(seed);
        let gen = DataGenSpec::new(n_total, io.dim, Model::Linear, 1.0, seed);
        let data = generate(&gen)?;
        let csv = work_dir.join(format!("data_k{kappa}.csv"));
        write_csv(&data, &csv)?;
        drop(data);

        let pack_dir = work_dir.join(format!("packed_k{kappa}"));
        if pack_dir.exists() {
            fs::remove_dir_all(&pack_dir).map_err(|e| LabError::io(&pack_dir, e))?;
        }
        let plan = make_fixed(n_total, m, plan_seed(seed))?;
        let start = Instant::now();
        pack(&csv, &plan, &pack_dir)?;
        let pack_time = start.elapsed().as_secs_f64();

        let start = Instant::now();
        let mut shuffled = ShuffledCsv::open(&csv)?;
        let index_time = start.elapsed().as_secs_f64();
        let mut packed = PackedStore::open(&pack_dir)?;

        let mut packed_times = Vec::with_capacity(io.replications);
        let mut shuffled_times = Vec::with_capacity(io.replications);
        for r in 0..io.replications {
            packed_times.push(packed.read_epoch_timed()?.epoch.as_secs_f64());
            let plan = make_shuffled(n_total, m, plan_seed(seed), r as u64 + 1)?;
            shuffled_times.push(shuffled.read_epoch_timed(&plan)?.epoch.as_secs_f64());
        }

        let row = |path: &str, phase: &str, reps: usize, seconds: f64| TimingRow {
            kappa,
            n_total,
            path: path.into(),
            phase: phase.into(),
            replications: reps,
            seconds,
        };
        report.timings.push(row("packed", "pack", 1, pack_time));
        report.timings.push(row("shuffled", "index", 1, index_time));
        for (path, times) in [("packed", &packed_times), ("shuffled", &shuffled_times)] {
            report.timings.push(row(path, "cold", 1, times[0]));
            if times.len() > 1 {
                report.timings.push(row(path, "warm_mean", times.len() - 1, mean(&times[1..])));
            }
            report.timings.push(row(path, "epoch_mean", times.len(), mean(times)));
        }

        if !keep_data {
            drop(packed);
            drop(shuffled);
            fs::remove_file(&csv).map_err(|e| LabError::io(&csv, e))?;
            fs::remove_dir_all(&pack_dir).map_err(|e| LabError::io(&pack_dir, e))?;
        }
    }
    if !keep_data {
        // only succeeds if nothing else was put there
        let _ = fs::remove_dir(work_dir);
    }
    report.notes.push(
        "timings are wall-clock on this machine; OS page caches were not dropped, so cold and warm epochs are reported separately".into(),
    );
    Ok(report)
}

/// Runs the experiment `spec.kind` names. I/O data goes under
/// `<output>/data` and is removed afterwards.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    match spec.kind {
        Kind::Case1 => run_case1(spec),
        Kind::Case2 => run_case2(spec),
        Kind::Convergence => run_convergence(spec),
        Kind::GeneralLoss => run_general_loss(spec),
        Kind::Io => run_io_benchmark(spec, &spec.output_dir().join("data"), false),
    }
}
