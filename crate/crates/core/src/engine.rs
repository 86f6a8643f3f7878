//! The optimizer loops: full GD, FMGD, shuffled FMGD and SMGD share one epoch
//! driver.
//!
//! Within epoch `t` the batches `m = 1..M` are visited in order and each update
//! is `theta <- theta - alpha_t * grad L_n^(m)(theta)`. For least squares on a
//! fixed partition the per-batch moments are computed once and the update is
//! applied as `theta <- Delta^(m) theta + alpha Sxy^(m)` with
//! `Delta^(m) = I - alpha Sxx^(m)`.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::losses::{grad, ols, BatchStats, LossKind};
use crate::partition::{make_fixed, make_sampled, make_shuffled, PartitionPlan, Regime};
use crate::schedule::Schedule;
use crate::source::{DataSource, InMemory};
use crate::tensor::{distance, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gd,
    Fmgd,
    Sfmgd,
    Smgd,
}

impl Method {
    pub const MINI_BATCH: [Method; 3] = [Method::Fmgd, Method::Sfmgd, Method::Smgd];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Gd => "gd",
            Method::Fmgd => "fmgd",
            Method::Sfmgd => "sfmgd",
            Method::Smgd => "smgd",
        }
    }

    pub fn regime(self) -> Regime {
        match self {
            Method::Gd | Method::Fmgd => Regime::Fixed,
            Method::Sfmgd => Regime::Shuffled,
            Method::Smgd => Regime::Sampled,
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gd" => Ok(Method::Gd),
            "fmgd" => Ok(Method::Fmgd),
            "sfmgd" => Ok(Method::Sfmgd),
            "smgd" => Ok(Method::Smgd),
            other => Err(Error::invalid(format!("unknown method {other:?}"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum Init {
    #[default]
    Zeros,
    Given(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Record {
    FinalOnly,
    #[default]
    PerEpoch,
    PerBatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub loss: LossKind,
    pub schedule: Schedule,
    /// Number of mini-batches M; ignored (forced to 1) for GD.
    pub batches: usize,
    pub epochs: u64,
    pub init: Init,
    pub seed: u64,
    pub record: Record,
    /// Whole-sample estimate the numerical error is measured against.
    pub global: Option<Vec<f64>>,
    /// True parameter the estimation error is measured against.
    pub truth: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn new(method: Method, loss: LossKind, schedule: Schedule, batches: usize, epochs: u64) -> Self {
        RunConfig {
            method,
            loss,
            schedule,
            batches,
            epochs,
            init: Init::Zeros,
            seed: 0,
            record: Record::PerEpoch,
            global: None,
            truth: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn with_record(mut self, record: Record) -> Self {
        self.record = record;
        self
    }

    pub fn with_global(mut self, global: Vec<f64>) -> Self {
        self.global = Some(global);
        self
    }

    pub fn with_truth(mut self, truth: Vec<f64>) -> Self {
        self.truth = Some(truth);
        self
    }

    /// M after the GD override.
    pub fn effective_batches(&self) -> usize {
        match self.method {
            Method::Gd => 1,
            _ => self.batches,
        }
    }

    fn validate(&self, p: usize) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("need at least one epoch"));
        }
        if self.effective_batches() == 0 {
            return Err(Error::invalid("need at least one mini-batch"));
        }
        self.schedule.validate()?;
        let init = match &self.init {
            Init::Zeros => None,
            Init::Given(v) => Some(v.clone()),
        };
        for (name, v) in [("init", &init), ("global", &self.global), ("truth", &self.truth)] {
            if let Some(v) = v {
                if v.len() != p {
                    return Err(Error::dims(format!("{name} has length {}, expected {p}", v.len())));
                }
            }
        }
        Ok(())
    }

    fn init_vector(&self, p: usize) -> Vec<f64> {
        match &self.init {
            Init::Zeros => vec![0.0; p],
            Init::Given(v) => v.clone(),
        }
    }
}

/// Partition plan used by `cfg` in epoch `t` (1-based) over `n_total` rows.
pub fn plan_for(cfg: &RunConfig, n_total: usize, epoch: u64) -> Result<PartitionPlan> {
    let m = cfg.effective_batches();
    match cfg.method {
        Method::Gd | Method::Fmgd => make_fixed(n_total, m, cfg.seed),
        Method::Sfmgd => make_shuffled(n_total, m, cfg.seed, epoch),
        Method::Smgd => {
            if m == 0 || n_total % m != 0 {
                return Err(Error::invalid(format!(
                    "M = {m} does not divide N = {n_total}; batch size n = N/M must be an integer"
                )));
            }
            make_sampled(n_total, m, n_total / m, cfg.seed, epoch)
        }
    }
}

/// One recorded parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct Iterate {
    pub epoch: u64,
    /// 1-based batch index within the epoch; M for epoch-end records.
    pub batch: usize,
    pub alpha: f64,
    pub theta: Vec<f64>,
    pub numerical_error: Option<f64>,
    pub estimation_error: Option<f64>,
    /// Time from the start of the epoch to this iterate.
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrajectory {
    pub iterates: Vec<Iterate>,
    pub final_theta: Vec<f64>,
    /// The M iterates of the last completed epoch.
    pub last_epoch: Vec<Vec<f64>>,
    /// Per-epoch `||theta^(t,M) - global||`, when a global reference is given.
    pub numerical_error: Vec<f64>,
    /// Per-epoch `||theta^(t,M) - truth||`, when the truth is given.
    pub estimation_error: Vec<f64>,
    pub alphas: Vec<f64>,
    pub wall_times: Vec<Duration>,
    pub diverged: bool,
    pub epochs_completed: u64,
}

/// Per-batch moments of every batch of `plan`.
pub fn precompute_batch_stats<S: DataSource + ?Sized>(
    source: &mut S,
    plan: &PartitionPlan,
) -> Result<Vec<BatchStats>> {
    (0..plan.num_batches())
        .map(|m| BatchStats::from_batch(&source.fetch(plan, m)?))
        .collect()
}

/// `I - alpha Sxx` for each batch.
pub fn contractions(stats: &[BatchStats], alpha: f64) -> Vec<Mat> {
    stats
        .iter()
        .map(|s| {
            let p = s.dim();
            let mut d = s.sxx.scale(-alpha);
            for i in 0..p {
                d[(i, i)] += 1.0;
            }
            d.symmetrize_upper();
            d
        })
        .collect()
}

/// One least-squares step in contraction form: `Delta theta + alpha Sxy`.
pub fn contraction_step(delta: &Mat, sxy: &[f64], alpha: f64, theta: &[f64], out: &mut [f64]) {
    delta.mul_vec_into(theta, out);
    out.iter_mut().zip(sxy).for_each(|(o, s)| *o += alpha * s);
}

enum Updater {
    /// Fixed plan, least squares: moments computed once, contractions cached per alpha.
    Stats {
        stats: Vec<BatchStats>,
        alpha: f64,
        deltas: Vec<Mat>,
    },
    /// Fixed plan, batches fetched each epoch.
    Fixed(PartitionPlan),
    /// Plan redrawn each epoch.
    Fresh,
}

fn is_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

pub fn run<S: DataSource + ?Sized>(source: &mut S, cfg: &RunConfig) -> Result<RunTrajectory> {
    let n_total = source.len();
    let p = source.dim();
    cfg.validate(p)?;
    let m_batches = cfg.effective_batches();

    let mut updater = match cfg.method {
        Method::Gd | Method::Fmgd => {
            let plan = plan_for(cfg, n_total, 0)?;
            if cfg.loss == LossKind::LeastSquares {
                Updater::Stats {
                    stats: precompute_batch_stats(source, &plan)?,
                    alpha: f64::NAN,
                    deltas: Vec::new(),
                }
            } else {
                Updater::Fixed(plan)
            }
        }
        Method::Sfmgd | Method::Smgd => {
            // surface configuration errors before the first epoch
            plan_for(cfg, n_total, 1)?;
            Updater::Fresh
        }
    };

    let mut theta = cfg.init_vector(p);
    let mut scratch = vec![0.0; p];
    let epochs = cfg.epochs as usize;
    let mut traj = RunTrajectory {
        iterates: Vec::new(),
        final_theta: theta.clone(),
        last_epoch: Vec::new(),
        numerical_error: Vec::with_capacity(if cfg.global.is_some() { epochs } else { 0 }),
        estimation_error: Vec::with_capacity(if cfg.truth.is_some() { epochs } else { 0 }),
        alphas: Vec::with_capacity(epochs),
        wall_times: Vec::with_capacity(epochs),
        diverged: false,
        epochs_completed: 0,
    };
    let errors = |theta: &[f64]| {
        (
            cfg.global.as_deref().map(|g| distance(theta, g)),
            cfg.truth.as_deref().map(|t| distance(theta, t)),
        )
    };

    'epochs: for t in 1..=cfg.epochs {
        let alpha = cfg.schedule.rate_at(t)?;
        let start = Instant::now();
        let fresh_plan = match updater {
            Updater::Fresh => Some(plan_for(cfg, n_total, t)?),
            _ => None,
        };
        let mut epoch_iterates = Vec::with_capacity(m_batches);
        for m in 0..m_batches {
            match &mut updater {
                Updater::Stats {
                    stats,
                    alpha: cached,
                    deltas,
                } => {
                    if *cached != alpha {
                        *deltas = contractions(stats, alpha);
                        *cached = alpha;
                    }
                    contraction_step(&deltas[m], &stats[m].sxy, alpha, &theta, &mut scratch);
                    std::mem::swap(&mut theta, &mut scratch);
                }
                Updater::Fixed(plan) => {
                    let batch = source.fetch(plan, m)?;
                    if let Err(e) = sgd_step(cfg.loss, &batch, alpha, &mut theta) {
                        diverge(&mut traj, e)?;
                        break 'epochs;
                    }
                }
                Updater::Fresh => {
                    let plan = fresh_plan.as_ref().expect("plan drawn for this epoch");
                    let batch = source.fetch(plan, m)?;
                    if let Err(e) = sgd_step(cfg.loss, &batch, alpha, &mut theta) {
                        diverge(&mut traj, e)?;
                        break 'epochs;
                    }
                }
            }
            if !is_finite(&theta) {
                traj.diverged = true;
                break 'epochs;
            }
            if cfg.record == Record::PerBatch {
                let (numerical_error, estimation_error) = errors(&theta);
                traj.iterates.push(Iterate {
                    epoch: t,
                    batch: m + 1,
                    alpha,
                    theta: theta.clone(),
                    numerical_error,
                    estimation_error,
                    elapsed: start.elapsed(),
                });
            }
            epoch_iterates.push(theta.clone());
        }
        let elapsed = start.elapsed();
        let (num, est) = errors(&theta);
        traj.numerical_error.extend(num);
        traj.estimation_error.extend(est);
        traj.alphas.push(alpha);
        traj.wall_times.push(elapsed);
        traj.epochs_completed = t;
        traj.last_epoch = epoch_iterates;
        if cfg.record == Record::PerEpoch {
            traj.iterates.push(Iterate {
                epoch: t,
                batch: m_batches,
                alpha,
                theta: theta.clone(),
                numerical_error: num,
                estimation_error: est,
                elapsed,
            });
        }
    }
    traj.final_theta = if traj.diverged {
        traj.last_epoch.last().cloned().unwrap_or_else(|| cfg.init_vector(p))
    } else {
        theta
    };
    if cfg.record == Record::FinalOnly && !traj.diverged {
        let (numerical_error, estimation_error) = errors(&traj.final_theta);
        traj.iterates.push(Iterate {
            epoch: traj.epochs_completed,
            batch: m_batches,
            alpha: traj.alphas.last().copied().unwrap_or(f64::NAN),
            theta: traj.final_theta.clone(),
            numerical_error,
            estimation_error,
            elapsed: traj.wall_times.last().copied().unwrap_or_default(),
        });
    }
    Ok(traj)
}

fn diverge(traj: &mut RunTrajectory, e: Error) -> Result<()> {
    match e {
        Error::Divergence(_) => {
            traj.diverged = true;
            Ok(())
        }
        other => Err(other),
    }
}

fn sgd_step(loss: LossKind, batch: &crate::source::Batch, alpha: f64, theta: &mut [f64]) -> Result<()> {
    let g = grad(loss, batch, theta)?;
    theta.iter_mut().zip(&g).for_each(|(t, gi)| *t -= alpha * gi);
    Ok(())
}

pub fn run_in_memory(data: &Dataset, cfg: &RunConfig) -> Result<RunTrajectory> {
    run(&mut InMemory::new(data), cfg)
}

/// One least-squares epoch with constant `alpha` started at the OLS estimate;
/// returns `||theta^(1,M) - theta_ols||`, isolating the accumulated
/// mini-batch error of a single epoch.
pub fn q2_epoch_error(data: &Dataset, method: Method, alpha: f64, m: usize, seed: u64) -> Result<f64> {
    let theta_ols = ols(data)?;
    let cfg = RunConfig::new(method, LossKind::LeastSquares, Schedule::constant(alpha)?, m, 1)
        .with_seed(seed)
        .with_init(Init::Given(theta_ols.clone()))
        .with_record(Record::FinalOnly);
    let traj = run_in_memory(data, &cfg)?;
    if traj.diverged {
        return Err(Error::Divergence("one-epoch run diverged".into()));
    }
    Ok(distance(&traj.final_theta, &theta_ols))
}

fn opt(v: Option<f64>) -> String {
    v.map(crate::datagen::format_value).unwrap_or_default()
}

/// Trajectory CSV with columns
/// `epoch,batch,alpha,numerical_error,estimation_error,wall_time_ns`.
/// Missing errors are left empty; `wall_time_ns` is the only
/// non-deterministic column.
pub fn write_trajectory_csv<W: Write>(traj: &RunTrajectory, w: &mut W) -> io::Result<()> {
    writeln!(w, "epoch,batch,alpha,numerical_error,estimation_error,wall_time_ns")?;
    for it in &traj.iterates {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            it.epoch,
            it.batch,
            crate::datagen::format_value(it.alpha),
            opt(it.numerical_error),
            opt(it.estimation_error),
            it.elapsed.as_nanos()
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, DataGenSpec, Model};
    use crate::losses::{batch_stats, newton_mle};
    use crate::tensor::{eig_sym, matvec, max_abs_diff, norm};

    fn linear(n: usize, p: usize, seed: u64) -> Dataset {
        generate(&DataGenSpec::new(n, p, Model::Linear, 1.0, seed)).unwrap()
    }

    fn constant(alpha: f64) -> Schedule {
        Schedule::constant(alpha).unwrap()
    }

    #[test]
    fn fmgd_with_one_batch_is_gd() {
        let d = linear(120, 4, 1);
        let gd = RunConfig::new(Method::Gd, LossKind::LeastSquares, constant(0.1), 7, 30)
            .with_record(Record::PerBatch);
        let fm = RunConfig { method: Method::Fmgd, batches: 1, ..gd.clone() };
        let a = run_in_memory(&d, &gd).unwrap();
        let b = run_in_memory(&d, &fm).unwrap();
        assert_eq!(a.iterates.len(), 30);
        for (x, y) in a.iterates.iter().zip(&b.iterates) {
            assert_eq!(x.theta, y.theta);
        }
    }

    #[test]
    fn gd_matches_closed_form() {
        let d = linear(200, 3, 2);
        let alpha = 0.1;
        let theta0 = vec![0.5, -1.0, 2.0];
        let cfg = RunConfig::new(Method::Gd, LossKind::LeastSquares, constant(alpha), 1, 20)
            .with_init(Init::Given(theta0.clone()));
        let traj = run_in_memory(&d, &cfg).unwrap();
        let theta_ols = ols(&d).unwrap();
        let all: Vec<usize> = (0..d.len()).collect();
        let s = batch_stats(&d, &all).unwrap();
        let delta = Mat::identity(3).sub(&s.sxx.scale(alpha)).unwrap();
        for it in &traj.iterates {
            let dt = delta.pow(it.epoch as u32).unwrap();
            let a = matvec(&Mat::identity(3).sub(&dt).unwrap(), &theta_ols).unwrap();
            let b = matvec(&dt, &theta0).unwrap();
            let closed: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            assert!(max_abs_diff(&it.theta, &closed) < 1e-10);
        }
    }

    #[test]
    fn one_epoch_is_composition_of_contractions() {
        let d = linear(60, 3, 3);
        let alpha = 0.05;
        let cfg = RunConfig::new(Method::Fmgd, LossKind::LeastSquares, constant(alpha), 3, 1)
            .with_seed(4)
            .with_init(Init::Given(vec![1.0, 2.0, 3.0]));
        let traj = run_in_memory(&d, &cfg).unwrap();
        let plan = plan_for(&cfg, 60, 1).unwrap();
        let mut theta = vec![1.0, 2.0, 3.0];
        for b in &plan.batches {
            let s = batch_stats(&d, b).unwrap();
            let delta = contractions(std::slice::from_ref(&s), alpha).remove(0);
            let mut next = vec![0.0; 3];
            contraction_step(&delta, &s.sxy, alpha, &theta, &mut next);
            theta = next;
        }
        assert_eq!(traj.final_theta, theta);
    }

    #[test]
    fn stats_form_agrees_with_row_gradients() {
        let d = linear(80, 3, 5);
        let cfg = RunConfig::new(Method::Fmgd, LossKind::LeastSquares, constant(0.05), 4, 10).with_seed(1);
        let traj = run_in_memory(&d, &cfg).unwrap();
        let plan = plan_for(&cfg, 80, 1).unwrap();
        let mut theta = vec![0.0; 3];
        for _ in 0..10 {
            for b in &plan.batches {
                let batch = crate::source::gather(&d, b).unwrap();
                sgd_step(LossKind::LeastSquares, &batch, 0.05, &mut theta).unwrap();
            }
        }
        assert!(max_abs_diff(&traj.final_theta, &theta) < 1e-12);
    }

    #[test]
    fn fixed_stats_are_reused() {
        let d = linear(6, 2, 6);
        let plan = make_fixed(6, 2, 0).unwrap();
        let mut src = InMemory::new(&d);
        let a = precompute_batch_stats(&mut src, &plan).unwrap();
        let b = precompute_batch_stats(&mut src, &plan).unwrap();
        assert_eq!(a, b);
        let whole = precompute_batch_stats(&mut src, &make_fixed(6, 1, 0).unwrap()).unwrap();
        assert!(whole[0].sxx.sub(&BatchStats::from_rows(&d.x, &d.y).unwrap().sxx).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn numerical_error_is_monotone_after_burn_in() {
        for seed in 0..5 {
            let d = linear(200, 4, seed);
            let sxx = BatchStats::from_rows(&d.x, &d.y).unwrap().sxx;
            let lam = eig_sym(&sxx).unwrap()[0];
            let alpha = 0.5 / lam;
            let cfg = RunConfig::new(Method::Fmgd, LossKind::LeastSquares, constant(alpha), 4, 200)
                .with_seed(seed)
                .with_record(Record::PerEpoch);
            let traj = run_in_memory(&d, &cfg).unwrap();
            let limit = traj.final_theta.clone();
            let errs: Vec<f64> = traj.iterates.iter().map(|it| distance(&it.theta, &limit)).collect();
            for w in errs[1..150].windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-9), "{} > {}", w[1], w[0]);
            }
        }
    }

    #[test]
    fn diminishing_schedule_converges_for_every_loss() {
        for (model, kind) in [
            (Model::Linear, LossKind::LeastSquares),
            (Model::Logistic, LossKind::Logistic),
            (Model::Poisson, LossKind::Poisson),
        ] {
            let coef = DataGenSpec::preset_coef(model);
            let mut spec = DataGenSpec::new(1000, 3, model, coef, 9);
            spec.rho = 0.0;
            let d = generate(&spec).unwrap();
            let global = match kind {
                LossKind::LeastSquares => ols(&d).unwrap(),
                _ => newton_mle(&d, kind).unwrap().theta,
            };
            let eig = eig_sym(&crate::losses::hessian_rows(kind, &d.x, &d.y, &global).unwrap()).unwrap();
            let (lam, lam_min) = (eig[0], eig[2]);
            // initial-error factor decays like t^(-c lam_min M); keep c small otherwise
            let sched = Schedule::polynomial((0.9 / lam).min(2.0 / (10.0 * lam_min)), 1.0).unwrap();
            assert_eq!(sched.diminishing_conditions(lam).status, crate::schedule::Status::Yes);
            for method in [Method::Fmgd, Method::Sfmgd] {
                let cfg = RunConfig::new(method, kind, sched, 10, 2000)
                    .with_seed(3)
                    .with_global(global.clone())
                    .with_record(Record::FinalOnly);
                let traj = run_in_memory(&d, &cfg).unwrap();
                assert!(!traj.diverged);
                let err = *traj.numerical_error.last().unwrap();
                assert!(err < 1e-4, "{kind} {method}: {err}");
            }
        }
    }

    #[test]
    fn divergence_is_reported_not_raised() {
        let d = linear(100, 3, 7);
        let cfg = RunConfig::new(Method::Fmgd, LossKind::LeastSquares, constant(50.0), 2, 500);
        let traj = run_in_memory(&d, &cfg).unwrap();
        assert!(traj.diverged);
        assert!(traj.epochs_completed < 500);
        assert!(is_finite(&traj.final_theta));
        assert_eq!(traj.wall_times.len() as u64, traj.epochs_completed);

        let pd = generate(&DataGenSpec::new(100, 3, Model::Poisson, 0.02, 7)).unwrap();
        let cfg = RunConfig::new(Method::Sfmgd, LossKind::Poisson, constant(100.0), 2, 50);
        assert!(run_in_memory(&pd, &cfg).unwrap().diverged);
    }

    #[test]
    fn series_lengths_and_references() {
        let d = linear(100, 3, 8);
        let truth = d.theta_true().unwrap().to_vec();
        let cfg = RunConfig::new(Method::Smgd, LossKind::LeastSquares, constant(0.05), 5, 12)
            .with_truth(truth)
            .with_global(ols(&d).unwrap());
        let traj = run_in_memory(&d, &cfg).unwrap();
        assert_eq!(traj.numerical_error.len(), 12);
        assert_eq!(traj.estimation_error.len(), 12);
        assert_eq!(traj.alphas, vec![0.05; 12]);
        assert_eq!(traj.last_epoch.len(), 5);
        let mut csv = Vec::new();
        write_trajectory_csv(&traj, &mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 13);
    }

    #[test]
    fn bad_configurations() {
        let d = linear(10, 2, 0);
        let base = RunConfig::new(Method::Fmgd, LossKind::LeastSquares, constant(0.1), 3, 1);
        assert!(run_in_memory(&d, &base).is_err());
        assert!(run_in_memory(&d, &RunConfig { epochs: 0, batches: 2, ..base.clone() }).is_err());
        assert!(run_in_memory(&d, &base.clone().with_init(Init::Given(vec![0.0; 3]))).is_err());
        assert!(run_in_memory(&d, &RunConfig { batches: 2, ..base }.with_truth(vec![1.0])).is_err());
    }

    #[test]
    fn q2_single_batch_is_zero() {
        let d = linear(100, 3, 10);
        assert!(q2_epoch_error(&d, Method::Fmgd, 0.1, 1, 0).unwrap() < 1e-12);
        assert!(q2_epoch_error(&d, Method::Sfmgd, 0.1, 1, 0).unwrap() < 1e-12);
        // with-replacement sampling draws a different design even when M = 1
        assert!(q2_epoch_error(&d, Method::Smgd, 0.1, 1, 0).unwrap() > 0.0);
    }

    #[test]
    fn q2_fmgd_smaller_than_smgd() {
        let d = linear(400, 4, 11);
        let f = q2_epoch_error(&d, Method::Fmgd, 0.05, 4, 1).unwrap();
        let s = q2_epoch_error(&d, Method::Smgd, 0.05, 4, 1).unwrap();
        assert!(f < s, "{f} vs {s}");
        assert!(norm(&[f]) > 0.0);
    }
}
