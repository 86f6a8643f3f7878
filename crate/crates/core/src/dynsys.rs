//! Fixed-partition least squares as a linear dynamic system.
//!
//! With contractions `Delta^(m) = I - alpha Sxx^(m)`, one FMGD epoch is
//! `theta^(m) = Delta^(m) theta^(m-1) + alpha Sxy^(m)` with `theta^(0) = theta^(M)`
//! of the previous epoch. Stacking the M blocks gives `Omega theta* = alpha Sxy*`,
//! where `Omega` has identity diagonal blocks, `-Delta^(m)` at block `(m, m-1)`
//! and `-Delta^(1)` at block `(1, M)`. The per-epoch error multiplier is the
//! spectral radius of `C = Delta^(M) ... Delta^(1)`.
//!
//! The module also evaluates the right-hand sides of the error bounds for
//! diminishing schedules (fixed partitions and general losses) and for
//! shuffled partitions with a constant rate.

use std::io::{self, Write};

use crate::datagen::format_value;
use crate::engine::{contractions, plan_for, RunConfig};
use crate::error::{Error, Result};
use crate::losses::{grad, hessian, BatchStats, LossKind};
use crate::schedule::Schedule;
use crate::source::DataSource;
use crate::tensor::{cholesky, eig_sym, norm, spectral_radius, Lu, Mat};

pub const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionSet {
    pub deltas: Vec<Mat>,
    pub alpha: f64,
}

impl ContractionSet {
    pub fn from_stats(stats: &[BatchStats], alpha: f64) -> Result<Self> {
        if stats.is_empty() {
            return Err(Error::invalid("need at least one batch"));
        }
        Self::new(contractions(stats, alpha), alpha)
    }

    pub fn new(deltas: Vec<Mat>, alpha: f64) -> Result<Self> {
        let p = deltas.first().map(Mat::rows).ok_or_else(|| Error::invalid("need at least one batch"))?;
        if deltas.iter().any(|d| d.rows() != p || d.cols() != p) {
            return Err(Error::dims("contractions must all be p x p"));
        }
        Ok(ContractionSet { deltas, alpha })
    }

    pub fn num_batches(&self) -> usize {
        self.deltas.len()
    }

    pub fn dim(&self) -> usize {
        self.deltas[0].rows()
    }

    /// `Delta^(M) ... Delta^(1)`.
    pub fn epoch_product(&self) -> Result<Mat> {
        let mut c = self.deltas[0].clone();
        for d in &self.deltas[1..] {
            c = d.matmul(&c)?;
        }
        Ok(c)
    }
}

pub fn build_omega(cs: &ContractionSet) -> Mat {
    let m = cs.num_batches();
    let p = cs.dim();
    let mut omega = Mat::identity(m * p);
    if m == 1 {
        return omega.sub(&cs.deltas[0]).expect("same shape");
    }
    for (k, delta) in cs.deltas.iter().enumerate() {
        let row0 = k * p;
        let col0 = if k == 0 { (m - 1) * p } else { (k - 1) * p };
        for i in 0..p {
            for j in 0..p {
                omega[(row0 + i, col0 + j)] = -delta[(i, j)];
            }
        }
    }
    omega
}

#[derive(Debug, Clone, PartialEq)]
pub struct StableSolution {
    /// Stacked blocks `theta^(1) .. theta^(M)`.
    pub theta_star: Vec<f64>,
    pub rho_alpha_m: f64,
    pub omega_min_singular: f64,
    pub dim: usize,
}

impl StableSolution {
    pub fn num_batches(&self) -> usize {
        self.theta_star.len() / self.dim
    }

    /// Block `m` (zero-based).
    pub fn block(&self, m: usize) -> &[f64] {
        &self.theta_star[m * self.dim..(m + 1) * self.dim]
    }

    /// `theta^(M)`, the epoch-end limit.
    pub fn last_block(&self) -> &[f64] {
        self.block(self.num_batches() - 1)
    }
}

const SIGMA_MAX_ITER: usize = 500;

/// Smallest singular value of the matrix factored by `lu`, by inverse
/// iteration on `A^T A`.
fn min_singular(lu: &Lu) -> Result<f64> {
    let n = lu.dim();
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut est = 0.0;
    for _ in 0..SIGMA_MAX_ITER {
        let y = lu.solve(&x)?;
        let z = lu.solve_transpose(&y)?;
        let zn = norm(&z);
        if !(zn.is_finite() && zn > 0.0) {
            return Ok(0.0);
        }
        // z = (A^T A)^-1 x, so ||z|| tends to 1 / sigma_min^2
        let next = zn;
        x = z.into_iter().map(|v| v / zn).collect();
        if (next - est).abs() <= 1e-12 * next {
            est = next;
            break;
        }
        est = next;
    }
    Ok(1.0 / est.sqrt())
}

/// Solves `Omega theta* = alpha Sxy*` and reports the convergence factor.
pub fn stable_solution(cs: &ContractionSet, sxy: &[Vec<f64>]) -> Result<StableSolution> {
    let m = cs.num_batches();
    let p = cs.dim();
    if sxy.len() != m || sxy.iter().any(|s| s.len() != p) {
        return Err(Error::dims(format!("expected {m} cross-moment vectors of length {p}")));
    }
    let omega = build_omega(cs);
    let rhs: Vec<f64> = sxy.iter().flatten().map(|v| cs.alpha * v).collect();
    let lu = Lu::new(&omega)?;
    let theta_star = lu.solve(&rhs)?;

    let back = crate::tensor::matvec(&omega, &theta_star)?;
    let residual = back.iter().zip(&rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    if residual > RESIDUAL_TOL * (1.0 + norm(&rhs)) {
        return Err(Error::Residual { residual });
    }
    Ok(StableSolution {
        theta_star,
        rho_alpha_m: spectral_radius(&cs.epoch_product()?)?,
        omega_min_singular: min_singular(&lu)?,
        dim: p,
    })
}

/// Stable solution for the fixed partition given by `stats`.
pub fn stable_solution_from_stats(stats: &[BatchStats], alpha: f64) -> Result<StableSolution> {
    let cs = ContractionSet::from_stats(stats, alpha)?;
    let sxy: Vec<Vec<f64>> = stats.iter().map(|s| s.sxy.clone()).collect();
    stable_solution(&cs, &sxy)
}

/// Leading-order centre and variance shape of the FMGD estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoreticalMoments {
    pub mu_m: Vec<f64>,
    pub v_m: Mat,
}

/// `mu = theta`, `v = Sigma^-1 + alpha^2 (M^2 - 1) / 12 Sigma`; the `o(alpha^2)`
/// remainder is dropped.
pub fn theoretical_moments(sigma: &Mat, alpha: f64, m: usize, theta: &[f64]) -> Result<TheoreticalMoments> {
    if theta.len() != sigma.rows() {
        return Err(Error::dims("theta and Sigma differ in dimension"));
    }
    let p = sigma.rows();
    let l = cholesky(sigma)?;
    // Sigma^-1 column by column through the Cholesky factor
    let mut inv = Mat::zeros(p, p);
    for j in 0..p {
        let mut e = vec![0.0; p];
        e[j] = 1.0;
        for i in 0..p {
            let s: f64 = (0..i).map(|k| l[(i, k)] * e[k]).sum();
            e[i] = (e[i] - s) / l[(i, i)];
        }
        for i in (0..p).rev() {
            let s: f64 = ((i + 1)..p).map(|k| l[(k, i)] * e[k]).sum();
            e[i] = (e[i] - s) / l[(i, i)];
        }
        for i in 0..p {
            inv[(i, j)] = e[i];
        }
    }
    let mf = m as f64;
    let mut v_m = inv.add(&sigma.scale(alpha * alpha * (mf * mf - 1.0) / 12.0))?;
    v_m.symmetrize_upper();
    Ok(TheoreticalMoments {
        mu_m: theta.to_vec(),
        v_m,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    /// Fixed partitions, least squares, diminishing schedule.
    FixedDiminishing,
    /// Shuffled partitions, least squares, constant rate.
    ShuffledConstant,
    /// Any partition regime, general loss, diminishing schedule.
    GeneralDiminishing,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Rates {
    Constant(f64),
    Schedule(Schedule),
}

impl Rates {
    fn at(&self, t: u64) -> Result<f64> {
        match self {
            Rates::Constant(a) => Ok(*a),
            Rates::Schedule(s) => s.rate_at(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundInputs {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub grad_max: f64,
    pub batches: usize,
    pub rates: Rates,
    pub epochs: u64,
    /// `||theta^(0) - theta_hat||`.
    pub init_dist: f64,
}

/// Right-hand side of the chosen bound for `t = 1..=epochs`.
///
/// In the diminishing-rate bounds the `k = t` summand has an empty
/// denominator `sum_{s=t+1}^t alpha_s`; it is evaluated with `alpha_t` in its
/// place.
pub fn eval_bounds(kind: BoundKind, inputs: &BoundInputs) -> Result<Vec<f64>> {
    let BoundInputs {
        lambda_min,
        lambda_max,
        grad_max,
        batches,
        ref rates,
        epochs,
        init_dist,
    } = *inputs;
    if !(lambda_min > 0.0 && lambda_min <= lambda_max && lambda_max.is_finite()) {
        return Err(Error::invalid(format!(
            "need 0 < lambda_min <= lambda_max, got {lambda_min} and {lambda_max}"
        )));
    }
    if batches == 0 || epochs == 0 || grad_max < 0.0 || init_dist < 0.0 {
        return Err(Error::invalid("need M >= 1, T >= 1 and non-negative distances"));
    }
    let m = batches as f64;
    let cond = lambda_max / lambda_min;
    match kind {
        BoundKind::ShuffledConstant => {
            let alpha = match rates {
                Rates::Constant(a) => *a,
                Rates::Schedule(Schedule::Constant { c }) => *c,
                Rates::Schedule(_) => {
                    return Err(Error::invalid("this bound needs a constant learning rate"))
                }
            };
            if !(alpha > 0.0 && alpha < 1.0 / (m * lambda_max)) {
                return Err(Error::invalid(format!(
                    "alpha = {alpha} violates 0 < alpha < 1/(M lambda_max) = {}",
                    1.0 / (m * lambda_max)
                )));
            }
            let factor = (1.0 - lambda_min * alpha).powf(m);
            let additive = 2.0 * alpha * m * cond * grad_max;
            Ok((1..=epochs)
                .map(|t| factor.powf(t as f64) * init_dist + additive)
                .collect())
        }
        BoundKind::FixedDiminishing | BoundKind::GeneralDiminishing => {
            let alphas = (1..=epochs).map(|t| rates.at(t)).collect::<Result<Vec<_>>>()?;
            let mut out = Vec::with_capacity(alphas.len());
            let mut cum = 0.0;
            for t in 0..alphas.len() {
                cum += alphas[t];
                // tail[k] = sum_{s=k+1}^{t} alpha_s, built backwards
                let mut tail = 0.0;
                let mut sum = 0.0;
                for k in (0..=t).rev() {
                    let denom = if k == t { alphas[t] } else { tail };
                    sum += alphas[k] * alphas[k] / denom;
                    tail += alphas[k];
                }
                out.push(init_dist / (m * lambda_min * cum).exp() + m * grad_max * cond * sum);
            }
            Ok(out)
        }
    }
}

/// Smallest and largest eigenvalue over all batch moment matrices.
pub fn spectrum_bounds(stats: &[BatchStats]) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in stats {
        let eig = eig_sym(&s.sxx)?;
        hi = hi.max(eig[0]);
        lo = lo.min(eig[eig.len() - 1]);
    }
    if stats.is_empty() {
        return Err(Error::invalid("no batches"));
    }
    Ok((lo, hi))
}

/// `max_m ||Sxy^(m) - Sxx^(m) theta||`.
pub fn grad_max_least_squares(stats: &[BatchStats], theta: &[f64]) -> f64 {
    stats.iter().map(|s| norm(&s.gradient(theta))).fold(0.0, f64::max)
}

/// Eigen-bounds and largest local gradient at `theta_ols` over every batch
/// `cfg` visits in its first `cfg.epochs` epochs.
pub fn least_squares_constants<S: DataSource + ?Sized>(
    source: &mut S,
    cfg: &RunConfig,
    theta_ols: &[f64],
) -> Result<(f64, f64, f64)> {
    let stats = visited_stats(source, cfg)?;
    let (lo, hi) = spectrum_bounds(&stats)?;
    Ok((lo, hi, grad_max_least_squares(&stats, theta_ols)))
}

fn visited_stats<S: DataSource + ?Sized>(source: &mut S, cfg: &RunConfig) -> Result<Vec<BatchStats>> {
    let n_total = source.len();
    let epochs: Vec<u64> = if cfg.method.regime() == crate::partition::Regime::Fixed {
        vec![1]
    } else {
        (1..=cfg.epochs).collect()
    };
    let mut out = Vec::new();
    for t in epochs {
        let plan = plan_for(cfg, n_total, t)?;
        for m in 0..plan.num_batches() {
            out.push(BatchStats::from_batch(&source.fetch(&plan, m)?)?);
        }
    }
    Ok(out)
}

/// Constants for the general-loss bound: Hessian eigen-bounds taken over
/// every visited batch at each of `thetas` (typically the run's iterates plus
/// the global minimizer), and the largest local gradient at `theta_hat`.
pub fn general_constants<S: DataSource + ?Sized>(
    source: &mut S,
    cfg: &RunConfig,
    theta_hat: &[f64],
    thetas: &[Vec<f64>],
) -> Result<(f64, f64, f64)> {
    let n_total = source.len();
    let epochs: Vec<u64> = if cfg.method.regime() == crate::partition::Regime::Fixed {
        vec![1]
    } else {
        (1..=cfg.epochs).collect()
    };
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut gmax: f64 = 0.0;
    for t in epochs {
        let plan = plan_for(cfg, n_total, t)?;
        for m in 0..plan.num_batches() {
            let batch = source.fetch(&plan, m)?;
            gmax = gmax.max(norm(&grad(cfg.loss, &batch, theta_hat)?));
            for theta in thetas.iter().map(Vec::as_slice).chain([theta_hat]) {
                let eig = eig_sym(&hessian(cfg.loss, &batch, theta)?)?;
                hi = hi.max(eig[0]);
                lo = lo.min(eig[eig.len() - 1]);
            }
        }
    }
    if cfg.loss == LossKind::LeastSquares && lo <= 0.0 {
        return Err(Error::invalid("a batch moment matrix is singular"));
    }
    Ok((lo, hi, gmax))
}

/// Slope of `ln(errors[t])` against `t` by least squares, skipping
/// non-positive entries.
pub fn fit_log_rate(errors: &[f64]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = errors
        .iter()
        .enumerate()
        .filter(|(_, e)| **e > 0.0 && e.is_finite())
        .map(|(t, e)| (t as f64, e.ln()))
        .collect();
    fit_line(&pts).map(|(slope, _)| slope)
}

/// Ordinary least-squares line through `(x, y)` points: `(slope, intercept)`.
pub fn fit_line(pts: &[(f64, f64)]) -> Result<(f64, f64)> {
    if pts.len() < 2 {
        return Err(Error::invalid("need at least two points to fit a line"));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("all x values coincide"));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Bound CSV with columns `epoch,observed_error,bound_value`.
pub fn write_bound_csv<W: Write>(observed: &[f64], bound: &[f64], w: &mut W) -> io::Result<()> {
    writeln!(w, "epoch,observed_error,bound_value")?;
    for (t, (o, b)) in observed.iter().zip(bound).enumerate() {
        writeln!(w, "{},{},{}", t + 1, format_value(*o), format_value(*b))?;
    }
    Ok(())
}
