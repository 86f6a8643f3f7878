//! Per-batch losses, gradients and Hessians, and the whole-sample reference
//! estimators (OLS and Newton–Raphson maximum likelihood).
//!
//! Scaling convention: losses are averaged over the rows they are evaluated on.
//! Least squares uses `(y - x'theta)^2 / 2`, so its gradient is
//! `Sxx theta - Sxy`. The logistic and Poisson losses are two times the negative
//! log-likelihood (constants dropped), so their gradients are
//! `2 n^-1 sum_i x_i (mu_i - y_i)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datagen::{Dataset, Model};
use crate::error::{Error, Result};
use crate::source::Batch;
use crate::tensor::{norm, solve_linear, Mat};

/// Linear predictors beyond this magnitude make the Poisson mean overflow-prone
/// and are reported as divergence.
pub const MAX_LINEAR_PREDICTOR: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    LeastSquares,
    Logistic,
    Poisson,
}

impl LossKind {
    pub fn for_model(model: Model) -> Self {
        match model {
            Model::Linear => LossKind::LeastSquares,
            Model::Logistic => LossKind::Logistic,
            Model::Poisson => LossKind::Poisson,
        }
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "least_squares" | "ls" | "linear" => Ok(LossKind::LeastSquares),
            "logistic" => Ok(LossKind::Logistic),
            "poisson" => Ok(LossKind::Poisson),
            other => Err(Error::invalid(format!("unknown loss {other:?}"))),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::LeastSquares => "least_squares",
            LossKind::Logistic => "logistic",
            LossKind::Poisson => "poisson",
        })
    }
}

/// Per-batch second moments `Sxx = n^-1 sum x x'` and `Sxy = n^-1 sum x y`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub sxx: Mat,
    pub sxy: Vec<f64>,
    pub n: usize,
}

impl BatchStats {
    pub fn from_rows(x: &Mat, y: &[f64]) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::EmptyBatch);
        }
        if x.rows() != n {
            return Err(Error::dims("design rows differ from response length"));
        }
        let p = x.cols();
        let mut sxx = Mat::zeros(p, p);
        let mut sxy = vec![0.0; p];
        for i in 0..n {
            let row = x.row(i);
            for a in 0..p {
                let xa = row[a];
                sxy[a] += xa * y[i];
                let acc = &mut sxx.row_mut(a)[a..];
                for (s, xb) in acc.iter_mut().zip(&row[a..]) {
                    *s += xa * xb;
                }
            }
        }
        let inv = 1.0 / n as f64;
        let mut sxx = sxx.scale(inv);
        sxx.symmetrize_upper();
        sxy.iter_mut().for_each(|v| *v *= inv);
        Ok(BatchStats { sxx, sxy, n })
    }

    pub fn from_batch(batch: &Batch) -> Result<Self> {
        Self::from_rows(&batch.x, &batch.y)
    }

    pub fn dim(&self) -> usize {
        self.sxy.len()
    }

    /// Least-squares gradient `Sxx theta - Sxy`.
    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.sxx.mul_vec_into(theta, &mut g);
        g.iter_mut().zip(&self.sxy).for_each(|(gi, s)| *gi -= s);
        g
    }
}

/// Exact per-batch moments of rows `idx` of `data`.
pub fn batch_stats(data: &Dataset, idx: &[usize]) -> Result<BatchStats> {
    BatchStats::from_batch(&crate::source::gather(data, idx)?)
}

pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn softplus(eta: f64) -> f64 {
    eta.max(0.0) + (-eta.abs()).exp().ln_1p()
}

fn check_dims(x: &Mat, y: &[f64], theta: &[f64]) -> Result<()> {
    if x.rows() != y.len() || x.cols() != theta.len() {
        return Err(Error::dims(format!(
            "{}x{} design, {} responses, parameter of length {}",
            x.rows(),
            x.cols(),
            y.len(),
            theta.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::EmptyBatch);
    }
    Ok(())
}

fn linear_predictor(kind: LossKind, row: &[f64], theta: &[f64]) -> Result<f64> {
    let eta: f64 = row.iter().zip(theta).map(|(a, b)| a * b).sum();
    if !eta.is_finite() || (kind == LossKind::Poisson && eta.abs() > MAX_LINEAR_PREDICTOR) {
        return Err(Error::Divergence(format!("linear predictor {eta} out of range")));
    }
    Ok(eta)
}

/// Per-row derivative of the loss with respect to the linear predictor.
fn score(kind: LossKind, eta: f64, y: f64) -> f64 {
    match kind {
        LossKind::LeastSquares => eta - y,
        LossKind::Logistic => 2.0 * (sigmoid(eta) - y),
        LossKind::Poisson => 2.0 * (eta.exp() - y),
    }
}

fn curvature(kind: LossKind, eta: f64) -> f64 {
    match kind {
        LossKind::LeastSquares => 1.0,
        LossKind::Logistic => {
            let mu = sigmoid(eta);
            2.0 * mu * (1.0 - mu)
        }
        LossKind::Poisson => 2.0 * eta.exp(),
    }
}

/// Averaged loss over the rows of `(x, y)`.
pub fn loss_rows(kind: LossKind, x: &Mat, y: &[f64], theta: &[f64]) -> Result<f64> {
    check_dims(x, y, theta)?;
    let mut total = 0.0;
    for i in 0..y.len() {
        let eta = linear_predictor(kind, x.row(i), theta)?;
        total += match kind {
            LossKind::LeastSquares => 0.5 * (y[i] - eta).powi(2),
            LossKind::Logistic => -2.0 * (y[i] * eta - softplus(eta)),
            LossKind::Poisson => -2.0 * (y[i] * eta - eta.exp()),
        };
    }
    Ok(total / y.len() as f64)
}

/// Averaged gradient over the rows of `(x, y)`.
pub fn grad_rows(kind: LossKind, x: &Mat, y: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
    check_dims(x, y, theta)?;
    let mut g = vec![0.0; theta.len()];
    for i in 0..y.len() {
        let row = x.row(i);
        let s = score(kind, linear_predictor(kind, row, theta)?, y[i]);
        g.iter_mut().zip(row).for_each(|(gi, xi)| *gi += s * xi);
    }
    let inv = 1.0 / y.len() as f64;
    g.iter_mut().for_each(|v| *v *= inv);
    Ok(g)
}

/// Averaged Hessian over the rows of `(x, y)`.
pub fn hessian_rows(kind: LossKind, x: &Mat, y: &[f64], theta: &[f64]) -> Result<Mat> {
    check_dims(x, y, theta)?;
    let p = theta.len();
    let mut h = Mat::zeros(p, p);
    for i in 0..y.len() {
        let row = x.row(i);
        let w = curvature(kind, linear_predictor(kind, row, theta)?);
        for a in 0..p {
            let wa = w * row[a];
            for (hab, xb) in h.row_mut(a)[a..].iter_mut().zip(&row[a..]) {
                *hab += wa * xb;
            }
        }
    }
    let mut h = h.scale(1.0 / y.len() as f64);
    h.symmetrize_upper();
    Ok(h)
}

pub fn grad(kind: LossKind, batch: &Batch, theta: &[f64]) -> Result<Vec<f64>> {
    grad_rows(kind, &batch.x, &batch.y, theta)
}

pub fn loss(kind: LossKind, batch: &Batch, theta: &[f64]) -> Result<f64> {
    loss_rows(kind, &batch.x, &batch.y, theta)
}

pub fn hessian(kind: LossKind, batch: &Batch, theta: &[f64]) -> Result<Mat> {
    hessian_rows(kind, &batch.x, &batch.y, theta)
}

/// `Sxx^-1 Sxy` over the whole sample.
pub fn ols(data: &Dataset) -> Result<Vec<f64>> {
    let stats = BatchStats::from_rows(&data.x, &data.y)?;
    solve_linear(&stats.sxx, &stats.sxy)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleFit {
    pub theta: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
}

pub const NEWTON_TOL: f64 = 1e-10;
pub const NEWTON_MAX_ITER: usize = 100;

/// Full-sample Newton–Raphson from zero. Stops once the gradient norm is at
/// most [`NEWTON_TOL`] or after [`NEWTON_MAX_ITER`] steps; five consecutive
/// increases of the gradient norm are reported as divergence.
pub fn newton_mle(data: &Dataset, kind: LossKind) -> Result<MleFit> {
    let p = data.dim();
    let mut theta = vec![0.0; p];
    let mut g = grad_rows(kind, &data.x, &data.y, &theta)?;
    let mut g_norm = norm(&g);
    let mut increases = 0;
    for it in 0..NEWTON_MAX_ITER {
        if g_norm <= NEWTON_TOL {
            return Ok(MleFit {
                theta,
                converged: true,
                iterations: it,
                grad_norm: g_norm,
            });
        }
        let h = hessian_rows(kind, &data.x, &data.y, &theta)?;
        let step = solve_linear(&h, &g)?;
        theta.iter_mut().zip(&step).for_each(|(t, s)| *t -= s);
        g = grad_rows(kind, &data.x, &data.y, &theta)?;
        let next = norm(&g);
        if !next.is_finite() {
            return Err(Error::Divergence("non-finite gradient during Newton iterations".into()));
        }
        increases = if next > g_norm { increases + 1 } else { 0 };
        if increases >= 5 {
            return Err(Error::Divergence(format!(
                "Newton gradient norm grew for five consecutive steps (now {next:e})"
            )));
        }
        g_norm = next;
    }
    Ok(MleFit {
        converged: g_norm <= NEWTON_TOL,
        theta,
        iterations: NEWTON_MAX_ITER,
        grad_norm: g_norm,
    })
}

/// Whole-sample minimizer of `kind`: OLS for least squares, otherwise the
/// Newton MLE. Non-converged Newton fits are an error.
pub fn global_estimate(data: &Dataset, kind: LossKind) -> Result<Vec<f64>> {
    match kind {
        LossKind::LeastSquares => ols(data),
        _ => {
            let fit = newton_mle(data, kind)?;
            if fit.converged {
                Ok(fit.theta)
            } else {
                Err(Error::NoConvergence {
                    previous: f64::NAN,
                    last: fit.grad_norm,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, DataGenSpec};
    use crate::partition::make_fixed;
    use crate::tensor::{eig_sym, max_abs_diff};
    use proptest::prelude::*;

    fn toy(kind: LossKind, seed: u64) -> Dataset {
        let model = match kind {
            LossKind::LeastSquares => Model::Linear,
            LossKind::Logistic => Model::Logistic,
            LossKind::Poisson => Model::Poisson,
        };
        generate(&DataGenSpec::new(30, 3, model, 0.3, seed)).unwrap()
    }

    #[test]
    fn single_row_stats() {
        let x = Mat::from_rows(&[[1.0, 2.0]]).unwrap();
        let s = BatchStats::from_rows(&x, &[3.0]).unwrap();
        assert_eq!(s.sxx, Mat::from_rows(&[[1.0, 2.0], [2.0, 4.0]]).unwrap());
        assert_eq!(s.sxy, vec![3.0, 6.0]);
        assert!(s.sxx.is_symmetric());
    }

    #[test]
    fn empty_index_set() {
        let d = toy(LossKind::LeastSquares, 1);
        assert!(matches!(batch_stats(&d, &[]), Err(Error::EmptyBatch)));
    }

    #[test]
    fn full_index_set_is_whole_sample() {
        let d = toy(LossKind::LeastSquares, 1);
        let idx: Vec<usize> = (0..d.len()).collect();
        let s = batch_stats(&d, &idx).unwrap();
        assert_eq!(s, BatchStats::from_rows(&d.x, &d.y).unwrap());
    }

    #[test]
    fn partition_average_matches_direct_sums() {
        let x = Mat::from_rows(&[
            [1.0, 0.5],
            [-2.0, 1.0],
            [0.25, 3.0],
            [4.0, -1.0],
            [0.0, 2.0],
            [1.5, 1.5],
        ])
        .unwrap();
        let y = vec![1.0, -1.0, 2.0, 0.5, 3.0, -2.0];
        let d = Dataset::new(x, y).unwrap();
        let plan = make_fixed(6, 3, 2).unwrap();
        let mut sxx = Mat::zeros(2, 2);
        let mut sxy = [0.0; 2];
        for b in &plan.batches {
            let s = batch_stats(&d, b).unwrap();
            sxx = sxx.add(&s.sxx.scale(1.0 / 3.0)).unwrap();
            sxy[0] += s.sxy[0] / 3.0;
            sxy[1] += s.sxy[1] / 3.0;
        }
        // direct summation oracle
        let mut dxx = [[0.0; 2]; 2];
        let mut dxy = [0.0; 2];
        for i in 0..6 {
            for a in 0..2 {
                dxy[a] += d.x[(i, a)] * d.y[i] / 6.0;
                for b in 0..2 {
                    dxx[a][b] += d.x[(i, a)] * d.x[(i, b)] / 6.0;
                }
            }
        }
        for a in 0..2 {
            assert!((sxy[a] - dxy[a]).abs() < 1e-14);
            for b in 0..2 {
                assert!((sxx[(a, b)] - dxx[a][b]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn least_squares_gradient_toy() {
        let s = BatchStats {
            sxx: Mat::identity(2),
            sxy: vec![1.0, 1.0],
            n: 1,
        };
        assert_eq!(s.gradient(&[0.0, 0.0]), vec![-1.0, -1.0]);
    }

    #[test]
    fn gradient_vanishes_at_ols() {
        let d = toy(LossKind::LeastSquares, 4);
        let theta = ols(&d).unwrap();
        let g = grad_rows(LossKind::LeastSquares, &d.x, &d.y, &theta).unwrap();
        assert!(norm(&g) < 1e-10);
    }

    #[test]
    fn logistic_gradient_zero_on_balanced_toy() {
        // y-balanced and x-symmetric: each x paired with both labels.
        let x = Mat::from_rows(&[[1.0], [-1.0], [1.0], [-1.0]]).unwrap();
        let y = [1.0, 1.0, 0.0, 0.0];
        let g = grad_rows(LossKind::Logistic, &x, &y, &[0.0]).unwrap();
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn ols_recovers_noise_free_theta() {
        let mut spec = DataGenSpec::new(50, 4, Model::Linear, 0.0, 3);
        spec.theta_true = vec![1.0, -2.0, 0.5, 3.0];
        let mut d = generate(&spec).unwrap();
        d.y = (0..d.len())
            .map(|i| d.x.row(i).iter().zip(&spec.theta_true).map(|(a, b)| a * b).sum())
            .collect();
        let theta = ols(&d).unwrap();
        assert!(max_abs_diff(&theta, &spec.theta_true) < 1e-10);
    }

    #[test]
    fn ols_orthonormal_design() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let x = Mat::from_rows(&[[s, s], [s, -s]]).unwrap();
        let y = vec![2.0, -1.0];
        let d = Dataset::new(x.clone(), y.clone()).unwrap();
        let expected = crate::tensor::matvec(&x.transpose(), &y).unwrap();
        assert!(max_abs_diff(&ols(&d).unwrap(), &expected) < 1e-12);
    }

    #[test]
    fn ols_matches_long_accumulation_oracle() {
        let d = toy(LossKind::LeastSquares, 12);
        // Normal equations via f64 sums over explicit loops, solved by Cramer-free
        // Gaussian elimination written out here.
        let p = d.dim();
        let mut a = vec![vec![0.0f64; p + 1]; p];
        for i in 0..d.len() {
            for r in 0..p {
                for c in 0..p {
                    a[r][c] += d.x[(i, r)] * d.x[(i, c)];
                }
                a[r][p] += d.x[(i, r)] * d.y[i];
            }
        }
        for k in 0..p {
            for r in (k + 1)..p {
                let f = a[r][k] / a[k][k];
                for c in k..=p {
                    a[r][c] -= f * a[k][c];
                }
            }
        }
        let mut sol = vec![0.0; p];
        for r in (0..p).rev() {
            let s: f64 = ((r + 1)..p).map(|c| a[r][c] * sol[c]).sum();
            sol[r] = (a[r][p] - s) / a[r][r];
        }
        assert!(max_abs_diff(&ols(&d).unwrap(), &sol) < 1e-10);
    }

    #[test]
    fn ols_singular_design() {
        let x = Mat::from_rows(&[[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]).unwrap();
        let d = Dataset::new(x, vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(ols(&d), Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn newton_symmetric_logistic_is_zero() {
        let x = Mat::from_rows(&[[1.0], [-1.0], [1.0], [-1.0]]).unwrap();
        let d = Dataset::new(x, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let fit = newton_mle(&d, LossKind::Logistic).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.theta, vec![0.0]);
    }

    #[test]
    fn newton_one_dimensional_log_odds() {
        let x = Mat::from_vec(8, 1, vec![1.0; 8]).unwrap();
        let y = vec![1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0];
        let d = Dataset::new(x, y).unwrap();
        let fit = newton_mle(&d, LossKind::Logistic).unwrap();
        assert!(fit.converged);
        assert!((fit.theta[0] - 3f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn newton_poisson_consistency() {
        let d = generate(&DataGenSpec::new(20_000, 3, Model::Poisson, 0.0, 5)).unwrap();
        let fit = newton_mle(&d, LossKind::Poisson).unwrap();
        assert!(fit.converged);
        assert!(fit.theta.iter().all(|t| t.abs() < 0.05), "{:?}", fit.theta);
    }

    #[test]
    fn poisson_overflow_is_divergence() {
        let x = Mat::from_rows(&[[1.0]]).unwrap();
        assert!(matches!(
            grad_rows(LossKind::Poisson, &x, &[1.0], &[800.0]),
            Err(Error::Divergence(_))
        ));
    }

    #[test]
    fn logistic_extreme_predictors_stay_finite() {
        let x = Mat::from_rows(&[[1.0], [-1.0]]).unwrap();
        let v = loss_rows(LossKind::Logistic, &x, &[1.0, 0.0], &[800.0]).unwrap();
        assert!(v.is_finite());
        let g = grad_rows(LossKind::Logistic, &x, &[0.0, 1.0], &[800.0]).unwrap();
        assert!(g.iter().all(|v| v.is_finite()));
    }

    fn all_kinds() -> [LossKind; 3] {
        [LossKind::LeastSquares, LossKind::Logistic, LossKind::Poisson]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn gradient_matches_central_differences(seed in 0u64..1000, t in prop::collection::vec(-0.5f64..0.5, 3)) {
            for kind in all_kinds() {
                let d = toy(kind, seed);
                let g = grad_rows(kind, &d.x, &d.y, &t).unwrap();
                let h = 1e-6;
                for j in 0..3 {
                    let mut up = t.clone();
                    let mut dn = t.clone();
                    up[j] += h;
                    dn[j] -= h;
                    let fd = (loss_rows(kind, &d.x, &d.y, &up).unwrap()
                        - loss_rows(kind, &d.x, &d.y, &dn).unwrap()) / (2.0 * h);
                    let rel = (fd - g[j]).abs() / g[j].abs().max(1e-2);
                    prop_assert!(rel < 1e-5, "{kind} coord {j}: fd {fd} vs {}", g[j]);
                }
            }
        }

        #[test]
        fn least_squares_gradient_is_affine(seed in 0u64..1000,
            a in prop::collection::vec(-2f64..2.0, 3), b in prop::collection::vec(-2f64..2.0, 3)) {
            let d = toy(LossKind::LeastSquares, seed);
            let s = BatchStats::from_rows(&d.x, &d.y).unwrap();
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let lhs: Vec<f64> = s.gradient(&a).iter().zip(s.gradient(&b)).zip(s.gradient(&[0.0; 3]))
                .map(|((x, y), z)| x + y - z).collect();
            prop_assert!(max_abs_diff(&lhs, &s.gradient(&sum)) < 1e-12);
        }

        #[test]
        fn gradient_slope_within_hessian_bounds(seed in 0u64..1000,
            a in prop::collection::vec(-0.5f64..0.5, 3), dir in prop::collection::vec(-1f64..1.0, 3)) {
            for kind in all_kinds() {
                let d = toy(kind, seed);
                let dn = norm(&dir);
                prop_assume!(dn > 1e-3);
                let u: Vec<f64> = dir.iter().map(|v| v / dn).collect();
                let h = 1e-5;
                let b: Vec<f64> = a.iter().zip(&u).map(|(x, y)| x + h * y).collect();
                let ga = grad_rows(kind, &d.x, &d.y, &a).unwrap();
                let gb = grad_rows(kind, &d.x, &d.y, &b).unwrap();
                let slope: f64 = ga.iter().zip(&gb).zip(&u).map(|((x, y), ui)| (y - x) / h * ui).sum();
                let mid: Vec<f64> = a.iter().zip(&u).map(|(x, y)| x + 0.5 * h * y).collect();
                let eig = eig_sym(&hessian_rows(kind, &d.x, &d.y, &mid).unwrap()).unwrap();
                let (hi, lo) = (eig[0], eig[eig.len() - 1]);
                let slack = 1e-6 * (1.0 + hi.abs());
                prop_assert!(slope >= lo - slack && slope <= hi + slack, "{kind}: {slope} not in [{lo}, {hi}]");
            }
        }
    }
}
