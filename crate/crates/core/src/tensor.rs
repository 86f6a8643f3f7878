//! Dense matrices and the handful of kernels the estimators need.
//!
//! Vectors are plain `Vec<f64>` / `&[f64]`. [`Mat`] is row-major and carries a
//! `symmetric` flag that is only ever set after an exact check.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Relative pivot threshold for [`solve_linear`]: `|pivot| < PIVOT_TOL * max|A|`
/// is treated as singular.
pub const PIVOT_TOL: f64 = 1e-12;

/// Iteration cap for [`spectral_radius`].
pub const POWER_MAX_ITER: usize = 10_000;

#[derive(Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    symmetric: bool,
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} (symmetric: {})", self.rows, self.cols, self.symmetric)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        Ok(())
    }
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
            symmetric: rows == cols,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m.symmetric = true;
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Mat::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m.symmetric = true;
        m
    }

    /// Builds a matrix from row-major data. Entries must be finite.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("matrix entries must be finite"));
        }
        let mut m = Mat {
            rows,
            cols,
            data,
            symmetric: false,
        };
        m.symmetric = m.asymmetry() == Some(0.0);
        Ok(m)
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::dims("ragged rows"));
            }
            data.extend_from_slice(r);
        }
        Mat::from_vec(rows.len(), cols, data)
    }

    /// Internal constructor for kernels that produce finite values by construction.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Mat {
            rows,
            cols,
            data,
            symmetric: false,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        self.symmetric = false;
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }

    /// Largest `|A_ij - A_ji|`, or `None` for non-square matrices.
    pub fn asymmetry(&self) -> Option<f64> {
        if !self.is_square() {
            return None;
        }
        let n = self.rows;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.data[i * n + j] - self.data[j * n + i]).abs());
            }
        }
        Some(worst)
    }

    /// Re-checks exact symmetry and updates the flag.
    pub fn check_symmetric(&mut self) -> bool {
        self.symmetric = self.asymmetry() == Some(0.0);
        self.symmetric
    }

    /// Copies the upper triangle onto the lower one and sets the flag.
    pub fn symmetrize_upper(&mut self) {
        assert!(self.is_square());
        let n = self.rows;
        for i in 0..n {
            for j in (i + 1)..n {
                self.data[j * n + i] = self.data[i * n + j];
            }
        }
        self.symmetric = true;
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t.symmetric = self.symmetric;
        t
    }

    pub fn matmul(&self, other: &Mat) -> Result<Mat> {
        if self.cols != other.rows {
            return Err(Error::dims(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = vec![0.0; self.rows * other.cols];
        for i in 0..self.rows {
            let out_row = &mut out[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (o, b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(Mat::from_raw(self.rows, other.cols, out))
    }

    fn zip_with(&self, other: &Mat, f: impl Fn(f64, f64) -> f64) -> Result<Mat> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::dims("elementwise operation on different shapes"));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect();
        let mut m = Mat::from_raw(self.rows, self.cols, data);
        m.symmetric = self.symmetric && other.symmetric;
        Ok(m)
    }

    pub fn add(&self, other: &Mat) -> Result<Mat> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Mat) -> Result<Mat> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Mat {
        let mut m = self.clone();
        m.data.iter_mut().for_each(|v| *v *= s);
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Induced infinity norm (max absolute row sum).
    pub fn max_row_sum(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `k`-th power of a square matrix by repeated squaring.
    pub fn pow(&self, mut k: u32) -> Result<Mat> {
        if !self.is_square() {
            return Err(Error::dims("power of a non-square matrix"));
        }
        let mut base = self.clone();
        let mut acc = Mat::identity(self.rows);
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.matmul(&base)?;
            }
            k >>= 1;
            if k > 0 {
                base = base.matmul(&base)?;
            }
        }
        Ok(acc)
    }

    /// Writes `self * v` into `out` without dimension checks beyond debug asserts.
    pub fn mul_vec_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(self.cols, v.len());
        debug_assert_eq!(self.rows, out.len());
        for (o, i) in out.iter_mut().zip(0..self.rows) {
            *o = dot(self.row(i), v);
        }
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        self.symmetric = false;
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub fn matvec(a: &Mat, v: &[f64]) -> Result<Vec<f64>> {
    if a.cols() != v.len() {
        return Err(Error::dims(format!(
            "{}x{} matrix times vector of length {}",
            a.rows(),
            a.cols(),
            v.len()
        )));
    }
    let mut out = vec![0.0; a.rows()];
    a.mul_vec_into(v, &mut out);
    Ok(out)
}

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Debug, Clone)]
pub struct Lu {
    factors: Mat,
    perm: Vec<usize>,
    min_pivot: f64,
}

impl Lu {
    pub fn new(a: &Mat) -> Result<Lu> {
        if !a.is_square() {
            return Err(Error::dims("LU of a non-square matrix"));
        }
        let n = a.rows();
        let scale = a.max_abs();
        let threshold = PIVOT_TOL * scale;
        let mut lu = a.clone();
        lu.symmetric = false;
        let mut perm: Vec<usize> = (0..n).collect();
        let mut min_pivot = f64::INFINITY;
        for k in 0..n {
            let (pivot_row, pivot) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            min_pivot = min_pivot.min(pivot);
            if scale == 0.0 || pivot < threshold {
                return Err(Error::SingularMatrix { pivot });
            }
            if pivot_row != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, pivot_row * n + j);
                }
                perm.swap(k, pivot_row);
            }
            let diag = lu[(k, k)];
            for i in (k + 1)..n {
                let factor = lu.data[i * n + k] / diag;
                lu.data[i * n + k] = factor;
                if factor == 0.0 {
                    continue;
                }
                for j in (k + 1)..n {
                    lu.data[i * n + j] -= factor * lu.data[k * n + j];
                }
            }
        }
        Ok(Lu {
            factors: lu,
            perm,
            min_pivot,
        })
    }

    pub fn dim(&self) -> usize {
        self.factors.rows()
    }

    /// Smallest pivot magnitude met during elimination.
    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::dims("right-hand side length"));
        }
        let f = &self.factors;
        let mut x: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();
        for i in 0..n {
            let s = dot(&f.row(i)[..i], &x[..i]);
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s = dot(&f.row(i)[i + 1..], &x[i + 1..]);
            x[i] = (x[i] - s) / f[(i, i)];
        }
        Ok(x)
    }

    /// Solves `A^T x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::dims("right-hand side length"));
        }
        let f = &self.factors;
        // A^T = U^T L^T P, so solve U^T z = b, L^T w = z, x = P^T w.
        let mut z = b.to_vec();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= f[(k, i)] * z[k];
            }
            z[i] = s / f[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in (i + 1)..n {
                s -= f[(k, i)] * z[k];
            }
            z[i] = s;
        }
        let mut x = vec![0.0; n];
        for (k, &i) in self.perm.iter().enumerate() {
            x[i] = z[k];
        }
        Ok(x)
    }
}

/// Solves `A x = b` by LU with partial pivoting.
pub fn solve_linear(a: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    if a.rows() != b.len() {
        return Err(Error::dims("right-hand side length"));
    }
    Lu::new(a)?.solve(b)
}

/// Lower Cholesky factor `L` with `A = L L^T`.
pub fn cholesky(a: &Mat) -> Result<Mat> {
    require_symmetric(a)?;
    let n = a.rows();
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { column: j });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

fn require_symmetric(a: &Mat) -> Result<()> {
    if a.is_symmetric() {
        return Ok(());
    }
    match a.asymmetry() {
        None => Err(Error::dims("expected a square matrix")),
        Some(asym) if asym <= 1e-12 * a.max_abs().max(1.0) => Ok(()),
        Some(asymmetry) => Err(Error::NotSymmetric { asymmetry }),
    }
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Eigenvalues, descending.
    pub values: Vec<f64>,
    /// Column `j` is the unit eigenvector for `values[j]`.
    pub vectors: Mat,
}

/// Cyclic Jacobi eigen-decomposition. Tolerates asymmetry up to
/// `1e-12 * max|A|` (the matrix is averaged with its transpose first).
pub fn eigh(a: &Mat) -> Result<SymEigen> {
    require_symmetric(a)?;
    let n = a.rows();
    let mut m = a.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
    let mut v = Mat::identity(n);
    let total: f64 = m.data.iter().map(|x| x * x).sum();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off <= 1e-32 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, dst)] = v[(k, src)];
        }
    }
    Ok(SymEigen { values, vectors })
}

/// Eigenvalues of a symmetric matrix, descending.
pub fn eig_sym(a: &Mat) -> Result<Vec<f64>> {
    Ok(eigh(a)?.values)
}

/// Spectral radius `max_j |lambda_j(A)|` of a square, possibly non-symmetric matrix.
///
/// Power iteration from the normalized all-ones vector, restarted from the
/// unit vectors of the rows with the widest Gershgorin discs if a start is
/// annihilated. Convergence is declared when either the one-step growth ratio
/// or the two-step geometric ratio (which handles `±lambda` pairs) stops
/// moving. When neither settles within [`POWER_MAX_ITER`] steps (a complex
/// dominant pair), the radius is taken from Gelfand's formula
/// `||A^k||^(1/k)` with `k = 2^j` computed by renormalized repeated squaring.
/// The result never exceeds the Gershgorin bound `max_i sum_j |A_ij|`.
pub fn spectral_radius(a: &Mat) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::dims("spectral radius of a non-square matrix"));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(0.0);
    }
    if a.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite matrix entry"));
    }
    let gershgorin = a.max_row_sum();
    if gershgorin == 0.0 {
        return Ok(0.0);
    }

    let mut starts = vec![vec![1.0 / (n as f64).sqrt(); n]];
    let mut by_radius: Vec<usize> = (0..n).collect();
    let radius = |i: usize| a.row(i).iter().map(|v| v.abs()).sum::<f64>();
    by_radius.sort_by(|&i, &j| radius(j).total_cmp(&radius(i)));
    for i in by_radius {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        starts.push(e);
    }

    let mut last_pair = (f64::NAN, f64::NAN);
    let mut annihilated_everywhere = true;
    for start in starts {
        match power_iterate(a, start) {
            PowerOutcome::Converged(r) => return Ok(r.min(gershgorin)),
            PowerOutcome::Annihilated => continue,
            PowerOutcome::Stalled(prev, last) => {
                annihilated_everywhere = false;
                last_pair = (prev, last);
                break;
            }
        }
    }
    if annihilated_everywhere {
        // Every start vector reaches zero in finitely many steps: nilpotent.
        return Ok(0.0);
    }
    match radius_by_squaring(a) {
        Some(r) => Ok(r.min(gershgorin)),
        None => Err(Error::NoConvergence {
            previous: last_pair.0,
            last: last_pair.1,
        }),
    }
}

enum PowerOutcome {
    Converged(f64),
    Annihilated,
    Stalled(f64, f64),
}

fn power_iterate(a: &Mat, mut v: Vec<f64>) -> PowerOutcome {
    const TOL: f64 = 1e-12;
    let n = v.len();
    let mut w = vec![0.0; n];
    let mut ratios: Vec<f64> = Vec::with_capacity(4);
    let mut prev_two_step = f64::NAN;
    for _ in 0..POWER_MAX_ITER {
        a.mul_vec_into(&v, &mut w);
        let r = norm(&w);
        if r == 0.0 || !r.is_finite() {
            return PowerOutcome::Annihilated;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / r;
        }
        if let Some(&prev) = ratios.last() {
            if (r - prev).abs() <= TOL * r {
                return PowerOutcome::Converged(r);
            }
            let two_step = (r * prev).sqrt();
            if (two_step - prev_two_step).abs() <= TOL * two_step {
                return PowerOutcome::Converged(two_step);
            }
            prev_two_step = two_step;
        }
        if ratios.len() == 2 {
            ratios.remove(0);
        }
        ratios.push(r);
    }
    let last = ratios.last().copied().unwrap_or(f64::NAN);
    let prev = if ratios.len() == 2 { ratios[0] } else { f64::NAN };
    PowerOutcome::Stalled(prev, last)
}

fn radius_by_squaring(a: &Mat) -> Option<f64> {
    let s = a.frobenius();
    let mut b = a.scale(1.0 / s);
    let mut log_norm = s.ln();
    let mut power = 1.0f64;
    let mut estimate = s;
    for _ in 0..60 {
        b = b.matmul(&b).ok()?;
        log_norm *= 2.0;
        power *= 2.0;
        let f = b.frobenius();
        if f == 0.0 {
            return Some(0.0);
        }
        if !f.is_finite() {
            return None;
        }
        b = b.scale(1.0 / f);
        log_norm += f.ln();
        let next = (log_norm / power).exp();
        if (next - estimate).abs() <= 1e-14 * next {
            return Some(next);
        }
        estimate = next;
    }
    estimate.is_finite().then_some(estimate)
}
