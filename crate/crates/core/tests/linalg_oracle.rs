//! The crate's own dense linear algebra checked against nalgebra.

use fmgd::dynsys::{stable_solution_from_stats, ContractionSet};
use fmgd::losses::BatchStats;
use fmgd::tensor::{cholesky, eigh, spectral_radius, Lu, Mat};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn to_na(a: &Mat) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.rows(), a.cols(), a.data())
}

fn square(n: usize) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-2.0..2.0f64, n * n).prop_map(move |v| Mat::from_vec(n, n, v).unwrap())
}

/// `B B' / n + I / 4`, comfortably positive definite.
fn spd(n: usize) -> impl Strategy<Value = Mat> {
    square(n).prop_map(move |b| {
        let mut a = b.matmul(&b.transpose()).unwrap().scale(1.0 / n as f64);
        for i in 0..n {
            a[(i, i)] += 0.25;
        }
        a.symmetrize_upper();
        a
    })
}

fn stats_of(x: &Mat, y: &[f64], m: usize) -> Vec<BatchStats> {
    let n = y.len() / m;
    (0..m)
        .map(|k| {
            let rows: Vec<&[f64]> = (k * n..(k + 1) * n).map(|i| x.row(i)).collect();
            BatchStats::from_rows(&Mat::from_rows(&rows).unwrap(), &y[k * n..(k + 1) * n]).unwrap()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symmetric_eigenvalues_match(a in (1usize..7).prop_flat_map(spd)) {
        let ours = eigh(&a).unwrap();
        let mut theirs: Vec<f64> = to_na(&a).symmetric_eigen().eigenvalues.iter().copied().collect();
        theirs.sort_by(|x, y| y.total_cmp(x));
        for (u, v) in ours.values.iter().zip(&theirs) {
            prop_assert!((u - v).abs() < 1e-10 * (1.0 + v.abs()), "{u} vs {v}");
        }
        let na = to_na(&a);
        let vecs = to_na(&ours.vectors);
        for (j, lam) in ours.values.iter().enumerate() {
            let v = vecs.column(j);
            prop_assert!((&na * v - v * *lam).norm() < 1e-9);
        }
    }

    #[test]
    fn lu_solves_like_nalgebra(a in (1usize..8).prop_flat_map(spd), seed in 0u64..1000) {
        let n = a.rows();
        let b: Vec<f64> = (0..n).map(|i| ((seed + i as u64) as f64).sin()).collect();
        let x = Lu::new(&a).unwrap().solve(&b).unwrap();
        let oracle = to_na(&a).lu().solve(&nalgebra::DVector::from_column_slice(&b)).unwrap();
        for (u, v) in x.iter().zip(oracle.iter()) {
            prop_assert!((u - v).abs() < 1e-9 * (1.0 + v.abs()));
        }
        let xt = Lu::new(&a.transpose()).unwrap().solve(&b).unwrap();
        let xt2 = Lu::new(&a).unwrap().solve_transpose(&b).unwrap();
        for (u, v) in xt.iter().zip(&xt2) {
            prop_assert!((u - v).abs() < 1e-9 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn cholesky_factor_matches(a in (1usize..7).prop_flat_map(spd)) {
        let l = to_na(&cholesky(&a).unwrap());
        let oracle = to_na(&a).cholesky().unwrap().l();
        prop_assert!((l - oracle).amax() < 1e-10);
    }

    #[test]
    fn epoch_product_radius_matches_eigenvalues(
        p in 1usize..5,
        m in 1usize..5,
        alpha in 0.05..0.6f64,
        seed in any::<u64>(),
    ) {
        let n = 3 * p + 2;
        let mut state = seed | 1;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let x = Mat::from_vec(n * m, p, (0..n * m * p).map(|_| next()).collect()).unwrap();
        let y: Vec<f64> = (0..n * m).map(|_| next()).collect();
        let stats = stats_of(&x, &y, m);
        let product = ContractionSet::from_stats(&stats, alpha).unwrap().epoch_product().unwrap();

        let mut oracle_product = DMatrix::<f64>::identity(p, p);
        for s in &stats {
            let delta = DMatrix::identity(p, p) - to_na(&s.sxx) * alpha;
            oracle_product = delta * oracle_product;
        }
        prop_assert!((to_na(&product) - &oracle_product).amax() < 1e-12);

        let oracle = oracle_product
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        let ours = spectral_radius(&product).unwrap();
        prop_assert!((ours - oracle).abs() < 1e-6 * (1.0 + oracle), "{ours} vs {oracle}");
    }
}

/// Block-cyclic system built directly with nalgebra: block row m reads
/// `theta_m - Delta_m theta_{m-1} = alpha Sxy_m`, with `theta_0 = theta_M`.
#[test]
fn stable_solution_matches_direct_block_solve() {
    let (p, m, n) = (3, 4, 25);
    let x = Mat::from_vec(
        n * m,
        p,
        (0..n * m * p).map(|i| ((i * 7919 % 1000) as f64 / 500.0) - 1.0).collect(),
    )
    .unwrap();
    let y: Vec<f64> = (0..n * m).map(|i| (i as f64 * 0.37).cos()).collect();
    let stats = stats_of(&x, &y, m);
    let alpha = 0.3;

    let dim = p * m;
    let mut omega = DMatrix::<f64>::identity(dim, dim);
    let mut rhs = nalgebra::DVector::<f64>::zeros(dim);
    for (k, s) in stats.iter().enumerate() {
        let prev = (k + m - 1) % m;
        let delta = DMatrix::identity(p, p) - to_na(&s.sxx) * alpha;
        let mut block = omega.view_mut((k * p, prev * p), (p, p));
        block -= delta;
        for a in 0..p {
            rhs[k * p + a] = alpha * s.sxy[a];
        }
    }
    let oracle = omega.clone().lu().solve(&rhs).unwrap();
    let ours = stable_solution_from_stats(&stats, alpha).unwrap();
    assert_eq!(ours.num_batches(), m);
    for (u, v) in ours.theta_star.iter().zip(oracle.iter()) {
        assert!((u - v).abs() < 1e-10, "{u} vs {v}");
    }
    let sv = omega.singular_values().min();
    assert!((ours.omega_min_singular - sv).abs() < 1e-6 * sv, "{} vs {sv}", ours.omega_min_singular);
}
