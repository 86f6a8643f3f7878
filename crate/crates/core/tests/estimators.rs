use fmgd::datagen::{generate, write_csv, DataGenSpec, Dataset, Model};
use fmgd::dynsys::stable_solution_from_stats;
use fmgd::engine::{plan_for, precompute_batch_stats, run, run_in_memory, Init, Method, Record, RunConfig};
use fmgd::losses::{grad_rows, newton_mle, ols, LossKind};
use fmgd::partition::make_fixed;
use fmgd::schedule::Schedule;
use fmgd::source::InMemory;
use fmgd::store::{pack_dataset, PackedStore, ShuffledCsv};
use nalgebra::{DMatrix, DVector};

fn data(model: Model, n: usize, p: usize, seed: u64) -> Dataset {
    generate(&DataGenSpec::new(n, p, model, DataGenSpec::preset_coef(model), seed)).unwrap()
}

fn design(d: &Dataset) -> (DMatrix<f64>, DVector<f64>) {
    (
        DMatrix::from_row_slice(d.len(), d.dim(), d.x.data()),
        DVector::from_column_slice(&d.y),
    )
}

fn constant(method: Method, alpha: f64, m: usize, epochs: u64) -> RunConfig {
    RunConfig::new(method, LossKind::LeastSquares, Schedule::constant(alpha).unwrap(), m, epochs)
}

#[test]
fn ols_solves_the_normal_equations() {
    let d = data(Model::Linear, 400, 6, 1);
    let (x, y) = design(&d);
    let oracle = (x.transpose() * &x).lu().solve(&(x.transpose() * y)).unwrap();
    for (u, v) in ols(&d).unwrap().iter().zip(oracle.iter()) {
        assert!((u - v).abs() < 1e-10);
    }
}

#[test]
fn gd_follows_its_closed_form() {
    let d = data(Model::Linear, 300, 4, 2);
    let (x, y) = design(&d);
    let n = d.len() as f64;
    let sigma = x.transpose() * &x / n;
    let theta_hat = sigma.clone().lu().solve(&(x.transpose() * y / n)).unwrap();
    let alpha = 0.3;
    let contraction = DMatrix::identity(4, 4) - sigma * alpha;

    let traj = run_in_memory(&d, &constant(Method::Gd, alpha, 7, 25)).unwrap();
    assert_eq!(traj.iterates.len(), 25);
    let mut power = DMatrix::<f64>::identity(4, 4);
    for it in &traj.iterates {
        power = &contraction * power;
        // theta_t = theta_hat + C^t (0 - theta_hat)
        let expected = &theta_hat - &power * &theta_hat;
        for (u, v) in it.theta.iter().zip(expected.iter()) {
            assert!((u - v).abs() < 1e-12, "epoch {}: {u} vs {v}", it.epoch);
        }
    }
}

#[test]
fn fmgd_per_batch_iterates_follow_the_batch_recursion() {
    let d = data(Model::Linear, 240, 3, 3);
    let cfg = constant(Method::Fmgd, 0.2, 4, 3).with_seed(11).with_record(Record::PerBatch);
    let traj = run_in_memory(&d, &cfg).unwrap();
    assert_eq!(traj.iterates.len(), 12);

    let plan = make_fixed(d.len(), 4, 11).unwrap();
    let mut theta = DVector::<f64>::zeros(3);
    for (step, it) in traj.iterates.iter().enumerate() {
        let idx = &plan.batches[step % 4];
        let xb = DMatrix::from_fn(idx.len(), 3, |r, c| d.x[(idx[r], c)]);
        let yb = DVector::from_fn(idx.len(), |r, _| d.y[idx[r]]);
        let g = xb.transpose() * (&xb * &theta - yb) / idx.len() as f64;
        theta -= g * 0.2;
        assert_eq!((it.epoch, it.batch), (step as u64 / 4 + 1, step % 4 + 1));
        for (u, v) in it.theta.iter().zip(theta.iter()) {
            assert!((u - v).abs() < 1e-12);
        }
    }
}

#[test]
fn fmgd_settles_on_the_stable_cycle() {
    let d = data(Model::Linear, 500, 5, 4);
    let cfg = constant(Method::Fmgd, 0.1, 5, 400).with_seed(9).with_record(Record::FinalOnly);
    let traj = run_in_memory(&d, &cfg).unwrap();
    let plan = plan_for(&cfg, d.len(), 0).unwrap();
    let stats = precompute_batch_stats(&mut InMemory::new(&d), &plan).unwrap();
    let stable = stable_solution_from_stats(&stats, 0.1).unwrap();
    assert!(stable.rho_alpha_m < 1.0);
    for (m, theta) in traj.last_epoch.iter().enumerate() {
        for (u, v) in theta.iter().zip(stable.block(m)) {
            assert!((u - v).abs() < 1e-9, "batch {m}: {u} vs {v}");
        }
    }
}

#[test]
fn glm_fits_zero_the_gradient() {
    for (model, kind) in [(Model::Logistic, LossKind::Logistic), (Model::Poisson, LossKind::Poisson)] {
        let d = data(model, 2000, 4, 5);
        let fit = newton_mle(&d, kind).unwrap();
        let g = grad_rows(kind, &d.x, &d.y, &fit.theta).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-8), "{model}: {g:?}");
    }
}

#[test]
fn seeds_control_random_methods() {
    let d = data(Model::Linear, 200, 3, 6);
    for method in [Method::Sfmgd, Method::Smgd] {
        let a = run_in_memory(&d, &constant(method, 0.1, 4, 5).with_seed(1)).unwrap();
        let b = run_in_memory(&d, &constant(method, 0.1, 4, 5).with_seed(1)).unwrap();
        let c = run_in_memory(&d, &constant(method, 0.1, 4, 5).with_seed(2)).unwrap();
        assert_eq!(a.final_theta, b.final_theta);
        assert_ne!(a.final_theta, c.final_theta);
    }
}

#[test]
fn disk_sources_reproduce_in_memory_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = data(Model::Logistic, 300, 3, 7);
    let schedule = Schedule::polynomial(0.5, 0.6).unwrap();

    let fixed = RunConfig::new(Method::Fmgd, LossKind::Logistic, schedule.clone(), 6, 4).with_seed(3);
    let plan = plan_for(&fixed, d.len(), 0).unwrap();
    pack_dataset(&d, &plan, &dir.path().join("packed")).unwrap();
    let mut store = PackedStore::open(&dir.path().join("packed")).unwrap();
    let from_disk = run(&mut store, &fixed).unwrap();
    assert_eq!(from_disk.final_theta, run_in_memory(&d, &fixed).unwrap().final_theta);

    // CSV values are printed round-trip exact, so the row reader sees the same numbers
    let csv = dir.path().join("data.csv");
    write_csv(&d, &csv).unwrap();
    let shuffled = RunConfig::new(Method::Sfmgd, LossKind::Logistic, schedule, 6, 4)
        .with_seed(3)
        .with_init(Init::Given(vec![0.1, -0.1, 0.0]));
    let mut reader = ShuffledCsv::open(&csv).unwrap();
    let from_csv = run(&mut reader, &shuffled).unwrap();
    assert_eq!(from_csv.final_theta, run_in_memory(&d, &shuffled).unwrap().final_theta);
}
