use fmgd::datagen::Model;
use fmgd_lab::experiments::{data_seed, run_case1, run_convergence, run_experiment};
use fmgd_lab::report::{ExperimentReport, Sample};
use fmgd_lab::{ExperimentSpec, Kind, LabError};

fn mean_mse(report: &ExperimentReport, method: &str, setting: &str) -> f64 {
    let cell = report.cell(Model::Linear, method, setting).unwrap();
    let v = cell.values();
    v.iter().map(|l| l.exp()).sum::<f64>() / v.len() as f64
}

fn small(kind: Kind) -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(kind);
    spec.replications = Some(6);
    spec.epochs = 30;
    spec.data.n_samples = Some(500);
    spec.data.dim = Some(5);
    spec
}

#[test]
fn case1_desk_orderings() {
    let report = run_case1(&ExperimentSpec::new(Kind::Case1)).unwrap();
    let gap = report.cell(Model::Linear, "fmgd", "alpha=0.01").unwrap().mean()
        - report.cell(Model::Linear, "ols", "alpha=0.01").unwrap().mean();
    assert!(gap.abs() < 0.15, "alpha=0.01 gap {gap}");
    assert!(mean_mse(&report, "fmgd", "alpha=0.2") > mean_mse(&report, "ols", "alpha=0.2"));
    for setting in ["alpha=0.2", "alpha=0.1", "alpha=0.05", "alpha=0.01"] {
        assert!(
            mean_mse(&report, "smgd", setting) > mean_mse(&report, "fmgd", setting),
            "{setting}"
        );
    }
}

#[test]
fn convergence_curves() {
    let spec = ExperimentSpec {
        replications: Some(20),
        ..ExperimentSpec::new(Kind::Convergence)
    };
    let report = run_convergence(&spec).unwrap();
    let last = |method: &str, setting: &str, metric: &str| {
        *report
            .curve(Model::Linear, method, setting, metric)
            .unwrap()
            .values
            .last()
            .unwrap()
    };
    let plateau = last("fmgd-stable", "alpha=0.1", "numerical");
    let fmgd = last("fmgd", "alpha=0.1", "numerical");
    assert!((fmgd - plateau).abs() < 1e-6, "fmgd {fmgd} vs stable {plateau}");

    for setting in ["alpha=0.1", "gamma=0.6"] {
        for metric in ["numerical", "estimation"] {
            assert!(last("fmgd", setting, metric) < last("smgd", setting, metric), "{setting} {metric}");
        }
        let ols = last("ols", setting, "estimation");
        for method in ["fmgd", "sfmgd", "smgd"] {
            assert!(last(method, setting, "estimation") >= ols - 0.01, "{method} {setting}");
        }
    }
}

#[test]
fn cells_hold_every_replication() {
    for kind in [Kind::Case1, Kind::Case2, Kind::Convergence, Kind::GeneralLoss] {
        let spec = small(kind);
        let report = run_experiment(&spec).unwrap();
        assert!(!report.cells.is_empty());
        for c in &report.cells {
            assert_eq!(c.samples.len(), 6);
            assert_eq!(c.n_ok() + c.n_diverged() + c.n_failed(), 6);
        }
        assert_eq!(report.seeds, (0..6).map(|r| data_seed(&spec, r)).collect::<Vec<_>>());
    }
}

#[test]
fn replications_do_not_depend_on_each_other() {
    let mut spec = small(Kind::Case1);
    let six = run_experiment(&spec).unwrap();
    spec.replications = Some(3);
    let three = run_experiment(&spec).unwrap();
    for (a, b) in six.cells.iter().zip(&three.cells) {
        assert_eq!(a.samples[..3], b.samples[..]);
    }
}

#[test]
fn divergence_is_counted_and_enforced() {
    let mut spec = small(Kind::Case1);
    spec.alphas = vec![5.0];
    spec.epochs = 200;
    let report = run_experiment(&spec).unwrap();
    let cell = report.cell(Model::Linear, "fmgd", "alpha=5").unwrap();
    assert_eq!(cell.n_diverged(), 6);
    assert!(cell.samples.iter().all(|s| *s == Sample::Diverged));
    let ols = report.cell(Model::Linear, "ols", "alpha=5").unwrap();
    assert_eq!(ols.n_ok(), 6);
    let err = report.check_divergence(0.1).unwrap_err();
    assert!(matches!(err, LabError::Divergence { diverged: 6, total: 6, .. }));
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn report_files_and_headers() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small(Kind::Convergence);
    let report = run_experiment(&spec).unwrap();
    let written = report.write(&spec, dir.path()).unwrap();
    let names: Vec<String> = written
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    for expected in ["log_mse.csv", "summary.csv", "curves.csv", "run_manifest.json"] {
        assert!(names.iter().any(|n| n == expected), "{expected} missing from {names:?}");
    }
    assert!(names.iter().any(|n| n.ends_with(".svg")));
    for csv in ["log_mse.csv", "summary.csv", "curves.csv"] {
        let text = std::fs::read_to_string(dir.path().join(csv)).unwrap();
        assert!(text.starts_with("# mse = ||theta_hat - theta||^2 / p\n"), "{csv}");
    }
    let log_rows = std::fs::read_to_string(dir.path().join("log_mse.csv")).unwrap().lines().count() - 2;
    assert_eq!(log_rows, report.cells.len() * 6);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["replication_seeds"].as_array().unwrap().len(), 6);
    assert_eq!(manifest["spec"]["kind"], "convergence");
}
