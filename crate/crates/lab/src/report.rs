//! Experiment reports and their on-disk form.
//!
//! [`ExperimentReport::write`] produces, in the output directory:
//!
//! | file | columns |
//! |------|---------|
//! | `log_mse.csv` | `model,method,setting,param,replication,status,log_mse` |
//! | `summary.csv` | `model,method,setting,param,n_ok,n_diverged,n_failed,mean_log_mse,sd_log_mse` |
//! | `curves.csv` | `model,method,setting,metric,epoch,log_mean_error,n` |
//! | `timings.csv` | `kappa,n_total,path,phase,replications,seconds` |
//! | `*.svg` | box and line charts of the above |
//! | `run_manifest.json` | spec, seeds, crate version and host |
//!
//! All CSVs except `timings.csv` are byte-for-byte reproducible from the spec.
//! Each starts with a `#` comment line stating the MSE convention.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use fmgd::datagen::{format_value, Model};
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::spec::{ExperimentSpec, Kind};
use crate::svg::{BoxGroup, Chart, Series};

pub const MSE_HEADER: &str = "# mse = ||theta_hat - theta||^2 / p";
pub const TIMING_HEADER: &str =
    "# non-deterministic: seconds are wall-clock; OS page caches are not dropped, cold = first epoch";

/// Outcome of one replication in one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sample {
    /// log of the MSE of the final estimate.
    Ok(f64),
    Diverged,
    /// The replication was aborted, e.g. by a failed reference fit.
    Failed,
}

impl Sample {
    pub fn value(self) -> Option<f64> {
        match self {
            Sample::Ok(v) => Some(v),
            _ => None,
        }
    }

    fn status(self) -> &'static str {
        match self {
            Sample::Ok(_) => "ok",
            Sample::Diverged => "diverged",
            Sample::Failed => "failed",
        }
    }
}

/// The `B` samples of one (model, method, setting) combination, in
/// replication order.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub model: Model,
    pub method: String,
    pub setting: String,
    pub param: f64,
    pub samples: Vec<Sample>,
}

impl Cell {
    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().filter_map(|s| s.value()).collect()
    }

    pub fn count(&self, status: fn(&Sample) -> bool) -> usize {
        self.samples.iter().filter(|s| status(s)).count()
    }

    pub fn n_ok(&self) -> usize {
        self.count(|s| matches!(s, Sample::Ok(_)))
    }

    pub fn n_diverged(&self) -> usize {
        self.count(|s| matches!(s, Sample::Diverged))
    }

    pub fn n_failed(&self) -> usize {
        self.count(|s| matches!(s, Sample::Failed))
    }

    /// Mean log(MSE) over the replications that finished; NaN if none did.
    pub fn mean(&self) -> f64 {
        mean(&self.values())
    }

    pub fn sd(&self) -> f64 {
        let v = self.values();
        if v.len() < 2 {
            return f64::NAN;
        }
        let m = mean(&v);
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    }
}

/// Per-epoch error curve, `log` of the mean error over finished replications.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub model: Model,
    pub method: String,
    pub setting: String,
    /// `numerical` (distance to the global estimate) or `estimation`
    /// (distance to the true parameter).
    pub metric: String,
    pub values: Vec<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub kappa: usize,
    pub n_total: usize,
    /// `packed` or `shuffled`.
    pub path: String,
    /// `pack`, `index`, `cold`, `warm_mean` or `epoch_mean`.
    pub phase: String,
    pub replications: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub name: String,
    pub kind: Kind,
    pub replications: usize,
    /// Data seed of each replication.
    pub seeds: Vec<u64>,
    pub cells: Vec<Cell>,
    pub curves: Vec<Curve>,
    pub timings: Vec<TimingRow>,
    pub notes: Vec<String>,
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn fmt_opt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format_value(v)
    }
}

#[derive(Serialize)]
struct Host {
    os: &'static str,
    arch: &'static str,
    hostname: Option<String>,
    cpus: Option<usize>,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    name: &'a str,
    kind: &'a str,
    version: &'static str,
    replications: usize,
    seed: u64,
    replication_seeds: &'a [u64],
    spec: &'a ExperimentSpec,
    host: Host,
    files: Vec<String>,
    notes: &'a [String],
}

fn hostname() -> Option<String> {
    std::env::var("HOSTNAME")
        .ok()
        .or_else(|| fs::read_to_string("/etc/hostname").ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
}

impl ExperimentReport {
    pub fn new(spec: &ExperimentSpec, seeds: Vec<u64>) -> Self {
        ExperimentReport {
            name: spec.name(),
            kind: spec.kind,
            replications: spec.replications(),
            seeds,
            cells: Vec::new(),
            curves: Vec::new(),
            timings: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn cell(&self, model: Model, method: &str, setting: &str) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.model == model && c.method == method && c.setting == setting)
    }

    pub fn curve(&self, model: Model, method: &str, setting: &str, metric: &str) -> Option<&Curve> {
        self.curves.iter().find(|c| {
            c.model == model && c.method == method && c.setting == setting && c.metric == metric
        })
    }

    pub fn timing(&self, kappa: usize, path: &str, phase: &str) -> Option<f64> {
        self.timings
            .iter()
            .find(|t| t.kappa == kappa && t.path == path && t.phase == phase)
            .map(|t| t.seconds)
    }

    /// Fails with [`LabError::Divergence`] if any cell lost more than
    /// `allowed` of its replications to divergence.
    pub fn check_divergence(&self, allowed: f64) -> Result<()> {
        for c in &self.cells {
            let total = c.samples.len();
            let diverged = c.n_diverged();
            if total > 0 && diverged as f64 / total as f64 > allowed {
                return Err(LabError::Divergence {
                    cell: format!("{}/{}/{}", c.model, c.method, c.setting),
                    diverged,
                    total,
                    allowed,
                });
            }
        }
        Ok(())
    }

    pub fn write_log_mse<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "{MSE_HEADER}")?;
        writeln!(w, "model,method,setting,param,replication,status,log_mse")?;
        for c in &self.cells {
            for (r, s) in c.samples.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    c.model,
                    c.method,
                    c.setting,
                    format_value(c.param),
                    r + 1,
                    s.status(),
                    s.value().map(format_value).unwrap_or_default()
                )?;
            }
        }
        Ok(())
    }

    pub fn write_summary<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "{MSE_HEADER}")?;
        writeln!(w, "model,method,setting,param,n_ok,n_diverged,n_failed,mean_log_mse,sd_log_mse")?;
        for c in &self.cells {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                c.model,
                c.method,
                c.setting,
                format_value(c.param),
                c.n_ok(),
                c.n_diverged(),
                c.n_failed(),
                fmt_opt(c.mean()),
                fmt_opt(c.sd())
            )?;
        }
        Ok(())
    }

    pub fn write_curves<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "{MSE_HEADER}")?;
        writeln!(w, "# error = ||theta^(t) - reference||; log_mean_error = log of the mean over replications")?;
        writeln!(w, "model,method,setting,metric,epoch,log_mean_error,n")?;
        for c in &self.curves {
            for (t, v) in c.values.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    c.model,
                    c.method,
                    c.setting,
                    c.metric,
                    t + 1,
                    fmt_opt(*v),
                    c.n
                )?;
            }
        }
        Ok(())
    }

    pub fn write_timings<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "{TIMING_HEADER}")?;
        writeln!(w, "kappa,n_total,path,phase,replications,seconds")?;
        for t in &self.timings {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                t.kappa,
                t.n_total,
                t.path,
                t.phase,
                t.replications,
                format_value(t.seconds)
            )?;
        }
        Ok(())
    }

    fn charts(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut models: Vec<Model> = Vec::new();
        for m in self.cells.iter().map(|c| c.model).chain(self.curves.iter().map(|c| c.model)) {
            if !models.contains(&m) {
                models.push(m);
            }
        }
        for model in models {
            let cells: Vec<&Cell> = self.cells.iter().filter(|c| c.model == model).collect();
            match self.kind {
                Kind::Case1 => {
                    let mut settings: Vec<&str> = cells.iter().map(|c| c.setting.as_str()).collect();
                    settings.dedup();
                    for s in settings {
                        let groups: Vec<BoxGroup> = cells
                            .iter()
                            .filter(|c| c.setting == s)
                            .map(|c| BoxGroup::new(&c.method, &c.values()))
                            .collect();
                        let chart = Chart::new(format!("log(MSE), {model}, {s}"), "method", "log(MSE)");
                        out.push((format!("box_{model}_{}.svg", file_safe(s)), chart.boxes(&groups)));
                    }
                }
                Kind::Case2 | Kind::GeneralLoss | Kind::Convergence => {
                    let mut methods: Vec<&str> = Vec::new();
                    for c in &cells {
                        if !methods.contains(&c.method.as_str()) {
                            methods.push(&c.method);
                        }
                    }
                    if self.kind != Kind::Convergence {
                        let series = methods
                            .iter()
                            .map(|m| {
                                Series::new(
                                    m,
                                    cells
                                        .iter()
                                        .filter(|c| c.method == *m)
                                        .map(|c| (c.param, c.mean()))
                                        .collect(),
                                )
                            })
                            .collect::<Vec<_>>();
                        let chart = Chart::new(format!("mean log(MSE), {model}"), "gamma", "mean log(MSE)");
                        out.push((format!("sweep_{model}.svg"), chart.lines(&series)));
                    }
                }
                Kind::Io => {}
            }
            let mut keys: Vec<(String, String)> = Vec::new();
            for c in self.curves.iter().filter(|c| c.model == model) {
                let k = (c.setting.clone(), c.metric.clone());
                if !keys.contains(&k) {
                    keys.push(k);
                }
            }
            for (setting, metric) in keys {
                let series = self
                    .curves
                    .iter()
                    .filter(|c| c.model == model && c.setting == setting && c.metric == metric)
                    .map(|c| {
                        Series::new(
                            &c.method,
                            c.values.iter().enumerate().map(|(t, v)| ((t + 1) as f64, *v)).collect(),
                        )
                    })
                    .collect::<Vec<_>>();
                let chart = Chart::new(
                    format!("{metric} error, {model}, {setting}"),
                    "epoch",
                    "log mean error",
                );
                out.push((
                    format!("curve_{model}_{}_{metric}.svg", file_safe(&setting)),
                    chart.lines(&series),
                ));
            }
        }
        if !self.timings.is_empty() {
            let series = ["packed", "shuffled"]
                .iter()
                .map(|path| {
                    Series::new(
                        path,
                        self.timings
                            .iter()
                            .filter(|t| t.path == *path && t.phase == "epoch_mean")
                            .map(|t| (t.n_total as f64, t.seconds.ln()))
                            .collect(),
                    )
                })
                .collect::<Vec<_>>();
            let chart = Chart::new("read time per epoch", "N", "log seconds");
            out.push(("io_epoch_time.svg".into(), chart.lines(&series)));
        }
        out
    }

    /// Writes every report file into `dir`, creating it if needed, and returns
    /// the paths written.
    pub fn write(&self, spec: &ExperimentSpec, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
        let mut files: Vec<(String, Vec<u8>)> = Vec::new();
        let mut buf = Vec::new();
        if !self.cells.is_empty() {
            self.write_log_mse(&mut buf).expect("write to Vec");
            files.push(("log_mse.csv".into(), std::mem::take(&mut buf)));
            self.write_summary(&mut buf).expect("write to Vec");
            files.push(("summary.csv".into(), std::mem::take(&mut buf)));
        }
        if !self.curves.is_empty() {
            self.write_curves(&mut buf).expect("write to Vec");
            files.push(("curves.csv".into(), std::mem::take(&mut buf)));
        }
        if !self.timings.is_empty() {
            self.write_timings(&mut buf).expect("write to Vec");
            files.push(("timings.csv".into(), std::mem::take(&mut buf)));
        }
        for (name, svg) in self.charts() {
            files.push((name, svg.into_bytes()));
        }
        let names: Vec<String> = files.iter().map(|(n, _)| n.clone()).collect();
        let manifest = RunManifest {
            name: &self.name,
            kind: self.kind.as_str(),
            version: env!("CARGO_PKG_VERSION"),
            replications: self.replications,
            seed: spec.seed,
            replication_seeds: &self.seeds,
            spec,
            host: Host {
                os: std::env::consts::OS,
                arch: std::env::consts::ARCH,
                hostname: hostname(),
                cpus: std::thread::available_parallelism().map(|n| n.get()).ok(),
            },
            files: names,
            notes: &self.notes,
        };
        let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        files.push(("run_manifest.json".into(), json));

        let mut written = Vec::new();
        for (name, bytes) in files {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(|e| LabError::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '_' })
        .collect()
}
