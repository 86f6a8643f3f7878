use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fmgd::datagen::{generate, write_csv, DataGenSpec, Model};
use fmgd::partition::make_fixed;
use fmgd::store::{pack, packed_size, RowIndex};
use fmgd_lab::experiments::{run_experiment, run_io_benchmark};
use fmgd_lab::{ExperimentSpec, Kind, LabError, Result, Scale};

#[derive(Parser)]
#[command(name = "fmgd-lab", version, about = "Mini-batch gradient descent experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Generate(GenerateArgs),
    /// Cut a CSV into packed fixed mini-batch files.
    Pack(PackArgs),
    /// Run an experiment spec and write its report.
    Run(RunArgs),
    /// Packed versus shuffled read-time benchmark.
    BenchIo(BenchIoArgs),
    /// Print the summary of a finished run.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value = "linear")]
    model: Model,
    /// Preset supplying N, p and the parameter vector.
    #[arg(long, default_value = "desk")]
    scale: Scale,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    /// Common value of every coordinate of the true parameter.
    #[arg(long)]
    coef: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    noise_sd: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct PackArgs {
    #[arg(long)]
    csv: PathBuf,
    /// Rows per mini-batch; must divide N.
    #[arg(long, default_value_t = 100)]
    batch_size: usize,
    /// Seed of the fixed partition.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    scale: Option<Scale>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    spec: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct BenchIoArgs {
    /// Optional spec file; its `[io]` table and `batch_size` are used.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Comma-separated kappa list, N = kappa * rows-per-kappa.
    #[arg(long, value_delimiter = ',')]
    kappas: Option<Vec<usize>>,
    #[arg(long)]
    rows_per_kappa: Option<usize>,
    #[arg(long)]
    io_replications: Option<usize>,
    /// Keep the generated CSVs and packed directories.
    #[arg(long)]
    keep_data: bool,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct ReportArgs {
    /// Output directory of a previous run.
    dir: PathBuf,
}

fn parse_err(e: impl std::fmt::Display) -> LabError {
    LabError::Spec(e.to_string())
}

impl Overrides {
    fn apply(&self, spec: &mut ExperimentSpec) -> Result<()> {
        if let Some(b) = self.replications {
            spec.replications = Some(b);
        }
        if let Some(t) = self.epochs {
            spec.epochs = t;
        }
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        if let Some(w) = self.workers {
            spec.workers = w;
        }
        if let Some(s) = self.scale {
            spec.scale = s;
        }
        if let Some(o) = &self.output {
            spec.output = Some(o.clone());
        }
        spec.validate()
    }
}

fn generate_cmd(a: GenerateArgs) -> Result<()> {
    let mut spec = match a.scale {
        Scale::Desk => DataGenSpec::desk(a.model, a.seed),
        Scale::Full => DataGenSpec::full(a.model, a.seed),
    };
    spec.n_samples = a.n.unwrap_or(spec.n_samples);
    spec.dim = a.p.unwrap_or(spec.dim);
    spec.theta_true = vec![a.coef.unwrap_or(DataGenSpec::preset_coef(a.model)); spec.dim];
    spec.rho = a.rho.unwrap_or(spec.rho);
    spec.noise_sd = a.noise_sd.unwrap_or(spec.noise_sd);
    spec.validate().map_err(parse_err)?;
    let data = generate(&spec)?;
    write_csv(&data, &a.out)?;
    println!("wrote {} rows x {} predictors to {}", data.len(), data.dim(), a.out.display());
    Ok(())
}

fn pack_cmd(a: PackArgs) -> Result<()> {
    let index = RowIndex::build(&a.csv)?;
    let n_total = index.rows();
    if a.batch_size == 0 || n_total % a.batch_size != 0 {
        return Err(LabError::Spec(format!(
            "batch size {} does not divide N = {n_total}",
            a.batch_size
        )));
    }
    let plan = make_fixed(n_total, n_total / a.batch_size, a.seed)?;
    let manifest = pack(&a.csv, &plan, &a.out)?;
    println!(
        "packed {} rows into {} files ({} bytes) under {}",
        manifest.n_total,
        manifest.batches,
        packed_size(&a.out)?,
        a.out.display()
    );
    Ok(())
}

fn finish(spec: &ExperimentSpec, report: &fmgd_lab::ExperimentReport) -> Result<()> {
    let dir = spec.output_dir();
    let files = report.write(spec, &dir)?;
    for note in &report.notes {
        eprintln!("note: {note}");
    }
    for c in &report.cells {
        if c.n_diverged() > 0 {
            eprintln!(
                "warning: {}/{}/{}: {} of {} replications diverged and are left out of the plots",
                c.model,
                c.method,
                c.setting,
                c.n_diverged(),
                c.samples.len()
            );
        }
    }
    println!("wrote {} files to {}", files.len(), dir.display());
    report.check_divergence(spec.max_divergence_fraction)
}

fn run_cmd(a: RunArgs) -> Result<()> {
    let mut spec = ExperimentSpec::load(&a.spec)?;
    a.overrides.apply(&mut spec)?;
    let report = run_experiment(&spec)?;
    finish(&spec, &report)
}

fn bench_io_cmd(a: BenchIoArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(path) => ExperimentSpec::load(path)?,
        None => ExperimentSpec::new(Kind::Io),
    };
    spec.kind = Kind::Io;
    if let Some(k) = a.kappas {
        spec.io.kappas = k;
    }
    if let Some(r) = a.rows_per_kappa {
        spec.io.rows_per_kappa = r;
    }
    if let Some(b) = a.io_replications {
        spec.io.replications = b;
    }
    a.overrides.apply(&mut spec)?;
    let report = run_io_benchmark(&spec, &spec.output_dir().join("data"), a.keep_data)?;
    for kappa in &spec.io.kappas {
        let get = |path, phase| report.timing(*kappa, path, phase).unwrap_or(f64::NAN);
        println!(
            "kappa={kappa:<3} packed {:.4e}s/epoch  shuffled {:.4e}s/epoch  pack {:.4e}s",
            get("packed", "epoch_mean"),
            get("shuffled", "epoch_mean"),
            get("packed", "pack")
        );
    }
    finish(&spec, &report)
}

fn report_cmd(a: ReportArgs) -> Result<()> {
    let read = |name: &str| -> Result<Option<String>> {
        let path = a.dir.join(name);
        match fs::read_to_string(&path) {
            Ok(s) => Ok(Some(s)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(LabError::io(path, e)),
        }
    };
    let manifest = read("run_manifest.json")?
        .ok_or_else(|| LabError::io(a.dir.join("run_manifest.json"), std::io::ErrorKind::NotFound.into()))?;
    let manifest: serde_json::Value = serde_json::from_str(&manifest).map_err(parse_err)?;
    println!(
        "{} ({}), {} replications, seed {}",
        manifest["name"].as_str().unwrap_or("?"),
        manifest["kind"].as_str().unwrap_or("?"),
        manifest["replications"],
        manifest["seed"]
    );
    for name in ["summary.csv", "timings.csv"] {
        if let Some(text) = read(name)? {
            println!("\n{name}");
            print_table(&text);
        }
    }
    Ok(())
}

fn print_table(csv: &str) {
    let rows: Vec<Vec<String>> = csv
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            l.split(',')
                .map(|v| match v.parse::<f64>() {
                    Ok(x) if v.contains('e') => format!("{x:.4}"),
                    _ => v.to_string(),
                })
                .collect()
        })
        .collect();
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|j| rows.iter().filter_map(|r| r.get(j)).map(String::len).max().unwrap_or(0))
        .collect();
    for r in rows {
        let line: Vec<String> = r.iter().zip(&widths).map(|(v, w)| format!("{v:>w$}")).collect();
        println!("{}", line.join("  "));
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate_cmd(a),
        Command::Pack(a) => pack_cmd(a),
        Command::Run(a) => run_cmd(a),
        Command::BenchIo(a) => bench_io_cmd(a),
        Command::Report(a) => report_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
