//! Synthetic regression data: Gaussian AR(1) designs with linear, logistic or
//! Poisson responses, plus CSV export and import.
//!
//! The CSV layout is a header row `x1,...,xp,y` followed by one row per sample,
//! every value written with 17 significant digits so that float64 values
//! survive the round trip exactly.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, streams, NormalSampler};
use crate::tensor::{cholesky, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Linear,
    Logistic,
    Poisson,
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(Model::Linear),
            "logistic" => Ok(Model::Logistic),
            "poisson" => Ok(Model::Poisson),
            other => Err(Error::invalid(format!("unknown model tag {other:?}"))),
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Linear => "linear",
            Model::Logistic => "logistic",
            Model::Poisson => "poisson",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataGenSpec {
    pub n_samples: usize,
    pub dim: usize,
    pub model: Model,
    pub theta_true: Vec<f64>,
    /// Noise standard deviation; only used by the linear model.
    pub noise_sd: f64,
    /// AR(1) decay base of the design covariance.
    pub rho: f64,
    pub seed: u64,
}

impl DataGenSpec {
    pub fn new(n_samples: usize, dim: usize, model: Model, coef: f64, seed: u64) -> Self {
        DataGenSpec {
            n_samples,
            dim,
            model,
            theta_true: vec![coef; dim],
            noise_sd: 1.0,
            rho: 0.5,
            seed,
        }
    }

    /// Desk-scale preset: N = 2000, p = 20.
    pub fn desk(model: Model, seed: u64) -> Self {
        Self::new(2000, 20, model, Self::preset_coef(model), seed)
    }

    /// Full-scale preset: N = 5000, p = 50.
    pub fn full(model: Model, seed: u64) -> Self {
        Self::new(5000, 50, model, Self::preset_coef(model), seed)
    }

    /// Common coefficient of the preset parameter vector: 1 for linear, 0.1 for
    /// logistic and 0.02 for Poisson, which keeps `exp(x'theta)` moderate.
    pub fn preset_coef(model: Model) -> f64 {
        match model {
            Model::Linear => 1.0,
            Model::Logistic => 0.1,
            Model::Poisson => 0.02,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.dim == 0 {
            return Err(Error::invalid("need at least one sample and one predictor"));
        }
        if self.theta_true.len() != self.dim {
            return Err(Error::dims(format!(
                "theta_true has length {} but p = {}",
                self.theta_true.len(),
                self.dim
            )));
        }
        if self.model == Model::Linear && !(self.noise_sd > 0.0) {
            return Err(Error::invalid("noise_sd must be positive for the linear model"));
        }
        check_rho(self.rho)
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if (0.0..1.0).contains(&rho) {
        Ok(())
    } else {
        Err(Error::invalid(format!("AR decay base {rho} outside [0, 1)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Mat,
    pub y: Vec<f64>,
    /// Generating spec; `None` for data loaded from disk.
    pub spec: Option<DataGenSpec>,
}

impl Dataset {
    pub fn new(x: Mat, y: Vec<f64>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::dims(format!("{} design rows but {} responses", x.rows(), y.len())));
        }
        Ok(Dataset { x, y, spec: None })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn theta_true(&self) -> Option<&[f64]> {
        self.spec.as_ref().map(|s| s.theta_true.as_slice())
    }
}

/// `Sigma_{ij} = rho^|i-j|`.
pub fn make_ar_covariance(p: usize, rho: f64) -> Result<Mat> {
    if p == 0 {
        return Err(Error::invalid("p must be at least 1"));
    }
    check_rho(rho)?;
    let mut data = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            data[i * p + j] = rho.powi((i as i32 - j as i32).abs());
        }
    }
    Mat::from_vec(p, p, data)
}

/// N rows drawn i.i.d. from `N(0, sigma)` as `L z` with `L` the Cholesky factor.
pub fn sample_design(n_samples: usize, sigma: &Mat, seed: u64) -> Result<Mat> {
    let l = cholesky(sigma)?;
    let p = sigma.rows();
    let mut rng = rng::stream(seed, streams::DESIGN);
    let mut normal = NormalSampler::new();
    let mut z = vec![0.0; p];
    let mut data = Vec::with_capacity(n_samples * p);
    for _ in 0..n_samples {
        z.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
        for i in 0..p {
            let li = &l.row(i)[..=i];
            data.push(li.iter().zip(&z).map(|(a, b)| a * b).sum());
        }
    }
    Mat::from_vec(n_samples, p, data)
}

/// Responses for a given design according to `spec.model`.
pub fn gen_response(x: &Mat, spec: &DataGenSpec) -> Result<Vec<f64>> {
    if spec.theta_true.len() != x.cols() {
        return Err(Error::dims("theta_true length differs from design width"));
    }
    let mut rng = rng::stream(spec.seed, streams::RESPONSE);
    let mut normal = NormalSampler::new();
    let mut y = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let eta: f64 = x.row(i).iter().zip(&spec.theta_true).map(|(a, b)| a * b).sum();
        let yi = match spec.model {
            Model::Linear => eta + spec.noise_sd * normal.sample(&mut rng),
            Model::Logistic => {
                let prob = crate::losses::sigmoid(eta);
                if rng.random::<f64>() < prob {
                    1.0
                } else {
                    0.0
                }
            }
            Model::Poisson => {
                let mean = eta.exp();
                if !mean.is_finite() {
                    return Err(Error::Divergence(format!("poisson mean exp({eta}) overflows")));
                }
                rng::poisson(&mut rng, mean) as f64
            }
        };
        y.push(yi);
    }
    Ok(y)
}

/// Design and response for a spec. Identical specs give identical datasets.
pub fn generate(spec: &DataGenSpec) -> Result<Dataset> {
    spec.validate()?;
    let sigma = make_ar_covariance(spec.dim, spec.rho)?;
    let x = sample_design(spec.n_samples, &sigma, spec.seed)?;
    let y = gen_response(&x, spec)?;
    Ok(Dataset {
        x,
        y,
        spec: Some(spec.clone()),
    })
}

pub fn write_csv(data: &Dataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_csv_to(data, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_csv_to<W: Write>(data: &Dataset, w: &mut W) -> Result<()> {
    let p = data.dim();
    let header: Vec<String> = (1..=p).map(|j| format!("x{j}")).chain(["y".to_string()]).collect();
    writeln!(w, "{}", header.join(","))?;
    let mut line = String::new();
    for i in 0..data.len() {
        line.clear();
        for v in data.x.row(i).iter().chain(std::iter::once(&data.y[i])) {
            if !line.is_empty() {
                line.push(',');
            }
            line.push_str(&format_value(*v));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// 17 significant digits, enough for a lossless float64 round trip.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Parses one data row of `expected` comma-separated numbers into `out`.
pub(crate) fn parse_row(
    line: &str,
    expected: usize,
    out: &mut Vec<f64>,
) -> std::result::Result<(), String> {
    let start = out.len();
    for field in line.trim_end_matches(['\r', '\n']).split(',') {
        let v: f64 = field
            .trim()
            .parse()
            .map_err(|_| format!("cannot parse {field:?} as a number"))?;
        if !v.is_finite() {
            return Err(format!("non-finite value {field:?}"));
        }
        out.push(v);
    }
    let got = out.len() - start;
    if got != expected {
        out.truncate(start);
        return Err(format!("expected {expected} values, found {got}"));
    }
    Ok(())
}

/// Reads a dataset written by [`write_csv`] (or any CSV with a header and the
/// response in the last column).
pub fn read_csv(path: &Path) -> Result<Dataset> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines.next().transpose()?.ok_or_else(|| Error::Csv {
        path: path.to_path_buf(),
        line: 1,
        message: "empty file".into(),
    })?;
    let width = header.split(',').count();
    if width < 2 {
        return Err(Error::Csv {
            path: path.to_path_buf(),
            line: 1,
            message: "need at least one predictor and a response".into(),
        });
    }
    let mut values = Vec::new();
    let mut rows = 0usize;
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        parse_row(&line, width, &mut values).map_err(|message| Error::Csv {
            path: path.to_path_buf(),
            line: k + 2,
            message,
        })?;
        rows += 1;
    }
    let p = width - 1;
    let mut x = Vec::with_capacity(rows * p);
    let mut y = Vec::with_capacity(rows);
    for row in values.chunks_exact(width) {
        x.extend_from_slice(&row[..p]);
        y.push(row[p]);
    }
    Dataset::new(Mat::from_vec(rows, p, x)?, y)
}
