//! Experiment spec files.
//!
//! A spec is a TOML document. Every key has a default, so the smallest valid
//! spec names only the experiment kind:
//!
//! ```toml
//! kind = "case2"
//! ```
//!
//! The full schema, with defaults:
//!
//! ```toml
//! name = "case2"                     # defaults to the kind
//! kind = "case2"                     # case1 | case2 | convergence | general-loss | io
//! scale = "desk"                     # desk (N=2000, p=20) | full (N=5000, p=50)
//! replications = 50                  # defaults to 50 at desk scale, 200 at full scale
//! epochs = 100
//! batch_size = 100                   # n; M = N / n
//! seed = 20240601
//! workers = 0                        # 0 uses every core
//! methods = ["fmgd", "sfmgd", "smgd"]
//! alphas = [0.2, 0.1, 0.05, 0.01]    # case1
//! gammas = [0.1, 0.2, ..., 1.0]      # case2, general-loss
//! c_alpha = 0.2                      # alpha_t = c_alpha * t^-gamma
//! models = ["logistic", "poisson"]   # general-loss; case1/case2/convergence are linear
//! output = "out/<name>"
//! max_divergence_fraction = 0.1
//!
//! [data]                             # optional overrides of the preset
//! n_samples = 2000
//! dim = 20
//! rho = 0.5
//! noise_sd = 1.0
//! coef = 1.0
//!
//! [io]
//! kappas = [1, 2, 5, 10]             # N = kappa * rows_per_kappa
//! rows_per_kappa = 10000
//! dim = 20
//! replications = 20
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fmgd::datagen::{DataGenSpec, Model};
use fmgd::engine::Method;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Case1,
    Case2,
    Convergence,
    GeneralLoss,
    Io,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Case1 => "case1",
            Kind::Case2 => "case2",
            Kind::Convergence => "convergence",
            Kind::GeneralLoss => "general-loss",
            Kind::Io => "io",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Kind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "case1" => Ok(Kind::Case1),
            "case2" => Ok(Kind::Case2),
            "convergence" => Ok(Kind::Convergence),
            "general-loss" => Ok(Kind::GeneralLoss),
            "io" => Ok(Kind::Io),
            other => Err(LabError::Spec(format!("unknown experiment kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Desk,
    Full,
}

impl Scale {
    pub fn default_replications(self) -> usize {
        match self {
            Scale::Desk => 50,
            Scale::Full => 200,
        }
    }

    pub fn preset(self, model: Model, seed: u64) -> DataGenSpec {
        match self {
            Scale::Desk => DataGenSpec::desk(model, seed),
            Scale::Full => DataGenSpec::full(model, seed),
        }
    }
}

impl FromStr for Scale {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "full" => Ok(Scale::Full),
            other => Err(LabError::Spec(format!("unknown scale {other:?}"))),
        }
    }
}

/// Optional overrides applied on top of the scale preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataOverride {
    pub n_samples: Option<usize>,
    pub dim: Option<usize>,
    pub rho: Option<f64>,
    pub noise_sd: Option<f64>,
    pub coef: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoSpec {
    pub kappas: Vec<usize>,
    pub rows_per_kappa: usize,
    pub dim: usize,
    pub replications: usize,
}

impl Default for IoSpec {
    fn default() -> Self {
        IoSpec {
            kappas: vec![1, 2, 5, 10],
            rows_per_kappa: 10_000,
            dim: 20,
            replications: 20,
        }
    }
}

fn method_list() -> Vec<Method> {
    Method::MINI_BATCH.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: Option<String>,
    pub kind: Kind,
    pub scale: Scale,
    pub replications: Option<usize>,
    pub epochs: u64,
    pub batch_size: usize,
    pub seed: u64,
    pub workers: usize,
    pub methods: Vec<Method>,
    pub alphas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub c_alpha: f64,
    pub models: Vec<Model>,
    pub output: Option<PathBuf>,
    pub max_divergence_fraction: f64,
    pub data: DataOverride,
    pub io: IoSpec,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            name: None,
            kind: Kind::Case1,
            scale: Scale::Desk,
            replications: None,
            epochs: 100,
            batch_size: 100,
            seed: 20_240_601,
            workers: 0,
            methods: method_list(),
            alphas: vec![0.2, 0.1, 0.05, 0.01],
            gammas: (1..=10).map(|k| k as f64 / 10.0).collect(),
            c_alpha: 0.2,
            models: vec![Model::Logistic, Model::Poisson],
            output: None,
            max_divergence_fraction: 0.1,
            data: DataOverride::default(),
            io: IoSpec::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn new(kind: Kind) -> Self {
        ExperimentSpec {
            kind,
            ..Default::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| LabError::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            LabError::Spec(msg) => LabError::Spec(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.kind.to_string())
    }

    pub fn replications(&self) -> usize {
        self.replications.unwrap_or_else(|| self.scale.default_replications())
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output
            .clone()
            .unwrap_or_else(|| Path::new("out").join(self.name()))
    }

    /// Models the experiment runs on.
    pub fn models(&self) -> Vec<Model> {
        match self.kind {
            Kind::GeneralLoss => self.models.clone(),
            _ => vec![Model::Linear],
        }
    }

    /// Data-generation spec for `model` under the scale preset and overrides.
    pub fn data_spec(&self, model: Model, seed: u64) -> DataGenSpec {
        let mut d = self.scale.preset(model, seed);
        if let Some(n) = self.data.n_samples {
            d.n_samples = n;
        }
        if let Some(p) = self.data.dim {
            d.dim = p;
        }
        let coef = self.data.coef.unwrap_or(DataGenSpec::preset_coef(model));
        d.theta_true = vec![coef; d.dim];
        if let Some(rho) = self.data.rho {
            d.rho = rho;
        }
        if let Some(sd) = self.data.noise_sd {
            d.noise_sd = sd;
        }
        d
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LabError::Spec(msg));
        if self.replications() == 0 {
            return bad("replications must be at least 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.max_divergence_fraction) {
            return bad(format!(
                "max_divergence_fraction {} outside [0, 1]",
                self.max_divergence_fraction
            ));
        }
        match self.kind {
            Kind::Io => {
                if self.io.kappas.is_empty() || self.io.kappas.contains(&0) {
                    return bad("io.kappas must be a non-empty list of positive integers".into());
                }
                if self.io.replications == 0 || self.io.dim == 0 || self.io.rows_per_kappa == 0 {
                    return bad("io.replications, io.dim and io.rows_per_kappa must be positive".into());
                }
                if self.io.rows_per_kappa % self.batch_size != 0 {
                    return bad(format!(
                        "batch_size {} does not divide io.rows_per_kappa {}",
                        self.batch_size, self.io.rows_per_kappa
                    ));
                }
                return Ok(());
            }
            Kind::Case1 => {
                if self.alphas.is_empty() || self.alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
                    return bad("alphas must be a non-empty list of positive rates".into());
                }
            }
            Kind::Case2 | Kind::GeneralLoss => {
                if self.gammas.is_empty() || self.gammas.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
                    return bad("gammas must be a non-empty list of non-negative exponents".into());
                }
            }
            Kind::Convergence => {}
        }
        if !(self.c_alpha > 0.0 && self.c_alpha.is_finite()) {
            return bad(format!("c_alpha {} must be positive", self.c_alpha));
        }
        if self.methods.is_empty() {
            return bad("methods must not be empty".into());
        }
        if self.kind == Kind::GeneralLoss && (self.models.is_empty() || self.models.contains(&Model::Linear)) {
            return bad("general-loss models must be a non-empty subset of [logistic, poisson]".into());
        }
        for model in self.models() {
            let d = self.data_spec(model, self.seed);
            d.validate().map_err(|e| LabError::Spec(e.to_string()))?;
            if d.n_samples % self.batch_size != 0 {
                return bad(format!(
                    "batch_size {} does not divide N = {}",
                    self.batch_size, d.n_samples
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_spec_takes_defaults() {
        let spec = ExperimentSpec::from_toml("kind = \"case2\"").unwrap();
        assert_eq!(spec.kind, Kind::Case2);
        assert_eq!(spec.replications(), 50);
        assert_eq!(spec.gammas.len(), 10);
        assert_eq!(spec.output_dir(), Path::new("out/case2"));
    }

    #[test]
    fn full_scale_defaults_to_200_replications() {
        let spec = ExperimentSpec::from_toml("kind = \"case1\"\nscale = \"full\"").unwrap();
        assert_eq!(spec.replications(), 200);
        assert_eq!(spec.data_spec(Model::Linear, 1).dim, 50);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ExperimentSpec::from_toml("kind = \"case1\"\nbogus = 1").is_err());
        assert!(ExperimentSpec::from_toml("kind = \"nope\"").is_err());
        assert!(ExperimentSpec::from_toml("kind = \"case1\"\nreplications = 0").is_err());
        assert!(ExperimentSpec::from_toml("kind = \"case1\"\nbatch_size = 7").is_err());
        assert!(ExperimentSpec::from_toml("kind = \"general-loss\"\nmodels = [\"linear\"]").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut spec = ExperimentSpec::new(Kind::GeneralLoss);
        spec.data.n_samples = Some(1000);
        let back = ExperimentSpec::from_toml(&spec.to_toml()).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn overrides_apply_to_preset() {
        let mut spec = ExperimentSpec::new(Kind::Case1);
        spec.data.dim = Some(5);
        spec.data.coef = Some(2.0);
        let d = spec.data_spec(Model::Linear, 3);
        assert_eq!(d.theta_true, vec![2.0; 5]);
        assert_eq!(d.n_samples, 2000);
    }
}
