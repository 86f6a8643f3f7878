//! Learning-rate schedules indexed by epoch `t >= 1`.
//!
//! String form, as accepted by [`Schedule::from_str`](std::str::FromStr):
//!
//! ```text
//! const:c=0.01
//! poly:c=0.2,gamma=0.6
//! exp:c=0.2,gamma=0.9,b=10
//! step:c=0.2,b=10,rule=reciprocal
//! step:c=0.2,b=10,rule=geometric,gamma=0.5
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum StepRule {
    /// `c / k` on stage `k`.
    Reciprocal,
    /// `c gamma^k` on stage `k`.
    Geometric { gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Schedule {
    Constant { c: f64 },
    /// `c t^-gamma`.
    Polynomial { c: f64, gamma: f64 },
    /// `c gamma^(t/b)`, `0 < gamma < 1`.
    Exponential { c: f64, gamma: f64, b: u64 },
    /// Piecewise constant on stages of `b` epochs; stage `k = ceil(t/b)`.
    Stagewise { c: f64, b: u64, rule: StepRule },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Yes,
    No,
    /// Conditions hold except `alpha_1 lambda_max` sits exactly at 1.
    Boundary,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub status: Status,
    pub reason: String,
}

impl Verdict {
    fn new(status: Status, reason: impl Into<String>) -> Self {
        Verdict {
            status,
            reason: reason.into(),
        }
    }
}

impl Schedule {
    pub fn constant(c: f64) -> Result<Self> {
        Schedule::Constant { c }.validated()
    }

    pub fn polynomial(c: f64, gamma: f64) -> Result<Self> {
        Schedule::Polynomial { c, gamma }.validated()
    }

    pub fn exponential(c: f64, gamma: f64, b: u64) -> Result<Self> {
        Schedule::Exponential { c, gamma, b }.validated()
    }

    pub fn stagewise(c: f64, b: u64, rule: StepRule) -> Result<Self> {
        Schedule::Stagewise { c, b, rule }.validated()
    }

    fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.initial_scale();
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::invalid(format!("schedule scale c = {c} must be positive")));
        }
        match *self {
            Schedule::Constant { .. } => Ok(()),
            Schedule::Polynomial { gamma, .. } => {
                if gamma.is_finite() && gamma > 0.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("polynomial gamma = {gamma} must be positive")))
                }
            }
            Schedule::Exponential { gamma, b, .. } => {
                if !(gamma > 0.0 && gamma < 1.0) {
                    Err(Error::invalid(format!("exponential gamma = {gamma} must lie in (0, 1)")))
                } else if b == 0 {
                    Err(Error::invalid("exponential b must be at least 1"))
                } else {
                    Ok(())
                }
            }
            Schedule::Stagewise { b, rule, .. } => {
                if b == 0 {
                    return Err(Error::invalid("stage length b must be at least 1"));
                }
                match rule {
                    StepRule::Geometric { gamma } if !(gamma > 0.0 && gamma < 1.0) => Err(
                        Error::invalid(format!("geometric gamma = {gamma} must lie in (0, 1)")),
                    ),
                    _ => Ok(()),
                }
            }
        }
    }

    fn initial_scale(&self) -> f64 {
        match *self {
            Schedule::Constant { c }
            | Schedule::Polynomial { c, .. }
            | Schedule::Exponential { c, .. }
            | Schedule::Stagewise { c, .. } => c,
        }
    }

    /// Learning rate for epoch `t` (1-based).
    pub fn rate_at(&self, t: u64) -> Result<f64> {
        if t == 0 {
            return Err(Error::invalid("epochs are numbered from 1"));
        }
        let tf = t as f64;
        Ok(match *self {
            Schedule::Constant { c } => c,
            Schedule::Polynomial { c, gamma } => c * tf.powf(-gamma),
            Schedule::Exponential { c, gamma, b } => c * gamma.powf(tf / b as f64),
            Schedule::Stagewise { c, b, rule } => {
                let k = t.div_ceil(b) as f64;
                match rule {
                    StepRule::Reciprocal => c / k,
                    StepRule::Geometric { gamma } => c * gamma.powf(k),
                }
            }
        })
    }

    /// Rates for epochs `1..=epochs`.
    pub fn rates(&self, epochs: u64) -> Result<Vec<f64>> {
        (1..=epochs).map(|t| self.rate_at(t)).collect()
    }

    /// Whether the schedule meets the diminishing-rate conditions
    /// (`sum alpha_t = inf`, `sum alpha_t^2 < inf`, `alpha_1 < 1/lambda_max`).
    pub fn diminishing_conditions(&self, lambda_max: f64) -> Verdict {
        if let Err(e) = self.validate() {
            return Verdict::new(Status::No, e.to_string());
        }
        let series = match *self {
            Schedule::Constant { .. } => Err("constant rate: sum of alpha_t^2 diverges"),
            Schedule::Polynomial { gamma, .. } if gamma <= 0.5 => {
                Err("polynomial with gamma <= 1/2: sum of alpha_t^2 diverges")
            }
            Schedule::Polynomial { gamma, .. } if gamma > 1.0 => {
                Err("polynomial with gamma > 1: sum of alpha_t is finite")
            }
            Schedule::Polynomial { .. } => Ok(()),
            Schedule::Exponential { .. } => Err("exponential decay: sum of alpha_t is finite"),
            Schedule::Stagewise {
                rule: StepRule::Reciprocal,
                ..
            } => Ok(()),
            Schedule::Stagewise {
                rule: StepRule::Geometric { .. },
                ..
            } => Err("geometric stages: sum of alpha_t is finite"),
        };
        if let Err(reason) = series {
            return Verdict::new(Status::No, reason);
        }
        let a1 = self.initial_rate();
        let product = a1 * lambda_max;
        if product < 1.0 {
            Verdict::new(Status::Yes, format!("alpha_1 lambda_max = {product} < 1"))
        } else if product == 1.0 {
            Verdict::new(Status::Boundary, "alpha_1 lambda_max = 1 exactly")
        } else {
            Verdict::new(Status::No, format!("alpha_1 lambda_max = {product} >= 1"))
        }
    }

    fn initial_rate(&self) -> f64 {
        self.rate_at(1).unwrap_or(f64::NAN)
    }
}

fn parse_params(body: &str) -> Result<BTreeMap<&str, &str>> {
    body.split(',')
        .filter(|kv| !kv.trim().is_empty())
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::invalid(format!("expected key=value, got {kv:?}")))
        })
        .collect()
}

fn take<T: FromStr>(params: &mut BTreeMap<&str, &str>, key: &str) -> Result<T> {
    let raw = params
        .remove(key)
        .ok_or_else(|| Error::invalid(format!("missing schedule parameter {key:?}")))?;
    raw.parse()
        .map_err(|_| Error::invalid(format!("bad value {raw:?} for {key:?}")))
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, body) = s.split_once(':').unwrap_or((s, ""));
        let mut params = parse_params(body)?;
        let c = take(&mut params, "c")?;
        let sched = match kind.trim() {
            "const" | "constant" => Schedule::Constant { c },
            "poly" | "polynomial" => Schedule::Polynomial {
                c,
                gamma: take(&mut params, "gamma")?,
            },
            "exp" | "exponential" => Schedule::Exponential {
                c,
                gamma: take(&mut params, "gamma")?,
                b: take(&mut params, "b")?,
            },
            "step" | "stagewise" => {
                let b = take(&mut params, "b")?;
                let rule = match params.remove("rule") {
                    Some("reciprocal") | None => StepRule::Reciprocal,
                    Some("geometric") => StepRule::Geometric {
                        gamma: take(&mut params, "gamma")?,
                    },
                    Some(other) => {
                        return Err(Error::invalid(format!("unknown stage rule {other:?}")))
                    }
                };
                Schedule::Stagewise { c, b, rule }
            }
            other => return Err(Error::invalid(format!("unknown schedule {other:?}"))),
        };
        if let Some(extra) = params.keys().next() {
            return Err(Error::invalid(format!("unexpected schedule parameter {extra:?}")));
        }
        sched.validated()
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Schedule::Constant { c } => write!(f, "const:c={c}"),
            Schedule::Polynomial { c, gamma } => write!(f, "poly:c={c},gamma={gamma}"),
            Schedule::Exponential { c, gamma, b } => write!(f, "exp:c={c},gamma={gamma},b={b}"),
            Schedule::Stagewise {
                c,
                b,
                rule: StepRule::Reciprocal,
            } => write!(f, "step:c={c},b={b},rule=reciprocal"),
            Schedule::Stagewise {
                c,
                b,
                rule: StepRule::Geometric { gamma },
            } => write!(f, "step:c={c},b={b},rule=geometric,gamma={gamma}"),
        }
    }
}
