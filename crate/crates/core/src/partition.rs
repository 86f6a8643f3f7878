//! Mini-batch index plans.
//!
//! Row indices are zero-based. Fixed and shuffled plans are disjoint covers of
//! `0..N` cut sequentially from a seeded Fisher–Yates permutation; sampled
//! plans draw each index uniformly with replacement.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Fixed,
    Shuffled,
    Sampled,
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(Regime::Fixed),
            "shuffled" => Ok(Regime::Shuffled),
            "sampled" => Ok(Regime::Sampled),
            other => Err(Error::invalid(format!("unknown regime {other:?}"))),
        }
    }
}

impl Regime {
    fn as_str(self) -> &'static str {
        match self {
            Regime::Fixed => "fixed",
            Regime::Shuffled => "shuffled",
            Regime::Sampled => "sampled",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPlan {
    pub batches: Vec<Vec<usize>>,
    pub regime: Regime,
    pub seed: u64,
    /// Epoch the plan was drawn for; always 0 for fixed plans.
    pub epoch: u64,
}

fn check_divisible(n_total: usize, m: usize) -> Result<usize> {
    if m == 0 || n_total == 0 {
        return Err(Error::invalid("need N >= 1 and M >= 1"));
    }
    if n_total % m != 0 {
        return Err(Error::invalid(format!(
            "M = {m} does not divide N = {n_total}; batch size n = N/M must be an integer"
        )));
    }
    Ok(n_total / m)
}

fn cut(perm: Vec<usize>, n: usize) -> Vec<Vec<usize>> {
    perm.chunks_exact(n).map(<[usize]>::to_vec).collect()
}

fn permutation(n_total: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n_total).collect();
    perm.shuffle(&mut rng::stream(seed, 0));
    perm
}

/// One seeded shuffle of `0..N` cut into `M` blocks; the same plan serves every epoch.
pub fn make_fixed(n_total: usize, m: usize, seed: u64) -> Result<PartitionPlan> {
    let n = check_divisible(n_total, m)?;
    let perm = permutation(n_total, rng::mix_seed(seed, streams::FIXED_PLAN));
    Ok(PartitionPlan {
        batches: cut(perm, n),
        regime: Regime::Fixed,
        seed,
        epoch: 0,
    })
}

/// Fresh disjoint cover for each epoch, seeded by `(seed, epoch)`.
pub fn make_shuffled(n_total: usize, m: usize, seed: u64, epoch: u64) -> Result<PartitionPlan> {
    let n = check_divisible(n_total, m)?;
    let epoch_seed = rng::mix_seed(rng::mix_seed(seed, streams::SHUFFLED_PLAN), epoch);
    Ok(PartitionPlan {
        batches: cut(permutation(n_total, epoch_seed), n),
        regime: Regime::Shuffled,
        seed,
        epoch,
    })
}

/// `M` batches of `n` indices drawn uniformly with replacement.
pub fn make_sampled(
    n_total: usize,
    m: usize,
    n: usize,
    seed: u64,
    epoch: u64,
) -> Result<PartitionPlan> {
    if n_total == 0 || m == 0 || n == 0 {
        return Err(Error::invalid("need N >= 1, M >= 1 and n >= 1"));
    }
    let mut rng = rng::stream(
        rng::mix_seed(seed, streams::SAMPLED_PLAN),
        epoch,
    );
    let batches = (0..m)
        .map(|_| (0..n).map(|_| rng.random_range(0..n_total)).collect())
        .collect();
    Ok(PartitionPlan {
        batches,
        regime: Regime::Sampled,
        seed,
        epoch,
    })
}

impl PartitionPlan {
    pub fn num_batches(&self) -> usize {
        self.batches.len()
    }

    pub fn batch_size(&self) -> usize {
        self.batches.first().map_or(0, Vec::len)
    }

    pub fn total_len(&self) -> usize {
        self.batches.iter().map(Vec::len).sum()
    }

    /// Checks that the batches are equal-sized and, for fixed and shuffled
    /// plans, form a disjoint cover of `0..n_total`.
    pub fn validate(&self, n_total: usize) -> Result<()> {
        let n = self.batch_size();
        if n == 0 || self.batches.iter().any(|b| b.len() != n) {
            return Err(Error::invalid("batches must be non-empty and of equal size"));
        }
        if self.batches.iter().flatten().any(|&i| i >= n_total) {
            return Err(Error::invalid("index out of range"));
        }
        if self.regime != Regime::Sampled {
            let mut seen = vec![false; n_total];
            for &i in self.batches.iter().flatten() {
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::invalid(format!("index {i} appears twice")));
                }
            }
            if seen.iter().any(|s| !s) {
                return Err(Error::invalid("batches do not cover every row"));
            }
        }
        Ok(())
    }

    /// Audit manifest: a `#` header line, then one line of comma-separated
    /// indices per batch.
    pub fn to_manifest(&self) -> String {
        let mut out = format!(
            "# regime={} seed={} epoch={} batches={}\n",
            self.regime.as_str(),
            self.seed,
            self.epoch,
            self.batches.len()
        );
        for b in &self.batches {
            let mut first = true;
            for i in b {
                if !first {
                    out.push(',');
                }
                first = false;
                let _ = write!(out, "{i}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_manifest(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .and_then(|h| h.strip_prefix("# "))
            .ok_or_else(|| Error::Manifest("missing plan header".into()))?;
        let mut regime = None;
        let mut seed = None;
        let mut epoch = None;
        for kv in header.split_whitespace() {
            match kv.split_once('=') {
                Some(("regime", v)) => regime = Some(v.parse()?),
                Some(("seed", v)) => seed = v.parse().ok(),
                Some(("epoch", v)) => epoch = v.parse().ok(),
                _ => {}
            }
        }
        let batches = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split(',')
                    .map(|v| v.trim().parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::Manifest(format!("bad index: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PartitionPlan {
            batches,
            regime: regime.ok_or_else(|| Error::Manifest("missing regime".into()))?,
            seed: seed.ok_or_else(|| Error::Manifest("missing seed".into()))?,
            epoch: epoch.ok_or_else(|| Error::Manifest("missing epoch".into()))?,
        })
    }
}
