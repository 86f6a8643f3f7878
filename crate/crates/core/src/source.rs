//! The narrow interface through which the engine pulls mini-batches, so
//! in-memory data and on-disk stores are interchangeable.

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::partition::PartitionPlan;
use crate::tensor::Mat;

/// Rows of one mini-batch, in plan order.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: Mat,
    pub y: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }
}

pub trait DataSource {
    /// Total number of rows N.
    fn len(&self) -> usize;

    /// Number of predictors p.
    fn dim(&self) -> usize;

    /// Rows of batch `m` (zero-based) of `plan`.
    fn fetch(&mut self, plan: &PartitionPlan, m: usize) -> Result<Batch>;
}

pub struct InMemory<'a> {
    data: &'a Dataset,
}

impl<'a> InMemory<'a> {
    pub fn new(data: &'a Dataset) -> Self {
        InMemory { data }
    }
}

/// Copies rows `idx` of `data` into a batch.
pub fn gather(data: &Dataset, idx: &[usize]) -> Result<Batch> {
    if idx.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let p = data.dim();
    let mut x = Vec::with_capacity(idx.len() * p);
    let mut y = Vec::with_capacity(idx.len());
    for &i in idx {
        if i >= data.len() {
            return Err(Error::invalid(format!("row {i} out of range (N = {})", data.len())));
        }
        x.extend_from_slice(data.x.row(i));
        y.push(data.y[i]);
    }
    Ok(Batch {
        x: Mat::from_raw(idx.len(), p, x),
        y,
    })
}

impl DataSource for InMemory<'_> {
    fn len(&self) -> usize {
        self.data.len()
    }

    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn fetch(&mut self, plan: &PartitionPlan, m: usize) -> Result<Batch> {
        let idx = plan
            .batches
            .get(m)
            .ok_or_else(|| Error::invalid(format!("batch {m} not in plan")))?;
        gather(self.data, idx)
    }
}
