//! On-disk mini-batches.
//!
//! [`pack`] writes each batch of a fixed plan to its own file so an epoch is M
//! sequential reads. [`ShuffledCsv`] is the alternative: every batch is
//! assembled by seeking to its rows in the original CSV.
//!
//! Batch file format: the batch's rows in plan order, each row the p predictor
//! values followed by the response, every value a little-endian IEEE-754
//! float64. A file therefore holds exactly `n (p + 1) 8` bytes. The directory
//! also holds `manifest.json` (see [`PackManifest`]); the plan itself is not
//! stored but regenerated from its seed.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant, SystemTime};

use serde::{Deserialize, Serialize};

use crate::datagen::{parse_row, read_csv, Dataset};
use crate::error::{Error, Result};
use crate::partition::{make_fixed, PartitionPlan, Regime};
use crate::source::{Batch, DataSource};
use crate::tensor::Mat;

pub const MANIFEST_NAME: &str = "manifest.json";
pub const FORMAT: &str = "f64-le-row-major-x-then-y";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchFile {
    pub name: String,
    pub bytes: u64,
    pub crc32: u32,
    /// Offset of this batch in the concatenation of all batch files.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackManifest {
    pub format: String,
    pub n_total: usize,
    pub batches: usize,
    pub batch_size: usize,
    pub dim: usize,
    /// Seed of the fixed plan the files were cut from.
    pub plan_seed: u64,
    pub files: Vec<BatchFile>,
}

impl PackManifest {
    pub fn row_bytes(&self) -> u64 {
        (self.dim as u64 + 1) * 8
    }

    pub fn batch_bytes(&self) -> u64 {
        self.batch_size as u64 * self.row_bytes()
    }

    fn validate(&self) -> Result<()> {
        if self.format != FORMAT {
            return Err(Error::Manifest(format!("unknown format {:?}", self.format)));
        }
        if self.batches * self.batch_size != self.n_total || self.files.len() != self.batches {
            return Err(Error::Manifest(format!(
                "{} files for M = {}, n = {}, N = {}",
                self.files.len(),
                self.batches,
                self.batch_size,
                self.n_total
            )));
        }
        for (m, f) in self.files.iter().enumerate() {
            if f.bytes != self.batch_bytes() || f.offset != m as u64 * self.batch_bytes() {
                return Err(Error::Manifest(format!("inconsistent size or offset for {}", f.name)));
            }
            if Path::new(&f.name).components().count() != 1 {
                return Err(Error::Manifest(format!("file name {:?} is not a plain name", f.name)));
            }
        }
        Ok(())
    }
}

fn batch_file_name(m: usize) -> String {
    format!("batch_{m:06}.bin")
}

fn encode_batch(data: &Dataset, idx: &[usize]) -> Vec<u8> {
    let p = data.dim();
    let mut out = Vec::with_capacity(idx.len() * (p + 1) * 8);
    for &i in idx {
        for v in data.x.row(i).iter().chain(std::iter::once(&data.y[i])) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn decode_batch(bytes: &[u8], n: usize, p: usize) -> Result<Batch> {
    if bytes.len() != n * (p + 1) * 8 {
        return Err(Error::Manifest(format!(
            "batch holds {} bytes, expected {}",
            bytes.len(),
            n * (p + 1) * 8
        )));
    }
    let mut x = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    for (k, chunk) in bytes.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        if k % (p + 1) == p {
            y.push(v);
        } else {
            x.push(v);
        }
    }
    Ok(Batch {
        x: Mat::from_vec(n, p, x)?,
        y,
    })
}

/// Writes the batches of a fixed `plan` over `data` into `out_dir`.
pub fn pack_dataset(data: &Dataset, plan: &PartitionPlan, out_dir: &Path) -> Result<PackManifest> {
    if plan.regime != Regime::Fixed {
        return Err(Error::invalid("only fixed plans can be packed"));
    }
    plan.validate(data.len())?;
    if *plan != make_fixed(data.len(), plan.num_batches(), plan.seed)? {
        return Err(Error::invalid("plan must be the seeded fixed plan so it can be regenerated"));
    }
    fs::create_dir_all(out_dir)?;
    let mut files = Vec::with_capacity(plan.num_batches());
    let mut offset = 0;
    for (m, idx) in plan.batches.iter().enumerate() {
        let bytes = encode_batch(data, idx);
        let name = batch_file_name(m);
        fs::write(out_dir.join(&name), &bytes)?;
        files.push(BatchFile {
            name,
            bytes: bytes.len() as u64,
            crc32: crc32fast::hash(&bytes),
            offset,
        });
        offset += bytes.len() as u64;
    }
    let manifest = PackManifest {
        format: FORMAT.to_string(),
        n_total: data.len(),
        batches: plan.num_batches(),
        batch_size: plan.batch_size(),
        dim: data.dim(),
        plan_seed: plan.seed,
        files,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Manifest(e.to_string()))?;
    fs::write(out_dir.join(MANIFEST_NAME), json)?;
    Ok(manifest)
}

/// Reads the CSV once and packs it.
pub fn pack(csv: &Path, plan: &PartitionPlan, out_dir: &Path) -> Result<PackManifest> {
    pack_dataset(&read_csv(csv)?, plan, out_dir)
}

/// Total bytes of the packed directory (batch files plus manifest).
pub fn packed_size(dir: &Path) -> Result<u64> {
    let manifest = read_manifest(dir)?;
    let mut total = fs::metadata(dir.join(MANIFEST_NAME))?.len();
    for f in &manifest.files {
        total += fs::metadata(dir.join(&f.name))?.len();
    }
    Ok(total)
}

fn read_manifest(dir: &Path) -> Result<PackManifest> {
    let text = fs::read_to_string(dir.join(MANIFEST_NAME))?;
    let manifest: PackManifest = serde_json::from_str(&text).map_err(|e| Error::Manifest(e.to_string()))?;
    manifest.validate()?;
    Ok(manifest)
}

/// Read timings for one epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IoTiming {
    pub epoch: Duration,
    pub batches: Vec<Duration>,
    pub bytes_read: u64,
}

pub struct PackedStore {
    dir: PathBuf,
    manifest: PackManifest,
    plan: PartitionPlan,
    timing: IoTiming,
}

impl PackedStore {
    /// Opens a packed directory, verifying every file's size and checksum.
    pub fn open(dir: &Path) -> Result<Self> {
        let manifest = read_manifest(dir)?;
        for f in &manifest.files {
            let path = dir.join(&f.name);
            let bytes = fs::read(&path)?;
            if bytes.len() as u64 != f.bytes || crc32fast::hash(&bytes) != f.crc32 {
                return Err(Error::Checksum(path));
            }
        }
        let plan = make_fixed(manifest.n_total, manifest.batches, manifest.plan_seed)?;
        Ok(PackedStore {
            dir: dir.to_path_buf(),
            manifest,
            plan,
            timing: IoTiming::default(),
        })
    }

    pub fn manifest(&self) -> &PackManifest {
        &self.manifest
    }

    /// The fixed plan the files were cut from.
    pub fn plan(&self) -> &PartitionPlan {
        &self.plan
    }

    /// Sequential read of batch `m` (zero-based).
    pub fn read_batch(&mut self, m: usize) -> Result<Batch> {
        let f = self
            .manifest
            .files
            .get(m)
            .ok_or_else(|| Error::invalid(format!("batch {m} not in store (M = {})", self.manifest.batches)))?;
        let path = self.dir.join(&f.name);
        let start = Instant::now();
        let mut bytes = Vec::with_capacity(f.bytes as usize);
        File::open(&path)?.read_to_end(&mut bytes)?;
        if crc32fast::hash(&bytes) != f.crc32 {
            return Err(Error::Checksum(path));
        }
        let batch = decode_batch(&bytes, self.manifest.batch_size, self.manifest.dim)?;
        let elapsed = start.elapsed();
        self.timing.batches.push(elapsed);
        self.timing.epoch += elapsed;
        self.timing.bytes_read += bytes.len() as u64;
        Ok(batch)
    }

    /// Timings accumulated since the last call, which resets them.
    pub fn take_timing(&mut self) -> IoTiming {
        std::mem::take(&mut self.timing)
    }

    /// Reads every batch once, timing the whole pass.
    pub fn read_epoch_timed(&mut self) -> Result<IoTiming> {
        self.take_timing();
        let start = Instant::now();
        for m in 0..self.manifest.batches {
            std::hint::black_box(self.read_batch(m)?);
        }
        let mut timing = self.take_timing();
        timing.epoch = start.elapsed();
        Ok(timing)
    }
}

impl DataSource for PackedStore {
    fn len(&self) -> usize {
        self.manifest.n_total
    }

    fn dim(&self) -> usize {
        self.manifest.dim
    }

    fn fetch(&mut self, plan: &PartitionPlan, m: usize) -> Result<Batch> {
        let matches = plan.regime == Regime::Fixed
            && plan.num_batches() == self.plan.num_batches()
            && plan.batches.get(m) == self.plan.batches.get(m);
        if !matches {
            return Err(Error::invalid(
                "a packed store only serves the fixed plan it was packed with",
            ));
        }
        self.read_batch(m)
    }
}

/// Byte offsets of every data row of a CSV file, plus the file state they
/// were taken from.
#[derive(Debug, Clone, PartialEq)]
pub struct RowIndex {
    path: PathBuf,
    file_len: u64,
    modified: Option<SystemTime>,
    width: usize,
    /// `offsets[i]..offsets[i + 1]` spans row `i`; one extra entry marks the end.
    offsets: Vec<u64>,
}

impl RowIndex {
    /// One pass over the file recording where each row starts.
    pub fn build(path: &Path) -> Result<Self> {
        let meta = fs::metadata(path)?;
        let mut reader = BufReader::new(File::open(path)?);
        let mut line = String::new();
        let mut pos = reader.read_line(&mut line)? as u64;
        let width = line.trim_end().split(',').count();
        if pos == 0 || width < 2 {
            return Err(Error::Csv {
                path: path.to_path_buf(),
                line: 1,
                message: "missing or too narrow header".into(),
            });
        }
        let mut offsets = Vec::new();
        loop {
            line.clear();
            let read = reader.read_line(&mut line)? as u64;
            if read == 0 {
                break;
            }
            if !line.trim().is_empty() {
                offsets.push(pos);
            }
            pos += read;
        }
        offsets.push(pos);
        Ok(RowIndex {
            path: path.to_path_buf(),
            file_len: meta.len(),
            modified: meta.modified().ok(),
            width,
            offsets,
        })
    }

    pub fn rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.width - 1
    }

    /// Fails if the file's length or modification time changed.
    pub fn check_fresh(&self) -> Result<()> {
        let meta = fs::metadata(&self.path)?;
        if meta.len() != self.file_len || meta.modified().ok() != self.modified {
            return Err(Error::StaleIndex(self.path.clone()));
        }
        Ok(())
    }
}

/// Random-position reader: each batch row is fetched by seeking into the CSV.
/// Only the row index is held in memory, never the file contents.
pub struct ShuffledCsv {
    index: RowIndex,
    file: File,
    buf: Vec<u8>,
}

impl ShuffledCsv {
    pub fn open(path: &Path) -> Result<Self> {
        let index = RowIndex::build(path)?;
        Ok(ShuffledCsv {
            file: File::open(path)?,
            index,
            buf: Vec::new(),
        })
    }

    pub fn index(&self) -> &RowIndex {
        &self.index
    }

    fn read_rows(&mut self, idx: &[usize]) -> Result<(Batch, u64)> {
        self.index.check_fresh()?;
        if idx.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let width = self.index.width;
        let mut values = Vec::with_capacity(idx.len() * width);
        let mut bytes = 0;
        for &i in idx {
            if i >= self.index.rows() {
                return Err(Error::invalid(format!("row {i} out of range (N = {})", self.index.rows())));
            }
            let (start, end) = (self.index.offsets[i], self.index.offsets[i + 1]);
            self.buf.resize((end - start) as usize, 0);
            self.file.seek(SeekFrom::Start(start))?;
            self.file.read_exact(&mut self.buf)?;
            bytes += end - start;
            let text = std::str::from_utf8(&self.buf).map_err(|e| Error::Csv {
                path: self.index.path.clone(),
                line: i + 2,
                message: e.to_string(),
            })?;
            parse_row(text, width, &mut values).map_err(|message| Error::Csv {
                path: self.index.path.clone(),
                line: i + 2,
                message,
            })?;
        }
        let n = idx.len();
        let p = width - 1;
        let mut x = Vec::with_capacity(n * p);
        let mut y = Vec::with_capacity(n);
        for row in values.chunks_exact(width) {
            x.extend_from_slice(&row[..p]);
            y.push(row[p]);
        }
        Ok((Batch { x: Mat::from_vec(n, p, x)?, y }, bytes))
    }

    /// Iterates over the batches of `plan`; timings are available from the
    /// iterator once it is exhausted.
    pub fn epoch<'a>(&'a mut self, plan: &'a PartitionPlan) -> ShuffledEpoch<'a> {
        ShuffledEpoch {
            reader: self,
            plan,
            next: 0,
            start: Instant::now(),
            timing: IoTiming::default(),
        }
    }

    /// Reads every batch of `plan` once, timing the whole pass.
    pub fn read_epoch_timed(&mut self, plan: &PartitionPlan) -> Result<IoTiming> {
        let mut epoch = self.epoch(plan);
        for batch in epoch.by_ref() {
            std::hint::black_box(batch?);
        }
        Ok(epoch.timing())
    }
}

pub struct ShuffledEpoch<'a> {
    reader: &'a mut ShuffledCsv,
    plan: &'a PartitionPlan,
    next: usize,
    start: Instant,
    timing: IoTiming,
}

impl ShuffledEpoch<'_> {
    pub fn timing(&self) -> IoTiming {
        self.timing.clone()
    }
}

impl Iterator for ShuffledEpoch<'_> {
    type Item = Result<Batch>;

    fn next(&mut self) -> Option<Self::Item> {
        let idx = self.plan.batches.get(self.next)?;
        self.next += 1;
        let t0 = Instant::now();
        let out = self.reader.read_rows(idx);
        self.timing.batches.push(t0.elapsed());
        self.timing.epoch = self.start.elapsed();
        Some(out.map(|(batch, bytes)| {
            self.timing.bytes_read += bytes;
            batch
        }))
    }
}

impl DataSource for ShuffledCsv {
    fn len(&self) -> usize {
        self.index.rows()
    }

    fn dim(&self) -> usize {
        self.index.dim()
    }

    fn fetch(&mut self, plan: &PartitionPlan, m: usize) -> Result<Batch> {
        let idx = plan
            .batches
            .get(m)
            .ok_or_else(|| Error::invalid(format!("batch {m} not in plan")))?;
        Ok(self.read_rows(idx)?.0)
    }
}
