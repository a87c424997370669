//! Branching-diffusion data, standardization, splits, CSV and IDX I/O.

use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ad::Tensor;
use crate::radsample::rng_from_seed;

/// Variances below this are clamped before standardizing.
pub const VARIANCE_CLAMP: f64 = 1e-12;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("bad IDX magic {found:#010x}")]
    MagicMismatch { found: u32 },
    #[error("truncated IDX file: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("IDX dimensions {0:?} overflow")]
    DimensionOverflow(Vec<u32>),
    #[error("invalid branching configuration: {0}")]
    Config(String),
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchingConfig {
    pub depth: usize,
    pub factor: usize,
    pub dim: usize,
    pub copies: usize,
    pub sigma0: f64,
    /// Observation noise variance is `σ₀² / noise_ratio`.
    pub noise_ratio: f64,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for BranchingConfig {
    fn default() -> Self {
        Self { depth: 6, factor: 2, dim: 50, copies: 5, sigma0: 1.0, noise_ratio: 5.0, train_fraction: 0.7, seed: 0 }
    }
}

impl BranchingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.factor == 0 || self.copies == 0 || self.dim == 0 {
            return Err(DataError::Config("depth, factor, copies and dim must be positive".into()));
        }
        if !(self.sigma0 >= 0.0) || !(self.noise_ratio > 0.0) {
            return Err(DataError::Config("noise scales must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.train_fraction) {
            return Err(DataError::Config("train fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Number of non-root nodes, `Σ_{l=1}^{depth} factor^l`.
    pub fn num_nodes(&self) -> usize {
        (1..=self.depth).map(|l| self.factor.pow(l as u32)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeMeta {
    pub node_id: usize,
    /// Node 0 is the root.
    pub parent_id: usize,
    pub depth: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Per-feature affine map `x ↦ (x - mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn inverse(&self, x: &Tensor) -> Tensor {
        let mut out = x.clone();
        let d = x.cols();
        for (k, v) in out.data_mut().iter_mut().enumerate() {
            *v = *v * self.std[k % d] + self.mean[k % d];
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Tensor,
    pub nodes: Vec<NodeMeta>,
    pub split: Vec<Split>,
    pub normalization: Option<Normalization>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn rows_where(&self, s: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == s).collect()
    }

    pub fn train(&self) -> Tensor {
        self.features.gather_rows(&self.rows_where(Split::Train))
    }

    pub fn test(&self) -> Tensor {
        self.features.gather_rows(&self.rows_where(Split::Test))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        let d = self.features.cols();
        let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
        header.extend(["node_id", "parent_id", "depth", "split"].map(String::from));
        w.write_record(&header).map_err(csv_err)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.features.row_slice(i).iter().map(|v| format!("{v:e}")).collect();
            let m = self.nodes[i];
            let s = match self.split[i] {
                Split::Train => "train",
                Split::Test => "test",
            };
            rec.extend([m.node_id.to_string(), m.parent_id.to_string(), m.depth.to_string(), s.to_string()]);
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        let headers = r.headers().map_err(csv_err)?.clone();
        let n = headers.len();
        if n < 5 || headers.get(n - 1) != Some("split") || headers.get(n - 4) != Some("node_id") {
            return Err(DataError::Csv("expected feature columns then node_id,parent_id,depth,split".into()));
        }
        let d = n - 4;
        let (mut data, mut nodes, mut split) = (Vec::new(), Vec::new(), Vec::new());
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let bad = |what: &str| DataError::Csv(format!("row {}: bad {what}", line + 1));
            for j in 0..d {
                data.push(rec[j].trim().parse::<f64>().map_err(|_| bad("feature"))?);
            }
            let int = |j: usize, what: &str| rec[j].trim().parse::<usize>().map_err(|_| bad(what));
            nodes.push(NodeMeta { node_id: int(d, "node_id")?, parent_id: int(d + 1, "parent_id")?, depth: int(d + 2, "depth")? });
            split.push(match rec[d + 3].trim() {
                "train" => Split::Train,
                "test" => Split::Test,
                _ => return Err(bad("split")),
            });
        }
        Ok(Self { features: Tensor::new(split.len(), d, data), nodes, split, normalization: None })
    }
}

fn csv_err(e: csv::Error) -> DataError {
    DataError::Csv(e.to_string())
}

/// Standardizes every column; constant columns map to zero.
pub fn normalize(x: &Tensor) -> (Tensor, Normalization) {
    let (n, d) = x.shape();
    let nf = n.max(1) as f64;
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(x.row_slice(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut var = vec![0.0; d];
    for i in 0..n {
        for ((s, v), m) in var.iter_mut().zip(x.row_slice(i)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std: Vec<f64> = var.iter().map(|s| (s / nf).max(VARIANCE_CLAMP).sqrt()).collect();
    let mut out = x.clone();
    for (k, v) in out.data_mut().iter_mut().enumerate() {
        *v = (*v - mean[k % d]) / std[k % d];
    }
    (out, Normalization { mean, std })
}

/// Random split by observation with `round(frac · n)` training rows.
pub fn split_observations<R: Rng + ?Sized>(n: usize, frac: f64, rng: &mut R) -> Vec<Split> {
    let n_train = (frac * n as f64).round() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut split = vec![Split::Test; n];
    for &i in &idx[..n_train] {
        split[i] = Split::Train;
    }
    split
}

/// Node values and noisy copies before standardization.
///
/// Returns `(node values [1 + nodes, dim] with the root first, dataset)`.
pub fn generate_branching_raw(cfg: &BranchingConfig) -> Result<(Tensor, Dataset)> {
    cfg.validate()?;
    let mut rng = rng_from_seed(cfg.seed);
    let d = cfg.dim;
    let mut values = vec![0.0; d];
    let mut meta = vec![NodeMeta { node_id: 0, parent_id: 0, depth: 0 }];
    let mut frontier = vec![0usize];
    for depth in 1..=cfg.depth {
        let mut next = Vec::with_capacity(frontier.len() * cfg.factor);
        for &parent in &frontier {
            for _ in 0..cfg.factor {
                let id = meta.len();
                for j in 0..d {
                    let z: f64 = rng.sample(StandardNormal);
                    values.push(values[parent * d + j] + cfg.sigma0 * z);
                }
                meta.push(NodeMeta { node_id: id, parent_id: parent, depth });
                next.push(id);
            }
        }
        frontier = next;
    }
    let noise = cfg.sigma0 / cfg.noise_ratio.sqrt();
    let mut obs = Vec::with_capacity(cfg.num_nodes() * cfg.copies * d);
    let mut nodes = Vec::with_capacity(cfg.num_nodes() * cfg.copies);
    for m in &meta[1..] {
        for _ in 0..cfg.copies {
            for j in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                obs.push(values[m.node_id * d + j] + noise * z);
            }
            nodes.push(*m);
        }
    }
    let n = nodes.len();
    let split = split_observations(n, cfg.train_fraction, &mut rng);
    let node_values = Tensor::new(meta.len(), d, values);
    Ok((node_values, Dataset { features: Tensor::new(n, d, obs), nodes, split, normalization: None }))
}

/// Standardized branching-diffusion dataset.
pub fn generate_branching(cfg: &BranchingConfig) -> Result<Dataset> {
    let (_, mut ds) = generate_branching_raw(cfg)?;
    let (x, norm) = normalize(&ds.features);
    ds.features = x;
    ds.normalization = Some(norm);
    Ok(ds)
}

/// A parsed IDX array of unsigned bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub magic: u32,
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Reads an IDX file, transparently decompressing gzip.
pub fn read_idx(path: &Path) -> Result<IdxArray> {
    let raw = std::fs::read(path)?;
    let bytes = if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(&raw[..]).read_to_end(&mut out)?;
        out
    } else {
        raw
    };
    parse_idx(&bytes)
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    let word = |k: usize| -> Option<u32> { bytes.get(4 * k..4 * k + 4).map(|b| u32::from_be_bytes(b.try_into().unwrap())) };
    let magic = word(0).ok_or(DataError::Truncated { expected: 4, actual: bytes.len() })?;
    let ndims = match magic {
        IDX_IMAGES_MAGIC => 3,
        IDX_LABELS_MAGIC => 1,
        found => return Err(DataError::MagicMismatch { found }),
    };
    let header = 4 * (1 + ndims);
    if bytes.len() < header {
        return Err(DataError::Truncated { expected: header, actual: bytes.len() });
    }
    let raw_dims: Vec<u32> = (1..=ndims).map(|k| word(k).unwrap()).collect();
    let count = raw_dims
        .iter()
        .try_fold(1usize, |acc, &v| acc.checked_mul(v as usize))
        .and_then(|n| n.checked_add(header))
        .ok_or_else(|| DataError::DimensionOverflow(raw_dims.clone()))?;
    if bytes.len() < count {
        return Err(DataError::Truncated { expected: count, actual: bytes.len() });
    }
    Ok(IdxArray { magic, dims: raw_dims.iter().map(|&v| v as usize).collect(), data: bytes[header..count].to_vec() })
}

/// Images as rows of pixels scaled to `[0, 1]`.
pub fn idx_images(arr: &IdxArray) -> Result<Tensor> {
    if arr.magic != IDX_IMAGES_MAGIC {
        return Err(DataError::MagicMismatch { found: arr.magic });
    }
    let n = arr.dims[0];
    let px = arr.dims[1] * arr.dims[2];
    Ok(Tensor::new(n, px, arr.data.iter().map(|&b| b as f64 / 255.0).collect()))
}

/// MNIST-style directory with `train-images-idx3-ubyte[.gz]` and
/// `t10k-images-idx3-ubyte[.gz]`; returns at most `n_train` / `n_test` rows.
pub fn load_mnist(dir: &Path, n_train: usize, n_test: usize) -> Result<(Tensor, Tensor)> {
    let find = |stem: &str| {
        let gz = dir.join(format!("{stem}.gz"));
        if gz.exists() { gz } else { dir.join(stem) }
    };
    let take = |t: Tensor, n: usize| {
        let n = n.min(t.rows());
        t.gather_rows(&(0..n).collect::<Vec<_>>())
    };
    let train = idx_images(&read_idx(&find("train-images-idx3-ubyte"))?)?;
    let test = idx_images(&read_idx(&find("t10k-images-idx3-ubyte"))?)?;
    Ok((take(train, n_train), take(test, n_test)))
}
