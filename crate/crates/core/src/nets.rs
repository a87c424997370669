//! Encoder and decoder networks.
//!
//! Parameters live in a [`ParamStore`] as shared tensors; a forward pass
//! binds them to a [`Graph`] and receives one [`Var`] per tensor.

use std::io::{BufRead, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ad::{Graph, Tensor, Var};
use crate::ball::Curvature;
use crate::diffgeo;
use crate::hypdist::Family;

/// Lower bound on emitted dispersions; `softplus` underflows to zero
/// for large negative inputs.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Orientations with a smaller norm are rejected.
pub const MIN_ORIENTATION_NORM: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("gyroplane unit {0} has a degenerate orientation")]
    DegenerateOrientation(usize),
    #[error("invalid architecture: {0}")]
    InvalidSpec(String),
    #[error("checkpoint architecture {found} does not match model {expected}")]
    ArchMismatch { expected: String, found: String },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, NetError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderKind {
    Gyroplane,
    Log0Mlp,
    PlainMlp,
}

impl std::str::FromStr for DecoderKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gyroplane" => Ok(Self::Gyroplane),
            "log0_mlp" => Ok(Self::Log0Mlp),
            "plain_mlp" => Ok(Self::PlainMlp),
            _ => Err(format!("unknown decoder `{s}`")),
        }
    }
}

/// Shape of an encoder/decoder pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub input_dim: usize,
    pub latent_dim: usize,
    pub hidden: usize,
    pub curvature: Curvature,
    pub family: Family,
    pub decoder: DecoderKind,
    /// One dispersion per latent dimension (wrapped family only).
    #[serde(default)]
    pub per_dim_sigma: bool,
}

impl ArchSpec {
    /// The synthetic-data architecture: one hidden layer of 200 units.
    pub fn synthetic(input_dim: usize, latent_dim: usize, curvature: Curvature, family: Family) -> Self {
        let decoder = if curvature.is_euclidean() { DecoderKind::PlainMlp } else { DecoderKind::Gyroplane };
        Self { input_dim, latent_dim, hidden: 200, curvature, family, decoder, per_dim_sigma: false }
    }

    /// The image architecture: one hidden layer of 600 units.
    pub fn mnist(latent_dim: usize, curvature: Curvature, family: Family, decoder: DecoderKind) -> Self {
        Self { input_dim: 784, latent_dim, hidden: 600, curvature, family, decoder, per_dim_sigma: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.latent_dim == 0 || self.hidden == 0 {
            return Err(NetError::InvalidSpec("widths must be positive".into()));
        }
        if self.per_dim_sigma && self.family == Family::Riemannian {
            return Err(NetError::InvalidSpec("per-dimension dispersion requires the wrapped family".into()));
        }
        Ok(())
    }

    pub fn sigma_dim(&self) -> usize {
        if self.per_dim_sigma { self.latent_dim } else { 1 }
    }
}

/// Hex SHA-256 of a value's JSON encoding.
pub fn json_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("serializable");
    hex::encode(Sha256::digest(bytes))
}

/// Named tensors in declaration order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Arc<Tensor>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        self.names.push(name.into());
        self.values.push(Arc::new(value));
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, i: usize) -> &Tensor {
        &self.values[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Tensor {
        Arc::make_mut(&mut self.values[i])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn shapes(&self) -> Vec<(String, (usize, usize))> {
        self.names.iter().cloned().zip(self.values.iter().map(|v| v.shape())).collect()
    }

    /// Binds every tensor as a trainable leaf.
    pub fn bind<'g>(&self, g: &'g Graph) -> Vec<Var<'g>> {
        self.values.iter().map(|v| g.param(v.clone())).collect()
    }

    /// Binds every tensor as a constant.
    pub fn bind_const<'g>(&self, g: &'g Graph) -> Vec<Var<'g>> {
        self.values.iter().map(|v| g.constant(v.clone())).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.all_finite())
    }
}

fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let lim = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let u = Uniform::new_inclusive(-lim, lim).expect("finite limit");
    Tensor::new(fan_in, fan_out, (0..fan_in * fan_out).map(|_| u.sample(rng)).collect())
}

/// Fully-connected layer `x W + b`, with `W` stored `[in, out]`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: usize,
    pub b: usize,
}

impl Linear {
    pub fn init<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let w = store.add(format!("{name}.w"), glorot(fan_in, fan_out, rng));
        let b = store.add(format!("{name}.b"), Tensor::zeros(1, fan_out));
        Self { w, b }
    }

    pub fn forward<'g>(&self, p: &[Var<'g>], x: Var<'g>) -> Var<'g> {
        x.matmul(p[self.w]) + p[self.b]
    }
}

/// Gyroplane units `f_{a_k, p_k}` with `p_k = exp₀(p'_k)`.
#[derive(Debug, Clone, Copy)]
pub struct GyroLayer {
    pub a: usize,
    pub p_pre: usize,
}

impl GyroLayer {
    pub fn init<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, d: usize, units: usize, rng: &mut R) -> Self {
        let a = glorot(d, units, rng).transpose();
        let a = store.add(format!("{name}.a"), a);
        let n = Normal::new(0.0, 0.1).expect("valid normal");
        let p = Tensor::new(units, d, (0..units * d).map(|_| n.sample(rng)).collect());
        let p_pre = store.add(format!("{name}.p"), p);
        Self { a, p_pre }
    }

    pub fn forward<'g>(&self, params: &[Var<'g>], z: Var<'g>, c: Curvature) -> Var<'g> {
        let p = diffgeo::exp0(params[self.p_pre], c);
        diffgeo::gyroplane(z, params[self.a], p, c)
    }

    pub fn check(&self, store: &ParamStore) -> Result<()> {
        let a = store.get(self.a);
        for k in 0..a.rows() {
            let n = a.row_slice(k).iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(n >= MIN_ORIENTATION_NORM) {
                return Err(NetError::DegenerateOrientation(k));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Encoder {
    pub trunk: Linear,
    pub mean: Linear,
    pub sigma: Linear,
}

#[derive(Debug, Clone, Copy)]
pub enum FirstLayer {
    Gyro(GyroLayer),
    Fc(Linear),
}

#[derive(Debug, Clone, Copy)]
pub struct Decoder {
    pub kind: DecoderKind,
    pub first: FirstLayer,
    pub out: Linear,
}

/// Encoder/decoder pair with its parameters.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ArchSpec,
    pub params: ParamStore,
    pub encoder: Encoder,
    pub decoder: Decoder,
}

impl Model {
    pub fn new<R: Rng + ?Sized>(spec: ArchSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let (n, d, h) = (spec.input_dim, spec.latent_dim, spec.hidden);
        let mut params = ParamStore::new();
        let encoder = Encoder {
            trunk: Linear::init(&mut params, "enc.hidden", n, h, rng),
            mean: Linear::init(&mut params, "enc.mean", h, d, rng),
            sigma: Linear::init(&mut params, "enc.sigma", h, spec.sigma_dim(), rng),
        };
        let first = match spec.decoder {
            DecoderKind::Gyroplane => FirstLayer::Gyro(GyroLayer::init(&mut params, "dec.gyro", d, h, rng)),
            _ => FirstLayer::Fc(Linear::init(&mut params, "dec.hidden", d, h, rng)),
        };
        let out = Linear::init(&mut params, "dec.out", h, n, rng);
        let model = Self { decoder: Decoder { kind: spec.decoder, first, out }, spec, params, encoder };
        model.check()?;
        Ok(model)
    }

    pub fn curvature(&self) -> Curvature {
        self.spec.curvature
    }

    /// Hash of the architecture and parameter layout.
    pub fn arch_hash(&self) -> String {
        json_hash(&(&self.spec, self.params.shapes()))
    }

    pub fn check(&self) -> Result<()> {
        if let FirstLayer::Gyro(g) = self.decoder.first {
            g.check(&self.params)?;
        }
        Ok(())
    }

    /// Sets the output bias, e.g. to pixel-mean logits.
    pub fn set_output_bias(&mut self, bias: &[f64]) {
        let b = self.params.get_mut(self.decoder.out.b);
        assert_eq!(b.len(), bias.len(), "bias length");
        b.data_mut().copy_from_slice(bias);
    }

    /// `(μ, σ)`: `μ = exp₀(·)` on the ball and `σ = softplus(·)`, floored.
    pub fn encode<'g>(&self, p: &[Var<'g>], x: Var<'g>) -> (Var<'g>, Var<'g>) {
        let e = &self.encoder;
        let h = e.trunk.forward(p, x).relu();
        let mu = diffgeo::exp0(e.mean.forward(p, h), self.curvature());
        let sigma = floor(e.sigma.forward(p, h).softplus(), SIGMA_FLOOR);
        (mu, sigma)
    }

    /// Decoder output before the likelihood link.
    pub fn decode<'g>(&self, p: &[Var<'g>], z: Var<'g>) -> Var<'g> {
        let dec = &self.decoder;
        let c = self.curvature();
        let h = match (dec.kind, dec.first) {
            (_, FirstLayer::Gyro(g)) => g.forward(p, z, c),
            (DecoderKind::Log0Mlp, FirstLayer::Fc(l)) => l.forward(p, diffgeo::log0(z, c)),
            (_, FirstLayer::Fc(l)) => l.forward(p, z),
        };
        dec.out.forward(p, h.relu())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.save_with_meta(path, None)
    }

    /// Like [`Model::save`], with an opaque JSON document stored in the header.
    pub fn save_with_meta(&self, path: &Path, meta: Option<&serde_json::Value>) -> Result<()> {
        let header = CheckpointHeader {
            arch_hash: self.arch_hash(),
            spec: self.spec.clone(),
            tensors: self.params.shapes().into_iter().map(|(name, (r, c))| TensorEntry { name, shape: [r, c] }).collect(),
            meta: meta.cloned(),
        };
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(&mut f, &header)?;
        f.write_all(b"\n")?;
        for v in &self.params.values {
            for x in v.data() {
                f.write_all(&x.to_le_bytes())?;
            }
        }
        f.flush()?;
        Ok(())
    }

    /// Reads a checkpoint, rebuilding the model from its stored spec.
    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::load_with_meta(path)?.0)
    }

    /// Reads a checkpoint and the header metadata stored with it, if any.
    pub fn load_with_meta(path: &Path) -> Result<(Self, Option<serde_json::Value>)> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut header = read_header(&mut r)?;
        let mut rng = crate::radsample::rng_from_seed(0);
        let mut model = Self::new(header.spec.clone(), &mut rng)?;
        model.fill_from(&header, &mut r)?;
        Ok((model, header.meta.take()))
    }

    /// Overwrites the weights from a checkpoint with the same layout.
    pub fn load_weights(&mut self, path: &Path) -> Result<()> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        let header = read_header(&mut r)?;
        self.fill_from(&header, &mut r)
    }

    fn fill_from(&mut self, header: &CheckpointHeader, r: &mut impl Read) -> Result<()> {
        let expected = self.arch_hash();
        if header.arch_hash != expected {
            return Err(NetError::ArchMismatch { expected, found: header.arch_hash.clone() });
        }
        for (i, t) in header.tensors.iter().enumerate() {
            if self.params.names[i] != t.name || self.params.get(i).shape() != (t.shape[0], t.shape[1]) {
                return Err(NetError::Malformed(format!("tensor {} does not match the layout", t.name)));
            }
            let dst = self.params.get_mut(i);
            let mut buf = vec![0u8; 8 * dst.len()];
            r.read_exact(&mut buf).map_err(|_| NetError::Malformed(format!("truncated data for {}", t.name)))?;
            for (x, chunk) in dst.data_mut().iter_mut().zip(buf.chunks_exact(8)) {
                *x = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
            }
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(NetError::Malformed(format!("{} trailing bytes", rest.len())));
        }
        self.check()
    }
}

/// `max(x, lo)` with zero adjoint where clamped.
fn floor<'g>(x: Var<'g>, lo: f64) -> Var<'g> {
    let v = x.value();
    if v.data().iter().all(|&a| a >= lo) {
        return x;
    }
    let y = v.map(|a| a.max(lo));
    let dy = v.map(|a| if a >= lo { 1.0 } else { 0.0 });
    x.graph().custom_elementwise(x, y, dy)
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    arch_hash: String,
    spec: ArchSpec,
    tensors: Vec<TensorEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<serde_json::Value>,
}

fn read_header(r: &mut impl BufRead) -> Result<CheckpointHeader> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    if !line.ends_with('\n') {
        return Err(NetError::Malformed("missing header".into()));
    }
    Ok(serde_json::from_str(&line)?)
}

/// Logit of the clipped per-feature mean, for Bernoulli output biases.
pub fn mean_logits(data: &Tensor) -> Vec<f64> {
    let n = data.rows().max(1) as f64;
    (0..data.cols())
        .map(|j| {
            let m = ((0..data.rows()).map(|i| data.get(i, j)).sum::<f64>() / n).clamp(1e-3, 1.0 - 1e-3);
            (m / (1.0 - m)).ln()
        })
        .collect()
}
