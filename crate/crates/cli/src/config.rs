//! Experiment configuration files.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pvae::ball::Curvature;
use pvae::data::BranchingConfig;
use pvae::hypdist::Family;
use pvae::nets::{ArchSpec, DecoderKind};
use pvae::radsample::RadiusSampler;
use pvae::vae::{AdamConfig, Likelihood, VaeConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub data: DataSection,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self { model: ModelSection::default(), data: DataSection::default(), output_dir: "out".into(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub curvature: f64,
    pub latent_dim: usize,
    pub hidden: usize,
    pub family: Family,
    /// `null` picks the gyroplane layer for `c > 0` and a plain MLP at `c = 0`.
    pub decoder: Option<DecoderKind>,
    pub per_dim_sigma: bool,
    pub prior_sigma: f64,
    /// `null` picks Gaussian for synthetic data and Bernoulli for images.
    pub likelihood: Option<Likelihood>,
    pub k_train: usize,
    pub k_eval: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub radius_sampler: RadiusSampler,
}

impl Default for ModelSection {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            curvature: 1.2,
            latent_dim: 2,
            hidden: 200,
            family: Family::Riemannian,
            decoder: None,
            per_dim_sigma: false,
            prior_sigma: 1.7,
            likelihood: None,
            k_train: 1,
            k_eval: 500,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            batch_size: 64,
            epochs: 1000,
            radius_sampler: RadiusSampler::Ars,
        }
    }
}

/// Branching-diffusion generator settings, and subset sizes used when
/// `--data` names an image directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub depth: usize,
    pub factor: usize,
    pub dim: usize,
    pub copies: usize,
    pub sigma0: f64,
    pub noise_ratio: f64,
    pub train_fraction: f64,
    pub n_train: usize,
    pub n_test: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        let b = BranchingConfig::default();
        Self {
            depth: b.depth,
            factor: b.factor,
            dim: b.dim,
            copies: b.copies,
            sigma0: b.sigma0,
            noise_ratio: b.noise_ratio,
            train_fraction: b.train_fraction,
            n_train: 10_000,
            n_test: 2_000,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn branching(&self) -> BranchingConfig {
        let d = &self.data;
        BranchingConfig {
            depth: d.depth,
            factor: d.factor,
            dim: d.dim,
            copies: d.copies,
            sigma0: d.sigma0,
            noise_ratio: d.noise_ratio,
            train_fraction: d.train_fraction,
            seed: self.seed,
        }
    }

    /// The model configuration for data with `input_dim` features.
    pub fn vae(&self, input_dim: usize, images: bool) -> Result<VaeConfig> {
        let m = &self.model;
        let curvature = match Curvature::new(m.curvature) {
            Ok(c) => c,
            Err(e) => bail!("model.curvature: {e}"),
        };
        let decoder = m.decoder.unwrap_or(if curvature.is_euclidean() { DecoderKind::PlainMlp } else { DecoderKind::Gyroplane });
        let default_lik = if images { Likelihood::Bernoulli } else { Likelihood::Gaussian };
        let cfg = VaeConfig {
            arch: ArchSpec {
                input_dim,
                latent_dim: m.latent_dim,
                hidden: m.hidden,
                curvature,
                family: m.family,
                decoder,
                per_dim_sigma: m.per_dim_sigma,
            },
            prior_sigma: m.prior_sigma,
            likelihood: m.likelihood.unwrap_or(default_lik),
            k_train: m.k_train,
            k_eval: m.k_eval,
            adam: AdamConfig { lr: m.lr, beta1: m.beta1, beta2: m.beta2, eps: m.eps },
            batch_size: m.batch_size,
            epochs: m.epochs,
            seed: self.seed,
            radius_sampler: m.radius_sampler,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
