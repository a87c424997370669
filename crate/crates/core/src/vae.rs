//! ELBO and IWAE estimators, Adam, and the training loop.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ad::{Graph, Tensor, Var};
use crate::ball::{BallPoint, Curvature};
use crate::diffgeo;
use crate::hypdist::{DistError, Family, RadiusDensity};
use crate::nets::{json_hash, ArchSpec, Model, NetError, ParamStore};
use crate::par::Exec;
use crate::radsample::{rng_from_seed, sample_radius, sample_sphere, ArsProposal, RadiusSampler, RngState, SampleError};
use crate::special::log_sum_exp;

#[derive(Debug, Error)]
pub enum VaeError {
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("data has {found} features, model expects {expected}")]
    DataShape { expected: usize, found: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, VaeError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Likelihood {
    /// Unit-variance Gaussian; the decoder emits the mean.
    Gaussian,
    /// Independent Bernoulli; the decoder emits logits.
    Bernoulli,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeConfig {
    pub arch: ArchSpec,
    pub prior_sigma: f64,
    pub likelihood: Likelihood,
    pub k_train: usize,
    pub k_eval: usize,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    #[serde(default)]
    pub radius_sampler: RadiusSampler,
}

impl VaeConfig {
    /// Synthetic branching-data settings with a 50-dimensional input.
    pub fn synthetic(c: f64, prior_sigma: f64, family: Family, seed: u64) -> Self {
        let c = Curvature::new(c).expect("valid curvature");
        Self {
            arch: ArchSpec::synthetic(50, 2, c, family),
            prior_sigma,
            likelihood: Likelihood::Gaussian,
            k_train: 1,
            k_eval: 500,
            adam: AdamConfig::default(),
            batch_size: 64,
            epochs: 1000,
            seed,
            radius_sampler: RadiusSampler::Ars,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if !(self.prior_sigma > 0.0 && self.prior_sigma.is_finite()) {
            return Err(VaeError::Config(format!("prior sigma must be positive, got {}", self.prior_sigma)));
        }
        if self.k_train == 0 || self.k_eval == 0 || self.batch_size == 0 {
            return Err(VaeError::Config("sample counts and batch size must be positive".into()));
        }
        if !(self.adam.lr > 0.0) || !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return Err(VaeError::Config("invalid Adam settings".into()));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        json_hash(self)
    }
}

/// Source of the randomness behind reparametrized samples.
pub trait Noise {
    fn normals(&mut self, n: usize) -> Vec<f64>;
    fn direction(&mut self, d: usize) -> Vec<f64>;
    /// `n` radii from `rd`.
    fn radii(&mut self, rd: &RadiusDensity, n: usize) -> Result<Vec<f64>>;
}

/// Fresh draws from a generator, radii by rejection sampling.
pub struct RngNoise<'a> {
    pub rng: &'a mut RngState,
    pub sampler: RadiusSampler,
}

impl Noise for RngNoise<'_> {
    fn normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.rng.sample(StandardNormal)).collect()
    }

    fn direction(&mut self, d: usize) -> Vec<f64> {
        sample_sphere(d, self.rng)
    }

    fn radii(&mut self, rd: &RadiusDensity, n: usize) -> Result<Vec<f64>> {
        if self.sampler == RadiusSampler::Ars {
            let prop = ArsProposal::new(*rd)?;
            return (0..n).map(|_| Ok(prop.sample(self.rng)?.0)).collect();
        }
        (0..n).map(|_| Ok(sample_radius(self.sampler, rd, self.rng)?.0)).collect()
    }
}

/// Replayable noise: radii come from inverting the CDF at stored uniforms,
/// so the sample is a smooth function of σ.
pub struct FrozenNoise {
    rng: RngState,
}

impl FrozenNoise {
    pub fn new(seed: u64) -> Self {
        Self { rng: rng_from_seed(seed) }
    }
}

impl Noise for FrozenNoise {
    fn normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.rng.sample(StandardNormal)).collect()
    }

    fn direction(&mut self, d: usize) -> Vec<f64> {
        sample_sphere(d, &mut self.rng)
    }

    fn radii(&mut self, rd: &RadiusDensity, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| Ok(rd.quantile(self.rng.random::<f64>())?)).collect()
    }
}

/// Reparametrized draw from the posterior family, one row per row of `μ`.
pub fn sample_posterior<'g>(
    mu: Var<'g>,
    sigma: Var<'g>,
    c: Curvature,
    family: Family,
    noise: &mut dyn Noise,
) -> Result<Var<'g>> {
    let g = mu.graph();
    let (b, d) = mu.shape();
    let u = if family == Family::Wrapped || c.is_euclidean() {
        let eps = g.constant(Tensor::new(b, d, noise.normals(b * d)));
        eps * sigma
    } else {
        let sv = sigma.value();
        let mut r = Vec::with_capacity(b);
        let mut dr = Vec::with_capacity(b);
        let mut dirs = Vec::with_capacity(b * d);
        for &s in sv.data() {
            let rd = RadiusDensity::new(s, c, d, Family::Riemannian)?;
            let ri = noise.radii(&rd, 1)?[0];
            dr.push(rd.implicit_dr_dsigma(ri)?);
            r.push(ri);
            dirs.extend(noise.direction(d));
        }
        diffgeo::implicit_radius(sigma, r, dr) * g.constant(Tensor::new(b, d, dirs))
    };
    Ok(diffgeo::push_forward(mu, u, c))
}

/// Log-density of the posterior family w.r.t. `dM`, `[B, 1]`.
pub fn family_log_pdf<'g>(z: Var<'g>, mu: Var<'g>, sigma: Var<'g>, c: Curvature, family: Family) -> Result<Var<'g>> {
    match family {
        Family::Wrapped => Ok(diffgeo::wrapped_log_pdf(z, mu, sigma, c)),
        Family::Riemannian => Ok(diffgeo::riemannian_log_pdf(z, mu, sigma, c)?),
    }
}

/// `ln p(x | z)` per row, `[B, 1]`.
pub fn log_likelihood<'g>(out: Var<'g>, x: Var<'g>, lik: Likelihood) -> Var<'g> {
    match lik {
        Likelihood::Gaussian => {
            let n = x.cols() as f64;
            (x - out).square().sum_axis(1) * -0.5 - 0.5 * n * (2.0 * PI).ln()
        }
        Likelihood::Bernoulli => (x * out - out.softplus()).sum_axis(1),
    }
}

/// Prior centred at the origin with dispersion σ₀.
pub fn prior_log_pdf<'g>(z: Var<'g>, config: &VaeConfig) -> Result<Var<'g>> {
    let g = z.graph();
    let mu = g.constant(Tensor::zeros(1, z.cols()));
    let s = g.scalar(config.prior_sigma);
    family_log_pdf(z, mu, s, config.arch.curvature, config.arch.family)
}

/// `(ln p(x|z), ln p(z), ln q(z|x))` for given posterior parameters.
pub fn log_terms<'g>(
    model: &Model,
    config: &VaeConfig,
    p: &[Var<'g>],
    x: Var<'g>,
    z: Var<'g>,
    mu: Var<'g>,
    sigma: Var<'g>,
) -> Result<(Var<'g>, Var<'g>, Var<'g>)> {
    let ll = log_likelihood(model.decode(p, z), x, config.likelihood);
    let lp = prior_log_pdf(z, config)?;
    let lq = family_log_pdf(z, mu, sigma, config.arch.curvature, config.arch.family)?;
    Ok((ll, lp, lq))
}

/// Log importance weights `ln p(x|z) + ln p(z) - ln q(z|x)` for one draw per row.
pub fn log_weights<'g>(
    model: &Model,
    config: &VaeConfig,
    p: &[Var<'g>],
    x: Var<'g>,
    noise: &mut dyn Noise,
) -> Result<Var<'g>> {
    let (mu, sigma) = model.encode(p, x);
    let z = sample_posterior(mu, sigma, config.arch.curvature, config.arch.family, noise)?;
    let (ll, lp, lq) = log_terms(model, config, p, x, z, mu, sigma)?;
    Ok(ll + lp - lq)
}

/// Monte-Carlo ELBO averaged over `K` draws and the batch.
pub fn elbo_mc<'g>(
    model: &Model,
    config: &VaeConfig,
    p: &[Var<'g>],
    x: Var<'g>,
    k: usize,
    noise: &mut dyn Noise,
) -> Result<Var<'g>> {
    assert!(k >= 1, "K must be positive");
    let mut total = log_weights(model, config, p, x, noise)?.mean();
    for _ in 1..k {
        total = total + log_weights(model, config, p, x, noise)?.mean();
    }
    Ok(total / k as f64)
}

/// Rows drawn per graph in [`iwae`].
const IWAE_CHUNK: usize = 512;

/// `L_IWAE` for one datum with `K` importance samples.
pub fn iwae_datum(model: &Model, config: &VaeConfig, x: &[f64], k: usize, rng: &mut RngState) -> Result<f64> {
    assert!(k >= 1, "K must be positive");
    let g = Graph::new();
    let p = model.params.bind_const(&g);
    let x1 = g.constant(Tensor::row(x.to_vec()));
    let (mu1, sigma1) = model.encode(&p, x1);
    let c = config.arch.curvature;
    let family = config.arch.family;
    let d = config.arch.latent_dim;
    let mut logw = Vec::with_capacity(k);
    let mut noise = RngNoise { rng, sampler: config.radius_sampler };
    let proposal = if family == Family::Riemannian && !c.is_euclidean() && config.radius_sampler == RadiusSampler::Ars {
        Some(ArsProposal::new(RadiusDensity::new(sigma1.item(), c, d, family)?)?)
    } else {
        None
    };
    let mut done = 0;
    while done < k {
        let m = IWAE_CHUNK.min(k - done);
        let g = Graph::new();
        let p = model.params.bind_const(&g);
        let x = g.constant(Tensor::row(x.to_vec())).broadcast_to(m, x.len());
        let mu = g.constant(mu1.value()).broadcast_to(m, d);
        let sigma = g.constant(sigma1.value());
        let z = match &proposal {
            Some(prop) => {
                let mut u = Vec::with_capacity(m * d);
                for _ in 0..m {
                    let r = prop.sample(noise.rng)?.0;
                    u.extend(noise.direction(d).into_iter().map(|a| a * r));
                }
                diffgeo::push_forward(mu, g.constant(Tensor::new(m, d, u)), c)
            }
            None => sample_posterior(mu, sigma.broadcast_to(m, sigma.cols()), c, family, &mut noise)?,
        };
        let (ll, lp, lq) = log_terms(model, config, &p, x, z, mu, sigma)?;
        logw.extend_from_slice((ll + lp - lq).value().data());
        done += m;
    }
    Ok(log_sum_exp(&logw) - (k as f64).ln())
}

/// Per-datum `L_IWAE`. Datum `i` uses stream `i` of the seed, so results
/// do not depend on the execution strategy.
pub fn iwae(model: &Model, config: &VaeConfig, data: &Tensor, k: usize, seed: u64, exec: Exec) -> Result<Vec<f64>> {
    exec.map(data.rows(), |i| {
        let mut rng = rng_from_seed(seed);
        rng.set_stream(i as u64);
        iwae_datum(model, config, data.row_slice(i), k, &mut rng)
    })
    .into_iter()
    .collect()
}

/// Adam with bias correction, minimizing.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    pub t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &ParamStore, config: AdamConfig) -> Self {
        let zeros = |i| {
            let (r, c) = params.get(i).shape();
            Tensor::zeros(r, c)
        };
        Self { config, t: 0, m: (0..params.len()).map(zeros).collect(), v: (0..params.len()).map(zeros).collect() }
    }

    pub fn first_moment(&self, i: usize) -> &Tensor {
        &self.m[i]
    }

    pub fn second_moment(&self, i: usize) -> &Tensor {
        &self.v[i]
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor]) {
        assert_eq!(grads.len(), params.len(), "one gradient per parameter");
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (i, g) in grads.iter().enumerate() {
            let w = params.get_mut(i);
            assert_eq!(w.shape(), g.shape(), "gradient shape");
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (((w, &g), m), v) in w.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *w -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
            }
        }
    }
}

/// ELBO value and its gradient for every parameter.
pub fn elbo_and_grad(model: &Model, config: &VaeConfig, x: &Tensor, noise: &mut dyn Noise) -> Result<(f64, Vec<Tensor>)> {
    let g = Graph::new();
    let p = model.params.bind(&g);
    let xv = g.constant(x.clone());
    let elbo = elbo_mc(model, config, &p, xv, config.k_train, noise)?;
    let grads = g.backward(elbo);
    Ok((elbo.item(), p.iter().map(|&v| grads.wrt_or_zeros(v)).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_elbo: f64,
    pub wall_ms: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub config_hash: String,
    pub epochs: Vec<EpochStats>,
    /// Mean test `-L_IWAE` with `K_eval` samples, in nats.
    pub test_neg_iwae: Option<f64>,
    pub wall_ms: u128,
    pub unstable: bool,
    pub diagnostics: Option<String>,
}

impl TrainReport {
    pub fn train_elbo(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_elbo).collect()
    }
}

/// Training options outside the model configuration.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions<'a> {
    /// Per-epoch metrics CSV (`epoch,train_elbo,wall_ms`).
    pub metrics: Option<&'a Path>,
    /// Skip the final IWAE evaluation.
    pub skip_eval: bool,
    pub exec: Exec,
}

fn regime(model: &Model, x: &Tensor) -> String {
    let g = Graph::new();
    let p = model.params.bind_const(&g);
    let (mu, sigma) = model.encode(&p, g.constant(x.clone()));
    let sv = sigma.value();
    let (lo, hi) = sv.data().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &s| (a.min(s), b.max(s)));
    let c = model.curvature();
    let max_norm = (0..mu.rows())
        .map(|i| mu.value().row_slice(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    format!("c = {}, sigma in [{lo:.3e}, {hi:.3e}], max |mu| = {max_norm:.6}", c.value())
}

/// Trains a fresh model.
pub fn train(config: &VaeConfig, train_x: &Tensor, test_x: &Tensor, opts: &TrainOptions) -> Result<(Model, TrainReport)> {
    config.validate()?;
    let mut rng = rng_from_seed(config.seed);
    let mut model = Model::new(config.arch.clone(), &mut rng)?;
    if config.likelihood == Likelihood::Bernoulli {
        model.set_output_bias(&crate::nets::mean_logits(train_x));
    }
    let report = train_model(&mut model, config, train_x, test_x, opts, &mut rng)?;
    Ok((model, report))
}

/// Continues training `model` in place.
pub fn train_model(
    model: &mut Model,
    config: &VaeConfig,
    train_x: &Tensor,
    test_x: &Tensor,
    opts: &TrainOptions,
    rng: &mut RngState,
) -> Result<TrainReport> {
    config.validate()?;
    for t in [train_x, test_x] {
        if t.cols() != config.arch.input_dim && !t.is_empty() {
            return Err(VaeError::DataShape { expected: config.arch.input_dim, found: t.cols() });
        }
    }
    let start = Instant::now();
    let mut metrics = match opts.metrics {
        Some(path) => {
            let mut f = std::fs::File::create(path)?;
            writeln!(f, "epoch,train_elbo,wall_ms")?;
            Some(f)
        }
        None => None,
    };
    let mut adam = Adam::new(&model.params, config.adam);
    let mut order: Vec<usize> = (0..train_x.rows()).collect();
    let mut report = TrainReport {
        seed: config.seed,
        config_hash: config.hash(),
        epochs: Vec::with_capacity(config.epochs),
        test_neg_iwae: None,
        wall_ms: 0,
        unstable: false,
        diagnostics: None,
    };
    'epochs: for epoch in 1..=config.epochs {
        order.shuffle(rng);
        let mut sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let x = train_x.gather_rows(batch);
            let mut noise = RngNoise { rng: &mut *rng, sampler: config.radius_sampler };
            let step = elbo_and_grad(model, config, &x, &mut noise);
            let failure = match &step {
                Ok((v, grads)) if v.is_finite() && grads.iter().all(Tensor::all_finite) => None,
                Ok((v, _)) => Some(format!("non-finite loss {v} at epoch {epoch}")),
                Err(e) => Some(format!("{e} at epoch {epoch}")),
            };
            if let Some(msg) = failure {
                report.unstable = true;
                report.diagnostics = Some(format!("{msg}; {}", regime(model, &x)));
                break 'epochs;
            }
            let (v, mut grads) = step.expect("checked above");
            grads.iter_mut().for_each(|g| g.data_mut().iter_mut().for_each(|x| *x = -*x));
            adam.step(&mut model.params, &grads);
            sum += v * batch.len() as f64;
        }
        let stats = EpochStats { epoch, train_elbo: sum / train_x.rows() as f64, wall_ms: start.elapsed().as_millis() };
        if let Some(f) = metrics.as_mut() {
            writeln!(f, "{},{},{}", stats.epoch, stats.train_elbo, stats.wall_ms)?;
        }
        report.epochs.push(stats);
    }
    if !report.unstable && !opts.skip_eval && !test_x.is_empty() {
        match iwae(model, config, test_x, config.k_eval, config.seed ^ 0x5eed, opts.exec) {
            Ok(vals) if vals.iter().all(|v| v.is_finite()) => {
                report.test_neg_iwae = Some(-vals.iter().sum::<f64>() / vals.len() as f64);
            }
            Ok(_) => {
                report.unstable = true;
                report.diagnostics = Some(format!("non-finite test IWAE; {}", regime(model, test_x)));
            }
            Err(e) => {
                report.unstable = true;
                report.diagnostics = Some(format!("{e} during evaluation"));
            }
        }
    }
    report.wall_ms = start.elapsed().as_millis();
    Ok(report)
}

/// Posterior means for every row, as ball points.
pub fn posterior_means(model: &Model, x: &Tensor) -> std::result::Result<Vec<BallPoint>, crate::ball::GeometryError> {
    let g = Graph::new();
    let p = model.params.bind_const(&g);
    let (mu, _) = model.encode(&p, g.constant(x.clone()));
    let mv = mu.value();
    (0..mv.rows()).map(|i| BallPoint::new(mv.row_slice(i).to_vec(), model.curvature())).collect()
}
