//! Samplers for hyperbolic normals.
//!
//! Wrapped normals push a tangent Gaussian through `exp_μ`. Riemannian
//! normals are sampled in polar form: a uniform direction and a radius
//! drawn from `ρ^R` by rejection. Three radius proposals are provided;
//! the piecewise-exponential tangent hull is the default.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ball::{self, BallPoint, TangentVector};
use crate::hypdist::{DistError, Dispersion, Family, HypNormalParams, RadiusDensity};
use crate::special::{erf, log1mexp};

/// Seedable generator used throughout the crate.
pub type RngState = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> RngState {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Rejections tolerated before a sampler reports a malformed proposal.
pub const MAX_REJECTIONS: u64 = 10_000;

/// Bound constants above this are refused.
pub const IMPRACTICAL_BOUND: f64 = 1e6;

pub const ARS_POINTS: usize = 20;
pub const ETA_MIN: f64 = 0.1;
pub const ETA_MAX: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SampleError {
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error("rejection bound M = {0:e} is impractical")]
    ImpracticalBound(f64),
    #[error("proposal cannot bound this target: {0}")]
    Unsupported(&'static str),
    #[error("{0} consecutive rejections; the proposal is malformed")]
    TooManyRejections(u64),
}

pub type Result<T> = std::result::Result<T, SampleError>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusSampler {
    #[default]
    Ars,
    TruncNorm,
    Gamma,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AcceptanceStats {
    pub proposals: u64,
    pub accepted: u64,
}

impl AcceptanceStats {
    pub fn rate(&self) -> f64 {
        if self.proposals == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }

    pub fn merge(&mut self, other: AcceptanceStats) {
        self.proposals += other.proposals;
        self.accepted += other.accepted;
    }
}

/// Uniform direction on `S^{d-1}`.
pub fn sample_sphere<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = ball::norm_sq(&v).sqrt();
        if n > 1e-150 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Initial abscissae `x_k = m + η_k · min(s, 0.95 m / η_max)`.
pub fn ars_init_grid(rd: &RadiusDensity) -> std::result::Result<Vec<f64>, DistError> {
    let m = rd.mean()?;
    let s = rd.std_dev()?.max(1e-3 * m);
    let half = ARS_POINTS / 2;
    let step = s.min(0.95 * m / ETA_MAX);
    let eta = |i: usize| ETA_MIN + (ETA_MAX - ETA_MIN) * i as f64 / (half - 1) as f64;
    let mut xs: Vec<f64> = (0..half).rev().map(|i| m - eta(i) * step).collect();
    xs.extend((0..half).map(|i| m + eta(i) * step));
    Ok(xs)
}

/// `ln((e^y - 1) / y)`, with value 0 at `y = 0`.
fn log_expm1_ratio(y: f64) -> f64 {
    if y.abs() < 1e-10 {
        0.5 * y
    } else if y > 0.0 {
        y + log1mexp(-y) - y.ln()
    } else {
        (-y.exp_m1()).ln() - (-y).ln()
    }
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    lo: f64,
    hi: f64,
    /// Tangent value at `lo` and slope.
    h_lo: f64,
    slope: f64,
    log_mass: f64,
}

/// Tangent-line upper hull of `ln ρ` with piecewise-exponential sampling.
#[derive(Debug, Clone)]
pub struct ArsProposal {
    rd: RadiusDensity,
    abscissae: Vec<f64>,
    pieces: Vec<Piece>,
    cumulative: Vec<f64>,
    log_total: f64,
}

impl ArsProposal {
    pub fn new(rd: RadiusDensity) -> Result<Self> {
        let xs = ars_init_grid(&rd)?;
        Self::with_abscissae(rd, xs)
    }

    pub fn with_abscissae(rd: RadiusDensity, mut xs: Vec<f64>) -> Result<Self> {
        // The last tangent must decrease for the hull to be integrable.
        let mut gap = (xs[xs.len() - 1] - xs[0]).max(rd.sigma());
        while rd.dlog_unnormalized(*xs.last().unwrap()) >= 0.0 {
            let last = *xs.last().unwrap();
            xs.push(last + gap);
            gap *= 2.0;
            if xs.len() > 200 {
                return Err(SampleError::Unsupported("hull grid never passes the mode"));
            }
        }
        let h: Vec<f64> = xs.iter().map(|&x| rd.log_unnormalized(x)).collect();
        let dh: Vec<f64> = xs.iter().map(|&x| rd.dlog_unnormalized(x)).collect();
        let k = xs.len();
        let mut bounds = Vec::with_capacity(k + 1);
        bounds.push(0.0);
        for j in 0..k - 1 {
            let den = dh[j] - dh[j + 1];
            let z = if den.abs() < 1e-300 {
                0.5 * (xs[j] + xs[j + 1])
            } else {
                (h[j + 1] - h[j] - xs[j + 1] * dh[j + 1] + xs[j] * dh[j]) / den
            };
            bounds.push(z.clamp(xs[j], xs[j + 1]));
        }
        bounds.push(f64::INFINITY);
        let mut pieces = Vec::with_capacity(k);
        for j in 0..k {
            let (lo, hi) = (bounds[j], bounds[j + 1]);
            let h_lo = h[j] + dh[j] * (lo - xs[j]);
            let slope = dh[j];
            let log_mass = if hi.is_infinite() {
                h_lo - (-slope).ln()
            } else {
                let w = hi - lo;
                h_lo + w.ln() + log_expm1_ratio(slope * w)
            };
            pieces.push(Piece { lo, hi, h_lo, slope, log_mass });
        }
        let log_total = crate::special::log_sum_exp(&pieces.iter().map(|p| p.log_mass).collect::<Vec<_>>());
        let mut acc = 0.0;
        let cumulative = pieces
            .iter()
            .map(|p| {
                acc += (p.log_mass - log_total).exp();
                acc
            })
            .collect();
        Ok(Self { rd, abscissae: xs, pieces, cumulative, log_total })
    }

    pub fn abscissae(&self) -> &[f64] {
        &self.abscissae
    }

    /// Log of the hull's total mass.
    pub fn log_total_mass(&self) -> f64 {
        self.log_total
    }

    /// Log masses of the hull pieces.
    pub fn piece_log_masses(&self) -> Vec<f64> {
        self.pieces.iter().map(|p| p.log_mass).collect()
    }

    fn piece_at(&self, r: f64) -> &Piece {
        let i = self.pieces.partition_point(|p| p.hi < r);
        &self.pieces[i.min(self.pieces.len() - 1)]
    }

    /// Hull value (an upper bound on `ln ρ` up to the same constant).
    pub fn hull(&self, r: f64) -> f64 {
        let p = self.piece_at(r);
        p.h_lo + p.slope * (r - p.lo)
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let j = self.cumulative.partition_point(|&c| c < u).min(self.pieces.len() - 1);
        let p = &self.pieces[j];
        let f: f64 = rng.random();
        let s = p.slope;
        if p.hi.is_infinite() {
            return p.lo + (-f).ln_1p() / s;
        }
        let w = p.hi - p.lo;
        let t = if (s * w).abs() < 1e-12 {
            p.lo + f * w
        } else if s > 0.0 {
            p.hi + (f + (1.0 - f) * (-s * w).exp()).ln() / s
        } else {
            p.lo + (f * (s * w).exp_m1()).ln_1p() / s
        };
        t.clamp(p.lo, p.hi)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(f64, AcceptanceStats)> {
        let mut stats = AcceptanceStats::default();
        loop {
            let r = self.draw(rng);
            let u: f64 = rng.random();
            stats.proposals += 1;
            if u.ln() < self.rd.log_unnormalized(r) - self.hull(r) {
                stats.accepted += 1;
                return Ok((r, stats));
            }
            if stats.proposals > MAX_REJECTIONS {
                return Err(SampleError::TooManyRejections(stats.proposals));
            }
        }
    }
}

pub fn sample_radius_ars<R: Rng + ?Sized>(rd: &RadiusDensity, rng: &mut R) -> Result<(f64, AcceptanceStats)> {
    ArsProposal::new(*rd)?.sample(rng)
}

fn require_riemannian(rd: &RadiusDensity) -> Result<()> {
    if rd.family() != Family::Riemannian {
        return Err(DistError::FamilyMismatch(Family::Riemannian).into());
    }
    if rd.curvature().is_euclidean() && rd.dim() > 1 {
        return Err(SampleError::Unsupported("c = 0 has no sinh expansion"));
    }
    Ok(())
}

/// `ln M` for the truncated-normal proposal.
pub fn truncnorm_log_bound(rd: &RadiusDensity) -> Result<f64> {
    require_riemannian(rd)?;
    let (s, n) = (rd.sigma(), (rd.dim() - 1) as f64);
    let sc = rd.curvature().sqrt();
    let log_zg = truncnorm_log_zg(rd);
    let scale = if n == 0.0 { 0.0 } else { n * (2.0 * sc).ln() };
    Ok(log_zg - rd.log_normalizer() - scale + 0.5 * n * n * sc * sc * s * s)
}

fn truncnorm_log_zg(rd: &RadiusDensity) -> f64 {
    let (s, n) = (rd.sigma(), (rd.dim() - 1) as f64);
    let sc = rd.curvature().sqrt();
    (std::f64::consts::PI / 2.0).sqrt().ln() + s.ln() + (1.0 + erf(n * sc * s / std::f64::consts::SQRT_2)).ln()
}

/// Radius by rejection from `N((d-1)√c σ², σ²)` truncated to `r > 0`.
pub fn sample_radius_truncnorm<R: Rng + ?Sized>(rd: &RadiusDensity, rng: &mut R) -> Result<(f64, AcceptanceStats)> {
    let log_m = truncnorm_log_bound(rd)?;
    if log_m > IMPRACTICAL_BOUND.ln() {
        return Err(SampleError::ImpracticalBound(log_m.exp()));
    }
    let (s, n) = (rd.sigma(), (rd.dim() - 1) as f64);
    let mean = n * rd.curvature().sqrt() * s * s;
    let log_zg = truncnorm_log_zg(rd);
    let mut stats = AcceptanceStats::default();
    loop {
        let r = loop {
            let x = mean + s * rng.sample::<f64, _>(StandardNormal);
            if x > 0.0 {
                break x;
            }
        };
        stats.proposals += 1;
        let log_g = -(r - mean).powi(2) / (2.0 * s * s) - log_zg;
        let u: f64 = rng.random();
        if u.ln() < rd.log_pdf(r) - log_g - log_m {
            stats.accepted += 1;
            return Ok((r, stats));
        }
        if stats.proposals > MAX_REJECTIONS {
            return Err(SampleError::TooManyRejections(stats.proposals));
        }
    }
}

/// `ln M` for the `Gamma(2, σ)` proposal.
pub fn gamma_log_bound(rd: &RadiusDensity) -> Result<f64> {
    require_riemannian(rd)?;
    if rd.dim() < 2 {
        return Err(SampleError::Unsupported("Gamma(2, σ) cannot bound the half-normal at r → 0"));
    }
    let (s, n) = (rd.sigma(), (rd.dim() - 1) as f64);
    let sc = rd.curvature().sqrt();
    let log_zg = 2.0 * s.ln();
    Ok(log_zg - rd.log_normalizer() - (n - 1.0) * (2.0 * sc).ln() + 0.5 * (n * sc * s + 1.0).powi(2))
}

/// Radius by rejection from a `Gamma(2, σ)` proposal.
pub fn sample_radius_gamma<R: Rng + ?Sized>(rd: &RadiusDensity, rng: &mut R) -> Result<(f64, AcceptanceStats)> {
    let log_m = gamma_log_bound(rd)?;
    if log_m > IMPRACTICAL_BOUND.ln() {
        return Err(SampleError::ImpracticalBound(log_m.exp()));
    }
    let s = rd.sigma();
    let gamma = Gamma::new(2.0, s).expect("valid gamma parameters");
    let mut stats = AcceptanceStats::default();
    loop {
        let r: f64 = gamma.sample(rng);
        stats.proposals += 1;
        let log_g = r.ln() - r / s - 2.0 * s.ln();
        let u: f64 = rng.random();
        if r > 0.0 && u.ln() < rd.log_pdf(r) - log_g - log_m {
            stats.accepted += 1;
            return Ok((r, stats));
        }
        if stats.proposals > MAX_REJECTIONS {
            return Err(SampleError::TooManyRejections(stats.proposals));
        }
    }
}

pub fn sample_radius<R: Rng + ?Sized>(
    kind: RadiusSampler,
    rd: &RadiusDensity,
    rng: &mut R,
) -> Result<(f64, AcceptanceStats)> {
    match kind {
        RadiusSampler::Ars => sample_radius_ars(rd, rng),
        RadiusSampler::TruncNorm => sample_radius_truncnorm(rd, rng),
        RadiusSampler::Gamma => sample_radius_gamma(rd, rng),
    }
}

/// Maps a tangent-space step at the mean onto the ball: `exp_μ(u / λ_μ)`.
///
/// In the Euclidean mode this is `μ + u`.
pub fn push_forward(mu: &BallPoint, u: &[f64]) -> BallPoint {
    let c = mu.curvature();
    let lam = if c.is_euclidean() { 1.0 } else { ball::lambda(mu) };
    let v = u.iter().map(|x| x / lam).collect();
    ball::exp_map(&TangentVector::new(mu.clone(), v).expect("dimension checked by caller"))
}

/// Draws one point from a hyperbolic normal.
pub fn sample_hyp_normal<R: Rng + ?Sized>(
    params: &HypNormalParams,
    sampler: RadiusSampler,
    rng: &mut R,
) -> Result<BallPoint> {
    let d = params.dim();
    let u: Vec<f64> = match (params.family, &params.sigma) {
        (Family::Wrapped, Dispersion::Isotropic(s)) => {
            (0..d).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect()
        }
        (Family::Wrapped, Dispersion::Diagonal(ss)) => {
            ss.iter().map(|s| s * rng.sample::<f64, _>(StandardNormal)).collect()
        }
        (Family::Riemannian, Dispersion::Isotropic(s)) => {
            if params.curvature().is_euclidean() {
                (0..d).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect()
            } else {
                let rd = params.radius_density()?;
                let (r, _) = sample_radius(sampler, &rd, rng)?;
                sample_sphere(d, rng).into_iter().map(|a| r * a).collect()
            }
        }
        (Family::Riemannian, Dispersion::Diagonal(_)) => return Err(DistError::AnisotropicRiemannian.into()),
    };
    Ok(push_forward(&params.mu, &u))
}
