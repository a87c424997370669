//! Wrapped and Riemannian normal distributions on the Poincaré ball.
//!
//! Densities are taken with respect to the Riemannian volume `dM`. In
//! geodesic polar coordinates around the mean the volume element is
//! `(sinh(√c r)/√c)^{d-1} dr dα`, so both families factor into a uniform
//! direction and a radius law:
//!
//! * Riemannian: `ρ^R(r) ∝ e^{-r²/2σ²} (sinh(√c r)/√c)^{d-1}`
//! * wrapped:    `ρ^W(r) ∝ e^{-r²/2σ²} r^{d-1}` (a scaled χ_d law)
//!
//! Expanding the `sinh` power with the binomial formula turns every radius
//! integral of the Riemannian family into a short alternating sum of
//! Gaussian/erf terms, evaluated here as signed log-sum-exps that refuse to
//! return a value once cancellation eats more than twelve digits.

use std::f64::consts::{LN_2, PI, SQRT_2};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ball::{self, BallPoint, Curvature, GeometryError};
use crate::quad;
use crate::special::{erf, ln_binomial, ln_gamma, log_erf_diff, log_sinh, log_sinhc, log_sphere_area, SignedLogSum};

const LN_SQRT_PI_2: f64 = 0.225_791_352_644_727_4; // ln √(π/2)

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("dispersion must be finite and positive, got {0}")]
    InvalidSigma(f64),
    #[error("dimension must be at least 1")]
    InvalidDimension,
    #[error("alternating sum lost precision: |sum| / max|term| = {ratio:e}")]
    Precision { ratio: f64 },
    #[error("operation requires the {0:?} family")]
    FamilyMismatch(Family),
    #[error("anisotropic dispersion is only supported by the wrapped family")]
    AnisotropicRiemannian,
    #[error("probability must lie in [0, 1], got {0}")]
    InvalidProbability(f64),
}

impl From<crate::special::Cancellation> for DistError {
    fn from(c: crate::special::Cancellation) -> Self {
        DistError::Precision { ratio: c.ratio }
    }
}

pub type Result<T> = std::result::Result<T, DistError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Wrapped,
    Riemannian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dispersion {
    Isotropic(f64),
    /// Per-coordinate standard deviations (wrapped family only).
    Diagonal(Vec<f64>),
}

fn check_sigma(s: f64) -> Result<f64> {
    if s.is_finite() && s > 0.0 {
        Ok(s)
    } else {
        Err(DistError::InvalidSigma(s))
    }
}

/// Fréchet mean, dispersion and family of a hyperbolic normal.
#[derive(Debug, Clone, PartialEq)]
pub struct HypNormalParams {
    pub mu: BallPoint,
    pub sigma: Dispersion,
    pub family: Family,
}

impl HypNormalParams {
    pub fn new(mu: BallPoint, sigma: f64, family: Family) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(Self { mu, sigma: Dispersion::Isotropic(sigma), family })
    }

    pub fn diagonal(mu: BallPoint, sigmas: Vec<f64>, family: Family) -> Result<Self> {
        if family == Family::Riemannian {
            return Err(DistError::AnisotropicRiemannian);
        }
        if sigmas.len() != mu.dim() {
            return Err(GeometryError::DimensionMismatch(mu.dim(), sigmas.len()).into());
        }
        for &s in &sigmas {
            check_sigma(s)?;
        }
        Ok(Self { mu, sigma: Dispersion::Diagonal(sigmas), family })
    }

    pub fn dim(&self) -> usize {
        self.mu.dim()
    }

    pub fn curvature(&self) -> Curvature {
        self.mu.curvature()
    }

    /// The scalar dispersion, if isotropic.
    pub fn isotropic_sigma(&self) -> Option<f64> {
        match self.sigma {
            Dispersion::Isotropic(s) => Some(s),
            Dispersion::Diagonal(_) => None,
        }
    }

    pub fn log_pdf(&self, z: &BallPoint) -> Result<f64> {
        match self.family {
            Family::Wrapped => wrapped_log_pdf(self, z),
            Family::Riemannian => riemannian_log_pdf(self, z),
        }
    }

    pub fn radius_density(&self) -> Result<RadiusDensity> {
        let s = self.isotropic_sigma().ok_or(DistError::AnisotropicRiemannian)?;
        RadiusDensity::new(s, self.curvature(), self.dim(), self.family)
    }
}

/// Log-density of the Riemannian normal with respect to `dM`.
pub fn riemannian_log_pdf(params: &HypNormalParams, z: &BallPoint) -> Result<f64> {
    if params.family != Family::Riemannian {
        return Err(DistError::FamilyMismatch(Family::Riemannian));
    }
    let sigma = params.isotropic_sigma().ok_or(DistError::AnisotropicRiemannian)?;
    let r = ball::distance(&params.mu, z)?;
    let log_z = riemannian_log_z(sigma, params.curvature(), params.dim())?;
    Ok(-r * r / (2.0 * sigma * sigma) - log_z)
}

/// Log-density of the wrapped normal with respect to `dM`.
pub fn wrapped_log_pdf(params: &HypNormalParams, z: &BallPoint) -> Result<f64> {
    if params.family != Family::Wrapped {
        return Err(DistError::FamilyMismatch(Family::Wrapped));
    }
    let d = params.dim() as f64;
    let c = params.curvature();
    let lam = if c.is_euclidean() { 1.0 } else { ball::lambda(&params.mu) };
    let v: Vec<f64> = ball::log_map(&params.mu, z)?.vec.iter().map(|x| lam * x).collect();
    let r = ball::norm_sq(&v).sqrt();
    let gauss = match &params.sigma {
        Dispersion::Isotropic(s) => -0.5 * d * (2.0 * PI * s * s).ln() - r * r / (2.0 * s * s),
        Dispersion::Diagonal(ss) => v
            .iter()
            .zip(ss)
            .map(|(vi, s)| -0.5 * (2.0 * PI * s * s).ln() - vi * vi / (2.0 * s * s))
            .sum(),
    };
    Ok(gauss - (d - 1.0) * log_sinhc(c.sqrt() * r))
}

/// `ln Z^R = ln Z_r^R + ln |S^{d-1}|`, the full Riemannian normal constant.
pub fn riemannian_log_z(sigma: f64, c: Curvature, d: usize) -> Result<f64> {
    Ok(riemannian_log_zr(sigma, c, d)? + log_sphere_area(d))
}

/// Binomial expansion terms `(s_k, ln K_k, a_k)` of `(sinh(√c r)/√c)^{d-1}`.
fn terms(c: Curvature, d: usize) -> impl Iterator<Item = (bool, f64, f64)> {
    let n = d - 1;
    let sc = c.sqrt();
    let log_scale = n as f64 * (2.0 * sc).ln();
    (0..=n).map(move |k| {
        let positive = k % 2 == 0;
        let log_k = ln_binomial(n as u64, k as u64) - log_scale;
        let a = (n as f64 - 2.0 * k as f64) * sc;
        (positive, log_k, a)
    })
}

/// `ln Z_r^R = ln ∫₀^∞ e^{-r²/2σ²} (sinh(√c r)/√c)^{d-1} dr`.
///
/// Terms `k` and `d-1-k` are paired, which removes the `1 + erf` offsets
/// of the raw expansion.
pub fn riemannian_log_zr(sigma: f64, c: Curvature, d: usize) -> Result<f64> {
    check_sigma(sigma)?;
    if d == 0 {
        return Err(DistError::InvalidDimension);
    }
    if c.is_euclidean() || d == 1 {
        return Ok(chi_log_zr(sigma, d));
    }
    let mut sum = SignedLogSum::new();
    let n = d - 1;
    for (k, (positive, log_k, a)) in terms(c, d).enumerate() {
        let e = 0.5 * a * a * sigma * sigma;
        if 2 * k < n {
            if d.is_multiple_of(2) {
                sum.push(positive, LN_2 + log_k + e + erf(a * sigma / SQRT_2).ln());
            } else {
                sum.push(positive, LN_2 + log_k + e);
            }
        } else if 2 * k == n {
            sum.push(positive, log_k);
        }
    }
    let (positive, log_abs) = sum.finish()?;
    debug_assert!(positive);
    Ok(log_abs + LN_SQRT_PI_2 + sigma.ln())
}

/// `ln ∫₀^∞ e^{-r²/2σ²} r^{d-1} dr = ln(2^{d/2-1} σ^d Γ(d/2))`.
fn chi_log_zr(sigma: f64, d: usize) -> f64 {
    let h = d as f64 / 2.0;
    (h - 1.0) * LN_2 + d as f64 * sigma.ln() + ln_gamma(h)
}

/// `E[r²]` under `ρ^R`, paired like [`riemannian_log_zr`].
fn riemannian_second_moment(sigma: f64, c: Curvature, d: usize, log_zr: f64) -> Result<f64> {
    if c.is_euclidean() || d == 1 {
        return Ok(d as f64 * sigma * sigma);
    }
    let s2 = sigma * sigma;
    let n = d - 1;
    let mut sum = SignedLogSum::new();
    for (k, (positive, log_k, a)) in terms(c, d).enumerate() {
        let m = a * s2;
        let e = 0.5 * a * a * s2;
        let log_g = LN_SQRT_PI_2 + sigma.ln();
        if 2 * k < n {
            if d.is_multiple_of(2) {
                let y = a * sigma / SQRT_2;
                sum.push(positive, log_k + LN_2 + (m * m + s2).ln() + log_g + e + erf(y).ln());
                sum.push(positive, log_k + LN_2 + m.ln() + s2.ln());
            } else {
                sum.push(positive, log_k + LN_2 + (m * m + s2).ln() + log_g + e);
            }
        } else if 2 * k == n {
            sum.push(positive, log_k + 3.0 * sigma.ln() + LN_SQRT_PI_2);
        }
    }
    let (_, log_abs) = sum.finish()?;
    Ok((log_abs - log_zr).exp())
}

/// `ln Z_r^R` and its derivative in σ, `E[r²]/σ³`.
pub fn riemannian_log_zr_grad(sigma: f64, c: Curvature, d: usize) -> Result<(f64, f64)> {
    let log_zr = riemannian_log_zr(sigma, c, d)?;
    let m2 = riemannian_second_moment(sigma, c, d, log_zr)?;
    Ok((log_zr, m2 / sigma.powi(3)))
}

/// Unnormalized `ρ^R(r)` by the binomial expansion.
pub fn radius_density_developed(r: f64, sigma: f64, c: Curvature, d: usize) -> Result<f64> {
    check_sigma(sigma)?;
    if d == 0 {
        return Err(DistError::InvalidDimension);
    }
    if c.is_euclidean() {
        return Ok((-r * r / (2.0 * sigma * sigma)).exp() * r.powi(d as i32 - 1));
    }
    if d >= 2 && r == 0.0 {
        return Ok(0.0);
    }
    let mut sum = SignedLogSum::new();
    for (positive, log_k, a) in terms(c, d) {
        sum.push(positive, log_k - r * r / (2.0 * sigma * sigma) + a * r);
    }
    Ok(sum.value()?)
}

/// `E[r]` under `ρ^R`.
pub fn riemannian_radius_mean(sigma: f64, c: Curvature, d: usize) -> Result<f64> {
    let log_zr = riemannian_log_zr(sigma, c, d)?;
    if c.is_euclidean() || d == 1 {
        let h = d as f64 / 2.0;
        return Ok(sigma * SQRT_2 * (ln_gamma(h + 0.5) - ln_gamma(h)).exp());
    }
    let s2 = sigma * sigma;
    let n = d - 1;
    let mut sum = SignedLogSum::new();
    for (k, (positive, log_k, a)) in terms(c, d).enumerate() {
        let e = 0.5 * a * a * s2;
        let log_m = LN_SQRT_PI_2 + 3.0 * sigma.ln() + a.ln();
        if 2 * k < n {
            if d.is_multiple_of(2) {
                sum.push(positive, log_k + LN_2 + e + log_m);
            } else {
                let y = a * sigma / SQRT_2;
                sum.push(positive, log_k + LN_2 + e + log_m + erf(y).ln());
                sum.push(positive, log_k + LN_2 + s2.ln());
            }
        } else if 2 * k == n {
            sum.push(positive, log_k + s2.ln());
        }
    }
    let (_, log_abs) = sum.finish()?;
    Ok((log_abs - log_zr).exp())
}

/// `F^R(r) = ∫₀^r ρ^R / Z_r^R`.
pub fn riemannian_radius_cdf(r: f64, sigma: f64, c: Curvature, d: usize) -> Result<f64> {
    RadiusDensity::new(sigma, c, d, Family::Riemannian)?.cdf(r)
}

/// Radius law of a hyperbolic normal centred anywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusDensity {
    sigma: f64,
    c: Curvature,
    d: usize,
    family: Family,
    log_zr: f64,
}

impl RadiusDensity {
    pub fn new(sigma: f64, c: Curvature, d: usize, family: Family) -> Result<Self> {
        check_sigma(sigma)?;
        if d == 0 {
            return Err(DistError::InvalidDimension);
        }
        let log_zr = match family {
            Family::Riemannian => riemannian_log_zr(sigma, c, d)?,
            Family::Wrapped => chi_log_zr(sigma, d),
        };
        Ok(Self { sigma, c, d, family, log_zr })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn curvature(&self) -> Curvature {
        self.c
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// `ln Z_r`, the normalizer of [`Self::log_unnormalized`].
    pub fn log_normalizer(&self) -> f64 {
        self.log_zr
    }

    /// Upper radius beyond which the remaining mass is negligible.
    pub fn r_max(&self) -> f64 {
        let sc = if self.family == Family::Riemannian { self.c.sqrt() } else { 0.0 };
        12.0 * self.sigma + (self.d as f64 - 1.0) * sc * self.sigma * self.sigma + 5.0
    }

    fn is_chi(&self) -> bool {
        self.family == Family::Wrapped || self.c.is_euclidean() || self.d == 1
    }

    /// `ln` of the unnormalized radius density (sinh form).
    pub fn log_unnormalized(&self, r: f64) -> f64 {
        if r < 0.0 {
            return f64::NEG_INFINITY;
        }
        let gauss = -r * r / (2.0 * self.sigma * self.sigma);
        if self.d == 1 {
            return gauss;
        }
        let n = (self.d - 1) as f64;
        if self.is_chi() {
            return gauss + n * r.ln();
        }
        let sc = self.c.sqrt();
        gauss + n * (log_sinh(sc * r) - sc.ln())
    }

    /// Derivative of [`Self::log_unnormalized`] in `r`.
    pub fn dlog_unnormalized(&self, r: f64) -> f64 {
        let n = (self.d - 1) as f64;
        let g = -r / (self.sigma * self.sigma);
        if self.d == 1 {
            g
        } else if self.is_chi() {
            g + n / r
        } else {
            let sc = self.c.sqrt();
            g + n * sc / (sc * r).tanh()
        }
    }

    pub fn log_pdf(&self, r: f64) -> f64 {
        self.log_unnormalized(r) - self.log_zr
    }

    pub fn pdf(&self, r: f64) -> f64 {
        self.log_pdf(r).exp()
    }

    pub fn mean(&self) -> Result<f64> {
        if self.is_chi() {
            let h = self.d as f64 / 2.0;
            return Ok(self.sigma * SQRT_2 * (ln_gamma(h + 0.5) - ln_gamma(h)).exp());
        }
        riemannian_radius_mean(self.sigma, self.c, self.d)
    }

    pub fn second_moment(&self) -> Result<f64> {
        riemannian_second_moment(self.sigma, self.c, self.d, self.log_zr)
    }

    pub fn std_dev(&self) -> Result<f64> {
        let m = self.mean()?;
        let v = self.second_moment()? - m * m;
        Ok(v.max(0.0).sqrt())
    }

    /// Distribution function of the radius.
    pub fn cdf(&self, r: f64) -> Result<f64> {
        if r <= 0.0 {
            return Ok(0.0);
        }
        if r.is_infinite() {
            return Ok(1.0);
        }
        if self.is_chi() {
            let x = r * r / (2.0 * self.sigma * self.sigma);
            return Ok(statrs::function::gamma::gamma_lr(self.d as f64 / 2.0, x));
        }
        match self.cdf_terms(r) {
            Ok(v) => Ok(v.clamp(0.0, 1.0)),
            Err(DistError::Precision { .. }) => Ok(self.cdf_quad(r)),
            Err(e) => Err(e),
        }
    }

    /// Term-wise integral of the developed density over `[0, r]`.
    fn cdf_terms(&self, r: f64) -> Result<f64> {
        let s = self.sigma;
        let mut sum = SignedLogSum::new();
        for (positive, log_k, a) in terms(self.c, self.d) {
            let x0 = -a * s / SQRT_2;
            let x1 = (r - a * s * s) / (s * SQRT_2);
            sum.push(positive, log_k + 0.5 * a * a * s * s + log_erf_diff(x0, x1));
        }
        let (_, log_n) = sum.finish()?;
        Ok((log_n + LN_SQRT_PI_2 + s.ln() - self.log_zr).exp())
    }

    fn cdf_quad(&self, r: f64) -> f64 {
        quad::integrate(|t| self.pdf(t), 0.0, r, 1e-14).clamp(0.0, 1.0)
    }

    /// `∂F(r; σ)/∂σ` at fixed `r`.
    pub fn dcdf_dsigma(&self, r: f64) -> Result<f64> {
        if r <= 0.0 || r.is_infinite() {
            return Ok(0.0);
        }
        let s = self.sigma;
        let f = self.cdf(r)?;
        let dlogz = if self.is_chi() {
            self.d as f64 / s
        } else {
            self.second_moment()? / s.powi(3)
        };
        // ∂N/∂σ = ∫₀^r t²/σ³ ρ(t) dt, normalized by Z_r
        let dn = if self.is_chi() {
            self.chi_partial_second_moment(r) / s.powi(3)
        } else {
            match self.dn_terms(r) {
                Ok(v) => v,
                Err(DistError::Precision { .. }) => {
                    quad::integrate(|t| t * t * self.pdf(t), 0.0, r, 1e-15) / s.powi(3)
                }
                Err(e) => return Err(e),
            }
        };
        Ok(dn - f * dlogz)
    }

    /// `∫₀^r t² ρ^W(t) dt / Z_r` for the χ law.
    fn chi_partial_second_moment(&self, r: f64) -> f64 {
        let h = self.d as f64 / 2.0;
        let x = r * r / (2.0 * self.sigma * self.sigma);
        let ratio = (ln_gamma(h + 1.0) - ln_gamma(h)).exp();
        2.0 * self.sigma * self.sigma * ratio * statrs::function::gamma::gamma_lr(h + 1.0, x)
    }

    fn dn_terms(&self, r: f64) -> Result<f64> {
        let s = self.sigma;
        let s2 = s * s;
        let mut sum = SignedLogSum::new();
        for (positive, log_k, a) in terms(self.c, self.d) {
            let m = a * s2;
            let x0 = -a * s / SQRT_2;
            let x1 = (r - m) / (s * SQRT_2);
            let log_b = log_erf_diff(x0, x1);
            sum.push(positive, log_k + (m * m + s2).ln() + LN_SQRT_PI_2 + s.ln() + 0.5 * a * a * s2 + log_b);
            sum.push(positive != (r + m > 0.0), log_k + s2.ln() + (r + m).abs().ln() - r * r / (2.0 * s2) + a * r);
            if m != 0.0 {
                sum.push(positive == (m > 0.0), log_k + s2.ln() + m.abs().ln());
            }
        }
        let (positive, log_abs) = sum.finish()?;
        let v = (log_abs - self.log_zr - 3.0 * s.ln()).exp();
        Ok(if positive { v } else { -v })
    }

    /// Implicit reparametrization gradient `dr/dσ = -(∂F/∂σ) / ρ(r)`.
    pub fn implicit_dr_dsigma(&self, r: f64) -> Result<f64> {
        let p = self.pdf(r);
        if p <= 0.0 {
            return Ok(r / self.sigma);
        }
        Ok(-self.dcdf_dsigma(r)? / p)
    }

    /// Inverse distribution function by safeguarded Newton iteration.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(DistError::InvalidProbability(u));
        }
        if u == 0.0 {
            return Ok(0.0);
        }
        let mut lo = 0.0;
        let mut hi = self.r_max();
        if u == 1.0 {
            return Ok(hi);
        }
        let mut r = self.mean()?.clamp(lo, hi);
        for _ in 0..200 {
            let f = self.cdf(r)? - u;
            if f > 0.0 {
                hi = r;
            } else {
                lo = r;
            }
            let step = f / self.pdf(r);
            let mut next = r - step;
            if !(next > lo && next < hi) || !step.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - r).abs() <= 1e-15 * r.max(1e-300) || hi - lo <= 1e-15 * hi {
                return Ok(next);
            }
            r = next;
        }
        Ok(r)
    }
}

/// Radius of the mode of `ρ^R`, used to sanity-check sampler grids.
pub fn radius_mode(rd: &RadiusDensity) -> f64 {
    // log ρ is concave, so bisection on its derivative converges.
    let (mut lo, mut hi) = (1e-300f64, rd.r_max());
    if rd.dim() == 1 {
        return 0.0;
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if rd.dlog_unnormalized(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}
