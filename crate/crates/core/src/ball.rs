//! Closed-form geometry of the Poincaré ball `B_c^d`.
//!
//! The ball of curvature `-c` is the open Euclidean ball of radius `1/√c`
//! with the conformal metric `λ_z² ⟨·,·⟩`, where `λ_z = 2 / (1 - c‖z‖²)`.
//! `c = 0` is accepted and every operation then takes its Euclidean branch
//! (vector addition, Euclidean distance, identity exp/log), evaluated with
//! the plain Euclidean formula rather than as a limit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special::artanhc;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("curvature must be finite and non-negative, got {0}")]
    InvalidCurvature(f64),
    #[error("point lies outside the ball: c·‖z‖² = {0}")]
    OutsideBall(f64),
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("curvature mismatch: {0} vs {1}")]
    CurvatureMismatch(f64, f64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("gyroplane orientation vector is zero")]
    ZeroOrientation,
    #[error("empty coordinate vector")]
    Empty,
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// Relative radial margin kept between points and the boundary.
pub const BALL_EPS: f64 = 1e-5;

/// Non-negative curvature magnitude `c`; the ball has sectional curvature `-c`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Curvature(f64);

impl Curvature {
    pub const EUCLIDEAN: Curvature = Curvature(0.0);

    pub fn new(c: f64) -> Result<Self> {
        if c.is_finite() && c >= 0.0 {
            Ok(Self(c))
        } else {
            Err(GeometryError::InvalidCurvature(c))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn sqrt(self) -> f64 {
        self.0.sqrt()
    }

    pub fn is_euclidean(self) -> bool {
        self.0 == 0.0
    }

    /// Euclidean radius `1/√c` of the ball (infinite for `c = 0`).
    pub fn radius(self) -> f64 {
        if self.is_euclidean() {
            f64::INFINITY
        } else {
            1.0 / self.0.sqrt()
        }
    }

    /// Largest norm a stored point may have.
    pub fn max_norm(self) -> f64 {
        self.radius() * (1.0 - BALL_EPS)
    }
}

impl TryFrom<f64> for Curvature {
    type Error = GeometryError;
    fn try_from(c: f64) -> Result<Self> {
        Curvature::new(c)
    }
}

impl From<Curvature> for f64 {
    fn from(c: Curvature) -> f64 {
        c.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Radially clamps `coords` to norm at most `c.max_norm()`.
pub(crate) fn clamp_to_ball(coords: &mut [f64], c: Curvature) {
    if c.is_euclidean() {
        return;
    }
    let n = norm_sq(coords).sqrt();
    let max = c.max_norm();
    if n > max {
        let s = max / n;
        coords.iter_mut().for_each(|x| *x *= s);
    }
}

/// Möbius addition on raw coordinates. No clamping.
pub(crate) fn mobius_add_raw(x: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    if c == 0.0 {
        return x.iter().zip(y).map(|(a, b)| a + b).collect();
    }
    let xy = dot(x, y);
    let x2 = norm_sq(x);
    let y2 = norm_sq(y);
    let ax = 1.0 + 2.0 * c * xy + c * y2;
    let ay = 1.0 - c * x2;
    let den = 1.0 + 2.0 * c * xy + c * c * x2 * y2;
    x.iter().zip(y).map(|(a, b)| (ax * a + ay * b) / den).collect()
}

/// A point strictly inside the ball, tagged with its curvature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallPoint {
    coords: Vec<f64>,
    c: Curvature,
}

impl BallPoint {
    /// Validates and, within the boundary margin, radially clamps `coords`.
    ///
    /// Points with `c‖z‖² ≥ 1` are rejected.
    pub fn new(coords: Vec<f64>, c: Curvature) -> Result<Self> {
        if coords.is_empty() {
            return Err(GeometryError::Empty);
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let cn = c.value() * norm_sq(&coords);
        if cn >= 1.0 {
            return Err(GeometryError::OutsideBall(cn));
        }
        let mut coords = coords;
        clamp_to_ball(&mut coords, c);
        Ok(Self { coords, c })
    }

    /// Projects arbitrary finite coordinates into the ball.
    pub fn project(coords: Vec<f64>, c: Curvature) -> Result<Self> {
        if coords.is_empty() {
            return Err(GeometryError::Empty);
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let mut coords = coords;
        clamp_to_ball(&mut coords, c);
        Ok(Self { coords, c })
    }

    pub fn origin(d: usize, c: Curvature) -> Self {
        Self { coords: vec![0.0; d], c }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn curvature(&self) -> Curvature {
        self.c
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn norm(&self) -> f64 {
        norm_sq(&self.coords).sqrt()
    }

    /// Möbius negation `-z`.
    pub fn neg(&self) -> Self {
        Self { coords: self.coords.iter().map(|x| -x).collect(), c: self.c }
    }

    fn check_compatible(&self, other: &BallPoint) -> Result<()> {
        if self.c != other.c {
            return Err(GeometryError::CurvatureMismatch(self.c.value(), other.c.value()));
        }
        if self.dim() != other.dim() {
            return Err(GeometryError::DimensionMismatch(self.dim(), other.dim()));
        }
        Ok(())
    }
}

/// A tangent vector at `base`. Its Riemannian norm is `λ_base · ‖vec‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: BallPoint,
    pub vec: Vec<f64>,
}

impl TangentVector {
    pub fn new(base: BallPoint, vec: Vec<f64>) -> Result<Self> {
        if base.dim() != vec.len() {
            return Err(GeometryError::DimensionMismatch(base.dim(), vec.len()));
        }
        if vec.iter().any(|x| !x.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        Ok(Self { base, vec })
    }

    pub fn zero(base: BallPoint) -> Self {
        let d = base.dim();
        Self { base, vec: vec![0.0; d] }
    }

    /// Norm under the metric at the base point.
    ///
    /// The Euclidean mode carries the unit metric, so this is `‖vec‖` at `c = 0`.
    pub fn metric_norm(&self) -> f64 {
        let n = norm_sq(&self.vec).sqrt();
        if self.base.c.is_euclidean() {
            n
        } else {
            lambda(&self.base) * n
        }
    }
}

/// Conformal factor `λ_z = 2 / (1 - c‖z‖²)`.
pub fn lambda(z: &BallPoint) -> f64 {
    2.0 / (1.0 - z.c.value() * norm_sq(&z.coords))
}

/// Conformal factor on raw coordinates; errors outside the ball.
pub fn lambda_raw(z: &[f64], c: Curvature) -> Result<f64> {
    let cn = c.value() * norm_sq(z);
    if cn >= 1.0 {
        return Err(GeometryError::OutsideBall(cn));
    }
    Ok(2.0 / (1.0 - cn))
}

/// `z ⊕_c y`.
pub fn mobius_add(z: &BallPoint, y: &BallPoint) -> Result<BallPoint> {
    z.check_compatible(y)?;
    let mut out = mobius_add_raw(&z.coords, &y.coords, z.c.value());
    clamp_to_ball(&mut out, z.c);
    Ok(BallPoint { coords: out, c: z.c })
}

/// Geodesic distance.
pub fn distance(z: &BallPoint, y: &BallPoint) -> Result<f64> {
    z.check_compatible(y)?;
    let c = z.c.value();
    if c == 0.0 {
        return Ok(z.coords.iter().zip(&y.coords).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt());
    }
    let diff2: f64 = z.coords.iter().zip(&y.coords).map(|(a, b)| (a - b) * (a - b)).sum();
    let den = (1.0 - c * norm_sq(&z.coords)) * (1.0 - c * norm_sq(&y.coords));
    let x = 2.0 * c * diff2 / den;
    // acosh(1 + x) = ln(1 + x + sqrt(x (x + 2)))
    Ok((x + (x * (x + 2.0)).sqrt()).ln_1p() / c.sqrt())
}

/// `exp_z(v)`.
pub fn exp_map(v: &TangentVector) -> BallPoint {
    let z = &v.base;
    let c = z.c.value();
    if c == 0.0 {
        let coords = z.coords.iter().zip(&v.vec).map(|(a, b)| a + b).collect();
        return BallPoint { coords, c: z.c };
    }
    let n = norm_sq(&v.vec).sqrt();
    if n == 0.0 {
        return z.clone();
    }
    let sc = c.sqrt();
    let s = (sc * lambda(z) * n / 2.0).tanh() / (sc * n);
    let step: Vec<f64> = v.vec.iter().map(|x| s * x).collect();
    let mut out = mobius_add_raw(&z.coords, &step, c);
    clamp_to_ball(&mut out, z.c);
    BallPoint { coords: out, c: z.c }
}

/// `log_z(y)`, the inverse of [`exp_map`].
pub fn log_map(z: &BallPoint, y: &BallPoint) -> Result<TangentVector> {
    z.check_compatible(y)?;
    let c = z.c.value();
    if c == 0.0 {
        let vec = y.coords.iter().zip(&z.coords).map(|(a, b)| a - b).collect();
        return Ok(TangentVector { base: z.clone(), vec });
    }
    if z.coords == y.coords {
        return Ok(TangentVector::zero(z.clone()));
    }
    let w = mobius_add_raw(&z.neg().coords, &y.coords, c);
    let n = norm_sq(&w).sqrt();
    if n == 0.0 {
        return Ok(TangentVector::zero(z.clone()));
    }
    let sc = c.sqrt();
    let s = 2.0 / lambda(z) * artanhc(sc * n);
    Ok(TangentVector { base: z.clone(), vec: w.iter().map(|x| s * x).collect() })
}

/// `exp_0(v)` for a raw vector `v`.
pub fn exp0(v: &[f64], c: Curvature) -> BallPoint {
    exp_map(&TangentVector { base: BallPoint::origin(v.len(), c), vec: v.to_vec() })
}

/// `log_0(y)` as a raw vector.
pub fn log0(y: &BallPoint) -> Vec<f64> {
    let o = BallPoint::origin(y.dim(), y.c);
    log_map(&o, y).expect("origin is compatible").vec
}

fn check_orientation(a: &[f64], p: &BallPoint) -> Result<f64> {
    if a.len() != p.dim() {
        return Err(GeometryError::DimensionMismatch(p.dim(), a.len()));
    }
    let an = norm_sq(a).sqrt();
    if an == 0.0 || !an.is_finite() {
        return Err(GeometryError::ZeroOrientation);
    }
    Ok(an)
}

/// Distance from `z` to the gyroplane `H_{a,p} = exp_p({a}^⊥)`.
pub fn gyroplane_distance(z: &BallPoint, a: &[f64], p: &BallPoint) -> Result<f64> {
    z.check_compatible(p)?;
    let an = check_orientation(a, p)?;
    let c = z.c.value();
    if c == 0.0 {
        let s: f64 = z.coords.iter().zip(&p.coords).zip(a).map(|((zi, pi), ai)| (zi - pi) * ai).sum();
        return Ok(s.abs() / an);
    }
    let w = mobius_add_raw(&p.neg().coords, &z.coords, c);
    let sc = c.sqrt();
    let arg = 2.0 * sc * dot(&w, a).abs() / ((1.0 - c * norm_sq(&w)) * an);
    Ok(arg.asinh() / sc)
}

/// Signed gyroplane decision value `sign(⟨a, log_p z⟩) · λ_p‖a‖ · d(z, H_{a,p})`.
///
/// Reduces to `⟨a, z - p⟩` at `c = 0`.
pub fn gyroplane_decision(z: &BallPoint, a: &[f64], p: &BallPoint) -> Result<f64> {
    z.check_compatible(p)?;
    let an = check_orientation(a, p)?;
    let c = z.c.value();
    if c == 0.0 {
        return Ok(z.coords.iter().zip(&p.coords).zip(a).map(|((zi, pi), ai)| (zi - pi) * ai).sum());
    }
    let w = mobius_add_raw(&p.neg().coords, &z.coords, c);
    let sign = dot(&w, a).signum();
    let dist = gyroplane_distance(z, a, p)?;
    Ok(if dist == 0.0 { 0.0 } else { sign * lambda(p) * an * dist })
}
