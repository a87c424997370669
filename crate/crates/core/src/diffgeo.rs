//! Batched, differentiable Poincaré-ball operations on graph variables.
//!
//! Points are stored one per row. Per-row scalars are `[B, 1]` columns and
//! broadcast against `[B, d]` coordinates.

use std::f64::consts::PI;

use crate::ad::{Graph, Tensor, Var};
use crate::ball::Curvature;
use crate::hypdist::{riemannian_log_zr_grad, DistError};
use crate::special::log_sphere_area;

/// Squared norm of every row, `[B, 1]`.
pub fn sq_norm<'g>(x: Var<'g>) -> Var<'g> {
    x.square().sum_axis(1)
}

/// Conformal factor `2 / (1 - c‖x‖²)` per row.
pub fn lambda<'g>(x: Var<'g>, c: Curvature) -> Var<'g> {
    let g = x.graph();
    g.scalar(2.0) / (sq_norm(x) * -c.value() + 1.0)
}

pub fn exp0<'g>(v: Var<'g>, c: Curvature) -> Var<'g> {
    if c.is_euclidean() {
        return v;
    }
    project(v * (v.norm(1) * c.sqrt()).tanhc(), c)
}

pub fn log0<'g>(y: Var<'g>, c: Curvature) -> Var<'g> {
    if c.is_euclidean() {
        return y;
    }
    y * (y.norm(1) * c.sqrt()).artanhc()
}

/// Row-wise Möbius addition; either side may be a single row.
pub fn mobius_add<'g>(x: Var<'g>, y: Var<'g>, c: Curvature) -> Var<'g> {
    if c.is_euclidean() {
        return x + y;
    }
    let c = c.value();
    let xy = x.dot_rows(y);
    let x2 = sq_norm(x);
    let y2 = sq_norm(y);
    let two_cxy = xy * (2.0 * c);
    let num = x * (two_cxy + y2 * c + 1.0) + y * (x2 * -c + 1.0);
    let den = two_cxy + x2 * y2 * (c * c) + 1.0;
    num / den
}

/// Pulls rows back inside the ball of radius `max_norm(c)`.
///
/// Rows already inside pass through unchanged; clamped rows are
/// differentiated as `m · x / ‖x‖`.
pub fn project<'g>(x: Var<'g>, c: Curvature) -> Var<'g> {
    if c.is_euclidean() {
        return x;
    }
    let m = c.max_norm();
    let xv = x.value();
    let (b, d) = xv.shape();
    let norms: Vec<f64> = (0..b).map(|i| xv.row_slice(i).iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    if norms.iter().all(|&n| n <= m) {
        return x;
    }
    let mut y = (*xv).clone();
    for (i, &n) in norms.iter().enumerate() {
        if n > m {
            y.data_mut()[i * d..(i + 1) * d].iter_mut().for_each(|v| *v *= m / n);
        }
    }
    x.graph().custom(&[x], y, move |g, _| {
        let mut out = g.clone();
        for (i, &n) in norms.iter().enumerate() {
            if n > m {
                let xi = xv.row_slice(i);
                let gi = &mut out.data_mut()[i * d..(i + 1) * d];
                let proj: f64 = xi.iter().zip(gi.iter()).map(|(a, b)| a * b).sum::<f64>() / (n * n);
                for (gj, xj) in gi.iter_mut().zip(xi) {
                    *gj = m / n * (*gj - proj * xj);
                }
            }
        }
        vec![Some(out)]
    })
}

/// `exp_μ(u / λ_μ)`: a tangent step of metric length `‖u‖` from `μ`.
///
/// Euclidean mode returns `μ + u`.
pub fn push_forward<'g>(mu: Var<'g>, u: Var<'g>, c: Curvature) -> Var<'g> {
    if c.is_euclidean() {
        return mu + u;
    }
    let step = u * (u.norm(1) * (0.5 * c.sqrt())).tanhc() * 0.5;
    project(mobius_add(mu, step, c), c)
}

/// `λ_μ log_μ(z)`, the tangent vector at `μ` in orthonormal coordinates.
///
/// Its norm is the geodesic distance. Euclidean mode returns `z - μ`.
pub fn scaled_log<'g>(mu: Var<'g>, z: Var<'g>, c: Curvature) -> Var<'g> {
    if c.is_euclidean() {
        return z - mu;
    }
    let w = mobius_add(-mu, z, c);
    w * (w.norm(1) * c.sqrt()).artanhc() * 2.0
}

/// Geodesic distance per row, `[B, 1]`.
pub fn distance<'g>(x: Var<'g>, y: Var<'g>, c: Curvature) -> Var<'g> {
    if c.is_euclidean() {
        return (y - x).norm(1);
    }
    let w = mobius_add(-x, y, c);
    let n = w.norm(1);
    n * (n * c.sqrt()).artanhc() * 2.0
}

/// Wrapped normal log-density w.r.t. `dM`, `[B, 1]`.
///
/// `sigma` is `[B, 1]` (isotropic) or `[B, d]` (diagonal); a single row
/// is broadcast over the batch.
pub fn wrapped_log_pdf<'g>(z: Var<'g>, mu: Var<'g>, sigma: Var<'g>, c: Curvature) -> Var<'g> {
    let d = z.cols();
    let v = scaled_log(mu, z, c);
    let norm_const = -0.5 * d as f64 * (2.0 * PI).ln();
    let gauss = if sigma.cols() == 1 {
        sigma.ln() * -(d as f64) - sq_norm(v) / (sigma.square() * 2.0)
    } else {
        assert_eq!(sigma.cols(), d, "diagonal dispersion must have one entry per dimension");
        let log_det = sigma.ln().sum_axis(1);
        -log_det - sq_norm(v / sigma) * 0.5
    };
    let gauss = gauss + norm_const;
    if c.is_euclidean() || d == 1 {
        return gauss;
    }
    gauss - (v.norm(1) * c.sqrt()).log_sinhc() * (d as f64 - 1.0)
}

/// `ln Z_r^R(σ)` per row with adjoint `E[r²]/σ³`.
pub fn log_zr<'g>(sigma: Var<'g>, c: Curvature, d: usize) -> Result<Var<'g>, DistError> {
    assert_eq!(sigma.cols(), 1, "Riemannian normals are isotropic");
    let sv = sigma.value();
    let mut val = Vec::with_capacity(sv.len());
    let mut grad = Vec::with_capacity(sv.len());
    for &s in sv.data() {
        let (lz, dlz) = riemannian_log_zr_grad(s, c, d)?;
        val.push(lz);
        grad.push(dlz);
    }
    let (r, k) = sv.shape();
    Ok(sigma.graph().custom_elementwise(sigma, Tensor::new(r, k, val), Tensor::new(r, k, grad)))
}

/// Riemannian normal log-density w.r.t. `dM`, `[B, 1]`.
pub fn riemannian_log_pdf<'g>(
    z: Var<'g>,
    mu: Var<'g>,
    sigma: Var<'g>,
    c: Curvature,
) -> Result<Var<'g>, DistError> {
    let d = z.cols();
    let r2 = sq_norm(scaled_log(mu, z, c));
    let lz = log_zr(sigma, c, d)?;
    Ok(-(r2 / (sigma.square() * 2.0)) - lz - log_sphere_area(d))
}

/// Radii `r` drawn elsewhere, attached to `sigma` through `dr/dσ`.
pub fn implicit_radius<'g>(sigma: Var<'g>, r: Vec<f64>, dr_dsigma: Vec<f64>) -> Var<'g> {
    let (b, k) = sigma.shape();
    assert_eq!(k, 1, "radius op expects a column of dispersions");
    assert_eq!(r.len(), b);
    assert_eq!(dr_dsigma.len(), b);
    sigma
        .graph()
        .custom_elementwise(sigma, Tensor::new(b, 1, r), Tensor::new(b, 1, dr_dsigma))
}

/// Signed, metric-scaled gyroplane distances, `[B, H]`.
///
/// `a` holds one orientation per row (`[H, d]`), `p` the ball offsets.
/// Euclidean mode is the affine map `⟨a, z - p⟩`.
pub fn gyroplane<'g>(z: Var<'g>, a: Var<'g>, p: Var<'g>, c: Curvature) -> Var<'g> {
    let pa = p.dot_rows(a).transpose();
    let za = z.matmul(a.transpose());
    if c.is_euclidean() {
        return za - pa;
    }
    let cv = c.value();
    let sc = c.sqrt();
    let zz = sq_norm(z);
    let pp = sq_norm(p).transpose();
    let an = a.norm(1).transpose();
    let pz = z.matmul(p.transpose());
    // (-p) ⊕ z = (A·(-p) + B·z) / D, and 1 - c‖(-p) ⊕ z‖² = B(1 - c‖z‖²) / D.
    let big_a = pz * (-2.0 * cv) + zz * cv + 1.0;
    let big_b = pp * -cv + 1.0;
    let inner = big_b * za - big_a * pa;
    let arg = inner * (2.0 * sc) / (big_b * (zz * -cv + 1.0) * an);
    let scale = an * 2.0 / (big_b * sc);
    scale * arg.asinh()
}

/// Evaluates a graph expression on a fresh graph.
pub fn eval<F>(f: F) -> Tensor
where
    F: for<'g> FnOnce(&'g Graph) -> Var<'g>,
{
    let g = Graph::new();
    let out = f(&g);
    (*out.value()).clone()
}
