//! Randomized finite-difference checks for every differentiable op.

use pvae::ad::{gradcheck, Graph, Tensor, Var};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
const FLOOR: f64 = 1e-4;

fn rand_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::new(r, c, (0..r * c).map(|_| rng.random_range(lo..hi)).collect())
}

/// Weighted sum so every output entry carries a distinct adjoint.
fn weighted<'g>(g: &'g Graph, y: Var<'g>) -> Var<'g> {
    let (r, c) = y.shape();
    let w = Tensor::new(r, c, (0..r * c).map(|k| 0.5 + 0.37 * k as f64).collect());
    (y * g.constant(w)).sum()
}

type Unary = for<'g> fn(Var<'g>) -> Var<'g>;
type Binary = for<'g> fn(Var<'g>, Var<'g>) -> Var<'g>;

fn unary_ops() -> Vec<(&'static str, Unary, f64, f64)> {
    vec![
        ("neg", |x| -x, -2.0, 2.0),
        ("square", |x| x.square(), -2.0, 2.0),
        ("pow", |x| x.powf(1.7), 0.2, 2.0),
        ("sqrt", |x| x.sqrt(), 0.1, 3.0),
        ("exp", |x| x.exp(), -2.0, 2.0),
        ("log", |x| x.ln(), 0.1, 3.0),
        ("tanh", |x| x.tanh(), -2.0, 2.0),
        ("artanh", |x| x.artanh(), -0.9, 0.9),
        ("sinh", |x| x.sinh(), -2.0, 2.0),
        ("cosh", |x| x.cosh(), -2.0, 2.0),
        ("asinh", |x| x.asinh(), -3.0, 3.0),
        ("erf", |x| x.erf(), -2.0, 2.0),
        ("relu+", |x| x.relu(), 0.05, 2.0),
        ("relu-", |x| x.relu(), -2.0, -0.05),
        ("softplus", |x| x.softplus(), -4.0, 4.0),
        ("sigmoid", |x| x.sigmoid(), -4.0, 4.0),
        ("tanhc", |x| x.tanhc(), -2.0, 2.0),
        ("artanhc", |x| x.artanhc(), -0.9, 0.9),
        ("log_sinhc", |x| x.log_sinhc(), -3.0, 3.0),
        ("scalar_affine", |x| (x * 3.0 + 1.5) / 2.0 - 0.25, -2.0, 2.0),
        ("sum", |x| x.sum(), -2.0, 2.0),
        ("mean", |x| x.mean(), -2.0, 2.0),
        ("sum_axis0", |x| x.sum_axis(0), -2.0, 2.0),
        ("sum_axis1", |x| x.sum_axis(1), -2.0, 2.0),
        ("norm0", |x| x.norm(0), 0.2, 2.0),
        ("norm1", |x| x.norm(1), -2.0, -0.2),
        ("transpose", |x| x.transpose(), -2.0, 2.0),
        ("slice", |x| x.slice_cols(0, 1), -2.0, 2.0),
        ("gather", |x| x.gather_rows(&[0, 0]), -2.0, 2.0),
    ]
}

fn binary_ops() -> Vec<(&'static str, Binary)> {
    vec![
        ("add", |a, b| a + b),
        ("sub", |a, b| a - b),
        ("mul", |a, b| a * b),
        ("div", |a, b| a / b),
        ("dot", |a, b| a.dot_rows(b)),
    ]
}

/// Worst relative error per op over `cases` random shapes and inputs.
pub fn check_all(cases: usize, seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (name, op, lo, hi) in unary_ops() {
        let mut worst: f64 = 0.0;
        for _ in 0..cases {
            let (r, c) = (rng.random_range(1..4), rng.random_range(1..4));
            let x = rand_tensor(&mut rng, r, c, lo, hi);
            worst = worst.max(gradcheck(&[x], STEP, FLOOR, |g, v| weighted(g, op(v[0]))));
        }
        out.push((name, worst));
    }
    for (name, op) in binary_ops() {
        let mut worst: f64 = 0.0;
        for i in 0..cases {
            let (r, c) = (rng.random_range(1..4), rng.random_range(1..4));
            // three of every four cases broadcast the second operand
            let (rb, cb) = match (i % 4, name) {
                (1, n) if n != "dot" => (1, c),
                (2, n) if n != "dot" => (r, 1),
                (3, n) if n != "dot" => (1, 1),
                _ => (r, c),
            };
            let a = rand_tensor(&mut rng, r, c, -2.0, 2.0);
            let b = rand_tensor(&mut rng, rb, cb, 0.5, 2.0);
            worst = worst.max(gradcheck(&[a, b], STEP, FLOOR, |g, v| weighted(g, op(v[0], v[1]))));
        }
        out.push((name, worst));
    }
    let (mut mm, mut cat, mut bc) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..cases {
        let (m, k, n) = (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..5));
        let a = rand_tensor(&mut rng, m, k, -1.0, 1.0);
        let b = rand_tensor(&mut rng, k, n, -1.0, 1.0);
        mm = mm.max(gradcheck(&[a, b], STEP, FLOOR, |g, v| weighted(g, v[0].matmul(v[1]))));
        let c = rand_tensor(&mut rng, m, n, -1.0, 1.0);
        let d = rand_tensor(&mut rng, m, k, -1.0, 1.0);
        cat = cat.max(gradcheck(&[c, d], STEP, FLOOR, |g, v| weighted(g, Var::concat_cols(&[v[0], v[1], v[0]]))));
        let e = rand_tensor(&mut rng, 1, n, -1.0, 1.0);
        bc = bc.max(gradcheck(&[e], STEP, FLOOR, |g, v| weighted(g, v[0].broadcast_to(m, n))));
    }
    out.extend([("matmul", mm), ("concat", cat), ("broadcast", bc)]);
    out
}
