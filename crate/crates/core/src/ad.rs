//! Reverse-mode automatic differentiation over dense row-major matrices.
//!
//! A [`Graph`] records every operation as a node holding its value and a
//! closure that maps the output adjoint to parent adjoints. [`Var`] is a
//! cheap `Copy` handle into the graph. Binary elementwise ops broadcast
//! along any dimension of size 1; the matching adjoints are summed back.

use std::cell::RefCell;
use std::fmt;
use std::sync::Arc;

use crate::special;

/// Dense row-major `rows × cols` matrix.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor[{}x{}]{:?}", self.rows, self.cols, self.data)
    }
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor data length does not match shape {rows}x{cols}");
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::full(rows, cols, 0.0)
    }

    pub fn full(rows: usize, cols: usize, v: f64) -> Self {
        Self { rows, cols, data: vec![v; rows * cols] }
    }

    pub fn scalar(v: f64) -> Self {
        Self::full(1, 1, v)
    }

    pub fn row(data: Vec<f64>) -> Self {
        Self::new(1, data.len(), data)
    }

    pub fn column(data: Vec<f64>) -> Self {
        Self::new(data.len(), 1, data)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let data = rows.iter().flat_map(|r| {
            assert_eq!(r.len(), cols, "ragged rows");
            r.iter().copied()
        });
        Self::new(rows.len(), cols, data.collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row_slice(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// The single value of a `1 × 1` tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.shape(), (1, 1), "item() on a non-scalar tensor");
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn transpose(&self) -> Tensor {
        let mut out = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Tensor::new(self.cols, self.rows, out)
    }

    /// Selects rows by index.
    pub fn gather_rows(&self, idx: &[usize]) -> Tensor {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row_slice(i));
        }
        Tensor::new(idx.len(), self.cols, data)
    }

    /// `self · other` via a blocked dgemm.
    pub fn matmul(&self, other: &Tensor) -> Tensor {
        gemm(self, false, other, false)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// `op(a) · op(b)` where `op` optionally transposes.
fn gemm(a: &Tensor, ta: bool, b: &Tensor, tb: bool) -> Tensor {
    let (m, k) = if ta { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (k2, n) = if tb { (b.cols, b.rows) } else { (b.rows, b.cols) };
    assert_eq!(k, k2, "matmul inner dimensions differ: {:?} x {:?}", a.shape(), b.shape());
    let mut out = vec![0.0; m * n];
    if m == 0 || n == 0 || k == 0 {
        return Tensor::new(m, n, out);
    }
    let (rsa, csa) = if ta { (1, a.cols as isize) } else { (a.cols as isize, 1) };
    let (rsb, csb) = if tb { (1, b.cols as isize) } else { (b.cols as isize, 1) };
    // SAFETY: strides and extents describe the owned buffers exactly.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            0.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    Tensor::new(m, n, out)
}

fn broadcast_dim(a: usize, b: usize) -> usize {
    if a == b || b == 1 {
        a
    } else if a == 1 {
        b
    } else {
        panic!("cannot broadcast dimensions {a} and {b}")
    }
}

fn broadcast_shape(a: (usize, usize), b: (usize, usize)) -> (usize, usize) {
    (broadcast_dim(a.0, b.0), broadcast_dim(a.1, b.1))
}

/// Elementwise `f(a, b)` with broadcasting.
pub fn zip_broadcast(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    if a.shape() == b.shape() {
        let data = a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect();
        return Tensor::new(a.rows, a.cols, data);
    }
    let (r, c) = broadcast_shape(a.shape(), b.shape());
    let mut data = Vec::with_capacity(r * c);
    for i in 0..r {
        let ia = if a.rows == 1 { 0 } else { i };
        let ib = if b.rows == 1 { 0 } else { i };
        for j in 0..c {
            let x = a.data[ia * a.cols + if a.cols == 1 { 0 } else { j }];
            let y = b.data[ib * b.cols + if b.cols == 1 { 0 } else { j }];
            data.push(f(x, y));
        }
    }
    Tensor::new(r, c, data)
}

/// Sums `g` down to `shape` over broadcast dimensions.
fn reduce_to(g: Tensor, shape: (usize, usize)) -> Tensor {
    if g.shape() == shape {
        return g;
    }
    let (r, c) = shape;
    let mut out = vec![0.0; r * c];
    for i in 0..g.rows {
        let oi = if r == 1 { 0 } else { i };
        for j in 0..g.cols {
            let oj = if c == 1 { 0 } else { j };
            out[oi * c + oj] += g.data[i * g.cols + j];
        }
    }
    Tensor::new(r, c, out)
}

/// Backward rule: `(output adjoint, parent needs-grad flags) -> parent adjoints`.
type Backward = Box<dyn Fn(&Tensor, &[bool]) -> Vec<Option<Tensor>>>;

struct Node {
    value: Arc<Tensor>,
    parents: Vec<usize>,
    backward: Option<Backward>,
    needs_grad: bool,
}

/// A tape of operations. Nodes are appended in topological order.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Arc<Tensor>, parents: Vec<usize>, backward: Option<Backward>, needs_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node { value, parents, backward, needs_grad });
        Var { graph: self, id }
    }

    /// A leaf whose adjoint is tracked.
    pub fn param(&self, value: impl Into<Arc<Tensor>>) -> Var<'_> {
        self.push(value.into(), Vec::new(), None, true)
    }

    /// A leaf treated as a constant.
    pub fn constant(&self, value: impl Into<Arc<Tensor>>) -> Var<'_> {
        self.push(value.into(), Vec::new(), None, false)
    }

    pub fn scalar(&self, v: f64) -> Var<'_> {
        self.constant(Tensor::scalar(v))
    }

    /// Records `value` as a function of `parents` whose vector–Jacobian
    /// product is supplied by `backward`.
    pub fn custom<'g>(
        &'g self,
        parents: &[Var<'g>],
        value: Tensor,
        backward: impl Fn(&Tensor, &[bool]) -> Vec<Option<Tensor>> + 'static,
    ) -> Var<'g> {
        let ids: Vec<usize> = parents.iter().map(|p| p.id).collect();
        let needs = {
            let nodes = self.nodes.borrow();
            ids.iter().any(|&i| nodes[i].needs_grad)
        };
        let bw: Option<Backward> = if needs { Some(Box::new(backward)) } else { None };
        self.push(Arc::new(value), ids, bw, needs)
    }

    /// Elementwise `y = f(x)` with a known derivative `dy/dx`.
    pub fn custom_elementwise<'g>(&'g self, x: Var<'g>, value: Tensor, dydx: Tensor) -> Var<'g> {
        assert_eq!(value.shape(), dydx.shape(), "derivative shape mismatch");
        assert_eq!(value.shape(), x.shape(), "elementwise op changed shape");
        self.custom(&[x], value, move |g, _| vec![Some(zip_broadcast(g, &dydx, |a, b| a * b))])
    }

    /// Backpropagates from a scalar output.
    pub fn backward(&self, output: Var<'_>) -> Gradients {
        let nodes = self.nodes.borrow();
        assert_eq!(nodes[output.id].value.shape(), (1, 1), "backward requires a scalar output");
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[output.id] = Some(Tensor::scalar(1.0));
        for id in (0..=output.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if let Some(bw) = &node.backward {
                let needs: Vec<bool> = node.parents.iter().map(|&p| nodes[p].needs_grad).collect();
                let pg = bw(&g, &needs);
                debug_assert_eq!(pg.len(), node.parents.len());
                for ((&p, gp), &need) in node.parents.iter().zip(pg).zip(&needs) {
                    assert!(p < id, "graph edge does not point backwards");
                    let Some(gp) = gp else { continue };
                    if !need {
                        continue;
                    }
                    let gp = reduce_to(gp, nodes[p].value.shape());
                    match &mut grads[p] {
                        Some(acc) => acc.data.iter_mut().zip(&gp.data).for_each(|(a, b)| *a += b),
                        slot => *slot = Some(gp),
                    }
                }
            }
            if node.backward.is_none() && node.needs_grad {
                grads[id] = Some(g);
            }
        }
        Gradients { grads }
    }
}

/// Leaf adjoints produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Adjoint of a tracked leaf; `None` if the output does not depend on it.
    pub fn wrt(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads.get(v.id).and_then(Option::as_ref)
    }

    /// Adjoint of a tracked leaf, or zeros of its shape.
    pub fn wrt_or_zeros(&self, v: Var<'_>) -> Tensor {
        self.wrt(v).cloned().unwrap_or_else(|| {
            let (r, c) = v.shape();
            Tensor::zeros(r, c)
        })
    }
}

fn unary<'g>(
    x: Var<'g>,
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64, f64) -> f64 + 'static,
) -> Var<'g> {
    let xv = x.value();
    let y = xv.map(f);
    let yv = Arc::new(y.clone());
    x.graph.custom(&[x], y, move |g, _| {
        let data = g.data.iter().zip(&xv.data).zip(&yv.data).map(|((&g, &x), &y)| g * df(x, y)).collect();
        vec![Some(Tensor::new(g.rows, g.cols, data))]
    })
}

impl<'g> Var<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn value(&self) -> Arc<Tensor> {
        self.graph.nodes.borrow()[self.id].value.clone()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.graph.nodes.borrow()[self.id].value.shape()
    }

    pub fn rows(&self) -> usize {
        self.shape().0
    }

    pub fn cols(&self) -> usize {
        self.shape().1
    }

    pub fn item(&self) -> f64 {
        self.value().item()
    }

    /// Whether an adjoint flows to this node.
    pub fn needs_grad(&self) -> bool {
        self.graph.nodes.borrow()[self.id].needs_grad
    }

    /// Same value, no adjoint flow.
    pub fn detach(self) -> Var<'g> {
        self.graph.constant(self.value())
    }

    fn binary(
        self,
        other: Var<'g>,
        f: impl Fn(f64, f64) -> f64,
        da: impl Fn(f64, f64, f64) -> f64 + 'static,
        db: impl Fn(f64, f64, f64) -> f64 + 'static,
    ) -> Var<'g> {
        let (av, bv) = (self.value(), other.value());
        let y = zip_broadcast(&av, &bv, f);
        let yv = Arc::new(y.clone());
        self.graph.custom(&[self, other], y, move |g, needs| {
            let ga = needs[0].then(|| tri_map(g, &av, &bv, &yv, &da));
            let gb = needs[1].then(|| tri_map(g, &av, &bv, &yv, &db));
            vec![ga, gb]
        })
    }

    pub fn add(self, o: Var<'g>) -> Var<'g> {
        self.binary(o, |a, b| a + b, |_, _, _| 1.0, |_, _, _| 1.0)
    }

    pub fn sub(self, o: Var<'g>) -> Var<'g> {
        self.binary(o, |a, b| a - b, |_, _, _| 1.0, |_, _, _| -1.0)
    }

    pub fn mul(self, o: Var<'g>) -> Var<'g> {
        self.binary(o, |a, b| a * b, |_, b, _| b, |a, _, _| a)
    }

    pub fn div(self, o: Var<'g>) -> Var<'g> {
        self.binary(o, |a, b| a / b, |_, b, _| 1.0 / b, |_, b, y| -y / b)
    }

    pub fn add_scalar(self, s: f64) -> Var<'g> {
        unary(self, move |x| x + s, |_, _| 1.0)
    }

    pub fn mul_scalar(self, s: f64) -> Var<'g> {
        unary(self, move |x| x * s, move |_, _| s)
    }

    pub fn neg(self) -> Var<'g> {
        self.mul_scalar(-1.0)
    }

    pub fn powf(self, p: f64) -> Var<'g> {
        unary(self, move |x| x.powf(p), move |x, _| p * x.powf(p - 1.0))
    }

    pub fn square(self) -> Var<'g> {
        unary(self, |x| x * x, |x, _| 2.0 * x)
    }

    pub fn sqrt(self) -> Var<'g> {
        unary(self, f64::sqrt, |_, y| 0.5 / y)
    }

    pub fn exp(self) -> Var<'g> {
        unary(self, f64::exp, |_, y| y)
    }

    pub fn ln(self) -> Var<'g> {
        unary(self, f64::ln, |x, _| 1.0 / x)
    }

    pub fn tanh(self) -> Var<'g> {
        unary(self, f64::tanh, |_, y| 1.0 - y * y)
    }

    /// `artanh` with the input clamped to `|x| ≤ 1 - 10⁻¹⁵`.
    pub fn artanh(self) -> Var<'g> {
        unary(self, special::artanh_clamped, |x, _| {
            let xc = x.clamp(-special::ARTANH_CLAMP, special::ARTANH_CLAMP);
            1.0 / (1.0 - xc * xc)
        })
    }

    pub fn sinh(self) -> Var<'g> {
        unary(self, f64::sinh, |x, _| x.cosh())
    }

    pub fn cosh(self) -> Var<'g> {
        unary(self, f64::cosh, |x, _| x.sinh())
    }

    pub fn asinh(self) -> Var<'g> {
        unary(self, f64::asinh, |x, _| 1.0 / (x * x + 1.0).sqrt())
    }

    pub fn erf(self) -> Var<'g> {
        unary(self, special::erf, |x, _| std::f64::consts::FRAC_2_SQRT_PI * (-x * x).exp())
    }

    pub fn relu(self) -> Var<'g> {
        unary(self, |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    /// `ln(1 + eˣ)`, computed without overflow.
    pub fn softplus(self) -> Var<'g> {
        unary(self, softplus, |x, _| sigmoid(x))
    }

    pub fn sigmoid(self) -> Var<'g> {
        unary(self, sigmoid, |_, y| y * (1.0 - y))
    }

    /// `tanh(x)/x` with its removable singularity filled in.
    pub fn tanhc(self) -> Var<'g> {
        unary(self, special::tanhc, |x, _| special::tanhc_deriv(x))
    }

    /// `artanh(x)/x` with its removable singularity filled in.
    pub fn artanhc(self) -> Var<'g> {
        unary(self, special::artanhc, |x, _| special::artanhc_deriv(x))
    }

    /// `ln(sinh(x)/x)`.
    pub fn log_sinhc(self) -> Var<'g> {
        unary(self, special::log_sinhc, |x, _| special::log_sinhc_deriv(x))
    }

    pub fn matmul(self, o: Var<'g>) -> Var<'g> {
        let (av, bv) = (self.value(), o.value());
        let y = gemm(&av, false, &bv, false);
        self.graph.custom(&[self, o], y, move |g, needs| {
            vec![needs[0].then(|| gemm(g, false, &bv, true)), needs[1].then(|| gemm(&av, true, g, false))]
        })
    }

    pub fn transpose(self) -> Var<'g> {
        let y = self.value().transpose();
        self.graph.custom(&[self], y, |g, _| vec![Some(g.transpose())])
    }

    /// Sum of all entries, as a `1 × 1` tensor.
    pub fn sum(self) -> Var<'g> {
        let (r, c) = self.shape();
        let y = Tensor::scalar(self.value().sum());
        self.graph.custom(&[self], y, move |g, _| vec![Some(Tensor::full(r, c, g.item()))])
    }

    pub fn mean(self) -> Var<'g> {
        let n = self.value().len() as f64;
        self.sum().mul_scalar(1.0 / n)
    }

    /// Sums over `axis` (0: rows → `1 × c`; 1: columns → `r × 1`).
    pub fn sum_axis(self, axis: usize) -> Var<'g> {
        let v = self.value();
        let (r, c) = v.shape();
        let y = match axis {
            0 => reduce_to((*v).clone(), (1, c)),
            1 => reduce_to((*v).clone(), (r, 1)),
            _ => panic!("axis must be 0 or 1"),
        };
        self.graph.custom(&[self], y, move |g, _| vec![Some(zip_broadcast(g, &Tensor::zeros(r, c), |a, _| a))])
    }

    /// Row-wise inner product `Σ_j a_ij b_ij`, shape `r × 1`.
    pub fn dot_rows(self, o: Var<'g>) -> Var<'g> {
        self.mul(o).sum_axis(1)
    }

    /// Euclidean norm along `axis`; the adjoint at a zero norm is zero.
    pub fn norm(self, axis: usize) -> Var<'g> {
        let xv = self.value();
        let sq = xv.map(|x| x * x);
        let n = match axis {
            0 => reduce_to(sq, (1, xv.cols)),
            1 => reduce_to(sq, (xv.rows, 1)),
            _ => panic!("axis must be 0 or 1"),
        }
        .map(f64::sqrt);
        let nv = Arc::new(n.clone());
        self.graph.custom(&[self], n, move |g, _| {
            let scale = zip_broadcast(g, &nv, |g, n| if n > 0.0 { g / n } else { 0.0 });
            vec![Some(zip_broadcast(&xv, &scale, |x, s| x * s))]
        })
    }

    /// Repeats the value to `shape` along size-1 dimensions.
    pub fn broadcast_to(self, rows: usize, cols: usize) -> Var<'g> {
        let y = zip_broadcast(&self.value(), &Tensor::zeros(rows, cols), |a, _| a);
        assert_eq!(y.shape(), (rows, cols), "broadcast target incompatible with {:?}", self.shape());
        self.graph.custom(&[self], y, |g, _| vec![Some(g.clone())])
    }

    /// Horizontal concatenation.
    pub fn concat_cols(parts: &[Var<'g>]) -> Var<'g> {
        let graph = parts[0].graph;
        let vals: Vec<Arc<Tensor>> = parts.iter().map(|p| p.value()).collect();
        let rows = vals[0].rows;
        assert!(vals.iter().all(|v| v.rows == rows), "concat_cols row mismatch");
        let widths: Vec<usize> = vals.iter().map(|v| v.cols).collect();
        let cols: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for v in &vals {
                data.extend_from_slice(v.row_slice(i));
            }
        }
        graph.custom(parts, Tensor::new(rows, cols, data), move |g, needs| {
            let mut off = 0;
            widths
                .iter()
                .zip(needs)
                .map(|(&w, &need)| {
                    let out = need.then(|| slice_cols(g, off, off + w));
                    off += w;
                    out
                })
                .collect()
        })
    }

    /// Columns `start..end`.
    pub fn slice_cols(self, start: usize, end: usize) -> Var<'g> {
        let (r, c) = self.shape();
        assert!(start <= end && end <= c, "column slice {start}..{end} out of range for {c}");
        let y = slice_cols(&self.value(), start, end);
        self.graph.custom(&[self], y, move |g, _| {
            let mut out = Tensor::zeros(r, c);
            for i in 0..r {
                out.data[i * c + start..i * c + end].copy_from_slice(g.row_slice(i));
            }
            vec![Some(out)]
        })
    }

    /// Selects rows by index (repeats allowed).
    pub fn gather_rows(self, idx: &[usize]) -> Var<'g> {
        let (r, c) = self.shape();
        let idx = idx.to_vec();
        let y = self.value().gather_rows(&idx);
        self.graph.custom(&[self], y, move |g, _| {
            let mut out = Tensor::zeros(r, c);
            for (k, &i) in idx.iter().enumerate() {
                for j in 0..c {
                    out.data[i * c + j] += g.data[k * c + j];
                }
            }
            vec![Some(out)]
        })
    }
}

fn slice_cols(t: &Tensor, start: usize, end: usize) -> Tensor {
    let w = end - start;
    let mut data = Vec::with_capacity(t.rows * w);
    for i in 0..t.rows {
        data.extend_from_slice(&t.row_slice(i)[start..end]);
    }
    Tensor::new(t.rows, w, data)
}

/// `g ⊙ d(a, b, y)` over the broadcast output shape.
fn tri_map(g: &Tensor, a: &Tensor, b: &Tensor, y: &Tensor, d: &dyn Fn(f64, f64, f64) -> f64) -> Tensor {
    let (r, c) = y.shape();
    if a.shape() == y.shape() && b.shape() == y.shape() {
        let data = (0..r * c).map(|k| g.data[k] * d(a.data[k], b.data[k], y.data[k])).collect();
        return Tensor::new(r, c, data);
    }
    let mut data = Vec::with_capacity(r * c);
    for i in 0..r {
        let ia = if a.rows == 1 { 0 } else { i };
        let ib = if b.rows == 1 { 0 } else { i };
        for j in 0..c {
            let x = a.data[ia * a.cols + if a.cols == 1 { 0 } else { j }];
            let z = b.data[ib * b.cols + if b.cols == 1 { 0 } else { j }];
            data.push(g.data[i * c + j] * d(x, z, y.data[i * c + j]));
        }
    }
    Tensor::new(r, c, data)
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

macro_rules! impl_binop {
    ($trait:ident, $method:ident, $call:ident) => {
        impl<'g> std::ops::$trait for Var<'g> {
            type Output = Var<'g>;
            fn $method(self, rhs: Var<'g>) -> Var<'g> {
                Var::$call(self, rhs)
            }
        }
    };
}

impl_binop!(Add, add, add);
impl_binop!(Sub, sub, sub);
impl_binop!(Mul, mul, mul);
impl_binop!(Div, div, div);

impl<'g> std::ops::Neg for Var<'g> {
    type Output = Var<'g>;
    fn neg(self) -> Var<'g> {
        Var::neg(self)
    }
}

impl<'g> std::ops::Add<f64> for Var<'g> {
    type Output = Var<'g>;
    fn add(self, rhs: f64) -> Var<'g> {
        self.add_scalar(rhs)
    }
}

impl<'g> std::ops::Sub<f64> for Var<'g> {
    type Output = Var<'g>;
    fn sub(self, rhs: f64) -> Var<'g> {
        self.add_scalar(-rhs)
    }
}

impl<'g> std::ops::Mul<f64> for Var<'g> {
    type Output = Var<'g>;
    fn mul(self, rhs: f64) -> Var<'g> {
        self.mul_scalar(rhs)
    }
}

impl<'g> std::ops::Div<f64> for Var<'g> {
    type Output = Var<'g>;
    fn div(self, rhs: f64) -> Var<'g> {
        self.mul_scalar(1.0 / rhs)
    }
}

/// Largest relative error between the reverse-mode gradient of `f` and
/// central differences with step `h`, over every entry of every input.
///
/// The error of an entry is `|a - n| / max(|a|, |n|, floor)`.
pub fn gradcheck(
    inputs: &[Tensor],
    h: f64,
    floor: f64,
    f: impl for<'g> Fn(&'g Graph, &[Var<'g>]) -> Var<'g>,
) -> f64 {
    let g = Graph::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&g, &vars);
    let grads = g.backward(out);
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.wrt_or_zeros(v)).collect();
    let eval = |ins: &[Tensor]| {
        let g = Graph::new();
        let vars: Vec<Var<'_>> = ins.iter().map(|t| g.constant(t.clone())).collect();
        f(&g, &vars).item()
    };
    let mut worst: f64 = 0.0;
    let mut ins = inputs.to_vec();
    for (k, a) in analytic.iter().enumerate() {
        for e in 0..a.len() {
            let x0 = ins[k].data[e];
            ins[k].data[e] = x0 + h;
            let up = eval(&ins);
            ins[k].data[e] = x0 - h;
            let dn = eval(&ins);
            ins[k].data[e] = x0;
            let n = (up - dn) / (2.0 * h);
            let an = a.data[e];
            worst = worst.max((an - n).abs() / an.abs().max(n.abs()).max(floor));
        }
    }
    worst
}
