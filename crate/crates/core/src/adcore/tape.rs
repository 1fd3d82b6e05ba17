use super::kernels::{gemm, transpose};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    MatMulT(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    MulRow(usize, usize),
    Scale(usize, f64),
    Gelu(usize),
    Softmax {
        x: usize,
        axis: usize,
    },
    LayerNorm {
        x: usize,
        gain: Option<usize>,
        bias: Option<usize>,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Concat {
        parts: Vec<usize>,
        axis: usize,
    },
    Slice {
        x: usize,
        axis: usize,
        start: usize,
    },
    Transpose(usize),
    Gather {
        x: usize,
        indices: Vec<usize>,
    },
    Sum(usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Define-by-run record of tensor operations.
///
/// A tape lives for one forward/backward pass. [`Tape::backward`] walks the
/// nodes in exact reverse recording order and can run only once.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients of a scalar loss with respect to every `requires_grad` leaf.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn matrix_dims(t: &Tensor, what: &str) -> Result<(usize, usize)> {
    t.dims2()
        .map_err(|_| Error::dim(format!("{what}: expected a matrix, got shape {:?}", t.shape())))
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let th = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].requires_grad)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// `a * b` for `a: m x k`, `b: k x n`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = matrix_dims(self.value(a), "matmul lhs")?;
        let (k2, n) = matrix_dims(self.value(b), "matmul rhs")?;
        if k != k2 {
            return Err(Error::dim(format!(
                "matmul inner axes differ: {:?} x {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let mut out = vec![0.0; m * n];
        gemm(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let rg = self.rg(&[a.0, b.0]);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a.0, b.0), rg))
    }

    /// `a * b^T` for `a: m x k`, `b: n x k`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = matrix_dims(self.value(a), "matmul_t lhs")?;
        let (n, k2) = matrix_dims(self.value(b), "matmul_t rhs")?;
        if k != k2 {
            return Err(Error::dim(format!(
                "matmul_t inner axes differ: {:?} x {:?}^T",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let bt = transpose(self.value(b).data(), n, k);
        let mut out = vec![0.0; m * n];
        gemm(self.value(a).data(), &bt, &mut out, m, k, n);
        let rg = self.rg(&[a.0, b.0]);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMulT(a.0, b.0), rg))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::dim(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        Tensor::new(x.shape().to_vec(), data).expect("shape preserved")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let t = self.zip_with(a, b, |p, q| p + q);
        let rg = self.rg(&[a.0, b.0]);
        Ok(self.push(t, Op::Add(a.0, b.0), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let t = self.zip_with(a, b, |p, q| p - q);
        let rg = self.rg(&[a.0, b.0]);
        Ok(self.push(t, Op::Sub(a.0, b.0), rg))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let t = self.zip_with(a, b, |p, q| p * q);
        let rg = self.rg(&[a.0, b.0]);
        Ok(self.push(t, Op::Mul(a.0, b.0), rg))
    }

    fn row_broadcast(&self, a: Var, r: Var, what: &str) -> Result<(usize, usize)> {
        let (m, n) = matrix_dims(self.value(a), what)?;
        let (one, n2) = matrix_dims(self.value(r), what)?;
        if one != 1 || n2 != n {
            return Err(Error::dim(format!(
                "{what}: row vector {:?} does not match matrix {:?}",
                self.value(r).shape(),
                self.value(a).shape()
            )));
        }
        Ok((m, n))
    }

    /// Matrix plus row vector, broadcast over rows.
    pub fn add_row(&mut self, a: Var, r: Var) -> Result<Var> {
        let (m, n) = self.row_broadcast(a, r, "add_row")?;
        let row = self.value(r).data();
        let mut out = self.value(a).data().to_vec();
        for chunk in out.chunks_exact_mut(n) {
            for (o, &b) in chunk.iter_mut().zip(row) {
                *o += b;
            }
        }
        let rg = self.rg(&[a.0, r.0]);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::AddRow(a.0, r.0), rg))
    }

    /// Matrix times row vector, element-wise, broadcast over rows.
    pub fn mul_row(&mut self, a: Var, r: Var) -> Result<Var> {
        let (m, n) = self.row_broadcast(a, r, "mul_row")?;
        let row = self.value(r).data();
        let mut out = self.value(a).data().to_vec();
        for chunk in out.chunks_exact_mut(n) {
            for (o, &b) in chunk.iter_mut().zip(row) {
                *o *= b;
            }
        }
        let rg = self.rg(&[a.0, r.0]);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MulRow(a.0, r.0), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let x = self.value(a);
        let t = Tensor::new(x.shape().to_vec(), x.data().iter().map(|v| v * c).collect())
            .expect("shape preserved");
        let rg = self.rg(&[a.0]);
        self.push(t, Op::Scale(a.0, c), rg)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let t = Tensor::new(x.shape().to_vec(), x.data().iter().map(|&v| gelu(v)).collect())
            .expect("shape preserved");
        let rg = self.rg(&[a.0]);
        self.push(t, Op::Gelu(a.0), rg)
    }

    /// Softmax along `axis` (0: down columns, 1: along rows), max-subtracted.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let (m, n) = matrix_dims(self.value(a), "softmax")?;
        if axis > 1 {
            return Err(Error::dim(format!("softmax axis {axis} invalid for a matrix")));
        }
        let x = self.value(a).data();
        let mut out = vec![0.0; m * n];
        let (lines, len, stride, step) = if axis == 1 { (m, n, n, 1) } else { (n, m, 1, n) };
        for l in 0..lines {
            let base = l * stride;
            let idx = |i: usize| base + i * step;
            let mx = (0..len).map(|i| x[idx(i)]).fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for i in 0..len {
                let e = (x[idx(i)] - mx).exp();
                out[idx(i)] = e;
                s += e;
            }
            let inv = 1.0 / s;
            for i in 0..len {
                out[idx(i)] *= inv;
            }
        }
        let rg = self.rg(&[a.0]);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::Softmax { x: a.0, axis }, rg))
    }

    /// Layer normalization over the last axis, `eps` inside the square root.
    pub fn layer_norm(
        &mut self,
        a: Var,
        gain: Option<Var>,
        bias: Option<Var>,
        eps: f64,
    ) -> Result<Var> {
        let (m, n) = matrix_dims(self.value(a), "layer_norm")?;
        for r in [gain, bias].into_iter().flatten() {
            self.row_broadcast(a, r, "layer_norm affine")?;
        }
        let x = self.value(a).data();
        let mut xhat = vec![0.0; m * n];
        let mut inv_std = vec![0.0; m];
        for i in 0..m {
            let row = &x[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std[i] = inv;
            for (o, v) in xhat[i * n..(i + 1) * n].iter_mut().zip(row) {
                *o = (v - mean) * inv;
            }
        }
        let mut out = xhat.clone();
        if let Some(g) = gain {
            let g = self.value(g).data();
            for chunk in out.chunks_exact_mut(n) {
                for (o, gv) in chunk.iter_mut().zip(g) {
                    *o *= gv;
                }
            }
        }
        if let Some(b) = bias {
            let b = self.value(b).data();
            for chunk in out.chunks_exact_mut(n) {
                for (o, bv) in chunk.iter_mut().zip(b) {
                    *o += bv;
                }
            }
        }
        let mut ids = vec![a.0];
        ids.extend(gain.map(|v| v.0));
        ids.extend(bias.map(|v| v.0));
        let rg = self.rg(&ids);
        let op = Op::LayerNorm {
            x: a.0,
            gain: gain.map(|v| v.0),
            bias: bias.map(|v| v.0),
            xhat,
            inv_std,
        };
        Ok(self.push(Tensor::matrix(m, n, out)?, op, rg))
    }

    /// Concatenation along `axis` (0: stack rows, 1: join columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Empty("concat of zero tensors".into()));
        }
        if axis > 1 {
            return Err(Error::dim(format!("concat axis {axis} invalid for matrices")));
        }
        let dims: Vec<(usize, usize)> = parts
            .iter()
            .map(|&p| matrix_dims(self.value(p), "concat"))
            .collect::<Result<_>>()?;
        let (m0, n0) = dims[0];
        let (m, n) = if axis == 0 {
            if dims.iter().any(|d| d.1 != n0) {
                return Err(Error::dim(format!("concat axis 0: column counts differ {dims:?}")));
            }
            (dims.iter().map(|d| d.0).sum(), n0)
        } else {
            if dims.iter().any(|d| d.0 != m0) {
                return Err(Error::dim(format!("concat axis 1: row counts differ {dims:?}")));
            }
            (m0, dims.iter().map(|d| d.1).sum())
        };
        let mut out = Vec::with_capacity(m * n);
        if axis == 0 {
            for &p in parts {
                out.extend_from_slice(self.value(p).data());
            }
        } else {
            for i in 0..m {
                for (&p, &(_, pn)) in parts.iter().zip(&dims) {
                    out.extend_from_slice(&self.value(p).data()[i * pn..(i + 1) * pn]);
                }
            }
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let rg = self.rg(&ids);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::Concat { parts: ids, axis }, rg))
    }

    /// `len` rows (axis 0) or columns (axis 1) starting at `start`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let (m, n) = matrix_dims(self.value(a), "slice")?;
        let extent = match axis {
            0 => m,
            1 => n,
            _ => return Err(Error::dim(format!("slice axis {axis} invalid for a matrix"))),
        };
        if start + len > extent {
            return Err(Error::Range(format!(
                "slice {start}..{} exceeds axis {axis} of length {extent}",
                start + len
            )));
        }
        let x = self.value(a).data();
        let (out, shape) = if axis == 0 {
            (x[start * n..(start + len) * n].to_vec(), (len, n))
        } else {
            let mut out = Vec::with_capacity(m * len);
            for i in 0..m {
                out.extend_from_slice(&x[i * n + start..i * n + start + len]);
            }
            (out, (m, len))
        };
        let rg = self.rg(&[a.0]);
        Ok(self.push(
            Tensor::matrix(shape.0, shape.1, out)?,
            Op::Slice { x: a.0, axis, start },
            rg,
        ))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (m, n) = matrix_dims(self.value(a), "transpose")?;
        let out = transpose(self.value(a).data(), m, n);
        let rg = self.rg(&[a.0]);
        Ok(self.push(Tensor::matrix(n, m, out)?, Op::Transpose(a.0), rg))
    }

    /// Rows of `a` selected by `indices` (repeats allowed).
    pub fn gather(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let (m, n) = matrix_dims(self.value(a), "gather")?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= m) {
            return Err(Error::Range(format!("gather index {bad} out of range for {m} rows")));
        }
        let x = self.value(a).data();
        let mut out = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            out.extend_from_slice(&x[i * n..(i + 1) * n]);
        }
        let rg = self.rg(&[a.0]);
        Ok(self.push(
            Tensor::matrix(indices.len(), n, out)?,
            Op::Gather {
                x: a.0,
                indices: indices.to_vec(),
            },
            rg,
        ))
    }

    /// Sum of all elements, as a `1 x 1` tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(&[a.0]);
        self.push(Tensor::scalar(s), Op::Sum(a.0), rg)
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::Tape("backward already ran on this tape".into()));
        }
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::Tape(format!(
                "loss must be a scalar, got shape {:?}",
                lv.shape()
            )));
        }
        if !lv.data()[0].is_finite() {
            return Err(Error::Tape(format!("loss is not finite: {}", lv.data()[0])));
        }
        self.consumed = true;

        let nodes = &self.nodes;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        fn acc<'g>(
            grads: &'g mut [Option<Vec<f64>>],
            nodes: &[Node],
            i: usize,
        ) -> Option<&'g mut Vec<f64>> {
            if !nodes[i].requires_grad {
                return None;
            }
            Some(grads[i].get_or_insert_with(|| vec![0.0; nodes[i].value.numel()]))
        }

        for i in (0..=loss.0).rev() {
            if !nodes[i].requires_grad {
                continue;
            }
            if let Op::Leaf = nodes[i].op {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            let (m, n) = node.value.dims2().unwrap_or((1, node.value.numel()));
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    let (_, k) = nodes[*a].value.dims2()?;
                    if let Some(da) = acc(&mut grads, nodes, *a) {
                        let bt = transpose(nodes[*b].value.data(), k, n);
                        gemm(&g, &bt, da, m, n, k);
                    }
                    if let Some(db) = acc(&mut grads, nodes, *b) {
                        let at = transpose(nodes[*a].value.data(), m, k);
                        gemm(&at, &g, db, k, m, n);
                    }
                }
                Op::MatMulT(a, b) => {
                    let (_, k) = nodes[*a].value.dims2()?;
                    if let Some(da) = acc(&mut grads, nodes, *a) {
                        gemm(&g, nodes[*b].value.data(), da, m, n, k);
                    }
                    if let Some(db) = acc(&mut grads, nodes, *b) {
                        let gt = transpose(&g, m, n);
                        gemm(&gt, nodes[*a].value.data(), db, n, m, k);
                    }
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                    if let Some(da) = acc(&mut grads, nodes, *a) {
                        da.iter_mut().zip(&g).for_each(|(d, v)| *d += v);
                    }
                    if let Some(db) = acc(&mut grads, nodes, *b) {
                        db.iter_mut().zip(&g).for_each(|(d, v)| *d += sign * v);
                    }
                }
                Op::Mul(a, b) => {
                    if let Some(da) = acc(&mut grads, nodes, *a) {
                        let bv = nodes[*b].value.data();
                        for ((d, gv), y) in da.iter_mut().zip(&g).zip(bv) {
                            *d += gv * y;
                        }
                    }
                    if let Some(db) = acc(&mut grads, nodes, *b) {
                        let av = nodes[*a].value.data();
                        for ((d, gv), x) in db.iter_mut().zip(&g).zip(av) {
                            *d += gv * x;
                        }
                    }
                }
                Op::AddRow(a, r) => {
                    if let Some(da) = acc(&mut grads, nodes, *a) {
                        da.iter_mut().zip(&g).for_each(|(d, v)| *d += v);
                    }
                    if let Some(dr) = acc(&mut grads, nodes, *r) {
                        for chunk in g.chunks_exact(n) {
                            dr.iter_mut().zip(chunk).for_each(|(d, v)| *d += v);
                        }
                    }
                }
                Op::MulRow(a, r) => {
                    let row = nodes[*r].value.data();
                    if let Some(da) = acc(&mut grads, nodes, *a) {
                        for (dchunk, gchunk) in da.chunks_exact_mut(n).zip(g.chunks_exact(n)) {
                            for ((d, gv), rv) in dchunk.iter_mut().zip(gchunk).zip(row) {
                                *d += gv * rv;
                            }
                        }
                    }
                    if let Some(dr) = acc(&mut grads, nodes, *r) {
                        let av = nodes[*a].value.data();
                        for (gchunk, achunk) in g.chunks_exact(n).zip(av.chunks_exact(n)) {
                            for ((d, gv), x) in dr.iter_mut().zip(gchunk).zip(achunk) {
                                *d += gv * x;
                            }
                        }
                    }
                }
                Op::Scale(a, c) => {
                    if let Some(da) = acc(&mut grads, nodes, *a) {
                        da.iter_mut().zip(&g).for_each(|(d, v)| *d += c * v);
                    }
                }
                Op::Gelu(a) => {
                    if let Some(da) = acc(&mut grads, nodes, *a) {
                        let x = nodes[*a].value.data();
                        for ((d, gv), &xv) in da.iter_mut().zip(&g).zip(x) {
                            *d += gv * gelu_grad(xv);
                        }
                    }
                }
                Op::Softmax { x, axis } => {
                    if let Some(dx) = acc(&mut grads, nodes, *x) {
                        let y = node.value.data();
                        let (lines, len, stride, step) =
                            if *axis == 1 { (m, n, n, 1) } else { (n, m, 1, n) };
                        for l in 0..lines {
                            let base = l * stride;
                            let dot: f64 =
                                (0..len).map(|i| g[base + i * step] * y[base + i * step]).sum();
                            for i in 0..len {
                                let j = base + i * step;
                                dx[j] += y[j] * (g[j] - dot);
                            }
                        }
                    }
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    if let Some(b) = bias {
                        if let Some(db) = acc(&mut grads, nodes, *b) {
                            for chunk in g.chunks_exact(n) {
                                db.iter_mut().zip(chunk).for_each(|(d, v)| *d += v);
                            }
                        }
                    }
                    if let Some(gn) = gain {
                        if let Some(dg) = acc(&mut grads, nodes, *gn) {
                            for (gc, xc) in g.chunks_exact(n).zip(xhat.chunks_exact(n)) {
                                for ((d, gv), xh) in dg.iter_mut().zip(gc).zip(xc) {
                                    *d += gv * xh;
                                }
                            }
                        }
                    }
                    if let Some(dx) = acc(&mut grads, nodes, *x) {
                        let gainv = gain.map(|gn| nodes[gn].value.data());
                        let nf = n as f64;
                        let mut dxhat = vec![0.0; n];
                        for i in 0..m {
                            let gr = &g[i * n..(i + 1) * n];
                            let xr = &xhat[i * n..(i + 1) * n];
                            for j in 0..n {
                                dxhat[j] = gr[j] * gainv.map_or(1.0, |gv| gv[j]);
                            }
                            let s1: f64 = dxhat.iter().sum();
                            let s2: f64 = dxhat.iter().zip(xr).map(|(a, b)| a * b).sum();
                            let inv = inv_std[i];
                            for j in 0..n {
                                dx[i * n + j] += inv / nf * (nf * dxhat[j] - s1 - xr[j] * s2);
                            }
                        }
                    }
                }
                Op::Concat { parts, axis } => {
                    let mut offset = 0;
                    for &p in parts {
                        let (pm, pn) = nodes[p].value.dims2()?;
                        if let Some(dp) = acc(&mut grads, nodes, p) {
                            if *axis == 0 {
                                let src = &g[offset * n..(offset + pm) * n];
                                dp.iter_mut().zip(src).for_each(|(d, v)| *d += v);
                            } else {
                                for r in 0..pm {
                                    let src = &g[r * n + offset..r * n + offset + pn];
                                    dp[r * pn..(r + 1) * pn]
                                        .iter_mut()
                                        .zip(src)
                                        .for_each(|(d, v)| *d += v);
                                }
                            }
                        }
                        offset += if *axis == 0 { pm } else { pn };
                    }
                }
                Op::Slice { x, axis, start } => {
                    let (_, xn) = nodes[*x].value.dims2()?;
                    if let Some(dx) = acc(&mut grads, nodes, *x) {
                        if *axis == 0 {
                            let dst = &mut dx[start * xn..(start + m) * xn];
                            dst.iter_mut().zip(&g).for_each(|(d, v)| *d += v);
                        } else {
                            for r in 0..m {
                                let dst = &mut dx[r * xn + start..r * xn + start + n];
                                dst.iter_mut()
                                    .zip(&g[r * n..(r + 1) * n])
                                    .for_each(|(d, v)| *d += v);
                            }
                        }
                    }
                }
                Op::Transpose(a) => {
                    if let Some(da) = acc(&mut grads, nodes, *a) {
                        let gt = transpose(&g, m, n);
                        da.iter_mut().zip(&gt).for_each(|(d, v)| *d += v);
                    }
                }
                Op::Gather { x, indices } => {
                    if let Some(dx) = acc(&mut grads, nodes, *x) {
                        for (r, &src) in indices.iter().enumerate() {
                            let dst = &mut dx[src * n..(src + 1) * n];
                            dst.iter_mut()
                                .zip(&g[r * n..(r + 1) * n])
                                .for_each(|(d, v)| *d += v);
                        }
                    }
                }
                Op::Sum(a) => {
                    if let Some(da) = acc(&mut grads, nodes, *a) {
                        let gv = g[0];
                        da.iter_mut().for_each(|d| *d += gv);
                    }
                }
            }
        }

        let grads = nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| match (&node.op, node.requires_grad) {
                (Op::Leaf, true) => Some(
                    Tensor::new(
                        node.value.shape().to_vec(),
                        g.unwrap_or_else(|| vec![0.0; node.value.numel()]),
                    )
                    .expect("gradient matches leaf shape"),
                ),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads })
    }
}
