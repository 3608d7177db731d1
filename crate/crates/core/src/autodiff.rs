//! Reverse-mode differentiation over a linear tape.
//!
//! Every operation appends one node, so node order is a topological order
//! and `backward` is a single reverse sweep. Broadcasting is limited to
//! adding a length-`c` vector to every row of an `r×c` matrix.

use crate::error::TensorError;
use crate::tensor::{
    gelu, gelu_derivative, layer_norm_kernel, matmul_at_kernel, matmul_bt_kernel, matmul_kernel, softmax_rows_kernel,
    Tensor,
};

/// Handle to a value recorded on a [`Tape`].
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
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulBt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Gelu(Var),
    Sum(Var),
    Mean(Var),
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    /// Output row `i` is row `picks[i].1` of `sources[picks[i].0]`.
    GatherRows {
        sources: Vec<Var>,
        picks: Vec<(usize, usize)>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

/// The computation record: values plus the operations that produced them.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
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

    /// Records a tensor that gradients should flow to.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Records a tensor treated as a constant.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].tracked)
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn dims2(&self, v: Var, op: &'static str) -> Result<(usize, usize), TensorError> {
        self.nodes[v.0].value.dims2(op)
    }

    fn make(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, inputs: &[Var]) -> Var {
        let tracked = self.tracked(inputs);
        let value = Tensor::new(shape, data).expect("kernel output matches shape");
        self.push(value, op, tracked)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, k) = self.dims2(a, "matmul")?;
        let (k2, n) = self.dims2(b, "matmul")?;
        if k != k2 {
            return Err(TensorError::shape("matmul", self.shape(a), self.shape(b)));
        }
        let data = matmul_kernel(self.value(a).data(), self.value(b).data(), m, k, n);
        Ok(self.make(vec![m, n], data, Op::MatMul(a, b), &[a, b]))
    }

    /// `a · bᵀ` without materializing the transpose.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, k) = self.dims2(a, "matmul_bt")?;
        let (n, k2) = self.dims2(b, "matmul_bt")?;
        if k != k2 {
            return Err(TensorError::shape("matmul_bt", self.shape(a), self.shape(b)));
        }
        let data = matmul_bt_kernel(self.value(a).data(), self.value(b).data(), m, k, n);
        Ok(self.make(vec![m, n], data, Op::MatMulBt(a, b), &[a, b]))
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<(), TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| f(x, y)).collect();
        let shape = self.shape(a).to_vec();
        self.make(shape, data, op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape(a, b, "add")?;
        Ok(self.zip_with(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape(a, b, "sub")?;
        Ok(self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape(a, b, "mul")?;
        Ok(self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let data = self.value(a).data().iter().map(|x| x * s).collect();
        let shape = self.shape(a).to_vec();
        self.make(shape, data, Op::Scale(a, s), &[a])
    }

    /// Adds vector `b` (length `c`) to every row of `x` (`r×c`).
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var, TensorError> {
        let (_, c) = self.dims2(x, "add_row")?;
        if self.value(b).len() != c {
            return Err(TensorError::shape("add_row", self.shape(x), self.shape(b)));
        }
        let bias = self.value(b).data();
        let data =
            self.value(x).data().chunks_exact(c).flat_map(|row| row.iter().zip(bias).map(|(v, b)| v + b)).collect();
        let shape = self.shape(x).to_vec();
        Ok(self.make(shape, data, Op::AddRow(x, b), &[x, b]))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var, TensorError> {
        let (_, c) = self.dims2(x, "softmax_rows")?;
        if self.value(x).data().iter().any(|v| v.is_nan()) {
            return Err(TensorError::NonFinite { op: "softmax_rows" });
        }
        let data = softmax_rows_kernel(self.value(x).data(), c);
        let shape = self.shape(x).to_vec();
        Ok(self.make(shape, data, Op::Softmax(x), &[x]))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var, TensorError> {
        let (_, d) = self.dims2(x, "layer_norm")?;
        if self.value(gain).len() != d || self.value(bias).len() != d {
            return Err(TensorError::shape("layer_norm", self.shape(x), self.shape(gain)));
        }
        if eps.is_nan() || eps <= 0.0 {
            return Err(TensorError::Contract("layer_norm requires eps > 0"));
        }
        let ln = layer_norm_kernel(self.value(x).data(), self.value(gain).data(), self.value(bias).data(), d, eps);
        let shape = self.shape(x).to_vec();
        let op = Op::LayerNorm { x, gain, bias, normalized: ln.normalized, inv_std: ln.inv_std };
        Ok(self.make(shape, ln.out, op, &[x, gain, bias]))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let data = self.value(x).data().iter().map(|&v| gelu(v)).collect();
        let shape = self.shape(x).to_vec();
        self.make(shape, data, Op::Gelu(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.make(vec![1], vec![s], Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let m = t.data().iter().sum::<f64>() / t.len() as f64;
        self.make(vec![1], vec![m], Op::Mean(x), &[x])
    }

    /// Columns `start..start + width` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Result<Var, TensorError> {
        let (r, c) = self.dims2(x, "slice_cols")?;
        if width == 0 || start + width > c {
            return Err(TensorError::Contract("slice_cols range outside matrix"));
        }
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(r * width);
        for row in src.chunks_exact(c) {
            data.extend_from_slice(&row[start..start + width]);
        }
        Ok(self.make(vec![r, width], data, Op::SliceCols { x, start }, &[x]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::Contract("concat_cols needs at least one input"));
        }
        let (r, _) = self.dims2(parts[0], "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pr, pc) = self.dims2(p, "concat_cols")?;
            if pr != r {
                return Err(TensorError::shape("concat_cols", self.shape(parts[0]), self.shape(p)));
            }
            widths.push(pc);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        Ok(self.make(vec![r, total], data, Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Builds a matrix whose row `i` is row `picks[i].1` of
    /// `sources[picks[i].0]`. All sources must share their row width; a
    /// rank-1 source counts as a single row.
    pub fn gather_rows(&mut self, sources: &[Var], picks: &[(usize, usize)]) -> Result<Var, TensorError> {
        if sources.is_empty() || picks.is_empty() {
            return Err(TensorError::Contract("gather_rows needs sources and picks"));
        }
        let width = self.value(sources[0]).cols();
        for &s in sources {
            if self.value(s).cols() != width {
                return Err(TensorError::shape("gather_rows", self.shape(sources[0]), self.shape(s)));
            }
        }
        let mut data = Vec::with_capacity(picks.len() * width);
        for &(s, r) in picks {
            let src = sources.get(s).ok_or(TensorError::Contract("gather_rows source out of range"))?;
            let t = self.value(*src);
            if r >= t.rows() {
                return Err(TensorError::Contract("gather_rows row out of range"));
            }
            data.extend_from_slice(t.row(r));
        }
        let op = Op::GatherRows { sources: sources.to_vec(), picks: picks.to_vec() };
        Ok(self.make(vec![picks.len(), width], data, op, sources))
    }

    /// Selects rows of a single matrix.
    pub fn select_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var, TensorError> {
        let picks: Vec<_> = rows.iter().map(|&r| (0, r)).collect();
        self.gather_rows(&[x], &picks)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        if self.value(loss).len() != 1 {
            return Err(TensorError::Contract("backward requires a scalar loss"));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                g.filter(|_| self.nodes[i].tracked)
                    .map(|d| Tensor::new(self.nodes[i].value.shape().to_vec(), d).expect("grad shape"))
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let mut acc = |v: Var, delta: &dyn Fn(&mut [f64])| {
            if !self.nodes[v.0].tracked {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
            delta(slot);
        };
        let add_into = |dst: &mut [f64], src: &[f64]| {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        };

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = dims(&self.nodes[a.0].value);
                let n = node.value.cols();
                let av = self.nodes[a.0].value.data();
                let bv = self.nodes[b.0].value.data();
                // dA = dC · Bᵀ, dB = Aᵀ · dC
                acc(*a, &|dst| add_into(dst, &matmul_bt_kernel(g, bv, m, n, k)));
                acc(*b, &|dst| add_into(dst, &matmul_at_kernel(av, g, m, k, n)));
            }
            Op::MatMulBt(a, b) => {
                let (m, k) = dims(&self.nodes[a.0].value);
                let n = node.value.cols();
                let av = self.nodes[a.0].value.data();
                let bv = self.nodes[b.0].value.data();
                // C = A·Bᵀ: dA = dC · B, dB = dCᵀ · A
                acc(*a, &|dst| add_into(dst, &matmul_kernel(g, bv, m, n, k)));
                acc(*b, &|dst| add_into(dst, &matmul_at_kernel(g, av, m, n, k)));
            }
            Op::Add(a, b) => {
                acc(*a, &|dst| add_into(dst, g));
                acc(*b, &|dst| add_into(dst, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &|dst| add_into(dst, g));
                acc(*b, &|dst| {
                    for (d, s) in dst.iter_mut().zip(g) {
                        *d -= s;
                    }
                });
            }
            Op::Mul(a, b) => {
                let av = self.nodes[a.0].value.data();
                let bv = self.nodes[b.0].value.data();
                acc(*a, &|dst| {
                    for ((d, s), y) in dst.iter_mut().zip(g).zip(bv) {
                        *d += s * y;
                    }
                });
                acc(*b, &|dst| {
                    for ((d, s), x) in dst.iter_mut().zip(g).zip(av) {
                        *d += s * x;
                    }
                });
            }
            Op::Scale(a, s) => acc(*a, &|dst| {
                for (d, v) in dst.iter_mut().zip(g) {
                    *d += s * v;
                }
            }),
            Op::AddRow(x, b) => {
                let c = node.value.cols();
                acc(*x, &|dst| add_into(dst, g));
                acc(*b, &|dst| {
                    for row in g.chunks_exact(c) {
                        add_into(dst, row);
                    }
                });
            }
            Op::Softmax(x) => {
                let c = node.value.cols();
                let y = node.value.data();
                acc(*x, &|dst| {
                    for ((d, gr), yr) in dst.chunks_exact_mut(c).zip(g.chunks_exact(c)).zip(y.chunks_exact(c)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for j in 0..c {
                            d[j] += yr[j] * (gr[j] - dot);
                        }
                    }
                });
            }
            Op::LayerNorm { x, gain, bias, normalized, inv_std } => {
                let d = node.value.cols();
                let gv = self.nodes[gain.0].value.data();
                acc(*gain, &|dst| {
                    for (gr, xr) in g.chunks_exact(d).zip(normalized.chunks_exact(d)) {
                        for j in 0..d {
                            dst[j] += gr[j] * xr[j];
                        }
                    }
                });
                acc(*bias, &|dst| {
                    for gr in g.chunks_exact(d) {
                        add_into(dst, gr);
                    }
                });
                acc(*x, &|dst| {
                    let rows = g.chunks_exact(d).zip(normalized.chunks_exact(d));
                    for (r, (gr, xr)) in rows.enumerate() {
                        let mut mean_dxh = 0.0;
                        let mut mean_dxh_xh = 0.0;
                        for j in 0..d {
                            let dxh = gr[j] * gv[j];
                            mean_dxh += dxh;
                            mean_dxh_xh += dxh * xr[j];
                        }
                        mean_dxh /= d as f64;
                        mean_dxh_xh /= d as f64;
                        let dr = &mut dst[r * d..(r + 1) * d];
                        for j in 0..d {
                            let dxh = gr[j] * gv[j];
                            dr[j] += inv_std[r] * (dxh - mean_dxh - xr[j] * mean_dxh_xh);
                        }
                    }
                });
            }
            Op::Gelu(x) => {
                let xv = self.nodes[x.0].value.data();
                acc(*x, &|dst| {
                    for ((d, s), &v) in dst.iter_mut().zip(g).zip(xv) {
                        *d += s * gelu_derivative(v);
                    }
                });
            }
            Op::Sum(x) => acc(*x, &|dst| {
                for d in dst.iter_mut() {
                    *d += g[0];
                }
            }),
            Op::Mean(x) => {
                let n = self.nodes[x.0].value.len() as f64;
                acc(*x, &|dst| {
                    for d in dst.iter_mut() {
                        *d += g[0] / n;
                    }
                });
            }
            Op::SliceCols { x, start } => {
                let w = node.value.cols();
                let c = self.nodes[x.0].value.cols();
                acc(*x, &|dst| {
                    for (dr, gr) in dst.chunks_exact_mut(c).zip(g.chunks_exact(w)) {
                        add_into(&mut dr[*start..*start + w], gr);
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let mut offset = 0;
                for p in parts {
                    let w = self.nodes[p.0].value.cols();
                    acc(*p, &|dst| {
                        for (dr, gr) in dst.chunks_exact_mut(w).zip(g.chunks_exact(total)) {
                            add_into(dr, &gr[offset..offset + w]);
                        }
                    });
                    offset += w;
                }
            }
            Op::GatherRows { sources, picks } => {
                let w = node.value.cols();
                for (si, s) in sources.iter().enumerate() {
                    acc(*s, &|dst| {
                        for (out_row, &(src, r)) in picks.iter().enumerate() {
                            if src == si {
                                add_into(&mut dst[r * w..(r + 1) * w], &g[out_row * w..(out_row + 1) * w]);
                            }
                        }
                    });
                }
            }
        }
    }
}

fn dims(t: &Tensor) -> (usize, usize) {
    let s = t.shape();
    if s.len() == 1 {
        (1, s[0])
    } else {
        (s[0], s[1])
    }
}
