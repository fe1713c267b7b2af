//! Define-by-run tape with reverse-mode gradients.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ValueId(usize);

/// Norm floor for row normalization; rows below it scale linearly.
const NORMALIZE_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(ValueId, ValueId),
    Sub(ValueId, ValueId),
    Mul(ValueId, ValueId),
    Scale(ValueId, f64),
    Relu(ValueId),
    Exp(ValueId),
    Log(ValueId),
    Abs(ValueId),
    Sum(ValueId),
    Mean(ValueId),
    Matmul(ValueId, ValueId),
    MatmulNt(ValueId, ValueId),
    CausalConv1d {
        signal: ValueId,
        kernel: ValueId,
        dilation: usize,
    },
    AddRowBroadcast(ValueId, ValueId),
    DotRows(ValueId, ValueId),
    L2NormalizeRows(ValueId),
    LogsumexpRows(ValueId),
    MeanRows(ValueId),
    Row(ValueId, usize),
    GatherRows {
        sources: Vec<ValueId>,
        row: usize,
    },
    ConcatCols(ValueId, ValueId),
    ConcatVec(ValueId, ValueId),
    DropDiagonal(ValueId),
    Reshape(ValueId),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Ordered record of executed ops. Backward traverses in exact reverse
/// execution order; fan-out gradients accumulate by summation.
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Register an input or parameter value.
    pub fn leaf(&mut self, value: Tensor) -> Result<ValueId> {
        self.push("leaf", value, Op::Leaf)
    }

    pub fn value(&self, id: ValueId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient of the last `backward` loss w.r.t. this value, if any
    /// flowed to it.
    pub fn grad(&self, id: ValueId) -> Option<&[f64]> {
        self.grads[id.0].as_deref()
    }

    pub fn grad_tensor(&self, id: ValueId) -> Option<Tensor> {
        self.grads[id.0]
            .as_ref()
            .map(|g| Tensor::new(self.nodes[id.0].value.shape().to_vec(), g.clone()).unwrap())
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op) -> Result<ValueId> {
        if !value.all_finite() {
            let idx = value.data().iter().position(|v| !v.is_finite()).unwrap();
            return Err(Error::NumericOverflow {
                op: op_name,
                detail: format!("element {idx} of shape {:?}", value.shape()),
            });
        }
        self.nodes.push(Node { value, op });
        self.grads.push(None);
        Ok(ValueId(self.nodes.len() - 1))
    }

    fn binary_same_shape(
        &mut self,
        name: &'static str,
        a: ValueId,
        b: ValueId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<ValueId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::ShapeMismatch {
                op: name,
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data).unwrap();
        self.push(name, out, op)
    }

    fn unary(
        &mut self,
        name: &'static str,
        x: ValueId,
        f: impl Fn(f64) -> f64,
        op: Op,
    ) -> Result<ValueId> {
        let tx = self.value(x);
        let data = tx.data().iter().map(|&v| f(v)).collect();
        let out = Tensor::new(tx.shape().to_vec(), data).unwrap();
        self.push(name, out, op)
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.binary_same_shape("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.binary_same_shape("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul_elementwise(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.binary_same_shape("mul_elementwise", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: ValueId, c: f64) -> Result<ValueId> {
        self.unary("scale", x, |v| v * c, Op::Scale(x, c))
    }

    pub fn relu(&mut self, x: ValueId) -> Result<ValueId> {
        self.unary("relu", x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn exp(&mut self, x: ValueId) -> Result<ValueId> {
        self.unary("exp", x, f64::exp, Op::Exp(x))
    }

    pub fn log(&mut self, x: ValueId) -> Result<ValueId> {
        self.unary("log", x, f64::ln, Op::Log(x))
    }

    pub fn abs(&mut self, x: ValueId) -> Result<ValueId> {
        self.unary("abs", x, f64::abs, Op::Abs(x))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: ValueId) -> Result<ValueId> {
        let s: f64 = self.value(x).data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(x))
    }

    /// Mean of all elements, as a scalar.
    pub fn mean(&mut self, x: ValueId) -> Result<ValueId> {
        let t = self.value(x);
        if t.numel() == 0 {
            return Err(Error::InvalidArgument("mean of empty tensor".into()));
        }
        let m = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.push("mean", Tensor::scalar(m), Op::Mean(x))
    }

    /// `a @ b` for rank-2 operands (m×k · k×n → m×n).
    pub fn matmul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.rows() {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let (m, n) = (ta.rows(), tb.cols());
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            let arow = ta.row(i);
            let orow = &mut data[i * n..(i + 1) * n];
            for (l, &av) in arow.iter().enumerate() {
                let brow = &tb.data()[l * n..(l + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
        let out = Tensor::matrix(m, n, data).unwrap();
        self.push("matmul", out, Op::Matmul(a, b))
    }

    /// `a @ b^T` for rank-2 operands (m×k · (n×k)^T → m×n).
    pub fn matmul_nt(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.cols() {
            return Err(Error::ShapeMismatch {
                op: "matmul_nt",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let (m, n) = (ta.rows(), tb.rows());
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            let arow = ta.row(i);
            for j in 0..n {
                let brow = tb.row(j);
                data[i * n + j] = arow.iter().zip(brow).map(|(&x, &y)| x * y).sum();
            }
        }
        let out = Tensor::matrix(m, n, data).unwrap();
        self.push("matmul_nt", out, Op::MatmulNt(a, b))
    }

    /// Causal dilated 1-D convolution.
    ///
    /// `signal` is T×C_in, `kernel` is C_out×C_in×K. The signal is
    /// left-padded with zeros so the output is T×C_out and output row t
    /// depends only on signal rows ≤ t:
    /// `out[t,o] = Σ_i Σ_k kernel[o,i,k] · signal[t − k·dilation, i]`.
    pub fn causal_dilated_conv1d(
        &mut self,
        signal: ValueId,
        kernel: ValueId,
        dilation: usize,
    ) -> Result<ValueId> {
        if dilation < 1 {
            return Err(Error::InvalidArgument(format!(
                "conv dilation must be ≥ 1, got {dilation}"
            )));
        }
        let (ts, tk) = (self.value(signal), self.value(kernel));
        if ts.rank() != 2 || tk.rank() != 3 || tk.shape()[1] != ts.shape()[1] {
            return Err(Error::ShapeMismatch {
                op: "causal_dilated_conv1d",
                lhs: ts.shape().to_vec(),
                rhs: tk.shape().to_vec(),
            });
        }
        let (t_len, c_in) = (ts.shape()[0], ts.shape()[1]);
        let (c_out, k_len) = (tk.shape()[0], tk.shape()[2]);
        let mut data = vec![0.0; t_len * c_out];
        for t in 0..t_len {
            let orow = &mut data[t * c_out..(t + 1) * c_out];
            for k in 0..k_len {
                let Some(src_t) = t.checked_sub(k * dilation) else {
                    break; // earlier taps fall into the zero padding
                };
                let srow = &ts.data()[src_t * c_in..(src_t + 1) * c_in];
                for (o, ov) in orow.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (i, &sv) in srow.iter().enumerate() {
                        acc += tk.data()[(o * c_in + i) * k_len + k] * sv;
                    }
                    *ov += acc;
                }
            }
        }
        let out = Tensor::matrix(t_len, c_out, data).unwrap();
        self.push(
            "causal_dilated_conv1d",
            out,
            Op::CausalConv1d {
                signal,
                kernel,
                dilation,
            },
        )
    }

    /// Add a length-C row vector to every row of an R×C matrix.
    pub fn add_row_broadcast(&mut self, m: ValueId, v: ValueId) -> Result<ValueId> {
        let (tm, tv) = (self.value(m), self.value(v));
        if tm.rank() != 2 || tv.rank() != 1 || tm.cols() != tv.shape()[0] {
            return Err(Error::ShapeMismatch {
                op: "add_row_broadcast",
                lhs: tm.shape().to_vec(),
                rhs: tv.shape().to_vec(),
            });
        }
        let cols = tm.cols();
        let data = tm
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + tv.data()[i % cols])
            .collect();
        let out = Tensor::new(tm.shape().to_vec(), data).unwrap();
        self.push("add_row_broadcast", out, Op::AddRowBroadcast(m, v))
    }

    /// Per-row dot product of two R×C matrices → length-R vector.
    pub fn dot_rows(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || ta.shape() != tb.shape() {
            return Err(Error::ShapeMismatch {
                op: "dot_rows",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let data = (0..ta.rows())
            .map(|r| ta.row(r).iter().zip(tb.row(r)).map(|(&x, &y)| x * y).sum())
            .collect();
        let out = Tensor::vector(data);
        self.push("dot_rows", out, Op::DotRows(a, b))
    }

    /// Scale each row to unit Euclidean norm (rows below the norm floor
    /// are scaled by 1/floor instead).
    pub fn l2_normalize_rows(&mut self, x: ValueId) -> Result<ValueId> {
        let tx = self.value(x);
        if tx.rank() != 2 {
            return Err(Error::ShapeMismatch {
                op: "l2_normalize_rows",
                lhs: tx.shape().to_vec(),
                rhs: vec![],
            });
        }
        let cols = tx.cols();
        let mut data = Vec::with_capacity(tx.numel());
        for r in 0..tx.rows() {
            let row = tx.row(r);
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORMALIZE_EPS);
            data.extend(row.iter().map(|&v| v / norm));
        }
        let out = Tensor::matrix(tx.rows(), cols, data).unwrap();
        self.push("l2_normalize_rows", out, Op::L2NormalizeRows(x))
    }

    /// Stable per-row log(Σ exp) of an R×C matrix → length-R vector.
    ///
    /// Computed as `max + log(Σ exp(x − max))`, so it stays finite for
    /// row maxima far beyond the naive exp() range.
    pub fn logsumexp_rows(&mut self, x: ValueId) -> Result<ValueId> {
        let tx = self.value(x);
        if tx.rank() != 2 || tx.cols() == 0 {
            return Err(Error::ShapeMismatch {
                op: "logsumexp_rows",
                lhs: tx.shape().to_vec(),
                rhs: vec![],
            });
        }
        let data = (0..tx.rows())
            .map(|r| {
                let row = tx.row(r);
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
            })
            .collect();
        let out = Tensor::vector(data);
        self.push("logsumexp_rows", out, Op::LogsumexpRows(x))
    }

    /// Column-wise mean of an R×C matrix → length-C vector.
    pub fn mean_rows(&mut self, x: ValueId) -> Result<ValueId> {
        let tx = self.value(x);
        if tx.rank() != 2 || tx.rows() == 0 {
            return Err(Error::ShapeMismatch {
                op: "mean_rows",
                lhs: tx.shape().to_vec(),
                rhs: vec![],
            });
        }
        let (rows, cols) = (tx.rows(), tx.cols());
        let mut data = vec![0.0; cols];
        for r in 0..rows {
            for (d, &v) in data.iter_mut().zip(tx.row(r)) {
                *d += v;
            }
        }
        for d in &mut data {
            *d /= rows as f64;
        }
        self.push("mean_rows", Tensor::vector(data), Op::MeanRows(x))
    }

    /// Extract row r of an R×C matrix as a length-C vector.
    pub fn row(&mut self, x: ValueId, r: usize) -> Result<ValueId> {
        let tx = self.value(x);
        if tx.rank() != 2 || r >= tx.rows() {
            return Err(Error::InvalidArgument(format!(
                "row {r} out of range for shape {:?}",
                tx.shape()
            )));
        }
        let out = Tensor::vector(tx.row(r).to_vec());
        self.push("row", out, Op::Row(x, r))
    }

    /// Stack row `row` of each source matrix into a B×C matrix
    /// (B = number of sources).
    pub fn gather_rows(&mut self, sources: &[ValueId], row: usize) -> Result<ValueId> {
        if sources.is_empty() {
            return Err(Error::InvalidArgument("gather_rows: no sources".into()));
        }
        let cols = self.value(sources[0]).cols();
        let mut data = Vec::with_capacity(sources.len() * cols);
        for &s in sources {
            let ts = self.value(s);
            if ts.rank() != 2 || ts.cols() != cols || row >= ts.rows() {
                return Err(Error::ShapeMismatch {
                    op: "gather_rows",
                    lhs: ts.shape().to_vec(),
                    rhs: vec![row, cols],
                });
            }
            data.extend_from_slice(ts.row(row));
        }
        let out = Tensor::matrix(sources.len(), cols, data).unwrap();
        self.push(
            "gather_rows",
            out,
            Op::GatherRows {
                sources: sources.to_vec(),
                row,
            },
        )
    }

    /// Horizontal concatenation of R×Ca and R×Cb → R×(Ca+Cb).
    pub fn concat_cols(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.rows() != tb.rows() {
            return Err(Error::ShapeMismatch {
                op: "concat_cols",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let (rows, ca, cb) = (ta.rows(), ta.cols(), tb.cols());
        let mut data = Vec::with_capacity(rows * (ca + cb));
        for r in 0..rows {
            data.extend_from_slice(ta.row(r));
            data.extend_from_slice(tb.row(r));
        }
        let out = Tensor::matrix(rows, ca + cb, data).unwrap();
        self.push("concat_cols", out, Op::ConcatCols(a, b))
    }

    /// Concatenate two vectors.
    pub fn concat_vec(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 1 || tb.rank() != 1 {
            return Err(Error::ShapeMismatch {
                op: "concat_vec",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let mut data = ta.data().to_vec();
        data.extend_from_slice(tb.data());
        self.push("concat_vec", Tensor::vector(data), Op::ConcatVec(a, b))
    }

    /// Remove the diagonal of an n×n matrix → n×(n−1), row-wise.
    pub fn drop_diagonal(&mut self, x: ValueId) -> Result<ValueId> {
        let tx = self.value(x);
        if tx.rank() != 2 || tx.rows() != tx.cols() || tx.rows() < 2 {
            return Err(Error::ShapeMismatch {
                op: "drop_diagonal",
                lhs: tx.shape().to_vec(),
                rhs: vec![],
            });
        }
        let n = tx.rows();
        let mut data = Vec::with_capacity(n * (n - 1));
        for i in 0..n {
            let row = tx.row(i);
            data.extend_from_slice(&row[..i]);
            data.extend_from_slice(&row[i + 1..]);
        }
        let out = Tensor::matrix(n, n - 1, data).unwrap();
        self.push("drop_diagonal", out, Op::DropDiagonal(x))
    }

    /// Reinterpret a value with a new shape of equal element count.
    pub fn reshape(&mut self, x: ValueId, shape: Vec<usize>) -> Result<ValueId> {
        let tx = self.value(x);
        if shape.iter().product::<usize>() != tx.numel() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: tx.shape().to_vec(),
                rhs: shape,
            });
        }
        let out = Tensor::new(shape, tx.data().to_vec()).unwrap();
        self.push("reshape", out, Op::Reshape(x))
    }

    fn accumulate(&mut self, id: ValueId, contribution: &[f64]) {
        match &mut self.grads[id.0] {
            Some(g) => {
                for (gv, &c) in g.iter_mut().zip(contribution) {
                    *gv += c;
                }
            }
            None => self.grads[id.0] = Some(contribution.to_vec()),
        }
    }

    /// Run the reverse pass from a scalar loss. After this call,
    /// `grad(id)` holds ∂loss/∂value for every value the loss depends on.
    pub fn backward(&mut self, loss: ValueId) -> Result<()> {
        if self.backward_done {
            return Err(Error::InvalidArgument(
                "backward called twice on the same tape".into(),
            ));
        }
        let loss_value = self.value(loss);
        if loss_value.numel() != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward requires a scalar loss, got shape {:?}",
                loss_value.shape()
            )));
        }
        self.backward_done = true;
        self.grads[loss.0] = Some(vec![1.0]);

        for idx in (0..self.nodes.len()).rev() {
            let Some(g) = self.grads[idx].clone() else {
                continue;
            };
            let op = self.nodes[idx].op.clone();
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    self.accumulate(a, &g);
                    self.accumulate(b, &g);
                }
                Op::Sub(a, b) => {
                    self.accumulate(a, &g);
                    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                    self.accumulate(b, &neg);
                }
                Op::Mul(a, b) => {
                    let da: Vec<f64> = g
                        .iter()
                        .zip(self.value(b).data())
                        .map(|(&gv, &bv)| gv * bv)
                        .collect();
                    let db: Vec<f64> = g
                        .iter()
                        .zip(self.value(a).data())
                        .map(|(&gv, &av)| gv * av)
                        .collect();
                    self.accumulate(a, &da);
                    self.accumulate(b, &db);
                }
                Op::Scale(x, c) => {
                    let dx: Vec<f64> = g.iter().map(|&gv| gv * c).collect();
                    self.accumulate(x, &dx);
                }
                Op::Relu(x) => {
                    let dx: Vec<f64> = g
                        .iter()
                        .zip(self.value(x).data())
                        .map(|(&gv, &xv)| if xv > 0.0 { gv } else { 0.0 })
                        .collect();
                    self.accumulate(x, &dx);
                }
                Op::Exp(x) => {
                    let dx: Vec<f64> = g
                        .iter()
                        .zip(self.nodes[idx].value.data())
                        .map(|(&gv, &yv)| gv * yv)
                        .collect();
                    self.accumulate(x, &dx);
                }
                Op::Log(x) => {
                    let dx: Vec<f64> = g
                        .iter()
                        .zip(self.value(x).data())
                        .map(|(&gv, &xv)| gv / xv)
                        .collect();
                    self.accumulate(x, &dx);
                }
                Op::Abs(x) => {
                    // sign(0) = 0
                    let dx: Vec<f64> = g
                        .iter()
                        .zip(self.value(x).data())
                        .map(|(&gv, &xv)| gv * xv.signum() * f64::from(xv != 0.0))
                        .collect();
                    self.accumulate(x, &dx);
                }
                Op::Sum(x) => {
                    let dx = vec![g[0]; self.value(x).numel()];
                    self.accumulate(x, &dx);
                }
                Op::Mean(x) => {
                    let n = self.value(x).numel();
                    let dx = vec![g[0] / n as f64; n];
                    self.accumulate(x, &dx);
                }
                Op::Matmul(a, b) => {
                    let (ta, tb) = (self.value(a), self.value(b));
                    let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                    // dA = G @ B^T
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        for l in 0..k {
                            let brow = &tb.data()[l * n..(l + 1) * n];
                            da[i * k + l] = g[i * n..(i + 1) * n]
                                .iter()
                                .zip(brow)
                                .map(|(&gv, &bv)| gv * bv)
                                .sum();
                        }
                    }
                    // dB = A^T @ G
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        let arow = ta.row(i);
                        let grow = &g[i * n..(i + 1) * n];
                        for (l, &av) in arow.iter().enumerate() {
                            let drow = &mut db[l * n..(l + 1) * n];
                            for (dv, &gv) in drow.iter_mut().zip(grow) {
                                *dv += av * gv;
                            }
                        }
                    }
                    self.accumulate(a, &da);
                    self.accumulate(b, &db);
                }
                Op::MatmulNt(a, b) => {
                    let (ta, tb) = (self.value(a), self.value(b));
                    let (m, k, n) = (ta.rows(), ta.cols(), tb.rows());
                    // out = A @ B^T ⇒ dA = G @ B, dB = G^T @ A
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        let drow = &mut da[i * k..(i + 1) * k];
                        for (j, &gv) in grow.iter().enumerate() {
                            for (dv, &bv) in drow.iter_mut().zip(tb.row(j)) {
                                *dv += gv * bv;
                            }
                        }
                    }
                    let mut db = vec![0.0; n * k];
                    for i in 0..m {
                        let arow = ta.row(i);
                        let grow = &g[i * n..(i + 1) * n];
                        for (j, &gv) in grow.iter().enumerate() {
                            let drow = &mut db[j * k..(j + 1) * k];
                            for (dv, &av) in drow.iter_mut().zip(arow) {
                                *dv += gv * av;
                            }
                        }
                    }
                    self.accumulate(a, &da);
                    self.accumulate(b, &db);
                }
                Op::CausalConv1d {
                    signal,
                    kernel,
                    dilation,
                } => {
                    let (ts, tk) = (self.value(signal), self.value(kernel));
                    let (t_len, c_in) = (ts.shape()[0], ts.shape()[1]);
                    let (c_out, k_len) = (tk.shape()[0], tk.shape()[2]);
                    let mut dsig = vec![0.0; t_len * c_in];
                    let mut dker = vec![0.0; c_out * c_in * k_len];
                    for t in 0..t_len {
                        let grow = &g[t * c_out..(t + 1) * c_out];
                        for k in 0..k_len {
                            let Some(src_t) = t.checked_sub(k * dilation) else {
                                break;
                            };
                            let srow = &ts.data()[src_t * c_in..(src_t + 1) * c_in];
                            let drow = &mut dsig[src_t * c_in..(src_t + 1) * c_in];
                            for (o, &gv) in grow.iter().enumerate() {
                                for i in 0..c_in {
                                    let kidx = (o * c_in + i) * k_len + k;
                                    drow[i] += gv * tk.data()[kidx];
                                    dker[kidx] += gv * srow[i];
                                }
                            }
                        }
                    }
                    self.accumulate(signal, &dsig);
                    self.accumulate(kernel, &dker);
                }
                Op::AddRowBroadcast(m, v) => {
                    let cols = self.value(v).numel();
                    self.accumulate(m, &g);
                    let mut dv = vec![0.0; cols];
                    for (i, &gv) in g.iter().enumerate() {
                        dv[i % cols] += gv;
                    }
                    self.accumulate(v, &dv);
                }
                Op::DotRows(a, b) => {
                    let (ta, tb) = (self.value(a), self.value(b));
                    let cols = ta.cols();
                    let mut da = vec![0.0; ta.numel()];
                    let mut db = vec![0.0; tb.numel()];
                    for (r, &gv) in g.iter().enumerate() {
                        for c in 0..cols {
                            da[r * cols + c] = gv * tb.at2(r, c);
                            db[r * cols + c] = gv * ta.at2(r, c);
                        }
                    }
                    self.accumulate(a, &da);
                    self.accumulate(b, &db);
                }
                Op::L2NormalizeRows(x) => {
                    let tx = self.value(x);
                    let ty = &self.nodes[idx].value;
                    let cols = tx.cols();
                    let mut dx = vec![0.0; tx.numel()];
                    for r in 0..tx.rows() {
                        let xrow = tx.row(r);
                        let yrow = ty.row(r);
                        let grow = &g[r * cols..(r + 1) * cols];
                        let norm = xrow.iter().map(|v| v * v).sum::<f64>().sqrt();
                        let drow = &mut dx[r * cols..(r + 1) * cols];
                        if norm > NORMALIZE_EPS {
                            let gy: f64 = grow.iter().zip(yrow).map(|(&gv, &yv)| gv * yv).sum();
                            for ((dv, &gv), &yv) in drow.iter_mut().zip(grow).zip(yrow) {
                                *dv = (gv - gy * yv) / norm;
                            }
                        } else {
                            for (dv, &gv) in drow.iter_mut().zip(grow) {
                                *dv = gv / NORMALIZE_EPS;
                            }
                        }
                    }
                    self.accumulate(x, &dx);
                }
                Op::LogsumexpRows(x) => {
                    let tx = self.value(x);
                    let cols = tx.cols();
                    let mut dx = vec![0.0; tx.numel()];
                    for (r, &gv) in g.iter().enumerate() {
                        let row = tx.row(r);
                        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let denom: f64 = row.iter().map(|&v| (v - m).exp()).sum();
                        let drow = &mut dx[r * cols..(r + 1) * cols];
                        for (dv, &xv) in drow.iter_mut().zip(row) {
                            *dv = gv * (xv - m).exp() / denom;
                        }
                    }
                    self.accumulate(x, &dx);
                }
                Op::MeanRows(x) => {
                    let tx = self.value(x);
                    let (rows, cols) = (tx.rows(), tx.cols());
                    let mut dx = vec![0.0; tx.numel()];
                    for r in 0..rows {
                        for c in 0..cols {
                            dx[r * cols + c] = g[c] / rows as f64;
                        }
                    }
                    self.accumulate(x, &dx);
                }
                Op::Row(x, r) => {
                    let tx = self.value(x);
                    let cols = tx.cols();
                    let mut dx = vec![0.0; tx.numel()];
                    dx[r * cols..(r + 1) * cols].copy_from_slice(&g);
                    self.accumulate(x, &dx);
                }
                Op::GatherRows { sources, row } => {
                    let cols = self.value(sources[0]).cols();
                    for (i, &s) in sources.iter().enumerate() {
                        let mut ds = vec![0.0; self.value(s).numel()];
                        ds[row * cols..(row + 1) * cols]
                            .copy_from_slice(&g[i * cols..(i + 1) * cols]);
                        self.accumulate(s, &ds);
                    }
                }
                Op::ConcatCols(a, b) => {
                    let (ta, tb) = (self.value(a), self.value(b));
                    let (rows, ca, cb) = (ta.rows(), ta.cols(), tb.cols());
                    let mut da = vec![0.0; ta.numel()];
                    let mut db = vec![0.0; tb.numel()];
                    for r in 0..rows {
                        let grow = &g[r * (ca + cb)..(r + 1) * (ca + cb)];
                        da[r * ca..(r + 1) * ca].copy_from_slice(&grow[..ca]);
                        db[r * cb..(r + 1) * cb].copy_from_slice(&grow[ca..]);
                    }
                    self.accumulate(a, &da);
                    self.accumulate(b, &db);
                }
                Op::ConcatVec(a, b) => {
                    let na = self.value(a).numel();
                    self.accumulate(a, &g[..na]);
                    let gb = g[na..].to_vec();
                    self.accumulate(b, &gb);
                }
                Op::DropDiagonal(x) => {
                    let n = self.value(x).rows();
                    let mut dx = vec![0.0; n * n];
                    for i in 0..n {
                        let grow = &g[i * (n - 1)..(i + 1) * (n - 1)];
                        for (j, &gv) in grow.iter().enumerate() {
                            let col = if j < i { j } else { j + 1 };
                            dx[i * n + col] = gv;
                        }
                    }
                    self.accumulate(x, &dx);
                }
                Op::Reshape(x) => {
                    self.accumulate(x, &g);
                }
            }
        }
        Ok(())
    }
}
