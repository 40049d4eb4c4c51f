//! Reverse-mode differentiation over a linear tape of matrix operations.
//!
//! Forward calls evaluate eagerly and record the operation; `backward`
//! walks the tape in reverse (tape order is a topological order by
//! construction) and accumulates gradients across fan-out. Gradients are
//! only propagated into subgraphs that can reach a gradient-requiring
//! leaf.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // no_std builds take f64 math from this trait
use num_traits::Float;

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

enum Op {
    Leaf,
    Matmul(usize, usize),
    Add(usize, usize),
    /// Add a 1 x c row vector to every row of an n x c matrix.
    AddRow(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Relu(usize),
    Sigmoid(usize),
    Tanh(usize),
    Abs(usize),
    ConcatRows(Vec<usize>),
    SliceRows {
        src: usize,
        start: usize,
    },
    GatherRows {
        src: usize,
        index: Vec<usize>,
    },
    RowMean(usize),
    ScatterMean {
        src: usize,
        groups: Vec<usize>,
        group_count: usize,
    },
    /// Each row of `mats` is a flattened (d x o) matrix applied to the
    /// matching d-row of `vecs`, producing an o-row.
    RowwiseMatmul {
        mats: usize,
        vecs: usize,
    },
}

struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Matrix>>,
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` call, if the node required one.
    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        debug_assert!(value.all_finite(), "non-finite forward value");
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A leaf that does not require gradients (inputs, labels).
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf that accumulates gradients (parameters).
    pub fn parameter(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    fn shape_err(op: &'static str, detail: alloc::string::String) -> Error {
        Error::Shape { op, detail }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        if ac != br {
            return Err(Self::shape_err(
                "matmul",
                format!("{ar}x{ac} . {br}x{bc}"),
            ));
        }
        let value = self.value(a).matmul(self.value(b));
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Matmul(a.0, b.0), needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Self::shape_err(
                "add",
                format!("{:?} + {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        let mut value = self.value(a).clone();
        value.axpy(1.0, self.value(b));
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add(a.0, b.0), needs))
    }

    /// Row-broadcast add: `a` is n x c, `bias` is 1 x c.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (_, ac) = self.value(a).shape();
        let (br, bc) = self.value(bias).shape();
        if br != 1 || bc != ac {
            return Err(Self::shape_err(
                "add_row",
                format!("{:?} + {:?}", self.value(a).shape(), self.value(bias).shape()),
            ));
        }
        let mut value = self.value(a).clone();
        for r in 0..value.rows() {
            let row = value.row_mut(r);
            for (x, &b) in row.iter_mut().zip(self.nodes[bias.0].value.data()) {
                *x += b;
            }
        }
        let needs = self.needs(a) || self.needs(bias);
        Ok(self.push(value, Op::AddRow(a.0, bias.0), needs))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Self::shape_err(
                "sub",
                format!("{:?} - {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        let mut value = self.value(a).clone();
        value.axpy(-1.0, self.value(b));
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Sub(a.0, b.0), needs))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Self::shape_err(
                "mul",
                format!("{:?} * {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        let value = Matrix::from_flat(
            self.value(a).rows(),
            self.value(a).cols(),
            self.value(a)
                .data()
                .iter()
                .zip(self.value(b).data())
                .map(|(x, y)| x * y)
                .collect(),
        );
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Mul(a.0, b.0), needs))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).map(|v| k * v);
        let needs = self.needs(a);
        self.push(value, Op::Scale(a.0, k), needs)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| if v > 0.0 { v } else { 0.0 });
        let needs = self.needs(a);
        self.push(value, Op::Relu(a.0), needs)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| 1.0 / (1.0 + (-v).exp()));
        let needs = self.needs(a);
        self.push(value, Op::Sigmoid(a.0), needs)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v.tanh());
        let needs = self.needs(a);
        self.push(value, Op::Tanh(a.0), needs)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v.abs());
        let needs = self.needs(a);
        self.push(value, Op::Abs(a.0), needs)
    }

    /// Stack matrices vertically. All parts must share the column count.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Self::shape_err("concat_rows", "no parts".into()));
        }
        let cols = self.value(parts[0]).cols();
        let mut rows = Vec::new();
        for &p in parts {
            if self.value(p).cols() != cols {
                return Err(Self::shape_err(
                    "concat_rows",
                    format!("mixed column counts {} vs {cols}", self.value(p).cols()),
                ));
            }
            for r in 0..self.value(p).rows() {
                rows.push(self.value(p).row(r).to_vec());
            }
        }
        let value = Matrix::from_rows(&rows, cols);
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(
            value,
            Op::ConcatRows(parts.iter().map(|p| p.0).collect()),
            needs,
        ))
    }

    /// Contiguous row range `start..start + len`.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = self.value(a).shape();
        if start + len > rows {
            return Err(Self::shape_err(
                "slice_rows",
                format!("{start}..{} of {rows} rows", start + len),
            ));
        }
        let mut data = Vec::with_capacity(len * cols);
        for r in start..start + len {
            data.extend_from_slice(self.value(a).row(r));
        }
        let value = Matrix::from_flat(len, cols, data);
        let needs = self.needs(a);
        Ok(self.push(value, Op::SliceRows { src: a.0, start }, needs))
    }

    /// Select rows by index (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Result<Var> {
        let (rows, cols) = self.value(a).shape();
        if let Some(&bad) = index.iter().find(|&&i| i >= rows) {
            return Err(Self::shape_err(
                "gather_rows",
                format!("index {bad} out of {rows} rows"),
            ));
        }
        let mut data = Vec::with_capacity(index.len() * cols);
        for &i in index {
            data.extend_from_slice(self.value(a).row(i));
        }
        let value = Matrix::from_flat(index.len(), cols, data);
        let needs = self.needs(a);
        Ok(self.push(
            value,
            Op::GatherRows {
                src: a.0,
                index: index.to_vec(),
            },
            needs,
        ))
    }

    /// Column-wise mean over rows: n x c -> 1 x c.
    pub fn row_mean(&mut self, a: Var) -> Result<Var> {
        let (rows, cols) = self.value(a).shape();
        if rows == 0 {
            return Err(Self::shape_err("row_mean", "empty matrix".into()));
        }
        let mut acc = vec![0.0; cols];
        for r in 0..rows {
            for (s, &v) in acc.iter_mut().zip(self.value(a).row(r)) {
                *s += v;
            }
        }
        let n = rows as f64;
        let value = Matrix::from_flat(1, cols, acc.into_iter().map(|v| v / n).collect());
        let needs = self.needs(a);
        Ok(self.push(value, Op::RowMean(a.0), needs))
    }

    /// Group rows by `groups` and average within each of `group_count`
    /// groups; empty groups produce zero rows.
    pub fn scatter_mean(&mut self, a: Var, groups: &[usize], group_count: usize) -> Result<Var> {
        let (rows, cols) = self.value(a).shape();
        if groups.len() != rows {
            return Err(Self::shape_err(
                "scatter_mean",
                format!("{} group indices for {rows} rows", groups.len()),
            ));
        }
        if let Some(&bad) = groups.iter().find(|&&g| g >= group_count) {
            return Err(Self::shape_err(
                "scatter_mean",
                format!("group {bad} out of {group_count}"),
            ));
        }
        let mut value = Matrix::zeros(group_count, cols);
        let mut counts = vec![0usize; group_count];
        for (r, &g) in groups.iter().enumerate() {
            counts[g] += 1;
            let dst = value.row_mut(g);
            for (d, &v) in dst.iter_mut().zip(self.value(a).row(r)) {
                *d += v;
            }
        }
        for (g, &count) in counts.iter().enumerate() {
            if count > 1 {
                let n = count as f64;
                value.row_mut(g).iter_mut().for_each(|v| *v /= n);
            }
        }
        let needs = self.needs(a);
        Ok(self.push(
            value,
            Op::ScatterMean {
                src: a.0,
                groups: groups.to_vec(),
                group_count,
            },
            needs,
        ))
    }

    /// Apply a per-row weight matrix: `mats` is k x (d*o) (each row a
    /// flattened d x o matrix), `vecs` is k x d; the result is k x o with
    /// `out[r] = vecs[r] . reshape(mats[r], d, o)`.
    pub fn rowwise_matmul(&mut self, mats: Var, vecs: Var) -> Result<Var> {
        let (kr, kc) = self.value(mats).shape();
        let (vr, d) = self.value(vecs).shape();
        if kr != vr || d == 0 || kc % d != 0 {
            return Err(Self::shape_err(
                "rowwise_matmul",
                format!("mats {kr}x{kc} vs vecs {vr}x{d}"),
            ));
        }
        let o = kc / d;
        let mut value = Matrix::zeros(kr, o);
        for r in 0..kr {
            let w = self.nodes[mats.0].value.row(r);
            let x = self.nodes[vecs.0].value.row(r);
            let out = value.row_mut(r);
            for (c, &xc) in x.iter().enumerate() {
                let block = &w[c * o..(c + 1) * o];
                for (dst, &wv) in out.iter_mut().zip(block) {
                    *dst += xc * wv;
                }
            }
        }
        let needs = self.needs(mats) || self.needs(vecs);
        Ok(self.push(
            value,
            Op::RowwiseMatmul {
                mats: mats.0,
                vecs: vecs.0,
            },
            needs,
        ))
    }

    /// Smallest |input| over all kinked activations (relu, abs) on the
    /// tape. Finite-difference checks are only valid when this margin
    /// comfortably exceeds the probe step.
    pub fn kink_margin(&self) -> f64 {
        let mut margin = f64::INFINITY;
        for node in &self.nodes {
            if let Op::Relu(a) | Op::Abs(a) = node.op {
                for v in self.nodes[a].value.data() {
                    margin = margin.min(v.abs());
                }
            }
        }
        margin
    }

    /// Reverse pass from a scalar loss; gradients accumulate across
    /// fan-out and are reachable through [`Tape::grad`] afterwards.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::data(format!(
                "backward requires a 1x1 loss, got {:?}",
                self.value(loss).shape()
            )));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(Matrix::scalar(1.0));

        for i in (0..self.nodes.len()).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            self.propagate(i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn grad_slot(&mut self, idx: usize) -> &mut Matrix {
        let shape = self.nodes[idx].value.shape();
        self.grads[idx].get_or_insert_with(|| Matrix::zeros(shape.0, shape.1))
    }

    fn propagate(&mut self, idx: usize, g: &Matrix) {
        // Only reach into parents that can use a gradient.
        macro_rules! wants {
            ($p:expr) => {
                self.nodes[$p].needs_grad
            };
        }
        match &self.nodes[idx].op {
            Op::Leaf => {}
            &Op::Matmul(a, b) => {
                if wants!(a) {
                    let bv = core::mem::replace(&mut self.nodes[b].value, Matrix::zeros(0, 0));
                    g.matmul_nt_into(&bv, self.grad_slot(a));
                    self.nodes[b].value = bv;
                }
                if wants!(b) {
                    let av = core::mem::replace(&mut self.nodes[a].value, Matrix::zeros(0, 0));
                    av.matmul_tn_into(g, self.grad_slot(b));
                    self.nodes[a].value = av;
                }
            }
            &Op::Add(a, b) => {
                if wants!(a) {
                    self.grad_slot(a).axpy(1.0, g);
                }
                if wants!(b) {
                    self.grad_slot(b).axpy(1.0, g);
                }
            }
            &Op::AddRow(a, bias) => {
                if wants!(a) {
                    self.grad_slot(a).axpy(1.0, g);
                }
                if wants!(bias) {
                    let cols = g.cols();
                    let slot = self.grad_slot(bias);
                    for r in 0..g.rows() {
                        let row = g.row(r);
                        let dst = slot.row_mut(0);
                        for c in 0..cols {
                            dst[c] += row[c];
                        }
                    }
                }
            }
            &Op::Sub(a, b) => {
                if wants!(a) {
                    self.grad_slot(a).axpy(1.0, g);
                }
                if wants!(b) {
                    self.grad_slot(b).axpy(-1.0, g);
                }
            }
            &Op::Mul(a, b) => {
                if wants!(a) {
                    let data: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(self.nodes[b].value.data())
                        .map(|(gv, bv)| gv * bv)
                        .collect();
                    let m = Matrix::from_flat(g.rows(), g.cols(), data);
                    self.grad_slot(a).axpy(1.0, &m);
                }
                if wants!(b) {
                    let data: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(self.nodes[a].value.data())
                        .map(|(gv, av)| gv * av)
                        .collect();
                    let m = Matrix::from_flat(g.rows(), g.cols(), data);
                    self.grad_slot(b).axpy(1.0, &m);
                }
            }
            &Op::Scale(a, k) => {
                if wants!(a) {
                    self.grad_slot(a).axpy(k, g);
                }
            }
            &Op::Relu(a) => {
                if wants!(a) {
                    let data: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(self.nodes[a].value.data())
                        .map(|(gv, av)| if *av > 0.0 { *gv } else { 0.0 })
                        .collect();
                    let m = Matrix::from_flat(g.rows(), g.cols(), data);
                    self.grad_slot(a).axpy(1.0, &m);
                }
            }
            &Op::Sigmoid(a) => {
                if wants!(a) {
                    let data: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(self.nodes[idx].value.data())
                        .map(|(gv, s)| gv * s * (1.0 - s))
                        .collect();
                    let m = Matrix::from_flat(g.rows(), g.cols(), data);
                    self.grad_slot(a).axpy(1.0, &m);
                }
            }
            &Op::Tanh(a) => {
                if wants!(a) {
                    let data: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(self.nodes[idx].value.data())
                        .map(|(gv, t)| gv * (1.0 - t * t))
                        .collect();
                    let m = Matrix::from_flat(g.rows(), g.cols(), data);
                    self.grad_slot(a).axpy(1.0, &m);
                }
            }
            &Op::Abs(a) => {
                if wants!(a) {
                    let data: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(self.nodes[a].value.data())
                        .map(|(gv, av)| {
                            if *av > 0.0 {
                                *gv
                            } else if *av < 0.0 {
                                -*gv
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    let m = Matrix::from_flat(g.rows(), g.cols(), data);
                    self.grad_slot(a).axpy(1.0, &m);
                }
            }
            Op::ConcatRows(parts) => {
                let parts = parts.clone();
                let mut start = 0;
                for p in parts {
                    let rows = self.nodes[p].value.rows();
                    if self.nodes[p].needs_grad {
                        let mut chunk = Matrix::zeros(rows, g.cols());
                        for r in 0..rows {
                            chunk.row_mut(r).copy_from_slice(g.row(start + r));
                        }
                        self.grad_slot(p).axpy(1.0, &chunk);
                    }
                    start += rows;
                }
            }
            &Op::SliceRows { src, start } => {
                if wants!(src) {
                    let slot = self.grad_slot(src);
                    for r in 0..g.rows() {
                        let dst = slot.row_mut(start + r);
                        for (d, &v) in dst.iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                }
            }
            Op::GatherRows { src, index } => {
                let (src, index) = (*src, index.clone());
                if wants!(src) {
                    let slot = self.grad_slot(src);
                    for (r, &i) in index.iter().enumerate() {
                        let dst = slot.row_mut(i);
                        for (d, &v) in dst.iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                }
            }
            &Op::RowMean(a) => {
                if wants!(a) {
                    let rows = self.nodes[a].value.rows();
                    let inv = 1.0 / rows as f64;
                    let slot = self.grad_slot(a);
                    for r in 0..rows {
                        let dst = slot.row_mut(r);
                        for (d, &v) in dst.iter_mut().zip(g.row(0)) {
                            *d += v * inv;
                        }
                    }
                }
            }
            Op::ScatterMean {
                src,
                groups,
                group_count,
            } => {
                let (src, groups, group_count) = (*src, groups.clone(), *group_count);
                if wants!(src) {
                    let mut counts = vec![0usize; group_count];
                    for &gidx in &groups {
                        counts[gidx] += 1;
                    }
                    let slot = self.grad_slot(src);
                    for (r, &gidx) in groups.iter().enumerate() {
                        let inv = 1.0 / counts[gidx] as f64;
                        let dst = slot.row_mut(r);
                        for (d, &v) in dst.iter_mut().zip(g.row(gidx)) {
                            *d += v * inv;
                        }
                    }
                }
            }
            &Op::RowwiseMatmul { mats, vecs } => {
                let o = g.cols();
                let d = self.nodes[vecs].value.cols();
                if wants!(mats) {
                    let vv = core::mem::replace(&mut self.nodes[vecs].value, Matrix::zeros(0, 0));
                    let slot = self.grad_slot(mats);
                    for r in 0..g.rows() {
                        let grow = g.row(r);
                        let x = vv.row(r);
                        let dst = slot.row_mut(r);
                        for (c, &xc) in x.iter().enumerate() {
                            let block = &mut dst[c * o..(c + 1) * o];
                            for (b, &gv) in block.iter_mut().zip(grow) {
                                *b += xc * gv;
                            }
                        }
                    }
                    self.nodes[vecs].value = vv;
                }
                if wants!(vecs) {
                    let wv = core::mem::replace(&mut self.nodes[mats].value, Matrix::zeros(0, 0));
                    let slot = self.grad_slot(vecs);
                    for r in 0..g.rows() {
                        let grow = g.row(r);
                        let w = wv.row(r);
                        let dst = slot.row_mut(r);
                        for (c, dv) in dst.iter_mut().take(d).enumerate() {
                            let block = &w[c * o..(c + 1) * o];
                            let mut acc = 0.0;
                            for (&wvv, &gv) in block.iter().zip(grow) {
                                acc += wvv * gv;
                            }
                            *dv += acc;
                        }
                    }
                    self.nodes[mats].value = wv;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_flat(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.random_range(-1.5..1.5)).collect(),
        )
    }

    #[test]
    fn relu_forward() {
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::from_flat(1, 2, vec![-1.0, 2.0]));
        let y = tape.relu(x);
        assert_eq!(tape.value(y).data(), &[0.0, 2.0]);
    }

    #[test]
    fn scatter_mean_with_empty_group() {
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::from_flat(2, 1, vec![2.0, 4.0]));
        let y = tape.scatter_mean(x, &[0, 0], 2).unwrap();
        assert_eq!(tape.value(y).data(), &[3.0, 0.0]);
    }

    #[test]
    fn linear_loss_gradient_is_input() {
        // loss = sum(W . x) with fixed x: dloss/dW = x broadcast.
        let mut tape = Tape::new();
        let w = tape.parameter(Matrix::from_flat(1, 3, vec![0.3, -0.7, 2.0]));
        let x = tape.constant(Matrix::from_flat(3, 1, vec![1.0, 2.0, 3.0]));
        let y = tape.matmul(w, x).unwrap();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(w).unwrap().data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn dead_relu_gradient_is_zero() {
        // loss = relu(w)^2 at w = -0.5
        let mut tape = Tape::new();
        let w = tape.parameter(Matrix::scalar(-0.5));
        let r = tape.relu(w);
        let sq = tape.mul(r, r).unwrap();
        tape.backward(sq).unwrap();
        assert_eq!(tape.grad(w).unwrap().data(), &[0.0]);
    }

    #[test]
    fn fanout_accumulates() {
        // d(x + x)/dx = 2 exactly.
        let mut tape = Tape::new();
        let x = tape.parameter(Matrix::scalar(1.25));
        let y = tape.add(x, x).unwrap();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[2.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let x = tape.parameter(Matrix::zeros(2, 2));
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn shape_mismatch_names_op() {
        let mut tape = Tape::new();
        let a = tape.constant(Matrix::zeros(2, 3));
        let b = tape.constant(Matrix::zeros(2, 3));
        match tape.matmul(a, b) {
            Err(Error::Shape { op, .. }) => assert_eq!(op, "matmul"),
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    /// Central finite differences over every op, via a scalar readout.
    #[test]
    fn finite_difference_gradients_across_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        // Each case: name, builder returning scalar loss from two leaves.
        fn t_ones(t: &mut Tape, n: usize) -> Var {
            t.constant(Matrix::from_flat(n, 1, vec![1.0; n]))
        }

        /// Reduce any matrix to a scalar via row_mean and a ones column.
        fn to_scalar(t: &mut Tape, v: Var) -> Var {
            let m = t.row_mean(v).unwrap();
            let ones = t_ones(t, t.value(m).cols());
            t.matmul(m, ones).unwrap()
        }

        type Builder = fn(&mut Tape, Var, Var) -> Var;
        let cases: Vec<(&str, (usize, usize), (usize, usize), Builder)> = vec![
            ("matmul", (3, 4), (4, 2), |t, a, b| {
                let y = t.matmul(a, b).unwrap();
                let y2 = t.mul(y, y).unwrap();
                to_scalar(t, y2)
            }),
            ("add_mul", (2, 3), (2, 3), |t, a, b| {
                let s = t.add(a, b).unwrap();
                let p = t.mul(s, a).unwrap();
                to_scalar(t, p)
            }),
            ("sub_abs", (2, 2), (2, 2), |t, a, b| {
                let d = t.sub(a, b).unwrap();
                let ab = t.abs(d);
                to_scalar(t, ab)
            }),
            ("activations", (2, 3), (1, 3), |t, a, b| {
                let biased = t.add_row(a, b).unwrap();
                let s = t.sigmoid(biased);
                let th = t.tanh(s);
                let r = t.relu(th);
                to_scalar(t, r)
            }),
            ("gather_scatter", (4, 3), (4, 3), |t, a, b| {
                let g = t.gather_rows(a, &[0, 2, 2, 3, 1]).unwrap();
                let gb = t.gather_rows(b, &[1, 1, 0, 3, 2]).unwrap();
                let p = t.mul(g, gb).unwrap();
                let s = t.scatter_mean(p, &[0, 1, 1, 0, 2], 3).unwrap();
                to_scalar(t, s)
            }),
            ("concat_slice", (2, 3), (3, 3), |t, a, b| {
                let c = t.concat_rows(&[a, b]).unwrap();
                let s = t.slice_rows(c, 1, 3).unwrap();
                let sc = t.scale(s, 1.7);
                to_scalar(t, sc)
            }),
            ("rowwise_matmul", (3, 8), (3, 2), |t, a, b| {
                // a rows are flattened 2x4 matrices, b rows are length-2.
                let y = t.rowwise_matmul(a, b).unwrap();
                let y2 = t.mul(y, y).unwrap();
                to_scalar(t, y2)
            }),
        ];

        for (name, sa, sb, build) in cases {
            let ma = random_matrix(&mut rng, sa.0, sa.1);
            let mb = random_matrix(&mut rng, sb.0, sb.1);

            let eval = |xa: &Matrix, xb: &Matrix| -> f64 {
                let mut t = Tape::new();
                let a = t.parameter(xa.clone());
                let b = t.parameter(xb.clone());
                let loss = build(&mut t, a, b);
                t.value(loss).scalar_value()
            };

            let mut t = Tape::new();
            let a = t.parameter(ma.clone());
            let b = t.parameter(mb.clone());
            let loss = build(&mut t, a, b);
            t.backward(loss).unwrap();
            let ga = t.grad(a).unwrap().clone();
            let gb = t.grad(b).unwrap().clone();

            let h = 1e-5;
            let check = |m: &Matrix, other: &Matrix, grad: &Matrix, first: bool| {
                for i in 0..m.len() {
                    let mut plus = m.clone();
                    plus.data_mut()[i] += h;
                    let mut minus = m.clone();
                    minus.data_mut()[i] -= h;
                    let (fp, fm) = if first {
                        (eval(&plus, other), eval(&minus, other))
                    } else {
                        (eval(other, &plus), eval(other, &minus))
                    };
                    let fd = (fp - fm) / (2.0 * h);
                    let an = grad.data()[i];
                    let rel = (fd - an).abs() / (fd.abs() + an.abs()).max(1e-3);
                    assert!(
                        rel < 1e-5,
                        "{name}: component {i} fd {fd} vs analytic {an} (rel {rel})"
                    );
                }
            };
            check(&ma, &mb, &ga, true);
            check(&mb, &ma, &gb, false);
        }
    }

    #[test]
    fn scatter_mean_matches_per_group_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let rows = rng.random_range(1..12usize);
            let cols = rng.random_range(1..5usize);
            let groups_n = rng.random_range(1..6usize);
            let m = random_matrix(&mut rng, rows, cols);
            let groups: Vec<usize> = (0..rows).map(|_| rng.random_range(0..groups_n)).collect();

            let mut tape = Tape::new();
            let x = tape.constant(m.clone());
            let y = tape.scatter_mean(x, &groups, groups_n).unwrap();

            for g in 0..groups_n {
                let members: Vec<usize> = (0..rows).filter(|&r| groups[r] == g).collect();
                for c in 0..cols {
                    let expected = if members.is_empty() {
                        0.0
                    } else {
                        members.iter().map(|&r| m.get(r, c)).sum::<f64>() / members.len() as f64
                    };
                    assert_eq!(tape.value(y).get(g, c), expected);
                }
            }
        }
    }

    #[test]
    fn deterministic_forward_and_gradients() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let mut tape = Tape::new();
            let w = tape.parameter(random_matrix(&mut rng, 4, 4));
            let x = tape.constant(random_matrix(&mut rng, 4, 4));
            let h = tape.matmul(w, x).unwrap();
            let t = tape.tanh(h);
            let m = tape.row_mean(t).unwrap();
            let ones = tape.constant(Matrix::from_flat(4, 1, vec![1.0; 4]));
            let loss = tape.matmul(m, ones).unwrap();
            tape.backward(loss).unwrap();
            (
                tape.value(loss).scalar_value().to_bits(),
                tape.grad(w).unwrap().data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            )
        };
        assert_eq!(run(), run());
    }
}
