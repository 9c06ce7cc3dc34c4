use std::sync::Arc;

use super::{matmul_nn, matmul_nt, matmul_tn, Tensor};
use crate::error::{LayoutError, Result};

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]` inside `bce`.
pub const BCE_EPS: f64 = 1e-7;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Value {
    Owned(Tensor),
    Shared(Arc<Tensor>),
}

impl Value {
    fn get(&self) -> &Tensor {
        match self {
            Value::Owned(t) => t,
            Value::Shared(t) => t,
        }
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Softmax(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    MeanRows(Var),
    SumAll(Var),
    Gather(Var, Vec<usize>),
    Mse(Var, Var),
    Bce(Var, Var),
    CrossEntropy(Var, Vec<usize>),
}

struct Node {
    value: Value,
    op: Op,
    needs_grad: bool,
}

/// Records primitive operations in topological order for reverse-mode
/// differentiation. Every op validates shapes and rejects non-finite output.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err(op: &str, a: &Tensor, b: &Tensor) -> LayoutError {
    LayoutError::Shape(format!(
        "{op}: {}x{} vs {}x{}",
        a.rows(),
        a.cols(),
        b.rows(),
        b.cols()
    ))
}

fn check_finite(t: Tensor, op: &'static str) -> Result<Tensor> {
    if t.is_finite() {
        Ok(t)
    } else {
        Err(LayoutError::NonFinite(op))
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn softmax_rows(a: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(a.rows(), a.cols());
    for r in 0..a.rows() {
        let row = a.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for (c, e) in exps.into_iter().enumerate() {
            out.set(r, c, e / sum);
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        self.nodes[v.0].value.get()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// A differentiable leaf.
    pub fn leaf(&mut self, t: Tensor) -> Result<Var> {
        let t = check_finite(t, "leaf")?;
        Ok(self.push(t, Op::Leaf, true))
    }

    /// A differentiable leaf sharing storage with a parameter.
    pub fn shared_leaf(&mut self, t: Arc<Tensor>) -> Var {
        self.nodes.push(Node {
            value: Value::Shared(t),
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        let t = check_finite(t, "constant")?;
        Ok(self.push(t, Op::Leaf, false))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.rows() {
            return Err(shape_err("matmul", ta, tb));
        }
        let out = check_finite(matmul_nn(ta, tb), "matmul")?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    fn zip_same(&mut self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(name, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        Ok(Tensor::from_parts(ta.rows(), ta.cols(), data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = check_finite(self.zip_same(a, b, "add", |x, y| x + y)?, "add")?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = check_finite(self.zip_same(a, b, "sub", |x, y| x - y)?, "sub")?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), ng))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = check_finite(self.zip_same(a, b, "mul", |x, y| x * y)?, "mul")?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let out = check_finite(self.value(a).map(|v| v * s), "scale")?;
        let ng = self.needs(&[a]);
        Ok(self.push(out, Op::Scale(a, s), ng))
    }

    /// Adds the `1 x c` row `row` to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tr) = (self.value(a), self.value(row));
        if tr.rows() != 1 || tr.cols() != ta.cols() {
            return Err(shape_err("add_row", ta, tr));
        }
        let mut out = ta.clone();
        for r in 0..ta.rows() {
            for c in 0..ta.cols() {
                out.data_mut()[r * ta.cols() + c] += tr.data()[c];
            }
        }
        let out = check_finite(out, "add_row")?;
        let ng = self.needs(&[a, row]);
        Ok(self.push(out, Op::AddRow(a, row), ng))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|v| v.max(0.0));
        let ng = self.needs(&[a]);
        Ok(self.push(out, Op::Relu(a), ng))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(sigmoid);
        let ng = self.needs(&[a]);
        Ok(self.push(out, Op::Sigmoid(a), ng))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let out = softmax_rows(self.value(a));
        let ng = self.needs(&[a]);
        Ok(self.push(out, Op::Softmax(a), ng))
    }

    /// Horizontal concatenation; all parts must have the same row count.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| LayoutError::Shape("concat of nothing".into()))?;
        let rows = self.value(*first).rows();
        let mut cols = 0;
        for p in parts {
            let t = self.value(*p);
            if t.rows() != rows {
                return Err(shape_err("concat", self.value(*first), t));
            }
            cols += t.cols();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.value(*p).row(r));
            }
        }
        let ng = self.needs(parts);
        Ok(self.push(Tensor::from_parts(rows, cols, data), Op::ConcatCols(parts.to_vec()), ng))
    }

    /// Vertical stacking; all parts must have the same column count.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| LayoutError::Shape("concat_rows of nothing".into()))?;
        let cols = self.value(*first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let t = self.value(*p);
            if t.cols() != cols {
                return Err(shape_err("concat_rows", self.value(*first), t));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let ng = self.needs(parts);
        Ok(self.push(Tensor::from_parts(rows, cols, data), Op::ConcatRows(parts.to_vec()), ng))
    }

    /// Column means as a `1 x c` row.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let mut out = vec![0.0; t.cols()];
        for r in 0..t.rows() {
            for (o, v) in out.iter_mut().zip(t.row(r)) {
                *o += v;
            }
        }
        let n = t.rows() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        let cols = t.cols();
        let ng = self.needs(&[a]);
        Ok(self.push(Tensor::from_parts(1, cols, out), Op::MeanRows(a), ng))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s: f64 = self.value(a).data().iter().sum();
        let ng = self.needs(&[a]);
        Ok(self.push(check_finite(Tensor::from_parts(1, 1, vec![s]), "sum")?, Op::SumAll(a), ng))
    }

    /// Rows of `table` at `indices`, stacked in order.
    pub fn gather(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let t = self.value(table);
        if indices.is_empty() {
            return Err(LayoutError::Shape("gather of no rows".into()));
        }
        let mut data = Vec::with_capacity(indices.len() * t.cols());
        for &i in indices {
            if i >= t.rows() {
                return Err(LayoutError::OutOfRange(format!(
                    "row {i} of a {}-row table",
                    t.rows()
                )));
            }
            data.extend_from_slice(t.row(i));
        }
        let cols = t.cols();
        let ng = self.needs(&[table]);
        Ok(self.push(
            Tensor::from_parts(indices.len(), cols, data),
            Op::Gather(table, indices.to_vec()),
            ng,
        ))
    }

    pub fn lookup_row(&mut self, table: Var, index: usize) -> Result<Var> {
        self.gather(table, &[index])
    }

    /// Mean of squared differences over all entries.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.zip_same(a, b, "mse", |x, y| (x - y) * (x - y))?;
        let m = d.data().iter().sum::<f64>() / d.len() as f64;
        let ng = self.needs(&[a, b]);
        Ok(self.push(check_finite(Tensor::from_parts(1, 1, vec![m]), "mse")?, Op::Mse(a, b), ng))
    }

    /// Mean binary cross-entropy of probabilities `p` against targets `c`.
    pub fn bce(&mut self, p: Var, c: Var) -> Result<Var> {
        let d = self.zip_same(p, c, "bce", |pv, cv| {
            let q = pv.clamp(BCE_EPS, 1.0 - BCE_EPS);
            -cv * q.ln() - (1.0 - cv) * (1.0 - q).ln()
        })?;
        let m = d.data().iter().sum::<f64>() / d.len() as f64;
        let ng = self.needs(&[p, c]);
        Ok(self.push(check_finite(Tensor::from_parts(1, 1, vec![m]), "bce")?, Op::Bce(p, c), ng))
    }

    /// Mean negative log-softmax of `logits` at the target class of each row.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        if targets.len() != t.rows() {
            return Err(LayoutError::Shape(format!(
                "{} targets for {} rows",
                targets.len(),
                t.rows()
            )));
        }
        let probs = softmax_rows(t);
        let mut loss = 0.0;
        for (r, &k) in targets.iter().enumerate() {
            if k >= t.cols() {
                return Err(LayoutError::OutOfRange(format!("class {k} of {}", t.cols())));
            }
            loss -= probs.get(r, k).max(1e-300).ln();
        }
        loss /= targets.len() as f64;
        let ng = self.needs(&[logits]);
        Ok(self.push(
            check_finite(Tensor::from_parts(1, 1, vec![loss]), "cross_entropy")?,
            Op::CrossEntropy(logits, targets.to_vec()),
            ng,
        ))
    }

    /// Reverse sweep from a `1 x 1` output.
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        let t = self.value(out);
        if t.shape() != [1, 1] {
            return Err(LayoutError::Shape(format!(
                "backward needs a scalar output, got {}x{}",
                t.rows(),
                t.cols()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(Tensor::filled(1, 1, 1.0));

        for idx in (0..=out.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let acc = |v: Var, d: Tensor, grads: &mut Vec<Option<Tensor>>| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(existing) => existing.add_assign(&d),
                    slot @ None => *slot = Some(d),
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    if self.nodes[a.0].needs_grad {
                        acc(*a, matmul_nt(&g, tb), &mut grads);
                    }
                    if self.nodes[b.0].needs_grad {
                        acc(*b, matmul_tn(ta, &g), &mut grads);
                    }
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone(), &mut grads);
                    acc(*b, g.clone(), &mut grads);
                }
                Op::Sub(a, b) => {
                    acc(*a, g.clone(), &mut grads);
                    acc(*b, g.map(|v| -v), &mut grads);
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let da = zip(&g, tb, |x, y| x * y);
                    let db = zip(&g, ta, |x, y| x * y);
                    acc(*a, da, &mut grads);
                    acc(*b, db, &mut grads);
                }
                Op::Scale(a, s) => acc(*a, g.map(|v| v * s), &mut grads),
                Op::AddRow(a, row) => {
                    let mut dr = vec![0.0; g.cols()];
                    for r in 0..g.rows() {
                        for (o, v) in dr.iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    acc(*row, Tensor::from_parts(1, g.cols(), dr), &mut grads);
                    acc(*a, g, &mut grads);
                }
                Op::Relu(a) => {
                    let ta = self.value(*a);
                    acc(*a, zip(&g, ta, |gv, x| if x > 0.0 { gv } else { 0.0 }), &mut grads);
                }
                Op::Sigmoid(a) => {
                    let y = node.value.get();
                    acc(*a, zip(&g, y, |gv, s| gv * s * (1.0 - s)), &mut grads);
                }
                Op::Softmax(a) => {
                    let y = node.value.get();
                    let mut d = Tensor::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
                        for c in 0..y.cols() {
                            d.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                        }
                    }
                    acc(*a, d, &mut grads);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let w = self.value(*p).cols();
                        let mut d = Tensor::zeros(g.rows(), w);
                        for r in 0..g.rows() {
                            for c in 0..w {
                                d.set(r, c, g.get(r, off + c));
                            }
                        }
                        off += w;
                        acc(*p, d, &mut grads);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let h = self.value(*p).rows();
                        let cols = g.cols();
                        let d = Tensor::from_parts(
                            h,
                            cols,
                            g.data()[off * cols..(off + h) * cols].to_vec(),
                        );
                        off += h;
                        acc(*p, d, &mut grads);
                    }
                }
                Op::MeanRows(a) => {
                    let ta = self.value(*a);
                    let n = ta.rows() as f64;
                    let mut d = Tensor::zeros(ta.rows(), ta.cols());
                    for r in 0..ta.rows() {
                        for c in 0..ta.cols() {
                            d.set(r, c, g.get(0, c) / n);
                        }
                    }
                    acc(*a, d, &mut grads);
                }
                Op::SumAll(a) => {
                    let ta = self.value(*a);
                    acc(*a, Tensor::filled(ta.rows(), ta.cols(), g.item()), &mut grads);
                }
                Op::Gather(table, indices) => {
                    let tt = self.value(*table);
                    let mut d = Tensor::zeros(tt.rows(), tt.cols());
                    for (k, &i) in indices.iter().enumerate() {
                        for c in 0..tt.cols() {
                            let v = d.get(i, c) + g.get(k, c);
                            d.set(i, c, v);
                        }
                    }
                    acc(*table, d, &mut grads);
                }
                Op::Mse(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let s = 2.0 * g.item() / ta.len() as f64;
                    let da = zip(ta, tb, |x, y| s * (x - y));
                    acc(*b, da.map(|v| -v), &mut grads);
                    acc(*a, da, &mut grads);
                }
                Op::Bce(p, c) => {
                    let (tp, tc) = (self.value(*p), self.value(*c));
                    let n = tp.len() as f64;
                    let gi = g.item();
                    let dp = zip(tp, tc, |pv, cv| {
                        if pv <= BCE_EPS || pv >= 1.0 - BCE_EPS {
                            0.0
                        } else {
                            gi * (-cv / pv + (1.0 - cv) / (1.0 - pv)) / n
                        }
                    });
                    let dc = zip(tp, tc, |pv, _| {
                        let q = pv.clamp(BCE_EPS, 1.0 - BCE_EPS);
                        gi * ((1.0 - q).ln() - q.ln()) / n
                    });
                    acc(*p, dp, &mut grads);
                    acc(*c, dc, &mut grads);
                }
                Op::CrossEntropy(logits, targets) => {
                    let tl = self.value(*logits);
                    let mut d = softmax_rows(tl);
                    let n = targets.len() as f64;
                    for (r, &k) in targets.iter().enumerate() {
                        let v = d.get(r, k) - 1.0;
                        d.set(r, k, v);
                    }
                    d.scale_in_place(g.item() / n);
                    acc(*logits, d, &mut grads);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::from_parts(
        a.rows(),
        a.cols(),
        a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect(),
    )
}

/// Gradients of one backward sweep, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, d: &[f64]) -> Tensor {
        Tensor::new(rows, cols, d.to_vec()).unwrap()
    }

    #[test]
    fn mse_of_identical_is_zero() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(1, 3, &[1., 2., 3.])).unwrap();
        let b = tape.leaf(t(1, 3, &[1., 2., 3.])).unwrap();
        let m = tape.mse(a, b).unwrap();
        assert_eq!(tape.value(m).item(), 0.0);
    }

    #[test]
    fn bce_half_is_ln2() {
        let mut tape = Tape::new();
        let p = tape.leaf(t(1, 1, &[0.5])).unwrap();
        let c = tape.constant(t(1, 1, &[1.0])).unwrap();
        let l = tape.bce(p, c).unwrap();
        assert!((tape.value(l).item() - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn relu_clips_negatives() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(1, 2, &[-1., 2.])).unwrap();
        let r = tape.relu(a).unwrap();
        assert_eq!(tape.value(r).data(), &[0., 2.]);
    }

    #[test]
    fn square_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(1, 1, &[3.0])).unwrap();
        let y = tape.mul(x, x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn backward_needs_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(1, 2, &[3.0, 1.0])).unwrap();
        assert!(matches!(tape.backward(x), Err(LayoutError::Shape(_))));
    }

    #[test]
    fn mse_linear_gradient_matches_closed_form() {
        // d/dW mean((x W - y)^2) = 2/N xᵀ (x W - y) in row-vector form
        let x = t(1, 3, &[0.5, -1.0, 2.0]);
        let w = t(3, 2, &[0.1, 0.2, -0.3, 0.4, 0.5, -0.6]);
        let y = t(1, 2, &[1.0, -2.0]);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone()).unwrap();
        let wv = tape.leaf(w.clone()).unwrap();
        let yv = tape.constant(y.clone()).unwrap();
        let p = tape.matmul(xv, wv).unwrap();
        let l = tape.mse(p, yv).unwrap();
        let g = tape.backward(l).unwrap();
        let resid: Vec<f64> = x.matmul(&w).unwrap().data().iter().zip(y.data()).map(|(a, b)| a - b).collect();
        let expected = matmul_tn(&x, &t(1, 2, &resid)).map(|v| v * 2.0 / 2.0);
        for (a, b) in g.get(wv).unwrap().data().iter().zip(expected.data()) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(g.get(xv).is_none());
    }

    #[test]
    fn softmax_and_sigmoid_ranges() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(2, 3, &[1., 2., 3., -800., 0., 800.])).unwrap();
        let s = tape.softmax(a).unwrap();
        for r in 0..2 {
            let sum: f64 = tape.value(s).row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
        let b = tape.leaf(t(1, 3, &[-30., 0., 30.])).unwrap();
        let sg = tape.sigmoid(b).unwrap();
        assert!(tape.value(sg).data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn shape_errors_surface() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(1, 2, &[1., 2.])).unwrap();
        let b = tape.leaf(t(1, 3, &[1., 2., 3.])).unwrap();
        assert!(tape.add(a, b).is_err());
        assert!(tape.matmul(a, b).is_err());
        assert!(tape.gather(a, &[1]).is_err());
    }

    #[test]
    fn overflow_is_rejected() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(1, 1, &[1e300])).unwrap();
        assert!(matches!(tape.scale(a, 1e300), Err(LayoutError::NonFinite(_))));
    }
}
