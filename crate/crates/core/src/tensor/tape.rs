//! Reverse-mode differentiation over a flat tape.
//!
//! Every operation appends a node holding its forward value and the handles
//! of its inputs. [`Tape::backward`] walks the nodes in reverse and
//! accumulates gradients for every node that transitively depends on a
//! trainable leaf. Tapes are single-use per optimization step: call
//! [`Tape::reset`] (or build a new one) before the next step.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::dense::{matmul_nt_into, matmul_tn_into};
use crate::tensor::{SparseMatrix, Tensor};

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
    SpMM(Arc<SparseMatrix>, Var),
    Sigmoid(Var),
    Relu(Var),
    Add(Var, Var),
    Scale(Var, f64),
    ConcatCols(Var, Var),
    GatherRows(Var, Arc<[usize]>),
    RowwiseDot(Var, Var),
    SelectRows(Arc<[bool]>, Var, Var),
    ScatterRows(Var, Arc<[usize]>, Var),
    Mse(Var, Var),
    BceWithLogits(Var, Arc<[f64]>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    non_finite: Option<&'static str>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn reset(&mut self) {
        self.nodes.clear();
        self.grads.clear();
        self.non_finite = None;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool, name: &'static str) -> Var {
        if self.non_finite.is_none() && !value.all_finite() {
            self.non_finite = Some(name);
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable input; receives a gradient on [`Tape::backward`].
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true, "leaf")
    }

    /// Constant input; never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false, "constant")
    }

    /// Copies `v`'s value into a new constant, cutting gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.push(value, Op::Leaf, false, "detach")
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Gradient of the last `backward` loss w.r.t. `v`, if `v` was reached.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Fails if any recorded value so far contains NaN or infinity.
    pub fn check_finite(&self) -> Result<()> {
        match self.non_finite {
            Some(op) => Err(Error::Numeric(format!("{op} produced a non-finite value"))),
            None => Ok(()),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg, "matmul"))
    }

    pub fn spmm(&mut self, s: &Arc<SparseMatrix>, d: Var) -> Result<Var> {
        let value = s.mul_dense(self.value(d))?;
        let rg = self.rg(d);
        Ok(self.push(value, Op::SpMM(Arc::clone(s), d), rg, "spmm"))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(sigmoid);
        let rg = self.rg(x);
        self.push(value, Op::Sigmoid(x), rg, "sigmoid")
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        let rg = self.rg(x);
        self.push(value, Op::Relu(x), rg, "relu")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape(
                "add",
                format!("{:?} + {:?}", va.shape(), vb.shape()),
            ));
        }
        let mut value = va.clone();
        value.add_assign(vb);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg, "add"))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self.value(x).scale(factor);
        let rg = self.rg(x);
        self.push(value, Op::Scale(x, factor), rg, "scale")
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.rows() != vb.rows() {
            return Err(Error::shape(
                "concat_cols",
                format!("{} rows vs {} rows", va.rows(), vb.rows()),
            ));
        }
        let cols = va.cols() + vb.cols();
        let mut data = Vec::with_capacity(va.rows() * cols);
        for r in 0..va.rows() {
            data.extend_from_slice(va.row(r));
            data.extend_from_slice(vb.row(r));
        }
        let value = Tensor::from_vec(va.rows(), cols, data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::ConcatCols(a, b), rg, "concat_cols"))
    }

    /// Row `i` of the result is row `ids[i]` of `x`; ids may repeat.
    pub fn gather_rows(&mut self, x: Var, ids: impl Into<Arc<[usize]>>) -> Result<Var> {
        let ids: Arc<[usize]> = ids.into();
        let vx = self.value(x);
        let mut data = Vec::with_capacity(ids.len() * vx.cols());
        for &i in ids.iter() {
            if i >= vx.rows() {
                return Err(Error::Index {
                    what: "rows",
                    index: i,
                    len: vx.rows(),
                });
            }
            data.extend_from_slice(vx.row(i));
        }
        let value = Tensor::from_vec(ids.len(), vx.cols(), data)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::GatherRows(x, ids), rg, "gather_rows"))
    }

    /// `n × 1` column of per-row inner products.
    pub fn rowwise_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape(
                "rowwise_dot",
                format!("{:?} vs {:?}", va.shape(), vb.shape()),
            ));
        }
        let value = Tensor::column(
            (0..va.rows())
                .map(|r| va.row(r).iter().zip(vb.row(r)).map(|(x, y)| x * y).sum())
                .collect(),
        );
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::RowwiseDot(a, b), rg, "rowwise_dot"))
    }

    /// Row `i` comes from `on_true` where `mask[i]`, else from `on_false`.
    pub fn select_rows(
        &mut self,
        mask: impl Into<Arc<[bool]>>,
        on_true: Var,
        on_false: Var,
    ) -> Result<Var> {
        let mask: Arc<[bool]> = mask.into();
        let (vt, vf) = (self.value(on_true), self.value(on_false));
        if vt.shape() != vf.shape() || mask.len() != vt.rows() {
            return Err(Error::shape(
                "select_rows",
                format!(
                    "mask {} with {:?} and {:?}",
                    mask.len(),
                    vt.shape(),
                    vf.shape()
                ),
            ));
        }
        let mut value = vf.clone();
        for (r, &m) in mask.iter().enumerate() {
            if m {
                value.row_mut(r).copy_from_slice(vt.row(r));
            }
        }
        let rg = self.rg(on_true) || self.rg(on_false);
        Ok(self.push(value, Op::SelectRows(mask, on_true, on_false), rg, "select_rows"))
    }

    /// `base` with row `ids[i]` replaced by row `i` of `values`. `ids` must be
    /// distinct.
    pub fn scatter_rows(&mut self, base: Var, ids: impl Into<Arc<[usize]>>, values: Var) -> Result<Var> {
        let ids: Arc<[usize]> = ids.into();
        let (vb, vv) = (self.value(base), self.value(values));
        if vv.rows() != ids.len() || vv.cols() != vb.cols() {
            return Err(Error::shape(
                "scatter_rows",
                format!("{} ids with values {:?} into {:?}", ids.len(), vv.shape(), vb.shape()),
            ));
        }
        let mut seen = vec![false; vb.rows()];
        for &i in ids.iter() {
            if i >= vb.rows() {
                return Err(Error::Index {
                    what: "rows",
                    index: i,
                    len: vb.rows(),
                });
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Argument(format!("scatter_rows: row {i} given twice")));
            }
        }
        let mut value = vb.clone();
        for (k, &i) in ids.iter().enumerate() {
            value.row_mut(i).copy_from_slice(vv.row(k));
        }
        let rg = self.rg(base) || self.rg(values);
        Ok(self.push(value, Op::ScatterRows(base, ids, values), rg, "scatter_rows"))
    }

    /// Mean of squared differences over all entries; `0` for empty inputs.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (vp, vt) = (self.value(pred), self.value(target));
        if vp.shape() != vt.shape() {
            return Err(Error::shape(
                "mse",
                format!("{:?} vs {:?}", vp.shape(), vt.shape()),
            ));
        }
        let n = vp.len();
        let sq: f64 = vp
            .data()
            .iter()
            .zip(vt.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let value = Tensor::scalar(if n == 0 { 0.0 } else { sq / n as f64 });
        let rg = self.rg(pred) || self.rg(target);
        Ok(self.push(value, Op::Mse(pred, target), rg, "mse"))
    }

    /// Mean binary cross-entropy on logits, computed in the overflow-safe form
    /// `max(x, 0) − x·y + ln(1 + e^{−|x|})`.
    pub fn bce_with_logits(&mut self, logits: Var, labels: impl Into<Arc<[f64]>>) -> Result<Var> {
        let labels: Arc<[f64]> = labels.into();
        let vx = self.value(logits);
        if vx.len() != labels.len() {
            return Err(Error::shape(
                "bce_with_logits",
                format!("{} logits vs {} labels", vx.len(), labels.len()),
            ));
        }
        let n = vx.len().max(1) as f64;
        let total: f64 = vx
            .data()
            .iter()
            .zip(labels.iter())
            .map(|(&x, &y)| x.max(0.0) - x * y + (-x.abs()).exp().ln_1p())
            .sum();
        let value = Tensor::scalar(total / n);
        let rg = self.rg(logits);
        Ok(self.push(value, Op::BceWithLogits(logits, labels), rg, "bce_with_logits"))
    }

    /// Populates gradients of the scalar `loss` w.r.t. every node on the tape.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        self.check_finite()?;
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got {:?}", lv.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        for (g, node) in grads.iter().zip(&self.nodes) {
            if let Some(g) = g {
                if !g.all_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite gradient flowing into {:?}",
                        node.op
                    )));
                }
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, f: impl FnOnce(&mut Tensor)) {
        if !self.rg(v) {
            return;
        }
        let slot = &mut grads[v.0];
        let g = slot.get_or_insert_with(|| {
            let s = self.nodes[v.0].value.shape();
            Tensor::zeros(s[0], s[1])
        });
        f(g);
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                self.accumulate(grads, *a, |ga| matmul_nt_into(g, vb, ga));
                self.accumulate(grads, *b, |gb| matmul_tn_into(va, g, gb));
            }
            Op::SpMM(s, d) => {
                self.accumulate(grads, *d, |gd| s.t_mul_dense_into(g, gd));
            }
            Op::Sigmoid(x) => {
                let y = &node.value;
                self.accumulate(grads, *x, |gx| {
                    for ((o, &gi), &yi) in gx.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        *o += gi * yi * (1.0 - yi);
                    }
                });
            }
            Op::Relu(x) => {
                let vx = self.value(*x);
                self.accumulate(grads, *x, |gx| {
                    for ((o, &gi), &xi) in gx.data_mut().iter_mut().zip(g.data()).zip(vx.data()) {
                        if xi > 0.0 {
                            *o += gi;
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |ga| ga.add_assign(g));
                self.accumulate(grads, *b, |gb| gb.add_assign(g));
            }
            Op::Scale(x, factor) => {
                self.accumulate(grads, *x, |gx| {
                    for (o, &gi) in gx.data_mut().iter_mut().zip(g.data()) {
                        *o += gi * factor;
                    }
                });
            }
            Op::ConcatCols(a, b) => {
                let ca = self.value(*a).cols();
                self.accumulate(grads, *a, |ga| {
                    for r in 0..g.rows() {
                        for (o, &gi) in ga.row_mut(r).iter_mut().zip(&g.row(r)[..ca]) {
                            *o += gi;
                        }
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    for r in 0..g.rows() {
                        for (o, &gi) in gb.row_mut(r).iter_mut().zip(&g.row(r)[ca..]) {
                            *o += gi;
                        }
                    }
                });
            }
            Op::GatherRows(x, ids) => {
                self.accumulate(grads, *x, |gx| {
                    for (i, &src) in ids.iter().enumerate() {
                        for (o, &gi) in gx.row_mut(src).iter_mut().zip(g.row(i)) {
                            *o += gi;
                        }
                    }
                });
            }
            Op::RowwiseDot(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                self.accumulate(grads, *a, |ga| {
                    for r in 0..va.rows() {
                        let gr = g.get(r, 0);
                        for (o, &y) in ga.row_mut(r).iter_mut().zip(vb.row(r)) {
                            *o += gr * y;
                        }
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    for r in 0..vb.rows() {
                        let gr = g.get(r, 0);
                        for (o, &x) in gb.row_mut(r).iter_mut().zip(va.row(r)) {
                            *o += gr * x;
                        }
                    }
                });
            }
            Op::ScatterRows(base, ids, values) => {
                self.accumulate(grads, *base, |gb| {
                    let mut replaced = vec![false; g.rows()];
                    for &i in ids.iter() {
                        replaced[i] = true;
                    }
                    for (r, _) in replaced.iter().enumerate().filter(|(_, &m)| !m) {
                        for (o, &gi) in gb.row_mut(r).iter_mut().zip(g.row(r)) {
                            *o += gi;
                        }
                    }
                });
                self.accumulate(grads, *values, |gv| {
                    for (k, &i) in ids.iter().enumerate() {
                        for (o, &gi) in gv.row_mut(k).iter_mut().zip(g.row(i)) {
                            *o += gi;
                        }
                    }
                });
            }
            Op::SelectRows(mask, t, f) => {
                self.accumulate(grads, *t, |gt| {
                    for (r, &m) in mask.iter().enumerate() {
                        if m {
                            for (o, &gi) in gt.row_mut(r).iter_mut().zip(g.row(r)) {
                                *o += gi;
                            }
                        }
                    }
                });
                self.accumulate(grads, *f, |gf| {
                    for (r, &m) in mask.iter().enumerate() {
                        if !m {
                            for (o, &gi) in gf.row_mut(r).iter_mut().zip(g.row(r)) {
                                *o += gi;
                            }
                        }
                    }
                });
            }
            Op::Mse(p, t) => {
                let (vp, vt) = (self.value(*p), self.value(*t));
                let n = vp.len();
                if n == 0 {
                    return;
                }
                let k = 2.0 * g.item() / n as f64;
                self.accumulate(grads, *p, |gp| {
                    for ((o, &a), &b) in gp.data_mut().iter_mut().zip(vp.data()).zip(vt.data()) {
                        *o += k * (a - b);
                    }
                });
                self.accumulate(grads, *t, |gt| {
                    for ((o, &a), &b) in gt.data_mut().iter_mut().zip(vp.data()).zip(vt.data()) {
                        *o -= k * (a - b);
                    }
                });
            }
            Op::BceWithLogits(x, labels) => {
                let vx = self.value(*x);
                let k = g.item() / vx.len().max(1) as f64;
                self.accumulate(grads, *x, |gx| {
                    for ((o, &xi), &yi) in gx.data_mut().iter_mut().zip(vx.data()).zip(labels.iter()) {
                        *o += k * (sigmoid(xi) - yi);
                    }
                });
            }
        }
    }
}
