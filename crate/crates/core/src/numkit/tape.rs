//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Tape`] is an append-only arena. Every operation pushes its output node,
//! so inputs always precede outputs and a single reverse sweep over the arena
//! is a valid backward pass.

use crate::error::{Error, Result};

use super::tensor::{matmul_nt_acc, matmul_tn_acc, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Pointwise functions of one input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Unary {
    Relu,
    /// ELU with α = 1.
    Elu,
    LeakyRelu(f64),
    Exp,
}

impl Unary {
    fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Relu => x.max(0.0),
            Unary::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Unary::LeakyRelu(alpha) => {
                if x > 0.0 {
                    x
                } else {
                    alpha * x
                }
            }
            Unary::Exp => x.exp(),
        }
    }

    /// Derivative expressed through the input `x` and the output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
            Unary::LeakyRelu(alpha) => {
                if x > 0.0 {
                    1.0
                } else {
                    alpha
                }
            }
            Unary::Exp => y,
        }
    }
}

/// The elementwise operation family accepted by [`Tape::elementwise`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Elementwise {
    Add,
    Mul,
    Relu,
    Elu,
    LeakyRelu(f64),
    Exp,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    MulRow(Var, Var),
    ScaleRows(Var, Var),
    Scale(Var, f64),
    Unary(Var, Unary),
    RowSoftmax(Var),
    SegmentSoftmax(Var, Vec<usize>),
    GatherRows(Var, Vec<usize>),
    SegmentSum(Var, Vec<usize>),
    SegmentMean(Var, Vec<usize>, Vec<usize>),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    RowSum(Var),
    Sum(Var),
    MeanRows(Var),
    WeightedCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        weights: Vec<f64>,
        probs: Tensor,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
}

/// Operation arena for one forward/backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    backward_visits: usize,
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

    /// A leaf whose gradient is tracked.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// A leaf excluded from differentiation.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient accumulated by the last [`Tape::backward`]; `None` when the node
    /// was not reached or does not require a gradient.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    /// Number of operations visited during the most recent backward sweep.
    pub fn backward_visits(&self) -> usize {
        self.backward_visits
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    // ---- forward operations ----

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    /// Elementwise sum. `b` may be a `1 x n` row broadcast over the rows of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let rg = self.any_grad(&[a, b]);
        if sa == sb {
            let mut value = self.value(a).clone();
            value.add_assign(self.value(b));
            Ok(self.push(value, Op::Add(a, b), rg))
        } else if sb.0 == 1 && sb.1 == sa.1 {
            let mut value = self.value(a).clone();
            let bias = self.value(b).data().to_vec();
            for r in 0..sa.0 {
                for (x, &bb) in value.row_mut(r).iter_mut().zip(&bias) {
                    *x += bb;
                }
            }
            Ok(self.push(value, Op::AddRow(a, b), rg))
        } else {
            Err(Error::dim("add", format!("{sa:?} + {sb:?}")))
        }
    }

    /// Elementwise product. `b` may be a `1 x n` row broadcast over the rows of `a`.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let rg = self.any_grad(&[a, b]);
        if sa == sb {
            let mut value = self.value(a).clone();
            for (x, &y) in value.data_mut().iter_mut().zip(self.value(b).data()) {
                *x *= y;
            }
            Ok(self.push(value, Op::Mul(a, b), rg))
        } else if sb.0 == 1 && sb.1 == sa.1 {
            let mut value = self.value(a).clone();
            let row = self.value(b).data().to_vec();
            for r in 0..sa.0 {
                for (x, &y) in value.row_mut(r).iter_mut().zip(&row) {
                    *x *= y;
                }
            }
            Ok(self.push(value, Op::MulRow(a, b), rg))
        } else {
            Err(Error::dim("mul", format!("{sa:?} * {sb:?}")))
        }
    }

    /// Multiplies row `i` of `a` by the scalar `c[i, 0]`.
    pub fn scale_rows(&mut self, a: Var, c: Var) -> Result<Var> {
        let (sa, sc) = (self.shape(a), self.shape(c));
        if sc != (sa.0, 1) {
            return Err(Error::dim("scale_rows", format!("{sa:?} by {sc:?}")));
        }
        let mut value = self.value(a).clone();
        for r in 0..sa.0 {
            let s = self.value(c).data()[r];
            value.row_mut(r).iter_mut().for_each(|x| *x *= s);
        }
        let rg = self.any_grad(&[a, c]);
        Ok(self.push(value, Op::ScaleRows(a, c), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let mut value = self.value(a).clone();
        value.scale_in_place(s);
        let rg = self.any_grad(&[a]);
        self.push(value, Op::Scale(a, s), rg)
    }

    pub fn unary(&mut self, a: Var, f: Unary) -> Var {
        let value = self.value(a).map(|x| f.apply(x));
        let rg = self.any_grad(&[a]);
        self.push(value, Op::Unary(a, f), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Relu)
    }

    pub fn elu(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Elu)
    }

    pub fn leaky_relu(&mut self, a: Var, alpha: f64) -> Var {
        self.unary(a, Unary::LeakyRelu(alpha))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Exp)
    }

    /// Dispatches one of the elementwise operations by tag.
    pub fn elementwise(&mut self, op: Elementwise, inputs: &[Var]) -> Result<Var> {
        let arity = match op {
            Elementwise::Add | Elementwise::Mul => 2,
            _ => 1,
        };
        if inputs.len() != arity {
            return Err(Error::Contract(format!(
                "{op:?} takes {arity} inputs, got {}",
                inputs.len()
            )));
        }
        Ok(match op {
            Elementwise::Add => self.add(inputs[0], inputs[1])?,
            Elementwise::Mul => self.mul(inputs[0], inputs[1])?,
            Elementwise::Relu => self.relu(inputs[0]),
            Elementwise::Elu => self.elu(inputs[0]),
            Elementwise::LeakyRelu(alpha) => self.leaky_relu(inputs[0], alpha),
            Elementwise::Exp => self.exp(inputs[0]),
        })
    }

    /// Softmax along each row, stabilised by subtracting the row maximum.
    pub fn row_softmax(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut value = x.clone();
        for r in 0..x.rows() {
            softmax_in_place(value.row_mut(r));
        }
        let rg = self.any_grad(&[a]);
        self.push(value, Op::RowSoftmax(a), rg)
    }

    /// Softmax over the rows sharing a segment id, independently per column.
    pub fn segment_softmax(&mut self, a: Var, segments: &[usize], num_segments: usize) -> Result<Var> {
        let x = self.value(a);
        check_segments("segment_softmax", x.rows(), segments, num_segments)?;
        let cols = x.cols();
        let mut max = vec![f64::NEG_INFINITY; num_segments * cols];
        for (e, &s) in segments.iter().enumerate() {
            for c in 0..cols {
                let m = &mut max[s * cols + c];
                *m = m.max(x.get(e, c));
            }
        }
        let mut value = x.clone();
        let mut denom = vec![0.0; num_segments * cols];
        for (e, &s) in segments.iter().enumerate() {
            for c in 0..cols {
                let v = (x.get(e, c) - max[s * cols + c]).exp();
                value.set(e, c, v);
                denom[s * cols + c] += v;
            }
        }
        for (e, &s) in segments.iter().enumerate() {
            for c in 0..cols {
                let v = value.get(e, c) / denom[s * cols + c];
                value.set(e, c, v);
            }
        }
        let rg = self.any_grad(&[a]);
        Ok(self.push(value, Op::SegmentSoftmax(a, segments.to_vec()), rg))
    }

    /// Row `i` of the output is row `index[i]` of `a`.
    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Result<Var> {
        let x = self.value(a);
        if let Some(&bad) = index.iter().find(|&&i| i >= x.rows()) {
            return Err(Error::index(
                "gather_rows",
                format!("row {bad} of {}", x.rows()),
            ));
        }
        let mut value = Tensor::zeros(index.len(), x.cols());
        for (o, &i) in index.iter().enumerate() {
            value.row_mut(o).copy_from_slice(x.row(i));
        }
        let rg = self.any_grad(&[a]);
        Ok(self.push(value, Op::GatherRows(a, index.to_vec()), rg))
    }

    /// Row `s` of the output is the sum of the rows of `a` with segment id `s`.
    pub fn segment_sum(&mut self, a: Var, segments: &[usize], num_segments: usize) -> Result<Var> {
        let x = self.value(a);
        check_segments("segment_sum", x.rows(), segments, num_segments)?;
        let mut value = Tensor::zeros(num_segments, x.cols());
        for (e, &s) in segments.iter().enumerate() {
            for (o, &v) in value.row_mut(s).iter_mut().zip(x.row(e)) {
                *o += v;
            }
        }
        let rg = self.any_grad(&[a]);
        Ok(self.push(value, Op::SegmentSum(a, segments.to_vec()), rg))
    }

    /// Row `s` of the output is the mean of the rows with segment id `s`; empty
    /// segments produce a zero row.
    pub fn segment_mean(&mut self, a: Var, segments: &[usize], num_segments: usize) -> Result<Var> {
        let x = self.value(a);
        check_segments("segment_mean", x.rows(), segments, num_segments)?;
        let mut counts = vec![0usize; num_segments];
        let mut value = Tensor::zeros(num_segments, x.cols());
        for (e, &s) in segments.iter().enumerate() {
            counts[s] += 1;
            for (o, &v) in value.row_mut(s).iter_mut().zip(x.row(e)) {
                *o += v;
            }
        }
        for (s, &n) in counts.iter().enumerate() {
            if n > 0 {
                let inv = 1.0 / n as f64;
                value.row_mut(s).iter_mut().for_each(|v| *v *= inv);
            }
        }
        let rg = self.any_grad(&[a]);
        Ok(self.push(value, Op::SegmentMean(a, segments.to_vec(), counts), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = match parts.first() {
            Some(&p) => self.shape(p).1,
            None => return Err(Error::Contract("concat_rows of nothing".into())),
        };
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols {
                return Err(Error::dim(
                    "concat_rows",
                    format!("{} vs {cols} columns", t.cols()),
                ));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let value = Tensor::from_vec(rows, cols, data)?;
        let rg = self.any_grad(parts);
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = match parts.first() {
            Some(&p) => self.shape(p).0,
            None => return Err(Error::Contract("concat_cols of nothing".into())),
        };
        if parts.iter().any(|&p| self.shape(p).0 != rows) {
            return Err(Error::dim("concat_cols", "row counts differ"));
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut value = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                value.row_mut(r)[offset..offset + src.len()].copy_from_slice(src);
                offset += src.len();
            }
        }
        let rg = self.any_grad(parts);
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// `m x n -> m x 1` row sums.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let data = (0..x.rows()).map(|r| x.row(r).iter().sum()).collect();
        let value = Tensor::from_vec(x.rows(), 1, data).expect("row_sum shape");
        let rg = self.any_grad(&[a]);
        self.push(value, Op::RowSum(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).data().iter().sum());
        let rg = self.any_grad(&[a]);
        self.push(value, Op::Sum(a), rg)
    }

    /// `m x n -> 1 x n` column means. An empty input yields zeros.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut value = Tensor::zeros(1, x.cols());
        for r in 0..x.rows() {
            for (o, &v) in value.data_mut().iter_mut().zip(x.row(r)) {
                *o += v;
            }
        }
        if x.rows() > 0 {
            value.scale_in_place(1.0 / x.rows() as f64);
        }
        let rg = self.any_grad(&[a]);
        self.push(value, Op::MeanRows(a), rg)
    }

    /// Mean over the batch of `weights[label] * -log softmax(logits)[label]`.
    pub fn weighted_cross_entropy(
        &mut self,
        logits: Var,
        labels: &[usize],
        class_weights: &[f64],
    ) -> Result<Var> {
        let z = self.value(logits);
        if z.rows() != labels.len() || z.rows() == 0 {
            return Err(Error::dim(
                "weighted_cross_entropy",
                format!("{} logit rows for {} labels", z.rows(), labels.len()),
            ));
        }
        if z.cols() != class_weights.len() {
            return Err(Error::dim(
                "weighted_cross_entropy",
                format!("{} classes, {} weights", z.cols(), class_weights.len()),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= z.cols()) {
            return Err(Error::index(
                "weighted_cross_entropy",
                format!("label {bad} with {} classes", z.cols()),
            ));
        }
        if class_weights.iter().any(|&w| w.is_nan() || w <= 0.0) {
            return Err(Error::Config("class weights must be positive".into()));
        }
        let mut probs = z.clone();
        let mut loss = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            let row = z.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += class_weights[label] * (lse - row[label]);
            softmax_in_place(probs.row_mut(r));
        }
        loss /= labels.len() as f64;
        let rg = self.any_grad(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::WeightedCrossEntropy {
                logits,
                labels: labels.to_vec(),
                weights: class_weights.to_vec(),
                probs,
            },
            rg,
        ))
    }

    // ---- backward ----

    /// Populates gradients for every node that requires one, seeding `loss` with 1.
    /// Gradients accumulate additively across multiple uses of a node.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.zero_grad();
        self.backward_visits = 0;
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(Tensor::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[idx].grad.take() else {
                continue;
            };
            self.backward_visits += 1;
            self.propagate(idx, &g);
            self.nodes[idx].grad = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, delta: Tensor) {
        let node = &mut self.nodes[v.0];
        if !node.requires_grad {
            return;
        }
        match &mut node.grad {
            Some(g) => g.add_assign(&delta),
            None => node.grad = Some(delta),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&mut self, idx: usize, g: &Tensor) {
        // Take the op out temporarily to sidestep borrowing the arena twice.
        let op = std::mem::replace(&mut self.nodes[idx].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                if self.wants(a) {
                    let mut da = Tensor::zeros(self.shape(a).0, self.shape(a).1);
                    matmul_nt_acc(g, self.value(b), &mut da);
                    self.accumulate(a, da);
                }
                if self.wants(b) {
                    let mut db = Tensor::zeros(self.shape(b).0, self.shape(b).1);
                    matmul_tn_acc(self.value(a), g, &mut db);
                    self.accumulate(b, db);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(*a, g.clone());
                self.accumulate(*b, g.clone());
            }
            Op::AddRow(a, b) => {
                self.accumulate(*a, g.clone());
                if self.wants(*b) {
                    let mut db = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, &v) in db.data_mut().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    self.accumulate(*b, db);
                }
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                if self.wants(a) {
                    let mut da = g.clone();
                    for (x, &y) in da.data_mut().iter_mut().zip(self.value(b).data()) {
                        *x *= y;
                    }
                    self.accumulate(a, da);
                }
                if self.wants(b) {
                    let mut db = g.clone();
                    for (x, &y) in db.data_mut().iter_mut().zip(self.value(a).data()) {
                        *x *= y;
                    }
                    self.accumulate(b, db);
                }
            }
            Op::MulRow(a, b) => {
                let (a, b) = (*a, *b);
                if self.wants(a) {
                    let row = self.value(b).data().to_vec();
                    let mut da = g.clone();
                    for r in 0..da.rows() {
                        for (x, &y) in da.row_mut(r).iter_mut().zip(&row) {
                            *x *= y;
                        }
                    }
                    self.accumulate(a, da);
                }
                if self.wants(b) {
                    let av = self.value(a);
                    let mut db = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for ((o, &gv), &xv) in db.data_mut().iter_mut().zip(g.row(r)).zip(av.row(r)) {
                            *o += gv * xv;
                        }
                    }
                    self.accumulate(b, db);
                }
            }
            Op::ScaleRows(a, c) => {
                let (a, c) = (*a, *c);
                if self.wants(a) {
                    let cv = self.value(c).data().to_vec();
                    let mut da = g.clone();
                    for (r, &s) in cv.iter().enumerate() {
                        da.row_mut(r).iter_mut().for_each(|x| *x *= s);
                    }
                    self.accumulate(a, da);
                }
                if self.wants(c) {
                    let av = self.value(a);
                    let data = (0..g.rows())
                        .map(|r| g.row(r).iter().zip(av.row(r)).map(|(x, y)| x * y).sum())
                        .collect();
                    let dc = Tensor::from_vec(g.rows(), 1, data).expect("scale_rows grad");
                    self.accumulate(c, dc);
                }
            }
            Op::Scale(a, s) => {
                let mut da = g.clone();
                da.scale_in_place(*s);
                self.accumulate(*a, da);
            }
            Op::Unary(a, f) => {
                let a = *a;
                let x = self.value(a);
                let y = &self.nodes[idx].value;
                let mut da = g.clone();
                for ((d, &xv), &yv) in da.data_mut().iter_mut().zip(x.data()).zip(y.data()) {
                    *d *= f.derivative(xv, yv);
                }
                self.accumulate(a, da);
            }
            Op::RowSoftmax(a) => {
                let y = &self.nodes[idx].value;
                let mut da = Tensor::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
                    for ((d, &gv), &yv) in da.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                        *d = yv * (gv - dot);
                    }
                }
                self.accumulate(*a, da);
            }
            Op::SegmentSoftmax(a, segments) => {
                let y = &self.nodes[idx].value;
                let cols = y.cols();
                let num_segments = segments.iter().max().map_or(0, |m| m + 1);
                let mut dot = vec![0.0; num_segments * cols];
                for (e, &s) in segments.iter().enumerate() {
                    for c in 0..cols {
                        dot[s * cols + c] += g.get(e, c) * y.get(e, c);
                    }
                }
                let mut da = Tensor::zeros(y.rows(), cols);
                for (e, &s) in segments.iter().enumerate() {
                    for c in 0..cols {
                        da.set(e, c, y.get(e, c) * (g.get(e, c) - dot[s * cols + c]));
                    }
                }
                self.accumulate(*a, da);
            }
            Op::GatherRows(a, index) => {
                let (rows, cols) = self.shape(*a);
                let mut da = Tensor::zeros(rows, cols);
                for (o, &i) in index.iter().enumerate() {
                    for (d, &v) in da.row_mut(i).iter_mut().zip(g.row(o)) {
                        *d += v;
                    }
                }
                self.accumulate(*a, da);
            }
            Op::SegmentSum(a, segments) => {
                let mut da = Tensor::zeros(segments.len(), g.cols());
                for (e, &s) in segments.iter().enumerate() {
                    da.row_mut(e).copy_from_slice(g.row(s));
                }
                self.accumulate(*a, da);
            }
            Op::SegmentMean(a, segments, counts) => {
                let mut da = Tensor::zeros(segments.len(), g.cols());
                for (e, &s) in segments.iter().enumerate() {
                    let inv = 1.0 / counts[s] as f64;
                    for (d, &v) in da.row_mut(e).iter_mut().zip(g.row(s)) {
                        *d = v * inv;
                    }
                }
                self.accumulate(*a, da);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (rows, cols) = self.shape(p);
                    if self.wants(p) {
                        let slice = g.data()[offset * cols..(offset + rows) * cols].to_vec();
                        self.accumulate(p, Tensor::from_vec(rows, cols, slice).expect("concat"));
                    }
                    offset += rows;
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (rows, cols) = self.shape(p);
                    if self.wants(p) {
                        let mut dp = Tensor::zeros(rows, cols);
                        for r in 0..rows {
                            dp.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + cols]);
                        }
                        self.accumulate(p, dp);
                    }
                    offset += cols;
                }
            }
            Op::RowSum(a) => {
                let (rows, cols) = self.shape(*a);
                let mut da = Tensor::zeros(rows, cols);
                for r in 0..rows {
                    let gv = g.data()[r];
                    da.row_mut(r).iter_mut().for_each(|d| *d = gv);
                }
                self.accumulate(*a, da);
            }
            Op::Sum(a) => {
                let (rows, cols) = self.shape(*a);
                self.accumulate(*a, Tensor::filled(rows, cols, g.data()[0]));
            }
            Op::MeanRows(a) => {
                let (rows, cols) = self.shape(*a);
                let mut da = Tensor::zeros(rows, cols);
                let inv = 1.0 / rows.max(1) as f64;
                for r in 0..rows {
                    for (d, &v) in da.row_mut(r).iter_mut().zip(g.data()) {
                        *d = v * inv;
                    }
                }
                self.accumulate(*a, da);
            }
            Op::WeightedCrossEntropy {
                logits,
                labels,
                weights,
                probs,
            } => {
                let upstream = g.data()[0];
                let batch = labels.len() as f64;
                let mut dz = probs.clone();
                for (r, &label) in labels.iter().enumerate() {
                    let w = weights[label] * upstream / batch;
                    let row = dz.row_mut(r);
                    row[label] -= 1.0;
                    row.iter_mut().for_each(|d| *d *= w);
                }
                self.accumulate(*logits, dz);
            }
        }
        self.nodes[idx].op = op;
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}

fn check_segments(op: &'static str, rows: usize, segments: &[usize], num_segments: usize) -> Result<()> {
    if segments.len() != rows {
        return Err(Error::dim(
            op,
            format!("{} segment ids for {rows} rows", segments.len()),
        ));
    }
    if let Some(&bad) = segments.iter().find(|&&s| s >= num_segments) {
        return Err(Error::index(op, format!("segment {bad} of {num_segments}")));
    }
    Ok(())
}
