//! Reverse-mode differentiation over a recorded operation tape.
//!
//! A forward pass pushes primitive ops onto the tape; `backward` replays them
//! in reverse, accumulating gradients (they add when a value fans out). A tape
//! is single-threaded and is rebuilt for every optimization step, which also
//! zeroes gradients between steps.

use super::matrix::{softmax_t_rows, Matrix};
use crate::error::{Error, Result};
use crate::losses::PROB_EPS;

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

enum Op {
    Leaf,
    MatMul(usize, usize),
    /// x[BxN] + bias[1xN] broadcast over rows.
    AddRowBias(usize, usize),
    Relu(usize),
    SoftmaxT(usize, f64),
    Log(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Sum(usize),
    Mean(usize),
    /// Row-wise [a | b] concatenation.
    ConcatCols(usize, usize),
    /// Per-sample cross-entropy of softmax(logits) against hard labels; Bx1.
    CeSoftmax { logits: usize, labels: Vec<usize> },
    /// Scalar mean over the batch of (1-a)*CE + a*T^2*KL(teacher||student).
    /// Teacher logits are constants: gradient flows to student logits only.
    DistillObjective {
        logits: usize,
        teacher: Matrix,
        labels: Vec<usize>,
        alphas: Vec<f64>,
        temperature: f64,
    },
}

struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Default)]
pub struct GradTape {
    nodes: Vec<Node>,
    grads: Vec<Matrix>,
}

impl GradTape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` call w.r.t. `v`.
    pub fn grad(&self, v: Var) -> Result<&Matrix> {
        self.grads
            .get(v.0)
            .ok_or_else(|| Error::State("backward has not been run on this tape".into()))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.nodes[a.0].value.matmul(&self.nodes[b.0].value)?;
        Ok(self.push(value, Op::MatMul(a.0, b.0)))
    }

    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xm, bm) = (&self.nodes[x.0].value, &self.nodes[bias.0].value);
        if bm.rows() != 1 || bm.cols() != xm.cols() {
            return Err(Error::Shape(format!(
                "bias 1x{} incompatible with activations {}x{}",
                bm.cols(),
                xm.rows(),
                xm.cols()
            )));
        }
        let mut value = xm.clone();
        for r in 0..value.rows() {
            for c in 0..value.cols() {
                let v = value.get(r, c) + bm.get(0, c);
                value.set(r, c, v);
            }
        }
        Ok(self.push(value, Op::AddRowBias(x.0, bias.0)))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.map(|v| v.max(0.0));
        self.push(value, Op::Relu(x.0))
    }

    pub fn softmax_t(&mut self, x: Var, temperature: f64) -> Result<Var> {
        let value = softmax_t_rows(&self.nodes[x.0].value, temperature)?;
        Ok(self.push(value, Op::SoftmaxT(x.0, temperature)))
    }

    pub fn log(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.map(|v| v.max(PROB_EPS).ln());
        self.push(value, Op::Log(x.0))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.nodes[a.0].value.add(&self.nodes[b.0].value)?;
        Ok(self.push(value, Op::Add(a.0, b.0)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.nodes[a.0].value.sub(&self.nodes[b.0].value)?;
        Ok(self.push(value, Op::Sub(a.0, b.0)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.nodes[a.0].value.hadamard(&self.nodes[b.0].value)?;
        Ok(self.push(value, Op::Mul(a.0, b.0)))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let value = self.nodes[x.0].value.scale(s);
        self.push(value, Op::Scale(x.0, s))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Matrix::row_vec(&[self.nodes[x.0].value.sum()]);
        self.push(value, Op::Sum(x.0))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let m = &self.nodes[x.0].value;
        let n = (m.rows() * m.cols()) as f64;
        let value = Matrix::row_vec(&[m.sum() / n]);
        self.push(value, Op::Mean(x.0))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (am, bm) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let value = concat_cols(am, bm)?;
        Ok(self.push(value, Op::ConcatCols(a.0, b.0)))
    }

    /// Per-sample cross-entropy against hard labels, through a row-wise
    /// softmax at T=1. Returns a Bx1 column of losses.
    pub fn ce_softmax(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let lm = &self.nodes[logits.0].value;
        check_labels(lm, labels)?;
        let probs = softmax_t_rows(lm, 1.0)?;
        let mut losses = Vec::with_capacity(labels.len());
        for (r, &y) in labels.iter().enumerate() {
            losses.push(-probs.get(r, y).max(PROB_EPS).ln());
        }
        let value = Matrix::new(labels.len(), 1, losses)?;
        Ok(self.push(value, Op::CeSoftmax { logits: logits.0, labels: labels.to_vec() }))
    }

    /// The full student objective for one batch: scalar mean over samples of
    /// `(1 - alpha) * L_cls + alpha * L_distill` with per-sample alphas.
    pub fn distill_objective(
        &mut self,
        student_logits: Var,
        teacher_logits: &Matrix,
        labels: &[usize],
        alphas: &[f64],
        temperature: f64,
    ) -> Result<Var> {
        let sm = &self.nodes[student_logits.0].value;
        check_labels(sm, labels)?;
        if !sm.same_shape(teacher_logits) {
            return Err(Error::Shape(format!(
                "student logits {}x{} vs teacher logits {}x{}",
                sm.rows(),
                sm.cols(),
                teacher_logits.rows(),
                teacher_logits.cols()
            )));
        }
        if alphas.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} alphas for {} labels",
                alphas.len(),
                labels.len()
            )));
        }
        if let Some(a) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::Param(format!("alpha {a} outside [0,1]")));
        }
        if temperature <= 0.0 {
            return Err(Error::Param(format!("temperature must be positive, got {temperature}")));
        }
        let batch = labels.len();
        let mut total = 0.0;
        for r in 0..batch {
            let l_cls = crate::losses::ce_of_logits(sm.row(r), labels[r])?;
            let l_distill =
                crate::losses::kl_distill(teacher_logits.row(r), sm.row(r), temperature)?;
            total += (1.0 - alphas[r]) * l_cls + alphas[r] * l_distill;
        }
        let value = Matrix::row_vec(&[total / batch as f64]);
        Ok(self.push(
            value,
            Op::DistillObjective {
                logits: student_logits.0,
                teacher: teacher_logits.clone(),
                labels: labels.to_vec(),
                alphas: alphas.to_vec(),
                temperature,
            },
        ))
    }

    /// Propagate `output_gradient` from `output` back through the tape.
    pub fn backward(&mut self, output: Var, output_gradient: &Matrix) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::State("backward called before any forward pass".into()));
        }
        if !output_gradient.same_shape(&self.nodes[output.0].value) {
            return Err(Error::Shape(format!(
                "output gradient {}x{} vs output {}x{}",
                output_gradient.rows(),
                output_gradient.cols(),
                self.nodes[output.0].value.rows(),
                self.nodes[output.0].value.cols()
            )));
        }
        self.grads = self
            .nodes
            .iter()
            .map(|n| Matrix::zeros(n.value.rows(), n.value.cols()))
            .collect();
        self.grads[output.0] = output_gradient.clone();

        for id in (0..=output.0).rev() {
            let g = std::mem::replace(&mut self.grads[id], Matrix::zeros(1, 1));
            self.apply_backward(id, &g)?;
            self.grads[id] = g;
        }
        Ok(())
    }

    fn apply_backward(&mut self, id: usize, g: &Matrix) -> Result<()> {
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                let da = g.matmul(&self.nodes[b].value.transpose())?;
                let db = self.nodes[a].value.transpose().matmul(g)?;
                self.grads[a].axpy(1.0, &da)?;
                self.grads[b].axpy(1.0, &db)?;
            }
            Op::AddRowBias(x, bias) => {
                let (x, bias) = (*x, *bias);
                self.grads[x].axpy(1.0, g)?;
                let mut col_sum = Matrix::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        let v = col_sum.get(0, c) + g.get(r, c);
                        col_sum.set(0, c, v);
                    }
                }
                self.grads[bias].axpy(1.0, &col_sum)?;
            }
            Op::Relu(x) => {
                let x = *x;
                let mask = self.nodes[x].value.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
                let dx = g.hadamard(&mask)?;
                self.grads[x].axpy(1.0, &dx)?;
            }
            Op::SoftmaxT(x, t) => {
                let (x, t) = (*x, *t);
                let q = &self.nodes[id].value;
                let mut dx = Matrix::zeros(q.rows(), q.cols());
                for r in 0..q.rows() {
                    let dot: f64 =
                        q.row(r).iter().zip(g.row(r)).map(|(&qi, &gi)| qi * gi).sum();
                    for c in 0..q.cols() {
                        dx.set(r, c, q.get(r, c) * (g.get(r, c) - dot) / t);
                    }
                }
                self.grads[x].axpy(1.0, &dx)?;
            }
            Op::Log(x) => {
                let x = *x;
                let inv = self.nodes[x].value.map(|v| 1.0 / v.max(PROB_EPS));
                let dx = g.hadamard(&inv)?;
                self.grads[x].axpy(1.0, &dx)?;
            }
            Op::Add(a, b) => {
                let (a, b) = (*a, *b);
                self.grads[a].axpy(1.0, g)?;
                self.grads[b].axpy(1.0, g)?;
            }
            Op::Sub(a, b) => {
                let (a, b) = (*a, *b);
                self.grads[a].axpy(1.0, g)?;
                self.grads[b].axpy(-1.0, g)?;
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                let da = g.hadamard(&self.nodes[b].value)?;
                let db = g.hadamard(&self.nodes[a].value)?;
                self.grads[a].axpy(1.0, &da)?;
                self.grads[b].axpy(1.0, &db)?;
            }
            Op::Scale(x, s) => {
                let (x, s) = (*x, *s);
                self.grads[x].axpy(s, g)?;
            }
            Op::Sum(x) => {
                let x = *x;
                let shape = &self.nodes[x].value;
                let ones = Matrix::zeros(shape.rows(), shape.cols()).map(|_| 1.0);
                self.grads[x].axpy(g.get(0, 0), &ones)?;
            }
            Op::Mean(x) => {
                let x = *x;
                let shape = &self.nodes[x].value;
                let n = (shape.rows() * shape.cols()) as f64;
                let ones = Matrix::zeros(shape.rows(), shape.cols()).map(|_| 1.0);
                self.grads[x].axpy(g.get(0, 0) / n, &ones)?;
            }
            Op::ConcatCols(a, b) => {
                let (a, b) = (*a, *b);
                let a_cols = self.nodes[a].value.cols();
                let b_cols = self.nodes[b].value.cols();
                let mut da = Matrix::zeros(g.rows(), a_cols);
                let mut db = Matrix::zeros(g.rows(), b_cols);
                for r in 0..g.rows() {
                    for c in 0..a_cols {
                        da.set(r, c, g.get(r, c));
                    }
                    for c in 0..b_cols {
                        db.set(r, c, g.get(r, a_cols + c));
                    }
                }
                self.grads[a].axpy(1.0, &da)?;
                self.grads[b].axpy(1.0, &db)?;
            }
            Op::CeSoftmax { logits, labels } => {
                let logits = *logits;
                let labels = labels.clone();
                let probs = softmax_t_rows(&self.nodes[logits].value, 1.0)?;
                let mut dx = Matrix::zeros(probs.rows(), probs.cols());
                for (r, &y) in labels.iter().enumerate() {
                    let gr = g.get(r, 0);
                    for c in 0..probs.cols() {
                        let onehot = if c == y { 1.0 } else { 0.0 };
                        dx.set(r, c, gr * (probs.get(r, c) - onehot));
                    }
                }
                self.grads[logits].axpy(1.0, &dx)?;
            }
            Op::DistillObjective { logits, teacher, labels, alphas, temperature } => {
                let logits = *logits;
                let (teacher, labels, alphas, t) =
                    (teacher.clone(), labels.clone(), alphas.clone(), *temperature);
                let sm = &self.nodes[logits].value;
                let q1 = softmax_t_rows(sm, 1.0)?;
                let qs_t = softmax_t_rows(sm, t)?;
                let qt_t = softmax_t_rows(&teacher, t)?;
                let go = g.get(0, 0) / labels.len() as f64;
                let mut dx = Matrix::zeros(sm.rows(), sm.cols());
                for (r, &y) in labels.iter().enumerate() {
                    let a = alphas[r];
                    for c in 0..sm.cols() {
                        let onehot = if c == y { 1.0 } else { 0.0 };
                        // d/ds of T^2 * KL(q_t(T) || q_s(T)) is T*(q_s(T)-q_t(T)).
                        let d_cls = q1.get(r, c) - onehot;
                        let d_distill = t * (qs_t.get(r, c) - qt_t.get(r, c));
                        dx.set(r, c, go * ((1.0 - a) * d_cls + a * d_distill));
                    }
                }
                self.grads[logits].axpy(1.0, &dx)?;
            }
        }
        Ok(())
    }
}

/// Row-wise [a | b] concatenation of two matrices with equal row counts.
pub fn concat_cols(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows() != b.rows() {
        return Err(Error::Shape(format!(
            "concat: {}x{} vs {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let mut out = Matrix::zeros(a.rows(), a.cols() + b.cols());
    for r in 0..a.rows() {
        for c in 0..a.cols() {
            out.set(r, c, a.get(r, c));
        }
        for c in 0..b.cols() {
            out.set(r, a.cols() + c, b.get(r, c));
        }
    }
    Ok(out)
}

fn check_labels(logits: &Matrix, labels: &[usize]) -> Result<()> {
    if labels.len() != logits.rows() {
        return Err(Error::Shape(format!(
            "{} labels for {} logit rows",
            labels.len(),
            logits.rows()
        )));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= logits.cols()) {
        return Err(Error::Param(format!("label {y} out of range for K={}", logits.cols())));
    }
    Ok(())
}
