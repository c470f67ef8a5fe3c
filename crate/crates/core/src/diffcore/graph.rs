//! Define-by-run computation graph with reverse-mode gradients.
//!
//! Nodes are appended in creation order, which is already a topological
//! order, so `backward` is a single reverse sweep. A graph is built per
//! batch and dropped afterwards; values are never mutated once recorded.

use crate::error::{Error, Result};

use super::tensor::Tensor;

/// Handle to a node in a [`Graph`].
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
    Dense { w: Var, b: Var, x: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    BceWithLogits { logits: Var, targets: Tensor },
    SoftmaxCe { logits: Var, labels: Vec<usize> },
    Reparam { mu: Var, log_sigma: Var, eps: Tensor },
    /// Identity; the source edge is not recorded.
    StopGrad,
    /// Scalar-valued function whose partial derivatives were computed
    /// alongside its value.
    Scalar { parents: Vec<Var>, partials: Vec<Tensor> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to every node that needs one.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros shaped like `like` when nothing flowed there.
    pub fn wrt(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.shape()))
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

impl Graph {
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

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
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

    /// Trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::Dimension(format!("{what}: {sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(a).map(f);
        let needs = self.needs(a);
        self.push(value, op, needs)
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(va.shape().to_vec(), data).expect("shapes checked");
        let needs = self.needs(a) || self.needs(b);
        self.push(value, op, needs)
    }

    /// `x Wᵀ + b` for `W: [m×n]`, `b: [m]` and `x: [n]` or `[B×n]`.
    pub fn dense(&mut self, w: Var, b: Var, x: Var) -> Result<Var> {
        let (wv, bv, xv) = (self.value(w), self.value(b), self.value(x));
        if wv.shape().len() != 2 {
            return Err(Error::Dimension(format!("weight must be 2-D, got {:?}", wv.shape())));
        }
        let (m, n) = (wv.shape()[0], wv.shape()[1]);
        if bv.shape() != [m] {
            return Err(Error::Dimension(format!("bias {:?} vs {m} outputs", bv.shape())));
        }
        if xv.shape().is_empty() || xv.shape().len() > 2 || xv.cols() != n {
            return Err(Error::Dimension(format!("input {:?} vs {n} inputs", xv.shape())));
        }
        let rows = xv.rows();
        let mut out = Vec::with_capacity(rows * m);
        for r in 0..rows {
            let xr = xv.row(r);
            for i in 0..m {
                let wr = wv.row(i);
                let mut acc = bv.data()[i];
                for j in 0..n {
                    acc += wr[j] * xr[j];
                }
                out.push(acc);
            }
        }
        let shape = if xv.shape().len() == 1 { vec![m] } else { vec![rows, m] };
        let needs = self.needs(w) || self.needs(b) || self.needs(x);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Dense { w, b, x }, needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        Ok(self.zip(a, b, |x, y| x + y, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        Ok(self.zip(a, b, |x, y| x - y, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        Ok(self.zip(a, b, |x, y| x * y, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.unary(a, |x| k * x, Op::Scale(a, k))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    /// Natural log; the argument must be strictly positive.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        if self.value(a).data().iter().any(|&v| v <= 0.0) {
            return Err(Error::Domain("log of non-positive value".into()));
        }
        Ok(self.unary(a, f64::ln, Op::Log(a)))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let needs = self.needs(a);
        self.push(Tensor::scalar(s), Op::Sum(a), needs)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let s = self.value(a).mean();
        let needs = self.needs(a);
        self.push(Tensor::scalar(s), Op::Mean(a), needs)
    }

    /// Mean binary cross-entropy of `logits` against 0/1 `targets`,
    /// evaluated as `max(l,0) − l·t + ln(1 + e^{−|l|})`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &Tensor) -> Result<Var> {
        let lv = self.value(logits);
        if lv.shape() != targets.shape() {
            return Err(Error::Dimension(format!(
                "bce: logits {:?} vs targets {:?}",
                lv.shape(),
                targets.shape()
            )));
        }
        if let Some(t) = targets.data().iter().find(|&&t| t != 0.0 && t != 1.0) {
            return Err(Error::Validation(format!("bce target {t} is not binary")));
        }
        let n = lv.len() as f64;
        let total: f64 = lv
            .data()
            .iter()
            .zip(targets.data())
            .map(|(&l, &t)| l.max(0.0) - l * t + (-l.abs()).exp().ln_1p())
            .sum();
        let needs = self.needs(logits);
        Ok(self.push(
            Tensor::scalar(total / n),
            Op::BceWithLogits {
                logits,
                targets: targets.clone(),
            },
            needs,
        ))
    }

    /// Mean of `−log softmax(logits)[label]` over rows.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        let (rows, k) = lv.dims2();
        if lv.shape().len() != 2 || rows != labels.len() {
            return Err(Error::Dimension(format!(
                "softmax_ce: logits {:?} vs {} labels",
                lv.shape(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::Validation(format!("label {bad} out of range for {k} classes")));
        }
        let mut total = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            let row = lv.row(r);
            total += log_sum_exp(row) - row[label];
        }
        let needs = self.needs(logits);
        Ok(self.push(
            Tensor::scalar(total / rows as f64),
            Op::SoftmaxCe {
                logits,
                labels: labels.to_vec(),
            },
            needs,
        ))
    }

    /// `mu + exp(log_sigma) · eps` with caller-supplied noise.
    pub fn reparam_sample(&mut self, mu: Var, log_sigma: Var, eps: &Tensor) -> Result<Var> {
        self.same_shape(mu, log_sigma, "reparam")?;
        if self.value(mu).shape() != eps.shape() {
            return Err(Error::Dimension(format!(
                "reparam: eps {:?} vs mu {:?}",
                eps.shape(),
                self.value(mu).shape()
            )));
        }
        let (m, s) = (self.value(mu), self.value(log_sigma));
        let data = m
            .data()
            .iter()
            .zip(s.data())
            .zip(eps.data())
            .map(|((&m, &s), &e)| m + s.exp() * e)
            .collect();
        let value = Tensor::new(m.shape().to_vec(), data)?;
        let needs = self.needs(mu) || self.needs(log_sigma);
        Ok(self.push(
            value,
            Op::Reparam {
                mu,
                log_sigma,
                eps: eps.clone(),
            },
            needs,
        ))
    }

    /// Identity on values; blocks every gradient into `a`'s ancestors.
    pub fn stop_gradient(&mut self, a: Var) -> Var {
        let value = self.value(a).clone();
        self.push(value, Op::StopGrad, false)
    }

    /// Records a scalar function of `parents` whose value and partial
    /// derivatives the caller has already computed.
    pub fn scalar_fn(&mut self, parents: &[Var], value: f64, partials: Vec<Tensor>) -> Result<Var> {
        if parents.len() != partials.len() {
            return Err(Error::Dimension(format!(
                "{} parents but {} partials",
                parents.len(),
                partials.len()
            )));
        }
        for (&p, d) in parents.iter().zip(&partials) {
            if self.value(p).shape() != d.shape() {
                return Err(Error::Dimension(format!(
                    "partial {:?} vs parent {:?}",
                    d.shape(),
                    self.value(p).shape()
                )));
            }
        }
        let needs = parents.iter().any(|&p| self.needs(p));
        Ok(self.push(
            Tensor::scalar(value),
            Op::Scalar {
                parents: parents.to_vec(),
                partials,
            },
            needs,
        ))
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.value(root).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar root, got shape {:?}",
                self.value(root).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::full(self.value(root).shape(), 1.0));

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.needs_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, delta: Tensor) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => g.add_assign(&delta),
            slot @ None => *slot = Some(delta.reshaped(self.value(v).shape().to_vec())),
        }
    }

    fn elementwise(&self, a: Var, g: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let va = self.value(a);
        let data = va.data().iter().zip(g.data()).map(|(&x, &gy)| f(x, gy)).collect();
        Tensor::new(va.shape().to_vec(), data).expect("same shape")
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &node.op {
            Op::Leaf | Op::StopGrad => {}
            Op::Dense { w, b, x } => {
                let (wv, xv) = (self.value(*w), self.value(*x));
                let (m, n) = (wv.shape()[0], wv.shape()[1]);
                let rows = xv.rows();
                let gd = g.data();
                if self.needs(*w) {
                    let mut dw = vec![0.0; m * n];
                    for r in 0..rows {
                        let xr = xv.row(r);
                        for i in 0..m {
                            let gi = gd[r * m + i];
                            if gi == 0.0 {
                                continue;
                            }
                            let dwr = &mut dw[i * n..(i + 1) * n];
                            for j in 0..n {
                                dwr[j] += gi * xr[j];
                            }
                        }
                    }
                    self.accumulate(grads, *w, Tensor::new(vec![m, n], dw).unwrap());
                }
                if self.needs(*b) {
                    let mut db = vec![0.0; m];
                    for r in 0..rows {
                        for i in 0..m {
                            db[i] += gd[r * m + i];
                        }
                    }
                    self.accumulate(grads, *b, Tensor::vector(db));
                }
                if self.needs(*x) {
                    let mut dx = vec![0.0; rows * n];
                    for r in 0..rows {
                        let dxr = &mut dx[r * n..(r + 1) * n];
                        for i in 0..m {
                            let gi = gd[r * m + i];
                            if gi == 0.0 {
                                continue;
                            }
                            let wr = wv.row(i);
                            for j in 0..n {
                                dxr[j] += gi * wr[j];
                            }
                        }
                    }
                    self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), dx).unwrap());
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    let d = self.elementwise(*b, g, |y, gy| y * gy);
                    self.accumulate(grads, *a, d);
                }
                if self.needs(*b) {
                    let d = self.elementwise(*a, g, |x, gy| x * gy);
                    self.accumulate(grads, *b, d);
                }
            }
            Op::Scale(a, k) => {
                let k = *k;
                self.accumulate(grads, *a, g.map(|v| k * v));
            }
            Op::Relu(a) => {
                let d = self.elementwise(*a, g, |x, gy| if x > 0.0 { gy } else { 0.0 });
                self.accumulate(grads, *a, d);
            }
            Op::Sigmoid(a) => {
                let d = self.elementwise(*a, g, |x, gy| {
                    let s = sigmoid(x);
                    gy * s * (1.0 - s)
                });
                self.accumulate(grads, *a, d);
            }
            Op::Exp(a) => {
                let d = self.elementwise(*a, g, |x, gy| gy * x.exp());
                self.accumulate(grads, *a, d);
            }
            Op::Log(a) => {
                let d = self.elementwise(*a, g, |x, gy| gy / x);
                self.accumulate(grads, *a, d);
            }
            Op::Square(a) => {
                let d = self.elementwise(*a, g, |x, gy| 2.0 * x * gy);
                self.accumulate(grads, *a, d);
            }
            Op::Sum(a) => {
                let gy = g.item();
                let d = Tensor::full(self.value(*a).shape(), gy);
                self.accumulate(grads, *a, d);
            }
            Op::Mean(a) => {
                let va = self.value(*a);
                let d = Tensor::full(va.shape(), g.item() / va.len() as f64);
                self.accumulate(grads, *a, d);
            }
            Op::BceWithLogits { logits, targets } => {
                let lv = self.value(*logits);
                let scale = g.item() / lv.len() as f64;
                let data = lv
                    .data()
                    .iter()
                    .zip(targets.data())
                    .map(|(&l, &t)| scale * (sigmoid(l) - t))
                    .collect();
                self.accumulate(grads, *logits, Tensor::new(lv.shape().to_vec(), data).unwrap());
            }
            Op::SoftmaxCe { logits, labels } => {
                let lv = self.value(*logits);
                let (rows, k) = lv.dims2();
                let scale = g.item() / rows as f64;
                let mut d = Vec::with_capacity(rows * k);
                for (r, &label) in labels.iter().enumerate() {
                    let row = lv.row(r);
                    let lse = log_sum_exp(row);
                    for (c, &l) in row.iter().enumerate() {
                        let p = (l - lse).exp();
                        let onehot = if c == label { 1.0 } else { 0.0 };
                        d.push(scale * (p - onehot));
                    }
                }
                self.accumulate(grads, *logits, Tensor::new(lv.shape().to_vec(), d).unwrap());
            }
            Op::Reparam {
                mu,
                log_sigma,
                eps,
            } => {
                self.accumulate(grads, *mu, g.clone());
                if self.needs(*log_sigma) {
                    let s = self.value(*log_sigma);
                    let data = s
                        .data()
                        .iter()
                        .zip(eps.data())
                        .zip(g.data())
                        .map(|((&ls, &e), &gy)| gy * ls.exp() * e)
                        .collect();
                    self.accumulate(grads, *log_sigma, Tensor::new(s.shape().to_vec(), data).unwrap());
                }
            }
            Op::Scalar { parents, partials } => {
                let gy = g.item();
                for (&p, d) in parents.iter().zip(partials) {
                    self.accumulate(grads, p, d.map(|v| gy * v));
                }
            }
        }
    }
}

/// Numerically stable `ln Σ exp(v)`.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}
