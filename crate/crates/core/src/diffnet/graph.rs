//! Per-batch reverse-mode tape.
//!
//! Every operation appends a node holding its forward value. [`Graph::backward`]
//! walks the nodes in reverse once, accumulating adjoints, and then frees the
//! tape. Only nodes that (transitively) depend on a [`Graph::param`] leaf get
//! adjoints.

use super::tensor::{gemm, Tensor};
use super::DiffError;

/// SELU scale.
pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
/// SELU negative-branch saturation.
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;

pub fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp_m1()
    }
}

/// Derivative from the input `x` and the output `y = selu(x)`.
fn selu_derivative(x: f64, y: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA
    } else {
        y + SELU_LAMBDA * SELU_ALPHA
    }
}

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Selu(Var),
    GatherRows(Var, Vec<usize>),
    Add(Var, Var),
    Sub(Var, Var),
    Relu(Var),
    /// Row-wise max; stores the winning column of each row.
    RowMax(Var, Vec<usize>),
    RowSum(Var),
    Scale(Var, f64),
    Offset(Var),
    MulConst(Var, Vec<f64>),
    Square(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation for one batch.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Adjoints produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Adjoint of `var`, or `None` if the loss does not depend on it.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Adjoint of `var`, zero-filled when the loss does not depend on it.
    pub fn wrt(&self, var: Var) -> Tensor {
        match self.get(var) {
            Some(t) => t.clone(),
            None => Tensor::zeros(self.shapes[var.0].clone()),
        }
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

    fn check_live(&self) -> Result<(), DiffError> {
        if self.consumed {
            Err(DiffError::Usage(
                "graph already consumed by backward".into(),
            ))
        } else {
            Ok(())
        }
    }

    fn node(&self, v: Var) -> Result<&Node, DiffError> {
        self.check_live()?;
        self.nodes
            .get(v.0)
            .ok_or_else(|| DiffError::Usage(format!("unknown variable {v:?}")))
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Result<Var, DiffError> {
        if !value.is_finite() {
            return Err(DiffError::NonFinite(format!("result of {op:?}")));
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Leaf that receives no gradient (inputs, targets).
    pub fn constant(&mut self, value: Tensor) -> Result<Var, DiffError> {
        self.check_live()?;
        self.push(value, Op::Leaf, false)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Result<Var, DiffError> {
        self.check_live()?;
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> Result<&Tensor, DiffError> {
        Ok(&self.node(v)?.value)
    }

    fn grad_flag(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// `[m × k] · [k × n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (m, k) = self.node(a)?.value.require_matrix("matmul lhs")?;
        let (k2, n) = self.node(b)?.value.require_matrix("matmul rhs")?;
        if k != k2 {
            return Err(DiffError::Shape(format!("matmul: [{m}×{k}] · [{k2}×{n}]")));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.nodes[a.0].value.data(),
            false,
            self.nodes[b.0].value.data(),
            false,
            &mut out,
        );
        let rg = self.grad_flag(&[a, b]);
        self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), rg)
    }

    /// Adds a length-`n` bias to every row of a `[m × n]` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, DiffError> {
        let (m, n) = self.node(x)?.value.require_matrix("add_bias")?;
        let b = &self.node(bias)?.value;
        if b.len() != n {
            return Err(DiffError::Shape(format!(
                "add_bias: width {n} vs bias {}",
                b.len()
            )));
        }
        let mut out = self.nodes[x.0].value.data().to_vec();
        let b = self.nodes[bias.0].value.data();
        for row in out.chunks_exact_mut(n) {
            row.iter_mut().zip(b).for_each(|(o, bi)| *o += bi);
        }
        let rg = self.grad_flag(&[x, bias]);
        self.push(
            Tensor::from_parts(vec![m, n], out),
            Op::AddBias(x, bias),
            rg,
        )
    }

    pub fn selu(&mut self, x: Var) -> Result<Var, DiffError> {
        let t = &self.node(x)?.value;
        let out = t.data().iter().map(|&v| selu(v)).collect();
        let shape = t.shape().to_vec();
        let rg = self.grad_flag(&[x]);
        self.push(Tensor::from_parts(shape, out), Op::Selu(x), rg)
    }

    /// Selects rows of a matrix by index (repeats allowed).
    pub fn gather_rows(&mut self, x: Var, indices: &[usize]) -> Result<Var, DiffError> {
        let (m, n) = self.node(x)?.value.require_matrix("gather_rows")?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= m) {
            return Err(DiffError::Shape(format!(
                "gather_rows: index {bad} out of {m} rows"
            )));
        }
        let src = self.nodes[x.0].value.data();
        let mut out = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            out.extend_from_slice(&src[i * n..(i + 1) * n]);
        }
        let rg = self.grad_flag(&[x]);
        self.push(
            Tensor::from_parts(vec![indices.len(), n], out),
            Op::GatherRows(x, indices.to_vec()),
            rg,
        )
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<(), DiffError> {
        let sa = self.node(a)?.value.shape();
        let sb = self.node(b)?.value.shape();
        if sa != sb {
            return Err(DiffError::Shape(format!("{what}: {sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.same_shape(a, b, "add")?;
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let out = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x + y)
            .collect();
        let shape = ta.shape().to_vec();
        let rg = self.grad_flag(&[a, b]);
        self.push(Tensor::from_parts(shape, out), Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.same_shape(a, b, "sub")?;
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let out = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x - y)
            .collect();
        let shape = ta.shape().to_vec();
        let rg = self.grad_flag(&[a, b]);
        self.push(Tensor::from_parts(shape, out), Op::Sub(a, b), rg)
    }

    /// `max(x, 0)`; the derivative at exactly 0 is taken as 0.
    pub fn relu(&mut self, x: Var) -> Result<Var, DiffError> {
        let t = &self.node(x)?.value;
        let out = t.data().iter().map(|&v| v.max(0.0)).collect();
        let shape = t.shape().to_vec();
        let rg = self.grad_flag(&[x]);
        self.push(Tensor::from_parts(shape, out), Op::Relu(x), rg)
    }

    /// Row-wise maximum of a `[m × n]` matrix, `n ≥ 1`. Ties go to the lowest column.
    pub fn row_max(&mut self, x: Var) -> Result<Var, DiffError> {
        let (m, n) = self.node(x)?.value.require_matrix("row_max")?;
        if n == 0 {
            return Err(DiffError::Shape("row_max over zero columns".into()));
        }
        let src = self.nodes[x.0].value.data();
        let mut out = Vec::with_capacity(m);
        let mut arg = Vec::with_capacity(m);
        for row in src.chunks_exact(n) {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            out.push(row[best]);
            arg.push(best);
        }
        let rg = self.grad_flag(&[x]);
        self.push(Tensor::from_parts(vec![m], out), Op::RowMax(x, arg), rg)
    }

    /// Row-wise sum of a `[m × n]` matrix.
    pub fn row_sum(&mut self, x: Var) -> Result<Var, DiffError> {
        let (m, n) = self.node(x)?.value.require_matrix("row_sum")?;
        let src = self.nodes[x.0].value.data();
        let out: Vec<f64> = if n == 0 {
            vec![0.0; m]
        } else {
            src.chunks_exact(n).map(|r| r.iter().sum()).collect()
        };
        let rg = self.grad_flag(&[x]);
        self.push(Tensor::from_parts(vec![m], out), Op::RowSum(x), rg)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var, DiffError> {
        let t = &self.node(x)?.value;
        let out = t.data().iter().map(|v| v * factor).collect();
        let shape = t.shape().to_vec();
        let rg = self.grad_flag(&[x]);
        self.push(Tensor::from_parts(shape, out), Op::Scale(x, factor), rg)
    }

    /// Elementwise `x + c` for a constant `c` of the same length.
    pub fn offset(&mut self, x: Var, c: &[f64]) -> Result<Var, DiffError> {
        let t = &self.node(x)?.value;
        if c.len() != t.len() {
            return Err(DiffError::Shape(format!(
                "offset: {} values vs {}",
                c.len(),
                t.len()
            )));
        }
        let out = t.data().iter().zip(c).map(|(v, c)| v + c).collect();
        let shape = t.shape().to_vec();
        let rg = self.grad_flag(&[x]);
        self.push(Tensor::from_parts(shape, out), Op::Offset(x), rg)
    }

    /// Elementwise `x + c` for a scalar constant.
    pub fn offset_scalar(&mut self, x: Var, c: f64) -> Result<Var, DiffError> {
        let n = self.node(x)?.value.len();
        self.offset(x, &vec![c; n])
    }

    /// Elementwise `x · c` for a constant `c` of the same length.
    pub fn mul_const(&mut self, x: Var, c: &[f64]) -> Result<Var, DiffError> {
        let t = &self.node(x)?.value;
        if c.len() != t.len() {
            return Err(DiffError::Shape(format!(
                "mul_const: {} values vs {}",
                c.len(),
                t.len()
            )));
        }
        let out = t.data().iter().zip(c).map(|(v, c)| v * c).collect();
        let shape = t.shape().to_vec();
        let rg = self.grad_flag(&[x]);
        self.push(
            Tensor::from_parts(shape, out),
            Op::MulConst(x, c.to_vec()),
            rg,
        )
    }

    pub fn square(&mut self, x: Var) -> Result<Var, DiffError> {
        let t = &self.node(x)?.value;
        let out = t.data().iter().map(|v| v * v).collect();
        let shape = t.shape().to_vec();
        let rg = self.grad_flag(&[x]);
        self.push(Tensor::from_parts(shape, out), Op::Square(x), rg)
    }

    /// Mean over all elements, producing a scalar. Empty input averages to 0.
    pub fn mean(&mut self, x: Var) -> Result<Var, DiffError> {
        let t = &self.node(x)?.value;
        let v = if t.is_empty() {
            0.0
        } else {
            t.data().iter().sum::<f64>() / t.len() as f64
        };
        let rg = self.grad_flag(&[x]);
        self.push(Tensor::from_parts(Vec::new(), vec![v]), Op::Mean(x), rg)
    }

    /// Reverse sweep from a scalar `loss`. The tape is released afterwards and
    /// any further use of this graph is a usage error.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients, DiffError> {
        let loss_node = self.node(loss)?;
        if loss_node.value.len() != 1 {
            return Err(DiffError::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_node.value.shape()
            )));
        }
        let nodes = std::mem::take(&mut self.nodes);
        self.consumed = true;
        let shapes: Vec<Vec<usize>> = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        if nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }

        fn accumulate(slot: &mut Option<Vec<f64>>, delta: Vec<f64>) {
            match slot {
                Some(g) => g.iter_mut().zip(delta).for_each(|(a, b)| *a += b),
                None => *slot = Some(delta),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(up) = grads[idx].take() else {
                continue;
            };
            let node = &nodes[idx];
            let wants = |v: &Var| nodes[v.0].requires_grad;
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(up);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let ta = &nodes[a.0].value;
                    let tb = &nodes[b.0].value;
                    let (m, k) = (ta.shape()[0], ta.shape()[1]);
                    let n = tb.shape()[1];
                    if wants(a) {
                        let mut da = vec![0.0; m * k];
                        gemm(m, n, k, &up, false, tb.data(), true, &mut da);
                        accumulate(&mut grads[a.0], da);
                    }
                    if wants(b) {
                        let mut db = vec![0.0; k * n];
                        gemm(k, m, n, ta.data(), true, &up, false, &mut db);
                        accumulate(&mut grads[b.0], db);
                    }
                }
                Op::AddBias(x, bias) => {
                    let n = nodes[bias.0].value.len();
                    if wants(bias) {
                        let mut db = vec![0.0; n];
                        for row in up.chunks_exact(n) {
                            db.iter_mut().zip(row).for_each(|(d, g)| *d += g);
                        }
                        accumulate(&mut grads[bias.0], db);
                    }
                    if wants(x) {
                        accumulate(&mut grads[x.0], up);
                    }
                }
                Op::Selu(x) => {
                    let xs = nodes[x.0].value.data();
                    let ys = node.value.data();
                    let d = up
                        .iter()
                        .zip(xs)
                        .zip(ys)
                        .map(|((g, &v), &y)| g * selu_derivative(v, y))
                        .collect();
                    accumulate(&mut grads[x.0], d);
                }
                Op::GatherRows(x, indices) => {
                    let src = &nodes[x.0].value;
                    let n = src.cols();
                    let mut d = vec![0.0; src.len()];
                    for (r, &i) in indices.iter().enumerate() {
                        d[i * n..(i + 1) * n]
                            .iter_mut()
                            .zip(&up[r * n..(r + 1) * n])
                            .for_each(|(a, b)| *a += b);
                    }
                    accumulate(&mut grads[x.0], d);
                }
                Op::Add(a, b) => {
                    if wants(b) {
                        accumulate(&mut grads[b.0], up.clone());
                    }
                    if wants(a) {
                        accumulate(&mut grads[a.0], up);
                    }
                }
                Op::Sub(a, b) => {
                    if wants(b) {
                        accumulate(&mut grads[b.0], up.iter().map(|g| -g).collect());
                    }
                    if wants(a) {
                        accumulate(&mut grads[a.0], up);
                    }
                }
                Op::Relu(x) => {
                    let xs = nodes[x.0].value.data();
                    let d = up
                        .iter()
                        .zip(xs)
                        .map(|(g, &v)| if v > 0.0 { *g } else { 0.0 })
                        .collect();
                    accumulate(&mut grads[x.0], d);
                }
                Op::RowMax(x, arg) => {
                    let n = nodes[x.0].value.cols();
                    let mut d = vec![0.0; nodes[x.0].value.len()];
                    for (r, (&j, g)) in arg.iter().zip(&up).enumerate() {
                        d[r * n + j] = *g;
                    }
                    accumulate(&mut grads[x.0], d);
                }
                Op::RowSum(x) => {
                    let n = nodes[x.0].value.cols();
                    let mut d = Vec::with_capacity(nodes[x.0].value.len());
                    for g in &up {
                        d.extend(std::iter::repeat(*g).take(n));
                    }
                    accumulate(&mut grads[x.0], d);
                }
                Op::Scale(x, f) => {
                    accumulate(&mut grads[x.0], up.iter().map(|g| g * f).collect());
                }
                Op::Offset(x) => accumulate(&mut grads[x.0], up),
                Op::MulConst(x, c) => {
                    accumulate(
                        &mut grads[x.0],
                        up.iter().zip(c).map(|(g, c)| g * c).collect(),
                    );
                }
                Op::Square(x) => {
                    let xs = nodes[x.0].value.data();
                    accumulate(
                        &mut grads[x.0],
                        up.iter().zip(xs).map(|(g, v)| 2.0 * g * v).collect(),
                    );
                }
                Op::Mean(x) => {
                    let len = nodes[x.0].value.len();
                    if len > 0 {
                        accumulate(&mut grads[x.0], vec![up[0] / len as f64; len]);
                    }
                }
            }
        }

        let grads: Vec<Option<Tensor>> = grads
            .into_iter()
            .zip(&shapes)
            .map(|(g, s)| g.map(|g| Tensor::from_parts(s.clone(), g)))
            .collect();
        if let Some(bad) = grads.iter().flatten().find(|g| !g.is_finite()) {
            return Err(DiffError::NonFinite(format!(
                "gradient of shape {:?}",
                bad.shape()
            )));
        }
        Ok(Gradients { grads, shapes })
    }
}
