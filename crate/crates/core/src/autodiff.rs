//! Reverse-mode automatic differentiation over an append-only tape.
//!
//! A [`Tape`] records every primitive applied to its [`Var`]s. Parents always
//! precede children, so a single reverse sweep in node order computes all
//! gradients. Tensors registered with [`Tape::constant`] (and anything computed
//! only from constants) are not differentiated.
//!
//! ```
//! use lgg::autodiff::Tape;
//! use lgg::Tensor;
//!
//! let tape = Tape::new();
//! let a = tape.leaf(Tensor::vector(&[1.0, 2.0]).unwrap());
//! let b = tape.constant(Tensor::vector(&[3.0, 4.0]).unwrap());
//! let dot = a.mul(b).unwrap().sum().unwrap();
//! assert_eq!(dot.item(), 11.0);
//! let grads = tape.backward(dot).unwrap();
//! assert_eq!(grads.wrt(a).data(), &[3.0, 4.0]);
//! ```

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::{matmul_raw, Tensor};

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    MatMul(usize, usize),
    Relu(usize),
    Exp(usize),
    Log(usize),
    Sqrt(usize),
    Sum(usize),
    Mean(usize),
    Transpose(usize),
    RowNormalize(usize),
    Abs(usize),
    Scale(usize, f64),
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of primitive operations.
///
/// Single-threaded. Independent tapes on different threads share nothing.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    checked: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

impl Tape {
    /// A tape in checked mode: every result is scanned for NaN/Inf.
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            checked: true,
        }
    }

    pub fn unchecked() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            checked: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Registers a differentiable input.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Registers a value that receives no gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value_of(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn requires_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    fn record(&self, name: &'static str, value: Tensor, op: Op, parents: &[usize]) -> Result<Var<'_>> {
        if self.checked && !value.all_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = parents.iter().any(|&p| self.requires_grad(p));
        Ok(self.push(value, op, requires_grad))
    }

    /// Reverse sweep from a scalar root.
    ///
    /// Gradients accumulate additively over every path. Constants and nodes
    /// computed only from constants get no entry.
    pub fn backward(&self, root: Var<'_>) -> Result<Gradients> {
        if !std::ptr::eq(root.tape, self) {
            return Err(Error::usage("backward root was not recorded on this tape"));
        }
        let nodes = self.nodes.borrow();
        let root_value = &nodes[root.id].value;
        if root_value.len() != 1 {
            return Err(Error::usage(format!(
                "backward root must be scalar, got shape {:?}",
                root_value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[root.id] = Some(Tensor::raw(root_value.shape().to_vec(), vec![1.0]));

        for id in (0..=root.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if node.requires_grad {
                propagate(&nodes, node, &g, &mut grads);
            }
            grads[id] = Some(g);
        }
        for (id, node) in nodes.iter().enumerate() {
            if !node.requires_grad {
                grads[id] = None;
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], nodes: &[Node], id: usize, delta: Tensor) {
    if !nodes[id].requires_grad {
        return;
    }
    match &mut grads[id] {
        Some(existing) => {
            for (e, d) in existing.data_mut().iter_mut().zip(delta.data()) {
                *e += d;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}

fn propagate(nodes: &[Node], node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
    let val = |id: usize| -> &Tensor { &nodes[id].value };
    let shaped = |id: usize, data: Vec<f64>| Tensor::raw(val(id).shape().to_vec(), data);
    match node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            accumulate(grads, nodes, a, g.clone());
            accumulate(grads, nodes, b, g.clone());
        }
        Op::Sub(a, b) => {
            accumulate(grads, nodes, a, g.clone());
            accumulate(grads, nodes, b, g.map(|v| -v));
        }
        Op::Mul(a, b) => {
            if nodes[a].requires_grad {
                let d = g.data().iter().zip(val(b).data()).map(|(g, b)| g * b).collect();
                accumulate(grads, nodes, a, shaped(a, d));
            }
            if nodes[b].requires_grad {
                let d = g.data().iter().zip(val(a).data()).map(|(g, a)| g * a).collect();
                accumulate(grads, nodes, b, shaped(b, d));
            }
        }
        Op::MatMul(a, b) => {
            let (m, k) = (val(a).shape()[0], val(a).shape()[1]);
            let n = val(b).shape()[1];
            if nodes[a].requires_grad {
                let bt = val(b).transpose();
                let d = matmul_raw(g.data(), bt.data(), m, n, k);
                accumulate(grads, nodes, a, shaped(a, d));
            }
            if nodes[b].requires_grad {
                let at = val(a).transpose();
                let d = matmul_raw(at.data(), g.data(), k, m, n);
                accumulate(grads, nodes, b, shaped(b, d));
            }
        }
        Op::Relu(a) => {
            let d = g
                .data()
                .iter()
                .zip(val(a).data())
                .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                .collect();
            accumulate(grads, nodes, a, shaped(a, d));
        }
        Op::Exp(a) => {
            let d = g.data().iter().zip(node.value.data()).map(|(g, y)| g * y).collect();
            accumulate(grads, nodes, a, shaped(a, d));
        }
        Op::Log(a) => {
            let d = g.data().iter().zip(val(a).data()).map(|(g, x)| g / x).collect();
            accumulate(grads, nodes, a, shaped(a, d));
        }
        Op::Sqrt(a) => {
            // d sqrt(x) at x = 0 is taken as 0
            let d = g
                .data()
                .iter()
                .zip(node.value.data())
                .map(|(g, &y)| if y > 0.0 { g / (2.0 * y) } else { 0.0 })
                .collect();
            accumulate(grads, nodes, a, shaped(a, d));
        }
        Op::Sum(a) => {
            let n = val(a).len();
            accumulate(grads, nodes, a, shaped(a, vec![g.item(); n]));
        }
        Op::Mean(a) => {
            let n = val(a).len();
            accumulate(grads, nodes, a, shaped(a, vec![g.item() / n as f64; n]));
        }
        Op::Transpose(a) => accumulate(grads, nodes, a, g.transpose()),
        Op::RowNormalize(a) => {
            let x = val(a);
            let y = &node.value;
            let c = x.cols();
            let mut d = vec![0.0; x.len()];
            for i in 0..x.rows() {
                let xr = x.row(i);
                let yr = y.row(i);
                let gr = &g.data()[i * c..(i + 1) * c];
                let norm = xr.iter().map(|v| v * v).sum::<f64>().sqrt();
                let proj: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                for j in 0..c {
                    d[i * c + j] = (gr[j] - yr[j] * proj) / norm;
                }
            }
            accumulate(grads, nodes, a, shaped(a, d));
        }
        Op::Abs(a) => {
            // sign(0) = 0
            let d = g
                .data()
                .iter()
                .zip(val(a).data())
                .map(|(g, &x)| {
                    if x > 0.0 {
                        *g
                    } else if x < 0.0 {
                        -g
                    } else {
                        0.0
                    }
                })
                .collect();
            accumulate(grads, nodes, a, shaped(a, d));
        }
        Op::Scale(a, c) => accumulate(grads, nodes, a, g.map(|v| v * c)),
    }
}

/// Gradients from one backward sweep, indexed by tape node.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    /// Gradient with respect to `var`, zeros if the root does not depend on it.
    pub fn wrt(&self, var: Var<'_>) -> Tensor {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(var.value().shape()))
    }
}

/// A tensor with identity on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{} {:?}", self.id, self.value())
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

fn require_matrix(op: &'static str, a: &Tensor) -> Result<()> {
    if !a.is_matrix() {
        return Err(Error::Shape {
            op,
            lhs: a.shape().to_vec(),
            rhs: vec![],
        });
    }
    Ok(())
}

// Fallible, so the operator traits do not fit.
#[allow(clippy::should_implement_trait)]
impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn item(&self) -> f64 {
        self.value().item()
    }

    fn check_tape(&self, other: &Var<'_>) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(Error::usage("operands recorded on different tapes"))
        }
    }

    fn binary(
        self,
        other: Var<'t>,
        name: &'static str,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var<'t>> {
        self.check_tape(&other)?;
        let (a, b) = (self.value(), other.value());
        same_shape(name, &a, &b)?;
        let out = a.zip_map(&b, f)?;
        self.tape.record(name, out, op, &[self.id, other.id])
    }

    fn unary(self, name: &'static str, op: Op, f: impl Fn(f64) -> f64) -> Result<Var<'t>> {
        let out = self.value().map(f);
        self.tape.record(name, out, op, &[self.id])
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "add", Op::Add(self.id, other.id), |a, b| a + b)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "subtract", Op::Sub(self.id, other.id), |a, b| a - b)
    }

    /// Elementwise product.
    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "multiply", Op::Mul(self.id, other.id), |a, b| a * b)
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.check_tape(&other)?;
        let out = self.value().matmul(&other.value())?;
        self.tape.record("matmul", out, Op::MatMul(self.id, other.id), &[self.id, other.id])
    }

    pub fn relu(self) -> Result<Var<'t>> {
        self.unary("relu", Op::Relu(self.id), |x| x.max(0.0))
    }

    pub fn exp(self) -> Result<Var<'t>> {
        self.unary("exp", Op::Exp(self.id), f64::exp)
    }

    pub fn log(self) -> Result<Var<'t>> {
        self.unary("log", Op::Log(self.id), f64::ln)
    }

    pub fn sqrt(self) -> Result<Var<'t>> {
        self.unary("sqrt", Op::Sqrt(self.id), f64::sqrt)
    }

    pub fn abs(self) -> Result<Var<'t>> {
        self.unary("abs", Op::Abs(self.id), f64::abs)
    }

    /// Multiplication by a constant scalar, the only broadcasting primitive.
    pub fn scale(self, c: f64) -> Result<Var<'t>> {
        self.unary("scale", Op::Scale(self.id, c), |x| x * c)
    }

    pub fn sum(self) -> Result<Var<'t>> {
        let s = self.value().sum();
        self.tape.record("sum", Tensor::scalar(s), Op::Sum(self.id), &[self.id])
    }

    pub fn mean(self) -> Result<Var<'t>> {
        let v = self.value();
        let m = v.sum() / v.len() as f64;
        self.tape.record("mean", Tensor::scalar(m), Op::Mean(self.id), &[self.id])
    }

    pub fn transpose(self) -> Result<Var<'t>> {
        let v = self.value();
        require_matrix("transpose", &v)?;
        self.tape.record("transpose", v.transpose(), Op::Transpose(self.id), &[self.id])
    }

    /// Scales every row of a matrix to unit Euclidean norm.
    pub fn row_normalize(self) -> Result<Var<'t>> {
        let v = self.value();
        require_matrix("row_normalize", &v)?;
        let c = v.cols();
        let mut out = v.data().to_vec();
        for (i, row) in out.chunks_mut(c).enumerate() {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::degenerate(format!("row {i} has zero norm")));
            }
            row.iter_mut().for_each(|x| *x /= norm);
        }
        let out = Tensor::raw(v.shape().to_vec(), out);
        self.tape.record("row_normalize", out, Op::RowNormalize(self.id), &[self.id])
    }

    /// Sum along each row, as a column vector. Composite of `matmul` with ones.
    pub fn row_sums(self) -> Result<Var<'t>> {
        let v = self.value();
        require_matrix("row_sums", &v)?;
        let ones = self.tape.constant(Tensor::ones(&[v.cols(), 1]));
        self.matmul(ones)
    }

    /// `u vᵀ` for two column vectors. Composite of `matmul` and `transpose`.
    pub fn outer(self, other: Var<'t>) -> Result<Var<'t>> {
        self.matmul(other.transpose()?)
    }
}

/// Largest relative discrepancy between an analytic gradient and central
/// finite differences of `eval` around `x`.
///
/// The per-coordinate error is `|g_analytic − g_numeric| / max(1, |g_numeric|)`.
pub fn compare_gradients(
    analytic: &Tensor,
    x: &Tensor,
    step: f64,
    mut eval: impl FnMut(&Tensor) -> Result<f64>,
) -> Result<f64> {
    if analytic.shape() != x.shape() {
        return Err(Error::Shape {
            op: "compare_gradients",
            lhs: analytic.shape().to_vec(),
            rhs: x.shape().to_vec(),
        });
    }
    let mut worst: f64 = 0.0;
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + step;
        let plus = eval(&probe)?;
        probe.data_mut()[i] = orig - step;
        let minus = eval(&probe)?;
        probe.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite { op: "finite_diff_check" });
        }
        let numeric = (plus - minus) / (2.0 * step);
        let err = (analytic.data()[i] - numeric).abs() / numeric.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Checks the tape's gradient of a scalar function against central differences.
pub fn finite_diff_check<F>(f: F, x: &Tensor, step: f64) -> Result<f64>
where
    F: for<'t> Fn(Var<'t>) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let input = tape.leaf(x.clone());
    let out = f(input)?;
    let analytic = tape.backward(out)?.wrt(input);
    compare_gradients(&analytic, x, step, |probe| {
        let tape = Tape::new();
        let v = f(tape.leaf(probe.clone()))?;
        Ok(v.item())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec_t(v: &[f64]) -> Tensor {
        Tensor::vector(v).unwrap()
    }

    #[test]
    fn relu_values_and_subgradient_at_zero() {
        let tape = Tape::new();
        let x = tape.leaf(vec_t(&[-1.0, 0.0, 2.0]));
        let y = x.relu().unwrap();
        assert_eq!(y.value().data(), &[0.0, 0.0, 2.0]);
        let g = tape.backward(y.sum().unwrap()).unwrap();
        assert_eq!(g.wrt(x).data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn sum_gradient_is_ones() {
        let tape = Tape::new();
        let x = tape.leaf(vec_t(&[1.0, -2.0, 3.0]));
        let g = tape.backward(x.sum().unwrap()).unwrap();
        assert_eq!(g.wrt(x).data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn fan_out_accumulates() {
        let tape = Tape::new();
        let x = tape.leaf(vec_t(&[0.5, 1.5]));
        let s = x.sum().unwrap();
        let twice = s.add(s).unwrap();
        let g = tape.backward(twice).unwrap();
        assert_eq!(g.wrt(x).data(), &[2.0, 2.0]);
    }

    #[test]
    fn identity_matmul() {
        let tape = Tape::new();
        let x = Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        let i3 = tape.constant(Tensor::eye(3));
        let y = i3.matmul(tape.leaf(x.clone())).unwrap();
        assert_eq!(*y.value(), x);
    }

    #[test]
    fn dot_product() {
        let tape = Tape::new();
        let a = tape.leaf(vec_t(&[1.0, 2.0]));
        let b = tape.leaf(vec_t(&[3.0, 4.0]));
        assert_eq!(a.mul(b).unwrap().sum().unwrap().item(), 11.0);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let tape = Tape::new();
        let a = tape.leaf(vec_t(&[1.0, 2.0]));
        let b = tape.leaf(vec_t(&[1.0, 2.0, 3.0]));
        let err = a.add(b).unwrap_err().to_string();
        assert!(err.contains("[2]") && err.contains("[3]"), "{err}");
    }

    #[test]
    fn checked_mode_rejects_non_finite() {
        let tape = Tape::new();
        let x = tape.leaf(vec_t(&[0.0]));
        assert!(matches!(x.log(), Err(Error::NonFinite { op: "log" })));
        let loose = Tape::unchecked();
        let y = loose.leaf(vec_t(&[0.0])).log().unwrap();
        assert!(y.item().is_infinite());
    }

    #[test]
    fn backward_usage_errors() {
        let tape = Tape::new();
        let x = tape.leaf(vec_t(&[1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::Usage(_))));
        let other = Tape::new();
        let y = other.leaf(Tensor::scalar(1.0));
        assert!(matches!(tape.backward(y), Err(Error::Usage(_))));
    }

    #[test]
    fn constants_get_no_gradient() {
        let tape = Tape::new();
        let c = tape.constant(vec_t(&[1.0, 2.0]));
        let x = tape.leaf(vec_t(&[3.0, 4.0]));
        let g = tape.backward(c.mul(x).unwrap().sum().unwrap()).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.wrt(x).data(), &[1.0, 2.0]);
    }

    #[test]
    fn abs_and_sqrt_at_zero_have_zero_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(vec_t(&[0.0, -2.0]));
        let y = x.abs().unwrap().sum().unwrap();
        assert_eq!(tape.backward(y).unwrap().wrt(x).data(), &[0.0, -1.0]);

        let tape = Tape::new();
        let z = tape.leaf(Tensor::scalar(0.0));
        let r = z.sqrt().unwrap();
        assert_eq!(tape.backward(r).unwrap().wrt(z).item(), 0.0);
    }

    #[test]
    fn constant_function_has_zero_error() {
        let x = vec_t(&[0.3, -0.7, 1.1]);
        let err = finite_diff_check(|v| v.scale(0.0)?.sum(), &x, 1e-5).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn compare_gradients_flags_wrong_gradient() {
        let x = vec_t(&[1.0, 2.0]);
        let wrong = vec_t(&[0.0, 0.0]);
        let err = compare_gradients(&wrong, &x, 1e-5, |p| Ok(p.data().iter().map(|v| v * v).sum())).unwrap();
        assert!((err - 4.0 / 4.0).abs() < 1e-6, "{err}");
    }
}
