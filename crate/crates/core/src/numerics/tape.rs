use std::cell::{Cell, RefCell};
use std::collections::HashMap;

use super::{Matrix, NumericsError, LOG_EPS, SIGMOID_CLAMP};

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Sigmoid(usize),
    Relu(usize),
    Softplus(usize),
    Exp(usize),
    Log(usize),
    Clamp(usize, f64, f64),
    Transpose(usize),
    Sum(usize),
    Mean(usize),
    HCat(Vec<usize>),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Records operations of one forward pass for reverse traversal.
///
/// `backward` consumes the recorded graph: the tape is empty afterwards and
/// handles created before the call become stale.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    generation: Cell<u64>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
    generation: u64,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}", self.id)
    }
}

/// Gradients of a scalar loss with respect to every `requires_grad` leaf.
#[derive(Debug, Clone)]
pub struct Gradients {
    generation: u64,
    by_id: HashMap<usize, Matrix>,
}

impl Gradients {
    pub fn get(&self, var: &Var<'_>) -> Option<&Matrix> {
        if var.generation != self.generation {
            return None;
        }
        self.by_id.get(&var.id)
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }
}

enum Broadcast {
    Same,
    LeftScalar,
    RightScalar,
}

fn broadcast_kind(
    op: &'static str,
    a: (usize, usize),
    b: (usize, usize),
) -> Result<Broadcast, NumericsError> {
    if a == b {
        Ok(Broadcast::Same)
    } else if a == (1, 1) {
        Ok(Broadcast::LeftScalar)
    } else if b == (1, 1) {
        Ok(Broadcast::RightScalar)
    } else {
        Err(NumericsError::shape(op, a, b))
    }
}

fn broadcast_apply(
    op: &'static str,
    a: &Matrix,
    b: &Matrix,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Matrix, NumericsError> {
    match broadcast_kind(op, a.shape(), b.shape())? {
        Broadcast::Same => a.zip_map(b, op, f),
        Broadcast::LeftScalar => {
            let s = a[(0, 0)];
            Ok(b.map(|x| f(s, x)))
        }
        Broadcast::RightScalar => {
            let s = b[(0, 0)];
            Ok(a.map(|x| f(x, s)))
        }
    }
}

/// Reduces a broadcast gradient back to the operand's shape.
fn unbroadcast(grad: Matrix, shape: (usize, usize)) -> Matrix {
    if grad.shape() == shape {
        grad
    } else {
        Matrix::scalar(grad.sum())
    }
}

#[inline]
fn clamped_sigmoid(x: f64) -> f64 {
    let x = x.clamp(-SIGMOID_CLAMP, SIGMOID_CLAMP);
    1.0 / (1.0 + (-x).exp())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    /// Records a leaf; gradients are reported for it when `requires_grad`.
    pub fn leaf(&self, value: Matrix, requires_grad: bool) -> Var<'_> {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// A constant leaf (no gradient tracked).
    pub fn constant(&self, value: Matrix) -> Var<'_> {
        self.leaf(value, false)
    }

    fn push(&self, value: Matrix, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
            generation: self.generation.get(),
        }
    }

    fn check(&self, v: &Var<'_>) {
        assert!(
            std::ptr::eq(v.tape, self) && v.generation == self.generation.get(),
            "variable used after its tape was consumed by backward"
        );
    }

    fn requires_grad(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    fn unary(&self, a: Var<'_>, op: Op, f: impl FnOnce(&Matrix) -> Matrix) -> Var<'_> {
        self.check(&a);
        let (value, rg) = {
            let nodes = self.nodes.borrow();
            (f(&nodes[a.id].value), nodes[a.id].requires_grad)
        };
        self.push(value, op, rg)
    }

    fn binary(
        &self,
        a: Var<'_>,
        b: Var<'_>,
        op: Op,
        f: impl FnOnce(&Matrix, &Matrix) -> Result<Matrix, NumericsError>,
    ) -> Result<Var<'_>, NumericsError> {
        self.check(&a);
        self.check(&b);
        let value = {
            let nodes = self.nodes.borrow();
            f(&nodes[a.id].value, &nodes[b.id].value)?
        };
        let rg = self.requires_grad(&[a.id, b.id]);
        Ok(self.push(value, op, rg))
    }

    /// Reverse pass from a scalar `loss`; clears the tape.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients, NumericsError> {
        self.check(&loss);
        let mut nodes = self.nodes.borrow_mut();
        let shape = nodes[loss.id].value.shape();
        if shape != (1, 1) {
            return Err(NumericsError::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(Matrix::scalar(1.0));

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let mut send = |target: usize, contrib: Matrix| {
                if !nodes[target].requires_grad {
                    return;
                }
                match &mut grads[target] {
                    Some(acc) => acc
                        .add_assign(&contrib)
                        .expect("gradient shape matches its node"),
                    slot @ None => *slot = Some(contrib),
                }
            };
            match &node.op {
                Op::Leaf => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let av = &nodes[*a].value;
                    let bv = &nodes[*b].value;
                    if nodes[*a].requires_grad {
                        send(*a, g.matmul(&bv.transpose())?);
                    }
                    if nodes[*b].requires_grad {
                        send(*b, av.transpose().matmul(&g)?);
                    }
                }
                Op::Add(a, b) => {
                    send(*a, unbroadcast(g.clone(), nodes[*a].value.shape()));
                    send(*b, unbroadcast(g, nodes[*b].value.shape()));
                }
                Op::Sub(a, b) => {
                    send(*a, unbroadcast(g.clone(), nodes[*a].value.shape()));
                    send(*b, unbroadcast(g.scale(-1.0), nodes[*b].value.shape()));
                }
                Op::Mul(a, b) => {
                    let av = &nodes[*a].value;
                    let bv = &nodes[*b].value;
                    if nodes[*a].requires_grad {
                        let ga = broadcast_apply("mul", &g, bv, |x, y| x * y)?;
                        send(*a, unbroadcast(ga, av.shape()));
                    }
                    if nodes[*b].requires_grad {
                        let gb = broadcast_apply("mul", &g, av, |x, y| x * y)?;
                        send(*b, unbroadcast(gb, bv.shape()));
                    }
                }
                Op::Scale(a, c) => send(*a, g.scale(*c)),
                Op::AddScalar(a) => send(*a, g),
                Op::Sigmoid(a) => {
                    let x = &nodes[*a].value;
                    let s = &node.value;
                    let d = Matrix::from_fn(x.rows(), x.cols(), |i, j| {
                        if x[(i, j)].abs() > SIGMOID_CLAMP {
                            0.0
                        } else {
                            s[(i, j)] * (1.0 - s[(i, j)])
                        }
                    });
                    send(*a, g.zip_map(&d, "sigmoid", |x, y| x * y)?);
                }
                Op::Relu(a) => {
                    let x = &nodes[*a].value;
                    send(
                        *a,
                        g.zip_map(x, "relu", |gv, xv| if xv > 0.0 { gv } else { 0.0 })?,
                    );
                }
                Op::Softplus(a) => send(
                    *a,
                    g.zip_map(&nodes[*a].value, "softplus", |gv, x| gv / (1.0 + (-x).exp()))?,
                ),
                Op::Exp(a) => send(*a, g.zip_map(&node.value, "exp", |x, y| x * y)?),
                Op::Log(a) => {
                    let x = &nodes[*a].value;
                    send(
                        *a,
                        g.zip_map(x, "log", |gv, xv| if xv < LOG_EPS { 0.0 } else { gv / xv })?,
                    );
                }
                Op::Clamp(a, lo, hi) => {
                    let x = &nodes[*a].value;
                    send(
                        *a,
                        g.zip_map(x, "clamp", |gv, xv| {
                            if xv < *lo || xv > *hi {
                                0.0
                            } else {
                                gv
                            }
                        })?,
                    );
                }
                Op::Transpose(a) => send(*a, g.transpose()),
                Op::Sum(a) => {
                    let (r, c) = nodes[*a].value.shape();
                    send(*a, Matrix::filled(r, c, g[(0, 0)]));
                }
                Op::Mean(a) => {
                    let (r, c) = nodes[*a].value.shape();
                    let n = (r * c).max(1) as f64;
                    send(*a, Matrix::filled(r, c, g[(0, 0)] / n));
                }
                Op::HCat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let cols = nodes[p].value.cols();
                        let slice = Matrix::from_fn(g.rows(), cols, |i, j| g[(i, offset + j)]);
                        send(p, slice);
                        offset += cols;
                    }
                }
            }
        }

        let by_id = grads
            .into_iter()
            .enumerate()
            .filter_map(|(id, g)| match (&nodes[id].op, g) {
                (Op::Leaf, Some(g)) if nodes[id].requires_grad => Some((id, g)),
                _ => None,
            })
            .collect();
        let out = Gradients {
            generation: self.generation.get(),
            by_id,
        };
        nodes.clear();
        self.generation.set(self.generation.get() + 1);
        Ok(out)
    }
}

// `add`, `sub` and `mul` check shapes and return `Result`, so they cannot be
// the std operator traits.
#[allow(clippy::should_implement_trait)]
impl<'t> Var<'t> {
    /// A copy of the current value.
    pub fn value(&self) -> Matrix {
        self.tape.check(self);
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    /// Value of a 1x1 variable.
    pub fn scalar(&self) -> f64 {
        self.tape.check(self);
        let nodes = self.tape.nodes.borrow();
        let v = &nodes[self.id].value;
        assert_eq!(v.shape(), (1, 1), "scalar() on a non-scalar variable");
        v[(0, 0)]
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.check(self);
        self.tape.nodes.borrow()[self.id].value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>, NumericsError> {
        self.tape
            .binary(self, other, Op::MatMul(self.id, other.id), |a, b| a.matmul(b))
    }

    /// Element-wise sum; a 1x1 operand broadcasts.
    pub fn add(self, other: Var<'t>) -> Result<Var<'t>, NumericsError> {
        self.tape.binary(self, other, Op::Add(self.id, other.id), |a, b| {
            broadcast_apply("add", a, b, |x, y| x + y)
        })
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>, NumericsError> {
        self.tape.binary(self, other, Op::Sub(self.id, other.id), |a, b| {
            broadcast_apply("sub", a, b, |x, y| x - y)
        })
    }

    /// Hadamard product; a 1x1 operand broadcasts.
    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>, NumericsError> {
        self.tape.binary(self, other, Op::Mul(self.id, other.id), |a, b| {
            broadcast_apply("mul", a, b, |x, y| x * y)
        })
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.tape.unary(self, Op::Scale(self.id, c), |a| a.scale(c))
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        self.tape
            .unary(self, Op::AddScalar(self.id), |a| a.map(|x| x + c))
    }

    pub fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }

    pub fn square(self) -> Var<'t> {
        self.mul(self).expect("square of a single operand")
    }

    /// Logistic function with the pre-activation clamped to ±30.
    pub fn sigmoid(self) -> Var<'t> {
        self.tape
            .unary(self, Op::Sigmoid(self.id), |a| a.map(clamped_sigmoid))
    }

    /// Rectifier; the subgradient at exactly 0 is taken as 0.
    pub fn relu(self) -> Var<'t> {
        self.tape.unary(self, Op::Relu(self.id), |a| a.map(|x| x.max(0.0)))
    }

    /// `ln(1 + e^x)`, evaluated without overflow; not clamped.
    pub fn softplus(self) -> Var<'t> {
        self.tape.unary(self, Op::Softplus(self.id), |a| {
            a.map(|x| x.max(0.0) + (-x.abs()).exp().ln_1p())
        })
    }

    pub fn exp(self) -> Var<'t> {
        self.tape.unary(self, Op::Exp(self.id), |a| a.map(f64::exp))
    }

    /// Natural log of the input clamped below at `1e-12`.
    pub fn log(self) -> Var<'t> {
        self.tape
            .unary(self, Op::Log(self.id), |a| a.map(|x| x.max(LOG_EPS).ln()))
    }

    pub fn clamp(self, lo: f64, hi: f64) -> Var<'t> {
        self.tape
            .unary(self, Op::Clamp(self.id, lo, hi), |a| a.map(|x| x.clamp(lo, hi)))
    }

    pub fn transpose(self) -> Var<'t> {
        self.tape
            .unary(self, Op::Transpose(self.id), Matrix::transpose)
    }

    pub fn sum(self) -> Var<'t> {
        self.tape
            .unary(self, Op::Sum(self.id), |a| Matrix::scalar(a.sum()))
    }

    pub fn mean(self) -> Var<'t> {
        self.tape.unary(self, Op::Mean(self.id), |a| {
            Matrix::scalar(a.sum() / a.len().max(1) as f64)
        })
    }

    /// Horizontal concatenation of variables on the same tape.
    pub fn hcat(parts: &[Var<'t>]) -> Result<Var<'t>, NumericsError> {
        let tape = parts.first().expect("hcat of zero variables").tape;
        for p in parts {
            tape.check(p);
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let value = {
            let nodes = tape.nodes.borrow();
            let blocks: Vec<&Matrix> = ids.iter().map(|&i| &nodes[i].value).collect();
            Matrix::hcat(&blocks)?
        };
        let rg = tape.requires_grad(&ids);
        Ok(tape.push(value, Op::HCat(ids), rg))
    }
}
