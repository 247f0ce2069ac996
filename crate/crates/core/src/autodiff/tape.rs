//! Define-by-run tape of matrix operations.
//!
//! Every forward pass records onto a fresh [`Tape`]. [`Tape::backward`] walks
//! the record in reverse and accumulates adjoints into the [`ParamStore`]
//! leaves it finds.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Matrix, ParamId, ParamStore};
use crate::error::{shape_err, Error, Result};

/// Node handle on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Nonlinearities available to encoders.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    /// Row-wise softmax.
    #[serde(alias = "softmax")]
    SoftmaxRows,
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Self::Relu),
            "tanh" => Ok(Self::Tanh),
            "sigmoid" => Ok(Self::Sigmoid),
            "softmax" | "softmax-rows" => Ok(Self::SoftmaxRows),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Relu => "relu",
            Self::Tanh => "tanh",
            Self::Sigmoid => "sigmoid",
            Self::SoftmaxRows => "softmax-rows",
        })
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^v)` without overflow.
pub fn softplus(v: f64) -> f64 {
    if v > 0.0 {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

fn softmax_row(row: &[f64], out: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v - max).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

/// Applies an activation outside of any tape.
pub fn activation(x: &Matrix, kind: Activation) -> Matrix {
    match kind {
        Activation::Relu => x.map(|v| v.max(0.0)),
        Activation::Tanh => x.map(f64::tanh),
        Activation::Sigmoid => x.map(sigmoid),
        Activation::SoftmaxRows => {
            let mut out = Matrix::zeros(x.rows(), x.cols());
            for r in 0..x.rows() {
                softmax_row(x.row(r), out.row_mut(r));
            }
            out
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Unary {
    Exp,
    Square,
    Abs,
    Softplus,
    Clamp(f64, f64),
    Scale(f64),
    Shift(f64),
}

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRowBias(Var, Var),
    Activation(Var, Activation),
    Unary(Var, Unary),
    RowSum(Var),
    Sum(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    LogSumExpRows(Var),
}

struct Node {
    value: Matrix,
    op: Op,
}

/// Ordered record of the primitive operations of one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant)
    }

    /// Records a parameter leaf; its adjoint flows into the store on backward.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    /// Adds a `1 x k` row to every row of an `n x k` matrix. The only broadcast supported.
    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (x, b) = (self.value(a), self.value(bias));
        if b.rows() != 1 || b.cols() != x.cols() {
            return Err(shape_err("add_row_bias", x.shape(), b.shape()));
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (o, bv) in out.row_mut(r).iter_mut().zip(b.data()) {
                *o += bv;
            }
        }
        Ok(self.push(out, Op::AddRowBias(a, bias)))
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Var {
        let v = activation(self.value(a), kind);
        self.push(v, Op::Activation(a, kind))
    }

    fn unary(&mut self, a: Var, u: Unary) -> Var {
        let x = self.value(a);
        let v = match u {
            Unary::Exp => x.map(f64::exp),
            Unary::Square => x.map(|v| v * v),
            Unary::Abs => x.map(f64::abs),
            Unary::Softplus => x.map(softplus),
            Unary::Clamp(lo, hi) => x.map(|v| v.clamp(lo, hi)),
            Unary::Scale(s) => x.scale(s),
            Unary::Shift(s) => x.map(|v| v + s),
        };
        self.push(v, Op::Unary(a, u))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Exp)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Square)
    }

    /// Absolute value; the subgradient at zero is taken as zero.
    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Abs)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Softplus)
    }

    /// Clamps into `[lo, hi]`; gradient is zero outside the interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, Unary::Clamp(lo, hi))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, Unary::Scale(s))
    }

    pub fn shift(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, Unary::Shift(s))
    }

    /// `n x k -> n x 1`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let v = Matrix::from_fn(x.rows(), 1, |r, _| x.row(r).iter().sum());
        self.push(v, Op::RowSum(a))
    }

    /// Sum of all entries, `1 x 1`.
    pub fn sum(&mut self, a: Var) -> Var {
        let v = Matrix::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).data().len().max(1) as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let v = self.value(a).slice_cols(start, end)?;
        Ok(self.push(v, Op::SliceCols(a, start)))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Matrix::concat_cols(&mats)?;
        Ok(self.push(v, Op::ConcatCols(parts.to_vec())))
    }

    /// Row-wise `ln Σ_j exp(x_ij)`, `n x k -> n x 1`.
    pub fn log_sum_exp_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let v = Matrix::from_fn(x.rows(), 1, |r, _| {
            let row = x.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
        });
        self.push(v, Op::LogSumExpRows(a))
    }

    /// Reverse sweep from a `1 x 1` output. Parameter gradients in `store`
    /// are zeroed first, then filled with d(output)/d(param).
    pub fn backward(&self, output: Var, store: &mut ParamStore) -> Result<()> {
        let out = self.value(output);
        if out.shape() != (1, 1) {
            return Err(shape_err("backward", out.shape(), (1, 1)));
        }
        store.zero_grads();
        let mut grads: Vec<Option<Matrix>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Matrix::scalar(1.0));

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => store.accumulate_grad(*id, &g),
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(self.value(*b))?;
                    let gb = self.value(*a).t_matmul(&g)?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.scale(-1.0));
                }
                Op::Mul(a, b) => {
                    let ga = g.hadamard(self.value(*b))?;
                    let gb = g.hadamard(self.value(*a))?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddRowBias(a, bias) => {
                    let gb = g.column_sums();
                    accumulate(&mut grads, *a, g);
                    accumulate(&mut grads, *bias, gb);
                }
                Op::Activation(a, kind) => {
                    let y = &node.value;
                    let ga = match kind {
                        Activation::Relu => {
                            g.zip_map(self.value(*a), "relu'", |g, x| if x > 0.0 { g } else { 0.0 })?
                        }
                        Activation::Tanh => g.zip_map(y, "tanh'", |g, y| g * (1.0 - y * y))?,
                        Activation::Sigmoid => g.zip_map(y, "sigmoid'", |g, y| g * y * (1.0 - y))?,
                        Activation::SoftmaxRows => {
                            let mut ga = Matrix::zeros(y.rows(), y.cols());
                            for r in 0..y.rows() {
                                let (yr, gr) = (y.row(r), g.row(r));
                                let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                                for ((o, &yv), &gv) in ga.row_mut(r).iter_mut().zip(yr).zip(gr) {
                                    *o = yv * (gv - dot);
                                }
                            }
                            ga
                        }
                    };
                    accumulate(&mut grads, *a, ga);
                }
                Op::Unary(a, u) => {
                    let x = self.value(*a);
                    let y = &node.value;
                    let ga = match *u {
                        Unary::Exp => g.hadamard(y)?,
                        Unary::Square => g.zip_map(x, "square'", |g, x| 2.0 * g * x)?,
                        Unary::Abs => g.zip_map(x, "abs'", |g, x| {
                            if x > 0.0 {
                                g
                            } else if x < 0.0 {
                                -g
                            } else {
                                0.0
                            }
                        })?,
                        Unary::Softplus => g.zip_map(x, "softplus'", |g, x| g * sigmoid(x))?,
                        Unary::Clamp(lo, hi) => {
                            g.zip_map(x, "clamp'", |g, x| if x >= lo && x <= hi { g } else { 0.0 })?
                        }
                        Unary::Scale(s) => g.scale(s),
                        Unary::Shift(_) => g,
                    };
                    accumulate(&mut grads, *a, ga);
                }
                Op::RowSum(a) => {
                    let cols = self.value(*a).cols();
                    let ga = Matrix::from_fn(g.rows(), cols, |r, _| g.get(r, 0));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let (r, c) = self.shape(*a);
                    accumulate(&mut grads, *a, Matrix::filled(r, c, g.get(0, 0)));
                }
                Op::SliceCols(a, start) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = Matrix::zeros(r, c);
                    for row in 0..r {
                        ga.row_mut(row)[*start..*start + g.cols()].copy_from_slice(g.row(row));
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        accumulate(&mut grads, p, g.slice_cols(offset, offset + w)?);
                        offset += w;
                    }
                }
                Op::LogSumExpRows(a) => {
                    let x = self.value(*a);
                    let mut ga = Matrix::zeros(x.rows(), x.cols());
                    for r in 0..x.rows() {
                        let lse = node.value.get(r, 0);
                        let gr = g.get(r, 0);
                        for (o, &xv) in ga.row_mut(r).iter_mut().zip(x.row(r)) {
                            *o = gr * (xv - lse).exp();
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
