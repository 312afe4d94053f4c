//! Reverse-mode tape.
//!
//! Every operation appends a node holding its forward value and the record
//! needed to apply its local gradient rule. Nodes are only ever appended, so
//! node order is a topological order and `backward` walks it in reverse.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl ConvGeometry {
    pub fn new(stride: usize, padding: usize) -> Self {
        Self {
            stride: (stride, stride),
            padding: (padding, padding),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddScalar(Var),
    MulScalar(Var, f64),
    /// `passed[i]` is true where the input (not the constant) was selected.
    MaxConst(Var, Vec<bool>),
    Abs(Var),
    Sqrt(Var),
    Square(Var),
    Neg(Var),
    Ln1p(Var),
    Sigmoid(Var),
    Relu(Var),
    MatMul(Var, Var),
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        geom: ConvGeometry,
    },
    ConvTranspose2d {
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        geom: ConvGeometry,
    },
    PoolFreq {
        input: Var,
        argmax: Vec<usize>,
    },
    Upsample {
        input: Var,
        axis: usize,
        factor: usize,
    },
    Sum(Var),
    SumAxis(Var, usize),
    MeanAxis(Var, usize),
    Mean(Var),
    L2Norm(Var),
    L2NormAxis(Var, usize),
    Concat {
        a: Var,
        b: Var,
        axis: usize,
    },
    Narrow {
        input: Var,
        axis: usize,
        start: usize,
    },
    Segment {
        input: Var,
        len: usize,
    },
    Reshape(Var),
}

pub(crate) struct Node {
    pub value: Tensor,
    pub grad: Option<Vec<f64>>,
    pub requires_grad: bool,
    pub op: Op,
}

#[derive(Default)]
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
    backward_done: bool,
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

    /// Trainable input.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite value produced by {}",
                op_name(&op)
            )));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` target with respect to `v`; `None` when
    /// `v` does not require gradients. Nodes the loss does not depend on get
    /// zeros.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let node = &self.nodes[v.0];
        if !node.requires_grad || !self.backward_done {
            return None;
        }
        let data = node
            .grad
            .clone()
            .unwrap_or_else(|| vec![0.0; node.value.numel()]);
        Some(Tensor::new(node.value.shape().to_vec(), data).expect("grad matches value shape"))
    }

    /// Clears gradients so `backward` may run again.
    pub fn reset_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.backward_done = false;
    }

    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::Tape(
                "backward already ran on this tape; reset gradients first".into(),
            ));
        }
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::Tape(format!(
                "loss must be a scalar, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        self.backward_done = true;
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad || matches!(self.nodes[idx].op, Op::Leaf) {
                continue;
            }
            let Some(g) = self.nodes[idx].grad.take() else {
                continue;
            };
            let contributions = super::backward::local_grads(self, idx, &g)?;
            self.nodes[idx].grad = Some(g);
            for (var, delta) in contributions {
                let node = &mut self.nodes[var.0];
                if !node.requires_grad {
                    continue;
                }
                match &mut node.grad {
                    Some(acc) => acc.iter_mut().zip(&delta).for_each(|(a, d)| *a += d),
                    None => node.grad = Some(delta),
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Div(..) => "div",
        Op::AddScalar(..) => "add_scalar",
        Op::MulScalar(..) => "mul_scalar",
        Op::MaxConst(..) => "max_with_const",
        Op::Abs(..) => "abs",
        Op::Sqrt(..) => "sqrt",
        Op::Square(..) => "square",
        Op::Neg(..) => "negate",
        Op::Ln1p(..) => "ln1p",
        Op::Sigmoid(..) => "sigmoid",
        Op::Relu(..) => "relu",
        Op::MatMul(..) => "matmul",
        Op::Conv2d { .. } => "conv2d",
        Op::ConvTranspose2d { .. } => "conv_transpose2d",
        Op::PoolFreq { .. } => "pool_freq",
        Op::Upsample { .. } => "upsample",
        Op::Sum(..) => "sum",
        Op::SumAxis(..) => "sum_axis",
        Op::MeanAxis(..) => "mean_axis",
        Op::Mean(..) => "mean",
        Op::L2Norm(..) => "l2_norm",
        Op::L2NormAxis(..) => "l2_norm_axis",
        Op::Concat { .. } => "concat",
        Op::Narrow { .. } => "narrow",
        Op::Segment { .. } => "segment",
        Op::Reshape(..) => "reshape",
    }
}
