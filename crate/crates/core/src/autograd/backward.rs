//! Local gradient rules, one per operator.

use super::kernels::gemm;
use super::tape::{Op, Tape, Var};
use super::tensor::split_axis;
use crate::error::{Error, Result};

fn zero_norm() -> Error {
    Error::Numeric("gradient of l2_norm at a zero vector".into())
}

/// Gradient flowing into an operand that may have been broadcast from a
/// single value.
fn unbroadcast(tape: &Tape, v: Var, g: Vec<f64>) -> Vec<f64> {
    if tape.value(v).numel() == 1 && g.len() != 1 {
        vec![g.iter().sum()]
    } else {
        g
    }
}

fn bcast(x: &[f64], i: usize) -> f64 {
    if x.len() == 1 {
        x[0]
    } else {
        x[i]
    }
}

fn elementwise(g: &[f64], x: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
    g.iter().zip(x).map(|(g, x)| g * f(*x)).collect()
}

/// Spreads a gradient of a keep-dim reduction back over `axis`, scaling each
/// entry with `f(input, output)`.
fn expand_axis(
    shape: &[usize],
    axis: usize,
    g: &[f64],
    x: &[f64],
    y: &[f64],
    f: impl Fn(f64, f64) -> f64,
) -> Vec<f64> {
    let (outer, dim, inner) = split_axis(shape, axis);
    let mut out = vec![0.0; x.len()];
    for o in 0..outer {
        for d in 0..dim {
            for i in 0..inner {
                let src = (o * dim + d) * inner + i;
                let r = o * inner + i;
                out[src] = g[r] * f(x[src], y[r]);
            }
        }
    }
    out
}

pub(crate) fn local_grads(tape: &Tape, idx: usize, g: &[f64]) -> Result<Vec<(Var, Vec<f64>)>> {
    let node = &tape.nodes[idx];
    let y = node.value.data();
    let val = |v: Var| tape.value(v).data();
    let out = match &node.op {
        Op::Leaf => vec![],
        Op::Add(a, b) => vec![
            (*a, unbroadcast(tape, *a, g.to_vec())),
            (*b, unbroadcast(tape, *b, g.to_vec())),
        ],
        Op::Sub(a, b) => vec![
            (*a, unbroadcast(tape, *a, g.to_vec())),
            (*b, unbroadcast(tape, *b, g.iter().map(|v| -v).collect())),
        ],
        Op::Mul(a, b) => {
            let (xa, xb) = (val(*a), val(*b));
            let ga = g.iter().enumerate().map(|(i, g)| g * bcast(xb, i)).collect();
            let gb = g.iter().enumerate().map(|(i, g)| g * bcast(xa, i)).collect();
            vec![(*a, unbroadcast(tape, *a, ga)), (*b, unbroadcast(tape, *b, gb))]
        }
        Op::Div(a, b) => {
            let (xa, xb) = (val(*a), val(*b));
            let ga = g.iter().enumerate().map(|(i, g)| g / bcast(xb, i)).collect();
            let gb = g
                .iter()
                .enumerate()
                .map(|(i, g)| {
                    let d = bcast(xb, i);
                    -g * bcast(xa, i) / (d * d)
                })
                .collect();
            vec![(*a, unbroadcast(tape, *a, ga)), (*b, unbroadcast(tape, *b, gb))]
        }
        Op::AddScalar(a) | Op::Reshape(a) => vec![(*a, g.to_vec())],
        Op::MulScalar(a, c) => vec![(*a, g.iter().map(|v| v * c).collect())],
        Op::Neg(a) => vec![(*a, g.iter().map(|v| -v).collect())],
        Op::MaxConst(a, passed) => vec![(
            *a,
            g.iter().zip(passed).map(|(g, &p)| if p { *g } else { 0.0 }).collect(),
        )],
        Op::Abs(a) => vec![(*a, elementwise(g, val(*a), |x| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 }))],
        Op::Sqrt(a) => vec![(*a, elementwise(g, y, |s| if s > 0.0 { 0.5 / s } else { 0.0 }))],
        Op::Square(a) => vec![(*a, elementwise(g, val(*a), |x| 2.0 * x))],
        Op::Ln1p(a) => vec![(*a, elementwise(g, val(*a), |x| 1.0 / (1.0 + x)))],
        Op::Sigmoid(a) => vec![(*a, elementwise(g, y, |s| s * (1.0 - s)))],
        Op::Relu(a) => vec![(*a, elementwise(g, val(*a), |x| if x > 0.0 { 1.0 } else { 0.0 }))],
        Op::MatMul(a, b) => {
            let (sa, sb) = (tape.shape(*a), tape.shape(*b));
            let (m, k, n) = (sa[0], sa[1], sb[1]);
            let mut res = Vec::with_capacity(2);
            if tape.requires_grad(*a) {
                let mut ga = vec![0.0; m * k];
                gemm(m, n, k, g, false, val(*b), true, &mut ga);
                res.push((*a, ga));
            }
            if tape.requires_grad(*b) {
                let mut gb = vec![0.0; k * n];
                gemm(k, m, n, val(*a), true, g, false, &mut gb);
                res.push((*b, gb));
            }
            res
        }
        Op::Conv2d { input, kernel, bias, geom } => {
            let cs = tape.conv_shape(tape.shape(*input), tape.shape(*kernel), *geom, "conv2d")?;
            let k = tape.shape(*kernel)[0];
            let (rows, p) = (cs.col_rows(), cs.col_cols());
            let mut res = Vec::with_capacity(3);
            if tape.requires_grad(*kernel) {
                let cols = cs.im2col(val(*input));
                let mut gk = vec![0.0; k * rows];
                gemm(k, p, rows, g, false, &cols, true, &mut gk);
                res.push((*kernel, gk));
            }
            if tape.requires_grad(*input) {
                let mut gcols = vec![0.0; rows * p];
                gemm(rows, k, p, val(*kernel), true, g, false, &mut gcols);
                res.push((*input, cs.col2im(&gcols)));
            }
            if let Some(b) = bias {
                res.push((*b, g.chunks(p).map(|c| c.iter().sum()).collect()));
            }
            res
        }
        Op::ConvTranspose2d { input, kernel, bias, geom } => {
            let out_shape = node.value.shape();
            let cs = tape.conv_shape(out_shape, tape.shape(*kernel), *geom, "conv_transpose2d")?;
            let k = tape.shape(*kernel)[0];
            let (rows, p) = (cs.col_rows(), cs.col_cols());
            let gcols = cs.im2col(g);
            let mut res = Vec::with_capacity(3);
            if tape.requires_grad(*input) {
                let mut gi = vec![0.0; k * p];
                gemm(k, rows, p, val(*kernel), false, &gcols, false, &mut gi);
                res.push((*input, gi));
            }
            if tape.requires_grad(*kernel) {
                let mut gk = vec![0.0; k * rows];
                gemm(k, p, rows, val(*input), false, &gcols, true, &mut gk);
                res.push((*kernel, gk));
            }
            if let Some(b) = bias {
                let plane = out_shape[1] * out_shape[2];
                res.push((*b, g.chunks(plane).map(|c| c.iter().sum()).collect()));
            }
            res
        }
        Op::PoolFreq { input, argmax } => {
            let mut gi = vec![0.0; tape.value(*input).numel()];
            for (gv, &src) in g.iter().zip(argmax) {
                gi[src] += gv;
            }
            vec![(*input, gi)]
        }
        Op::Upsample { input, axis, factor } => {
            let shape = tape.shape(*input);
            let (outer, dim, inner) = split_axis(shape, *axis);
            let mut gi = vec![0.0; outer * dim * inner];
            for o in 0..outer {
                for d in 0..dim {
                    let dst = &mut gi[(o * dim + d) * inner..(o * dim + d + 1) * inner];
                    for r in 0..*factor {
                        let base = ((o * dim + d) * factor + r) * inner;
                        dst.iter_mut().zip(&g[base..base + inner]).for_each(|(a, b)| *a += b);
                    }
                }
            }
            vec![(*input, gi)]
        }
        Op::Sum(a) => vec![(*a, vec![g[0]; tape.value(*a).numel()])],
        Op::Mean(a) => {
            let n = tape.value(*a).numel();
            vec![(*a, vec![g[0] / n as f64; n])]
        }
        Op::SumAxis(a, axis) => {
            vec![(*a, expand_axis(tape.shape(*a), *axis, g, val(*a), y, |_, _| 1.0))]
        }
        Op::MeanAxis(a, axis) => {
            let n = tape.shape(*a)[*axis] as f64;
            vec![(*a, expand_axis(tape.shape(*a), *axis, g, val(*a), y, |_, _| 1.0 / n))]
        }
        Op::L2Norm(a) => {
            let norm = y[0];
            if norm == 0.0 {
                return Err(zero_norm());
            }
            vec![(*a, val(*a).iter().map(|x| g[0] * x / norm).collect())]
        }
        Op::L2NormAxis(a, axis) => {
            if y.iter().zip(g).any(|(n, g)| *n == 0.0 && *g != 0.0) {
                return Err(zero_norm());
            }
            vec![(
                *a,
                expand_axis(tape.shape(*a), *axis, g, val(*a), y, |x, n| if n > 0.0 { x / n } else { 0.0 }),
            )]
        }
        Op::Concat { a, b, axis } => {
            let (sa, sb) = (tape.shape(*a), tape.shape(*b));
            let (outer, da, inner) = split_axis(sa, *axis);
            let db = sb[*axis];
            let mut ga = Vec::with_capacity(outer * da * inner);
            let mut gb = Vec::with_capacity(outer * db * inner);
            let stride = (da + db) * inner;
            for o in 0..outer {
                ga.extend_from_slice(&g[o * stride..o * stride + da * inner]);
                gb.extend_from_slice(&g[o * stride + da * inner..(o + 1) * stride]);
            }
            vec![(*a, ga), (*b, gb)]
        }
        Op::Narrow { input, axis, start } => {
            let shape = tape.shape(*input);
            let (outer, dim, inner) = split_axis(shape, *axis);
            let len = node.value.shape()[*axis];
            let mut gi = vec![0.0; outer * dim * inner];
            for o in 0..outer {
                let base = (o * dim + start) * inner;
                gi[base..base + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            vec![(*input, gi)]
        }
        Op::Segment { input, len } => {
            let (rows, cols) = (tape.shape(*input)[0], tape.shape(*input)[1]);
            let count = cols - len + 1;
            let mut gi = vec![0.0; rows * cols];
            for j in 0..count {
                for i in 0..rows {
                    let src = &g[(j * rows + i) * len..(j * rows + i + 1) * len];
                    gi[i * cols + j..i * cols + j + len]
                        .iter_mut()
                        .zip(src)
                        .for_each(|(a, b)| *a += b);
                }
            }
            vec![(*input, gi)]
        }
    };
    Ok(out)
}
