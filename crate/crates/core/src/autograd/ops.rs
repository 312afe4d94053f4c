//! Forward definitions of the operator set.

use super::kernels::{conv_out_len, gemm, ConvShape};
use super::tape::{ConvGeometry, Op, Tape, Var};
use super::tensor::{numel, split_axis, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Relu,
}

impl Tape {
    /// Output shape of an elementwise binary op: equal shapes, or one side
    /// holding a single value.
    fn broadcast_shape(&self, a: Var, b: Var, what: &str) -> Result<Vec<usize>> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb || numel(sb) == 1 {
            Ok(sa.to_vec())
        } else if numel(sa) == 1 {
            Ok(sb.to_vec())
        } else {
            Err(Error::Shape(format!("{what}: {sa:?} vs {sb:?}")))
        }
    }

    fn zip_values(&self, a: Var, b: Var, shape: &[usize], f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let n = numel(shape);
        let pick = |v: &[f64], i: usize| if v.len() == 1 { v[0] } else { v[i] };
        let data = (0..n).map(|i| f(pick(va, i), pick(vb, i))).collect();
        Tensor::new(shape.to_vec(), data).expect("broadcast shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.broadcast_shape(a, b, "add")?;
        let v = self.zip_values(a, b, &shape, |x, y| x + y);
        self.push(v, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.broadcast_shape(a, b, "sub")?;
        let v = self.zip_values(a, b, &shape, |x, y| x - y);
        self.push(v, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.broadcast_shape(a, b, "mul")?;
        let v = self.zip_values(a, b, &shape, |x, y| x * y);
        self.push(v, Op::Mul(a, b), &[a, b])
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.broadcast_shape(a, b, "div")?;
        if self.value(b).data().contains(&0.0) {
            return Err(Error::Numeric("division by zero".into()));
        }
        let v = self.zip_values(a, b, &shape, |x, y| x / y);
        self.push(v, Op::Div(a, b), &[a, b])
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let v = self.value(a).map(|x| x + c);
        self.push(v, Op::AddScalar(a), &[a])
    }

    pub fn mul_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let v = self.value(a).map(|x| x * c);
        self.push(v, Op::MulScalar(a, c), &[a])
    }

    /// `max(a, floor)` elementwise against a constant (single value or same
    /// shape). Ties select the constant, so no gradient flows there.
    pub fn max_with_const(&mut self, a: Var, floor: &Tensor) -> Result<Var> {
        let va = self.value(a);
        if floor.numel() != 1 && floor.shape() != va.shape() {
            return Err(Error::Shape(format!(
                "max_with_const: {:?} vs {:?}",
                va.shape(),
                floor.shape()
            )));
        }
        let f = |i: usize| if floor.numel() == 1 { floor.data()[0] } else { floor.data()[i] };
        let passed: Vec<bool> = va.data().iter().enumerate().map(|(i, &x)| x > f(i)).collect();
        let data = va
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| if passed[i] { x } else { f(i) })
            .collect();
        let v = Tensor::new(va.shape().to_vec(), data)?;
        self.push(v, Op::MaxConst(a, passed), &[a])
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(f64::abs);
        self.push(v, Op::Abs(a), &[a])
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        if self.value(a).data().iter().any(|&x| x < 0.0) {
            return Err(Error::Numeric("sqrt of a negative value".into()));
        }
        let v = self.value(a).map(f64::sqrt);
        self.push(v, Op::Sqrt(a), &[a])
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a), &[a])
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(|x| -x);
        self.push(v, Op::Neg(a), &[a])
    }

    /// `ln(1 + x)`, used to compress spectrogram inputs.
    pub fn ln1p(&mut self, a: Var) -> Result<Var> {
        if self.value(a).data().iter().any(|&x| x <= -1.0) {
            return Err(Error::Numeric("ln1p of a value <= -1".into()));
        }
        let v = self.value(a).map(f64::ln_1p);
        self.push(v, Op::Ln1p(a), &[a])
    }

    pub fn activation(&mut self, kind: Activation, a: Var) -> Result<Var> {
        match kind {
            Activation::Sigmoid => self.sigmoid(a),
            Activation::Relu => self.relu(a),
        }
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(|x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        });
        self.push(v, Op::Sigmoid(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a), &[a])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (m, k, n) = match (&sa[..], &sb[..]) {
            ([m, k], [k2, n]) if k == k2 => (*m, *k, *n),
            _ => return Err(Error::Shape(format!("matmul: {sa:?} x {sb:?}"))),
        };
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), false, &mut out);
        self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), &[a, b])
    }

    pub(crate) fn conv_shape(
        &self,
        input_shape: &[usize],
        kernel_shape: &[usize],
        geom: ConvGeometry,
        what: &str,
    ) -> Result<ConvShape> {
        let [c, h, w] = input_shape[..] else {
            return Err(Error::Shape(format!("{what}: input must be C x H x W, got {input_shape:?}")));
        };
        let [_, kc, kh, kw] = kernel_shape[..] else {
            return Err(Error::Shape(format!("{what}: kernel must be rank 4, got {kernel_shape:?}")));
        };
        if kc != c {
            return Err(Error::Shape(format!(
                "{what}: kernel expects {kc} channels, input has {c}"
            )));
        }
        let out_h = conv_out_len(h, kh, geom.stride.0, geom.padding.0);
        let out_w = conv_out_len(w, kw, geom.stride.1, geom.padding.1);
        match (out_h, out_w) {
            (Some(out_h), Some(out_w)) => Ok(ConvShape {
                channels: c,
                height: h,
                width: w,
                kh,
                kw,
                out_h,
                out_w,
                geom,
            }),
            _ => Err(Error::Shape(format!(
                "{what}: {h}x{w} input with {kh}x{kw} kernel, stride {:?}, padding {:?} gives a non-integral output size",
                geom.stride, geom.padding
            ))),
        }
    }

    fn check_bias(&self, bias: Option<Var>, channels: usize, what: &str) -> Result<()> {
        if let Some(b) = bias {
            if self.shape(b) != [channels] {
                return Err(Error::Shape(format!(
                    "{what}: bias must have shape [{channels}], got {:?}",
                    self.shape(b)
                )));
            }
        }
        Ok(())
    }

    /// Cross-correlation of a `C x H x W` input with `K x C x kh x kw`
    /// kernels, giving `K x H' x W'`.
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Option<Var>, geom: ConvGeometry) -> Result<Var> {
        let cs = self.conv_shape(self.shape(input), self.shape(kernel), geom, "conv2d")?;
        let k = self.shape(kernel)[0];
        self.check_bias(bias, k, "conv2d")?;
        let cols = cs.im2col(self.value(input).data());
        let p = cs.col_cols();
        let mut out = vec![0.0; k * p];
        if let Some(b) = bias {
            for (row, bv) in out.chunks_mut(p).zip(self.value(b).data()) {
                row.fill(*bv);
            }
        }
        gemm(k, cs.col_rows(), p, self.value(kernel).data(), false, &cols, false, &mut out);
        let value = Tensor::new(vec![k, cs.out_h, cs.out_w], out)?;
        let mut inputs = vec![input, kernel];
        inputs.extend(bias);
        self.push(value, Op::Conv2d { input, kernel, bias, geom }, &inputs)
    }

    /// Adjoint of [`Tape::conv2d`]: maps `K x H' x W'` back to `C x H x W`
    /// with `H = (H' - 1) * stride - 2 * pad + kh`.
    pub fn conv_transpose2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        geom: ConvGeometry,
    ) -> Result<Var> {
        let in_shape = self.shape(input).to_vec();
        let k_shape = self.shape(kernel).to_vec();
        let ([k, hp, wp], [k2, c, kh, kw]) = (&in_shape[..], &k_shape[..]) else {
            return Err(Error::Shape(format!(
                "conv_transpose2d: input {in_shape:?}, kernel {k_shape:?}"
            )));
        };
        if k != k2 {
            return Err(Error::Shape(format!(
                "conv_transpose2d: input has {k} channels, kernel expects {k2}"
            )));
        }
        let out_len = |len: usize, kern: usize, s: usize, p: usize| -> Option<usize> {
            ((len - 1) * s + kern).checked_sub(2 * p).filter(|&v| v > 0)
        };
        let (Some(h), Some(w)) = (
            out_len(*hp, *kh, geom.stride.0, geom.padding.0),
            out_len(*wp, *kw, geom.stride.1, geom.padding.1),
        ) else {
            return Err(Error::Shape("conv_transpose2d: empty output".into()));
        };
        let cs = self.conv_shape(&[*c, h, w], &[*k, *c, *kh, *kw], geom, "conv_transpose2d")?;
        if (cs.out_h, cs.out_w) != (*hp, *wp) {
            return Err(Error::Shape("conv_transpose2d: geometry mismatch".into()));
        }
        self.check_bias(bias, *c, "conv_transpose2d")?;
        let p = cs.col_cols();
        let mut cols = vec![0.0; cs.col_rows() * p];
        gemm(cs.col_rows(), *k, p, self.value(kernel).data(), true, self.value(input).data(), false, &mut cols);
        let mut out = cs.col2im(&cols);
        if let Some(b) = bias {
            for (plane, bv) in out.chunks_mut(h * w).zip(self.value(b).data()) {
                plane.iter_mut().for_each(|v| *v += bv);
            }
        }
        let value = Tensor::new(vec![*c, h, w], out)?;
        let mut inputs = vec![input, kernel];
        inputs.extend(bias);
        self.push(value, Op::ConvTranspose2d { input, kernel, bias, geom }, &inputs)
    }

    /// Max over non-overlapping windows of `factor` rows along the frequency
    /// axis of a `C x F x T` tensor. Ties route the gradient to the lowest index.
    pub fn pool_freq(&mut self, input: Var, factor: usize) -> Result<Var> {
        let shape = self.shape(input).to_vec();
        let [c, f, t] = shape[..] else {
            return Err(Error::Shape(format!("pool_freq: expected C x F x T, got {shape:?}")));
        };
        if factor == 0 || f % factor != 0 {
            return Err(Error::Shape(format!(
                "pool_freq: {f} frequency rows not divisible by {factor}"
            )));
        }
        let fo = f / factor;
        let x = self.value(input).data();
        let mut out = vec![0.0; c * fo * t];
        let mut argmax = vec![0; c * fo * t];
        for ch in 0..c {
            for g in 0..fo {
                for tt in 0..t {
                    let mut best = (ch * f + g * factor) * t + tt;
                    for r in 1..factor {
                        let idx = (ch * f + g * factor + r) * t + tt;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                    let o = (ch * fo + g) * t + tt;
                    out[o] = x[best];
                    argmax[o] = best;
                }
            }
        }
        let value = Tensor::new(vec![c, fo, t], out)?;
        self.push(value, Op::PoolFreq { input, argmax }, &[input])
    }

    /// Nearest-neighbour repetition of every entry `factor` times along `axis`.
    pub fn upsample(&mut self, input: Var, axis: usize, factor: usize) -> Result<Var> {
        let shape = self.shape(input).to_vec();
        if axis >= shape.len() || factor == 0 {
            return Err(Error::Shape(format!(
                "upsample: axis {axis} factor {factor} on {shape:?}"
            )));
        }
        let (outer, dim, inner) = split_axis(&shape, axis);
        let x = self.value(input).data();
        let mut out = Vec::with_capacity(x.len() * factor);
        for o in 0..outer {
            for d in 0..dim {
                let row = &x[(o * dim + d) * inner..(o * dim + d + 1) * inner];
                for _ in 0..factor {
                    out.extend_from_slice(row);
                }
            }
        }
        let mut new_shape = shape;
        new_shape[axis] *= factor;
        self.push(Tensor::new(new_shape, out)?, Op::Upsample { input, axis, factor }, &[input])
    }

    /// Repeats the last axis of a `C x F x T` tensor.
    pub fn upsample_time(&mut self, input: Var, factor: usize) -> Result<Var> {
        if self.shape(input).len() != 3 {
            return Err(Error::Shape("upsample_time expects C x F x T".into()));
        }
        self.upsample(input, 2, factor)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        if v.numel() == 0 {
            return Err(Error::Shape("mean of an empty tensor".into()));
        }
        let s: f64 = v.data().iter().sum::<f64>() / v.numel() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a), &[a])
    }

    fn reduce_axis(&self, a: Var, axis: usize, f: impl Fn(&[f64]) -> f64) -> Result<Tensor> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(Error::Shape(format!("axis {axis} out of range for {shape:?}")));
        }
        let (outer, dim, inner) = split_axis(&shape, axis);
        let x = self.value(a).data();
        let mut buf = vec![0.0; dim];
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                for (d, slot) in buf.iter_mut().enumerate() {
                    *slot = x[(o * dim + d) * inner + i];
                }
                out[o * inner + i] = f(&buf);
            }
        }
        let mut new_shape = shape;
        new_shape[axis] = 1;
        Tensor::new(new_shape, out)
    }

    /// Sum along `axis`, keeping it with extent 1.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let v = self.reduce_axis(a, axis, |s| s.iter().sum())?;
        self.push(v, Op::SumAxis(a, axis), &[a])
    }

    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let v = self.reduce_axis(a, axis, |s| s.iter().sum::<f64>() / s.len() as f64)?;
        self.push(v, Op::MeanAxis(a, axis), &[a])
    }

    pub fn l2_norm(&mut self, a: Var) -> Result<Var> {
        let s: f64 = self.value(a).data().iter().map(|v| v * v).sum();
        self.push(Tensor::scalar(s.sqrt()), Op::L2Norm(a), &[a])
    }

    pub fn l2_norm_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let v = self.reduce_axis(a, axis, |s| s.iter().map(|v| v * v).sum::<f64>().sqrt())?;
        self.push(v, Op::L2NormAxis(a, axis), &[a])
    }

    pub fn concat(&mut self, a: Var, b: Var, axis: usize) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let compatible = sa.len() == sb.len()
            && axis < sa.len()
            && sa.iter().zip(&sb).enumerate().all(|(i, (x, y))| i == axis || x == y);
        if !compatible {
            return Err(Error::Shape(format!("concat on axis {axis}: {sa:?} vs {sb:?}")));
        }
        let (outer, da, inner) = split_axis(&sa, axis);
        let db = sb[axis];
        let (xa, xb) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(xa.len() + xb.len());
        for o in 0..outer {
            out.extend_from_slice(&xa[o * da * inner..(o + 1) * da * inner]);
            out.extend_from_slice(&xb[o * db * inner..(o + 1) * db * inner]);
        }
        let mut shape = sa;
        shape[axis] += db;
        self.push(Tensor::new(shape, out)?, Op::Concat { a, b, axis }, &[a, b])
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&mut self, input: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(input).to_vec();
        if axis >= shape.len() || start + len > shape[axis] || len == 0 {
            return Err(Error::Shape(format!(
                "narrow {start}..{} on axis {axis} of {shape:?}",
                start + len
            )));
        }
        let (outer, dim, inner) = split_axis(&shape, axis);
        let x = self.value(input).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * dim + start) * inner;
            out.extend_from_slice(&x[base..base + len * inner]);
        }
        let mut new_shape = shape;
        new_shape[axis] = len;
        self.push(Tensor::new(new_shape, out)?, Op::Narrow { input, axis, start }, &[input])
    }

    /// Splits the two halves of a concatenation back apart.
    pub fn split(&mut self, input: Var, axis: usize, first: usize) -> Result<(Var, Var)> {
        let dim = *self
            .shape(input)
            .get(axis)
            .ok_or_else(|| Error::Shape(format!("split axis {axis} out of range")))?;
        let a = self.narrow(input, axis, 0, first)?;
        let b = self.narrow(input, axis, first, dim - first)?;
        Ok((a, b))
    }

    /// Overlapping windows of `len` columns from an `I x M` matrix, stacked
    /// as `(M - len + 1) x I x len`.
    pub fn segment(&mut self, input: Var, len: usize) -> Result<Var> {
        let shape = self.shape(input).to_vec();
        let [rows, cols] = shape[..] else {
            return Err(Error::Shape(format!("segment expects a matrix, got {shape:?}")));
        };
        if len == 0 || cols < len {
            return Err(Error::Shape(format!("segment of {len} columns from {cols}")));
        }
        let count = cols - len + 1;
        let x = self.value(input).data();
        let mut out = Vec::with_capacity(count * rows * len);
        for j in 0..count {
            for i in 0..rows {
                out.extend_from_slice(&x[i * cols + j..i * cols + j + len]);
            }
        }
        self.push(Tensor::new(vec![count, rows, len], out)?, Op::Segment { input, len }, &[input])
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(input).clone().reshaped(shape)?;
        self.push(v, Op::Reshape(input), &[input])
    }
}
