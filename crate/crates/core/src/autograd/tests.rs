use super::*;
use crate::error::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Values bounded away from zero, for ops with a kink there.
fn random_away_from_zero(shape: &[usize], seed: u64) -> Tensor {
    random(shape, seed).map(|v| if v.abs() < 0.05 { v.signum() * 0.05 + v } else { v })
}

/// Weights a tensor by a fixed pseudo-random vector so the scalar loss
/// exercises every output entry differently.
fn weighted_sum(tape: &mut Tape, v: Var, seed: u64) -> Result<Var, Error> {
    let w = random(tape.shape(v), seed);
    let w = tape.constant(w);
    let p = tape.mul(v, w)?;
    tape.sum(p)
}

fn conv_oracle(x: &Tensor, k: &Tensor, stride: usize, pad: usize) -> Tensor {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (ko, kh, kw) = (k.shape()[0], k.shape()[2], k.shape()[3]);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; ko * oh * ow];
    for o in 0..ko {
        for y in 0..oh {
            for xx in 0..ow {
                let mut acc = 0.0;
                for ci in 0..c {
                    for i in 0..kh {
                        for j in 0..kw {
                            let iy = (y * stride + i) as isize - pad as isize;
                            let ix = (xx * stride + j) as isize - pad as isize;
                            if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                acc += x.data()[(ci * h + iy as usize) * w + ix as usize]
                                    * k.data()[((o * c + ci) * kh + i) * kw + j];
                            }
                        }
                    }
                }
                out[(o * oh + y) * ow + xx] = acc;
            }
        }
    }
    t(&[ko, oh, ow], &out)
}

#[test]
fn add_elementwise() {
    let mut tape = Tape::new();
    let a = tape.constant(t(&[2], &[1.0, 2.0]));
    let b = tape.constant(t(&[2], &[3.0, 4.0]));
    let c = tape.add(a, b).unwrap();
    assert_eq!(tape.value(c).data(), &[4.0, 6.0]);
}

#[test]
fn product_rule() {
    let mut tape = Tape::new();
    let a = tape.param(t(&[1], &[2.0]));
    let b = tape.constant(t(&[1], &[3.0]));
    let c = tape.mul(a, b).unwrap();
    let l = tape.sum(c).unwrap();
    tape.backward(l).unwrap();
    assert_eq!(tape.grad(a).unwrap().data(), &[3.0]);
    assert!(tape.grad(b).is_none());
}

#[test]
fn scalar_broadcast_gradients_sum() {
    let mut tape = Tape::new();
    let a = tape.param(t(&[3], &[1.0, 2.0, 3.0]));
    let s = tape.param(Tensor::scalar(2.0));
    let c = tape.mul(a, s).unwrap();
    let l = tape.sum(c).unwrap();
    tape.backward(l).unwrap();
    assert_eq!(tape.grad(s).unwrap().data(), &[6.0]);
    assert_eq!(tape.grad(a).unwrap().data(), &[2.0, 2.0, 2.0]);
}

#[test]
fn elementwise_errors() {
    let mut tape = Tape::new();
    let a = tape.constant(t(&[2], &[1.0, 2.0]));
    let b = tape.constant(t(&[3], &[1.0, 2.0, 3.0]));
    assert!(matches!(tape.add(a, b), Err(Error::Shape(_))));
    let z = tape.constant(t(&[2], &[1.0, 0.0]));
    assert!(matches!(tape.div(a, z), Err(Error::Numeric(_))));
}

#[test]
fn abs_gradient_matches_finite_differences() {
    let x = random_away_from_zero(&[4, 6], 1);
    assert!(x.data().iter().any(|v| *v < 0.0) && x.data().iter().any(|v| *v > 0.0));
    let err = grad_check(|tp, v| { let a = tp.abs(v)?; weighted_sum(tp, a, 2) }, &x, 1e-7).unwrap();
    assert!(err < 1e-5, "{err}");
}

#[test]
fn abs_subgradient_at_zero() {
    let mut tape = Tape::new();
    let x = tape.param(t(&[3], &[-1.0, 0.0, 2.0]));
    let a = tape.abs(x).unwrap();
    let l = tape.sum(a).unwrap();
    tape.backward(l).unwrap();
    assert_eq!(tape.grad(x).unwrap().data(), &[-1.0, 0.0, 1.0]);
}

#[test]
fn elementwise_ops_pass_grad_check() {
    let a = random_away_from_zero(&[3, 4], 3);
    let b = random_away_from_zero(&[3, 4], 4);
    let pos = random(&[3, 4], 5).map(|v| v.abs() + 0.2);
    type BinOp = fn(&mut Tape, Var, Var) -> Result<Var, Error>;
    let binary: [(&str, BinOp); 4] = [
        ("add", |t, a, b| t.add(a, b)),
        ("sub", |t, a, b| t.sub(a, b)),
        ("mul", |t, a, b| t.mul(a, b)),
        ("div", |t, a, b| t.div(a, b)),
    ];
    for (name, op) in binary {
        let err = grad_check_many(
            |tp, v| { let c = op(tp, v[0], v[1])?; weighted_sum(tp, c, 6) },
            &[a.clone(), b.clone()],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{name}: {err}");
    }
    type UnOp = fn(&mut Tape, Var) -> Result<Var, Error>;
    let unary: [(&str, UnOp, &Tensor); 8] = [
        ("sqrt", |t, a| t.sqrt(a), &pos),
        ("square", |t, a| t.square(a), &a),
        ("negate", |t, a| t.neg(a), &a),
        ("ln1p", |t, a| t.ln1p(a), &pos),
        ("sigmoid", |t, a| t.sigmoid(a), &a),
        ("relu", |t, a| t.relu(a), &a),
        ("add_scalar", |t, a| t.add_scalar(a, 0.7), &a),
        ("mul_scalar", |t, a| t.mul_scalar(a, -1.5), &a),
    ];
    for (name, op, x) in unary {
        let err = grad_check(|tp, v| { let c = op(tp, v)?; weighted_sum(tp, c, 7) }, x, 1e-5).unwrap();
        assert!(err < 1e-6, "{name}: {err}");
    }
}

#[test]
fn max_with_const_routes_selected_branch() {
    let mut tape = Tape::new();
    let x = tape.param(t(&[4], &[-1.0, 0.5, 2.0, 1.0]));
    let m = tape.max_with_const(x, &Tensor::scalar(1.0)).unwrap();
    assert_eq!(tape.value(m).data(), &[1.0, 1.0, 2.0, 1.0]);
    let l = tape.sum(m).unwrap();
    tape.backward(l).unwrap();
    // The tie at 1.0 selects the constant.
    assert_eq!(tape.grad(x).unwrap().data(), &[0.0, 0.0, 1.0, 0.0]);

    let floor = random(&[3, 4], 8);
    let x = random(&[3, 4], 9).map(|v| v + 0.01);
    let err = grad_check(|tp, v| { let m = tp.max_with_const(v, &floor)?; weighted_sum(tp, m, 10) }, &x, 1e-6)
        .unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn sqrt_gradient_at_zero_is_zero() {
    let mut tape = Tape::new();
    let x = tape.param(t(&[2], &[0.0, 4.0]));
    let s = tape.sqrt(x).unwrap();
    let l = tape.sum(s).unwrap();
    tape.backward(l).unwrap();
    assert_eq!(tape.grad(x).unwrap().data(), &[0.0, 0.25]);
}

#[test]
fn matmul_identity_and_oracle() {
    let mut tape = Tape::new();
    let eye = tape.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
    let x = tape.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let y = tape.matmul(eye, x).unwrap();
    assert_eq!(tape.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);

    let a = random(&[2, 3], 11);
    let b = random(&[3, 2], 12);
    let av = tape.constant(a.clone());
    let bv = tape.constant(b.clone());
    let c = tape.matmul(av, bv).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            let mut acc = 0.0;
            for k in 0..3 {
                acc += a.data()[i * 3 + k] * b.data()[k * 2 + j];
            }
            assert!((tape.value(c).data()[i * 2 + j] - acc).abs() < 1e-12);
        }
    }
    let e = tape.constant(random(&[2, 2], 13));
    assert!(matches!(tape.matmul(av, e), Err(Error::Shape(_))));
}

#[test]
fn matmul_gradient() {
    let err = grad_check_many(
        |tp, v| { let c = tp.matmul(v[0], v[1])?; weighted_sum(tp, c, 14) },
        &[random(&[3, 5], 15), random(&[5, 4], 16)],
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn conv2d_unit_kernel_is_identity() {
    let mut tape = Tape::new();
    let x = random(&[1, 4, 5], 17);
    let xv = tape.constant(x.clone());
    let k = tape.constant(t(&[1, 1, 1, 1], &[1.0]));
    let y = tape.conv2d(xv, k, None, ConvGeometry::new(1, 0)).unwrap();
    assert_eq!(tape.value(y), &x);
}

#[test]
fn conv2d_sliding_sums() {
    let mut tape = Tape::new();
    let data: Vec<f64> = (1..=9).map(f64::from).collect();
    let x = tape.constant(t(&[1, 3, 3], &data));
    let k = tape.constant(Tensor::full(&[1, 1, 2, 2], 1.0));
    let y = tape.conv2d(x, k, None, ConvGeometry::new(1, 0)).unwrap();
    assert_eq!(tape.value(y).shape(), &[1, 2, 2]);
    assert_eq!(tape.value(y).data(), &[12.0, 16.0, 24.0, 28.0]);
}

#[test]
fn conv2d_matches_loop_oracle() {
    let x = random(&[3, 7, 6], 18);
    let k = random(&[4, 3, 4, 4], 19);
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let kv = tape.constant(k.clone());
    let y = tape.conv2d(xv, kv, None, ConvGeometry::new(2, 1)).unwrap_err();
    assert!(matches!(y, Error::Shape(_)), "7 rows do not tile at stride 2");
    let x = random(&[3, 8, 6], 18);
    let xv = tape.constant(x.clone());
    let y = tape.conv2d(xv, kv, None, ConvGeometry::new(2, 1)).unwrap();
    let oracle = conv_oracle(&x, &k, 2, 1);
    assert_eq!(tape.value(y).shape(), oracle.shape());
    for (a, b) in tape.value(y).data().iter().zip(oracle.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn conv2d_gradient() {
    let err = grad_check_many(
        |tp, v| { let c = tp.conv2d(v[0], v[1], Some(v[2]), ConvGeometry::new(1, 1))?; weighted_sum(tp, c, 20) },
        &[random(&[2, 5, 5], 21), random(&[3, 2, 3, 3], 22), random(&[3], 23)],
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-5, "{err}");
}

#[test]
fn conv_transpose_is_adjoint_of_conv() {
    for (stride, pad, kern, h, w) in [(2, 1, 4, 8, 6), (1, 1, 3, 5, 7), (1, 0, 2, 4, 4)] {
        let geom = ConvGeometry::new(stride, pad);
        let x = random(&[3, h, w], 24);
        let k = random(&[2, 3, kern, kern], 25);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let kv = tape.constant(k);
        let cx = tape.conv2d(xv, kv, None, geom).unwrap();
        let y = random(tape.shape(cx), 26);
        let yv = tape.constant(y.clone());
        let ty = tape.conv_transpose2d(yv, kv, None, geom).unwrap();
        assert_eq!(tape.shape(ty), x.shape());
        let lhs: f64 = tape.value(cx).data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(tape.value(ty).data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    }
}

#[test]
fn conv_transpose_doubles_dims() {
    let mut tape = Tape::new();
    let x = tape.constant(random(&[2, 5, 3], 27));
    let k = tape.constant(random(&[2, 4, 4, 4], 28));
    let y = tape.conv_transpose2d(x, k, None, ConvGeometry::new(2, 1)).unwrap();
    assert_eq!(tape.shape(y), &[4, 10, 6]);
}

#[test]
fn conv_transpose_gradient() {
    let err = grad_check_many(
        |tp, v| {
            let c = tp.conv_transpose2d(v[0], v[1], Some(v[2]), ConvGeometry::new(2, 1))?;
            weighted_sum(tp, c, 29)
        },
        &[random(&[2, 3, 4], 30), random(&[2, 3, 4, 4], 31), random(&[3], 32)],
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-5, "{err}");
}

#[test]
fn pool_freq_examples() {
    let mut tape = Tape::new();
    let x = tape.param(t(&[1, 4, 1], &[4.0, 1.0, 3.0, 2.0]));
    let p = tape.pool_freq(x, 2).unwrap();
    assert_eq!(tape.value(p).data(), &[4.0, 3.0]);

    let c = tape.param(Tensor::full(&[1, 4, 2], 7.0));
    let p = tape.pool_freq(c, 2).unwrap();
    assert_eq!(tape.value(p).data(), &[7.0; 4]);
    let l = tape.sum(p).unwrap();
    tape.backward(l).unwrap();
    assert_eq!(tape.grad(c).unwrap().data(), &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);

    let mut tape = Tape::new();
    let odd = tape.constant(Tensor::zeros(&[1, 5, 2]));
    assert!(matches!(tape.pool_freq(odd, 2), Err(Error::Shape(_))));
}

#[test]
fn pool_freq_gradient() {
    let err = grad_check(|tp, v| { let p = tp.pool_freq(v, 2)?; weighted_sum(tp, p, 33) }, &random(&[2, 6, 5], 34), 1e-6)
        .unwrap();
    assert!(err < 1e-5, "{err}");
}

#[test]
fn upsample_time_examples() {
    let mut tape = Tape::new();
    let x = random(&[2, 3, 4], 35);
    let xv = tape.constant(x.clone());
    let same = tape.upsample_time(xv, 1).unwrap();
    assert_eq!(tape.value(same), &x);
    let ab = tape.constant(t(&[1, 1, 2], &[1.0, 2.0]));
    let up = tape.upsample_time(ab, 2).unwrap();
    assert_eq!(tape.value(up).data(), &[1.0, 1.0, 2.0, 2.0]);
    let err = grad_check(|tp, v| { let u = tp.upsample_time(v, 2)?; weighted_sum(tp, u, 36) }, &x, 1e-5).unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn upsample_other_axes() {
    let mut tape = Tape::new();
    let x = tape.constant(t(&[2, 1], &[1.0, 2.0]));
    let up = tape.upsample(x, 1, 3).unwrap();
    assert_eq!(tape.value(up).data(), &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
    let err = grad_check(|tp, v| { let u = tp.upsample(v, 1, 3)?; weighted_sum(tp, u, 37) }, &random(&[2, 3, 2], 38), 1e-5)
        .unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn activation_examples() {
    let mut tape = Tape::new();
    let z = tape.constant(Tensor::scalar(0.0));
    let s = tape.activation(Activation::Sigmoid, z).unwrap();
    assert_eq!(tape.value(s).data(), &[0.5]);
    let x = tape.param(Tensor::scalar(-3.0));
    let r = tape.relu(x).unwrap();
    assert_eq!(tape.value(r).data(), &[0.0]);
    tape.backward(r).unwrap();
    assert_eq!(tape.grad(x).unwrap().data(), &[0.0]);

    let mut tape = Tape::new();
    let big = tape.constant(t(&[2], &[-800.0, 800.0]));
    let s = tape.sigmoid(big).unwrap();
    assert_eq!(tape.value(s).data(), &[0.0, 1.0]);
}

#[test]
fn reduction_examples() {
    let mut tape = Tape::new();
    let x = tape.constant(t(&[3], &[1.0, 2.0, 3.0]));
    let m = tape.mean(x).unwrap();
    assert_eq!(tape.value(m).data(), &[2.0]);

    let v = tape.param(t(&[2], &[3.0, 4.0]));
    let n = tape.l2_norm(v).unwrap();
    assert_eq!(tape.value(n).data(), &[5.0]);
    tape.backward(n).unwrap();
    let g = tape.grad(v).unwrap();
    assert!((g.data()[0] - 0.6).abs() < 1e-15 && (g.data()[1] - 0.8).abs() < 1e-15);
}

#[test]
fn l2_norm_of_zero_vector_fails_in_backward() {
    let mut tape = Tape::new();
    let v = tape.param(Tensor::zeros(&[3]));
    let n = tape.l2_norm(v).unwrap();
    assert_eq!(tape.value(n).data(), &[0.0]);
    assert!(matches!(tape.backward(n), Err(Error::Numeric(_))));
}

#[test]
fn axis_reductions_match_loops() {
    let x = random(&[3, 4], 39);
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let m0 = tape.mean_axis(xv, 0).unwrap();
    let m1 = tape.mean_axis(xv, 1).unwrap();
    let s1 = tape.sum_axis(xv, 1).unwrap();
    let n1 = tape.l2_norm_axis(xv, 1).unwrap();
    assert_eq!(tape.shape(m0), &[1, 4]);
    assert_eq!(tape.shape(m1), &[3, 1]);
    let at = |i: usize, j: usize| x.data()[i * 4 + j];
    for j in 0..4 {
        let mean = (0..3).map(|i| at(i, j)).sum::<f64>() / 3.0;
        assert!((tape.value(m0).data()[j] - mean).abs() < 1e-15);
    }
    for i in 0..3 {
        let sum: f64 = (0..4).map(|j| at(i, j)).sum();
        let norm = (0..4).map(|j| at(i, j).powi(2)).sum::<f64>().sqrt();
        assert!((tape.value(m1).data()[i] - sum / 4.0).abs() < 1e-15);
        assert!((tape.value(s1).data()[i] - sum).abs() < 1e-15);
        assert!((tape.value(n1).data()[i] - norm).abs() < 1e-15);
    }
    type Red = fn(&mut Tape, Var) -> Result<Var, Error>;
    let reds: [Red; 7] = [
        |t, v| t.sum(v),
        |t, v| t.mean(v),
        |t, v| t.l2_norm(v),
        |t, v| t.sum_axis(v, 0),
        |t, v| t.mean_axis(v, 1),
        |t, v| t.l2_norm_axis(v, 1),
        |t, v| t.l2_norm_axis(v, 0),
    ];
    for (i, r) in reds.into_iter().enumerate() {
        let err = grad_check(|tp, v| { let o = r(tp, v)?; weighted_sum(tp, o, 40) }, &x, 1e-5).unwrap();
        assert!(err < 1e-6, "reduction {i}: {err}");
    }
}

#[test]
fn concat_and_split() {
    let a = random(&[2, 3], 41);
    let b = random(&[2, 5], 42);
    let mut tape = Tape::new();
    let av = tape.param(a.clone());
    let bv = tape.param(b.clone());
    let c = tape.concat(av, bv, 1).unwrap();
    assert_eq!(tape.shape(c), &[2, 8]);
    let (a2, b2) = tape.split(c, 1, 3).unwrap();
    assert_eq!(tape.value(a2), &a);
    assert_eq!(tape.value(b2), &b);

    let w = random(&[2, 8], 43);
    let wv = tape.constant(w.clone());
    let p = tape.mul(c, wv).unwrap();
    let l = tape.sum(p).unwrap();
    tape.backward(l).unwrap();
    let (ga, gb) = (tape.grad(av).unwrap(), tape.grad(bv).unwrap());
    for i in 0..2 {
        assert_eq!(&ga.data()[i * 3..i * 3 + 3], &w.data()[i * 8..i * 8 + 3]);
        assert_eq!(&gb.data()[i * 5..i * 5 + 5], &w.data()[i * 8 + 3..i * 8 + 8]);
    }
    let mut tape = Tape::new();
    let av = tape.constant(a);
    let bad = tape.constant(random(&[3, 5], 44));
    assert!(matches!(tape.concat(av, bad, 1), Err(Error::Shape(_))));
}

#[test]
fn segment_and_reshape_gradients() {
    let x = random(&[3, 7], 45);
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let s = tape.segment(xv, 4).unwrap();
    assert_eq!(tape.shape(s), &[4, 3, 4]);
    assert_eq!(tape.value(s).data()[(2 * 3 + 1) * 4 + 3], x.data()[7 + 2 + 3]);
    let err = grad_check(|tp, v| { let s = tp.segment(v, 4)?; weighted_sum(tp, s, 46) }, &x, 1e-5).unwrap();
    assert!(err < 1e-6, "{err}");
    let err = grad_check(
        |tp, v| { let r = tp.reshape(v, &[7, 3])?; let n = tp.narrow(r, 0, 2, 3)?; weighted_sum(tp, n, 47) },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn backward_examples() {
    let x = random(&[2, 3], 48);
    let mut tape = Tape::new();
    let xv = tape.param(x.clone());
    let l = tape.sum(xv).unwrap();
    tape.backward(l).unwrap();
    assert_eq!(tape.grad(xv).unwrap().data(), &[1.0; 6]);

    let mut tape = Tape::new();
    let xv = tape.param(x.clone());
    let n = tape.l2_norm(xv).unwrap();
    let l = tape.square(n).unwrap();
    tape.backward(l).unwrap();
    for (g, v) in tape.grad(xv).unwrap().data().iter().zip(x.data()) {
        assert!((g - 2.0 * v).abs() < 1e-14);
    }
}

#[test]
fn backward_errors() {
    let mut tape = Tape::new();
    let x = tape.param(random(&[3], 49));
    assert!(matches!(tape.backward(x), Err(Error::Tape(_))));
    let l = tape.sum(x).unwrap();
    tape.backward(l).unwrap();
    assert!(matches!(tape.backward(l), Err(Error::Tape(_))));
    tape.reset_grads();
    tape.backward(l).unwrap();
    assert_eq!(tape.grad(x).unwrap().data(), &[1.0; 3]);
}

#[test]
fn composite_conv_sigmoid_mean() {
    let err = grad_check_many(
        |tp, v| {
            let c = tp.conv2d(v[0], v[1], None, ConvGeometry::new(2, 1))?;
            let s = tp.sigmoid(c)?;
            tp.mean(s)
        },
        &[random(&[2, 6, 8], 50), random(&[3, 2, 4, 4], 51)],
        1e-4,
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn grad_check_of_sum_is_exact() {
    let err = grad_check(|tp, v| tp.sum(v), &random(&[4, 4], 52), 1e-4).unwrap();
    assert!(err < 1e-10, "{err}");
}

#[test]
fn grad_check_rejects_bad_step() {
    assert!(grad_check(|tp, v| tp.sum(v), &random(&[2], 53), 0.0).is_err());
}

#[test]
fn non_finite_values_are_rejected() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::scalar(1e300));
    assert!(matches!(tape.square(x), Err(Error::Numeric(_))));
}

fn composite(tape: &mut Tape, x: Var, which: u8) -> Result<Var, Error> {
    let y = match which {
        0 => {
            let s = tape.sigmoid(x)?;
            tape.mul(s, x)?
        }
        _ => {
            let q = tape.square(x)?;
            tape.mul_scalar(q, 0.3)?
        }
    };
    tape.sum(y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn backward_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let x = random(&[2, 5], seed);
        let grad_of = |f: &dyn Fn(&mut Tape, Var) -> Result<Var, Error>| {
            let mut tape = Tape::new();
            let v = tape.param(x.clone());
            let l = f(&mut tape, v).unwrap();
            tape.backward(l).unwrap();
            tape.grad(v).unwrap()
        };
        let gf = grad_of(&|t, v| composite(t, v, 0));
        let gg = grad_of(&|t, v| composite(t, v, 1));
        let gh = grad_of(&|t, v| {
            let f = composite(t, v, 0)?;
            let g = composite(t, v, 1)?;
            let f = t.mul_scalar(f, a)?;
            let g = t.mul_scalar(g, b)?;
            t.add(f, g)
        });
        for i in 0..x.numel() {
            let expect = a * gf.data()[i] + b * gg.data()[i];
            prop_assert!((gh.data()[i] - expect).abs() < 1e-12 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn tape_is_deterministic(seed in 0u64..1000) {
        let run = || {
            let mut tape = Tape::new();
            let x = tape.param(random(&[2, 4, 4], seed));
            let k = tape.param(random(&[2, 2, 3, 3], seed + 1));
            let c = tape.conv2d(x, k, None, ConvGeometry::new(1, 1)).unwrap();
            let p = tape.pool_freq(c, 2).unwrap();
            let l = tape.l2_norm(p).unwrap();
            tape.backward(l).unwrap();
            (tape.value(l).clone(), tape.grad(x).unwrap(), tape.grad(k).unwrap())
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn random_graphs_pass_grad_check(seed in 0u64..1000) {
        let x = random_away_from_zero(&[2, 4, 6], seed);
        let k = random(&[3, 2, 3, 3], seed + 7);
        let err = grad_check_many(
            |tp, v| {
                let c = tp.conv2d(v[0], v[1], None, ConvGeometry::new(1, 1))?;
                let s = tp.sigmoid(c)?;
                let u = tp.upsample_time(s, 2)?;
                let n = tp.l2_norm_axis(u, 2)?;
                weighted_sum(tp, n, seed + 9)
            },
            &[x, k],
            1e-5,
        ).unwrap();
        prop_assert!(err < 1e-4, "{}", err);
    }
}
