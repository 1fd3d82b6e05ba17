use rand::Rng;
use rand_distr::StandardNormal;

use super::gradcheck::check;
use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng;

fn rand_matrix(m: usize, n: usize, seed: u64) -> Tensor {
    let mut r = rng::stream(seed);
    Tensor::matrix(m, n, (0..m * n).map(|_| r.sample(StandardNormal)).collect()).unwrap()
}

/// Contracts `y` against fixed random weights so every output element gets a
/// distinct upstream gradient.
fn project(tape: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let (m, n) = tape.value(y).dims2()?;
    let w = tape.constant(rand_matrix(m, n, seed));
    let p = tape.mul(y, w)?;
    Ok(tape.sum(p))
}

fn assert_grads<F>(inputs: &[Tensor], f: F)
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let r = check(inputs, f, 1e-5, 1e-8).unwrap();
    assert!(r.max_rel_err < 1e-4, "{r:?}");
}

#[test]
fn matmul_examples() {
    let mut t = Tape::new();
    let m = rand_matrix(3, 4, 1);
    let i = t.constant(Tensor::eye(3));
    let mv = t.constant(m.clone());
    let y = t.matmul(i, mv).unwrap();
    assert_eq!(t.value(y), &m);
    let a = t.constant(Tensor::matrix(1, 1, vec![2.0]).unwrap());
    let b = t.constant(Tensor::matrix(1, 1, vec![3.0]).unwrap());
    let y = t.matmul(a, b).unwrap();
    assert_eq!(t.value(y).data(), &[6.0]);
    let err = t.matmul(mv, mv).unwrap_err();
    assert!(matches!(&err, Error::Dimension(msg) if msg.contains("[3, 4]")), "{err}");
}

#[test]
fn matmul_gradients() {
    assert_grads(&[rand_matrix(4, 5, 2), rand_matrix(5, 3, 3)], |t, v| {
        let y = t.matmul(v[0], v[1])?;
        project(t, y, 4)
    });
    let r = check(
        &[rand_matrix(4, 5, 2), rand_matrix(5, 3, 3)],
        |t, v| {
            let y = t.matmul(v[0], v[1])?;
            project(t, y, 4)
        },
        1e-5,
        1e-8,
    )
    .unwrap();
    assert!(r.max_rel_err < 1e-6, "{r:?}");
    assert_grads(&[rand_matrix(4, 5, 5), rand_matrix(3, 5, 6)], |t, v| {
        let y = t.matmul_t(v[0], v[1])?;
        project(t, y, 7)
    });
}

#[test]
fn elementwise_gradients() {
    let (a, b) = (rand_matrix(3, 4, 8), rand_matrix(3, 4, 9));
    let row = rand_matrix(1, 4, 10);
    assert_grads(&[a.clone(), b.clone()], |t, v| {
        let s = t.add(v[0], v[1])?;
        let d = t.sub(s, v[1])?;
        let d = t.sub(d, v[1])?;
        let p = t.mul(d, v[0])?;
        let p = t.scale(p, -1.5);
        project(t, p, 11)
    });
    assert_grads(&[a.clone(), row.clone()], |t, v| {
        let y = t.add_row(v[0], v[1])?;
        let y = t.mul_row(y, v[1])?;
        project(t, y, 12)
    });
    assert_grads(&[a], |t, v| {
        let y = t.gelu(v[0]);
        project(t, y, 13)
    });
}

#[test]
fn softmax_examples() {
    let mut t = Tape::new();
    let z = t.constant(Tensor::row(vec![0.0, 0.0, 0.0]));
    let y = t.softmax(z, 1).unwrap();
    assert!(t.value(y).data().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
    let big = t.constant(Tensor::row(vec![1000.0, 0.0]));
    let y = t.softmax(big, 1).unwrap();
    assert_eq!(t.value(y).data(), &[1.0, 0.0]);

    let x = t.constant(rand_matrix(3, 7, 14));
    let y = t.softmax(x, 1).unwrap();
    for row in t.value(y).data().chunks(7) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let y = t.softmax(x, 0).unwrap();
    let d = t.value(y).data();
    for c in 0..7 {
        assert!(((0..3).map(|r| d[r * 7 + c]).sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let nan = t.constant(Tensor::row(vec![f64::NAN, 0.0]));
    let y = t.softmax(nan, 1).unwrap();
    assert!(t.value(y).data().iter().any(|v| v.is_nan()));
}

#[test]
fn softmax_gradients() {
    for axis in [0, 1] {
        assert_grads(&[rand_matrix(5, 6, 15 + axis as u64)], |t, v| {
            let y = t.softmax(v[0], axis)?;
            project(t, y, 17)
        });
    }
}

#[test]
fn layer_norm_examples() {
    let mut t = Tape::new();
    let c = t.constant(Tensor::row(vec![2.0; 5]));
    let y = t.layer_norm(c, None, None, 1e-5).unwrap();
    assert!(t.value(y).data().iter().all(|v| *v == 0.0));
    let x = t.constant(Tensor::row(vec![1.0, -1.0]));
    let y = t.layer_norm(x, None, None, 1e-5).unwrap();
    let expect = 1.0 / (1.0f64 + 1e-5).sqrt();
    assert_eq!(t.value(y).data(), &[expect, -expect]);
}

#[test]
fn layer_norm_gradients() {
    let x = rand_matrix(4, 6, 18);
    let r = check(
        &[x.clone(), rand_matrix(1, 6, 19), rand_matrix(1, 6, 20)],
        |t, v| {
            let y = t.layer_norm(v[0], Some(v[1]), Some(v[2]), 1e-5)?;
            project(t, y, 21)
        },
        1e-5,
        1e-8,
    )
    .unwrap();
    assert!(r.max_rel_err < 1e-5, "{r:?}");
    assert_grads(&[x], |t, v| {
        let y = t.layer_norm(v[0], None, None, 1e-5)?;
        project(t, y, 22)
    });
}

#[test]
fn structural_ops() {
    let mut t = Tape::new();
    let a = t.constant(rand_matrix(2, 3, 23));
    let b = t.constant(rand_matrix(2, 5, 24));
    let c = t.concat(&[a, b], 1).unwrap();
    assert_eq!(t.value(c).shape(), &[2, 8]);
    assert!(t.concat(&[a, b], 0).is_err());
    assert!(t.concat(&[], 0).is_err());
    let s = t.slice(c, 1, 3, 5).unwrap();
    assert_eq!(t.value(s), t.value(b));
    assert!(t.slice(c, 0, 1, 2).is_err());
    let tr = t.transpose(a).unwrap();
    assert_eq!(t.value(tr).shape(), &[3, 2]);
    assert_eq!(t.value(tr).data()[1], t.value(a).data()[3]);
    let g = t.gather(b, &[1, 1, 0]).unwrap();
    assert_eq!(t.value(g).shape(), &[3, 5]);
    assert!(t.gather(b, &[2]).is_err());
    let z = t.constant(Tensor::scalar(0.0));
    let gz = t.gelu(z);
    assert_eq!(t.value(gz).data(), &[0.0]);
}

#[test]
fn structural_gradients() {
    assert_grads(&[rand_matrix(3, 2, 25), rand_matrix(3, 4, 26), rand_matrix(5, 2, 27)], |t, v| {
        let c = t.concat(&[v[0], v[1]], 1)?;
        let s = t.slice(c, 1, 1, 4)?;
        let r = t.concat(&[v[0], v[2]], 0)?;
        let rs = t.slice(r, 0, 2, 4)?;
        let p = t.matmul(s, rs)?;
        let p = t.transpose(p)?;
        let y = t.gather(p, &[1, 0, 1])?;
        project(t, y, 28)
    });
}

#[test]
fn gather_repeats_accumulate() {
    let mut t = Tape::new();
    let x = t.param(rand_matrix(2, 3, 29));
    let y = t.gather(x, &[0, 0]).unwrap();
    let w = t.constant(Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 10.0, 20.0, 30.0]).unwrap());
    let p = t.mul(y, w).unwrap();
    let l = t.sum(p);
    let g = t.backward(l).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[11.0, 22.0, 33.0, 0.0, 0.0, 0.0]);
}

#[test]
fn backward_examples_and_errors() {
    let mut t = Tape::new();
    let xv = rand_matrix(2, 3, 30);
    let x = t.param(xv.clone());
    let l = t.sum(x);
    let g = t.backward(l).unwrap();
    assert!(g.get(x).unwrap().data().iter().all(|v| *v == 1.0));
    assert!(matches!(t.backward(l), Err(Error::Tape(_))));

    let mut t = Tape::new();
    let s = t.param(Tensor::scalar(1.7));
    let sq = t.mul(s, s).unwrap();
    let g = t.backward(sq).unwrap();
    assert_eq!(g.get(s).unwrap().data(), &[3.4]);

    let mut t = Tape::new();
    let x = t.param(xv);
    assert!(matches!(t.backward(x), Err(Error::Tape(_))));
}

#[test]
fn forward_replay_is_bit_identical() {
    let run = || {
        let mut t = Tape::new();
        let a = t.param(rand_matrix(6, 8, 31));
        let b = t.param(rand_matrix(8, 8, 32));
        let h = t.matmul(a, b).unwrap();
        let h = t.layer_norm(h, None, None, 1e-5).unwrap();
        let h = t.gelu(h);
        let h = t.softmax(h, 1).unwrap();
        let l = project(&mut t, h, 33).unwrap();
        let v = t.value(l).item().unwrap();
        let g = t.backward(l).unwrap();
        (v, g.get(a).unwrap().clone())
    };
    assert_eq!(run(), run());
}
