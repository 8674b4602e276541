#![allow(dead_code)]

use deftan_numerics::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut r = rng(seed);
    Tensor::from_fn(shape, |_| r.gen_range(-1.0..1.0))
}

/// Random values bounded away from zero, so kinks at 0 are not crossed by
/// finite differences.
pub fn random_away_from_zero(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut r = rng(seed);
    Tensor::from_fn(shape, |_| {
        let m = r.gen_range(0.1..1.0);
        if r.gen_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// Brute-force zero-padded "same" 2-D cross-correlation.
pub fn conv2d_oracle(x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64]) -> Tensor<f64> {
    let (ci_n, f_n, t_n) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (co_n, kf, kt) = (w.shape()[0], w.shape()[2], w.shape()[3]);
    Tensor::from_fn(&[co_n, f_n, t_n], |idx| {
        let co = idx / (f_n * t_n);
        let f = (idx / t_n) % f_n;
        let t = idx % t_n;
        let mut acc = b[co];
        for ci in 0..ci_n {
            for i in 0..kf {
                for j in 0..kt {
                    let fi = f as isize + i as isize - (kf / 2) as isize;
                    let ti = t as isize + j as isize - (kt / 2) as isize;
                    if fi >= 0 && ti >= 0 && (fi as usize) < f_n && (ti as usize) < t_n {
                        acc += w.at(&[co, ci, i, j]) * x.at(&[ci, fi as usize, ti as usize]);
                    }
                }
            }
        }
        acc
    })
}

/// Brute-force depthwise dilated 1-D cross-correlation on `(C, T)`.
pub fn dd_conv1d_oracle(x: &Tensor<f64>, w: &Tensor<f64>, dilation: usize) -> Tensor<f64> {
    let (c_n, t_n) = (x.shape()[0], x.shape()[1]);
    let k = w.shape()[1];
    Tensor::from_fn(&[c_n, t_n], |idx| {
        let (c, t) = (idx / t_n, idx % t_n);
        (0..k)
            .filter_map(|j| {
                let ti = t as isize + (j as isize - (k / 2) as isize) * dilation as isize;
                (ti >= 0 && (ti as usize) < t_n).then(|| w.at(&[c, j]) * x.at(&[c, ti as usize]))
            })
            .sum()
    })
}

/// Brute-force `x W^T + b` on the last axis.
pub fn linear_oracle(x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64]) -> Vec<f64> {
    let (e_out, e_in) = (w.shape()[0], w.shape()[1]);
    let rows = x.numel() / e_in;
    let mut out = Vec::new();
    for r in 0..rows {
        for o in 0..e_out {
            let mut acc = b[o];
            for i in 0..e_in {
                acc += x.data()[r * e_in + i] * w.data()[o * e_in + i];
            }
            out.push(acc);
        }
    }
    out
}
