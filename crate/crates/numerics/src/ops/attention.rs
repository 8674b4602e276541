use rand::rngs::SmallRng;
use rand::{Rng, RngCore, SeedableRng};

use crate::error::{param_err, shape_err, NumericsError, Result};
use crate::graph::{Graph, Var};
use crate::real::Real;
use crate::tensor::Tensor;

/// Projection weights of one multi-head self-attention layer. Weights are
/// `(E, E)` in `(out, in)` layout, biases `(E)`.
#[derive(Clone, Copy, Debug)]
pub struct MhsaParams {
    pub wq: Var,
    pub bq: Var,
    pub wk: Var,
    pub bk: Var,
    pub wv: Var,
    pub bv: Var,
    pub wo: Var,
    pub bo: Var,
}

/// In-place numerically stable softmax over consecutive rows of `row_len`.
pub fn softmax_rows<T: Real>(data: &mut [T], row_len: usize) {
    for row in data.chunks_exact_mut(row_len) {
        let max = row_max(row);
        row.iter_mut().for_each(|v| *v -= max);
        T::exp_slice(row);
        let inv = T::one() / super::sum(row);
        row.iter_mut().for_each(|v| *v *= inv);
    }
}

fn row_max<T: Real>(row: &[T]) -> T {
    let mut acc = [T::neg_infinity(); 8];
    let chunks = row.chunks_exact(8);
    let tail = chunks.remainder();
    for c in chunks {
        for l in 0..8 {
            acc[l] = if c[l] > acc[l] { c[l] } else { acc[l] };
        }
    }
    tail.iter()
        .chain(&acc)
        .fold(T::neg_infinity(), |m, &v| if v > m { v } else { m })
}

/// Dropout keep-mask for one attention head, one byte per weight. Masks are
/// regenerated from a per-head seed in the backward pass rather than stored.
struct DropMask {
    keep: Vec<u8>,
    threshold: u64,
}

impl DropMask {
    fn new(len: usize, rate: f64) -> Self {
        Self {
            keep: vec![0; len],
            // compared against 16-bit uniforms
            threshold: (rate * 65536.0).round() as u64,
        }
    }

    fn resample(&mut self, seed: u64) {
        let mut rng = SmallRng::seed_from_u64(seed);
        let threshold = self.threshold;
        for chunk in self.keep.chunks_mut(4) {
            let r = rng.next_u64();
            for (lane, k) in chunk.iter_mut().enumerate() {
                *k = ((r >> (16 * lane)) & 0xffff >= threshold) as u8;
            }
        }
    }

    /// `dst = src * scale` where kept, zero elsewhere.
    fn apply<T: Real>(&self, src: &[T], scale: T, dst: &mut [T]) {
        for ((d, &s), &k) in dst.iter_mut().zip(src).zip(&self.keep) {
            *d = s * if k == 1 { scale } else { T::zero() };
        }
    }

    fn apply_in_place<T: Real>(&self, buf: &mut [T], scale: T) {
        for (d, &k) in buf.iter_mut().zip(&self.keep) {
            *d *= if k == 1 { scale } else { T::zero() };
        }
    }
}

#[derive(Clone, Copy)]
struct AttnDims {
    seq: usize,
    embed: usize,
    dh: usize,
}

impl AttnDims {
    /// Softmax of the scaled scores of the head starting at `off`.
    fn probs<T: Real>(&self, scale: T, qd: &[T], kd: &[T], off: usize, out: &mut [T]) {
        let (s, e) = (self.seq, self.embed);
        T::gemm(s, self.dh, s, scale, &qd[off..], e, 1, &kd[off..], 1, e, T::zero(), out, s, 1);
        softmax_rows(out, s);
    }
}

impl<T: Real> Graph<T> {
    /// Scaled dot-product attention over inputs shaped `(B, S, E)`, split into
    /// `heads` heads of width `E / heads` and scored with `1 / sqrt(E / heads)`.
    /// In training mode the attention weights pass through dropout.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, dropout: f64) -> Result<Var> {
        let shape = self.shape(q).to_vec();
        if shape.len() != 3 {
            return Err(shape_err("attention", format!("expected (B, S, E), got {shape:?}")));
        }
        if self.shape(k) != shape.as_slice() || self.shape(v) != shape.as_slice() {
            return Err(shape_err(
                "attention",
                format!(
                    "query {shape:?}, key {:?} and value {:?} must agree",
                    self.shape(k),
                    self.shape(v)
                ),
            ));
        }
        let (batch, seq, embed) = (shape[0], shape[1], shape[2]);
        if heads == 0 || embed % heads != 0 {
            return Err(NumericsError::Config {
                op: "attention",
                detail: format!("embedding {embed} not divisible by {heads} heads"),
            });
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(param_err("attention", format!("dropout {dropout} outside [0, 1)")));
        }
        let dims = AttnDims {
            seq,
            embed,
            dh: embed / heads,
        };
        let scale = T::one() / T::lit(dims.dh as f64).sqrt();
        let sq = seq * seq;
        let mask_seed = (self.is_training() && dropout > 0.0).then(|| self.rng().gen::<u64>());
        let head_seed = move |b: usize, h: usize| {
            mask_seed.map(|s| s.wrapping_add(((b * heads + h) as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
        };
        let keep_scale = T::lit(1.0 / (1.0 - dropout));
        let (qd, kd, vd) = (self.data(q), self.data(k), self.data(v));
        let mut out = vec![T::zero(); qd.len()];
        let mut probs = vec![T::zero(); sq];
        let mut mask = DropMask::new(if mask_seed.is_some() { sq } else { 0 }, dropout);
        let mut dropped = vec![T::zero(); if mask_seed.is_some() { sq } else { 0 }];
        for b in 0..batch {
            for h in 0..heads {
                let off = b * seq * embed + h * dims.dh;
                dims.probs(scale, qd, kd, off, &mut probs);
                let weights = match head_seed(b, h) {
                    Some(s) => {
                        mask.resample(s);
                        mask.apply(&probs, keep_scale, &mut dropped);
                        &dropped
                    }
                    None => &probs,
                };
                T::gemm(seq, seq, dims.dh, T::one(), weights, seq, 1, &vd[off..], embed, 1, T::zero(), &mut out[off..], embed, 1);
            }
        }
        let out = Tensor::new(&shape, out)?;
        self.push("attention", out, &[q, k, v], move |ctx, g| {
            let (qd, kd, vd) = (ctx.input(0).data(), ctx.input(1).data(), ctx.input(2).data());
            let (e, dh) = (embed, dims.dh);
            let mut dq = vec![T::zero(); g.len()];
            let mut dk = vec![T::zero(); g.len()];
            let mut dv = vec![T::zero(); g.len()];
            let mut p = vec![T::zero(); sq];
            let mut dp = vec![T::zero(); sq];
            let mut mask = DropMask::new(if mask_seed.is_some() { sq } else { 0 }, dropout);
            let mut pd = vec![T::zero(); if mask_seed.is_some() { sq } else { 0 }];
            for b in 0..batch {
                for h in 0..heads {
                    let off = b * seq * e + h * dh;
                    dims.probs(scale, qd, kd, off, &mut p);
                    let seed = head_seed(b, h);
                    let weights = match seed {
                        Some(s) => {
                            mask.resample(s);
                            mask.apply(&p, keep_scale, &mut pd);
                            &pd
                        }
                        None => &p,
                    };
                    // dV = W^T dO
                    T::gemm(seq, seq, dh, T::one(), weights, 1, seq, &g[off..], e, 1, T::zero(), &mut dv[off..], e, 1);
                    // dW = dO V^T
                    T::gemm(seq, dh, seq, T::one(), &g[off..], e, 1, &vd[off..], 1, e, T::zero(), &mut dp, seq, 1);
                    if seed.is_some() {
                        mask.apply_in_place(&mut dp, keep_scale);
                    }
                    // softmax backward, in place: dS = P * (dP - rowsum(dP * P))
                    for (drow, prow) in dp.chunks_exact_mut(seq).zip(p.chunks_exact(seq)) {
                        let inner = super::dot(drow, prow);
                        for (x, &pv) in drow.iter_mut().zip(prow) {
                            *x = pv * (*x - inner);
                        }
                    }
                    T::gemm(seq, seq, dh, scale, &dp, seq, 1, &kd[off..], e, 1, T::zero(), &mut dq[off..], e, 1);
                    T::gemm(seq, seq, dh, scale, &dp, 1, seq, &qd[off..], e, 1, T::zero(), &mut dk[off..], e, 1);
                }
            }
            vec![
                ctx.needs(0).then_some(dq),
                ctx.needs(1).then_some(dk),
                ctx.needs(2).then_some(dv),
            ]
        })
    }

    /// Multi-head self-attention: linear Q/K/V projections, scaled
    /// dot-product attention over axis 1 of `(B, S, E)`, output projection.
    pub fn mhsa(&mut self, x: Var, p: &MhsaParams, heads: usize, dropout: f64) -> Result<Var> {
        let embed = *self.shape(x).last().unwrap_or(&0);
        if heads == 0 || !embed.is_multiple_of(heads) {
            return Err(NumericsError::Config {
                op: "mhsa",
                detail: format!("embedding {embed} not divisible by {heads} heads"),
            });
        }
        let q = self.linear(x, p.wq, Some(p.bq))?;
        let k = self.linear(x, p.wk, Some(p.bk))?;
        let v = self.linear(x, p.wv, Some(p.bv))?;
        let a = self.attention(q, k, v, heads, dropout)?;
        self.linear(a, p.wo, Some(p.bo))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drop_mask_rate_is_close() {
        let mut m = DropMask::new(100_000, 0.1);
        m.resample(3);
        let kept = m.keep.iter().filter(|&&k| k == 1).count();
        assert!((kept as f64 / 1e5 - 0.9).abs() < 0.005, "kept {kept}");
    }

    #[test]
    fn row_max_handles_tails() {
        let v: Vec<f64> = (0..19).map(|i| ((i * 7) % 19) as f64).collect();
        assert_eq!(row_max(&v), 18.0);
        assert_eq!(row_max(&[-3.0f32, -1.0, -2.0]), -1.0);
    }
}
