use std::ops::Range;

use crate::error::{param_err, shape_err, Result};
use crate::graph::{Graph, Var};
use crate::real::Real;
use crate::tensor::Tensor;

use super::split_axes;

/// Epsilon added to the population variance.
pub const LAYER_NORM_EPS: f64 = 1e-5;

impl<T: Real> Graph<T> {
    /// Layer normalization over the contiguous axis range `axes`.
    ///
    /// Each slice spanned by `axes` is shifted to zero mean and scaled by
    /// `1 / sqrt(var + eps)` (population variance), then mapped through
    /// `gamma * x + beta`. `gamma` and `beta` have the slice's shape.
    pub fn layer_norm(&mut self, x: Var, axes: Range<usize>, gamma: Var, beta: Var) -> Result<Var> {
        self.layer_norm_eps(x, axes, gamma, beta, LAYER_NORM_EPS)
    }

    pub fn layer_norm_eps(
        &mut self,
        x: Var,
        axes: Range<usize>,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axes.start >= axes.end || axes.end > shape.len() {
            return Err(param_err(
                "layer_norm",
                format!("empty or out-of-range axes {axes:?} for {shape:?}"),
            ));
        }
        let slice_shape = &shape[axes.clone()];
        for (name, p) in [("gamma", gamma), ("beta", beta)] {
            let ps = self.shape(p);
            let ok = ps == slice_shape || (ps.len() == 1 && ps[0] == slice_shape.iter().product());
            if !ok {
                return Err(shape_err(
                    "layer_norm",
                    format!("{name} {ps:?} does not match normalized axes {axes:?} = {slice_shape:?}"),
                ));
            }
        }
        let (outer, n, inner) = split_axes(&shape, axes);
        let eps = T::lit(eps);
        let inv_n = T::one() / T::lit(n as f64);
        let (xd, gd, bd) = (self.data(x), self.data(gamma), self.data(beta));
        let mut xhat = vec![T::zero(); xd.len()];
        let mut rstd = vec![T::zero(); outer * inner];
        let mut mean = vec![T::zero(); inner];
        let mut var = vec![T::zero(); inner];
        for o in 0..outer {
            let block = &xd[o * n * inner..(o + 1) * n * inner];
            mean.fill(T::zero());
            var.fill(T::zero());
            for row in block.chunks_exact(inner) {
                mean.iter_mut().zip(row).for_each(|(m, &v)| *m += v);
            }
            mean.iter_mut().for_each(|m| *m *= inv_n);
            for row in block.chunks_exact(inner) {
                for ((s, &m), &v) in var.iter_mut().zip(&mean).zip(row) {
                    let dv = v - m;
                    *s += dv * dv;
                }
            }
            let rs = &mut rstd[o * inner..(o + 1) * inner];
            for (r, &s) in rs.iter_mut().zip(&var) {
                *r = T::one() / (s * inv_n + eps).sqrt();
            }
            let xh = &mut xhat[o * n * inner..(o + 1) * n * inner];
            for (xrow, hrow) in block.chunks_exact(inner).zip(xh.chunks_exact_mut(inner)) {
                for i in 0..inner {
                    hrow[i] = (xrow[i] - mean[i]) * rs[i];
                }
            }
        }
        let mut out = Vec::with_capacity(xd.len());
        for o in 0..outer {
            for j in 0..n {
                let base = (o * n + j) * inner;
                out.extend(xhat[base..base + inner].iter().map(|&h| gd[j] * h + bd[j]));
            }
        }
        let out = Tensor::new(&shape, out)?;
        let keep = self.any_requires_grad(&[x, gamma, beta]);
        let (xhat, rstd) = if keep { (xhat, rstd) } else { (Vec::new(), Vec::new()) };
        self.push("layer_norm", out, &[x, gamma, beta], move |ctx, g| {
            let gd = ctx.input(1).data();
            let mut dgamma = vec![T::zero(); n];
            let mut dbeta = vec![T::zero(); n];
            for o in 0..outer {
                for j in 0..n {
                    let base = (o * n + j) * inner;
                    let (grow, hrow) = (&g[base..base + inner], &xhat[base..base + inner]);
                    dgamma[j] += super::dot(grow, hrow);
                    dbeta[j] += super::sum(grow);
                }
            }
            let dx = ctx.needs(0).then(|| {
                let mut dx = vec![T::zero(); g.len()];
                let mut m1 = vec![T::zero(); inner];
                let mut m2 = vec![T::zero(); inner];
                for o in 0..outer {
                    m1.fill(T::zero());
                    m2.fill(T::zero());
                    for j in 0..n {
                        let base = (o * n + j) * inner;
                        for i in 0..inner {
                            let dh = g[base + i] * gd[j];
                            m1[i] += dh;
                            m2[i] += dh * xhat[base + i];
                        }
                    }
                    let rs = &rstd[o * inner..(o + 1) * inner];
                    for j in 0..n {
                        let base = (o * n + j) * inner;
                        for i in 0..inner {
                            let dh = g[base + i] * gd[j];
                            dx[base + i] =
                                rs[i] * (dh - m1[i] * inv_n - xhat[base + i] * m2[i] * inv_n);
                        }
                    }
                }
                dx
            });
            vec![dx, ctx.needs(1).then_some(dgamma), ctx.needs(2).then_some(dbeta)]
        })
    }
}
