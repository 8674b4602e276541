use crate::error::{param_err, shape_err, Result};
use crate::graph::{Graph, Var};
use crate::real::Real;
use crate::tensor::Tensor;

use super::{axpy, dot, sum};

/// Valid output range `[lo, hi)` along an axis of length `n` for a tap at
/// signed offset `off` (input index = output index + off) under zero padding.
#[inline]
fn tap_range(n: usize, off: isize) -> (usize, usize) {
    let lo = (-off).max(0) as usize;
    let hi = (n as isize - off).clamp(0, n as isize) as usize;
    (lo.min(hi), hi)
}

struct Conv2dDims {
    c_in: usize,
    c_out: usize,
    f: usize,
    t: usize,
    kf: usize,
    kt: usize,
}

impl Conv2dDims {
    fn plane(&self) -> usize {
        self.f * self.t
    }

    fn w_index(&self, co: usize, ci: usize, i: usize, j: usize) -> usize {
        ((co * self.c_in + ci) * self.kf + i) * self.kt + j
    }

    fn offsets(&self, i: usize, j: usize) -> (isize, isize) {
        (
            i as isize - (self.kf / 2) as isize,
            j as isize - (self.kt / 2) as isize,
        )
    }
}

impl<T: Real> Graph<T> {
    /// 2-D cross-correlation with zero "same" padding.
    ///
    /// `x` is `(C_in, F, T)`, `weight` is `(C_out, C_in, kF, kT)` with odd
    /// kernel sizes, `bias` is `(C_out)`. Output is `(C_out, F, T)`.
    pub fn conv2d(&mut self, x: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(weight).to_vec();
        if xs.len() != 3 {
            return Err(shape_err("conv2d", format!("input must be (C_in, F, T), got {xs:?}")));
        }
        if ws.len() != 4 || ws[1] != xs[0] {
            return Err(shape_err(
                "conv2d",
                format!("weight {ws:?} incompatible with input channels (axis 0 of {xs:?})"),
            ));
        }
        if ws[2].is_multiple_of(2) || ws[3].is_multiple_of(2) {
            return Err(shape_err(
                "conv2d",
                format!("kernel axes (2, 3) of {ws:?} must be odd for same padding"),
            ));
        }
        if let Some(b) = bias {
            if self.shape(b) != [ws[0]] {
                return Err(shape_err(
                    "conv2d",
                    format!("bias {:?} vs output channels (axis 0 of weight) {}", self.shape(b), ws[0]),
                ));
            }
        }
        let d = Conv2dDims {
            c_in: xs[0],
            c_out: ws[0],
            f: xs[1],
            t: xs[2],
            kf: ws[2],
            kt: ws[3],
        };
        let (xd, wd) = (self.data(x), self.data(weight));
        let plane = d.plane();
        let mut out = vec![T::zero(); d.c_out * plane];
        for co in 0..d.c_out {
            let out_plane = &mut out[co * plane..(co + 1) * plane];
            if let Some(b) = bias {
                out_plane.fill(self.data(b)[co]);
            }
            for ci in 0..d.c_in {
                let in_plane = &xd[ci * plane..(ci + 1) * plane];
                for i in 0..d.kf {
                    for j in 0..d.kt {
                        let w = wd[d.w_index(co, ci, i, j)];
                        let (of, ot) = d.offsets(i, j);
                        let (f0, f1) = tap_range(d.f, of);
                        let (t0, t1) = tap_range(d.t, ot);
                        for f in f0..f1 {
                            let fi = (f as isize + of) as usize;
                            let src = &in_plane[fi * d.t..(fi + 1) * d.t];
                            let dst = &mut out_plane[f * d.t..(f + 1) * d.t];
                            let ti0 = (t0 as isize + ot) as usize;
                            axpy(&mut dst[t0..t1], w, &src[ti0..ti0 + (t1 - t0)]);
                        }
                    }
                }
            }
        }
        let out = Tensor::new(&[d.c_out, d.f, d.t], out)?;
        let has_bias = bias.is_some();
        let inputs: Vec<Var> = [x, weight].into_iter().chain(bias).collect();
        self.push("conv2d", out, &inputs, move |ctx, g| {
            let (xd, wd) = (ctx.input(0).data(), ctx.input(1).data());
            let plane = d.plane();
            let mut dx = ctx.needs(0).then(|| vec![T::zero(); d.c_in * plane]);
            let mut dw = ctx.needs(1).then(|| vec![T::zero(); wd.len()]);
            for co in 0..d.c_out {
                let g_plane = &g[co * plane..(co + 1) * plane];
                for ci in 0..d.c_in {
                    let in_plane = &xd[ci * plane..(ci + 1) * plane];
                    for i in 0..d.kf {
                        for j in 0..d.kt {
                            let wi = d.w_index(co, ci, i, j);
                            let (of, ot) = d.offsets(i, j);
                            let (f0, f1) = tap_range(d.f, of);
                            let (t0, t1) = tap_range(d.t, ot);
                            let ti0 = (t0 as isize + ot) as usize;
                            let len = t1 - t0;
                            let mut acc = T::zero();
                            for f in f0..f1 {
                                let fi = (f as isize + of) as usize;
                                let grow = &g_plane[f * d.t + t0..f * d.t + t1];
                                if let Some(dx) = dx.as_mut() {
                                    let row = &mut dx[ci * plane + fi * d.t..];
                                    axpy(&mut row[ti0..ti0 + len], wd[wi], grow);
                                }
                                if dw.is_some() {
                                    acc += dot(grow, &in_plane[fi * d.t + ti0..fi * d.t + ti0 + len]);
                                }
                            }
                            if let Some(dw) = dw.as_mut() {
                                dw[wi] += acc;
                            }
                        }
                    }
                }
            }
            let mut grads = vec![dx, dw];
            if has_bias {
                grads.push(ctx.needs(2).then(|| {
                    (0..d.c_out).map(|co| sum(&g[co * plane..(co + 1) * plane])).collect()
                }));
            }
            grads
        })
    }

    /// Depthwise dilated 1-D cross-correlation with zero "same" padding.
    ///
    /// `x` is `(C, T)` or `(B, C, T)`, `weight` is `(C, k)` with odd `k`.
    /// Tap `j` reads `x[t + (j - k/2) * dilation]`; there is no bias.
    pub fn dd_conv1d(&mut self, x: Var, weight: Var, dilation: usize) -> Result<Var> {
        if dilation == 0 {
            return Err(param_err("dd_conv1d", "dilation must be >= 1"));
        }
        let xs = self.shape(x).to_vec();
        let ws = self.shape(weight).to_vec();
        let (batch, ch, len) = match xs.as_slice() {
            [c, t] => (1, *c, *t),
            [b, c, t] => (*b, *c, *t),
            _ => {
                return Err(shape_err(
                    "dd_conv1d",
                    format!("input must be (C, T) or (B, C, T), got {xs:?}"),
                ))
            }
        };
        if ws.len() != 2 || ws[0] != ch {
            return Err(shape_err(
                "dd_conv1d",
                format!("weight {ws:?} vs input channel axis of {xs:?}"),
            ));
        }
        let k = ws[1];
        if k.is_multiple_of(2) {
            return Err(param_err("dd_conv1d", format!("kernel size {k} must be odd")));
        }
        let half = (k / 2) as isize;
        let offset = move |j: usize| (j as isize - half) * dilation as isize;
        let (xd, wd) = (self.data(x), self.data(weight));
        let mut out = vec![T::zero(); xd.len()];
        for b in 0..batch {
            for c in 0..ch {
                let base = (b * ch + c) * len;
                let (src, dst) = (&xd[base..base + len], &mut out[base..base + len]);
                for j in 0..k {
                    let off = offset(j);
                    let (t0, t1) = tap_range(len, off);
                    if t0 == t1 {
                        continue;
                    }
                    let s0 = (t0 as isize + off) as usize;
                    axpy(&mut dst[t0..t1], wd[c * k + j], &src[s0..s0 + (t1 - t0)]);
                }
            }
        }
        let out = Tensor::new(&xs, out)?;
        self.push("dd_conv1d", out, &[x, weight], move |ctx, g| {
            let (xd, wd) = (ctx.input(0).data(), ctx.input(1).data());
            let mut dx = ctx.needs(0).then(|| vec![T::zero(); xd.len()]);
            let mut dw = vec![T::zero(); wd.len()];
            for b in 0..batch {
                for c in 0..ch {
                    let base = (b * ch + c) * len;
                    for j in 0..k {
                        let off = offset(j);
                        let (t0, t1) = tap_range(len, off);
                        if t0 == t1 {
                            continue;
                        }
                        let s0 = (t0 as isize + off) as usize;
                        let n = t1 - t0;
                        let grow = &g[base + t0..base + t1];
                        if let Some(dx) = dx.as_mut() {
                            axpy(&mut dx[base + s0..base + s0 + n], wd[c * k + j], grow);
                        }
                        dw[c * k + j] += dot(grow, &xd[base + s0..base + s0 + n]);
                    }
                }
            }
            vec![dx, ctx.needs(1).then_some(dw)]
        })
    }
}
