use rand::Rng;

use crate::error::{param_err, shape_err, Result};
use crate::graph::{Graph, Var};
use crate::real::Real;
use crate::tensor::Tensor;

use super::split_axes;

fn same_shape<T: Real>(g: &Graph<T>, op: &'static str, a: Var, b: Var) -> Result<()> {
    if g.shape(a) != g.shape(b) {
        return Err(shape_err(
            op,
            format!("lhs {:?} vs rhs {:?}", g.shape(a), g.shape(b)),
        ));
    }
    Ok(())
}

/// Standard normal CDF.
pub(crate) fn normal_cdf<T: Real>(x: T) -> T {
    T::lit(0.5) * (T::one() + (x * T::FRAC_1_SQRT_2()).erf())
}

fn normal_pdf<T: Real>(x: T) -> T {
    let inv_sqrt_2pi = T::lit(0.398_942_280_401_432_7);
    inv_sqrt_2pi * (-(x * x) * T::lit(0.5)).exp()
}

impl<T: Real> Graph<T> {
    fn map_unary(
        &mut self,
        op: &'static str,
        x: Var,
        f: impl Fn(T) -> T,
        df: impl Fn(T, T) -> T + 'static,
    ) -> Result<Var> {
        let xv = self.value(x);
        let out = Tensor::new(xv.shape(), xv.data().iter().map(|&v| f(v)).collect())?;
        self.push(op, out, &[x], move |ctx, g| {
            let (xs, ys) = (ctx.input(0).data(), ctx.output().data());
            let dx = g
                .iter()
                .zip(xs.iter().zip(ys))
                .map(|(&gv, (&xv, &yv))| gv * df(xv, yv))
                .collect();
            vec![Some(dx)]
        })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, "add", a, b)?;
        let (av, bv) = (self.value(a), self.value(b));
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| x + y).collect();
        let out = Tensor::new(av.shape(), data)?;
        self.push("add", out, &[a, b], |ctx, g| {
            vec![
                ctx.needs(0).then(|| g.to_vec()),
                ctx.needs(1).then(|| g.to_vec()),
            ]
        })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, "sub", a, b)?;
        let (av, bv) = (self.value(a), self.value(b));
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| x - y).collect();
        let out = Tensor::new(av.shape(), data)?;
        self.push("sub", out, &[a, b], |ctx, g| {
            vec![
                ctx.needs(0).then(|| g.to_vec()),
                ctx.needs(1).then(|| g.iter().map(|&v| -v).collect()),
            ]
        })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, "mul", a, b)?;
        let (av, bv) = (self.value(a), self.value(b));
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| x * y).collect();
        let out = Tensor::new(av.shape(), data)?;
        self.push("mul", out, &[a, b], |ctx, g| {
            let (a, b) = (ctx.input(0).data(), ctx.input(1).data());
            vec![
                ctx.needs(0)
                    .then(|| g.iter().zip(b).map(|(&gv, &bv)| gv * bv).collect()),
                ctx.needs(1)
                    .then(|| g.iter().zip(a).map(|(&gv, &av)| gv * av).collect()),
            ]
        })
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Result<Var> {
        self.map_unary("scale", x, |v| v * factor, move |_, _| factor)
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Result<Var> {
        self.map_unary("add_scalar", x, |v| v + c, |_, _| T::one())
    }

    /// `|x|` with subgradient 0 at the kink.
    pub fn abs(&mut self, x: Var) -> Result<Var> {
        self.map_unary("abs", x, |v| v.abs(), |x, _| sign(x))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.map_unary(
            "relu",
            x,
            |v| if v > T::zero() { v } else { T::zero() },
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.map_unary(
            "sigmoid",
            x,
            |v| T::one() / (T::one() + (-v).exp()),
            |_, y| y * (T::one() - y),
        )
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.map_unary("tanh", x, |v| v.tanh(), |_, y| T::one() - y * y)
    }

    /// Exact GELU, `x * Phi(x)`.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        self.map_unary(
            "gelu",
            x,
            |v| v * normal_cdf(v),
            |x, _| normal_cdf(x) + x * normal_pdf(x),
        )
    }

    /// PReLU with one slope per index of `axis`.
    pub fn prelu(&mut self, x: Var, alpha: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(shape_err("prelu", format!("axis {axis} out of range for {shape:?}")));
        }
        let (outer, ch, inner) = split_axes(&shape, axis..axis + 1);
        if self.value(alpha).numel() != ch {
            return Err(shape_err(
                "prelu",
                format!(
                    "alpha has {} slopes, axis {axis} has {ch} channels",
                    self.value(alpha).numel()
                ),
            ));
        }
        let (xs, al) = (self.data(x), self.data(alpha));
        let mut out = Vec::with_capacity(xs.len());
        for o in 0..outer {
            for (c, &a) in al.iter().enumerate() {
                let base = (o * ch + c) * inner;
                out.extend(xs[base..base + inner].iter().map(|&v| if v >= T::zero() { v } else { a * v }));
            }
        }
        let out = Tensor::new(&shape, out)?;
        self.push("prelu", out, &[x, alpha], move |ctx, g| {
            let (xs, al) = (ctx.input(0).data(), ctx.input(1).data());
            let mut dx = ctx.needs(0).then(|| vec![T::zero(); xs.len()]);
            let mut da = vec![T::zero(); ch];
            for o in 0..outer {
                for c in 0..ch {
                    let base = (o * ch + c) * inner;
                    for i in base..base + inner {
                        if xs[i] >= T::zero() {
                            if let Some(dx) = dx.as_mut() {
                                dx[i] = g[i];
                            }
                        } else {
                            if let Some(dx) = dx.as_mut() {
                                dx[i] = g[i] * al[c];
                            }
                            da[c] += g[i] * xs[i];
                        }
                    }
                }
            }
            vec![dx, ctx.needs(1).then_some(da)]
        })
    }

    /// Inverted dropout: identity in eval mode, otherwise zeroes each element
    /// with probability `rate` and scales survivors by `1 / (1 - rate)`.
    pub fn dropout(&mut self, x: Var, rate: f64) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(param_err("dropout", format!("rate {rate} outside [0, 1)")));
        }
        if !self.is_training() || rate == 0.0 {
            return Ok(x);
        }
        let keep_scale = T::lit(1.0 / (1.0 - rate));
        let n = self.value(x).numel();
        let rng = self.rng();
        let mask: Vec<T> = (0..n)
            .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep_scale })
            .collect();
        let xv = self.value(x);
        let data = xv.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let out = Tensor::new(xv.shape(), data)?;
        self.push("dropout", out, &[x], move |_, g| {
            vec![Some(g.iter().zip(&mask).map(|(&gv, &m)| gv * m).collect())]
        })
    }
}

#[inline]
fn sign<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}
