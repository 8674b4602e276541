use crate::error::{shape_err, Result};
use crate::graph::{Graph, Var};
use crate::real::Real;
use crate::tensor::Tensor;

impl<T: Real> Graph<T> {
    /// Affine map on the last axis: `y = x W^T + b`, `W` shaped `(out, in)`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(weight).to_vec();
        let e_in = *xs.last().expect("tensors have rank >= 1");
        if ws.len() != 2 || ws[1] != e_in {
            return Err(shape_err(
                "linear",
                format!("weight {ws:?} does not map last axis of input {xs:?}"),
            ));
        }
        let e_out = ws[0];
        if let Some(b) = bias {
            if self.shape(b) != [e_out] {
                return Err(shape_err(
                    "linear",
                    format!("bias {:?} should be [{e_out}]", self.shape(b)),
                ));
            }
        }
        let rows = self.value(x).numel() / e_in;
        let mut out = match bias {
            Some(b) => {
                let bv = self.data(b);
                let mut o = Vec::with_capacity(rows * e_out);
                for _ in 0..rows {
                    o.extend_from_slice(bv);
                }
                o
            }
            None => vec![T::zero(); rows * e_out],
        };
        T::gemm(
            rows,
            e_in,
            e_out,
            T::one(),
            self.data(x),
            e_in,
            1,
            self.data(weight),
            1,
            e_in,
            T::one(),
            &mut out,
            e_out,
            1,
        );
        let mut out_shape = xs.clone();
        *out_shape.last_mut().unwrap() = e_out;
        let out = Tensor::new(&out_shape, out)?;
        let has_bias = bias.is_some();
        let inputs: Vec<Var> = std::iter::once(x).chain(Some(weight)).chain(bias).collect();
        self.push("linear", out, &inputs, move |ctx, g| {
            let (xv, wv) = (ctx.input(0).data(), ctx.input(1).data());
            let dx = ctx.needs(0).then(|| {
                let mut dx = vec![T::zero(); rows * e_in];
                T::gemm(rows, e_out, e_in, T::one(), g, e_out, 1, wv, e_in, 1, T::zero(), &mut dx, e_in, 1);
                dx
            });
            let dw = ctx.needs(1).then(|| {
                let mut dw = vec![T::zero(); e_out * e_in];
                T::gemm(e_out, rows, e_in, T::one(), g, 1, e_out, xv, e_in, 1, T::zero(), &mut dw, e_in, 1);
                dw
            });
            let mut grads = vec![dx, dw];
            if has_bias {
                grads.push(ctx.needs(2).then(|| {
                    let mut db = vec![T::zero(); e_out];
                    for row in g.chunks_exact(e_out) {
                        db.iter_mut().zip(row).for_each(|(d, &gv)| *d += gv);
                    }
                    db
                }));
            }
            grads
        })
    }
}
