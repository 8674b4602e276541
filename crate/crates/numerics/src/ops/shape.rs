use crate::error::{shape_err, Result};
use crate::graph::{Graph, Var};
use crate::real::Real;
use crate::tensor::Tensor;

use super::split_axes;

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Gathers `src` (with `shape`) into the axis order `perm`.
fn permute_data<T: Real>(src: &[T], shape: &[usize], perm: &[usize]) -> Vec<T> {
    let rank = shape.len();
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut out = Vec::with_capacity(src.len());
    let last = rank - 1;
    let (inner_len, inner_stride) = (out_shape[last], src_strides[last]);
    let mut idx = vec![0usize; rank];
    loop {
        let base: usize = (0..last).map(|a| idx[a] * src_strides[a]).sum();
        if inner_stride == 1 {
            out.extend_from_slice(&src[base..base + inner_len]);
        } else {
            out.extend((0..inner_len).map(|i| src[base + i * inner_stride]));
        }
        // odometer over all but the last axis
        let mut a = last;
        loop {
            if a == 0 {
                return out;
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < out_shape[a] {
                break;
            }
            idx[a] = 0;
        }
    }
}

impl<T: Real> Graph<T> {
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().detached().reshape(shape)?;
        self.push("reshape", out, &[x], |_, g| vec![Some(g.to_vec())])
    }

    /// Reorders axes so that output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        if perm.len() != shape.len() || perm.iter().any(|&p| p >= shape.len() || std::mem::replace(&mut seen[p], true)) {
            return Err(shape_err(
                "permute",
                format!("{perm:?} is not a permutation of the axes of {shape:?}"),
            ));
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let data = permute_data(self.data(x), &shape, perm);
        let mut inverse = vec![0; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        let out = Tensor::new(&out_shape, data)?;
        self.push("permute", out, &[x], move |_, g| {
            vec![Some(permute_data(g, &out_shape, &inverse))]
        })
    }

    /// Concatenates along `axis`; all other axes must agree.
    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let Some(&first) = xs.first() else {
            return Err(shape_err("concat", "no inputs"));
        };
        let ref_shape = self.shape(first).to_vec();
        if axis >= ref_shape.len() {
            return Err(shape_err("concat", format!("axis {axis} out of range for {ref_shape:?}")));
        }
        let mut sizes = Vec::with_capacity(xs.len());
        for &x in xs {
            let s = self.shape(x);
            let compatible = s.len() == ref_shape.len()
                && s.iter().zip(&ref_shape).enumerate().all(|(a, (p, q))| a == axis || p == q);
            if !compatible {
                return Err(shape_err(
                    "concat",
                    format!("{s:?} incompatible with {ref_shape:?} outside axis {axis}"),
                ));
            }
            sizes.push(s[axis]);
        }
        let (outer, _, inner) = split_axes(&ref_shape, axis..axis + 1);
        let total: usize = sizes.iter().sum();
        let mut out_shape = ref_shape.clone();
        out_shape[axis] = total;
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (&x, &n) in xs.iter().zip(&sizes) {
                let src = self.data(x);
                data.extend_from_slice(&src[o * n * inner..(o + 1) * n * inner]);
            }
        }
        let out = Tensor::new(&out_shape, data)?;
        self.push("concat", out, xs, move |ctx, g| {
            let mut grads: Vec<Vec<T>> = sizes
                .iter()
                .map(|&n| Vec::with_capacity(outer * n * inner))
                .collect();
            for o in 0..outer {
                let mut offset = o * total * inner;
                for (gi, &n) in grads.iter_mut().zip(&sizes) {
                    gi.extend_from_slice(&g[offset..offset + n * inner]);
                    offset += n * inner;
                }
            }
            grads
                .into_iter()
                .enumerate()
                .map(|(i, gi)| ctx.needs(i).then_some(gi))
                .collect()
        })
    }

    /// Takes `len` consecutive indices of `axis` starting at `start`.
    pub fn slice_axis(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(shape_err(
                "slice_axis",
                format!("range {start}..{} of axis {axis} in {shape:?}", start + len),
            ));
        }
        let (outer, n, inner) = split_axes(&shape, axis..axis + 1);
        let src = self.data(x);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * n + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let out = Tensor::new(&out_shape, data)?;
        self.push("slice_axis", out, &[x], move |_, g| {
            let mut dx = vec![T::zero(); outer * n * inner];
            for o in 0..outer {
                let base = (o * n + start) * inner;
                dx[base..base + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(dx)]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permute_matches_index_mapping() {
        let shape = [2, 3, 4];
        let src: Vec<f64> = (0..24).map(f64::from).collect();
        let out = permute_data(&src, &shape, &[2, 0, 1]);
        // out[k][i][j] == src[i][j][k]
        for i in 0..2 {
            for j in 0..3 {
                for k in 0..4 {
                    assert_eq!(out[(k * 2 + i) * 3 + j], src[(i * 3 + j) * 4 + k]);
                }
            }
        }
    }

    #[test]
    fn concat_then_slice_round_trips() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::from_fn(&[2, 2, 3], |i| i as f64));
        let b = g.constant(Tensor::from_fn(&[2, 1, 3], |i| 100.0 + i as f64));
        let c = g.concat(&[a, b], 1).unwrap();
        assert_eq!(g.shape(c), &[2, 3, 3]);
        let back = g.slice_axis(c, 1, 2, 1).unwrap();
        assert_eq!(g.data(back), g.data(b));
    }
}
