//! Named gradient checks for every differentiable op in this crate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ScalarFn;
use crate::error::Result;
use crate::graph::{Graph, Mode, Var};
use crate::ops::MhsaParams;
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpCheck {
    Add,
    Sub,
    Mul,
    Scale,
    Abs,
    Relu,
    Sigmoid,
    Tanh,
    Gelu,
    Prelu,
    Dropout,
    Mean,
    Permute,
    Concat,
    SliceAxis,
    Linear,
    Conv2d,
    DdConv1d,
    LayerNorm,
    Attention,
    Mhsa,
}

impl OpCheck {
    pub const ALL: [OpCheck; 21] = [
        OpCheck::Add,
        OpCheck::Sub,
        OpCheck::Mul,
        OpCheck::Scale,
        OpCheck::Abs,
        OpCheck::Relu,
        OpCheck::Sigmoid,
        OpCheck::Tanh,
        OpCheck::Gelu,
        OpCheck::Prelu,
        OpCheck::Dropout,
        OpCheck::Mean,
        OpCheck::Permute,
        OpCheck::Concat,
        OpCheck::SliceAxis,
        OpCheck::Linear,
        OpCheck::Conv2d,
        OpCheck::DdConv1d,
        OpCheck::LayerNorm,
        OpCheck::Attention,
        OpCheck::Mhsa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpCheck::Add => "add",
            OpCheck::Sub => "sub",
            OpCheck::Mul => "mul",
            OpCheck::Scale => "scale",
            OpCheck::Abs => "abs",
            OpCheck::Relu => "relu",
            OpCheck::Sigmoid => "sigmoid",
            OpCheck::Tanh => "tanh",
            OpCheck::Gelu => "gelu",
            OpCheck::Prelu => "prelu",
            OpCheck::Dropout => "dropout",
            OpCheck::Mean => "mean",
            OpCheck::Permute => "permute",
            OpCheck::Concat => "concat",
            OpCheck::SliceAxis => "slice_axis",
            OpCheck::Linear => "linear",
            OpCheck::Conv2d => "conv2d",
            OpCheck::DdConv1d => "dd_conv1d",
            OpCheck::LayerNorm => "layer_norm",
            OpCheck::Attention => "attention",
            OpCheck::Mhsa => "mhsa",
        }
    }

    /// Graph mode the check runs in; dropout needs training mode.
    pub fn mode(self) -> Mode {
        match self {
            OpCheck::Dropout | OpCheck::Attention => Mode::Train,
            _ => Mode::Eval,
        }
    }

    /// Input point: every input requires a gradient. Inputs feeding kinked
    /// ops stay away from the kink.
    pub fn point(self, seed: u64) -> Vec<Tensor<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rand = |shape: &[usize]| {
            Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0)).with_grad()
        };
        let shapes: Vec<Vec<usize>> = match self {
            OpCheck::Add | OpCheck::Sub | OpCheck::Mul => vec![vec![3, 4], vec![3, 4]],
            OpCheck::Scale
            | OpCheck::Sigmoid
            | OpCheck::Tanh
            | OpCheck::Gelu
            | OpCheck::Dropout
            | OpCheck::Mean => vec![vec![3, 5]],
            OpCheck::Abs | OpCheck::Relu => vec![vec![3, 5]],
            OpCheck::Prelu => vec![vec![2, 3, 4], vec![3]],
            OpCheck::Permute => vec![vec![2, 3, 4]],
            OpCheck::Concat => vec![vec![2, 3, 2], vec![2, 1, 2]],
            OpCheck::SliceAxis => vec![vec![2, 5, 3]],
            OpCheck::Linear => vec![vec![2, 3, 4], vec![5, 4], vec![5]],
            OpCheck::Conv2d => vec![vec![2, 4, 5], vec![3, 2, 3, 3], vec![3]],
            OpCheck::DdConv1d => vec![vec![2, 3, 12], vec![3, 3]],
            OpCheck::LayerNorm => vec![vec![2, 3], vec![3], vec![3]],
            OpCheck::Attention => vec![vec![2, 4, 4], vec![2, 4, 4], vec![2, 4, 4]],
            OpCheck::Mhsa => vec![
                vec![2, 3, 4],
                vec![4, 4],
                vec![4],
                vec![4, 4],
                vec![4],
                vec![4, 4],
                vec![4],
                vec![4, 4],
                vec![4],
            ],
        };
        let mut point: Vec<Tensor<f64>> = shapes.iter().map(|s| rand(s)).collect();
        if matches!(self, OpCheck::Abs | OpCheck::Relu | OpCheck::Prelu) {
            for v in point[0].data_mut() {
                *v = v.signum() * (0.1 + 0.9 * v.abs());
            }
        }
        if self == OpCheck::LayerNorm {
            // gamma around 1
            point[1].data_mut().iter_mut().for_each(|v| *v += 1.0);
        }
        point
    }
}

fn projection<T: Real>(g: &mut Graph<T>, y: Var) -> Result<Var> {
    let n = g.value(y).numel();
    let mut rng = ChaCha8Rng::seed_from_u64(0xdeadbeef);
    let w = (0..n).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect();
    g.weighted_sum(y, w)
}

impl ScalarFn for OpCheck {
    fn eval<T: Real>(&self, g: &mut Graph<T>, x: &[Var]) -> Result<Var> {
        let y = match self {
            OpCheck::Add => g.add(x[0], x[1])?,
            OpCheck::Sub => g.sub(x[0], x[1])?,
            OpCheck::Mul => g.mul(x[0], x[1])?,
            OpCheck::Scale => g.scale(x[0], T::lit(-1.75))?,
            OpCheck::Abs => g.abs(x[0])?,
            OpCheck::Relu => g.relu(x[0])?,
            OpCheck::Sigmoid => g.sigmoid(x[0])?,
            OpCheck::Tanh => g.tanh(x[0])?,
            OpCheck::Gelu => g.gelu(x[0])?,
            OpCheck::Prelu => g.prelu(x[0], x[1], 1)?,
            OpCheck::Dropout => g.dropout(x[0], 0.3)?,
            OpCheck::Mean => return g.mean_all(x[0]),
            OpCheck::Permute => g.permute(x[0], &[2, 0, 1])?,
            OpCheck::Concat => g.concat(&[x[0], x[1]], 1)?,
            OpCheck::SliceAxis => g.slice_axis(x[0], 1, 1, 3)?,
            OpCheck::Linear => g.linear(x[0], x[1], Some(x[2]))?,
            OpCheck::Conv2d => g.conv2d(x[0], x[1], Some(x[2]))?,
            OpCheck::DdConv1d => g.dd_conv1d(x[0], x[1], 2)?,
            OpCheck::LayerNorm => g.layer_norm(x[0], 1..2, x[1], x[2])?,
            OpCheck::Attention => g.attention(x[0], x[1], x[2], 2, 0.2)?,
            OpCheck::Mhsa => {
                let p = MhsaParams {
                    wq: x[1],
                    bq: x[2],
                    wk: x[3],
                    bk: x[4],
                    wv: x[5],
                    bv: x[6],
                    wo: x[7],
                    bo: x[8],
                };
                g.mhsa(x[0], &p, 2, 0.0)?
            }
        };
        projection(g, y)
    }
}
