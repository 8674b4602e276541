use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::real::Real;
use crate::tensor::Tensor;

impl<T: Real> Graph<T> {
    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let total = super::sum(self.data(x));
        let n = self.value(x).numel();
        self.push("sum", Tensor::scalar(total), &[x], move |_, g| {
            vec![Some(vec![g[0]; n])]
        })
    }

    pub fn mean_all(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).numel();
        let inv = T::one() / T::lit(n as f64);
        let mean = super::sum(self.data(x)) * inv;
        self.push("mean", Tensor::scalar(mean), &[x], move |_, g| {
            vec![Some(vec![g[0] * inv; n])]
        })
    }

    /// `sum_i weights[i] * x[i]`; handy for turning a tensor into a scalar
    /// objective with a generic gradient.
    pub fn weighted_sum(&mut self, x: Var, weights: Vec<T>) -> Result<Var> {
        if weights.len() != self.value(x).numel() {
            return Err(crate::error::shape_err(
                "weighted_sum",
                format!(
                    "{} weights for {} elements",
                    weights.len(),
                    self.value(x).numel()
                ),
            ));
        }
        let total = super::dot(self.data(x), &weights);
        self.push("weighted_sum", Tensor::scalar(total), &[x], move |_, g| {
            vec![Some(weights.iter().map(|&w| w * g[0]).collect())]
        })
    }
}
