//! Central-difference verification of analytic gradients.

pub mod suite;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{NumericsError, Result};
use crate::graph::{Graph, Mode, Var};
use crate::real::Real;
use crate::tensor::Tensor;

/// A scalar-valued composite that can be evaluated at any precision.
pub trait ScalarFn {
    fn eval<T: Real>(&self, g: &mut Graph<T>, inputs: &[Var]) -> Result<Var>;
}

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Lower bound of the relative-error denominator.
    pub floor: f64,
    /// Check at most this many randomly chosen elements per input.
    pub max_elements: Option<usize>,
    /// Graph mode; training mode reuses one dropout seed for every evaluation.
    pub mode: Mode,
    pub seed: u64,
    /// Scales analytic gradients by `1 + corrupt` before comparing. Lets
    /// callers confirm that a broken gradient is caught.
    pub corrupt: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-4,
            floor: 1e-5,
            max_elements: None,
            mode: Mode::Eval,
            seed: 0,
            corrupt: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(input, element)` with the largest error.
    pub worst: Option<(usize, usize)>,
    /// Full analytic gradient per input; zeros for detached inputs.
    pub analytic: Vec<Vec<f64>>,
    /// `(element, central difference)` for each checked element.
    pub numeric: Vec<Vec<(usize, f64)>>,
}

fn eval_value<F: ScalarFn>(f: &F, point: &[Tensor<f64>], opts: &GradCheckOptions) -> Result<f64> {
    let mut g = Graph::<f64>::with_mode(opts.mode, opts.seed).without_recording();
    let vars: Vec<Var> = point.iter().map(|t| g.constant(t.clone())).collect();
    let out = f.eval(&mut g, &vars)?;
    Ok(g.data(out)[0])
}

fn analytic<T: Real, F: ScalarFn>(
    f: &F,
    point: &[Tensor<f64>],
    opts: &GradCheckOptions,
) -> Result<Vec<Vec<f64>>> {
    let mut g = Graph::<T>::with_mode(opts.mode, opts.seed);
    let vars: Vec<Var> = point.iter().map(|t| g.leaf(t.cast())).collect();
    let out = f.eval(&mut g, &vars)?;
    if g.value(out).numel() != 1 {
        return Err(NumericsError::Usage(format!(
            "grad_check needs a scalar function, got shape {:?}",
            g.shape(out)
        )));
    }
    let grads = g.backward(out)?;
    Ok(vars
        .iter()
        .zip(point)
        .map(|(&v, t)| {
            grads
                .get_or_zeros(v, t.numel())
                .into_iter()
                .map(|x| x.to_f64_lossy() * (1.0 + opts.corrupt))
                .collect()
        })
        .collect())
}

fn compare<F: ScalarFn>(
    f: &F,
    point: &[Tensor<f64>],
    opts: &GradCheckOptions,
    analytic: Vec<Vec<f64>>,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        numeric: vec![Vec::new(); point.len()],
        analytic,
    };
    let mut probe = point.to_vec();
    for (i, t) in point.iter().enumerate() {
        if !t.requires_grad {
            continue;
        }
        let elements: Vec<usize> = match opts.max_elements {
            Some(m) if m < t.numel() => {
                let mut e = sample(&mut rng, t.numel(), m).into_vec();
                e.sort_unstable();
                e
            }
            _ => (0..t.numel()).collect(),
        };
        for e in elements {
            let x0 = t.data()[e];
            probe[i].data_mut()[e] = x0 + opts.step;
            let plus = eval_value(f, &probe, opts)?;
            probe[i].data_mut()[e] = x0 - opts.step;
            let minus = eval_value(f, &probe, opts)?;
            probe[i].data_mut()[e] = x0;
            let fd = (plus - minus) / (2.0 * opts.step);
            let a = report.analytic[i][e];
            let err = (a - fd).abs() / a.abs().max(fd.abs()).max(opts.floor);
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((i, e));
            }
            report.numeric[i].push((e, fd));
        }
    }
    Ok(report)
}

/// Checks double-precision analytic gradients against central differences.
///
/// Returns the maximum over checked elements of
/// `|analytic - fd| / max(|analytic|, |fd|, floor)`. Inputs whose
/// `requires_grad` is false are reported with zero gradient and skipped.
pub fn grad_check<F: ScalarFn>(
    f: &F,
    point: &[Tensor<f64>],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let a = analytic::<f64, F>(f, point, opts)?;
    compare(f, point, opts, a)
}

/// Checks single-precision analytic gradients against double-precision
/// central differences of the same function.
pub fn grad_check_single<F: ScalarFn>(
    f: &F,
    point: &[Tensor<f64>],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let rounded: Vec<Tensor<f64>> = point.iter().map(|t| t.cast::<f32>().cast()).collect();
    let a = analytic::<f32, F>(f, &rounded, opts)?;
    compare(f, &rounded, opts, a)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct SumSquares;

    impl ScalarFn for SumSquares {
        fn eval<T: Real>(&self, g: &mut Graph<T>, x: &[Var]) -> Result<Var> {
            let sq = g.mul(x[0], x[0])?;
            g.sum_all(sq)
        }
    }

    struct Identity;

    impl ScalarFn for Identity {
        fn eval<T: Real>(&self, _g: &mut Graph<T>, x: &[Var]) -> Result<Var> {
            Ok(x[0])
        }
    }

    #[test]
    fn quadratic_gradient_is_exact() {
        let x = Tensor::new(&[2], vec![1.0, 2.0]).unwrap().with_grad();
        let r = grad_check(&SumSquares, &[x], &GradCheckOptions::default()).unwrap();
        assert_eq!(r.analytic[0], vec![2.0, 4.0]);
        assert!(r.max_rel_error < 1e-8, "{}", r.max_rel_error);
    }

    #[test]
    fn detached_input_reports_zero_gradient() {
        let x = Tensor::new(&[2], vec![1.0, 2.0]).unwrap();
        let r = grad_check(&SumSquares, &[x], &GradCheckOptions::default()).unwrap();
        assert_eq!(r.analytic[0], vec![0.0, 0.0]);
        assert!(r.numeric[0].is_empty());
        assert_eq!(r.max_rel_error, 0.0);
    }

    #[test]
    fn non_scalar_output_is_usage_error() {
        let x = Tensor::new(&[2], vec![1.0, 2.0]).unwrap().with_grad();
        let err = grad_check(&Identity, &[x], &GradCheckOptions::default()).unwrap_err();
        assert!(matches!(err, NumericsError::Usage(_)));
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let x = Tensor::new(&[2], vec![1.0, 2.0]).unwrap().with_grad();
        let opts = GradCheckOptions {
            corrupt: 0.01,
            ..Default::default()
        };
        let r = grad_check(&SumSquares, &[x], &opts).unwrap();
        assert!(r.max_rel_error > 5e-3);
    }
}
