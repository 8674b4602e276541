//! Finite-difference verification of every differentiable op, from the
//! numerics primitives up to the full tiny model.

use deftan_numerics::gradcheck::suite::OpCheck;
use deftan_numerics::{
    grad_check, grad_check_single, BoundParams, GradCheckOptions, Graph, NumericsError, Real,
    ScalarFn, Tensor, Var,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::audio::Waveform;
use crate::error::Result;
use crate::loss::pcm_loss_graph;
use crate::model::{DeftAn, ModelConfig};
use crate::stft::{apply_mask_op, istft_op, stft_op, StftConfig};

pub const DOUBLE_TOLERANCE: f64 = 1e-6;
pub const SINGLE_TOLERANCE: f64 = 1e-4;
pub const MODEL_TOLERANCE: f64 = 1e-3;

const SMALL: StftConfig = StftConfig {
    fft_size: 16,
    hop: 4,
};
const SIGNAL_LEN: usize = 70;

fn to_numerics(e: crate::error::Error) -> NumericsError {
    match e {
        crate::error::Error::Numerics(n) => n,
        other => NumericsError::Usage(other.to_string()),
    }
}

fn random_signal(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn projection<T: Real>(g: &mut Graph<T>, y: Var) -> deftan_numerics::Result<Var> {
    let n = g.value(y).numel();
    let w = random_signal(0x5eed, n).into_iter().map(T::lit).collect();
    g.weighted_sum(y, w)
}

/// Signal-path ops defined outside the numerics core.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignalCheck {
    Stft,
    Istft,
    ApplyMask,
    PcmLoss,
}

impl SignalCheck {
    pub const ALL: [SignalCheck; 4] = [
        SignalCheck::Stft,
        SignalCheck::Istft,
        SignalCheck::ApplyMask,
        SignalCheck::PcmLoss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SignalCheck::Stft => "stft",
            SignalCheck::Istft => "istft",
            SignalCheck::ApplyMask => "apply_mask",
            SignalCheck::PcmLoss => "pcm_loss",
        }
    }

    pub fn point(self, seed: u64) -> Vec<Tensor<f64>> {
        let bins = SMALL.bins();
        let frames = SMALL.frames(SIGNAL_LEN).expect("long enough");
        let t = |shape: &[usize], s: u64| {
            let n = shape.iter().product();
            Tensor::new(shape, random_signal(seed ^ s, n)).expect("shape").with_grad()
        };
        match self {
            SignalCheck::Stft => vec![t(&[2, SIGNAL_LEN], 1)],
            SignalCheck::Istft => vec![t(&[2, 2, bins, frames], 2)],
            SignalCheck::ApplyMask => vec![t(&[2, bins, frames], 3), t(&[2, bins, frames], 4)],
            SignalCheck::PcmLoss => vec![t(&[1, SIGNAL_LEN], 5)],
        }
    }
}

impl ScalarFn for SignalCheck {
    fn eval<T: Real>(&self, g: &mut Graph<T>, x: &[Var]) -> deftan_numerics::Result<Var> {
        let y = match self {
            SignalCheck::Stft => stft_op(g, x[0], SMALL).map_err(to_numerics)?,
            SignalCheck::Istft => istft_op(g, x[0], SMALL, SIGNAL_LEN).map_err(to_numerics)?,
            SignalCheck::ApplyMask => apply_mask_op(g, x[0], x[1]).map_err(to_numerics)?,
            SignalCheck::PcmLoss => {
                let clean = Waveform::mono(random_signal(6, SIGNAL_LEN)).expect("finite");
                let noisy = Waveform::mono(random_signal(7, SIGNAL_LEN)).expect("finite");
                let l = pcm_loss_graph(g, x[0], &clean, &noisy, SMALL).map_err(to_numerics)?;
                return Ok(l.pcm);
            }
        };
        projection(g, y)
    }
}

/// PCM loss of the full network as a function of its parameters, on fixed
/// noisy and clean signals.
pub struct ModelLoss {
    pub model: DeftAn<f64>,
    pub noisy: Waveform,
    pub clean: Waveform,
}

impl ModelLoss {
    /// Tiny-preset model on 0.1 s of random two-mic audio.
    pub fn tiny(seed: u64) -> Result<Self> {
        let cfg = ModelConfig::tiny();
        let n = 1600;
        let noisy = Waveform::new(
            (0..cfg.mics).map(|m| random_signal(seed ^ (10 + m as u64), n)).collect(),
            crate::audio::SAMPLE_RATE,
        )?;
        let clean = Waveform::mono(random_signal(seed ^ 20, n).iter().map(|v| 0.5 * v).collect())?;
        let mut model = DeftAn::<f64>::new(cfg, seed)?;
        // move the output layer off its near-identity start so every path
        // carries gradient
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 30);
        for p in model.params.iter_mut().filter(|p| p.name.starts_with("down.")) {
            p.tensor.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.3..0.3));
        }
        Ok(Self { model, noisy, clean })
    }

    pub fn point(&self) -> Vec<Tensor<f64>> {
        self.model.params.iter().map(|p| p.tensor.clone()).collect()
    }
}

impl ScalarFn for ModelLoss {
    fn eval<T: Real>(&self, g: &mut Graph<T>, x: &[Var]) -> deftan_numerics::Result<Var> {
        let model = self.model.cast::<T>();
        let p = BoundParams::from_vars(x.to_vec());
        let out = model.enhance_graph(g, &p, &self.noisy).map_err(to_numerics)?;
        let reference = self.noisy.select(0);
        let l = pcm_loss_graph(g, out.wave, &self.clean, &reference, model.config().stft())
            .map_err(to_numerics)?;
        Ok(l.pcm)
    }
}

/// One line of the suite report. `single` is absent for the end-to-end
/// model, which is checked in double precision only.
#[derive(Clone, Debug, Serialize)]
pub struct SuiteRow {
    pub op: String,
    pub double: f64,
    pub single: Option<f64>,
    pub passed: bool,
}

impl SuiteRow {
    /// Error relative to its tolerance; above 1 fails.
    pub fn severity(&self) -> f64 {
        if self.single.is_none() {
            self.double / MODEL_TOLERANCE
        } else {
            (self.double / DOUBLE_TOLERANCE).max(self.single.unwrap_or(0.0) / SINGLE_TOLERANCE)
        }
    }
}

fn check_pair<F: ScalarFn>(
    name: &str,
    f: &F,
    point: &[Tensor<f64>],
    opts: GradCheckOptions,
    corrupt: Option<&str>,
) -> Result<SuiteRow> {
    let opts = GradCheckOptions {
        corrupt: if corrupt == Some(name) { 0.5 } else { 0.0 },
        ..opts
    };
    let double = grad_check(f, point, &opts)?.max_rel_error;
    let single = grad_check_single(f, point, &GradCheckOptions { floor: 1e-3, ..opts })?.max_rel_error;
    Ok(SuiteRow {
        op: name.to_string(),
        double,
        single: Some(single),
        passed: double < DOUBLE_TOLERANCE && single < SINGLE_TOLERANCE,
    })
}

/// Names accepted by [`run_suite`]'s `corrupt` hook, one per checked op.
pub fn suite_ops() -> Vec<&'static str> {
    OpCheck::ALL
        .iter()
        .map(|o| o.name())
        .chain(SignalCheck::ALL.iter().map(|o| o.name()))
        .chain(["tiny_model"])
        .collect()
}

/// Runs every check once. `corrupt` names an op whose analytic gradient is
/// scaled by 1.5 before comparison, to show that the suite catches it.
pub fn run_suite(corrupt: Option<&str>) -> Result<Vec<SuiteRow>> {
    let mut rows = Vec::new();
    for op in OpCheck::ALL {
        let opts = GradCheckOptions {
            mode: op.mode(),
            seed: 11,
            ..Default::default()
        };
        rows.push(check_pair(op.name(), &op, &op.point(1), opts, corrupt)?);
    }
    for op in SignalCheck::ALL {
        rows.push(check_pair(op.name(), &op, &op.point(1), GradCheckOptions::default(), corrupt)?);
    }
    let model = ModelLoss::tiny(3)?;
    // the loss has thousands of |.| kinks; a small step keeps the central
    // difference from straddling one
    let opts = GradCheckOptions {
        step: 1e-6,
        max_elements: Some(3),
        seed: 5,
        corrupt: if corrupt == Some("tiny_model") { 0.5 } else { 0.0 },
        ..Default::default()
    };
    let double = grad_check(&model, &model.point(), &opts)?.max_rel_error;
    rows.push(SuiteRow {
        op: "tiny_model".into(),
        double,
        single: None,
        passed: double < MODEL_TOLERANCE,
    });
    Ok(rows)
}
