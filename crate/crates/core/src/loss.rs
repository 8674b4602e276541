//! Phase-constrained magnitude loss and SI-SDR.

use deftan_numerics::{Graph, Real, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::stft::{self, stft_op, StftConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub pcm: f64,
    pub speech_term: f64,
    pub noise_term: f64,
}

/// Scalar loss nodes on a graph.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub pcm: Var,
    pub speech_term: Var,
    pub noise_term: Var,
}

impl LossVars {
    pub fn report<T: Real>(&self, g: &Graph<T>) -> LossReport {
        let v = |x: Var| g.data(x)[0].to_f64_lossy();
        LossReport {
            pcm: v(self.pcm),
            speech_term: v(self.speech_term),
            noise_term: v(self.noise_term),
        }
    }
}

fn check_pair(a: &Waveform, b: &Waveform, what: &str) -> Result<()> {
    if a.num_channels() != 1 || b.num_channels() != 1 {
        return Err(Error::Input(format!("{what} needs single-channel signals")));
    }
    if a.len() != b.len() {
        return Err(Error::Input(format!(
            "{what} length mismatch: {} vs {} samples",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// `mean over (f, t) of ||A_r| - |B_r|| + ||A_i| - |B_i||` with `|A|` fixed.
fn spectral_magnitude_term<T: Real>(g: &mut Graph<T>, abs_a: Var, b: Var) -> Result<Var> {
    let abs_b = g.abs(b)?;
    let d = g.sub(abs_a, abs_b)?;
    let d = g.abs(d)?;
    let m = g.mean_all(d)?;
    // the mean ran over both planes; the term sums them
    Ok(g.scale(m, T::lit(2.0))?)
}

/// PCM loss of an estimate `est` shaped `(1, N)` on the graph, against the
/// clean target and the noisy reference channel.
pub fn pcm_loss_graph<T: Real>(
    g: &mut Graph<T>,
    est: Var,
    clean: &Waveform,
    noisy_ref: &Waveform,
    cfg: StftConfig,
) -> Result<LossVars> {
    check_pair(clean, noisy_ref, "pcm loss")?;
    let shape = g.shape(est);
    if shape != [1, clean.len()] {
        return Err(Error::Input(format!(
            "pcm loss estimate has shape {shape:?}, target has {} samples",
            clean.len()
        )));
    }
    // Z = Y - S in the spectral domain, the same way Z-hat is formed below
    let spec_s = stft::stft::<T>(clean, cfg)?.to_graph_layout();
    let spec_y = stft::stft::<T>(noisy_ref, cfg)?.to_graph_layout();
    let mut abs_s = spec_s.clone();
    abs_s.data_mut().iter_mut().for_each(|v| *v = v.abs());
    let mut abs_z = spec_y.clone();
    abs_z.data_mut().iter_mut().zip(spec_s.data()).for_each(|(z, s)| *z = (*z - *s).abs());
    let abs_s = g.constant(abs_s);
    let abs_z = g.constant(abs_z);
    let y = g.constant(spec_y);

    let s_hat = stft_op(g, est, cfg)?;
    let z_hat = g.sub(y, s_hat)?;
    let speech_term = spectral_magnitude_term(g, abs_s, s_hat)?;
    let noise_term = spectral_magnitude_term(g, abs_z, z_hat)?;
    let sum = g.add(speech_term, noise_term)?;
    let pcm = g.scale(sum, T::lit(0.5))?;
    Ok(LossVars {
        pcm,
        speech_term,
        noise_term,
    })
}

pub fn pcm_loss(
    est: &Waveform,
    clean: &Waveform,
    noisy_ref: &Waveform,
    cfg: StftConfig,
) -> Result<LossReport> {
    check_pair(est, clean, "pcm loss")?;
    let mut g = Graph::<f64>::new().without_recording();
    let e = g.constant(Tensor::new(&[1, est.len()], est.channel(0).to_vec())?);
    let vars = pcm_loss_graph(&mut g, e, clean, noisy_ref, cfg)?;
    Ok(vars.report(&g))
}

/// Scale-invariant SDR in dB after removing each signal's mean. Returns
/// `+inf` when the residual is below `1e-12` of the projected target energy
/// and `-inf` for an estimate with no energy.
pub fn si_sdr(est: &Waveform, reference: &Waveform) -> Result<f64> {
    check_pair(est, reference, "si-sdr")?;
    let center = |x: &[f64]| {
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        x.iter().map(|v| v - mean).collect::<Vec<_>>()
    };
    let (e, s) = (center(est.channel(0)), center(reference.channel(0)));
    let ss: f64 = s.iter().map(|v| v * v).sum();
    if ss == 0.0 {
        return Err(Error::Input("si-sdr reference has no energy".into()));
    }
    if e.iter().all(|&v| v == 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let alpha = e.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>() / ss;
    let target: f64 = alpha * alpha * ss;
    let residual: f64 = e
        .iter()
        .zip(&s)
        .map(|(a, b)| (alpha * b - a).powi(2))
        .sum();
    if residual < 1e-12 * target {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (target / residual).log10())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub si_sdr_db: f64,
    /// Gain over the unprocessed reference channel.
    pub si_sdr_improvement_db: f64,
}

pub fn metric_report(enhanced: &Waveform, clean: &Waveform, noisy_ref: &Waveform) -> Result<MetricReport> {
    let si_sdr_db = si_sdr(enhanced, clean)?;
    let base = si_sdr(noisy_ref, clean)?;
    Ok(MetricReport {
        si_sdr_db,
        si_sdr_improvement_db: si_sdr_db - base,
    })
}
