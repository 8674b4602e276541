//! Synthetic reverberant multichannel scenes.

mod dataset;
mod rir;
mod signals;

pub use dataset::{
    build_dataset, example_seed, generate_example, load_entry, read_manifest, ManifestEntry, SceneRanges,
    MANIFEST_FILE,
};
pub use rir::{
    simulate_noise_rir, simulate_rir, Rir, RoomSpec, ARRAY_RADIUS, MAX_ORDER, SINC_HALF_WIDTH,
    SPEED_OF_SOUND,
};
pub use signals::{colored_noise, convolve, convolve_many, synthetic_speech, white_noise};

use crate::audio::{Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};
use signals::energy;

/// Peak level of the loudest mic in a finished mixture.
pub const MIX_PEAK: f64 = 0.5;

/// One noisy mixture together with the components it was built from.
#[derive(Clone, Debug)]
pub struct SceneExample {
    /// Noisy reverberant mixture, one channel per mic.
    pub y: Waveform,
    /// Direct-path speech at the reference mic (mic 0).
    pub s: Waveform,
    pub snr_db: f64,
    pub metadata: RoomSpec,
    /// Direct-path speech per mic.
    pub direct: Vec<Vec<f64>>,
    /// Reverberant speech minus its direct path, per mic.
    pub reverb: Vec<Vec<f64>>,
    /// Scaled noise image per mic.
    pub noise: Vec<Vec<f64>>,
}

impl SceneExample {
    /// `10 log10(|s + r|^2 / |z|^2)` at mic `m`.
    pub fn realized_snr_db(&self, m: usize) -> f64 {
        let x: f64 = self.direct[m]
            .iter()
            .zip(&self.reverb[m])
            .map(|(s, r)| (s + r).powi(2))
            .sum();
        10.0 * (x / energy(&self.noise[m])).log10()
    }

    /// Largest `|y - (s + r + z)|` over all mics and samples.
    pub fn decomposition_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for (m, y) in self.y.channels().iter().enumerate() {
            for (i, &v) in y.iter().enumerate() {
                let sum = self.direct[m][i] + self.reverb[m][i] + self.noise[m][i];
                worst = worst.max((v - sum).abs());
            }
        }
        worst
    }
}

/// Places `speech` and `noise` in the room described by `spec` and mixes them
/// at `snr_db`, measured at mic 0 between reverberant speech and noise.
///
/// Components are cut to the speech length, then jointly scaled so the
/// loudest mic peaks at [`MIX_PEAK`]. The mixture is formed as
/// `y = s + r + z` from the stored components.
pub fn spatialize(speech: &[f64], noise: &[f64], spec: &RoomSpec, snr_db: f64) -> Result<SceneExample> {
    if energy(speech) == 0.0 {
        return Err(Error::Input("speech signal is silent".into()));
    }
    if energy(noise) == 0.0 {
        return Err(Error::Input("noise signal is silent".into()));
    }
    if noise.len() != speech.len() {
        return Err(Error::Input(format!(
            "noise has {} samples, speech has {}",
            noise.len(),
            speech.len()
        )));
    }
    if !snr_db.is_finite() {
        return Err(Error::Input(format!("snr {snr_db} dB is not finite")));
    }
    let n = speech.len();
    let speech_rir = simulate_rir(spec)?;
    let noise_rir = simulate_noise_rir(spec)?;
    let filters: Vec<&[f64]> = speech_rir
        .direct
        .iter()
        .chain(&speech_rir.full)
        .map(Vec::as_slice)
        .collect();
    let mut conv = convolve_many(speech, &filters);
    let full = conv.split_off(spec.mic_count);
    let mut direct = conv;
    let mut reverb: Vec<Vec<f64>> = full
        .iter()
        .zip(&direct)
        .map(|(f, d)| f[..n].iter().zip(&d[..n]).map(|(a, b)| a - b).collect())
        .collect();
    direct.iter_mut().for_each(|d| d.truncate(n));
    let noise_filters: Vec<&[f64]> = noise_rir.full.iter().map(Vec::as_slice).collect();
    let mut noise_img = convolve_many(noise, &noise_filters);
    noise_img.iter_mut().for_each(|z| z.truncate(n));

    let x0: f64 = direct[0].iter().zip(&reverb[0]).map(|(s, r)| (s + r).powi(2)).sum();
    let z0 = energy(&noise_img[0]);
    if x0 == 0.0 || z0 == 0.0 {
        return Err(Error::Input(
            "source image at the reference mic is silent within the clip".into(),
        ));
    }
    let gain = (x0 / (z0 * 10f64.powf(snr_db / 10.0))).sqrt();
    noise_img.iter_mut().flatten().for_each(|v| *v *= gain);

    let mix = |direct: &[Vec<f64>], reverb: &[Vec<f64>], noise: &[Vec<f64>]| -> Vec<Vec<f64>> {
        (0..spec.mic_count)
            .map(|m| (0..n).map(|i| direct[m][i] + reverb[m][i] + noise[m][i]).collect())
            .collect()
    };
    let peak = mix(&direct, &reverb, &noise_img)
        .iter()
        .flatten()
        .fold(0.0f64, |a, v| a.max(v.abs()));
    let scale = MIX_PEAK / peak;
    for c in direct.iter_mut().chain(reverb.iter_mut()).chain(noise_img.iter_mut()) {
        c.iter_mut().for_each(|v| *v *= scale);
    }
    let y = Waveform::new(mix(&direct, &reverb, &noise_img), SAMPLE_RATE)?;
    let s = Waveform::mono(direct[0].clone())?;
    Ok(SceneExample {
        y,
        s,
        snr_db,
        metadata: spec.clone(),
        direct,
        reverb,
        noise: noise_img,
    })
}
