//! Synthetic source signals and FFT convolution.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::audio::SAMPLE_RATE;

/// Full linear convolution of `x` with each filter in `filters`, computed
/// with one shared transform of `x`.
pub fn convolve_many(x: &[f64], filters: &[&[f64]]) -> Vec<Vec<f64>> {
    let longest = filters.iter().map(|h| h.len()).max().unwrap_or(0);
    if x.is_empty() || longest == 0 {
        return filters.iter().map(|_| Vec::new()).collect();
    }
    let n = (x.len() + longest - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut xs: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    xs.resize(n, Complex64::default());
    fwd.process(&mut xs);
    filters
        .iter()
        .map(|h| {
            let out_len = x.len() + h.len() - 1;
            let mut hs: Vec<Complex64> = h.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            hs.resize(n, Complex64::default());
            fwd.process(&mut hs);
            for (a, b) in hs.iter_mut().zip(&xs) {
                *a *= b;
            }
            inv.process(&mut hs);
            hs[..out_len].iter().map(|c| c.re / n as f64).collect()
        })
        .collect()
}

pub fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    convolve_many(x, &[h]).pop().unwrap_or_default()
}

/// Two-pole resonator run in place.
fn resonate(x: &mut [f64], freq: f64, bandwidth: f64) {
    let fs = SAMPLE_RATE as f64;
    let r = (-PI * bandwidth / fs).exp();
    let a1 = 2.0 * r * (2.0 * PI * freq / fs).cos();
    let a2 = -r * r;
    let gain = 1.0 - r;
    let (mut y1, mut y2) = (0.0, 0.0);
    for v in x.iter_mut() {
        let y = gain * *v + a1 * y1 + a2 * y2;
        y2 = y1;
        y1 = y;
        *v = y;
    }
}

/// Voiced, speech-like signal: a glottal-ish harmonic source with a wandering
/// pitch, two formant resonances that drift per syllable, a 3 to 6 Hz
/// syllabic envelope with pauses, and short fricative noise bursts.
pub fn synthetic_speech<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    let fs = SAMPLE_RATE as f64;
    let f0_base = rng.gen_range(90.0..220.0);
    let vib_rate = rng.gen_range(0.5..2.0);
    let vib_depth = rng.gen_range(0.05..0.2);
    let syll_rate = rng.gen_range(3.0..6.0);
    let syll_len = (fs / syll_rate) as usize;
    let mut out = vec![0.0; len];
    let mut phase = 0.0;
    let mut start = 0;
    while start < len {
        let end = (start + syll_len).min(len);
        let voiced = rng.gen_bool(0.8) || start == 0;
        let fricative = rng.gen_bool(0.3);
        let f1 = rng.gen_range(300.0..900.0);
        let f2 = rng.gen_range(900.0..2500.0);
        let level = rng.gen_range(0.3..1.0);
        let mut seg = vec![0.0; end - start];
        if voiced {
            for (i, v) in seg.iter_mut().enumerate() {
                let t = (start + i) as f64 / fs;
                let f0 = f0_base * (1.0 + vib_depth * (2.0 * PI * vib_rate * t).sin());
                phase += 2.0 * PI * f0 / fs;
                // sawtooth-like harmonic stack
                *v = (1..=12).map(|k| (k as f64 * phase).sin() / k as f64).sum::<f64>();
            }
            let mut a = seg.clone();
            let mut b = seg;
            resonate(&mut a, f1, 80.0);
            resonate(&mut b, f2, 120.0);
            seg = a.iter().zip(&b).map(|(x, y)| x + 0.5 * y).collect();
        }
        if fricative {
            let burst = seg.len() / 4;
            let off = seg.len() - burst;
            let mut noise: Vec<f64> = (0..burst).map(|_| StandardNormal.sample(rng)).collect();
            resonate(&mut noise, rng.gen_range(3000.0..6000.0), 1500.0);
            for (v, z) in seg[off..].iter_mut().zip(&noise) {
                *v += 0.5 * z;
            }
        }
        let n = seg.len() as f64;
        for (i, v) in seg.iter_mut().enumerate() {
            let env = (PI * i as f64 / n).sin().powi(2);
            out[start + i] = level * env * *v;
        }
        // occasional pause between syllables
        start = end + if rng.gen_bool(0.2) { syll_len / 2 } else { 0 };
    }
    normalize_peak(&mut out, 0.5);
    out
}

/// Stationary colored noise: white noise through a one-pole low-pass of
/// random cutoff, mixed with a random share of the white component.
pub fn colored_noise<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    let pole: f64 = rng.gen_range(0.0..0.98);
    let white_share: f64 = rng.gen_range(0.05..0.5);
    let mut y = 0.0;
    let mut out: Vec<f64> = (0..len)
        .map(|_| {
            let w: f64 = StandardNormal.sample(rng);
            y = pole * y + (1.0 - pole) * w;
            y + white_share * w
        })
        .collect();
    normalize_peak(&mut out, 0.5);
    out
}

pub fn white_noise<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

pub(crate) fn normalize_peak(x: &mut [f64], peak: f64) {
    let m = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m > 0.0 {
        let g = peak / m;
        x.iter_mut().for_each(|v| *v *= g);
    }
}

pub(crate) fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}
