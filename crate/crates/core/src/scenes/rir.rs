//! Image-source room impulse responses with a diffuse late tail.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::audio::SAMPLE_RATE;
use crate::error::{Error, Result};

pub const SPEED_OF_SOUND: f64 = 343.0;
/// Highest total number of wall reflections per image.
pub const MAX_ORDER: i32 = 6;
/// Half-length of the windowed-sinc fractional delay, in samples.
pub const SINC_HALF_WIDTH: usize = 16;
pub const ARRAY_RADIUS: f64 = 0.10;

/// Shoebox room with one speech source, one noise source and a circular
/// array in the horizontal plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    /// Length, width, height in metres.
    pub dimensions: [f64; 3],
    pub rt60: f64,
    pub source_pos: [f64; 3],
    pub noise_pos: [f64; 3],
    pub array_center: [f64; 3],
    pub array_radius: f64,
    pub mic_count: usize,
    pub seed: u64,
    /// Fully absorbing walls: direct paths only.
    #[serde(default)]
    pub anechoic: bool,
}

impl RoomSpec {
    pub fn validate(&self) -> Result<()> {
        let inside = |p: &[f64; 3], what: &str| -> Result<()> {
            for (i, (&v, &l)) in p.iter().zip(&self.dimensions).enumerate() {
                if !(v > 0.0 && v < l) {
                    return Err(Error::Geometry(format!(
                        "{what} coordinate {i} = {v} m is outside the room (0, {l})"
                    )));
                }
            }
            Ok(())
        };
        if self.dimensions.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::Geometry(format!(
                "room dimensions {:?} must be positive",
                self.dimensions
            )));
        }
        if self.mic_count == 0 || self.array_radius.is_nan() || self.array_radius < 0.0 {
            return Err(Error::Geometry("array needs at least one mic and a non-negative radius".into()));
        }
        if !self.anechoic && !(0.2..=1.3).contains(&self.rt60) {
            return Err(Error::Geometry(format!("rt60 {} s outside [0.2, 1.3]", self.rt60)));
        }
        inside(&self.source_pos, "source")?;
        inside(&self.noise_pos, "noise source")?;
        for (m, p) in self.mic_positions().iter().enumerate() {
            inside(p, &format!("mic {m}"))?;
        }
        Ok(())
    }

    /// Mic `m` sits at angle `2 pi m / M` on the array circle.
    pub fn mic_positions(&self) -> Vec<[f64; 3]> {
        (0..self.mic_count)
            .map(|m| {
                let a = 2.0 * PI * m as f64 / self.mic_count as f64;
                let c = self.array_center;
                [
                    c[0] + self.array_radius * a.cos(),
                    c[1] + self.array_radius * a.sin(),
                    c[2],
                ]
            })
            .collect()
    }

    pub fn volume(&self) -> f64 {
        self.dimensions.iter().product()
    }

    pub fn surface(&self) -> f64 {
        let [x, y, z] = self.dimensions;
        2.0 * (x * y + x * z + y * z)
    }

    /// Wall absorption from Sabine's formula `rt60 = 0.161 V / (S alpha)`,
    /// capped at 1; exactly 1 for an anechoic room.
    pub fn absorption(&self) -> f64 {
        if self.anechoic {
            return 1.0;
        }
        (0.161 * self.volume() / (self.surface() * self.rt60)).min(1.0)
    }
}

/// Impulse responses from one source to every mic, split into the direct
/// path and the full response.
#[derive(Clone, Debug)]
pub struct Rir {
    pub direct: Vec<Vec<f64>>,
    pub full: Vec<Vec<f64>>,
    /// Direct-path delay per mic, in samples.
    pub delays: Vec<f64>,
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Adds `gain * h(n - tau)` where `h` is a Hann-windowed sinc.
fn add_fractional_impulse(buf: &mut [f64], tau: f64, gain: f64) {
    let h = SINC_HALF_WIDTH as f64;
    let start = (tau.floor() as i64 - SINC_HALF_WIDTH as i64 + 1).max(0) as usize;
    let end = ((tau.floor() as i64 + SINC_HALF_WIDTH as i64) as usize).min(buf.len().saturating_sub(1));
    for (n, b) in buf.iter_mut().enumerate().take(end + 1).skip(start) {
        let x = n as f64 - tau;
        if x.abs() >= h {
            continue;
        }
        let sinc = if x == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
        let window = 0.5 * (1.0 + (PI * x / h).cos());
        *b += gain * sinc * window;
    }
}

/// Impulse responses from the speech source to each mic of `spec`.
///
/// Images up to [`MAX_ORDER`] reflections carry `beta^k / (4 pi d)` with
/// `beta = sqrt(1 - alpha)`. They are complete only up to the delay of the
/// sphere inscribed in the order-limited image lattice; past that delay the
/// images fade out and a seeded Gaussian tail with amplitude envelope
/// `exp(-6.9 t / rt60)` (60 dB energy decay per rt60) fades in, its level
/// matched to the image power just before the crossover.
pub fn simulate_rir(spec: &RoomSpec) -> Result<Rir> {
    simulate_rir_from(spec, &spec.source_pos, 0)
}

/// Responses from the noise source; its late tail uses an independent stream.
pub fn simulate_noise_rir(spec: &RoomSpec) -> Result<Rir> {
    simulate_rir_from(spec, &spec.noise_pos, 1)
}

/// Crossfade length between images and tail, in samples (10 ms).
const CROSSFADE: f64 = 160.0;
/// Window before the crossover used to measure image power (20 ms).
const MATCH_WINDOW: usize = 320;

/// Delay in samples up to which every image of order at most [`MAX_ORDER`]
/// is present: the image lattice region `sum |x_i| / L_i <= MAX_ORDER`
/// contains a sphere of radius `MAX_ORDER / |1/L|`.
fn mixing_delay(spec: &RoomSpec) -> f64 {
    let inv: f64 = spec.dimensions.iter().map(|l| l.powi(-2)).sum::<f64>().sqrt();
    MAX_ORDER as f64 / inv / SPEED_OF_SOUND * SAMPLE_RATE as f64
}

fn simulate_rir_from(spec: &RoomSpec, source: &[f64; 3], stream: u64) -> Result<Rir> {
    spec.validate()?;
    let fs = SAMPLE_RATE as f64;
    let mics = spec.mic_positions();
    let alpha = spec.absorption();
    let beta = (1.0 - alpha).max(0.0).sqrt();
    let max_dist = mics.iter().map(|m| distance(m, source)).fold(0.0, f64::max);
    if mics.iter().any(|m| distance(m, source) < 1e-3) {
        return Err(Error::Geometry("source coincides with a microphone".into()));
    }
    let tail_seconds = if spec.anechoic { 0.0 } else { spec.rt60 };
    let len = ((max_dist / SPEED_OF_SOUND + tail_seconds) * fs).ceil() as usize + 2 * SINC_HALF_WIDTH;
    let mut direct = Vec::with_capacity(mics.len());
    let mut full = Vec::with_capacity(mics.len());
    let mut delays = Vec::with_capacity(mics.len());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    let [lx, ly, lz] = spec.dimensions;
    for mic in &mics {
        let d0 = distance(mic, source);
        let tau0 = d0 / SPEED_OF_SOUND * fs;
        let mut dir = vec![0.0; len];
        add_fractional_impulse(&mut dir, tau0, 1.0 / (4.0 * PI * d0));
        let mut h = dir.clone();
        if beta > 0.0 {
            let t_mix = mixing_delay(spec).max(tau0 + MATCH_WINDOW as f64);
            let n = MAX_ORDER;
            for ux in 0..2 {
                for uy in 0..2 {
                    for uz in 0..2 {
                        for nx in -n..=n {
                            let kx = (nx - ux).abs() + nx.abs();
                            if kx > n {
                                continue;
                            }
                            for ny in -n..=n {
                                let ky = (ny - uy).abs() + ny.abs();
                                if kx + ky > n {
                                    continue;
                                }
                                for nz in -n..=n {
                                    let kz = (nz - uz).abs() + nz.abs();
                                    let k = kx + ky + kz;
                                    if k > n || k == 0 {
                                        continue;
                                    }
                                    let img = [
                                        (1 - 2 * ux) as f64 * source[0] + 2.0 * nx as f64 * lx,
                                        (1 - 2 * uy) as f64 * source[1] + 2.0 * ny as f64 * ly,
                                        (1 - 2 * uz) as f64 * source[2] + 2.0 * nz as f64 * lz,
                                    ];
                                    let d = distance(mic, &img);
                                    let tau = d / SPEED_OF_SOUND * fs;
                                    let u = ((tau - t_mix) / CROSSFADE).clamp(0.0, 1.0);
                                    if u < 1.0 && tau < len as f64 {
                                        let g = beta.powi(k) / (4.0 * PI * d);
                                        add_fractional_impulse(&mut h, tau, g * (0.5 * PI * u).cos());
                                    }
                                }
                            }
                        }
                    }
                }
            }
            add_late_tail(&mut h, &dir, spec.rt60, t_mix, &mut rng);
        }
        direct.push(dir);
        full.push(h);
        delays.push(tau0);
    }
    Ok(Rir {
        direct,
        full,
        delays,
    })
}

fn add_late_tail(h: &mut [f64], dir: &[f64], rt60: f64, t_mix: f64, rng: &mut ChaCha8Rng) {
    let decay = |n: f64| (-6.9 * n / (rt60 * SAMPLE_RATE as f64)).exp();
    let end = (t_mix.floor() as usize).min(h.len());
    let begin = end.saturating_sub(MATCH_WINDOW);
    if end <= begin {
        return;
    }
    let ism_power: f64 = h[begin..end]
        .iter()
        .zip(&dir[begin..end])
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>();
    let env_power: f64 = (begin..end).map(|n| decay(n as f64).powi(2)).sum();
    if ism_power <= 0.0 || env_power <= 0.0 {
        return;
    }
    let gain = (ism_power / env_power).sqrt();
    for (n, v) in h.iter_mut().enumerate().skip(t_mix.floor() as usize) {
        let u = ((n as f64 - t_mix) / CROSSFADE).clamp(0.0, 1.0);
        let z: f64 = StandardNormal.sample(rng);
        *v += gain * decay(n as f64) * (0.5 * PI * u).sin() * z;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fractional_impulse_peaks_at_integer_delay() {
        let mut b = vec![0.0; 64];
        add_fractional_impulse(&mut b, 20.0, 2.0);
        assert_eq!(b[20], 2.0);
        assert!(b.iter().enumerate().all(|(i, &v)| i == 20 || v.abs() < 1e-12));
    }

    #[test]
    fn sabine_absorption() {
        let spec = RoomSpec {
            dimensions: [5.0, 4.0, 3.0],
            rt60: 0.5,
            source_pos: [1.0, 1.0, 1.5],
            noise_pos: [4.0, 3.0, 1.5],
            array_center: [2.5, 2.0, 1.5],
            array_radius: ARRAY_RADIUS,
            mic_count: 4,
            seed: 0,
            anechoic: false,
        };
        let expect = 0.161 * 60.0 / (94.0 * 0.5);
        assert!((spec.absorption() - expect).abs() < 1e-12);
    }
}
