//! Boxcar STFT analysis and overlap-add synthesis, plus the differentiable
//! graph versions used by the network and the loss.
//!
//! Frames start at multiples of `hop` with no centering; the tail is
//! zero-padded so the last frame is full. The forward FFT is unnormalized and
//! the inverse carries the `1 / fft_size` factor. Synthesis divides every
//! sample by the number of frames covering it.
//!
//! Spectra on a graph are laid out `(2, C, F, T)`: the real planes of all
//! channels, then the imaginary planes.

use std::sync::Arc;

use deftan_numerics::{Graph, Real, Tensor, Var};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio::{Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop: usize,
}

impl StftConfig {
    pub fn new(fft_size: usize, hop: usize) -> Result<Self> {
        let cfg = Self { fft_size, hop };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fft_size < 2 || !self.fft_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "fft_size {} must be even and at least 2",
                self.fft_size
            )));
        }
        if self.hop == 0 || self.hop > self.fft_size {
            return Err(Error::Config(format!(
                "hop {} must lie in 1..={}",
                self.hop, self.fft_size
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// `ceil((n - fft_size) / hop) + 1`.
    pub fn frames(&self, n: usize) -> Result<usize> {
        if n < self.fft_size {
            return Err(Error::InputTooShort {
                len: n,
                needed: self.fft_size,
            });
        }
        Ok((n - self.fft_size).div_ceil(self.hop) + 1)
    }

    /// Length after tail padding.
    pub fn padded_len(&self, frames: usize) -> usize {
        (frames - 1) * self.hop + self.fft_size
    }

    /// Number of frames covering each sample of the padded signal.
    pub fn overlap_counts(&self, frames: usize) -> Vec<u32> {
        let mut counts = vec![0u32; self.padded_len(frames)];
        for t in 0..frames {
            counts[t * self.hop..t * self.hop + self.fft_size]
                .iter_mut()
                .for_each(|c| *c += 1);
        }
        counts
    }

    /// Continuous frame rate used for per-second accounting.
    pub fn frames_per_second(&self) -> f64 {
        SAMPLE_RATE as f64 / self.hop as f64
    }
}

struct Fourier<T: Real> {
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    buf: Vec<Complex<T>>,
    scratch: Vec<Complex<T>>,
}

impl<T: Real> Fourier<T> {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            forward,
            inverse,
            buf: vec![Complex::new(T::zero(), T::zero()); n],
            scratch: vec![Complex::new(T::zero(), T::zero()); scratch_len],
        }
    }
}

/// Analysis of `channels` signals of length `n`, flat `(C, N)`. Returns
/// `(re, im)`, each `(C, F, T)`.
fn analyze<T: Real>(cfg: StftConfig, x: &[T], channels: usize) -> Result<(Vec<T>, Vec<T>)> {
    let n = x.len() / channels;
    let frames = cfg.frames(n)?;
    let (nfft, bins) = (cfg.fft_size, cfg.bins());
    let mut fr = Fourier::<T>::new(nfft);
    let mut re = vec![T::zero(); channels * bins * frames];
    let mut im = vec![T::zero(); channels * bins * frames];
    for c in 0..channels {
        let sig = &x[c * n..(c + 1) * n];
        for t in 0..frames {
            let start = t * cfg.hop;
            for (k, b) in fr.buf.iter_mut().enumerate() {
                let v = sig.get(start + k).copied().unwrap_or(T::zero());
                *b = Complex::new(v, T::zero());
            }
            fr.forward.process_with_scratch(&mut fr.buf, &mut fr.scratch);
            for f in 0..bins {
                let i = (c * bins + f) * frames + t;
                re[i] = fr.buf[f].re;
                im[i] = fr.buf[f].im;
            }
        }
    }
    Ok((re, im))
}

/// Synthesis of `(C, F, T)` planes into flat `(C, orig_len)`.
fn synthesize<T: Real>(
    cfg: StftConfig,
    re: &[T],
    im: &[T],
    channels: usize,
    frames: usize,
    orig_len: usize,
) -> Vec<T> {
    let (nfft, bins) = (cfg.fft_size, cfg.bins());
    let mut fr = Fourier::<T>::new(nfft);
    let counts = cfg.overlap_counts(frames);
    let inv_n = T::one() / T::lit(nfft as f64);
    let mut out = vec![T::zero(); channels * orig_len];
    let mut acc = vec![T::zero(); counts.len()];
    for c in 0..channels {
        acc.fill(T::zero());
        for t in 0..frames {
            hermitian_fill(&mut fr.buf, bins, |f| {
                let i = (c * bins + f) * frames + t;
                (re[i], im[i])
            });
            fr.inverse.process_with_scratch(&mut fr.buf, &mut fr.scratch);
            let start = t * cfg.hop;
            for (a, b) in acc[start..start + nfft].iter_mut().zip(&fr.buf) {
                *a += b.re * inv_n;
            }
        }
        for (o, (&a, &k)) in out[c * orig_len..(c + 1) * orig_len]
            .iter_mut()
            .zip(acc.iter().zip(&counts))
        {
            *o = a / T::lit(k as f64);
        }
    }
    out
}

/// Fills a full-length spectrum from its one-sided half by conjugate symmetry.
fn hermitian_fill<T: Real>(buf: &mut [Complex<T>], bins: usize, half: impl Fn(usize) -> (T, T)) {
    let n = buf.len();
    for f in 0..bins {
        let (r, i) = half(f);
        buf[f] = Complex::new(r, i);
        if f > 0 && f < n - f {
            buf[n - f] = Complex::new(r, -i);
        }
    }
}

/// Complex STFT of every channel, planes shaped `(channels, F, T)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrogram<T: Real> {
    pub re: Tensor<T>,
    pub im: Tensor<T>,
    pub cfg: StftConfig,
    pub orig_len: usize,
}

impl<T: Real> ComplexSpectrogram<T> {
    pub fn num_channels(&self) -> usize {
        self.re.shape()[0]
    }

    pub fn bins(&self) -> usize {
        self.re.shape()[1]
    }

    pub fn frames(&self) -> usize {
        self.re.shape()[2]
    }

    /// `(2M, F, T)` with channels `[re(0) .. re(M-1), im(0) .. im(M-1)]`.
    pub fn stack_ri(&self) -> Tensor<T> {
        let (m, f, t) = (self.num_channels(), self.bins(), self.frames());
        let mut data = Vec::with_capacity(2 * m * f * t);
        data.extend_from_slice(self.re.data());
        data.extend_from_slice(self.im.data());
        Tensor::new(&[2 * m, f, t], data).expect("stacked shape")
    }

    /// Inverse of [`stack_ri`](Self::stack_ri).
    pub fn unstack_ri(stacked: &Tensor<T>, cfg: StftConfig, orig_len: usize) -> Result<Self> {
        let shape = stacked.shape();
        if shape.len() != 3 || !shape[0].is_multiple_of(2) || shape[0] == 0 {
            return Err(Error::Input(format!(
                "stacked RI tensor must be (2M, F, T), got {shape:?}"
            )));
        }
        let (m, f, t) = (shape[0] / 2, shape[1], shape[2]);
        let half = m * f * t;
        let spec = Self {
            re: Tensor::new(&[m, f, t], stacked.data()[..half].to_vec())?,
            im: Tensor::new(&[m, f, t], stacked.data()[half..].to_vec())?,
            cfg,
            orig_len,
        };
        spec.check()?;
        Ok(spec)
    }

    /// Channel `m` as a single-channel spectrogram.
    pub fn channel(&self, m: usize) -> Self {
        let plane = self.bins() * self.frames();
        let take = |t: &Tensor<T>| {
            Tensor::new(
                &[1, self.bins(), self.frames()],
                t.data()[m * plane..(m + 1) * plane].to_vec(),
            )
            .expect("plane shape")
        };
        Self {
            re: take(&self.re),
            im: take(&self.im),
            cfg: self.cfg,
            orig_len: self.orig_len,
        }
    }

    /// The `(2, C, F, T)` graph layout.
    pub fn to_graph_layout(&self) -> Tensor<T> {
        let mut shape = vec![2];
        shape.extend_from_slice(self.re.shape());
        self.stack_ri().reshape(&shape).expect("graph layout")
    }

    fn check(&self) -> Result<()> {
        self.cfg.validate()?;
        if self.re.shape() != self.im.shape() || self.re.rank() != 3 {
            return Err(Error::Input(format!(
                "real {:?} and imaginary {:?} planes must share a (C, F, T) shape",
                self.re.shape(),
                self.im.shape()
            )));
        }
        if self.bins() != self.cfg.bins() {
            return Err(Error::Config(format!(
                "spectrogram has {} bins but fft_size {} implies {}",
                self.bins(),
                self.cfg.fft_size,
                self.cfg.bins()
            )));
        }
        let expected = self.cfg.frames(self.orig_len)?;
        if self.frames() != expected {
            return Err(Error::Config(format!(
                "spectrogram has {} frames but {} samples at hop {} imply {expected}",
                self.frames(),
                self.orig_len,
                self.cfg.hop
            )));
        }
        Ok(())
    }
}

pub fn stft<T: Real>(wave: &Waveform, cfg: StftConfig) -> Result<ComplexSpectrogram<T>> {
    cfg.validate()?;
    let m = wave.num_channels();
    let frames = cfg.frames(wave.len())?;
    let (re, im) = analyze(cfg, &wave.to_flat::<T>(), m)?;
    let shape = [m, cfg.bins(), frames];
    Ok(ComplexSpectrogram {
        re: Tensor::new(&shape, re)?,
        im: Tensor::new(&shape, im)?,
        cfg,
        orig_len: wave.len(),
    })
}

pub fn istft<T: Real>(spec: &ComplexSpectrogram<T>) -> Result<Waveform> {
    spec.check()?;
    let m = spec.num_channels();
    let flat = synthesize(
        spec.cfg,
        spec.re.data(),
        spec.im.data(),
        m,
        spec.frames(),
        spec.orig_len,
    );
    let channels = flat
        .chunks_exact(spec.orig_len.max(1))
        .take(m)
        .map(|c| c.iter().map(|v| v.to_f64_lossy()).collect())
        .collect();
    Waveform::new(channels, SAMPLE_RATE)
}

/// Complex ratio mask, planes shaped `(F, T)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMask<T: Real> {
    pub re: Tensor<T>,
    pub im: Tensor<T>,
}

impl<T: Real> ComplexMask<T> {
    /// Splits a `(2, F, T)` tensor into real and imaginary planes.
    pub fn from_stacked(t: &Tensor<T>) -> Result<Self> {
        let s = t.shape();
        if s.len() != 3 || s[0] != 2 {
            return Err(Error::Input(format!("mask tensor must be (2, F, T), got {s:?}")));
        }
        let plane = s[1] * s[2];
        Ok(Self {
            re: Tensor::new(&s[1..], t.data()[..plane].to_vec())?,
            im: Tensor::new(&s[1..], t.data()[plane..].to_vec())?,
        })
    }
}

/// Complex product of `mask` with a single-channel spectrogram.
pub fn apply_mask<T: Real>(
    mask: &ComplexMask<T>,
    reference: &ComplexSpectrogram<T>,
) -> Result<ComplexSpectrogram<T>> {
    if reference.num_channels() != 1 || mask.re.shape() != &reference.re.shape()[1..] {
        return Err(Error::Input(format!(
            "mask {:?} does not fit single-channel spectrogram {:?}",
            mask.re.shape(),
            reference.re.shape()
        )));
    }
    let (mr, mi) = (mask.re.data(), mask.im.data());
    let (yr, yi) = (reference.re.data(), reference.im.data());
    let re = (0..mr.len()).map(|i| mr[i] * yr[i] - mi[i] * yi[i]).collect();
    let im = (0..mr.len()).map(|i| mr[i] * yi[i] + mi[i] * yr[i]).collect();
    Ok(ComplexSpectrogram {
        re: Tensor::new(reference.re.shape(), re)?,
        im: Tensor::new(reference.re.shape(), im)?,
        cfg: reference.cfg,
        orig_len: reference.orig_len,
    })
}

/// STFT of `x` shaped `(C, N)` on the graph; output `(2, C, F, T)`.
pub fn stft_op<T: Real>(g: &mut Graph<T>, x: Var, cfg: StftConfig) -> Result<Var> {
    cfg.validate()?;
    let shape = g.shape(x).to_vec();
    if shape.len() != 2 {
        return Err(Error::Input(format!("stft input must be (C, N), got {shape:?}")));
    }
    let (channels, n) = (shape[0], shape[1]);
    let frames = cfg.frames(n)?;
    let (mut re, im) = analyze(cfg, g.data(x), channels)?;
    re.extend(im);
    let bins = cfg.bins();
    let out = Tensor::new(&[2, channels, bins, frames], re)?;
    Ok(g.push("stft", out, &[x], move |_, grad| {
        // dx[k] = Re(sum_f G_f e^{+2 pi i f k / N}), overlap-added over frames
        let nfft = cfg.fft_size;
        let mut fr = Fourier::<T>::new(nfft);
        let half = channels * bins * frames;
        let mut dx = vec![T::zero(); channels * n];
        for c in 0..channels {
            for t in 0..frames {
                fr.buf.fill(Complex::new(T::zero(), T::zero()));
                for f in 0..bins {
                    let i = (c * bins + f) * frames + t;
                    fr.buf[f] = Complex::new(grad[i], grad[half + i]);
                }
                fr.inverse.process_with_scratch(&mut fr.buf, &mut fr.scratch);
                let start = t * cfg.hop;
                let valid = n.saturating_sub(start).min(nfft);
                for k in 0..valid {
                    dx[c * n + start + k] += fr.buf[k].re;
                }
            }
        }
        vec![Some(dx)]
    })?)
}

/// Inverse STFT of a `(2, C, F, T)` spectrum on the graph; output
/// `(C, orig_len)`.
pub fn istft_op<T: Real>(
    g: &mut Graph<T>,
    spec: Var,
    cfg: StftConfig,
    orig_len: usize,
) -> Result<Var> {
    cfg.validate()?;
    let shape = g.shape(spec).to_vec();
    if shape.len() != 4 || shape[0] != 2 {
        return Err(Error::Input(format!(
            "istft input must be (2, C, F, T), got {shape:?}"
        )));
    }
    let (channels, bins, frames) = (shape[1], shape[2], shape[3]);
    if bins != cfg.bins() || frames != cfg.frames(orig_len)? {
        return Err(Error::Config(format!(
            "spectrum ({bins} bins, {frames} frames) inconsistent with fft_size {} hop {} length {orig_len}",
            cfg.fft_size, cfg.hop
        )));
    }
    let half = channels * bins * frames;
    let data = g.data(spec);
    let out = synthesize(cfg, &data[..half], &data[half..], channels, frames, orig_len);
    let out = Tensor::new(&[channels, orig_len], out)?;
    Ok(g.push("istft", out, &[spec], move |_, grad| {
        // dRe_f = (c_f / N) Re(rfft(g)), dIm_f = (c_f / N) Im(rfft(g)),
        // c_f = 1 at DC and Nyquist, 2 elsewhere
        let nfft = cfg.fft_size;
        let mut fr = Fourier::<T>::new(nfft);
        let counts = cfg.overlap_counts(frames);
        let inv_n = T::one() / T::lit(nfft as f64);
        let two = T::lit(2.0);
        let mut d = vec![T::zero(); 2 * half];
        for c in 0..channels {
            for t in 0..frames {
                let start = t * cfg.hop;
                for (k, b) in fr.buf.iter_mut().enumerate() {
                    let s = start + k;
                    let v = if s < orig_len {
                        grad[c * orig_len + s] / T::lit(counts[s] as f64)
                    } else {
                        T::zero()
                    };
                    *b = Complex::new(v, T::zero());
                }
                fr.forward.process_with_scratch(&mut fr.buf, &mut fr.scratch);
                for f in 0..bins {
                    let cf = if f == 0 || 2 * f == nfft { inv_n } else { two * inv_n };
                    let i = (c * bins + f) * frames + t;
                    d[i] = cf * fr.buf[f].re;
                    d[half + i] = cf * fr.buf[f].im;
                }
            }
        }
        vec![Some(d)]
    })?)
}

/// Complex product of a `(2, F, T)` mask with a `(2, F, T)` spectrum.
pub fn apply_mask_op<T: Real>(g: &mut Graph<T>, mask: Var, spec: Var) -> Result<Var> {
    let shape = g.shape(mask).to_vec();
    if shape.len() != 3 || shape[0] != 2 || g.shape(spec) != shape.as_slice() {
        return Err(Error::Input(format!(
            "mask {:?} and spectrum {:?} must both be (2, F, T)",
            shape,
            g.shape(spec)
        )));
    }
    let p = shape[1] * shape[2];
    let (m, y) = (g.data(mask), g.data(spec));
    let mut out = vec![T::zero(); 2 * p];
    for i in 0..p {
        out[i] = m[i] * y[i] - m[p + i] * y[p + i];
        out[p + i] = m[i] * y[p + i] + m[p + i] * y[i];
    }
    let out = Tensor::new(&shape, out)?;
    Ok(g.push("apply_mask", out, &[mask, spec], move |ctx, gr| {
        let (m, y) = (ctx.input(0).data(), ctx.input(1).data());
        // conj(other) * grad for each factor
        let conj_mul = |a: &[T]| {
            let mut d = vec![T::zero(); 2 * p];
            for i in 0..p {
                d[i] = a[i] * gr[i] + a[p + i] * gr[p + i];
                d[p + i] = a[i] * gr[p + i] - a[p + i] * gr[i];
            }
            d
        };
        vec![
            ctx.needs(0).then(|| conj_mul(y)),
            ctx.needs(1).then(|| conj_mul(m)),
        ]
    })?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_count_arithmetic() {
        let cfg = StftConfig::new(512, 128).unwrap();
        assert_eq!(cfg.frames(16000).unwrap(), 122);
        assert_eq!(cfg.frames(512).unwrap(), 1);
        assert_eq!(cfg.frames(513).unwrap(), 2);
        assert!(matches!(
            cfg.frames(511),
            Err(Error::InputTooShort { len: 511, needed: 512 })
        ));
    }

    #[test]
    fn interior_overlap_counts() {
        for (hop, expect) in [(128, 4), (256, 2)] {
            let counts = StftConfig::new(512, hop).unwrap().overlap_counts(20);
            assert!(counts[512..counts.len() - 512].iter().all(|&c| c == expect));
        }
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(StftConfig::new(511, 128).is_err());
        assert!(StftConfig::new(512, 0).is_err());
        assert!(StftConfig::new(512, 513).is_err());
    }

    #[test]
    fn hermitian_fill_mirrors_conjugates() {
        let mut buf = vec![Complex::new(0.0f64, 0.0); 8];
        hermitian_fill(&mut buf, 5, |f| (f as f64, 1.0 + f as f64));
        assert_eq!(buf[7], Complex::new(1.0, -2.0));
        assert_eq!(buf[4], Complex::new(4.0, 5.0));
        assert_eq!(buf[5], Complex::new(3.0, -4.0));
    }
}
