//! Multichannel waveforms and 16-bit PCM WAV files.

use std::path::Path;

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;

/// Time-domain audio, one `Vec` per channel, all of equal length.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        let Some(first) = channels.first() else {
            return Err(Error::Input("waveform needs at least one channel".into()));
        };
        let len = first.len();
        if let Some((m, c)) = channels.iter().enumerate().find(|(_, c)| c.len() != len) {
            return Err(Error::Input(format!(
                "channel {m} has {} samples, channel 0 has {len}",
                c.len()
            )));
        }
        for (m, c) in channels.iter().enumerate() {
            if let Some(i) = c.iter().position(|v| !v.is_finite()) {
                return Err(Error::Input(format!("non-finite sample {i} in channel {m}")));
            }
        }
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    pub fn mono(samples: Vec<f64>) -> Result<Self> {
        Self::new(vec![samples], SAMPLE_RATE)
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channel(&self, m: usize) -> &[f64] {
        &self.channels[m]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// Single-channel copy of channel `m`.
    pub fn select(&self, m: usize) -> Waveform {
        Waveform {
            channels: vec![self.channels[m].clone()],
            sample_rate: self.sample_rate,
        }
    }

    pub fn duration_seconds(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    /// Channel-major flat copy, shape `(M, N)`.
    pub fn to_flat<T: deftan_numerics::Real>(&self) -> Vec<T> {
        self.channels.iter().flatten().map(|&v| T::lit(v)).collect()
    }
}

/// Reads a 16-bit PCM WAV at 16 kHz, scaling samples into `[-1, 1)`.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::Input(format!(
            "{}: sample rate {} Hz, expected {SAMPLE_RATE}",
            path.display(),
            spec.sample_rate
        )));
    }
    if spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::Input(format!(
            "{}: expected 16-bit integer PCM, found {}-bit {:?}",
            path.display(),
            spec.bits_per_sample,
            spec.sample_format
        )));
    }
    let m = spec.channels as usize;
    let mut channels = vec![Vec::with_capacity(reader.len() as usize / m.max(1)); m];
    for (i, s) in reader.samples::<i16>().enumerate() {
        channels[i % m].push(s.map_err(wav_err)? as f64 / 32768.0);
    }
    Waveform::new(channels, SAMPLE_RATE)
}

/// Writes 16-bit PCM scaled by 32767. Returns how many samples had to be
/// clipped to `[-1, 1]`.
pub fn write_wav(path: &Path, wave: &Waveform) -> Result<usize> {
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let spec = hound::WavSpec {
        channels: wave.num_channels() as u16,
        sample_rate: wave.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    let mut clipped = 0;
    for n in 0..wave.len() {
        for c in &wave.channels {
            let v = c[n];
            if v.abs() > 1.0 {
                clipped += 1;
            }
            let q = (v.clamp(-1.0, 1.0) * 32767.0).round() as i16;
            writer.write_sample(q).map_err(wav_err)?;
        }
    }
    writer.finalize().map_err(wav_err)?;
    if clipped > 0 {
        log::warn!("{}: clipped {clipped} samples", path.display());
    }
    Ok(clipped)
}
