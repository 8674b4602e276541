use serde::Serialize;

use super::config::{ModelConfig, SubBlock, TFfwKind};
use super::network::DeftAn;
use crate::error::Result;
use crate::stft::StftConfig;

/// Trainable scalars of the network `cfg` builds.
pub fn param_count(cfg: &ModelConfig) -> Result<usize> {
    Ok(DeftAn::<f32>::new(cfg.clone(), 0)?.param_count())
}

/// Multiply-accumulate counts per second of audio, split by component.
///
/// Every term is a per-(frequency, frame) cost times the frame rate, so the
/// headline figure scales exactly with `1 / hop`. Time attention's
/// score and weighted-sum products grow with utterance length as well; they
/// are reported separately for the requested duration and left out of
/// `macs_per_second`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MacEstimate {
    pub hop: usize,
    pub audio_seconds: f64,
    pub frames_per_second: f64,
    pub up_conv: f64,
    pub dense: f64,
    pub f_transformer: f64,
    pub t_conformer: f64,
    pub down_conv: f64,
    /// Sum of the components above, MAC/s.
    pub macs_per_second: f64,
    /// Time-attention scores and weighted sums over the whole utterance.
    pub time_attention_total: f64,
}

pub fn mac_estimate(cfg: &ModelConfig, audio_seconds: f64, hop: usize) -> Result<MacEstimate> {
    cfg.validate()?;
    let stft = StftConfig::new(cfg.fft_size, hop)?;
    let fps = stft.frames_per_second();
    let positions = stft.bins() as f64 * fps;
    let (m, c, k) = (cfg.mics as f64, cfg.channels as f64, cfg.dense_kernel as f64);
    let f = stft.bins() as f64;
    let kk = k * k;
    let active = cfg.active_sub_blocks();
    let nb = cfg.blocks as f64;

    let up = 2.0 * m * c * kk;
    let dense = if active.contains(&SubBlock::Dense) {
        cfg.dense_input_channels().iter().map(|&cin| cin as f64 * c * kk).sum()
    } else {
        0.0
    };
    let projections = 4.0 * c * c;
    let f_trans = if active.contains(&SubBlock::Freq) {
        let e = cfg.f_ffw_expansion as f64 * c;
        // scores and weighted sum cost F * C each per position
        projections + 2.0 * f * c + 2.0 * c * e
    } else {
        0.0
    };
    let w = cfg.t_ffw_width as f64 * c;
    let t_conf = if active.contains(&SubBlock::Time) {
        let ffw_inner = match cfg.t_ffw_kind {
            TFfwKind::Sdc => cfg.sdc_layers as f64 * w * cfg.sdc_kernel as f64,
            // two directions, input and recurrent products
            TFfwKind::Rnn => 2.0 * (w * w / 2.0 + w * w / 4.0),
            TFfwKind::Gru => 2.0 * 3.0 * (w * w / 2.0 + w * w / 4.0),
        };
        projections + 2.0 * c * w + ffw_inner
    } else {
        0.0
    };
    let down = c * 2.0 * kk;

    let frames = audio_seconds * fps;
    let time_attention_total = if active.contains(&SubBlock::Time) {
        nb * f * 2.0 * frames * frames * c
    } else {
        0.0
    };
    let est = MacEstimate {
        hop,
        audio_seconds,
        frames_per_second: fps,
        up_conv: up * positions,
        dense: nb * dense * positions,
        f_transformer: nb * f_trans * positions,
        t_conformer: nb * t_conf * positions,
        down_conv: down * positions,
        macs_per_second: 0.0,
        time_attention_total,
    };
    Ok(MacEstimate {
        macs_per_second: est.up_conv + est.dense + est.f_transformer + est.t_conformer + est.down_conv,
        ..est
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_blocks_is_up_and_down_only() {
        let mut cfg = ModelConfig::paper();
        cfg.blocks = 0;
        let e = mac_estimate(&cfg, 1.0, 256).unwrap();
        let per_pos = 2.0 * 4.0 * 64.0 * 9.0 + 64.0 * 2.0 * 9.0;
        assert_eq!(e.macs_per_second, per_pos * 257.0 * 62.5);
        assert_eq!(e.time_attention_total, 0.0);
    }
}
