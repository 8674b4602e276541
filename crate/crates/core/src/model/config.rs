use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::stft::StftConfig;

/// One of the three sub-blocks of a DeFT-A block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SubBlock {
    #[serde(rename = "D")]
    Dense,
    #[serde(rename = "F")]
    Freq,
    #[serde(rename = "T")]
    Time,
}

impl SubBlock {
    pub fn letter(self) -> char {
        match self {
            SubBlock::Dense => 'D',
            SubBlock::Freq => 'F',
            SubBlock::Time => 'T',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'D' => Some(SubBlock::Dense),
            'F' => Some(SubBlock::Freq),
            'T' => Some(SubBlock::Time),
            _ => None,
        }
    }
}

/// Position-wise feed-forward variant inside the T-conformer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TFfwKind {
    /// Sequential dilated depthwise convolutions.
    Sdc,
    /// Bidirectional tanh recurrence.
    Rnn,
    /// Bidirectional gated recurrence.
    Gru,
}

impl fmt::Display for TFfwKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TFfwKind::Sdc => "sdc",
            TFfwKind::Rnn => "rnn",
            TFfwKind::Gru => "gru",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Paper,
    Tiny,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Preset::Paper),
            "tiny" => Ok(Preset::Tiny),
            other => Err(Error::Config(format!(
                "unknown preset {other:?} (expected \"paper\" or \"tiny\")"
            ))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Paper => "paper",
            Preset::Tiny => "tiny",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Microphones, M.
    pub mics: usize,
    /// Feature channels, C.
    pub channels: usize,
    /// DeFT-A blocks, N_b.
    pub blocks: usize,
    /// Conv layers per dense block, N_d.
    pub dense_layers: usize,
    /// Dilated conv layers in the T-conformer FFW, N_c.
    pub sdc_layers: usize,
    pub heads: usize,
    /// Square kernel of the 2D convs.
    pub dense_kernel: usize,
    pub sdc_kernel: usize,
    /// Explicit dilations; powers of two when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sdc_dilations: Option<Vec<usize>>,
    pub f_ffw_expansion: usize,
    pub t_ffw_width: usize,
    pub dropout: f64,
    pub block_order: Vec<SubBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablate: Option<SubBlock>,
    pub t_ffw_kind: TFfwKind,
    pub prelu_to_relu: bool,
    pub gelu_to_relu: bool,
    pub fft_size: usize,
    pub hop: usize,
}

impl ModelConfig {
    pub fn paper() -> Self {
        Self {
            mics: 4,
            channels: 64,
            blocks: 4,
            dense_layers: 5,
            sdc_layers: 3,
            heads: 4,
            dense_kernel: 3,
            sdc_kernel: 3,
            sdc_dilations: None,
            f_ffw_expansion: 4,
            t_ffw_width: 6,
            dropout: 0.1,
            block_order: vec![SubBlock::Dense, SubBlock::Freq, SubBlock::Time],
            ablate: None,
            t_ffw_kind: TFfwKind::Sdc,
            prelu_to_relu: false,
            gelu_to_relu: false,
            fft_size: 512,
            hop: 128,
        }
    }

    pub fn tiny() -> Self {
        Self {
            mics: 2,
            channels: 8,
            blocks: 1,
            dense_layers: 2,
            sdc_layers: 2,
            heads: 2,
            fft_size: 64,
            hop: 16,
            ..Self::paper()
        }
    }

    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Paper => Self::paper(),
            Preset::Tiny => Self::tiny(),
        }
    }

    pub fn stft(&self) -> StftConfig {
        StftConfig {
            fft_size: self.fft_size,
            hop: self.hop,
        }
    }

    pub fn dilations(&self) -> Vec<usize> {
        match &self.sdc_dilations {
            Some(d) => d.clone(),
            None => (0..self.sdc_layers).map(|i| 1 << i).collect(),
        }
    }

    /// Input channels of each dense-block conv: `C, 2C, ..., N_d C`.
    pub fn dense_input_channels(&self) -> Vec<usize> {
        (1..=self.dense_layers).map(|k| k * self.channels).collect()
    }

    /// Sub-blocks actually run by each DeFT-A block.
    pub fn active_sub_blocks(&self) -> Vec<SubBlock> {
        self.block_order
            .iter()
            .copied()
            .filter(|&s| Some(s) != self.ablate)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.mics == 0 || self.channels == 0 {
            return bad("mics and channels must be positive".into());
        }
        if self.heads == 0 || !self.channels.is_multiple_of(self.heads) {
            return bad(format!(
                "channels {} not divisible by heads {}",
                self.channels, self.heads
            ));
        }
        if self.dense_layers == 0 || self.sdc_layers == 0 {
            return bad("dense_layers and sdc_layers must be positive".into());
        }
        for (name, k) in [("dense_kernel", self.dense_kernel), ("sdc_kernel", self.sdc_kernel)] {
            if k % 2 == 0 {
                return bad(format!("{name} {k} must be odd"));
            }
        }
        let d = self.dilations();
        if d.len() != self.sdc_layers {
            return bad(format!(
                "{} dilations given for {} SDC layers",
                d.len(),
                self.sdc_layers
            ));
        }
        if d[0] == 0 || d.windows(2).any(|w| w[1] <= w[0]) {
            return bad(format!("SDC dilations {d:?} must be positive and strictly increasing"));
        }
        if self.f_ffw_expansion == 0 || self.t_ffw_width == 0 {
            return bad("FFW expansion factors must be positive".into());
        }
        if self.t_ffw_kind != TFfwKind::Sdc && !(self.t_ffw_width * self.channels).is_multiple_of(2) {
            return bad("recurrent T-FFW needs an even width to split between directions".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        let mut seen = self.block_order.clone();
        seen.sort_by_key(|s| s.letter());
        seen.dedup();
        if self.block_order.len() != 3 || seen.len() != 3 {
            return bad(format!(
                "block_order {:?} must be a permutation of D, F, T",
                self.block_order
            ));
        }
        self.stft().validate()
    }

    /// Canonical TOML text of the config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 of the canonical TOML text.
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_toml().as_bytes()).into()
    }

    pub fn digest_hex(&self) -> String {
        self.digest().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Short label such as `DFT`, `FT` or `TDF`.
    pub fn order_label(&self) -> String {
        self.active_sub_blocks().iter().map(|s| s.letter()).collect()
    }
}
