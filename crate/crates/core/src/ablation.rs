//! Parameter-study axes run end to end at small scale.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{mac_estimate, param_count, ModelConfig, SubBlock, TFfwKind};
use crate::scenes::{generate_example, SceneRanges};
use crate::training::{evaluate, train, Checkpoint, Dataset, Example, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Sub,
    Order,
    Nb,
    DefTT,
    Activation,
    Overlap,
}

impl Axis {
    pub const ALL: [Axis; 6] = [
        Axis::Sub,
        Axis::Order,
        Axis::Nb,
        Axis::DefTT,
        Axis::Activation,
        Axis::Overlap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Axis::Sub => "sub",
            Axis::Order => "order",
            Axis::Nb => "nb",
            Axis::DefTT => "deftt",
            Axis::Activation => "activation",
            Axis::Overlap => "overlap",
        }
    }

    /// `(label, config)` rows, derived from `base`, in table order.
    pub fn variants(self, base: &ModelConfig) -> Vec<(String, ModelConfig)> {
        let with = |f: &dyn Fn(&mut ModelConfig)| {
            let mut c = base.clone();
            f(&mut c);
            c
        };
        let order = |o: [SubBlock; 3]| {
            let label = o.iter().map(|s| s.letter().to_string()).collect::<Vec<_>>().join("-");
            (label, with(&|c| c.block_order = o.to_vec()))
        };
        use SubBlock::*;
        match self {
            Axis::Sub => vec![
                ("without D".into(), with(&|c| c.ablate = Some(Dense))),
                ("without F".into(), with(&|c| c.ablate = Some(Freq))),
                ("without T".into(), with(&|c| c.ablate = Some(Time))),
                ("full".into(), base.clone()),
            ],
            Axis::Order => vec![
                order([Time, Freq, Dense]),
                order([Freq, Time, Dense]),
                order([Dense, Freq, Time]),
            ],
            Axis::Nb => (2..=4)
                .map(|n| (n.to_string(), with(&|c| c.blocks = n)))
                .collect(),
            Axis::DefTT => [TFfwKind::Rnn, TFfwKind::Gru, TFfwKind::Sdc]
                .into_iter()
                .map(|k| (k.to_string().to_uppercase(), with(&|c| c.t_ffw_kind = k)))
                .collect(),
            Axis::Activation => vec![
                ("PReLU -> ReLU".into(), with(&|c| c.prelu_to_relu = true)),
                ("GELU -> ReLU".into(), with(&|c| c.gelu_to_relu = true)),
                ("full".into(), base.clone()),
            ],
            Axis::Overlap => vec![
                ("50%".into(), with(&|c| c.hop = c.fft_size / 2)),
                ("75%".into(), with(&|c| c.hop = c.fft_size / 4)),
            ],
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Axis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown axis {s:?} (expected sub, order, nb, deftt, activation or overlap)"
                ))
            })
    }
}

/// Training and data budget for each row.
#[derive(Clone, Debug)]
pub struct AblationSettings {
    pub steps: u64,
    pub train_scenes: usize,
    pub eval_scenes: usize,
    pub clip_seconds: f64,
    pub seed: u64,
    pub train: TrainConfig,
}

impl Default for AblationSettings {
    fn default() -> Self {
        Self {
            steps: 100,
            train_scenes: 4,
            eval_scenes: 2,
            clip_seconds: 1.0,
            seed: 0,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AblationRow {
    pub axis: String,
    pub variation: String,
    pub params: usize,
    pub macs_per_second: f64,
    pub train_steps: u64,
    /// Mean training loss over the last quarter of the steps.
    pub final_pcm: f64,
    pub eval_si_sdr_db: f64,
    pub eval_si_sdri_db: f64,
}

fn scenes(settings: &AblationSettings, mics: usize, seed: u64, count: usize) -> Result<Dataset> {
    let ranges = SceneRanges {
        mic_count: mics,
        clip_seconds: settings.clip_seconds,
        ..SceneRanges::default()
    };
    let examples = (0..count)
        .map(|i| generate_example(&ranges, seed, i).map(|s| Example::from(&s)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { examples })
}

/// Trains and evaluates every variation of `axis` on the same scenes.
pub fn run_axis(axis: Axis, base: &ModelConfig, settings: &AblationSettings) -> Result<Vec<AblationRow>> {
    let train_data = scenes(settings, base.mics, settings.seed, settings.train_scenes)?;
    let eval_data = scenes(settings, base.mics, !settings.seed, settings.eval_scenes)?;
    let mut rows = Vec::new();
    for (label, cfg) in axis.variants(base) {
        let tcfg = TrainConfig {
            epochs: 1,
            steps_per_epoch: settings.steps,
            checkpoint_every: 0,
            ..settings.train.clone()
        };
        let mut state = Checkpoint::fresh(cfg.clone(), tcfg.seed)?;
        let summary = train(&mut state, &tcfg, &train_data, None)?;
        let tail = &summary.curve[summary.curve.len() * 3 / 4..];
        let final_pcm = tail.iter().map(|(_, r)| r.pcm).sum::<f64>() / tail.len().max(1) as f64;
        let report = evaluate(&state.model, &eval_data)?;
        rows.push(AblationRow {
            axis: axis.name().into(),
            variation: label,
            params: param_count(&cfg)?,
            macs_per_second: mac_estimate(&cfg, 1.0, cfg.hop)?.macs_per_second,
            train_steps: settings.steps,
            final_pcm,
            eval_si_sdr_db: report.mean_si_sdr_db,
            eval_si_sdri_db: report.mean_si_sdri_db,
        });
    }
    Ok(rows)
}
