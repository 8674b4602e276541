//! Adam training on PCM loss, checkpoints and evaluation.

mod adam;
mod checkpoint;
mod config;
mod eval;

pub use adam::{clip_grad_norm, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, MAGIC, VERSION};
pub use config::{RunConfig, TrainConfig};
pub use eval::{evaluate, EvalEntry, EvalReport};

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use deftan_numerics::{Graph, NumericsError};
use log::info;

use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::loss::{pcm_loss, pcm_loss_graph, si_sdr, LossReport};
use crate::model::{DeftAn, ModelConfig};
use crate::scenes::{load_entry, read_manifest, SceneExample, MANIFEST_FILE};
use crate::seeds::mix64;

pub const LOSS_CSV: &str = "loss.csv";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const LAST_FINITE_CHECKPOINT: &str = "last_finite.ckpt";

/// A noisy mixture and its clean reference-mic target.
#[derive(Clone, Debug)]
pub struct Example {
    pub noisy: Waveform,
    pub clean: Waveform,
}

impl From<&SceneExample> for Example {
    fn from(s: &SceneExample) -> Self {
        Self {
            noisy: s.y.clone(),
            clean: s.s.clone(),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub examples: Vec<Example>,
}

impl Dataset {
    /// Reads every pair listed in `dir/manifest.jsonl`.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = dir.join(MANIFEST_FILE);
        if !manifest.is_file() {
            return Err(Error::Input(format!(
                "{} has no {MANIFEST_FILE}",
                dir.display()
            )));
        }
        Self::from_manifest(&manifest)
    }

    /// Reads every pair listed in a manifest; WAV paths are relative to the
    /// manifest's directory.
    pub fn from_manifest(manifest: &Path) -> Result<Self> {
        let dir = manifest.parent().unwrap_or(Path::new("."));
        let entries = read_manifest(manifest)?;
        let mut examples = Vec::with_capacity(entries.len());
        for e in &entries {
            let (noisy, clean) = load_entry(dir, e)?;
            examples.push(Example { noisy, clean });
        }
        let data = Self { examples };
        data.check()?;
        Ok(data)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    fn check(&self) -> Result<()> {
        let Some(first) = self.examples.first() else {
            return Err(Error::Input("dataset is empty".into()));
        };
        let mics = first.noisy.num_channels();
        for (i, e) in self.examples.iter().enumerate() {
            if e.noisy.num_channels() != mics {
                return Err(Error::Input(format!(
                    "example {i} has {} mics, example 0 has {mics}",
                    e.noisy.num_channels()
                )));
            }
            if e.clean.num_channels() != 1 || e.clean.len() != e.noisy.len() {
                return Err(Error::Input(format!(
                    "example {i}: clean target must be one channel of the noisy length"
                )));
            }
        }
        Ok(())
    }

    /// Fails unless every example has the model's mic count.
    pub fn check_model(&self, cfg: &ModelConfig) -> Result<()> {
        self.check()?;
        let mics = self.examples[0].noisy.num_channels();
        if mics != cfg.mics {
            return Err(Error::Config(format!(
                "data has {mics} mics, model expects {}",
                cfg.mics
            )));
        }
        Ok(())
    }
}

/// Example index and dropout seed for 1-based `step`.
pub fn step_draw(seed: u64, step: u64, count: usize) -> (usize, u64) {
    let h = mix64(mix64(seed) ^ step);
    ((h % count as u64) as usize, mix64(h))
}

/// Forward in training mode, PCM loss, backward and one Adam update.
pub fn train_step(
    state: &mut Checkpoint,
    example: &Example,
    cfg: &TrainConfig,
    dropout_seed: u64,
) -> Result<LossReport> {
    let step = state.adam.step + 1;
    let model = &state.model;
    let mut g = Graph::<f32>::train(dropout_seed);
    let p = model.params.bind(&mut g);
    let non_finite = |e: Error| match e {
        Error::Numerics(NumericsError::NonFinite { .. }) => Error::NonFiniteLoss { step },
        e => e,
    };
    let out = model.enhance_graph(&mut g, &p, &example.noisy).map_err(non_finite)?;
    let reference = example.noisy.select(0);
    let loss = pcm_loss_graph(&mut g, out.wave, &example.clean, &reference, model.config().stft())
        .map_err(non_finite)?;
    let report = loss.report(&g);
    if !report.pcm.is_finite() {
        return Err(Error::NonFiniteLoss { step });
    }
    let mut grads = g.backward(loss.pcm).map_err(|e| non_finite(e.into()))?;
    let mut per_param: Vec<Vec<f32>> = p
        .vars()
        .iter()
        .zip(model.params.iter())
        .map(|(&v, prm)| grads.take(v).unwrap_or_else(|| vec![0.0; prm.tensor.numel()]))
        .collect();
    if per_param.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteLoss { step });
    }
    if let Some(max) = cfg.grad_clip {
        clip_grad_norm(&mut per_param, max);
    }
    let refs: Vec<Option<&[f32]>> = per_param.iter().map(|g| Some(g.as_slice())).collect();
    state.adam.step(&mut state.model.params, &refs, &cfg.adam());
    Ok(report)
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    /// `(step, loss)` for every step run in this call.
    pub curve: Vec<(u64, LossReport)>,
    pub final_step: u64,
    pub final_checkpoint: Option<PathBuf>,
}

fn append_csv(path: &Path, fresh: bool, rows: &[(u64, LossReport)]) -> Result<()> {
    let exists = path.is_file() && !fresh;
    let mut f = OpenOptions::new()
        .create(true)
        .write(true)
        .append(exists)
        .truncate(!exists)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    if !exists {
        text.push_str("step,pcm,speech_term,noise_term\n");
    }
    for (s, r) in rows {
        text.push_str(&format!("{s},{},{},{}\n", r.pcm, r.speech_term, r.noise_term));
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Runs steps `state.adam.step + 1 ..= cfg.total_steps()`.
///
/// With `out_dir` the loss curve goes to `loss.csv` (appended when resuming),
/// numbered checkpoints every `checkpoint_every` steps and `final.ckpt` at
/// the end. A non-finite loss or gradient stops the run; the untouched state
/// from before that step is written to `last_finite.ckpt`.
pub fn train(
    state: &mut Checkpoint,
    cfg: &TrainConfig,
    data: &Dataset,
    out_dir: Option<&Path>,
) -> Result<TrainSummary> {
    cfg.validate()?;
    data.check_model(state.config())?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let fresh = state.adam.step == 0;
    let total = cfg.total_steps();
    let mut curve = Vec::new();
    let mut pending = Vec::new();
    let flush = |pending: &mut Vec<(u64, LossReport)>, first: bool| -> Result<()> {
        if let Some(dir) = out_dir {
            append_csv(&dir.join(LOSS_CSV), first, pending)?;
        }
        pending.clear();
        Ok(())
    };
    let mut first_flush = fresh;
    while state.adam.step < total {
        let step = state.adam.step + 1;
        let (index, dropout_seed) = step_draw(cfg.seed, step, data.len());
        let report = match train_step(state, &data.examples[index], cfg, dropout_seed) {
            Ok(r) => r,
            Err(e @ Error::NonFiniteLoss { .. }) => {
                flush(&mut pending, first_flush)?;
                if let Some(dir) = out_dir {
                    state.save(&dir.join(LAST_FINITE_CHECKPOINT))?;
                }
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        curve.push((step, report));
        pending.push((step, report));
        if step.is_multiple_of(100) || step == total {
            info!("step {step}/{total} pcm {:.5}", report.pcm);
        }
        if cfg.checkpoint_every > 0 && step.is_multiple_of(cfg.checkpoint_every) {
            flush(&mut pending, first_flush)?;
            first_flush = false;
            if let Some(dir) = out_dir {
                state.save(&dir.join(format!("step_{step:06}.ckpt")))?;
            }
        }
    }
    flush(&mut pending, first_flush)?;
    let final_checkpoint = match out_dir {
        Some(dir) => {
            let path = dir.join(FINAL_CHECKPOINT);
            state.save(&path)?;
            Some(path)
        }
        None => None,
    };
    Ok(TrainSummary {
        curve,
        final_step: state.adam.step,
        final_checkpoint,
    })
}

#[derive(Clone, Debug)]
pub struct OverfitReport {
    pub steps: u64,
    pub initial_pcm: f64,
    pub final_pcm: f64,
    pub pcm_ratio: f64,
    pub input_si_sdr_db: f64,
    pub output_si_sdr_db: f64,
    pub si_sdri_db: f64,
    pub curve: Vec<(u64, LossReport)>,
}

/// Eval-mode PCM loss and SI-SDR of the model's output on `example`.
pub fn score(model: &DeftAn<f32>, example: &Example) -> Result<(f64, f64)> {
    let est = model.enhance(&example.noisy)?;
    let reference = example.noisy.select(0);
    let pcm = pcm_loss(&est, &example.clean, &reference, model.config().stft())?.pcm;
    Ok((pcm, si_sdr(&est, &example.clean)?))
}

/// Trains a fresh model on `example` alone for `steps` steps and reports the
/// eval-mode PCM ratio and SI-SDR improvement over the unprocessed mic 0.
pub fn overfit_check(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    example: &Example,
    steps: u64,
) -> Result<OverfitReport> {
    let mut state = Checkpoint::fresh(model_cfg.clone(), train_cfg.seed)?;
    let (initial_pcm, _) = score(&state.model, example)?;
    let cfg = TrainConfig {
        epochs: 1,
        steps_per_epoch: steps,
        checkpoint_every: 0,
        ..train_cfg.clone()
    };
    let data = Dataset {
        examples: vec![example.clone()],
    };
    let summary = train(&mut state, &cfg, &data, None)?;
    let (final_pcm, output_si_sdr_db) = score(&state.model, example)?;
    let input_si_sdr_db = si_sdr(&example.noisy.select(0), &example.clean)?;
    Ok(OverfitReport {
        steps,
        initial_pcm,
        final_pcm,
        pcm_ratio: final_pcm / initial_pcm,
        input_si_sdr_db,
        output_si_sdr_db,
        si_sdri_db: output_si_sdr_db - input_si_sdr_db,
        curve: summary.curve,
    })
}
