//! One function per subcommand.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::Args;
use log::info;

use deftan::ablation::{run_axis, AblationSettings, Axis};
use deftan::gradcheck::{run_suite, suite_ops, SuiteRow};
use deftan::scenes::{build_dataset, SceneRanges, MANIFEST_FILE};
use deftan::training::{evaluate, train, Checkpoint, Dataset, RunConfig};
use deftan::{mac_estimate, param_count, read_wav, write_wav, ModelConfig, Preset};

use crate::manifest::{deftan_io, now, RunManifest};
use crate::{Cli, Command, Failure};

type Outcome = Result<(), Failure>;

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected LO:HI, got {s:?}"))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    let (lo, hi) = (num(lo)?, num(hi)?);
    if lo > hi {
        return Err(format!("LO {lo} is greater than HI {hi}"));
    }
    Ok((lo, hi))
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Reverberation time range in seconds.
    #[arg(long, value_name = "LO:HI", value_parser = parse_range, default_value = "0.2:1.3")]
    pub rt60: (f64, f64),
    /// SNR range in dB at the reference mic.
    #[arg(long, value_name = "LO:HI", value_parser = parse_range, default_value = "5:25")]
    pub snr: (f64, f64),
    #[arg(long, default_value_t = 4.0)]
    pub clip_seconds: f64,
    #[arg(long, default_value_t = 4)]
    pub mics: usize,
    /// Fully absorbing walls.
    #[arg(long)]
    pub anechoic: bool,
}

#[derive(Args, Debug)]
pub struct ModelChoice {
    /// Sectioned TOML config with [model] and [train].
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in configuration when no config file is given.
    #[arg(long)]
    pub preset: Option<Preset>,
}

impl ModelChoice {
    fn load(&self) -> anyhow::Result<RunConfig> {
        match (&self.config, self.preset) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path).map_err(|e| deftan_io(path, e))?;
                RunConfig::from_toml(&text)
                    .map_err(anyhow::Error::new)
                    .with_context(|| format!("config {}", path.display()))
            }
            (None, p) => Ok(RunConfig::preset(p.unwrap_or(Preset::Paper))),
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Directory holding manifest.jsonl and its WAV files.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub model: ModelChoice,
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from this checkpoint; its config must match.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EnhanceArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Manifest of noisy/clean pairs.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Args, Debug)]
pub struct InfoArgs {
    #[command(flatten)]
    pub model: ModelChoice,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[arg(long)]
    pub axis: Axis,
    #[command(flatten)]
    pub model: ModelChoice,
    /// Output CSV; defaults to `ablate_<axis>.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Training steps per variation.
    #[arg(long, default_value_t = 100)]
    pub steps: u64,
    #[arg(long, default_value_t = 4)]
    pub train_scenes: usize,
    #[arg(long, default_value_t = 2)]
    pub eval_scenes: usize,
    #[arg(long, default_value_t = 1.0)]
    pub clip_seconds: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Only the tiny preset is supported for the end-to-end check.
    #[arg(long, default_value = "tiny")]
    pub preset: Preset,
    /// Scale one op's analytic gradient to confirm the check catches it.
    #[arg(long, hide = true)]
    pub corrupt_op: Option<String>,
}

fn log_path(cli: &Cli, default_dir: &Path) -> PathBuf {
    cli.run_log
        .clone()
        .unwrap_or_else(|| default_dir.join("runs.jsonl"))
}

fn parent_or_cwd(p: &Path) -> PathBuf {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

pub fn run(cli: &Cli) -> Outcome {
    let started = now();
    let (mut record, log_dir) = match &cli.command {
        Command::GenData(a) => (gen_data(a, started)?, a.out.clone()),
        Command::Train(a) => (train_cmd(a, started)?, a.out.clone()),
        Command::Enhance(a) => (enhance(a, started)?, parent_or_cwd(&a.out)),
        Command::Eval(a) => (eval(a, started)?, parent_or_cwd(&a.report)),
        Command::Info(a) => (info_cmd(a, started)?, PathBuf::from(".")),
        Command::Ablate(a) => {
            let r = ablate(a, started)?;
            let dir = parent_or_cwd(&r.outputs[0]);
            (r, dir)
        }
        Command::Gradcheck(a) => {
            let (r, failed) = gradcheck(a, started)?;
            r.append(&log_path(cli, Path::new(".")))?;
            return match failed {
                Some(msg) => Err(Failure::Verification(msg)),
                None => Ok(()),
            };
        }
    };
    record.args = std::env::args().collect();
    record.append(&log_path(cli, &log_dir))?;
    Ok(())
}

fn gen_data(a: &GenDataArgs, started: f64) -> Result<RunManifest, Failure> {
    let ranges = SceneRanges {
        rt60: a.rt60,
        snr_db: a.snr,
        mic_count: a.mics,
        clip_seconds: a.clip_seconds,
        anechoic: a.anechoic,
        ..SceneRanges::default()
    };
    ranges.validate().map_err(|e| {
        let flag = if e.to_string().contains("rt60") {
            "--rt60"
        } else if e.to_string().contains("clip") {
            "--clip-seconds"
        } else {
            "--mics"
        };
        Failure::Usage(anyhow!("{flag}: {e}"))
    })?;
    let entries = build_dataset(&ranges, a.count, a.seed, &a.out).map_err(anyhow::Error::new)?;
    info!("wrote {} examples to {}", entries.len(), a.out.display());
    let mut r = RunManifest::new("gen-data", started);
    r.seed = Some(a.seed);
    r.outputs.push(a.out.join(MANIFEST_FILE));
    for e in entries {
        r.outputs.push(a.out.join(e.noisy));
        r.outputs.push(a.out.join(e.clean));
    }
    Ok(r)
}

fn train_cmd(a: &TrainArgs, started: f64) -> Result<RunManifest, Failure> {
    let cfg = a.model.load()?;
    if !a.data.is_dir() {
        return Err(Failure::Usage(anyhow!(
            "--data: {} is not a directory",
            a.data.display()
        )));
    }
    let data = Dataset::load(&a.data).map_err(anyhow::Error::new)?;
    let mut state = match &a.resume {
        Some(path) => {
            let s = Checkpoint::load_for(path, &cfg.model)
                .map_err(anyhow::Error::new)
                .with_context(|| format!("--resume {}", path.display()))?;
            info!("resuming at step {}", s.adam.step);
            s
        }
        None => Checkpoint::fresh(cfg.model.clone(), cfg.train.seed).map_err(anyhow::Error::new)?,
    };
    let summary = train(&mut state, &cfg.train, &data, Some(&a.out)).map_err(anyhow::Error::new)?;
    if let Some((step, last)) = summary.curve.last() {
        println!("step {step} pcm {:.6}", last.pcm);
    }
    let mut r = RunManifest::new("train", started);
    r.config_path = a.model.config.clone();
    r.seed = Some(cfg.train.seed);
    r.outputs.push(a.out.join(deftan::training::LOSS_CSV));
    r.outputs.extend(summary.final_checkpoint);
    Ok(r)
}

fn enhance(a: &EnhanceArgs, started: f64) -> Result<RunManifest, Failure> {
    let ckpt = Checkpoint::load(&a.ckpt).map_err(anyhow::Error::new)?;
    let noisy = read_wav(&a.input).map_err(anyhow::Error::new)?;
    let expected = ckpt.config().mics;
    if noisy.num_channels() != expected {
        return Err(Failure::Usage(anyhow!(
            "{} has {} channels but the checkpoint expects {expected} mics",
            a.input.display(),
            noisy.num_channels()
        )));
    }
    let out = ckpt.model.enhance(&noisy).map_err(anyhow::Error::new)?;
    write_wav(&a.out, &out).map_err(anyhow::Error::new)?;
    let mut r = RunManifest::new("enhance", started);
    r.outputs.push(a.out.clone());
    Ok(r)
}

fn eval(a: &EvalArgs, started: f64) -> Result<RunManifest, Failure> {
    let ckpt = Checkpoint::load(&a.ckpt).map_err(anyhow::Error::new)?;
    let data = Dataset::from_manifest(&a.pairs).map_err(anyhow::Error::new)?;
    let report = evaluate(&ckpt.model, &data).map_err(anyhow::Error::new)?;
    std::fs::write(&a.report, report.to_json() + "\n").map_err(|e| deftan_io(&a.report, e))?;
    println!(
        "{} examples: mean SI-SDR {:.2} dB, mean SI-SDRi {:.2} dB",
        report.count, report.mean_si_sdr_db, report.mean_si_sdri_db
    );
    let mut r = RunManifest::new("eval", started);
    r.outputs.push(a.report.clone());
    Ok(r)
}

fn print_info(cfg: &ModelConfig) -> anyhow::Result<()> {
    let params = param_count(cfg)?;
    println!("order {}  mics {}  channels {}  blocks {}", cfg.order_label(), cfg.mics, cfg.channels, cfg.blocks);
    println!("parameters {params} ({:.2} M)", params as f64 / 1e6);
    println!("{:>6} {:>8} {:>12} {:>12} {:>12} {:>12} {:>12} {:>14}", "hop", "overlap", "up", "dense", "f-trans", "t-conf", "down", "total MAC/s");
    for hop in [cfg.fft_size / 4, cfg.fft_size / 2] {
        let m = mac_estimate(cfg, 1.0, hop)?;
        println!(
            "{:>6} {:>7}% {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>14.4e}",
            hop,
            100 - 100 * hop / cfg.fft_size,
            m.up_conv,
            m.dense,
            m.f_transformer,
            m.t_conformer,
            m.down_conv,
            m.macs_per_second
        );
    }
    Ok(())
}

fn info_cmd(a: &InfoArgs, started: f64) -> Result<RunManifest, Failure> {
    let cfg = a.model.load()?;
    print_info(&cfg.model)?;
    let mut r = RunManifest::new("info", started);
    r.config_path = a.model.config.clone();
    Ok(r)
}

fn ablate(a: &AblateArgs, started: f64) -> Result<RunManifest, Failure> {
    let mut cfg = if a.model.config.is_none() && a.model.preset.is_none() {
        RunConfig::preset(Preset::Tiny)
    } else {
        a.model.load()?
    };
    cfg.train.seed = a.seed;
    let settings = AblationSettings {
        steps: a.steps,
        train_scenes: a.train_scenes,
        eval_scenes: a.eval_scenes,
        clip_seconds: a.clip_seconds,
        seed: a.seed,
        train: cfg.train.clone(),
    };
    let rows = run_axis(a.axis, &cfg.model, &settings).map_err(anyhow::Error::new)?;
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("ablate_{}.csv", a.axis)));
    let mut w = csv::Writer::from_path(&out).map_err(|e| deftan_io(&out, e.into()))?;
    for row in &rows {
        w.serialize(row).map_err(|e| deftan_io(&out, e.into()))?;
        println!(
            "{:<14} params {:>8} MAC/s {:>10.3e} pcm {:.4} SI-SDRi {:>6.2} dB",
            row.variation, row.params, row.macs_per_second, row.final_pcm, row.eval_si_sdri_db
        );
    }
    w.flush().map_err(|e| deftan_io(&out, e))?;
    let mut r = RunManifest::new("ablate", started);
    r.seed = Some(a.seed);
    r.config_path = a.model.config.clone();
    r.outputs.push(out);
    Ok(r)
}

fn gradcheck(a: &GradcheckArgs, started: f64) -> Result<(RunManifest, Option<String>), Failure> {
    if a.preset != Preset::Tiny {
        return Err(Failure::Usage(anyhow!(
            "--preset: the end-to-end check runs on the tiny preset only"
        )));
    }
    if let Some(op) = &a.corrupt_op {
        if !suite_ops().contains(&op.as_str()) {
            return Err(Failure::Usage(anyhow!("--corrupt-op: unknown op {op:?}")));
        }
    }
    let rows = run_suite(a.corrupt_op.as_deref()).map_err(anyhow::Error::new)?;
    println!("{:<12} {:>12} {:>12} {:>6}", "op", "f64 error", "f32 error", "status");
    for r in &rows {
        let single = r.single.map_or("-".to_string(), |e| format!("{e:.3e}"));
        let status = if r.passed { "ok" } else { "FAIL" };
        println!("{:<12} {:>12.3e} {:>12} {:>6}", r.op, r.double, single, status);
    }
    let worst: &SuiteRow = rows
        .iter()
        .max_by(|x, y| x.severity().total_cmp(&y.severity()))
        .expect("suite is not empty");
    println!("worst: {} ({:.3e} of tolerance)", worst.op, worst.severity());
    let failed: Vec<&str> = rows.iter().filter(|r| !r.passed).map(|r| r.op.as_str()).collect();
    let msg = (!failed.is_empty()).then(|| format!("gradient check failed for {}", failed.join(", ")));
    Ok((RunManifest::new("gradcheck", started), msg))
}
