//! Acceptance criteria, one PASS/FAIL line each.
//!
//! `ACCEPTANCE_ONLY=1,5,10` restricts the run to the listed criteria.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use deftan::ablation::Axis;
use deftan::gradcheck::run_suite;
use deftan::scenes::{generate_example, SceneRanges};
use deftan::training::{evaluate, score, train, Checkpoint, Dataset, Example, TrainConfig};
use deftan::{istft, mac_estimate, param_count, stft, DeftAn, ModelConfig, StftConfig, Waveform};
use deftan_numerics::{Graph, Mode, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
/// Number, name and check.
type Criterion<'a> = (u32, &'static str, Box<dyn Fn() -> Outcome + 'a>);

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_deftan")
}

fn deftan(args: &[&str], cwd: &Path) -> Result<(), String> {
    let out = Command::new(bin())
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "deftan {} exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(())
}

fn param_anchor() -> Outcome {
    let n = param_count(&ModelConfig::paper()).map_err(|e| e.to_string())?;
    let msg = format!("paper preset has {n} parameters");
    if (2_300_000..=3_100_000).contains(&n) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn mac_anchor() -> Outcome {
    let cfg = ModelConfig::paper();
    let m256 = mac_estimate(&cfg, 1.0, 256).map_err(|e| e.to_string())?.macs_per_second;
    let m128 = mac_estimate(&cfg, 1.0, 128).map_err(|e| e.to_string())?.macs_per_second;
    let msg = format!("hop 256: {:.2} G MAC/s, hop 128: {:.2} G MAC/s", m256 / 1e9, m128 / 1e9);
    if (35.8e9..=59.8e9).contains(&m256) && m128 == 2.0 * m256 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn stft_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let len = rng.gen_range(512..=16384);
        let hop = if i % 2 == 0 { 128 } else { 256 };
        let x: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let wave = Waveform::mono(x.clone()).map_err(|e| e.to_string())?;
        let cfg = StftConfig::new(512, hop).map_err(|e| e.to_string())?;
        let spec = stft::<f64>(&wave, cfg).map_err(|e| e.to_string())?;
        let back = istft(&spec).map_err(|e| e.to_string())?;
        for (a, b) in back.channel(0).iter().zip(&x) {
            worst = worst.max((a - b).abs());
        }
    }
    let msg = format!("max reconstruction error {worst:.2e} over 100 signals");
    if worst < 1e-6 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn gradient_suite() -> Outcome {
    let rows = run_suite(None).map_err(|e| e.to_string())?;
    let failed: Vec<String> = rows
        .iter()
        .filter(|r| !r.passed)
        .map(|r| format!("{} ({:.2e}/{:?})", r.op, r.double, r.single))
        .collect();
    let model = rows.iter().find(|r| r.op == "tiny_model").map(|r| r.double);
    if failed.is_empty() {
        Ok(format!("{} checks pass, tiny model error {:.2e}", rows.len(), model.unwrap_or(f64::NAN)))
    } else {
        Err(format!("failing: {}", failed.join(", ")))
    }
}

fn receptive_field() -> Outcome {
    let cfg = ModelConfig {
        sdc_layers: 3,
        sdc_dilations: Some(vec![1, 2, 4]),
        ..ModelConfig::tiny()
    };
    let model = DeftAn::<f64>::new(cfg.clone(), 7).map_err(|e| e.to_string())?;
    let width = cfg.t_ffw_width * cfg.channels;
    let frames = 32;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let base: Vec<f64> = (0..width * frames).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let run = |x: Vec<f64>| -> Result<Vec<f64>, String> {
        let mut g = Graph::<f64>::with_mode(Mode::Eval, 0).without_recording();
        let p = model.params.bind(&mut g);
        let xv = g.constant(Tensor::new(&[1, width, frames], x).map_err(|e| e.to_string())?);
        let y = model.sdc_stack(&mut g, &p, 0, xv).map_err(|e| e.to_string())?;
        Ok(g.data(y).to_vec())
    };
    let y0 = run(base.clone())?;
    let mut mismatches = 0;
    for tp in 0..frames {
        let mut x = base.clone();
        for c in 0..width {
            x[c * frames + tp] += 0.5;
        }
        let y = run(x)?;
        for t in 0..frames {
            let changed = (0..width).any(|c| (y[c * frames + t] - y0[c * frames + t]).abs() > 1e-12);
            if changed != (t.abs_diff(tp) <= 7) {
                mismatches += 1;
            }
        }
    }
    let msg = format!("{mismatches} of {} (t, t') pairs disagree with |t - t'| <= 7", frames * frames);
    if mismatches == 0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Budget for the single-scene overfit run.
const OVERFIT_MAX_STEPS: u64 = 20_000;
const OVERFIT_MAX_TIME: Duration = Duration::from_secs(30 * 60);
const OVERFIT_CHUNK: u64 = 250;

fn scene_ranges(mics: usize, clip_seconds: f64) -> SceneRanges {
    SceneRanges {
        mic_count: mics,
        clip_seconds,
        ..SceneRanges::default()
    }
}

/// Memorizing one scene: no dropout, and a faster rate than corpus training.
const OVERFIT_LR: f64 = 1e-3;

fn overfit() -> Outcome {
    let cfg = ModelConfig {
        dropout: 0.0,
        ..ModelConfig::tiny()
    };
    let scene = generate_example(&scene_ranges(cfg.mics, 1.0), 1, 0).map_err(|e| e.to_string())?;
    let example = Example::from(&scene);
    let tcfg = TrainConfig {
        lr: OVERFIT_LR,
        checkpoint_every: 0,
        ..TrainConfig::default()
    };
    let mut state = Checkpoint::fresh(cfg, tcfg.seed).map_err(|e| e.to_string())?;
    let (initial_pcm, _) = score(&state.model, &example).map_err(|e| e.to_string())?;
    let input = deftan::loss::si_sdr(&example.noisy.select(0), &example.clean).map_err(|e| e.to_string())?;
    let data = Dataset {
        examples: vec![example.clone()],
    };
    let start = Instant::now();
    let mut steps = 0;
    loop {
        steps += OVERFIT_CHUNK;
        let chunk = TrainConfig {
            epochs: 1,
            steps_per_epoch: steps,
            ..tcfg.clone()
        };
        train(&mut state, &chunk, &data, None).map_err(|e| e.to_string())?;
        let (pcm, out) = score(&state.model, &example).map_err(|e| e.to_string())?;
        let ratio = pcm / initial_pcm;
        let sisdri = out - input;
        let elapsed = start.elapsed();
        let msg = format!(
            "{steps} steps in {:.1} min: pcm ratio {ratio:.4}, SI-SDRi {sisdri:+.2} dB",
            elapsed.as_secs_f64() / 60.0
        );
        if ratio <= 0.1 && sisdri >= 5.0 {
            return if elapsed <= OVERFIT_MAX_TIME { Ok(msg) } else { Err(format!("{msg} (over 30 min)")) };
        }
        if steps >= OVERFIT_MAX_STEPS || elapsed > OVERFIT_MAX_TIME {
            return Err(msg);
        }
    }
}

/// Scenes and steps for the held-out generalization run.
const GENERAL_TRAIN: usize = 64;
const GENERAL_EVAL: usize = 16;
const GENERAL_STEPS: u64 = 1500;
const GENERAL_CLIP: f64 = 1.0;

fn generalization() -> Outcome {
    let cfg = ModelConfig::tiny();
    let ranges = scene_ranges(cfg.mics, GENERAL_CLIP);
    let set = |seed: u64, count: usize| -> Result<Dataset, String> {
        let examples = (0..count)
            .map(|i| generate_example(&ranges, seed, i).map(|s| Example::from(&s)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        Ok(Dataset { examples })
    };
    let train_set = set(100, GENERAL_TRAIN)?;
    let eval_set = set(200, GENERAL_EVAL)?;
    let tcfg = TrainConfig {
        epochs: 1,
        steps_per_epoch: GENERAL_STEPS,
        checkpoint_every: 0,
        ..TrainConfig::default()
    };
    let mut state = Checkpoint::fresh(cfg, 0).map_err(|e| e.to_string())?;
    train(&mut state, &tcfg, &train_set, None).map_err(|e| e.to_string())?;
    let report = evaluate(&state.model, &eval_set).map_err(|e| e.to_string())?;
    let msg = format!(
        "{GENERAL_STEPS} steps on {GENERAL_TRAIN} scenes; held-out mean SI-SDRi {:+.2} dB over {GENERAL_EVAL} scenes",
        report.mean_si_sdri_db
    );
    if report.mean_si_sdri_db > 0.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn ablation_harness(dir: &Path) -> Outcome {
    let mut notes = Vec::new();
    for axis in Axis::ALL {
        let out = dir.join(format!("{axis}.csv"));
        deftan(
            &[
                "ablate", "--axis", axis.name(), "--preset", "tiny", "--steps", "20",
                "--train-scenes", "2", "--eval-scenes", "1", "--clip-seconds", "0.5",
                "--out", out.to_str().unwrap(),
            ],
            dir,
        )?;
        let mut reader = csv::Reader::from_path(&out).map_err(|e| e.to_string())?;
        let header = reader.headers().map_err(|e| e.to_string())?.clone();
        let rows: Vec<csv::StringRecord> = reader.records().collect::<Result<_, _>>().map_err(|e| e.to_string())?;
        let want = axis.variants(&ModelConfig::tiny()).len();
        if rows.len() != want || rows.iter().any(|r| r.len() != header.len()) {
            return Err(format!("{axis}: {} rows, expected {want}", rows.len()));
        }
        for r in &rows {
            for field in ["params", "macs_per_second", "final_pcm", "eval_si_sdri_db"] {
                let i = header.iter().position(|h| h == field).ok_or(format!("{axis}: no {field} column"))?;
                let v: f64 = r[i].parse().map_err(|_| format!("{axis}: bad {field} {:?}", &r[i]))?;
                if !v.is_finite() {
                    return Err(format!("{axis}: non-finite {field}"));
                }
            }
        }
        if axis == Axis::Sub {
            let i = header.iter().position(|h| h == "params").unwrap();
            let p: Vec<u64> = rows.iter().map(|r| r[i].parse().unwrap()).collect();
            // rows: without D, without F, without T, full
            if !(p[0] < p[2] && p[2] < p[1] && p[1] < p[3]) {
                return Err(format!("tiny sub-block param counts {p:?} out of order"));
            }
            notes.push(format!("tiny D<T<F<full {p:?}"));
        }
    }
    let paper = ModelConfig::paper();
    let counts: Vec<usize> = Axis::Sub
        .variants(&paper)
        .iter()
        .map(|(_, c)| param_count(c))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    if !(counts[0] < counts[2] && counts[2] < counts[1] && counts[1] < counts[3]) {
        return Err(format!("paper sub-block param counts {counts:?} out of order"));
    }
    notes.push(format!("paper {counts:?}"));
    Ok(format!("6 axes, CSVs well formed; {}", notes.join("; ")))
}

fn read_all(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|e| {
            let e = e.map_err(|e| e.to_string())?;
            let bytes = std::fs::read(e.path()).map_err(|e| e.to_string())?;
            Ok((e.file_name().to_string_lossy().into_owned(), bytes))
        })
        .collect::<Result<_, String>>()?;
    // run records carry timestamps
    files.retain(|(n, _)| n != "runs.jsonl");
    files.sort();
    Ok(files)
}

fn determinism(dir: &Path) -> Outcome {
    let config = dir.join("tiny.toml");
    std::fs::write(
        &config,
        "[model]\npreset = \"tiny\"\n[train]\nepochs = 1\nsteps_per_epoch = 200\ncheckpoint_every = 100\nseed = 4\n",
    )
    .map_err(|e| e.to_string())?;
    for run in ["a", "b"] {
        let data = format!("{run}_data");
        deftan(&["gen-data", "--out", &data, "--count", "3", "--seed", "9", "--clip-seconds", "0.5", "--mics", "2"], dir)?;
        let out = format!("{run}_train");
        deftan(&["train", "--data", &data, "--config", "tiny.toml", "--out", &out], dir)?;
        let ckpt = format!("{out}/final.ckpt");
        std::fs::create_dir_all(dir.join(format!("{run}_enh"))).map_err(|e| e.to_string())?;
        deftan(
            &["enhance", "--in", &format!("{data}/noisy_0001.wav"), "--out", &format!("{run}_enh/out.wav"), "--ckpt", &ckpt],
            dir,
        )?;
    }
    let mut compared = 0;
    for stage in ["data", "train", "enh"] {
        let a = read_all(&dir.join(format!("a_{stage}")))?;
        let b = read_all(&dir.join(format!("b_{stage}")))?;
        if a != b {
            return Err(format!("{stage} outputs differ between runs"));
        }
        compared += a.len();
    }
    Ok(format!("{compared} files byte-identical across two runs (gen-data, 200-step train, enhance)"))
}

fn construction() -> Outcome {
    let mut worst_residual = 0.0f64;
    let mut worst_snr = 0.0f64;
    let mut count = 0;
    for (snr, mics, seed) in [((5.0, 25.0), 4, 1), ((-10.0, 10.0), 4, 2), ((5.0, 25.0), 2, 3)] {
        let ranges = SceneRanges {
            snr_db: snr,
            mic_count: mics,
            clip_seconds: 1.0,
            ..SceneRanges::default()
        };
        for i in 0..8 {
            let s = generate_example(&ranges, seed, i).map_err(|e| e.to_string())?;
            worst_residual = worst_residual.max(s.decomposition_residual());
            worst_snr = worst_snr.max((s.realized_snr_db(0) - s.snr_db).abs());
            count += 1;
        }
    }
    let msg = format!("{count} scenes: max |y - (s + r + z)| = {worst_residual:e}, max SNR error {worst_snr:.2e} dB");
    if worst_residual == 0.0 && worst_snr < 0.1 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let work = tempfile::tempdir().expect("temp dir");
    let ablation_dir = work.path().join("ablation");
    let determinism_dir = work.path().join("determinism");
    std::fs::create_dir_all(&ablation_dir).unwrap();
    std::fs::create_dir_all(&determinism_dir).unwrap();
    let criteria: Vec<Criterion> = vec![
        (1, "parameter-count anchor", Box::new(param_anchor)),
        (2, "MAC anchor", Box::new(mac_anchor)),
        (3, "STFT round trip", Box::new(stft_round_trip)),
        (4, "gradient suite", Box::new(gradient_suite)),
        (5, "receptive field", Box::new(receptive_field)),
        (6, "overfit", Box::new(overfit)),
        (7, "generalization smoke", Box::new(generalization)),
        (8, "ablation harness", Box::new(move || ablation_harness(&ablation_dir))),
        (9, "determinism", Box::new(move || determinism(&determinism_dir))),
        (10, "mixture construction", Box::new(construction)),
    ];
    let mut failures = 0;
    for (n, name, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(msg) => println!("PASS {n:>2} {name}: {msg} [{secs:.1}s]"),
            Err(msg) => {
                failures += 1;
                println!("FAIL {n:>2} {name}: {msg} [{secs:.1}s]");
            }
        }
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
