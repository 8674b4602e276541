use std::path::Path;
use std::process::{Command, Output};

use deftan::{read_wav, write_wav, Waveform};
use tempfile::TempDir;

fn deftan(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deftan"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = deftan(args, cwd);
    assert!(
        out.status.success(),
        "deftan {} exited {:?}: {}",
        args.join(" "),
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Small 2-mic corpus plus a checkpoint trained for a few steps.
fn trained(dir: &Path) {
    ok(
        &["gen-data", "--out", "data", "--count", "2", "--seed", "3", "--clip-seconds", "0.5", "--mics", "2"],
        dir,
    );
    std::fs::write(
        dir.join("run.toml"),
        "[model]\npreset = \"tiny\"\n[train]\nepochs = 1\nsteps_per_epoch = 5\ncheckpoint_every = 0\n",
    )
    .unwrap();
    ok(&["train", "--data", "data", "--config", "run.toml", "--out", "run"], dir);
}

#[test]
fn gen_data_writes_pairs_and_manifest() {
    let tmp = TempDir::new().unwrap();
    ok(&["gen-data", "--out", "d", "--count", "2", "--clip-seconds", "0.5"], tmp.path());
    let d = tmp.path().join("d");
    for name in ["noisy_0000.wav", "noisy_0001.wav", "clean_0000.wav", "clean_0001.wav"] {
        assert!(d.join(name).is_file(), "{name} missing");
    }
    let manifest = std::fs::read_to_string(d.join("manifest.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 2);
    assert_eq!(read_wav(&d.join("noisy_0000.wav")).unwrap().num_channels(), 4);
    assert!(d.join("runs.jsonl").is_file());
}

#[test]
fn inverted_range_is_a_usage_error_naming_the_flag() {
    let tmp = TempDir::new().unwrap();
    let out = deftan(&["gen-data", "--out", "d", "--count", "1", "--snr", "20:5"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--snr"), "{}", stderr(&out));
}

#[test]
fn missing_data_dir_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let out = deftan(&["train", "--data", "nowhere", "--preset", "tiny", "--out", "run"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    std::fs::write(tmp.path().join("bad.toml"), "[model]\npreset = \"tiny\"\nchanels = 4\n").unwrap();
    let out = deftan(&["info", "--config", "bad.toml"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("chanels"), "{}", stderr(&out));
}

#[test]
fn missing_checkpoint_is_an_io_error() {
    let tmp = TempDir::new().unwrap();
    let wave = Waveform::new(vec![vec![0.1; 800]; 2], 16000).unwrap();
    write_wav(&tmp.path().join("x.wav"), &wave).unwrap();
    let out = deftan(&["enhance", "--in", "x.wav", "--out", "y.wav", "--ckpt", "none.ckpt"], tmp.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn train_enhance_eval_round() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    trained(dir);
    let run = dir.join("run");
    assert!(run.join("final.ckpt").is_file());
    let curve = std::fs::read_to_string(run.join("loss.csv")).unwrap();
    assert_eq!(curve.lines().next(), Some("step,pcm,speech_term,noise_term"));
    assert_eq!(curve.lines().count(), 6);

    // resuming runs the remaining steps of a longer schedule
    std::fs::write(
        dir.join("longer.toml"),
        "[model]\npreset = \"tiny\"\n[train]\nepochs = 1\nsteps_per_epoch = 8\ncheckpoint_every = 0\n",
    )
    .unwrap();
    ok(
        &["train", "--data", "data", "--config", "longer.toml", "--out", "run", "--resume", "run/final.ckpt"],
        dir,
    );
    let curve = std::fs::read_to_string(run.join("loss.csv")).unwrap();
    let steps: Vec<u64> = curve.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(steps, (1..=8).collect::<Vec<_>>());

    ok(&["enhance", "--in", "data/noisy_0000.wav", "--out", "a.wav", "--ckpt", "run/final.ckpt"], dir);
    ok(&["enhance", "--in", "data/noisy_0000.wav", "--out", "b.wav", "--ckpt", "run/final.ckpt"], dir);
    let input = read_wav(&dir.join("data/noisy_0000.wav")).unwrap();
    let enhanced = read_wav(&dir.join("a.wav")).unwrap();
    assert_eq!(enhanced.len(), input.len());
    assert_eq!(enhanced.num_channels(), 1);
    assert_eq!(std::fs::read(dir.join("a.wav")).unwrap(), std::fs::read(dir.join("b.wav")).unwrap());

    ok(&["eval", "--pairs", "data/manifest.jsonl", "--ckpt", "run/final.ckpt", "--report", "report.json"], dir);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["count"], 2);
    let examples = report["examples"].as_array().unwrap();
    let mean: f64 = examples.iter().map(|e| e["si_sdri_db"].as_f64().unwrap()).sum::<f64>() / 2.0;
    assert!((report["mean_si_sdri_db"].as_f64().unwrap() - mean).abs() < 1e-9);

    let log = std::fs::read_to_string(run.join("runs.jsonl")).unwrap();
    let entry: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(entry["command"], "train");
}

#[test]
fn eval_reports_infinite_scores_as_strings() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    trained(dir);
    // a pair whose noisy reference channel equals the clean target
    let clean = read_wav(&dir.join("data/clean_0000.wav")).unwrap();
    let c = clean.channel(0).to_vec();
    std::fs::create_dir(dir.join("same")).unwrap();
    write_wav(&dir.join("same/noisy.wav"), &Waveform::new(vec![c.clone(), c.clone()], 16000).unwrap()).unwrap();
    write_wav(&dir.join("same/clean.wav"), &clean).unwrap();
    let line = std::fs::read_to_string(dir.join("data/manifest.jsonl")).unwrap();
    let mut entry: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    entry["noisy"] = "noisy.wav".into();
    entry["clean"] = "clean.wav".into();
    std::fs::write(dir.join("same/manifest.jsonl"), entry.to_string() + "\n").unwrap();
    ok(&["eval", "--pairs", "same/manifest.jsonl", "--ckpt", "run/final.ckpt", "--report", "r.json"], dir);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("r.json")).unwrap()).unwrap();
    assert_eq!(report["examples"][0]["input_si_sdr_db"], "inf");
}

#[test]
fn enhance_rejects_wrong_mic_count() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    trained(dir);
    let wave = Waveform::new(vec![vec![0.1; 8000]; 3], 16000).unwrap();
    write_wav(&dir.join("three.wav"), &wave).unwrap();
    let out = deftan(&["enhance", "--in", "three.wav", "--out", "y.wav", "--ckpt", "run/final.ckpt"], dir);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains('3') && msg.contains('2'), "{msg}");
}

#[test]
fn info_reports_paper_size() {
    let tmp = TempDir::new().unwrap();
    let out = ok(&["info", "--preset", "paper"], tmp.path());
    assert!(stdout(&out).contains("2721154"), "{}", stdout(&out));
}

#[test]
fn ablate_sub_and_overlap_rows() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let common = ["--steps", "2", "--train-scenes", "1", "--eval-scenes", "1", "--clip-seconds", "0.5"];
    let run = |axis: &str| -> Vec<csv::StringRecord> {
        let out = format!("{axis}.csv");
        let mut args = vec!["ablate", "--axis", axis, "--out", &out];
        args.extend(common);
        ok(&args, dir);
        let mut r = csv::Reader::from_path(dir.join(&out)).unwrap();
        r.records().map(|x| x.unwrap()).collect()
    };
    assert_eq!(run("sub").len(), 4);
    let overlap = run("overlap");
    assert_eq!(overlap.len(), 2);
    let macs: Vec<f64> = overlap.iter().map(|r| r[3].parse().unwrap()).collect();
    assert!((macs[1] / macs[0] - 2.0).abs() < 1e-12, "{macs:?}");
}

#[test]
fn gradcheck_passes_and_catches_a_corrupted_op() {
    let tmp = TempDir::new().unwrap();
    let out = ok(&["gradcheck"], tmp.path());
    let table = stdout(&out);
    assert!(table.contains("worst"), "{table}");
    for op in deftan::gradcheck::suite_ops() {
        let rows = table.lines().filter(|l| l.split_whitespace().next() == Some(op)).count();
        assert_eq!(rows, 1, "{op} listed {rows} times");
    }

    let out = deftan(&["gradcheck", "--corrupt-op", "istft"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("istft"), "{}", stderr(&out));
}
