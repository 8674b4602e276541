//! Seeded scene corpora on disk.

use std::f64::consts::PI;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::rir::{RoomSpec, ARRAY_RADIUS};
use super::signals::{colored_noise, synthetic_speech};
use super::{spatialize, SceneExample};
use crate::audio::{write_wav, Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::seeds::mix64;

pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// Closed sampling ranges for every random scene parameter. A range with
/// equal ends pins that parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneRanges {
    pub rt60: (f64, f64),
    pub snr_db: (f64, f64),
    pub room_length: (f64, f64),
    pub room_width: (f64, f64),
    pub room_height: (f64, f64),
    /// Horizontal distance from the array centre to the speech source.
    pub source_distance: (f64, f64),
    pub noise_distance: (f64, f64),
    /// Speech source azimuth around the array, radians.
    pub source_azimuth: (f64, f64),
    /// Noise azimuth relative to the speech source, radians.
    pub noise_offset: (f64, f64),
    pub mic_count: usize,
    pub clip_seconds: f64,
    pub anechoic: bool,
}

impl Default for SceneRanges {
    fn default() -> Self {
        Self {
            rt60: (0.2, 1.3),
            snr_db: (5.0, 25.0),
            room_length: (4.0, 8.0),
            room_width: (4.0, 7.0),
            room_height: (2.5, 3.5),
            source_distance: (0.75, 2.0),
            noise_distance: (0.75, 2.5),
            source_azimuth: (0.0, 2.0 * PI),
            noise_offset: (PI / 3.0, 5.0 * PI / 3.0),
            mic_count: 4,
            clip_seconds: 4.0,
            anechoic: false,
        }
    }
}

impl SceneRanges {
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("rt60", self.rt60),
            ("snr", self.snr_db),
            ("room_length", self.room_length),
            ("room_width", self.room_width),
            ("room_height", self.room_height),
            ("source_distance", self.source_distance),
            ("noise_distance", self.noise_distance),
            ("source_azimuth", self.source_azimuth),
            ("noise_offset", self.noise_offset),
        ];
        for (name, (lo, hi)) in ranges {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::Config(format!("{name} range {lo}:{hi} needs LO <= HI")));
            }
        }
        if !self.anechoic && (self.rt60.0 < 0.2 || self.rt60.1 > 1.3) {
            return Err(Error::Config(format!(
                "rt60 range {}:{} must lie within 0.2:1.3 seconds",
                self.rt60.0, self.rt60.1
            )));
        }
        if self.room_length.0 < 2.0 || self.room_width.0 < 2.0 || self.room_height.0 < 2.0 {
            return Err(Error::Config("room sides must be at least 2 m".into()));
        }
        if self.source_distance.0 <= ARRAY_RADIUS || self.noise_distance.0 <= ARRAY_RADIUS {
            return Err(Error::Config(format!(
                "source distances must exceed the array radius {ARRAY_RADIUS} m"
            )));
        }
        if self.mic_count == 0 {
            return Err(Error::Config("mic_count must be at least 1".into()));
        }
        if !(0.25..=600.0).contains(&self.clip_seconds) {
            return Err(Error::Config(format!(
                "clip length {} s outside 0.25..600",
                self.clip_seconds
            )));
        }
        Ok(())
    }

    pub fn clip_samples(&self) -> usize {
        (self.clip_seconds * SAMPLE_RATE as f64).round() as usize
    }
}

/// One line of the manifest. Paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub noisy: PathBuf,
    pub clean: PathBuf,
    pub snr_db: f64,
    pub room: RoomSpec,
}

/// Seed for example `index`: the scrambled corpus seed xor the index, so
/// corpora with nearby seeds share no examples.
pub fn example_seed(seed: u64, index: usize) -> u64 {
    mix64(seed) ^ index as u64
}

fn draw<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

fn place(center: &[f64; 3], dist: f64, azimuth: f64, height: f64, dims: &[f64; 3]) -> [f64; 3] {
    let margin = 0.3;
    let clamp = |v: f64, l: f64| v.clamp(margin, l - margin);
    [
        clamp(center[0] + dist * azimuth.cos(), dims[0]),
        clamp(center[1] + dist * azimuth.sin(), dims[1]),
        clamp(height, dims[2]),
    ]
}

/// Builds example `index` of the corpus with `seed`, in memory.
pub fn generate_example(ranges: &SceneRanges, seed: u64, index: usize) -> Result<SceneExample> {
    ranges.validate()?;
    let ex_seed = example_seed(seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(ex_seed);
    let dims = [
        draw(&mut rng, ranges.room_length),
        draw(&mut rng, ranges.room_width),
        draw(&mut rng, ranges.room_height),
    ];
    let rt60 = draw(&mut rng, ranges.rt60);
    let snr_db = draw(&mut rng, ranges.snr_db);
    let center = [
        1.0 + (dims[0] - 2.0) * rng.gen::<f64>(),
        1.0 + (dims[1] - 2.0) * rng.gen::<f64>(),
        draw(&mut rng, (1.0, 1.6)),
    ];
    let az = draw(&mut rng, ranges.source_azimuth);
    let src_d = draw(&mut rng, ranges.source_distance);
    let src_h = draw(&mut rng, (1.2, 1.8));
    let noise_az = az + draw(&mut rng, ranges.noise_offset);
    let noise_d = draw(&mut rng, ranges.noise_distance);
    let noise_h = draw(&mut rng, (0.8, 2.0));
    let spec = RoomSpec {
        dimensions: dims,
        rt60,
        source_pos: place(&center, src_d, az, src_h, &dims),
        noise_pos: place(&center, noise_d, noise_az, noise_h, &dims),
        array_center: center,
        array_radius: ARRAY_RADIUS,
        mic_count: ranges.mic_count,
        seed: ex_seed,
        anechoic: ranges.anechoic,
    };
    let len = ranges.clip_samples();
    let speech = synthetic_speech(&mut rng, len);
    let noise = colored_noise(&mut rng, len);
    spatialize(&speech, &noise, &spec, snr_db)
}

/// Writes `count` examples as `noisy_XXXX.wav` (all mics), `clean_XXXX.wav`
/// (direct path at mic 0) and a JSON-lines manifest into `out_dir`.
pub fn build_dataset(
    ranges: &SceneRanges,
    count: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<Vec<ManifestEntry>> {
    ranges.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut entries = Vec::with_capacity(count);
    for index in 0..count {
        let ex = generate_example(ranges, seed, index)?;
        let noisy = PathBuf::from(format!("noisy_{index:04}.wav"));
        let clean = PathBuf::from(format!("clean_{index:04}.wav"));
        write_wav(&out_dir.join(&noisy), &ex.y)?;
        write_wav(&out_dir.join(&clean), &ex.s)?;
        entries.push(ManifestEntry {
            index,
            noisy,
            clean,
            snr_db: ex.snr_db,
            room: ex.metadata,
        });
    }
    let path = out_dir.join(MANIFEST_FILE);
    let mut text = String::new();
    for e in &entries {
        text.push_str(&serde_json::to_string(e).expect("manifest entries serialize"));
        text.push('\n');
    }
    fs::File::create(&path)
        .and_then(|mut f| f.write_all(text.as_bytes()))
        .map_err(|e| Error::io(&path, e))?;
    Ok(entries)
}

/// Parses a manifest file written by [`build_dataset`].
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(&line).map_err(|e| {
            Error::Input(format!("{}: line {}: {e}", path.display(), n + 1))
        })?;
        out.push(entry);
    }
    Ok(out)
}

/// Noisy and clean waveforms of one manifest entry.
pub fn load_entry(dir: &Path, entry: &ManifestEntry) -> Result<(Waveform, Waveform)> {
    let noisy = crate::audio::read_wav(&dir.join(&entry.noisy))?;
    let clean = crate::audio::read_wav(&dir.join(&entry.clean))?;
    Ok((noisy, clean))
}
