use deftan::loss::si_sdr;
use deftan::scenes::*;
use deftan::{Error, Waveform, SAMPLE_RATE};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn room(rt60: f64, anechoic: bool) -> RoomSpec {
    RoomSpec {
        dimensions: [6.0, 5.0, 3.0],
        rt60,
        source_pos: [4.5, 2.5, 1.5],
        noise_pos: [1.5, 4.0, 1.6],
        array_center: [3.0, 2.5, 1.5],
        array_radius: ARRAY_RADIUS,
        mic_count: 4,
        seed: 11,
        anechoic,
    }
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn argmax(x: &[f64]) -> usize {
    x.iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .unwrap()
        .0
}

fn peak_position(x: &[f64]) -> f64 {
    interpolated_peak(x).0
}

/// Sub-sample peak of the band-limited interpolant, searched on a 0.01 grid.
fn interpolated_peak(x: &[f64]) -> (f64, f64) {
    let i = argmax(x) as f64;
    let interp = |t: f64| -> f64 {
        x.iter()
            .enumerate()
            .map(|(n, &v)| {
                let u = std::f64::consts::PI * (t - n as f64);
                if u == 0.0 { v } else { v * u.sin() / u }
            })
            .sum()
    };
    (-100..=100)
        .map(|k| i + k as f64 * 0.01)
        .map(|t| (t, interp(t)))
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .unwrap()
}

#[test]
fn anechoic_rir_is_one_delayed_impulse() {
    let spec = room(0.5, true);
    let rir = simulate_rir(&spec).unwrap();
    for (m, mic) in spec.mic_positions().iter().enumerate() {
        let d = dist(mic, &spec.source_pos);
        let want = d / SPEED_OF_SOUND * SAMPLE_RATE as f64;
        let (at, peak) = interpolated_peak(&rir.full[m]);
        assert!((at - want).abs() < 0.1, "mic {m}");
        assert_eq!(rir.full[m], rir.direct[m]);
        let want_peak = 1.0 / (4.0 * std::f64::consts::PI * d);
        assert!((peak - want_peak).abs() < 0.05 * want_peak, "{peak} vs {want_peak}");
    }
}

#[test]
fn inter_mic_arrival_difference_matches_geometry() {
    let spec = room(0.4, false);
    let rir = simulate_rir(&spec).unwrap();
    let mics = spec.mic_positions();
    let fs = SAMPLE_RATE as f64;
    for a in 0..4 {
        for b in 0..4 {
            let want = (dist(&mics[b], &spec.source_pos) - dist(&mics[a], &spec.source_pos))
                / SPEED_OF_SOUND
                * fs;
            let got = peak_position(&rir.direct[b]) - peak_position(&rir.direct[a]);
            assert!((got - want).abs() <= 0.5, "mics {a},{b}: {got} vs {want}");
            assert!(got.abs() <= 2.0 * ARRAY_RADIUS / SPEED_OF_SOUND * fs + 0.5);
        }
    }
}

#[test]
fn reverberant_energy_decays_in_50ms_windows() {
    let spec = room(0.3, false);
    let rir = simulate_rir(&spec).unwrap();
    let h = &rir.full[0];
    let start = argmax(h);
    let w = SAMPLE_RATE as usize / 20;
    let energies: Vec<f64> = h[start..]
        .chunks_exact(w)
        .map(|c| c.iter().map(|v| v * v).sum())
        .collect();
    assert!(energies.len() >= 4);
    for pair in energies.windows(2) {
        assert!(pair[1] < pair[0], "{energies:?}");
    }
}

#[test]
fn coincident_source_is_a_geometry_error() {
    let mut spec = room(0.4, false);
    spec.source_pos = spec.mic_positions()[2];
    assert!(matches!(simulate_rir(&spec), Err(Error::Geometry(_))));
    let mut outside = room(0.4, false);
    outside.noise_pos[0] = 7.0;
    assert!(matches!(simulate_noise_rir(&outside), Err(Error::Geometry(_))));
}

fn sources(seed: u64, len: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (synthetic_speech(&mut rng, len), colored_noise(&mut rng, len))
}

#[test]
fn mixture_is_exact_sum_at_requested_snr() {
    let (speech, noise) = sources(3, 8000);
    for snr in [-10.0, 0.0, 5.0, 25.0] {
        let ex = spatialize(&speech, &noise, &room(0.7, false), snr).unwrap();
        assert_eq!(ex.decomposition_residual(), 0.0);
        assert!((ex.realized_snr_db(0) - snr).abs() < 0.1);
        assert_eq!(ex.y.num_channels(), 4);
        assert_eq!(ex.y.len(), 8000);
        assert_eq!(ex.s.channel(0), &ex.direct[0][..]);
        let peak = ex.y.channels().iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!((peak - MIX_PEAK).abs() < 1e-12);
    }
}

#[test]
fn anechoic_mixture_has_no_reverberant_part() {
    let (speech, noise) = sources(4, 4000);
    let ex = spatialize(&speech, &noise, &room(0.5, true), 0.0).unwrap();
    assert!(ex.reverb.iter().flatten().all(|&v| v == 0.0));
    for m in 0..4 {
        for i in 0..4000 {
            assert_eq!(ex.y.channel(m)[i], ex.direct[m][i] + ex.noise[m][i]);
        }
    }
}

#[test]
fn silent_inputs_are_rejected() {
    let (speech, noise) = sources(5, 4000);
    let silent = vec![0.0; 4000];
    assert!(matches!(spatialize(&silent, &noise, &room(0.5, false), 5.0), Err(Error::Input(_))));
    assert!(matches!(spatialize(&speech, &silent, &room(0.5, false), 5.0), Err(Error::Input(_))));
}

#[test]
fn longer_rt60_lowers_si_sdr_of_the_mixture() {
    let mut wins = 0;
    let trials = 5;
    for seed in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let speech = white_noise(&mut rng, 8000);
        let noise = white_noise(&mut rng, 8000);
        let score = |rt60| {
            let mut spec = room(rt60, false);
            spec.seed = seed;
            let ex = spatialize(&speech, &noise, &spec, 10.0).unwrap();
            si_sdr(&ex.y.select(0), &ex.s).unwrap()
        };
        if score(0.6) < score(0.2) {
            wins += 1;
        }
    }
    assert!(2 * wins > trials, "{wins}/{trials}");
}

fn small_ranges() -> SceneRanges {
    SceneRanges {
        clip_seconds: 0.25,
        ..SceneRanges::default()
    }
}

#[test]
fn corpus_is_byte_identical_for_a_fixed_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ranges = small_ranges();
    build_dataset(&ranges, 4, 9, a.path()).unwrap();
    build_dataset(&ranges, 4, 9, b.path()).unwrap();
    let mut names: Vec<_> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 9);
    for n in names {
        let x = std::fs::read(a.path().join(&n)).unwrap();
        let y = std::fs::read(b.path().join(&n)).unwrap();
        assert_eq!(x, y, "{n:?}");
    }
    let entries = read_manifest(&a.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(entries.len(), 4);
    let (noisy, clean) = load_entry(a.path(), &entries[1]).unwrap();
    assert_eq!(noisy.num_channels(), 4);
    assert_eq!(clean.num_channels(), 1);
    assert_eq!(noisy.len(), 4000);
}

#[test]
fn sampled_metadata_respects_ranges() {
    let ranges = SceneRanges {
        rt60: (0.3, 0.5),
        snr_db: (-10.0, 10.0),
        ..small_ranges()
    };
    for i in 0..8 {
        let ex = generate_example(&ranges, 21, i).unwrap();
        assert!((0.3..=0.5).contains(&ex.metadata.rt60));
        assert!((-10.0..=10.0).contains(&ex.snr_db));
        ex.metadata.validate().unwrap();
    }
}

#[test]
fn point_ranges_pin_all_metadata_but_the_seed() {
    let ranges = SceneRanges {
        rt60: (0.4, 0.4),
        snr_db: (5.0, 5.0),
        room_length: (5.0, 5.0),
        room_width: (4.0, 4.0),
        room_height: (3.0, 3.0),
        source_distance: (1.0, 1.0),
        noise_distance: (1.5, 1.5),
        source_azimuth: (0.5, 0.5),
        noise_offset: (2.0, 2.0),
        ..small_ranges()
    };
    let first = generate_example(&ranges, 3, 0).unwrap();
    for i in 1..4 {
        let ex = generate_example(&ranges, 3, i).unwrap();
        let mut meta = ex.metadata.clone();
        assert_ne!(meta.seed, first.metadata.seed);
        meta.seed = first.metadata.seed;
        // the array centre is drawn inside the room, not from a range
        meta.array_center = first.metadata.array_center;
        meta.source_pos = first.metadata.source_pos;
        meta.noise_pos = first.metadata.noise_pos;
        assert_eq!(meta, first.metadata);
        assert_eq!(ex.snr_db, first.snr_db);
    }
}

#[test]
fn inverted_range_is_a_config_error() {
    let ranges = SceneRanges {
        snr_db: (10.0, 5.0),
        ..small_ranges()
    };
    let err = generate_example(&ranges, 0, 0).unwrap_err();
    assert!(err.to_string().contains("snr"));
    let _ = Waveform::mono(vec![0.0]);
}
