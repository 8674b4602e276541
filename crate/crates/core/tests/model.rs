use deftan::ablation::Axis;
use deftan::{param_count, DeftAn, ModelConfig, SubBlock, Waveform};
use deftan_numerics::{Graph, Mode, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn noise(mics: usize, len: usize, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Waveform::new((0..mics).map(|_| (0..len).map(|_| rng.gen_range(-0.5..0.5)).collect()).collect(), 16000).unwrap()
}

/// Runs `f` on a fresh eval-mode graph holding `x`.
fn eval<F>(model: &DeftAn<f64>, x: &Tensor<f64>, f: F) -> Tensor<f64>
where
    F: Fn(&DeftAn<f64>, &mut Graph<f64>, &deftan_numerics::BoundParams, deftan_numerics::Var) -> deftan::Result<deftan_numerics::Var>,
{
    let mut g = Graph::<f64>::with_mode(Mode::Eval, 0).without_recording();
    let p = model.params.bind(&mut g);
    let xv = g.constant(x.clone());
    let y = f(model, &mut g, &p, xv).unwrap();
    g.value(y).clone()
}

fn tiny() -> DeftAn<f64> {
    DeftAn::new(ModelConfig::tiny(), 3).unwrap()
}

#[test]
fn up_conv_maps_mic_planes_to_features() {
    let m = tiny();
    let y = eval(&m, &random(&[4, 9, 5], 1), |m, g, p, x| m.up_conv(g, p, x));
    assert_eq!(y.shape(), &[8, 9, 5]);

    // zero input: every (f, t) sees bias only, so each channel is constant
    let z = eval(&m, &Tensor::zeros(&[4, 9, 5]), |m, g, p, x| m.up_conv(g, p, x));
    for c in 0..8 {
        let plane = &z.data()[c * 45..(c + 1) * 45];
        assert!(plane.iter().all(|&v| v == plane[0]), "channel {c}");
    }

    let mut g = Graph::<f64>::with_mode(Mode::Eval, 0);
    let p = m.params.bind(&mut g);
    let x = g.constant(random(&[6, 9, 5], 2));
    assert!(matches!(m.up_conv(&mut g, &p, x), Err(deftan::Error::Config(_))));
}

#[test]
fn dense_block_count_for_paper_width() {
    let model = DeftAn::<f32>::new(ModelConfig::paper(), 0).unwrap();
    let count = |prefix: &str| -> usize {
        model.params.iter().filter(|p| p.name.starts_with(prefix)).map(|p| p.tensor.numel()).sum()
    };
    // conv weights sum_k k*64*64*9, plus bias, LN gamma/beta and PReLU slope per layer
    let weights: usize = (1..=5).map(|k| k * 64 * 64 * 9).sum();
    assert_eq!(weights, 552_960);
    assert_eq!(count("blocks.0.dense."), weights + 5 * (64 + 2 * 64 + 64));
    for (i, k) in (1..=5).enumerate() {
        let w = model.params.by_name(&format!("blocks.0.dense.layers.{i}.conv.weight")).unwrap();
        assert_eq!(w.tensor.shape(), &[64, k * 64, 3, 3]);
    }
}

#[test]
fn zero_block_count_by_hand() {
    let cfg = ModelConfig { blocks: 0, ..ModelConfig::paper() };
    let (m, c) = (4, 64);
    let up = 2 * m * c * 9 + c + 2 * c + c;
    let down = c * 2 * 9 + 2;
    assert_eq!(param_count(&cfg).unwrap(), up + down);
    assert_eq!(DeftAn::<f32>::new(cfg, 0).unwrap().param_count(), up + down);
}

#[test]
fn block_share_is_linear_in_block_count() {
    let count = |nb| param_count(&ModelConfig { blocks: nb, ..ModelConfig::paper() }).unwrap();
    let per_block = count(1) - count(0);
    for nb in 2..=4 {
        assert_eq!(count(nb) - count(0), nb * per_block);
    }
    assert!(count(2) < count(3) && count(3) < count(4));
}

#[test]
fn every_sub_variant_is_smaller_than_the_full_model() {
    for base in [ModelConfig::tiny(), ModelConfig::paper()] {
        let rows = Axis::Sub.variants(&base);
        let counts: Vec<usize> = rows.iter().map(|(_, c)| param_count(c).unwrap()).collect();
        let full = param_count(&base).unwrap();
        assert_eq!(*counts.last().unwrap(), full);
        for (label, n) in rows.iter().map(|r| &r.0).zip(&counts).take(counts.len() - 1) {
            assert!(*n < full, "{label}: {n} >= {full}");
        }
        let without = |b: SubBlock| {
            let cfg = ModelConfig { ablate: Some(b), ..base.clone() };
            param_count(&cfg).unwrap()
        };
        assert!(without(SubBlock::Dense) < without(SubBlock::Time));
        assert!(without(SubBlock::Time) < without(SubBlock::Freq));
    }
}

#[test]
fn f_transformer_commutes_with_frequency_permutations() {
    let m = tiny();
    let (c, f, t) = (8, 7, 4);
    let x = random(&[c, f, t], 4);
    let perm = [3usize, 0, 6, 1, 5, 2, 4];
    let permute = |x: &Tensor<f64>| {
        let mut out = vec![0.0; c * f * t];
        for ci in 0..c {
            for (fi, &src) in perm.iter().enumerate() {
                for ti in 0..t {
                    out[(ci * f + fi) * t + ti] = x.data()[(ci * f + src) * t + ti];
                }
            }
        }
        Tensor::new(&[c, f, t], out).unwrap()
    };
    let a = permute(&eval(&m, &x, |m, g, p, x| m.f_transformer(g, p, 0, x)));
    let b = eval(&m, &permute(&x), |m, g, p, x| m.f_transformer(g, p, 0, x));
    for (u, v) in a.data().iter().zip(b.data()) {
        assert!((u - v).abs() < 1e-12);
    }
}

#[test]
fn block_follows_its_order_and_ablation() {
    let x = random(&[8, 5, 6], 5);
    let base = ModelConfig::tiny();
    let dft = DeftAn::<f64>::new(base.clone(), 9).unwrap();
    let whole = eval(&dft, &x, |m, g, p, x| m.deft_a_block(g, p, 0, x));
    let composed = eval(&dft, &x, |m, g, p, x| {
        let h = m.dense_block(g, p, 0, x)?;
        let h = m.f_transformer(g, p, 0, h)?;
        m.t_conformer(g, p, 0, h)
    });
    assert_eq!(whole.data(), composed.data());

    let no_dense = DeftAn::<f64>::new(ModelConfig { ablate: Some(SubBlock::Dense), ..base.clone() }, 9).unwrap();
    let whole = eval(&no_dense, &x, |m, g, p, x| m.deft_a_block(g, p, 0, x));
    let ft = eval(&no_dense, &x, |m, g, p, x| {
        let h = m.f_transformer(g, p, 0, x)?;
        m.t_conformer(g, p, 0, h)
    });
    assert_eq!(whole.data(), ft.data());

    for order in [
        [SubBlock::Time, SubBlock::Freq, SubBlock::Dense],
        [SubBlock::Freq, SubBlock::Time, SubBlock::Dense],
    ] {
        let m = DeftAn::<f64>::new(ModelConfig { block_order: order.to_vec(), ..base.clone() }, 9).unwrap();
        assert_eq!(eval(&m, &x, |m, g, p, x| m.deft_a_block(g, p, 0, x)).shape(), &[8, 5, 6]);
    }
}

#[test]
fn zero_down_weights_give_the_identity_mask() {
    let mut m = tiny();
    for p in m.params.iter_mut() {
        if p.name == "down.conv.weight" {
            p.tensor.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let y = eval(&m, &random(&[8, 5, 3], 6), |m, g, p, x| m.down_conv(g, p, x));
    assert_eq!(y.shape(), &[2, 5, 3]);
    assert!(y.data()[..15].iter().all(|&v| v == 1.0));
    assert!(y.data()[15..].iter().all(|&v| v == 0.0));

    // and then enhancement returns the reference channel
    let wave = noise(2, 800, 7);
    let out = m.enhance(&wave).unwrap();
    for (a, b) in out.channel(0).iter().zip(wave.channel(0)) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn forward_is_length_preserving_bounded_and_deterministic() {
    let m = DeftAn::<f32>::new(ModelConfig::tiny(), 1).unwrap();
    let wave = noise(2, 16000, 8);
    let (a, mask) = m.forward(&wave, Mode::Eval, 0).unwrap();
    assert_eq!(a.len(), 16000);
    assert!(a.channel(0).iter().all(|v| v.is_finite() && v.abs() < 10.0));
    assert_eq!(mask.re.shape(), &[33, 997]);
    assert_eq!(a, m.forward(&wave, Mode::Eval, 5).unwrap().0);

    let t1 = m.forward(&wave, Mode::Train, 11).unwrap().0;
    assert_eq!(t1, m.forward(&wave, Mode::Train, 11).unwrap().0);
    assert_ne!(t1, m.forward(&wave, Mode::Train, 12).unwrap().0);
    assert_ne!(t1, a);
}

#[test]
fn forward_rejects_bad_inputs() {
    let m = DeftAn::<f32>::new(ModelConfig::tiny(), 1).unwrap();
    assert!(matches!(m.enhance(&noise(3, 800, 1)), Err(deftan::Error::Config(_))));
    assert!(matches!(m.enhance(&noise(2, 40, 1)), Err(deftan::Error::InputTooShort { .. })));
}

#[test]
fn last_frame_reaches_the_first_mask_frame() {
    let m = DeftAn::<f64>::new(ModelConfig { dropout: 0.0, ..ModelConfig::tiny() }, 2).unwrap();
    let wave = noise(2, 1600, 9);
    let (_, base) = m.forward(&wave, Mode::Eval, 0).unwrap();
    let mut channels = wave.clone().into_channels();
    for ch in channels.iter_mut() {
        for v in ch.iter_mut().rev().take(16) {
            *v += 0.3;
        }
    }
    let (_, moved) = m.forward(&Waveform::new(channels, 16000).unwrap(), Mode::Eval, 0).unwrap();
    let frames = base.re.shape()[1];
    let first = |t: &Tensor<f64>| (0..t.shape()[0]).map(|f| t.data()[f * frames]).collect::<Vec<_>>();
    assert_ne!(first(&base.re), first(&moved.re));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn every_sub_block_preserves_shape(f in 1usize..7, t in 1usize..7, seed in 0u64..100) {
        let m = tiny();
        let x = random(&[8, f, t], seed);
        for y in [
            eval(&m, &x, |m, g, p, x| m.dense_block(g, p, 0, x)),
            eval(&m, &x, |m, g, p, x| m.f_transformer(g, p, 0, x)),
            eval(&m, &x, |m, g, p, x| m.t_conformer(g, p, 0, x)),
            eval(&m, &x, |m, g, p, x| m.deft_a_block(g, p, 0, x)),
        ] {
            prop_assert_eq!(y.shape(), &[8, f, t]);
            prop_assert!(y.data().iter().all(|v| v.is_finite()));
        }
    }
}
