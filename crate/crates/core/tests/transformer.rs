mod common;

use mag::numerics::{check_gradients_with, GradCheckOptions, Tape, Tensor};
use mag::transformer::*;
use mag::{build_scale_schedule, ScaleSchedule, ScheduleConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny(vocab: usize) -> TransformerConfig {
    TransformerConfig {
        blocks: 2,
        hidden: 8,
        heads: 2,
        level_embedding_dim: 8,
        vocab,
        max_levels: 8,
        ..TransformerConfig::default()
    }
}

fn random_tokens(sizes: &[usize], vocab: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    sizes.iter().map(|&n| (0..n).map(|_| rng.gen_range(0..vocab)).collect()).collect()
}

fn logits(model: &ScaleTransformer<f64>, cb: &Tensor<f64>, tokens: &[Vec<usize>], class: usize) -> Tensor<f64> {
    let mut tape = Tape::new();
    let l = model.forward(&mut tape, &model.params, cb, tokens, class).unwrap();
    tape.value(l).clone()
}

proptest! {
    #[test]
    fn schedules_are_valid_for_all_sizes(n in 1usize..=256) {
        let s = build_scale_schedule(n, &[1, 2, 4, 6, 9], 2).unwrap();
        prop_assert_eq!(s.sizes()[0], 1);
        prop_assert_eq!(s.n(), n);
        prop_assert!(s.sizes().windows(2).all(|w| w[0] < w[1]));
        prop_assert!(s.sizes().iter().all(|&x| x <= n));
        // logarithmic number of scales
        prop_assert!(s.len() <= 6 + (n as f64).log2().ceil() as usize);
    }

    #[test]
    fn filter_is_a_distribution(raw in proptest::collection::vec(0.0f64..1.0, 1..40), k in 1usize..50, p in 0.01f64..=1.0) {
        let total: f64 = raw.iter().sum::<f64>() + 1e-3;
        let probs: Vec<f64> = raw.iter().map(|v| (v + 1e-3 / raw.len() as f64) / total).collect();
        let out = filter_top_k_top_p(&probs, k, p).unwrap();
        prop_assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let support = out.iter().filter(|&&v| v > 0.0).count();
        prop_assert!(support >= 1 && support <= k.min(probs.len()));
        // The kept set is a top set: nothing dropped outranks anything kept.
        let min_kept = out.iter().zip(&probs).filter(|(o, _)| **o > 0.0).map(|(_, p)| *p).fold(f64::INFINITY, f64::min);
        let max_dropped = out.iter().zip(&probs).filter(|(o, _)| **o == 0.0).map(|(_, p)| *p).fold(0.0, f64::max);
        prop_assert!(max_dropped <= min_kept);
    }
}

#[test]
fn default_config_logit_shape_and_initial_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model = ScaleTransformer::<f64>::new(TransformerConfig::default(), 16, 1).unwrap();
    let cb = Tensor::randn(&[1024, 16], 1.0, &mut rng);
    let sizes = build_scale_schedule(16, &[1, 2, 4, 6, 9], 2).unwrap();
    let tokens = random_tokens(sizes.sizes(), 1024, &mut rng);
    let mut tape = Tape::new();
    let (loss, l) = model.loss(&mut tape, &model.params, &cb, &tokens, 0).unwrap();
    assert_eq!(tape.shape(l), (sizes.total(), 1024));
    let ln_v = 1024f64.ln();
    let v = tape.value(loss).data()[0];
    assert!((v - ln_v).abs() / ln_v < 0.1, "initial loss {v}");
}

#[test]
fn next_scale_loss_hand_cases() {
    let mut tape = Tape::<f64>::new();
    let uniform = tape.constant(Tensor::zeros(&[3, 1024]));
    let l = next_scale_loss(&mut tape, uniform, &[vec![5], vec![7, 1023]]).unwrap();
    assert!((tape.value(l).data()[0] - 1024f64.ln()).abs() < 1e-12);

    let rows = vec![vec![1.0, 2.0, 0.5, -1.0], vec![0.0, 0.0, 3.0, 1.0]];
    let x = tape.constant(Tensor::from_rows(&rows).unwrap());
    let l = next_scale_loss(&mut tape, x, &[vec![1], vec![3]]).unwrap();
    let ce = |r: &[f64], t: usize| r.iter().map(|v| v.exp()).sum::<f64>().ln() - r[t];
    let expected = 0.5 * (ce(&rows[0], 1) + ce(&rows[1], 3));
    assert!((tape.value(l).data()[0] - expected).abs() < 1e-12);
    assert!(next_scale_loss(&mut tape, x, &[vec![1]]).is_err());

    let big = tape.constant(Tensor::from_rows(&[vec![60.0, 0.0, 0.0, 0.0]]).unwrap());
    let l = next_scale_loss(&mut tape, big, &[vec![0]]).unwrap();
    assert!(tape.value(l).data()[0] < 1e-20);
}

#[test]
fn positions_within_a_scale_are_exchangeable() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = ScaleTransformer::<f64>::new(tiny(16), 3, 3).unwrap();
    let cb = Tensor::randn(&[16, 3], 1.0, &mut rng);
    let sizes = [1, 2, 4, 6];
    let tokens = random_tokens(&sizes, 16, &mut rng);
    let mut tape = Tape::new();
    let cond = model.condition(&mut tape, &model.params, 0).unwrap();
    let x = model.embed_sequence(&mut tape, &model.params, &cb, &tokens, cond).unwrap();
    let mask = BlockMask::from_blocks(&sizes);
    let base = model.run(&mut tape, &model.params, x, cond, Some(&mask), None).unwrap();
    // Permute the 4-row block (positions 3..7).
    let perm = [0, 1, 2, 5, 3, 6, 4, 7, 8, 9, 10, 11, 12];
    let xp = tape.gather_rows(x, &perm).unwrap();
    let out = model.run(&mut tape, &model.params, xp, cond, Some(&mask), None).unwrap();
    let (a, b) = (tape.value(base), tape.value(out));
    for (i, &src) in perm.iter().enumerate() {
        let diff = common::rel_err(a.row(src), b.row(i));
        assert!(diff < 1e-12, "position {i}: {diff}");
    }
}

#[test]
fn perturbing_a_scale_leaves_earlier_logits_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let model = ScaleTransformer::<f64>::new(tiny(16), 3, 5).unwrap();
    let cb = Tensor::randn(&[16, 3], 1.0, &mut rng);
    let s = ScaleSchedule::from_sizes(vec![1, 2, 4, 6, 9]).unwrap();
    let tokens = random_tokens(s.sizes(), 16, &mut rng);
    let base = logits(&model, &cb, &tokens, 0);
    for j in 0..s.len() {
        let mut t2 = tokens.clone();
        for t in &mut t2[j] {
            *t = (*t + 1 + rng.gen_range(0..15)) % 16;
        }
        let out = logits(&model, &cb, &t2, 0);
        let cut = s.offset(j + 1);
        assert_eq!(&base.data()[..cut * 16], &out.data()[..cut * 16], "scale {j}");
        if j + 1 < s.len() {
            assert_ne!(&base.data()[cut * 16..], &out.data()[cut * 16..]);
        }
    }
}

#[test]
fn cached_steps_match_masked_forward() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let model = ScaleTransformer::<f64>::new(tiny(16), 3, 7).unwrap();
    let cb = Tensor::randn(&[16, 3], 1.0, &mut rng);
    for n in [1, 2, 5, 9, 17] {
        let s = build_scale_schedule(n, &[1, 2, 4, 6, 9], 2).unwrap();
        let tokens = random_tokens(s.sizes(), 16, &mut rng);
        let full = logits(&model, &cb, &tokens, 0);
        let mut cache = model.new_cache();
        for (k, &nk) in s.sizes().iter().enumerate() {
            let prev = if k == 0 { None } else { Some(tokens[k - 1].as_slice()) };
            let step = model.step(&cb, &mut cache, 0, k, prev, nk).unwrap();
            assert_eq!(cache.filled(), s.cumulative()[k]);
            let off = s.offset(k);
            let expect = &full.data()[off * 16..(off + nk) * 16];
            assert!(common::rel_err(expect, step.data()) < 1e-5);
        }
    }
}

#[test]
fn generation_is_one_call_per_scale_and_seeded() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let model = ScaleTransformer::<f64>::new(tiny(16), 3, 9).unwrap();
    let cb = Tensor::randn(&[16, 3], 1.0, &mut rng);
    let s = build_scale_schedule(20, &[1, 2, 4, 6, 9], 2).unwrap();
    let sampling = SamplingConfig::default();
    let a = model
        .generate_tokens(&cb, s.sizes(), 0, &sampling, &mut ChaCha8Rng::seed_from_u64(1))
        .unwrap();
    let b = model
        .generate_tokens(&cb, s.sizes(), 0, &sampling, &mut ChaCha8Rng::seed_from_u64(1))
        .unwrap();
    assert_eq!(a.tokens, b.tokens);
    assert_eq!(a.step_logits.len(), s.len());
    let lens: Vec<usize> = a.tokens.iter().map(Vec::len).collect();
    assert_eq!(lens, s.sizes());
}

#[test]
fn class_conditioning_and_validation() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut cfg = tiny(16);
    cfg.class_count = 3;
    let model = ScaleTransformer::<f64>::new(cfg, 3, 11).unwrap();
    let cb = Tensor::randn(&[16, 3], 1.0, &mut rng);
    let tokens = random_tokens(&[1, 2, 4], 16, &mut rng);
    let mut tape = Tape::new();
    assert!(model.forward(&mut tape, &model.params, &cb, &tokens, 3).is_err());
    let wrong = Tensor::randn(&[8, 3], 1.0, &mut rng);
    assert!(model.forward(&mut tape, &model.params, &wrong, &tokens, 0).is_err());
    let bad = TransformerConfig {
        hidden: 10,
        heads: 3,
        level_embedding_dim: 10,
        ..TransformerConfig::default()
    };
    assert!(ScaleTransformer::<f64>::new(bad, 3, 0).is_err());
}

#[test]
fn dropout_free_assembly_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let model = ScaleTransformer::<f64>::new(tiny(16), 3, 13).unwrap();
    let cb = Tensor::randn(&[16, 3], 1.0, &mut rng);
    let tokens = random_tokens(&[1, 2, 4, 5], 16, &mut rng);
    let run = || {
        let mut tape = Tape::new();
        let c = model.condition(&mut tape, &model.params, 0).unwrap();
        let x = model.embed_sequence(&mut tape, &model.params, &cb, &tokens, c).unwrap();
        tape.value(x).clone()
    };
    let x = run();
    assert_eq!(x, run());
    assert_eq!(x.rows(), 12);
}

#[test]
fn tiny_transformer_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let model = ScaleTransformer::<f64>::new(tiny(16), 3, 15).unwrap();
    let cb = Tensor::randn(&[16, 3], 1.0, &mut rng);
    let tokens = random_tokens(&[1, 2, 4], 16, &mut rng);
    for train in [false, true] {
        let mut params = model.params.clone();
        let report = check_gradients_with(
            |tape, p| Ok(model.loss(tape, p, &cb, &tokens, 0)?.0),
            &mut params,
            GradCheckOptions {
                eps: 1e-5,
                train,
                seed: 3,
                ..GradCheckOptions::default()
            },
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "train={train}: {report:?}");
    }
}

#[test]
fn training_is_deterministic_and_resumable() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let cb = Tensor::randn(&[16, 3], 1.0, &mut rng);
    let data: Vec<TokenizedGraph> = (0..7)
        .map(|_| {
            let n = rng.gen_range(3..10);
            let s = ScheduleConfig::default().build(n).unwrap();
            TokenizedGraph {
                tokens: random_tokens(s.sizes(), 16, &mut rng),
                class: 0,
            }
        })
        .collect();
    let cfg = TransformerTrainConfig {
        batch_size: 3,
        ..TransformerTrainConfig::default()
    };
    let run = |epochs: usize| {
        let mut m = ScaleTransformer::<f64>::new(tiny(16), 3, 17).unwrap();
        let mut tr = TransformerTrainer::new(cfg.clone(), &m).unwrap();
        let losses: Vec<f64> = (0..epochs).map(|_| tr.train_epoch(&mut m, &cb, &data).unwrap().loss).collect();
        (m, tr, losses)
    };
    let (_, _, a) = run(3);
    let (m, tr, b) = run(3);
    assert_eq!(a, b);

    let ck = tr.to_checkpoint(&m);
    let text = ck.to_text();
    let back = mag::numerics::Checkpoint::<f64>::from_text(&text).unwrap();
    let (mut m2, mut tr2) = TransformerTrainer::from_checkpoint(&back).unwrap();
    assert_eq!(tr2.adam.step_count(), tr.adam.step_count());
    let (mut m1, mut tr1) = (m.clone(), tr.clone());
    let x = tr1.train_epoch(&mut m1, &cb, &data).unwrap();
    let y = tr2.train_epoch(&mut m2, &cb, &data).unwrap();
    assert_eq!(x.loss, y.loss);
    assert_eq!(tr2.adam.step_count(), 3 * 3 + 3);
}
