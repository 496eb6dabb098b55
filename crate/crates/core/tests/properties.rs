//! Property tests for cross-module invariants.

use std::collections::HashMap;

use cadec::data::{
    gen_synthetic_corpus, group_and_fragment, parse_testset, testset_to_text, ContrastiveInstance, FragmentOptions,
    SubtitlePair, SynthConfig,
};
use cadec::evaluation::{bleu, evaluate_consistency};
use cadec::inference::beam_search;
use cadec::tensor::Tensor;
use cadec::testset_builder::{build_deixis_instances, MorphologyProvider, ToyLexicon};
use cadec::tokenizer::{EOS, NUM_SPECIALS};
use cadec::training::{corrupt_reference, corruption_count, lr_at, make_batches};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn words() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e", "f"]), 0..8).prop_map(|w| w.join(" "))
}

fn synthetic_deixis(seed: u64) -> Vec<ContrastiveInstance> {
    let data = gen_synthetic_corpus(&SynthConfig {
        seed,
        n_fragments: 5,
        n_dev_fragments: 40,
        pairs_per_distance: 2,
        ..SynthConfig::default()
    });
    build_deixis_instances(&data.dev, &ToyLexicon::bundled(), &[])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tensor_length_matches_shape(r in 1usize..5, c in 1usize..5, extra in 0usize..3) {
        prop_assert!(Tensor::new(vec![r, c], vec![0.0; r * c]).is_ok());
        if extra > 0 {
            prop_assert!(Tensor::new(vec![r, c], vec![0.0; r * c + extra]).is_err());
        }
    }

    #[test]
    fn bleu_ignores_consistent_reordering(
        lines in prop::collection::vec((words(), words()), 1..8),
        seed in any::<u64>(),
    ) {
        let (h, r): (Vec<String>, Vec<String>) = lines.iter().cloned().unzip();
        let mut idx: Vec<usize> = (0..lines.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut rng);
        let h2: Vec<&String> = idx.iter().map(|&i| &h[i]).collect();
        let r2: Vec<&String> = idx.iter().map(|&i| &r[i]).collect();
        let a = bleu(&h, &r, false).unwrap();
        let b = bleu(&h2, &r2, false).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
        prop_assert!((0.0..=100.0).contains(&a));
    }

    #[test]
    fn consistency_is_invariant_to_monotone_transforms(seed in 0u64..1000, shift in -5.0f64..5.0, gain in 0.1f64..10.0) {
        let set = synthetic_deixis(seed % 7 + 1);
        let raw = move |inst: &ContrastiveInstance, g: usize| -> cadec::Result<f64> {
            let key = format!("{seed}{:?}", inst.group(g));
            Ok((key.bytes().fold(0u64, |h, b| h.wrapping_mul(131).wrapping_add(b as u64)) % 1000) as f64)
        };
        let moved = move |inst: &ContrastiveInstance, g: usize| raw(inst, g).map(|x| gain * x.atan() + shift);
        let a = evaluate_consistency(&raw, &set).unwrap();
        let b = evaluate_consistency(&moved, &set).unwrap();
        prop_assert_eq!(a.total, b.total);
        prop_assert_eq!(a.by_distance.clone(), b.by_distance);
        let summed: usize = a.by_distance.values().map(|b| b.count).sum();
        prop_assert_eq!(summed, a.total.count);
        prop_assert!((0.0..=1.0).contains(&a.accuracy()));
    }

    #[test]
    fn deixis_builder_is_symmetric_and_round_trips(seed in 1u64..50) {
        let set = synthetic_deixis(seed);
        prop_assert_eq!(set.len() % 2, 0);
        for pair in set.chunks(2) {
            let n = pair[0].true_tgt.len();
            prop_assert_eq!(&pair[0].src, &pair[1].src);
            prop_assert_eq!(&pair[0].contrastive[0][n - 1], &pair[1].true_tgt[n - 1]);
            prop_assert_eq!(&pair[1].contrastive[0][n - 1], &pair[0].true_tgt[n - 1]);
            for i in pair {
                prop_assert!(i.validate().is_ok());
                prop_assert!(i.contrastive.iter().all(|c| c != &i.true_tgt));
            }
        }
        let back = parse_testset(&testset_to_text(&set), "mem").unwrap();
        prop_assert_eq!(back, set);
    }

    #[test]
    fn finished_iff_last_token_is_eos(seed in any::<u64>(), vocab in 3usize..6, beam in 1usize..6, max_len in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut table: HashMap<Vec<usize>, Vec<f64>> = HashMap::new();
        let mut scorer_table = |p: &[usize]| -> Vec<f64> {
            table
                .entry(p.to_vec())
                .or_insert_with(|| {
                    let l: Vec<f64> = (0..vocab).map(|_| rng.gen_range(-2.0..2.0)).collect();
                    let z = l.iter().map(|x| x.exp()).sum::<f64>().ln();
                    l.iter().map(|x| x - z).collect()
                })
                .clone()
        };
        // fill the table eagerly so the scorer can be a plain Fn
        let mut stack = vec![Vec::new()];
        while let Some(p) = stack.pop() {
            scorer_table(&p);
            if p.len() < max_len {
                for t in (0..vocab).filter(|&t| t != EOS) {
                    let mut q = p.clone();
                    q.push(t);
                    stack.push(q);
                }
            }
        }
        let scorer = |p: &[usize]| -> cadec::Result<Vec<f64>> { Ok(table[p].clone()) };
        let h = beam_search(&scorer, beam, max_len).unwrap();
        prop_assert_eq!(h.finished, h.tokens.last() == Some(&EOS));
        prop_assert!(h.tokens.len() <= max_len);
        prop_assert!(h.tokens.iter().rev().skip(1).all(|&t| t != EOS));
    }

    #[test]
    fn corruption_respects_count_and_vocab(n in 1usize..60, rate in 0.0f64..=1.0, vocab in 7usize..30, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r: Vec<usize> = (0..n).map(|_| rng.gen_range(NUM_SPECIALS..vocab)).collect();
        let c = corrupt_reference(&r, rate, vocab, &mut rng).unwrap();
        prop_assert_eq!(c.len(), n);
        let changed = r.iter().zip(&c).filter(|(a, b)| a != b).count();
        prop_assert_eq!(changed, corruption_count(n, rate));
        prop_assert!(c.iter().all(|&t| (NUM_SPECIALS..vocab).contains(&t)));
    }

    #[test]
    fn schedule_is_positive(step in 1u64..100_000, warmup in 1u64..20_000, scale in 0.01f64..10.0) {
        let lr = lr_at(step, warmup, scale).unwrap();
        prop_assert!(lr > 0.0 && lr <= scale / (warmup as f64).sqrt() * (1.0 + 1e-12));
    }

    #[test]
    fn batches_partition_examples(lengths in prop::collection::vec(1usize..50, 0..100), budget in 1usize..200, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batches = make_batches(&lengths, budget, &mut rng);
        let mut seen: Vec<usize> = batches.iter().flatten().copied().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..lengths.len()).collect::<Vec<_>>());
        for b in &batches {
            let total: usize = b.iter().map(|&i| lengths[i]).sum();
            prop_assert!(total <= budget || b.len() == 1);
        }
    }

    #[test]
    fn fragments_keep_order_and_context_bound(gaps in prop::collection::vec(0.5f64..12.0, 1..20), window in 2usize..5, prefixes in any::<bool>()) {
        let mut t = 0.0;
        let pairs: Vec<SubtitlePair> = gaps
            .iter()
            .enumerate()
            .map(|(i, g)| {
                t += g;
                SubtitlePair::new(format!("s{i}"), format!("t{i}"), t, t + 0.4, 1.0).unwrap()
            })
            .collect();
        let frags = group_and_fragment(&pairs, FragmentOptions { max_gap: 7.0, window, include_short_prefixes: prefixes }).unwrap();
        for f in &frags {
            prop_assert!(f.context.len() < window);
            let starts: Vec<f64> = f.pairs().map(|p| p.start).collect();
            prop_assert!(starts.windows(2).all(|w| w[0] <= w[1] && w[1] - w[0] <= 7.0));
        }
    }
}

#[test]
fn toy_lexicon_inflection_round_trips() {
    let lex = ToyLexicon::bundled();
    let mut n = 0;
    for (surface, analysis) in lex.entries() {
        assert_eq!(lex.inflect(&analysis.lemma, &analysis.tags).as_deref(), Some(surface));
        n += 1;
    }
    assert!(n > 50);
}
