use dpnmt::corpus::{DP_MARKER_ID, EOS};
use dpnmt::decoding::{beam_search, default_max_len, greedy, rerank, score_candidates, select, NBestList, RerankConfig};
use dpnmt::model::init_parameters;
use dpnmt::nmt::{AttentionVariant, ModelConfig, ReconstructorMode};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cfg(mode: ReconstructorMode, joint: bool) -> ModelConfig {
    ModelConfig {
        src_vocab: 12,
        tgt_vocab: 9,
        emb: 6,
        hidden: 7,
        mode,
        attention: if mode == ReconstructorMode::Shared { AttentionVariant::EncToDec } else { AttentionVariant::Independent },
        joint_prediction: joint,
        pronoun_vocab: 4,
        init_scale: 0.8,
    }
}

fn sources(seed: u64, n: usize) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..rng.gen_range(1..7)).map(|_| rng.gen_range(5..12)).collect())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn beam_one_is_greedy(seed in 0u64..10_000) {
        let c = cfg(ReconstructorMode::None, false);
        let store = init_parameters(&c, seed).unwrap();
        let srcs = sources(seed, 6);
        let g = greedy(&store, &c, &srcs).unwrap();
        for (s, gc) in srcs.iter().zip(&g) {
            let b = beam_search(&store, &c, s, 1, default_max_len(s.len())).unwrap();
            prop_assert_eq!(b.len(), 1);
            prop_assert_eq!(&b[0].tokens, &gc.tokens);
            prop_assert_eq!(b[0].finished, gc.finished);
            prop_assert_eq!(b[0].log_likelihood, gc.log_likelihood);
        }
    }

    #[test]
    fn beam_output_is_sorted_and_distinct(seed in 0u64..10_000, beam in 2usize..8) {
        let c = cfg(ReconstructorMode::None, false);
        let store = init_parameters(&c, seed).unwrap();
        let src = &sources(seed, 1)[0];
        let out = beam_search(&store, &c, src, beam, default_max_len(src.len())).unwrap();
        prop_assert!(!out.is_empty() && out.len() <= beam);
        for w in out.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            prop_assert!(a.normalized() > b.normalized()
                || (a.normalized() == b.normalized() && a.tokens < b.tokens));
        }
        for (i, a) in out.iter().enumerate() {
            prop_assert_eq!(*a.tokens.last().unwrap(), EOS);
            prop_assert!(a.tokens.len() <= default_max_len(src.len()) + 1);
            for b in &out[i + 1..] {
                prop_assert_ne!(&a.tokens, &b.tokens);
            }
        }
    }
}

#[test]
fn unfinished_search_is_flagged() {
    let c = cfg(ReconstructorMode::None, false);
    let mut store = init_parameters(&c, 1).unwrap();
    // Make EOS unreachable.
    let b = store.value_mut("dec.out.b").unwrap();
    b.data_mut()[EOS] = -1e6;
    let out = beam_search(&store, &c, &[5, 6], 3, 4).unwrap();
    assert_eq!(out.len(), 1);
    assert!(!out[0].finished);
    assert_eq!(out[0].tokens.len(), 5);
    assert_eq!(*out[0].tokens.last().unwrap(), EOS);
    assert!(beam_search(&store, &c, &[5], 0, 4).is_err());
}

#[test]
fn wider_beam_never_finds_worse_top_score() {
    let c = cfg(ReconstructorMode::None, false);
    let store = init_parameters(&c, 2).unwrap();
    for src in sources(2, 10) {
        let n = default_max_len(src.len());
        let one = beam_search(&store, &c, &src, 1, n).unwrap();
        let many = beam_search(&store, &c, &src, 8, n).unwrap();
        assert!(many.iter().any(|m| m.normalized() >= one[0].normalized() - 1e-12) || !one[0].finished);
    }
}

#[test]
fn reranking_stays_in_list_and_maximizes_combined_score() {
    for (mode, joint) in [(ReconstructorMode::Shared, true), (ReconstructorMode::Separate, false)] {
        let c = cfg(mode, joint);
        let store = init_parameters(&c, 3).unwrap();
        for (i, src) in sources(3, 5).into_iter().enumerate() {
            let mut annotated = src.clone();
            annotated.insert(i % (src.len() + 1), DP_MARKER_ID);
            let mut l = NBestList {
                candidates: beam_search(&store, &c, &src, 5, default_max_len(src.len())).unwrap(),
                source: src,
                annotated: Some(annotated),
            };
            let before = l.candidates.clone();
            score_candidates(&store, &c, &mut l).unwrap();
            for cand in &l.candidates {
                let r = cand.log_reconstruction.unwrap();
                assert!(r < 0.0);
                assert_eq!(cand.dp_words.len(), usize::from(joint));
                assert_eq!(cand.log_dp.is_some(), joint);
            }
            for lambda in [0.0, 0.5, 1.0, 1e6] {
                let rc = RerankConfig { lambda, ..Default::default() };
                let pick = select(&l, &rc).unwrap();
                let mut sorted = l.clone();
                rerank(&mut sorted, &rc).unwrap();
                assert_eq!(sorted.best().tokens, l.candidates[pick].tokens);
                assert!(before.iter().any(|b| b.tokens == sorted.best().tokens));
                for other in &sorted.candidates {
                    assert!(sorted.best().combined >= other.combined);
                    assert_eq!(other.combined, other.log_likelihood + lambda * other.log_reconstruction.unwrap());
                }
                if lambda == 0.0 {
                    // Raw-sum argmax; the search order is length-normalized.
                    let ll = l.candidates[pick].log_likelihood;
                    assert!(l.candidates.iter().all(|o| o.log_likelihood <= ll));
                    let len = l.candidates[0].tokens.len();
                    if l.candidates.iter().all(|o| o.tokens.len() == len) {
                        assert_eq!(pick, 0);
                    }
                }
            }
        }
    }
    let base = cfg(ReconstructorMode::None, false);
    let store = init_parameters(&base, 3).unwrap();
    let mut l = NBestList {
        candidates: beam_search(&store, &base, &[5], 2, 5).unwrap(),
        source: vec![5],
        annotated: Some(vec![5]),
    };
    assert!(score_candidates(&store, &base, &mut l).is_err());
}
