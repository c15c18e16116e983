//! Beam search, batched greedy decoding and n-best reranking with the
//! reconstruction score.

mod nbest;
mod rerank;
mod search;

pub use nbest::{read_nbest, write_nbest};
pub use rerank::{combined_score, rerank, score_candidates, select, tune_lambda, RerankConfig, LAMBDA_GRID};
pub use search::{beam_search, default_max_len, greedy, Candidate, NBestList};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Vocabulary, EOS};

    fn cand(tokens: Vec<usize>, ll: f64, rec: f64) -> Candidate {
        let mut c = Candidate::new(tokens, ll, true);
        c.log_reconstruction = Some(rec);
        c
    }

    fn list(cands: Vec<Candidate>) -> NBestList {
        NBestList {
            source: vec![5],
            annotated: Some(vec![5, 6]),
            candidates: cands,
        }
    }

    #[test]
    fn hand_built_rerank() {
        let mut l = list(vec![
            cand(vec![5, EOS], -1.0, -5.0),
            cand(vec![6, EOS], -2.0, -1.0),
            cand(vec![7, EOS], -1.5, -3.0),
        ]);
        let rc = RerankConfig::default();
        // Combined: -6.0, -3.0, -4.5.
        assert_eq!(select(&l, &rc).unwrap(), 1);
        assert_eq!(select(&l, &RerankConfig { lambda: 0.0, ..rc }).unwrap(), 0);
        assert_eq!(select(&l, &RerankConfig { lambda: 1e6, ..rc }).unwrap(), 1);
        rerank(&mut l, &rc).unwrap();
        assert_eq!(l.best().tokens, vec![6, EOS]);
        assert_eq!(l.best().combined, -3.0);
        let combined: Vec<f64> = l.candidates.iter().map(|c| c.combined).collect();
        assert_eq!(combined, vec![-3.0, -4.5, -6.0]);
    }

    #[test]
    fn ties_go_to_higher_likelihood() {
        let l = list(vec![cand(vec![5, EOS], -2.0, -1.0), cand(vec![6, EOS], -1.0, -2.0)]);
        assert_eq!(select(&l, &RerankConfig::default()).unwrap(), 1);
    }

    #[test]
    fn normalization_and_dp_terms() {
        let mut c = cand(vec![5, EOS], -1.0, -4.0);
        c.log_dp = Some(-0.5);
        let rc = RerankConfig {
            lambda: 1.0,
            mu: 2.0,
            normalize_reconstruction: true,
        };
        assert_eq!(combined_score(&c, &rc, 2).unwrap(), -1.0 - 2.0 - 1.0);
        let missing = Candidate::new(vec![EOS], 0.0, true);
        assert!(combined_score(&missing, &RerankConfig::default(), 1).is_err());
    }

    #[test]
    fn lambda_tuning_prefers_first_best() {
        let lists = vec![list(vec![cand(vec![5, EOS], -1.0, -5.0), cand(vec![6, EOS], -2.0, -1.0)])];
        // Reward picking token 6: needs lambda > 0.25.
        let (lambda, table) = tune_lambda(&lists, &RerankConfig::default(), &LAMBDA_GRID, |picks| {
            Ok(if picks[0].tokens[0] == 6 { 1.0 } else { 0.0 })
        })
        .unwrap();
        assert_eq!(lambda, 0.5);
        assert_eq!(table.len(), 4);
        assert_eq!(table[0].1, 0.0);
    }

    #[test]
    fn nbest_round_trip() {
        let v = Vocabulary::build([["a", "b"].map(String::from).as_slice()], 50);
        let (a, b) = (v.id("a"), v.id("b"));
        let mut l = list(vec![cand(vec![a, b, EOS], -1.25, -3.5), Candidate::new(vec![b, EOS], -2.0, true)]);
        l.candidates[0].combined = -4.75;
        let text = write_nbest(&[l.clone()], &v);
        assert_eq!(text.lines().next().unwrap(), "0 ||| a b ||| -1.25 ||| -3.5 ||| -4.75");
        assert!(text.lines().nth(1).unwrap().contains("||| - |||"));
        let back = read_nbest(&text, &v).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].1, l.candidates[0]);
        assert_eq!(back[1].1.log_reconstruction, None);
        assert!(read_nbest("0 ||| a ||| x ||| - ||| 1", &v).is_err());
        assert!(read_nbest("0 ||| a ||| 1", &v).is_err());
    }
}
