use std::cmp::Ordering;

use super::search::{Candidate, NBestList};
use crate::autodiff::{Graph, ParameterStore};
use crate::corpus::DP_MARKER_ID;
use crate::dp::predict_dp_words;
use crate::error::{Error, Result};
use crate::model::forward;
use crate::nmt::{Batch, EncodedExample, ModelConfig, ReconstructorMode};

/// Weights of the rerank score
/// `log P(y|x) + lambda * log R (+ mu * dp score)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RerankConfig {
    pub lambda: f64,
    /// Weight of the DP-prediction score; 0 disables it.
    pub mu: f64,
    /// Divide `log R` by the annotated-source length. Every candidate of a
    /// sentence shares that length, so this only rescales `lambda` per
    /// sentence.
    pub normalize_reconstruction: bool,
}

impl Default for RerankConfig {
    fn default() -> Self {
        RerankConfig {
            lambda: 1.0,
            mu: 0.0,
            normalize_reconstruction: false,
        }
    }
}

pub const LAMBDA_GRID: [f64; 4] = [0.1, 0.5, 1.0, 2.0];

/// Fills `log_reconstruction` (and, for joint models, the DP fields) of every
/// candidate by teacher-forcing it and running the reconstructor over the
/// annotated source.
pub fn score_candidates(store: &ParameterStore, cfg: &ModelConfig, nbest: &mut NBestList) -> Result<()> {
    if cfg.mode == ReconstructorMode::None {
        return Err(Error::invalid("reranking needs a model with a reconstructor"));
    }
    let rec = nbest
        .annotated
        .clone()
        .ok_or_else(|| Error::invalid("reranking needs the annotated source"))?;
    let markers: Vec<(usize, usize)> = rec
        .iter()
        .enumerate()
        .filter(|(_, &t)| t == DP_MARKER_ID)
        .map(|(p, _)| (p, 0))
        .collect();
    let examples: Vec<EncodedExample> = nbest
        .candidates
        .iter()
        .map(|c| EncodedExample {
            src: nbest.source.clone(),
            tgt: c.tokens.clone(),
            rec: Some(rec.clone()),
            dps: if cfg.joint_prediction { markers.clone() } else { Vec::new() },
        })
        .collect();
    if examples.is_empty() {
        return Ok(());
    }
    let batch = Batch::from_examples(&examples)?;
    let mut g = Graph::new(store);
    let f = forward(&mut g, cfg, &batch)?;
    let scores = f.reconstruction.as_ref().expect("mode reconstructs").log_scores(&g);
    let dp = cfg
        .joint_prediction
        .then(|| predict_dp_words(&g, f.dp.as_ref(), batch.size()));
    for (i, (c, s)) in nbest.candidates.iter_mut().zip(scores).enumerate() {
        c.log_reconstruction = Some(s);
        if let Some(dp) = &dp {
            c.dp_words = dp[i].iter().map(|p| p.word).collect();
            c.log_dp = Some(dp[i].iter().map(|p| p.probs[p.word].ln()).sum());
        }
    }
    Ok(())
}

/// The rerank score of `c`; `rec_len` is the annotated-source length.
pub fn combined_score(c: &Candidate, rc: &RerankConfig, rec_len: usize) -> Result<f64> {
    let r = c
        .log_reconstruction
        .ok_or_else(|| Error::invalid("candidate has no reconstruction score"))?;
    let r = if rc.normalize_reconstruction {
        r / rec_len.max(1) as f64
    } else {
        r
    };
    let mut s = c.log_likelihood + rc.lambda * r;
    if rc.mu != 0.0 {
        s += rc.mu * c.log_dp.ok_or_else(|| Error::invalid("candidate has no DP score"))?;
    }
    Ok(s)
}

/// Higher combined score, then higher log-likelihood, then list order.
fn rank(a: (f64, f64), b: (f64, f64)) -> Ordering {
    b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1))
}

/// Index of the candidate reranking would pick.
pub fn select(nbest: &NBestList, rc: &RerankConfig) -> Result<usize> {
    let rec_len = nbest.annotated.as_ref().map_or(0, Vec::len);
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in nbest.candidates.iter().enumerate() {
        let s = combined_score(c, rc, rec_len)?;
        let better = match best {
            None => true,
            Some((j, bs)) => rank((s, c.log_likelihood), (bs, nbest.candidates[j].log_likelihood)) == Ordering::Less,
        };
        if better {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::invalid("empty n-best list"))
}

/// Sets every `combined` score and re-sorts by it; the selected candidate
/// ends up first.
pub fn rerank(nbest: &mut NBestList, rc: &RerankConfig) -> Result<()> {
    let rec_len = nbest.annotated.as_ref().map_or(0, Vec::len);
    for c in &mut nbest.candidates {
        c.combined = combined_score(c, rc, rec_len)?;
    }
    // Stable: equal keys keep list order, matching `select`.
    nbest
        .candidates
        .sort_by(|a, b| rank((a.combined, a.log_likelihood), (b.combined, b.log_likelihood)));
    Ok(())
}

/// Picks the grid weight whose reranked output scores best under `score`
/// (higher is better; the earliest grid entry wins ties).
pub fn tune_lambda(
    lists: &[NBestList],
    base: &RerankConfig,
    grid: &[f64],
    mut score: impl FnMut(&[&Candidate]) -> Result<f64>,
) -> Result<(f64, Vec<(f64, f64)>)> {
    let mut results = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, f64)> = None;
    for &lambda in grid {
        let rc = RerankConfig { lambda, ..*base };
        let picks = lists
            .iter()
            .map(|l| Ok(&l.candidates[select(l, &rc)?]))
            .collect::<Result<Vec<_>>>()?;
        let s = score(&picks)?;
        results.push((lambda, s));
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((lambda, s));
        }
    }
    let (lambda, _) = best.ok_or_else(|| Error::invalid("empty lambda grid"))?;
    Ok((lambda, results))
}
