use rand::Rng;

use crate::autodiff::{softmax_in_place, Graph, Tensor, Var};
use crate::corpus::DP_MARKER_ID;
use crate::error::{Error, Result};
use crate::nmt::layers::{Affine, Registrar};
use crate::nmt::{ModelConfig, Padded};

const PREFIX: &str = "dp.out";

/// Adds the predictor head `g_p` (nothing unless joint prediction is on).
pub fn register_parameters(reg: &mut Registrar<'_, impl Rng>, cfg: &ModelConfig) -> Result<()> {
    if cfg.joint_prediction {
        Affine::register(reg, PREFIX, cfg.hidden, cfg.pronoun_vocab)?;
    }
    Ok(())
}

/// Predictor logits, one row per marker in batch order.
#[derive(Clone, Debug)]
pub struct DpLogits {
    /// `[N, |V_p|]`.
    pub logits: Var,
    /// `(sentence, marker position)` of each row.
    pub index: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DpPrediction {
    pub position: usize,
    pub probs: Vec<f64>,
    /// Argmax id (lowest id on ties).
    pub word: usize,
}

/// Applies `g_p` to `h^rec` at each marker's own step. `h_rec` is the
/// batch-major `[B * T, H]` state matrix of the reconstructor run over `rec`.
/// Returns `None` when the batch has no markers.
pub fn dp_logits(g: &mut Graph<'_>, h_rec: Var, rec: &Padded, positions: &[Vec<usize>]) -> Result<Option<DpLogits>> {
    let (b, t_max) = (rec.batch_size(), rec.max_len());
    if positions.len() != b {
        return Err(Error::invalid(format!(
            "{} position lists for a batch of {b}",
            positions.len()
        )));
    }
    if g.shape(h_rec)[0] != b * t_max {
        return Err(Error::ShapeMismatch {
            op: "dp_logits",
            shapes: vec![g.shape(h_rec).to_vec(), vec![b, t_max]],
        });
    }
    let mut index = Vec::new();
    for (s, ps) in positions.iter().enumerate() {
        let row = rec.row(s);
        for &p in ps {
            if p >= row.len() {
                return Err(Error::invalid(format!(
                    "marker position {p} out of range for {} tokens",
                    row.len()
                )));
            }
            if row[p] != DP_MARKER_ID {
                return Err(Error::invalid(format!("position {p} of sentence {s} is not a marker")));
            }
            index.push((s, p));
        }
    }
    if index.is_empty() {
        return Ok(None);
    }
    let rows: Vec<usize> = index.iter().map(|&(s, p)| s * t_max + p).collect();
    let picked = g.embedding(h_rec, &rows)?;
    let logits = Affine::new(PREFIX).apply(g, picked)?;
    Ok(Some(DpLogits { logits, index }))
}

/// `-sum_d log p(dp_d) / B`; exactly zero when there are no markers.
pub fn dp_prediction_loss(g: &mut Graph<'_>, logits: Option<&DpLogits>, gold: &[Vec<usize>]) -> Result<Var> {
    let batch = gold.len();
    if batch == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let expected: usize = gold.iter().map(Vec::len).sum();
    let Some(l) = logits else {
        if expected != 0 {
            return Err(Error::invalid(format!("{expected} gold words but no predictions")));
        }
        return Ok(g.constant(Tensor::scalar(0.0)));
    };
    let mut targets = Vec::with_capacity(expected);
    let mut counts = vec![0usize; batch];
    for &(s, _) in &l.index {
        let k = counts.get_mut(s).ok_or_else(|| Error::invalid("prediction for a sentence outside the batch"))?;
        let word = *gold[s]
            .get(*k)
            .ok_or_else(|| Error::invalid(format!("sentence {s}: more predictions than gold words")))?;
        targets.push(word);
        *k += 1;
    }
    if counts.iter().zip(gold).any(|(&c, g)| c != g.len()) {
        return Err(Error::invalid("predictions and gold words differ in length"));
    }
    let nll = g.softmax_nll(l.logits, &targets)?;
    let total = g.sum(nll);
    Ok(g.scale(total, 1.0 / batch as f64))
}

/// Distributions and argmax words per sentence.
pub fn predict_dp_words(g: &Graph<'_>, logits: Option<&DpLogits>, batch: usize) -> Vec<Vec<DpPrediction>> {
    let mut out = vec![Vec::new(); batch];
    let Some(l) = logits else {
        return out;
    };
    let v = g.value(l.logits);
    for (r, &(s, position)) in l.index.iter().enumerate() {
        let mut probs = v.row_slice(r).to_vec();
        softmax_in_place(&mut probs);
        let word = argmax(&probs);
        out[s].push(DpPrediction { position, probs, word });
    }
    out
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
