use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{fit, AuxTrainConfig};
use crate::autodiff::{softmax_in_place, Graph, ParameterStore, Partition, Tensor, Var};
use crate::corpus::{AnnotatedSentence, Vocabulary};
use crate::error::{Error, Result};
use crate::nmt::layers::{keep_finished, Affine, Gru, Registrar};
use crate::nmt::Padded;

const INFERENCE_CHUNK: usize = 64;

/// Boundary-slot classifier deciding where dropped pronouns go.
///
/// Slot `k` of a `J`-token sentence sits before token `k` (`k = J` is the end).
/// It is scored from the forward state after token `k - 1` and the backward
/// state at token `k`, zero where those do not exist.
#[derive(Clone, Debug)]
pub struct DppTagger {
    vocab: Vocabulary,
    store: ParameterStore,
    hidden: usize,
}

/// Per-slot 0/1 labels: 1 where at least one marker sits in the slot.
pub fn slot_labels(sentence: &AnnotatedSentence) -> Vec<usize> {
    let (plain, _) = sentence.strip();
    let mut labels = vec![0; plain.len() + 1];
    for s in sentence.slots() {
        labels[s] = 1;
    }
    labels
}

fn register(vocab: usize, emb: usize, hidden: usize, scale: f64, seed: u64) -> Result<ParameterStore> {
    let mut store = ParameterStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reg = Registrar {
        store: &mut store,
        rng: &mut rng,
        partition: Partition::Theta,
        scale,
    };
    reg.weight("tag.emb".into(), vocab, emb)?;
    Gru::register(&mut reg, "tag.fwd", emb, hidden)?;
    Gru::register(&mut reg, "tag.bwd", emb, hidden)?;
    Affine::register(&mut reg, "tag.out", 2 * hidden, 2)?;
    Ok(store)
}

/// `[B * (J + 1), 2]` batch-major slot logits.
fn slot_logits(g: &mut Graph<'_>, hidden: usize, src: &Padded) -> Result<Var> {
    let (b, j) = (src.batch_size(), src.max_len());
    let table = g.param("tag.emb")?;
    let emb = g.embedding(table, &src.step_major())?;
    let fwd = Gru::new("tag.fwd", hidden);
    let bwd = Gru::new("tag.bwd", hidden);
    let gx_f = fwd.project(g, emb)?;
    let gx_b = bwd.project(g, emb)?;
    let zero = g.constant(Tensor::zeros(b, hidden));

    let mut forward = Vec::with_capacity(j);
    let mut state = zero;
    for t in 0..j {
        let gx = g.slice(gx_f, 0, t * b, b)?;
        let next = fwd.step(g, gx, state)?;
        state = keep_finished(g, next, state, src, t)?;
        forward.push(state);
    }
    let mut backward = vec![zero; j];
    state = zero;
    for t in (0..j).rev() {
        let gx = g.slice(gx_b, 0, t * b, b)?;
        let next = bwd.step(g, gx, state)?;
        state = keep_finished(g, next, state, src, t)?;
        backward[t] = state;
    }
    let slots = (0..=j)
        .map(|k| {
            let left = if k == 0 { zero } else { forward[k - 1] };
            let right = if k == j { zero } else { backward[k] };
            g.concat(&[left, right], 1)
        })
        .collect::<Result<Vec<_>>>()?;
    let stacked = g.interleave(&slots)?;
    Affine::new("tag.out").apply(g, stacked)
}

struct Item {
    ids: Vec<usize>,
    labels: Vec<usize>,
}

impl DppTagger {
    /// A tagger with parameters drawn uniformly from `[-scale, scale]`
    /// (`scale = 0` gives the all-zero tagger).
    pub fn untrained(vocab: Vocabulary, cfg: &AuxTrainConfig, scale: f64) -> Result<Self> {
        let store = register(vocab.len(), cfg.emb, cfg.hidden, scale, cfg.seed)?;
        Ok(DppTagger {
            vocab,
            store,
            hidden: cfg.hidden,
        })
    }

    /// Trains on gold marker positions with per-slot cross-entropy.
    pub fn train(corpus: &[AnnotatedSentence], cfg: &AuxTrainConfig) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::invalid("cannot train a tagger on an empty corpus"));
        }
        let plain: Vec<Vec<String>> = corpus.iter().map(|s| s.strip().0).collect();
        let vocab = Vocabulary::build(plain.iter().map(Vec::as_slice), usize::MAX);
        let mut tagger = Self::untrained(vocab, cfg, 0.08)?;
        let items: Vec<Item> = corpus
            .iter()
            .zip(&plain)
            .map(|(s, p)| Item {
                ids: tagger.vocab.encode(p),
                labels: slot_labels(s),
            })
            .collect();
        let hidden = tagger.hidden;
        fit(
            &mut tagger.store,
            &items,
            cfg,
            |it| it.ids.len(),
            |g, batch| {
                let ids: Vec<&[usize]> = batch.iter().map(|it| it.ids.as_slice()).collect();
                let src = Padded::new(&ids)?;
                let logits = slot_logits(g, hidden, &src)?;
                let slots = src.max_len() + 1;
                let mut targets = Vec::with_capacity(batch.len() * slots);
                let mut mask = Vec::with_capacity(batch.len() * slots);
                for it in batch {
                    for k in 0..slots {
                        targets.push(it.labels.get(k).copied().unwrap_or(0));
                        mask.push(if k < it.labels.len() { 1.0 } else { 0.0 });
                    }
                }
                let nll = g.softmax_nll(logits, &targets)?;
                let mask = g.constant(Tensor::column(mask));
                let masked = g.mul(nll, mask)?;
                let total = g.sum(masked);
                Ok(g.scale(total, 1.0 / batch.len() as f64))
            },
        )?;
        Ok(tagger)
    }

    /// Rebuilds a tagger from saved parts.
    pub fn from_parts(vocab: Vocabulary, store: ParameterStore) -> Result<Self> {
        let hidden = store.value("tag.out.w")?.rows() / 2;
        let expected = register(vocab.len(), store.value("tag.emb")?.cols(), hidden, 0.0, 0)?;
        for (name, p) in expected.iter() {
            let got = store.value(name)?;
            if got.shape() != p.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "tagger parameter {name} has shape {:?}, expected {:?}",
                    got.shape(),
                    p.value.shape()
                )));
            }
        }
        Ok(DppTagger { vocab, store, hidden })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn store(&self) -> &ParameterStore {
        &self.store
    }

    /// `p(insert)` for each of the `J + 1` slots of every sentence.
    pub fn slot_probabilities(&self, sentences: &[Vec<String>]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(sentences.len());
        for chunk in sentences.chunks(INFERENCE_CHUNK) {
            let ids: Vec<Vec<usize>> = chunk.iter().map(|s| self.vocab.encode(s)).collect();
            let src = Padded::new(&ids)?;
            let mut g = Graph::new(&self.store);
            let logits = slot_logits(&mut g, self.hidden, &src)?;
            let v = g.value(logits);
            let slots = src.max_len() + 1;
            for (b, s) in chunk.iter().enumerate() {
                out.push(
                    (0..=s.len())
                        .map(|k| {
                            let mut row = v.row_slice(b * slots + k).to_vec();
                            softmax_in_place(&mut row);
                            row[1]
                        })
                        .collect(),
                );
            }
        }
        Ok(out)
    }

    /// Inserts a position-only marker at every slot with `p(insert) > 0.5`.
    pub fn tag_all(&self, sentences: &[Vec<String>]) -> Result<Vec<AnnotatedSentence>> {
        let probs = self.slot_probabilities(sentences)?;
        sentences
            .iter()
            .zip(probs)
            .map(|(s, p)| {
                let slots: Vec<(usize, Option<String>)> = p
                    .iter()
                    .enumerate()
                    .filter(|(_, &x)| x > 0.5)
                    .map(|(k, _)| (k, None))
                    .collect();
                AnnotatedSentence::from_slots(s, &slots)
            })
            .collect()
    }

    pub fn tag(&self, sentence: &[String]) -> Result<AnnotatedSentence> {
        Ok(self.tag_all(&[sentence.to_vec()])?.remove(0))
    }
}
