//! Dropped-pronoun prediction: the joint word predictor over reconstructor
//! states, the external position tagger and the external word classifier.

mod classifier;
mod predictor;
mod tagger;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{backward, Graph, ParameterStore, Var};
use crate::corpus::{PronounLexicon, UNK_TOKEN};
use crate::error::{Error, Result};
use crate::optim::{clip_global_norm, Adam, AdamConfig};
use crate::training::length_grouped_batches;

pub use classifier::DpWordClassifier;
pub use predictor::{
    dp_logits, dp_prediction_loss, predict_dp_words, register_parameters, DpLogits, DpPrediction,
};
pub use tagger::{slot_labels, DppTagger};
pub(crate) use predictor::argmax;

/// Source-language pronouns the predictor chooses from; id 0 is `<unk>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PronounVocabulary {
    words: Vec<String>,
}

impl PronounVocabulary {
    pub fn new(pronouns: impl IntoIterator<Item = String>) -> Result<Self> {
        let mut words = vec![UNK_TOKEN.to_string()];
        for p in pronouns {
            if p.is_empty() || p.contains(char::is_whitespace) {
                return Err(Error::invalid(format!("invalid pronoun {p:?}")));
            }
            if words.contains(&p) {
                return Err(Error::invalid(format!("duplicate pronoun {p:?}")));
            }
            words.push(p);
        }
        Ok(PronounVocabulary { words })
    }

    /// The lexicon's distinct source pronouns, sorted.
    pub fn from_lexicon(lexicon: &PronounLexicon) -> Self {
        Self::new(lexicon.source_pronouns()).expect("lexicon values are distinct tokens")
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Unknown words map to id 0.
    pub fn id(&self, word: &str) -> usize {
        self.words.iter().position(|w| w == word).unwrap_or(0)
    }

    pub fn word(&self, id: usize) -> &str {
        self.words.get(id).map_or(UNK_TOKEN, String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn to_text(&self) -> String {
        self.words[1..].iter().map(|w| format!("{w}\n")).collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::new(text.lines().filter(|l| !l.is_empty()).map(str::to_string))
    }
}

/// Settings for the small external models.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AuxTrainConfig {
    pub emb: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for AuxTrainConfig {
    fn default() -> Self {
        AuxTrainConfig {
            emb: 32,
            hidden: 32,
            epochs: 5,
            batch_size: 16,
            lr: 5e-3,
            seed: 0,
        }
    }
}

/// Minibatch Adam over `items` grouped by `length`; returns mean loss per epoch.
fn fit<T>(
    store: &mut ParameterStore,
    items: &[T],
    cfg: &AuxTrainConfig,
    length: impl Fn(&T) -> usize,
    loss: impl Fn(&mut Graph<'_>, &[&T]) -> Result<Var>,
) -> Result<Vec<f64>> {
    if items.is_empty() {
        return Err(Error::invalid("cannot train on an empty corpus"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::new(AdamConfig {
        lr: cfg.lr,
        ..Default::default()
    })?;
    let lengths: Vec<usize> = items.iter().map(length).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;
    for _ in 0..cfg.epochs {
        let mut total = 0.0;
        let batches = length_grouped_batches(&lengths, cfg.batch_size, &mut rng);
        for batch in &batches {
            step += 1;
            let refs: Vec<&T> = batch.iter().map(|&i| &items[i]).collect();
            let mut grads = {
                let mut g = Graph::new(store);
                let l = loss(&mut g, &refs)?;
                let value = g.value(l).item();
                if !value.is_finite() {
                    return Err(Error::Divergence { step });
                }
                total += value;
                backward(&g, l, store)?
            };
            clip_global_norm(&mut grads, 1.0);
            opt.update(store, &grads)?;
        }
        history.push(total / batches.len() as f64);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pronoun_vocabulary_reserves_unk() {
        let v = PronounVocabulary::new(["它".to_string(), "他".to_string()]).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.id("它"), 1);
        assert_eq!(v.id("nope"), 0);
        assert_eq!(v.word(0), UNK_TOKEN);
        assert_eq!(PronounVocabulary::from_text(&v.to_text()).unwrap(), v);
        assert!(PronounVocabulary::new(["a".to_string(), "a".to_string()]).is_err());
    }
}
