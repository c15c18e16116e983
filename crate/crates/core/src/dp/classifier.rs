use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::predictor::argmax;
use super::{fit, AuxTrainConfig, PronounVocabulary};
use crate::autodiff::{Graph, ParameterStore, Partition};
use crate::corpus::{AnnotatedSentence, DpEntry, Vocabulary, BOS_TOKEN, EOS_TOKEN};
use crate::error::{Error, Result};
use crate::nmt::layers::Registrar;

/// Context-free DP word classifier: a log-linear model over the plain tokens
/// immediately left and right of the insertion slot.
#[derive(Clone, Debug)]
pub struct DpWordClassifier {
    vocab: Vocabulary,
    pronouns: PronounVocabulary,
    store: ParameterStore,
}

fn neighbours(plain: &[String], slot: usize) -> (&str, &str) {
    let left = if slot == 0 { BOS_TOKEN } else { plain[slot - 1].as_str() };
    let right = plain.get(slot).map_or(EOS_TOKEN, String::as_str);
    (left, right)
}

struct Item {
    left: usize,
    right: usize,
    word: usize,
}

impl DpWordClassifier {
    /// Trains on every DP entry with a known word.
    pub fn train(corpus: &[AnnotatedSentence], pronouns: PronounVocabulary, cfg: &AuxTrainConfig) -> Result<Self> {
        let plain: Vec<Vec<String>> = corpus.iter().map(|s| s.strip().0).collect();
        let vocab = Vocabulary::build(plain.iter().map(Vec::as_slice), usize::MAX);
        let mut items = Vec::new();
        for (s, p) in corpus.iter().zip(&plain) {
            for (slot, d) in s.slots().into_iter().zip(s.dps()) {
                if let Some(w) = &d.word {
                    let (l, r) = neighbours(p, slot);
                    items.push(Item {
                        left: vocab.id(l),
                        right: vocab.id(r),
                        word: pronouns.id(w),
                    });
                }
            }
        }
        if items.is_empty() {
            return Err(Error::invalid("no dropped pronouns with known words to train on"));
        }
        let mut store = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut reg = Registrar {
            store: &mut store,
            rng: &mut rng,
            partition: Partition::Theta,
            scale: 0.0,
        };
        reg.weight("cls.left".into(), vocab.len(), pronouns.len())?;
        reg.weight("cls.right".into(), vocab.len(), pronouns.len())?;
        reg.bias("cls.b".into(), pronouns.len())?;
        fit(
            &mut store,
            &items,
            cfg,
            |_| 1,
            |g, batch| {
                let left: Vec<usize> = batch.iter().map(|i| i.left).collect();
                let right: Vec<usize> = batch.iter().map(|i| i.right).collect();
                let words: Vec<usize> = batch.iter().map(|i| i.word).collect();
                let logits = Self::logits(g, &left, &right)?;
                let nll = g.softmax_nll(logits, &words)?;
                let total = g.sum(nll);
                Ok(g.scale(total, 1.0 / batch.len() as f64))
            },
        )?;
        Ok(DpWordClassifier { vocab, pronouns, store })
    }

    fn logits(g: &mut Graph<'_>, left: &[usize], right: &[usize]) -> Result<crate::autodiff::Var> {
        let tl = g.param("cls.left")?;
        let tr = g.param("cls.right")?;
        let b = g.param("cls.b")?;
        let l = g.embedding(tl, left)?;
        let r = g.embedding(tr, right)?;
        let lr = g.add(l, r)?;
        g.add(lr, b)
    }

    pub fn pronouns(&self) -> &PronounVocabulary {
        &self.pronouns
    }

    /// Most likely pronoun id for each slot of `plain`.
    pub fn predict(&self, plain: &[String], slots: &[usize]) -> Result<Vec<usize>> {
        if slots.is_empty() {
            return Ok(Vec::new());
        }
        if let Some(&s) = slots.iter().find(|&&s| s > plain.len()) {
            return Err(Error::invalid(format!("slot {s} out of range for {} tokens", plain.len())));
        }
        let (left, right): (Vec<usize>, Vec<usize>) = slots
            .iter()
            .map(|&s| {
                let (l, r) = neighbours(plain, s);
                (self.vocab.id(l), self.vocab.id(r))
            })
            .unzip();
        let mut g = Graph::new(&self.store);
        let logits = Self::logits(&mut g, &left, &right)?;
        let v = g.value(logits);
        Ok((0..slots.len()).map(|r| argmax(v.row_slice(r))).collect())
    }

    /// Fills in a word for every marker of a position-only annotation.
    pub fn annotate(&self, tagged: &AnnotatedSentence) -> Result<AnnotatedSentence> {
        let (plain, _) = tagged.strip();
        let words = self.predict(&plain, &tagged.slots())?;
        let dps = tagged
            .dps()
            .iter()
            .zip(words)
            .map(|(d, w)| DpEntry::new(d.position, self.pronouns.word(w)))
            .collect();
        AnnotatedSentence::new(tagged.tokens().to_vec(), dps)
    }
}
