//! Mapping annotated corpora to model inputs for each system.

use crate::corpus::{AnnotatedSentence, ParallelExample, PronounLexicon, Vocabulary, EOS};
use crate::dp::PronounVocabulary;
use crate::error::{Error, Result};
use crate::nmt::{EncodedExample, ModelConfig, ReconstructorMode, MAX_SENTENCE_LEN};

/// What the encoder reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SourceView {
    /// The original sentence.
    Plain,
    /// Dropped pronouns restored as words.
    DpWords,
    /// Dropped-pronoun positions marked with `#DP#`.
    DpMarkers,
}

impl SourceView {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceView::Plain => "plain",
            SourceView::DpWords => "dp_words",
            SourceView::DpMarkers => "dp_markers",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(SourceView::Plain),
            "dp_words" => Ok(SourceView::DpWords),
            "dp_markers" => Ok(SourceView::DpMarkers),
            _ => Err(Error::Config(format!(
                "unknown source view {s:?}; expected plain, dp_words or dp_markers"
            ))),
        }
    }

    pub fn tokens(self, ann: &AnnotatedSentence) -> Vec<String> {
        match self {
            SourceView::Plain => ann.strip().0,
            SourceView::DpWords => ann.with_words(),
            SourceView::DpMarkers => ann.tokens().to_vec(),
        }
    }
}

/// The sentence a reconstructor of `mode` regenerates: the marker-annotated
/// source for the shared reconstructor, the word-annotated one for separate
/// reconstructors.
pub fn reconstruction_tokens(mode: ReconstructorMode, ann: &AnnotatedSentence) -> Option<Vec<String>> {
    match mode {
        ReconstructorMode::None => None,
        ReconstructorMode::Shared => Some(ann.tokens().to_vec()),
        ReconstructorMode::Separate => Some(ann.with_words()),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabularies {
    pub src: Vocabulary,
    pub tgt: Vocabulary,
    pub pronouns: PronounVocabulary,
}

impl Vocabularies {
    /// Source entries come from the gold-annotated sources (markers and
    /// restored words included); target entries from the references.
    pub fn build(train: &[ParallelExample], lexicon: &PronounLexicon, max_size: usize) -> Result<Self> {
        let mut src_sents: Vec<Vec<String>> = Vec::with_capacity(train.len() * 2);
        for ex in train {
            src_sents.push(ex.source.clone());
            if let Some(gold) = &ex.gold {
                src_sents.push(gold.with_words());
                src_sents.push(gold.tokens().to_vec());
            }
        }
        let src = Vocabulary::build(src_sents.iter().map(Vec::as_slice), max_size);
        let tgt = Vocabulary::build(train.iter().map(|e| e.target.as_slice()), max_size);
        Ok(Vocabularies {
            src,
            tgt,
            pronouns: PronounVocabulary::from_lexicon(lexicon),
        })
    }

    pub fn model_config(&self, base: &ModelConfig) -> ModelConfig {
        ModelConfig {
            src_vocab: self.src.len(),
            tgt_vocab: self.tgt.len(),
            pronoun_vocab: self.pronouns.len(),
            ..base.clone()
        }
    }
}

/// How one system turns an annotated source into model inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InputSpec {
    pub view: SourceView,
    pub mode: ReconstructorMode,
    pub joint_prediction: bool,
}

impl InputSpec {
    /// Encodes one pair. `target` may be `None` at test time (the target ids
    /// are then just `EOS`). Marker words unknown to the pronoun vocabulary
    /// map to its `<unk>` id.
    pub fn encode(
        &self,
        vocabs: &Vocabularies,
        ann: &AnnotatedSentence,
        target: Option<&[String]>,
    ) -> Result<EncodedExample> {
        let src_tokens = self.view.tokens(ann);
        if src_tokens.len() > MAX_SENTENCE_LEN {
            return Err(Error::invalid(format!(
                "source has {} tokens; the limit is {MAX_SENTENCE_LEN}",
                src_tokens.len()
            )));
        }
        let tgt = match target {
            Some(t) => {
                if t.len() > MAX_SENTENCE_LEN {
                    return Err(Error::invalid(format!(
                        "target has {} tokens; the limit is {MAX_SENTENCE_LEN}",
                        t.len()
                    )));
                }
                vocabs.tgt.encode_with_eos(t)
            }
            None => vec![EOS],
        };
        let rec = reconstruction_tokens(self.mode, ann).map(|t| vocabs.src.encode(&t));
        let dps = if self.joint_prediction {
            ann.dps()
                .iter()
                .map(|d| (d.position, d.word.as_deref().map_or(0, |w| vocabs.pronouns.id(w))))
                .collect()
        } else {
            Vec::new()
        };
        let ex = EncodedExample {
            src: vocabs.src.encode(&src_tokens),
            tgt,
            rec,
            dps,
        };
        ex.validate()?;
        Ok(ex)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{DpEntry, DP_MARKER_ID};

    fn toks(s: &str) -> Vec<String> {
        s.split(' ').map(str::to_string).collect()
    }

    #[test]
    fn views_and_reconstruction_targets() {
        let ann = AnnotatedSentence::new(toks("你 烤 的 #DP# 吗 ?"), vec![DpEntry::new(3, "它")]).unwrap();
        assert_eq!(SourceView::Plain.tokens(&ann), toks("你 烤 的 吗 ?"));
        assert_eq!(SourceView::DpWords.tokens(&ann), toks("你 烤 的 它 吗 ?"));
        assert_eq!(SourceView::DpMarkers.tokens(&ann), toks("你 烤 的 #DP# 吗 ?"));
        assert_eq!(reconstruction_tokens(ReconstructorMode::None, &ann), None);

        let ex = ParallelExample {
            source: toks("你 烤 的 吗 ?"),
            target: toks("did you bake it ?"),
            alignment: None,
            gold: Some(ann.clone()),
        };
        let lex = PronounLexicon::new([("it".to_string(), "它".to_string())].into_iter().collect()).unwrap();
        let v = Vocabularies::build(std::slice::from_ref(&ex), &lex, 100).unwrap();
        let spec = InputSpec {
            view: SourceView::DpMarkers,
            mode: ReconstructorMode::Shared,
            joint_prediction: true,
        };
        let e = spec.encode(&v, &ann, Some(&ex.target)).unwrap();
        assert_eq!(e.src[3], DP_MARKER_ID);
        assert_eq!(e.rec.as_ref().unwrap()[3], DP_MARKER_ID);
        assert_eq!(e.dps, vec![(3, v.pronouns.id("它"))]);
        assert_eq!(*e.tgt.last().unwrap(), EOS);
        let test = spec.encode(&v, &ann.positions_only(), None).unwrap();
        assert_eq!(test.dps, vec![(3, 0)]);
        assert_eq!(test.tgt, vec![EOS]);
    }
}
