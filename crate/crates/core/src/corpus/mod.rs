//! Vocabularies, dropped-pronoun annotation, the synthetic corpus and file formats.

mod annotate;
pub mod io;
mod synth;
mod vocab;

pub use annotate::{
    annotate_from_alignment, marker_positions, strip_annotation, AnnotatedSentence, DpEntry,
    ParallelExample, PronounLexicon,
};
pub use io::{load_corpus, save_corpus, CorpusPaths};
pub use synth::{
    default_pronouns, generate_synthetic_corpus, GeneratorConfig, PronounRole, PronounSpec,
    SyntheticCorpus,
};
pub use vocab::{
    Vocabulary, BOS, BOS_TOKEN, DP_MARKER, DP_MARKER_ID, EOS, EOS_TOKEN, PAD, PAD_TOKEN, UNK,
    UNK_TOKEN,
};
