//! Rule-based toy pro-drop language pair.
//!
//! The target side is an SVO language with obligatory pronouns. The source
//! side mirrors it word for word but may omit subject and object pronouns.
//! A dropped pronoun is always recoverable, but only from non-adjacent
//! context:
//!
//! * a dropped clause-initial speaker pronoun is `you` in questions
//!   (`吗 ?`), `we` when the sentence ends with `一起` ("together") and `i`
//!   otherwise;
//! * a dropped third-person pronoun refers back to the noun of the first
//!   clause, whose class (`he`/`she`/`it`/`they`) is fixed per noun.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::annotate::{AnnotatedSentence, ParallelExample, PronounLexicon};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PronounRole {
    Speaker,
    Addressee,
    SpeakerGroup,
    /// Third person; the pronoun for nouns of this class.
    Third,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PronounSpec {
    pub subject: String,
    pub object: String,
    pub source: String,
    pub role: PronounRole,
}

impl PronounSpec {
    fn new(subject: &str, object: &str, source: &str, role: PronounRole) -> Self {
        PronounSpec {
            subject: subject.into(),
            object: object.into(),
            source: source.into(),
            role,
        }
    }
}

pub fn default_pronouns() -> Vec<PronounSpec> {
    use PronounRole::*;
    vec![
        PronounSpec::new("i", "me", "我", Speaker),
        PronounSpec::new("you", "you", "你", Addressee),
        PronounSpec::new("we", "us", "我们", SpeakerGroup),
        PronounSpec::new("he", "him", "他", Third),
        PronounSpec::new("she", "her", "她", Third),
        PronounSpec::new("it", "it", "它", Third),
        PronounSpec::new("they", "them", "他们", Third),
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub nouns: usize,
    pub transitive_verbs: usize,
    pub intransitive_verbs: usize,
    pub adjectives: usize,
    /// Inclusive target-length range, in tokens.
    pub min_len: usize,
    pub max_len: usize,
    pub p_drop: f64,
    pub pronouns: Vec<PronounSpec>,
    pub train_size: usize,
    pub dev_size: usize,
    pub test_size: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            nouns: 40,
            transitive_verbs: 25,
            intransitive_verbs: 10,
            adjectives: 10,
            min_len: 4,
            max_len: 14,
            p_drop: 0.5,
            pronouns: default_pronouns(),
            train_size: 5000,
            dev_size: 500,
            test_size: 500,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("generator: {m}")));
        if !(0.0..=1.0).contains(&self.p_drop) {
            return bad("p_drop must lie in [0, 1]");
        }
        if self.nouns == 0 || self.transitive_verbs == 0 || self.intransitive_verbs == 0 {
            return bad("need at least one noun, transitive verb and intransitive verb");
        }
        if self.min_len < 4 || self.min_len > self.max_len || self.max_len > 50 {
            return bad("length range must satisfy 4 <= min_len <= max_len <= 50");
        }
        let has = |r: PronounRole| self.pronouns.iter().any(|p| p.role == r);
        if !has(PronounRole::Third) || !has(PronounRole::Speaker) {
            return bad("pronoun inventory needs a speaker and a third-person pronoun");
        }
        if self.pronouns.iter().filter(|p| p.role != PronounRole::Third).count()
            != [PronounRole::Speaker, PronounRole::Addressee, PronounRole::SpeakerGroup]
                .into_iter()
                .filter(|&r| has(r))
                .count()
        {
            return bad("at most one pronoun per speaker/addressee role");
        }
        Ok(())
    }

    /// Target -> source lexicon of every pronoun form in the inventory.
    pub fn lexicon(&self) -> PronounLexicon {
        let mut map = BTreeMap::new();
        for p in &self.pronouns {
            map.insert(p.subject.clone(), p.source.clone());
            map.insert(p.object.clone(), p.source.clone());
        }
        PronounLexicon::new(map).expect("inventory is non-empty and lowercase")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyntheticCorpus {
    pub train: Vec<ParallelExample>,
    pub dev: Vec<ParallelExample>,
    pub test: Vec<ParallelExample>,
}

/// Generates train/dev/test splits. Example `k` (counted across all splits)
/// draws from its own ChaCha stream keyed by `(seed, k)`, so any subset can be
/// regenerated independently.
pub fn generate_synthetic_corpus(cfg: &GeneratorConfig, seed: u64) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    let grammar = Grammar::new(cfg);
    let mut next = 0u64;
    let mut split = |n: usize| -> Result<Vec<ParallelExample>> {
        let out = (0..n)
            .map(|i| grammar.example(seed, next + i as u64))
            .collect::<Result<Vec<_>>>()?;
        next += n as u64;
        Ok(out)
    };
    Ok(SyntheticCorpus {
        train: split(cfg.train_size)?,
        dev: split(cfg.dev_size)?,
        test: split(cfg.test_size)?,
    })
}

/// One aligned token pair under construction. `None` on either side means
/// the token exists on one side only.
struct Builder {
    source: Vec<String>,
    target: Vec<String>,
    alignment: Vec<(usize, usize)>,
    slots: Vec<(usize, Option<String>)>,
    p_drop: f64,
}

impl Builder {
    fn pair(&mut self, src: &str, tgt: &str) {
        self.alignment.push((self.source.len(), self.target.len()));
        self.source.push(src.to_string());
        self.target.push(tgt.to_string());
    }

    fn source_only(&mut self, src: &str) {
        self.source.push(src.to_string());
    }

    fn target_only(&mut self, tgt: &str) {
        self.target.push(tgt.to_string());
    }

    fn pronoun(&mut self, rng: &mut ChaCha8Rng, src: &str, tgt: &str) {
        if rng.gen_bool(self.p_drop) {
            self.slots.push((self.source.len(), Some(src.to_string())));
            self.target_only(tgt);
        } else {
            self.pair(src, tgt);
        }
    }
}

struct Grammar<'c> {
    cfg: &'c GeneratorConfig,
    speakers: Vec<&'c PronounSpec>,
    thirds: Vec<&'c PronounSpec>,
}

impl<'c> Grammar<'c> {
    fn new(cfg: &'c GeneratorConfig) -> Self {
        Grammar {
            cfg,
            speakers: cfg.pronouns.iter().filter(|p| p.role != PronounRole::Third).collect(),
            thirds: cfg.pronouns.iter().filter(|p| p.role == PronounRole::Third).collect(),
        }
    }

    fn example(&self, seed: u64, index: u64) -> Result<ParallelExample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        for _ in 0..1000 {
            let b = self.sentence(&mut rng);
            if (self.cfg.min_len..=self.cfg.max_len).contains(&b.target.len()) {
                let gold = AnnotatedSentence::from_slots(&b.source, &b.slots)?;
                let ex = ParallelExample {
                    source: b.source,
                    target: b.target,
                    alignment: Some(b.alignment),
                    gold: Some(gold),
                };
                ex.validate()?;
                return Ok(ex);
            }
        }
        Err(Error::Config(format!(
            "generator: could not produce a sentence with {}..={} target tokens",
            self.cfg.min_len, self.cfg.max_len
        )))
    }

    fn sentence(&self, rng: &mut ChaCha8Rng) -> Builder {
        let mut b = Builder {
            source: Vec::new(),
            target: Vec::new(),
            alignment: Vec::new(),
            slots: Vec::new(),
            p_drop: self.cfg.p_drop,
        };
        match rng.gen_range(0..3) {
            0 => {
                // SUBJ V OBJ [together] END
                let subject = self.pick_subject(rng);
                self.clause(rng, &mut b, subject, None);
            }
            1 => {
                // NP1 VI , PRON V OBJ END
                let noun = rng.gen_range(0..self.cfg.nouns);
                self.intro_clause(rng, &mut b, noun);
                let pron = self.third_for(noun);
                self.clause(rng, &mut b, Subject::Anaphor(pron), None);
            }
            _ => {
                // NP1 VI , SUBJ V PRON-obj [together] END
                let noun = rng.gen_range(0..self.cfg.nouns);
                self.intro_clause(rng, &mut b, noun);
                let subject = self.pick_subject(rng);
                self.clause(rng, &mut b, subject, Some(self.third_for(noun)));
            }
        }
        b
    }

    fn third_for(&self, noun: usize) -> &'c PronounSpec {
        self.thirds[noun % self.thirds.len()]
    }

    fn pick_subject(&self, rng: &mut ChaCha8Rng) -> Subject<'c> {
        if rng.gen_bool(0.6) {
            Subject::Speaker(self.speakers[rng.gen_range(0..self.speakers.len())])
        } else {
            Subject::Noun(rng.gen_range(0..self.cfg.nouns))
        }
    }

    fn noun_phrase(&self, rng: &mut ChaCha8Rng, b: &mut Builder, noun: usize) {
        b.target_only("the");
        if self.cfg.adjectives > 0 && rng.gen_bool(0.3) {
            let a = rng.gen_range(0..self.cfg.adjectives);
            b.pair(&format!("形{a}"), &format!("a{a}"));
            b.source_only("的");
        }
        b.pair(&format!("名{noun}"), &format!("n{noun}"));
    }

    fn intro_clause(&self, rng: &mut ChaCha8Rng, b: &mut Builder, noun: usize) {
        self.noun_phrase(rng, b, noun);
        let v = rng.gen_range(0..self.cfg.intransitive_verbs);
        b.pair(&format!("走{v}"), &format!("w{v}"));
        b.source_only("了");
        b.pair(",", ",");
    }

    fn clause(&self, rng: &mut ChaCha8Rng, b: &mut Builder, subject: Subject<'c>, object: Option<&PronounSpec>) {
        let role = match subject {
            Subject::Speaker(p) => {
                b.pronoun(rng, &p.source, &p.subject);
                Some(p.role)
            }
            Subject::Anaphor(p) => {
                b.pronoun(rng, &p.source, &p.subject);
                None
            }
            Subject::Noun(n) => {
                self.noun_phrase(rng, b, n);
                None
            }
        };
        let v = rng.gen_range(0..self.cfg.transitive_verbs);
        b.pair(&format!("动{v}"), &format!("v{v}"));
        match object {
            Some(p) => b.pronoun(rng, &p.source, &p.object),
            None => {
                let n = rng.gen_range(0..self.cfg.nouns);
                self.noun_phrase(rng, b, n);
            }
        }
        // Speaker subjects fix the sentence type; everything else is free.
        let (question, together) = match role {
            Some(PronounRole::Addressee) => (true, false),
            Some(PronounRole::SpeakerGroup) => (false, true),
            Some(_) => (false, false),
            None => (rng.gen_bool(0.5), false),
        };
        if together {
            b.pair("一起", "together");
        }
        if question {
            b.source_only("吗");
            b.pair("?", "?");
        } else {
            b.pair("。", ".");
        }
    }
}

#[derive(Clone, Copy)]
enum Subject<'c> {
    Speaker(&'c PronounSpec),
    Anaphor(&'c PronounSpec),
    Noun(usize),
}
