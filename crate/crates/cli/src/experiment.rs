//! The desk-scale system comparison: synthetic corpus, external DP models,
//! the translation systems, beam search, reranking and scoring.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dpnmt::autodiff::ParameterStore;
use dpnmt::corpus::{annotate_from_alignment, generate_synthetic_corpus, AnnotatedSentence, ParallelExample, PronounLexicon, SyntheticCorpus};
use dpnmt::data::{InputSpec, SourceView, Vocabularies};
use dpnmt::decoding::{beam_search, default_max_len, greedy, score_candidates, select, tune_lambda, NBestList, LAMBDA_GRID};
use dpnmt::dp::{AuxTrainConfig, DpWordClassifier, DppTagger, PronounVocabulary};
use dpnmt::eval::{bleu, dp_f1, segment_scores, sign_test, DpItem, F1Mode, F1Report, SignTest};
use dpnmt::model::init_parameters;
use dpnmt::nmt::{AttentionVariant, EncodedExample, ModelConfig, ReconstructorMode};
use dpnmt::training::{train, TrainHooks, TrainingConfig};
use dpnmt::{Error, Result};

use crate::config::RunConfig;

/// The translation systems, numbered as rows of the results table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum System {
    Baseline,
    BaselineDps,
    SeparateDps,
    BaselineDpps,
    SharedIndependent,
    SharedIndependentJoint,
    SharedEncToDecJoint,
    SharedDecToEncJoint,
}

impl System {
    pub const ALL: [System; 8] = [
        System::Baseline,
        System::BaselineDps,
        System::SeparateDps,
        System::BaselineDpps,
        System::SharedIndependent,
        System::SharedIndependentJoint,
        System::SharedEncToDecJoint,
        System::SharedDecToEncJoint,
    ];

    /// The pair the trend criteria compare.
    pub const DEFAULT: [System; 2] = [System::BaselineDpps, System::SharedEncToDecJoint];

    pub fn row(self) -> usize {
        System::ALL.iter().position(|&s| s == self).expect("listed") + 1
    }

    pub fn from_row(row: usize) -> Option<System> {
        row.checked_sub(1).and_then(|i| System::ALL.get(i).copied())
    }

    pub fn name(self) -> &'static str {
        match self {
            System::Baseline => "baseline",
            System::BaselineDps => "baseline+dps",
            System::SeparateDps => "separate-recs+dps",
            System::BaselineDpps => "baseline+dpps",
            System::SharedIndependent => "shared-independent+dpps",
            System::SharedIndependentJoint => "shared-independent+dpps+joint",
            System::SharedEncToDecJoint => "shared-enc_to_dec+dpps+joint",
            System::SharedDecToEncJoint => "shared-dec_to_enc+dpps+joint",
        }
    }

    pub fn input_spec(self) -> InputSpec {
        let (view, mode, joint) = match self {
            System::Baseline => (SourceView::Plain, ReconstructorMode::None, false),
            System::BaselineDps => (SourceView::DpWords, ReconstructorMode::None, false),
            System::SeparateDps => (SourceView::Plain, ReconstructorMode::Separate, false),
            System::BaselineDpps => (SourceView::DpMarkers, ReconstructorMode::None, false),
            System::SharedIndependent => (SourceView::Plain, ReconstructorMode::Shared, false),
            _ => (SourceView::Plain, ReconstructorMode::Shared, true),
        };
        InputSpec {
            view,
            mode,
            joint_prediction: joint,
        }
    }

    pub fn attention(self) -> AttentionVariant {
        match self {
            System::SharedEncToDecJoint => AttentionVariant::EncToDec,
            System::SharedDecToEncJoint => AttentionVariant::DecToEnc,
            _ => AttentionVariant::Independent,
        }
    }

    pub fn model_config(self, base: &ModelConfig, vocabs: &Vocabularies) -> ModelConfig {
        let spec = self.input_spec();
        vocabs.model_config(&base.with_mode(spec.mode, self.attention(), spec.joint_prediction))
    }
}

/// Parses `all`, `default` or a comma-separated list of row numbers.
pub fn parse_systems(s: &str) -> Result<Vec<System>> {
    match s.trim() {
        "all" => Ok(System::ALL.to_vec()),
        "default" => Ok(System::DEFAULT.to_vec()),
        list => {
            let mut out: Vec<System> = list
                .split(',')
                .map(|r| {
                    r.trim()
                        .parse()
                        .ok()
                        .and_then(System::from_row)
                        .ok_or_else(|| Error::Config(format!("unknown system row {r:?}; expected 1-8, all or default")))
                })
                .collect::<Result<_>>()?;
            out.sort();
            out.dedup();
            Ok(out)
        }
    }
}

/// Independent sub-seeds from the one run seed.
pub fn derive_seed(seed: u64, purpose: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng.next_u64()
}

const CORPUS_STREAM: u64 = 1;
const TAGGER_STREAM: u64 = 2;
const CLASSIFIER_STREAM: u64 = 3;
const INIT_STREAM: u64 = 100;
const BATCH_STREAM: u64 = 200;

/// Gold annotations of a split; derived from the alignment when absent.
pub fn gold_annotations(split: &[ParallelExample], lexicon: &PronounLexicon) -> Result<Vec<AnnotatedSentence>> {
    split
        .iter()
        .map(|ex| match &ex.gold {
            Some(g) => Ok(g.clone()),
            None => annotate_from_alignment(ex, lexicon),
        })
        .collect()
}

/// DP items keyed by plain-source slot, so a wrong earlier marker does not
/// shift the positions of later ones.
pub fn slot_items(sentences: &[AnnotatedSentence]) -> Vec<DpItem> {
    sentences
        .iter()
        .enumerate()
        .flat_map(|(s, ann)| {
            ann.slots()
                .into_iter()
                .zip(ann.dps())
                .map(move |(slot, d)| DpItem::new(s, slot, d.word.as_deref()))
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct ExternalScores {
    /// Tagger marker placement.
    pub position: F1Report,
    /// Tagger placement plus classifier words.
    pub word: F1Report,
}

/// Everything shared by the systems of one seed.
pub struct SeedData {
    pub seed: u64,
    pub corpus: SyntheticCorpus,
    pub vocabs: Vocabularies,
    pub train_gold: Vec<AnnotatedSentence>,
    pub test_gold: Vec<AnnotatedSentence>,
    /// Tagger markers with classifier words: the test-time annotation.
    pub dev_external: Vec<AnnotatedSentence>,
    pub test_external: Vec<AnnotatedSentence>,
    pub external: ExternalScores,
}

/// The synthetic corpus of a run seed.
pub fn generate_corpus(run: &RunConfig, seed: u64) -> Result<SyntheticCorpus> {
    generate_synthetic_corpus(&run.generator, derive_seed(seed, CORPUS_STREAM))
}

/// The external DP models: marker tagger and DP-word classifier, both
/// trained on gold annotations.
pub fn train_external(
    run: &RunConfig,
    train_gold: &[AnnotatedSentence],
    pronouns: &PronounVocabulary,
    seed: u64,
) -> Result<(DppTagger, DpWordClassifier)> {
    let aux = |stream| AuxTrainConfig {
        seed: derive_seed(seed, stream),
        ..run.aux
    };
    let tagger = DppTagger::train(train_gold, &aux(TAGGER_STREAM))?;
    let classifier = DpWordClassifier::train(train_gold, pronouns.clone(), &aux(CLASSIFIER_STREAM))?;
    Ok((tagger, classifier))
}

/// Tagger markers with classifier words for each plain sentence.
pub fn annotate_externally(
    tagger: &DppTagger,
    classifier: &DpWordClassifier,
    plain: &[Vec<String>],
) -> Result<Vec<AnnotatedSentence>> {
    tagger.tag_all(plain)?.iter().map(|t| classifier.annotate(t)).collect()
}

pub fn prepare(run: &RunConfig, seed: u64) -> Result<SeedData> {
    let corpus = generate_corpus(run, seed)?;
    let lexicon = run.generator.lexicon();
    let vocabs = Vocabularies::build(&corpus.train, &lexicon, run.vocab_size)?;
    let train_gold = gold_annotations(&corpus.train, &lexicon)?;
    let test_gold = gold_annotations(&corpus.test, &lexicon)?;
    let (tagger, classifier) = train_external(run, &train_gold, &vocabs.pronouns, seed)?;
    let external = |split: &[ParallelExample]| {
        let plain: Vec<Vec<String>> = split.iter().map(|e| e.source.clone()).collect();
        annotate_externally(&tagger, &classifier, &plain)
    };
    let dev_external = external(&corpus.dev)?;
    let test_external = external(&corpus.test)?;
    let gold_items = slot_items(&test_gold);
    let pred_items = slot_items(&test_external);
    let scores = ExternalScores {
        position: dp_f1(&pred_items, &gold_items, F1Mode::Position),
        word: dp_f1(&pred_items, &gold_items, F1Mode::Word),
    };
    Ok(SeedData {
        seed,
        corpus,
        vocabs,
        train_gold,
        test_gold,
        dev_external,
        test_external,
        external: scores,
    })
}

#[derive(Clone, Debug)]
pub struct SystemResult {
    pub system: System,
    /// Top beam candidate.
    pub bleu: f64,
    /// Reconstruction-reranked output, for systems with a reconstructor.
    pub bleu_reranked: Option<f64>,
    pub lambda: Option<f64>,
    /// Word-mode F1 of the jointly predicted DP words.
    pub dp_f1: Option<F1Report>,
    /// Sentence scores of the final output (reranked when available).
    pub segments: Vec<f64>,
    pub steps: usize,
    pub seconds: f64,
}

fn detok(vocabs: &Vocabularies, tokens: &[usize]) -> Vec<String> {
    vocabs.tgt.decode(tokens)
}

fn encode_split(spec: &InputSpec, vocabs: &Vocabularies, anns: &[AnnotatedSentence]) -> Result<Vec<EncodedExample>> {
    anns.iter().map(|a| spec.encode(vocabs, a, None)).collect()
}

/// Beam n-best lists for every encoded source.
pub fn nbest_lists(store: &ParameterStore, cfg: &ModelConfig, inputs: &[EncodedExample], beam: usize) -> Result<Vec<NBestList>> {
    inputs
        .iter()
        .map(|ex| {
            Ok(NBestList {
                source: ex.src.clone(),
                annotated: ex.rec.clone(),
                candidates: beam_search(store, cfg, &ex.src, beam, default_max_len(ex.src.len()))?,
            })
        })
        .collect()
}

pub fn train_system(run: &RunConfig, data: &SeedData, system: System, log: &mut dyn FnMut(&str)) -> Result<(ModelConfig, ParameterStore, usize)> {
    let spec = system.input_spec();
    let cfg = system.model_config(&run.model, &data.vocabs);
    let examples = data
        .train_gold
        .iter()
        .zip(&data.corpus.train)
        .map(|(ann, ex)| spec.encode(&data.vocabs, ann, Some(&ex.target)))
        .collect::<Result<Vec<_>>>()?;
    let dev_inputs: Vec<Vec<usize>> = encode_split(&spec, &data.vocabs, &data.dev_external)?
        .into_iter()
        .map(|e| e.src)
        .collect();
    let dev_refs: Vec<&[String]> = data.corpus.dev.iter().map(|e| e.target.as_slice()).collect();
    let row = system.row() as u64;
    let tcfg = TrainingConfig {
        seed: derive_seed(data.seed, BATCH_STREAM + row),
        ..run.training.clone()
    };
    let vocabs = &data.vocabs;
    let hooks = TrainHooks {
        dev_score: Some(Box::new(|store: &ParameterStore| {
            let hyps: Vec<Vec<String>> = greedy(store, &cfg, &dev_inputs)?
                .iter()
                .map(|c| detok(vocabs, &c.tokens))
                .collect();
            Ok(bleu(&hyps, &dev_refs)?.bleu)
        })),
        ..Default::default()
    };
    let init = init_parameters(&cfg, derive_seed(data.seed, INIT_STREAM + row))?;
    let outcome = train(init, &cfg, &tcfg, &examples, hooks)?;
    let evals: Vec<String> = outcome.evaluations.iter().map(|(s, b)| format!("{s}:{b:.2}")).collect();
    log(&format!(
        "seed {} row {} {}: {} steps, dev BLEU {}",
        data.seed,
        system.row(),
        system.name(),
        outcome.steps,
        evals.join(" ")
    ));
    Ok((cfg, outcome.best, outcome.steps))
}

pub fn run_system(run: &RunConfig, data: &SeedData, system: System, log: &mut dyn FnMut(&str)) -> Result<SystemResult> {
    let started = Instant::now();
    let (cfg, store, steps) = train_system(run, data, system, log)?;
    let spec = system.input_spec();
    let refs: Vec<&[String]> = data.corpus.test.iter().map(|e| e.target.as_slice()).collect();
    let test_inputs = encode_split(&spec, &data.vocabs, &data.test_external)?;
    let mut test_lists = nbest_lists(&store, &cfg, &test_inputs, run.beam)?;
    let top: Vec<Vec<String>> = test_lists
        .iter()
        .map(|l| detok(&data.vocabs, &l.best().tokens))
        .collect();
    let top_bleu = bleu(&top, &refs)?.bleu;

    let mut result = SystemResult {
        system,
        bleu: top_bleu,
        bleu_reranked: None,
        lambda: None,
        dp_f1: None,
        segments: segment_scores(&top, &refs)?,
        steps,
        seconds: 0.0,
    };
    if cfg.reconstructs() {
        for l in &mut test_lists {
            score_candidates(&store, &cfg, l)?;
        }
        let mut rc = run.rerank;
        if run.tune_lambda {
            let dev_inputs = encode_split(&spec, &data.vocabs, &data.dev_external)?;
            let mut dev_lists = nbest_lists(&store, &cfg, &dev_inputs, run.beam)?;
            for l in &mut dev_lists {
                score_candidates(&store, &cfg, l)?;
            }
            let dev_refs: Vec<&[String]> = data.corpus.dev.iter().map(|e| e.target.as_slice()).collect();
            let (lambda, _) = tune_lambda(&dev_lists, &rc, &LAMBDA_GRID, |picks| {
                let hyps: Vec<Vec<String>> = picks.iter().map(|c| detok(&data.vocabs, &c.tokens)).collect();
                Ok(bleu(&hyps, &dev_refs)?.bleu)
            })?;
            rc.lambda = lambda;
        }
        let picks = test_lists
            .iter()
            .map(|l| Ok(&l.candidates[select(l, &rc)?]))
            .collect::<Result<Vec<_>>>()?;
        let hyps: Vec<Vec<String>> = picks.iter().map(|c| detok(&data.vocabs, &c.tokens)).collect();
        result.bleu_reranked = Some(bleu(&hyps, &refs)?.bleu);
        result.segments = segment_scores(&hyps, &refs)?;
        result.lambda = Some(rc.lambda);
        if cfg.joint_prediction {
            let predicted: Vec<AnnotatedSentence> = data
                .test_external
                .iter()
                .zip(&picks)
                .map(|(ann, c)| {
                    let words: Vec<(usize, Option<String>)> = ann
                        .slots()
                        .into_iter()
                        .zip(&c.dp_words)
                        .map(|(slot, &w)| (slot, Some(data.vocabs.pronouns.word(w).to_string())))
                        .collect();
                    AnnotatedSentence::from_slots(&ann.strip().0, &words)
                })
                .collect::<Result<_>>()?;
            result.dp_f1 = Some(dp_f1(&slot_items(&predicted), &slot_items(&data.test_gold), F1Mode::Word));
        }
    }
    result.seconds = started.elapsed().as_secs_f64();
    Ok(result)
}

#[derive(Clone, Debug)]
pub struct SeedReport {
    pub seed: u64,
    pub external: ExternalScores,
    pub systems: Vec<SystemResult>,
    /// Final output of the enc->dec joint system against baseline+DPPs.
    pub sign_test: Option<SignTest>,
}

impl SeedReport {
    pub fn get(&self, system: System) -> Option<&SystemResult> {
        self.systems.iter().find(|r| r.system == system)
    }
}

pub fn run_seed(run: &RunConfig, seed: u64, systems: &[System], log: &mut dyn FnMut(&str)) -> Result<SeedReport> {
    let data = prepare(run, seed)?;
    log(&format!(
        "seed {seed}: external position F1 {:.4}, word F1 {:.4}",
        data.external.position.f1, data.external.word.f1
    ));
    let mut results = Vec::with_capacity(systems.len());
    for &s in systems {
        let r = run_system(run, &data, s, log)?;
        log(&format!(
            "seed {seed} row {} {}: BLEU {:.2}{}{} ({:.0}s)",
            s.row(),
            s.name(),
            r.bleu,
            r.bleu_reranked.map_or(String::new(), |b| format!(", reranked {b:.2} (lambda {})", r.lambda.unwrap_or(0.0))),
            r.dp_f1.as_ref().map_or(String::new(), |f| format!(", DP word F1 {:.4}", f.f1)),
            r.seconds
        ));
        results.push(r);
    }
    let mut report = SeedReport {
        seed,
        external: data.external,
        systems: results,
        sign_test: None,
    };
    if let (Some(a), Some(b)) = (report.get(System::SharedEncToDecJoint), report.get(System::BaselineDpps)) {
        report.sign_test = Some(sign_test(&a.segments, &b.segments)?);
    }
    Ok(report)
}

/// The seeds of a multi-seed run: `seed, seed + 1, ...`.
pub fn seeds(seed: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| seed.wrapping_add(i)).collect()
}

pub fn run_experiment(run: &RunConfig, seed_count: usize, systems: &[System], log: &mut dyn FnMut(&str)) -> Result<Vec<SeedReport>> {
    run.validate()?;
    if seed_count == 0 || systems.is_empty() {
        return Err(Error::Config("experiment needs at least one seed and one system".into()));
    }
    seeds(run.seed, seed_count)
        .into_iter()
        .map(|s| run_seed(run, s, systems, log))
        .collect()
}

fn fmt_opt(x: Option<f64>, digits: usize) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.digits$}"))
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = xs.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub const RESULTS_HEADER: &str = "seed\trow\tvariant\tbleu\tbleu_reranked\tdp_f1";

/// One line per system and seed, then the external DP baseline, then
/// `mean` lines across seeds. BLEU of the final output is the reranked one
/// when present.
pub fn results_tsv(reports: &[SeedReport]) -> String {
    let mut out = format!("{RESULTS_HEADER}\n");
    let mut line = |seed: &str, row: &str, name: &str, b: Option<f64>, br: Option<f64>, f: Option<f64>| {
        writeln!(out, "{seed}\t{row}\t{name}\t{}\t{}\t{}", fmt_opt(b, 2), fmt_opt(br, 2), fmt_opt(f, 4)).expect("writing to a String");
    };
    for r in reports {
        let seed = r.seed.to_string();
        for s in &r.systems {
            line(&seed, &s.system.row().to_string(), s.system.name(), Some(s.bleu), s.bleu_reranked, s.dp_f1.as_ref().map(|f| f.f1));
        }
        line(&seed, "-", "external-tagger-position", None, None, Some(r.external.position.f1));
        line(&seed, "-", "external-tagger+classifier-word", None, None, Some(r.external.word.f1));
    }
    if let Some(first) = reports.first() {
        for s in &first.systems {
            let all = || reports.iter().filter_map(|r| r.get(s.system));
            line(
                "mean",
                &s.system.row().to_string(),
                s.system.name(),
                mean(all().map(|x| x.bleu)),
                mean(all().filter_map(|x| x.bleu_reranked)),
                mean(all().filter_map(|x| x.dp_f1.as_ref().map(|f| f.f1))),
            );
        }
        line("mean", "-", "external-tagger-position", None, None, mean(reports.iter().map(|r| r.external.position.f1)));
        line("mean", "-", "external-tagger+classifier-word", None, None, mean(reports.iter().map(|r| r.external.word.f1)));
    }
    out
}

/// Final-output BLEU: reranked when the system reranks.
pub fn final_bleu(r: &SystemResult) -> f64 {
    r.bleu_reranked.unwrap_or(r.bleu)
}

pub fn summary(reports: &[SeedReport]) -> String {
    let mut out = String::new();
    for r in reports {
        if let Some(t) = &r.sign_test {
            writeln!(
                out,
                "seed {}: sign test row 7 vs row 4: {} wins, {} losses, {} ties, p = {:.3e}",
                r.seed, t.wins, t.losses, t.ties, t.p_value
            )
            .expect("writing to a String");
        }
    }
    let m = |s: System, f: fn(&SystemResult) -> f64| mean(reports.iter().filter_map(|r| r.get(s)).map(f));
    if let (Some(a), Some(b)) = (m(System::SharedEncToDecJoint, final_bleu), m(System::BaselineDpps, final_bleu)) {
        writeln!(out, "mean BLEU: row 7 reranked {a:.2}, row 4 {b:.2}, difference {:+.2}", a - b).expect("writing to a String");
    }
    out
}
