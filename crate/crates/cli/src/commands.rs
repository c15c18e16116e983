use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dpnmt::autodiff::{grad_check, GradCheckConfig, ParameterStore};
use dpnmt::corpus::io::{read_annotated, read_sentences, write_annotated, write_sentences};
use dpnmt::corpus::{
    annotate_from_alignment, load_corpus, save_corpus, AnnotatedSentence, CorpusPaths, ParallelExample, PronounLexicon,
    Vocabulary, DP_MARKER_ID, EOS,
};
use dpnmt::data::{InputSpec, SourceView, Vocabularies};
use dpnmt::decoding::{
    beam_search, default_max_len, greedy, read_nbest, rerank, score_candidates, write_nbest, Candidate, NBestList,
};
use dpnmt::dp::PronounVocabulary;
use dpnmt::eval::{bleu, dp_f1, report_tsv, segment_scores, sign_test, F1Mode};
use dpnmt::model::init_parameters;
use dpnmt::nmt::{AttentionVariant, Batch, EncodedExample, ModelConfig, ReconstructorMode};
use dpnmt::training::{joint_loss_nodes, loss_log_tsv, train, TrainHooks};
use dpnmt::util::write_atomic;
use dpnmt::{Error, Result};

use crate::checkpoint;
use crate::config::RunConfig;
use crate::experiment::{
    annotate_externally, generate_corpus, parse_systems, results_tsv, run_experiment, slot_items,
    summary, train_external,
};

#[derive(Parser, Debug)]
#[command(name = "dpnmt", version, about = "NMT with a shared reconstructor and joint dropped-pronoun prediction")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one configuration key (`key=value`); repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// The single source of randomness for the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate the synthetic train/dev/test corpus.
    GenData {
        #[arg(long)]
        out: PathBuf,
    },
    /// Project gold DP annotations from word alignments.
    Annotate {
        /// Corpus prefix: reads `<prefix>.src`, `.tgt` and `.align`.
        #[arg(long)]
        data: PathBuf,
        /// Target-pronoun to source-pronoun TSV; the generator's lexicon by default.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the external DP tagger and word classifier, then annotate sentences.
    Tag {
        /// Training corpus prefix with gold annotations or alignments.
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Plain source sentences to annotate.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a translation model.
    Train {
        /// Directory holding `train.*` and `dev.*` corpus files.
        #[arg(long)]
        data: PathBuf,
        /// Output model directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Translate with beam search or greedy decoding.
    Translate {
        #[arg(long)]
        model: PathBuf,
        /// Plain source sentences.
        #[arg(long)]
        input: PathBuf,
        /// Annotated source (with sidecar), needed by annotated source views and for reranking.
        #[arg(long)]
        annotated: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Beam width; the configured `decode.beam` by default.
        #[arg(long, conflicts_with = "greedy")]
        beam: Option<usize>,
        #[arg(long)]
        greedy: bool,
        /// Also write the n-best lists here.
        #[arg(long, conflicts_with = "greedy")]
        nbest: Option<PathBuf>,
    },
    /// Rerank n-best lists with the reconstruction score.
    Rerank {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        nbest: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        annotated: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write the rescored, re-sorted n-best lists here.
        #[arg(long)]
        nbest_out: Option<PathBuf>,
    },
    /// Score translations (BLEU) and optionally DP annotations (F1).
    Evaluate {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        /// A second system for a paired sign test against `--hyp`.
        #[arg(long)]
        compare: Option<PathBuf>,
        #[arg(long, requires = "dp_gold")]
        dp_pred: Option<PathBuf>,
        #[arg(long, requires = "dp_pred")]
        dp_gold: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare reverse-mode gradients with finite differences on a random batch.
    GradCheck {
        /// baseline, separate, independent, enc_to_dec, dec_to_enc or joint.
        #[arg(long)]
        variant: String,
    },
    /// Run the system comparison on the synthetic corpus.
    Experiment {
        #[arg(long)]
        out: PathBuf,
        /// `default` (rows 4 and 7), `all`, or comma-separated row numbers.
        #[arg(long, default_value = "default")]
        systems: String,
        #[arg(long, default_value_t = 3)]
        seeds: usize,
    },
}

/// Base configuration, then `--config`, then `--set`, then `--seed`.
pub fn resolve_config(base: RunConfig, global: &GlobalArgs) -> Result<RunConfig> {
    let mut run = base;
    if let Some(p) = &global.config {
        let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
        run.apply_text(&text, &p.display().to_string())?;
    }
    run.apply_overrides(&global.overrides)?;
    if let Some(s) = global.seed {
        run.seed = s;
    }
    run.validate()?;
    Ok(run)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn lexicon(path: Option<&Path>, run: &RunConfig) -> Result<PronounLexicon> {
    match path {
        Some(p) => PronounLexicon::from_tsv(&read_text(p)?),
        None => Ok(run.generator.lexicon()),
    }
}

fn gold_for(prefix: &Path, lex: &PronounLexicon) -> Result<Vec<ParallelExample>> {
    let mut examples = load_corpus(&CorpusPaths::existing_with_prefix(prefix))?;
    for ex in &mut examples {
        if ex.gold.is_none() {
            if ex.alignment.is_none() {
                return Err(Error::invalid(format!(
                    "{}: neither annotations nor alignments to derive them from",
                    prefix.display()
                )));
            }
            ex.gold = Some(annotate_from_alignment(ex, lex)?);
        }
    }
    Ok(examples)
}

fn gen_data(run: &RunConfig, out: &Path) -> Result<String> {
    create_dir(out)?;
    let corpus = generate_corpus(run, run.seed)?;
    for (name, split) in [("train", &corpus.train), ("dev", &corpus.dev), ("test", &corpus.test)] {
        save_corpus(&CorpusPaths::with_prefix(out.join(name)), split)?;
    }
    write_text(&out.join("lexicon.tsv"), &run.generator.lexicon().to_tsv())?;
    Ok(format!(
        "wrote {} train, {} dev, {} test pairs to {}\n",
        corpus.train.len(),
        corpus.dev.len(),
        corpus.test.len(),
        out.display()
    ))
}

fn annotate(run: &RunConfig, data: &Path, lex_path: Option<&Path>, out: &Path) -> Result<String> {
    let lex = lexicon(lex_path, run)?;
    let mut paths = CorpusPaths::with_prefix(data);
    paths.annotated = None;
    let examples = load_corpus(&paths)?;
    let ann = examples
        .iter()
        .map(|e| annotate_from_alignment(e, &lex))
        .collect::<Result<Vec<_>>>()?;
    write_annotated(out, &ann)?;
    let dps: usize = ann.iter().map(AnnotatedSentence::dp_count).sum();
    Ok(format!("annotated {} sentences, {dps} dropped pronouns\n", ann.len()))
}

fn tag(run: &RunConfig, train_prefix: &Path, lex_path: Option<&Path>, input: &Path, out: &Path) -> Result<String> {
    let lex = lexicon(lex_path, run)?;
    let train = gold_for(train_prefix, &lex)?;
    let gold: Vec<AnnotatedSentence> = train.iter().map(|e| e.gold.clone().expect("filled by gold_for")).collect();
    let (tagger, classifier) = train_external(run, &gold, &PronounVocabulary::from_lexicon(&lex), run.seed)?;
    let plain = read_sentences(input)?;
    let ann = annotate_externally(&tagger, &classifier, &plain)?;
    write_annotated(out, &ann)?;
    let dps: usize = ann.iter().map(AnnotatedSentence::dp_count).sum();
    Ok(format!("tagged {} sentences, {dps} markers\n", ann.len()))
}

/// A trained model directory.
pub struct ModelDir {
    pub run: RunConfig,
    pub vocabs: Vocabularies,
    pub cfg: ModelConfig,
    pub store: ParameterStore,
}

const CONFIG_FILE: &str = "config.txt";
const SRC_VOCAB: &str = "src.vocab";
const TGT_VOCAB: &str = "tgt.vocab";
const PRONOUNS: &str = "pronouns.txt";
const CHECKPOINT: &str = "model.ckpt";
const LOSS_LOG: &str = "loss.tsv";

impl ModelDir {
    pub fn spec(&self) -> InputSpec {
        InputSpec {
            view: self.run.source_view,
            mode: self.cfg.mode,
            joint_prediction: self.cfg.joint_prediction,
        }
    }

    /// Reads a model directory; `global` may change decoding settings.
    pub fn load(dir: &Path, global: &GlobalArgs) -> Result<Self> {
        let mut saved = RunConfig::default();
        saved.apply_text(&read_text(&dir.join(CONFIG_FILE))?, CONFIG_FILE)?;
        let run = resolve_config(saved, global)?;
        let vocabs = Vocabularies {
            src: Vocabulary::from_text(&read_text(&dir.join(SRC_VOCAB))?)?,
            tgt: Vocabulary::from_text(&read_text(&dir.join(TGT_VOCAB))?)?,
            pronouns: PronounVocabulary::from_text(&read_text(&dir.join(PRONOUNS))?)?,
        };
        let cfg = vocabs.model_config(&run.model);
        let store = checkpoint::load(&dir.join(CHECKPOINT), &cfg.digest())?;
        Ok(ModelDir { run, vocabs, cfg, store })
    }
}

fn train_cmd(run: &RunConfig, data: &Path, out: &Path) -> Result<String> {
    let lex = match data.join("lexicon.tsv") {
        p if p.exists() => PronounLexicon::from_tsv(&read_text(&p)?)?,
        _ => run.generator.lexicon(),
    };
    let train_set = gold_for(&data.join("train"), &lex)?;
    let dev_set = gold_for(&data.join("dev"), &lex)?;
    let vocabs = Vocabularies::build(&train_set, &lex, run.vocab_size)?;
    let cfg = vocabs.model_config(&run.model);
    cfg.validate()?;
    let spec = InputSpec {
        view: run.source_view,
        mode: cfg.mode,
        joint_prediction: cfg.joint_prediction,
    };
    let examples = train_set
        .iter()
        .map(|e| spec.encode(&vocabs, e.gold.as_ref().expect("gold"), Some(&e.target)))
        .collect::<Result<Vec<_>>>()?;
    let dev_src: Vec<Vec<usize>> = dev_set
        .iter()
        .map(|e| Ok(spec.encode(&vocabs, e.gold.as_ref().expect("gold"), None)?.src))
        .collect::<Result<_>>()?;
    let dev_refs: Vec<&[String]> = dev_set.iter().map(|e| e.target.as_slice()).collect();

    create_dir(out)?;
    write_text(&out.join(CONFIG_FILE), &run.to_text())?;
    write_text(&out.join(SRC_VOCAB), &vocabs.src.to_text())?;
    write_text(&out.join(TGT_VOCAB), &vocabs.tgt.to_text())?;
    write_text(&out.join(PRONOUNS), &vocabs.pronouns.to_text())?;
    let digest = cfg.digest();
    let ckpt = out.join(CHECKPOINT);
    let hooks = TrainHooks {
        dev_score: Some(Box::new(|store: &ParameterStore| {
            let hyps: Vec<Vec<String>> = greedy(store, &cfg, &dev_src)?
                .iter()
                .map(|c| vocabs.tgt.decode(&c.tokens))
                .collect();
            Ok(bleu(&hyps, &dev_refs)?.bleu)
        })),
        checkpoint: Some(Box::new(|_, store: &ParameterStore| checkpoint::save(&ckpt, store, &digest))),
        progress: None,
    };
    let tcfg = dpnmt::training::TrainingConfig {
        seed: run.seed,
        ..run.training.clone()
    };
    let outcome = train(init_parameters(&cfg, run.seed)?, &cfg, &tcfg, &examples, hooks)?;
    checkpoint::save(&ckpt, &outcome.best, &digest)?;
    write_text(&out.join(LOSS_LOG), &loss_log_tsv(&outcome.log))?;
    let best = outcome
        .evaluations
        .iter()
        .map(|&(_, b)| b)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(format!(
        "trained {} steps{}; best dev BLEU {best:.2}\n",
        outcome.steps,
        if outcome.stopped_early { " (stopped early)" } else { "" }
    ))
}

/// Model inputs for plain sentences plus an optional annotation of them.
fn model_inputs(m: &ModelDir, input: &Path, annotated: Option<&Path>) -> Result<Vec<EncodedExample>> {
    let plain = read_sentences(input)?;
    let anns = match annotated {
        Some(p) => {
            let a = read_annotated(p)?;
            if a.len() != plain.len() {
                return Err(Error::invalid(format!(
                    "{}: {} annotated sentences for {} inputs",
                    p.display(),
                    a.len(),
                    plain.len()
                )));
            }
            for (n, (x, s)) in a.iter().zip(&plain).enumerate() {
                if &x.strip().0 != s {
                    return Err(Error::Parse {
                        path: p.to_path_buf(),
                        line: n + 1,
                        message: "annotation does not match the input sentence".into(),
                    });
                }
            }
            a
        }
        None => {
            if m.run.source_view != SourceView::Plain {
                return Err(Error::Config(format!(
                    "source view {} needs --annotated input",
                    m.run.source_view.as_str()
                )));
            }
            plain
                .into_iter()
                .map(AnnotatedSentence::unannotated)
                .collect::<Result<_>>()?
        }
    };
    let mut spec = m.spec();
    if annotated.is_none() {
        // Nothing to reconstruct or predict without an annotation.
        spec.mode = ReconstructorMode::None;
        spec.joint_prediction = false;
    }
    anns.iter().map(|a| spec.encode(&m.vocabs, a, None)).collect()
}

fn lines_of(vocab: &Vocabulary, outputs: &[&Candidate]) -> Vec<Vec<String>> {
    outputs.iter().map(|c| vocab.decode(&c.tokens)).collect()
}

#[allow(clippy::too_many_arguments)]
fn translate(
    global: &GlobalArgs,
    model: &Path,
    input: &Path,
    annotated: Option<&Path>,
    out: &Path,
    beam: Option<usize>,
    use_greedy: bool,
    nbest: Option<&Path>,
) -> Result<String> {
    let m = ModelDir::load(model, global)?;
    let inputs = model_inputs(&m, input, annotated)?;
    let outputs: Vec<Candidate> = if use_greedy {
        let srcs: Vec<Vec<usize>> = inputs.iter().map(|e| e.src.clone()).collect();
        greedy(&m.store, &m.cfg, &srcs)?
    } else {
        let width = beam.unwrap_or(m.run.beam);
        let lists = inputs
            .iter()
            .map(|e| {
                Ok(NBestList {
                    source: e.src.clone(),
                    annotated: e.rec.clone(),
                    candidates: beam_search(&m.store, &m.cfg, &e.src, width, default_max_len(e.src.len()))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(p) = nbest {
            write_text(p, &write_nbest(&lists, &m.vocabs.tgt))?;
        }
        lists.into_iter().map(|l| l.candidates.into_iter().next().expect("non-empty")).collect()
    };
    let refs: Vec<&Candidate> = outputs.iter().collect();
    write_sentences(out, &lines_of(&m.vocabs.tgt, &refs))?;
    let unfinished = outputs.iter().filter(|c| !c.finished).count();
    Ok(format!("translated {} sentences ({unfinished} unfinished)\n", outputs.len()))
}

fn rerank_cmd(
    global: &GlobalArgs,
    model: &Path,
    nbest_path: &Path,
    input: &Path,
    annotated: &Path,
    out: &Path,
    nbest_out: Option<&Path>,
) -> Result<String> {
    let m = ModelDir::load(model, global)?;
    if m.cfg.mode == ReconstructorMode::None {
        return Err(Error::Config("reranking needs a model with a reconstructor".into()));
    }
    let inputs = model_inputs(&m, input, Some(annotated))?;
    let mut grouped: BTreeMap<usize, Vec<Candidate>> = BTreeMap::new();
    for (idx, c) in read_nbest(&read_text(nbest_path)?, &m.vocabs.tgt)? {
        if idx >= inputs.len() {
            return Err(Error::invalid(format!("n-best sentence index {idx} out of range")));
        }
        grouped.entry(idx).or_default().push(c);
    }
    let mut lists = Vec::with_capacity(inputs.len());
    for (i, e) in inputs.iter().enumerate() {
        let candidates = grouped
            .remove(&i)
            .ok_or_else(|| Error::invalid(format!("no n-best candidates for sentence {i}")))?;
        let mut l = NBestList {
            source: e.src.clone(),
            annotated: e.rec.clone(),
            candidates,
        };
        score_candidates(&m.store, &m.cfg, &mut l)?;
        rerank(&mut l, &m.run.rerank)?;
        lists.push(l);
    }
    let best: Vec<&Candidate> = lists.iter().map(NBestList::best).collect();
    write_sentences(out, &lines_of(&m.vocabs.tgt, &best))?;
    if let Some(p) = nbest_out {
        write_text(p, &write_nbest(&lists, &m.vocabs.tgt))?;
    }
    Ok(format!("reranked {} lists with lambda {}\n", lists.len(), m.run.rerank.lambda))
}

/// Reads sentences, allowing empty lines (empty translations).
fn read_lines(path: &Path) -> Result<Vec<Vec<String>>> {
    Ok(read_text(path)?
        .lines()
        .map(|l| l.split_whitespace().map(str::to_string).collect())
        .collect())
}

fn evaluate(
    hyp: &Path,
    reference: &Path,
    compare: Option<&Path>,
    dp: Option<(&Path, &Path)>,
    out: Option<&Path>,
) -> Result<String> {
    let hyps = read_lines(hyp)?;
    let refs = read_lines(reference)?;
    let report = bleu(&hyps, &refs)?;
    let mut f1 = Vec::new();
    if let Some((pred, gold)) = dp {
        let (p, g) = (slot_items(&read_annotated(pred)?), slot_items(&read_annotated(gold)?));
        f1.push(("dp_position", dp_f1(&p, &g, F1Mode::Position)));
        f1.push(("dp_word", dp_f1(&p, &g, F1Mode::Word)));
    }
    let mut text = report_tsv(&report, &f1);
    if let Some(c) = compare {
        let other = read_lines(c)?;
        let t = sign_test(&segment_scores(&hyps, &refs)?, &segment_scores(&other, &refs)?)?;
        writeln!(
            text,
            "sign_test\twins={}\tlosses={}\tties={}\tp={}",
            t.wins, t.losses, t.ties, t.p_value
        )
        .expect("writing to a String");
    }
    if let Some(p) = out {
        write_text(p, &text)?;
    }
    Ok(text)
}

/// The six configurations covered by gradient checking.
pub fn grad_check_config(variant: &str) -> Result<ModelConfig> {
    let (mode, attention, joint) = match variant {
        "baseline" => (ReconstructorMode::None, AttentionVariant::Independent, false),
        "separate" => (ReconstructorMode::Separate, AttentionVariant::Independent, false),
        "independent" => (ReconstructorMode::Shared, AttentionVariant::Independent, false),
        "enc_to_dec" => (ReconstructorMode::Shared, AttentionVariant::EncToDec, false),
        "dec_to_enc" => (ReconstructorMode::Shared, AttentionVariant::DecToEnc, false),
        "joint" => (ReconstructorMode::Shared, AttentionVariant::EncToDec, true),
        other => {
            return Err(Error::Config(format!(
                "unknown variant {other:?}; expected baseline, separate, independent, enc_to_dec, dec_to_enc or joint"
            )))
        }
    };
    Ok(ModelConfig {
        src_vocab: 11,
        tgt_vocab: 10,
        emb: 4,
        hidden: 5,
        mode,
        attention,
        joint_prediction: joint,
        pronoun_vocab: 6,
        init_scale: 0.5,
    })
}

/// Two random sentence pairs with annotated sources for `cfg`.
pub fn random_batch(cfg: &ModelConfig, seed: u64) -> Result<Batch> {
    const FIRST_WORD: usize = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pair = |src_len: usize, tgt_len: usize, markers: usize| {
        let src: Vec<usize> = (0..src_len).map(|_| rng.gen_range(FIRST_WORD..cfg.src_vocab)).collect();
        let mut tgt: Vec<usize> = (1..tgt_len).map(|_| rng.gen_range(FIRST_WORD..cfg.tgt_vocab)).collect();
        tgt.push(EOS);
        let mut rec = src.clone();
        for _ in 0..markers {
            let p = rng.gen_range(0..=rec.len());
            rec.insert(p, DP_MARKER_ID);
        }
        let dps: Vec<(usize, usize)> = rec
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == DP_MARKER_ID)
            .map(|(p, _)| (p, rng.gen_range(0..cfg.pronoun_vocab)))
            .collect();
        EncodedExample {
            src,
            tgt,
            rec: cfg.reconstructs().then_some(rec),
            dps: if cfg.joint_prediction { dps } else { Vec::new() },
        }
    };
    let a = pair(4, 5, 1);
    let b = pair(3, 3, 2);
    Batch::from_examples(&[a, b])
}

pub const GRAD_CHECK_TOLERANCE: f64 = 1e-4;

/// Returns the report text and whether the check passed.
pub fn grad_check_cmd(variant: &str, seed: u64) -> Result<(String, bool)> {
    let cfg = grad_check_config(variant)?;
    let store = init_parameters(&cfg, seed)?;
    let batch = random_batch(&cfg, seed)?;
    let report = grad_check(
        |g| Ok(joint_loss_nodes(g, &cfg, &batch)?.0.total),
        &store,
        &GradCheckConfig {
            seed,
            ..Default::default()
        },
    )?;
    let ok = report.max_rel_error < GRAD_CHECK_TOLERANCE;
    let text = format!(
        "variant {variant}: max relative error {:.3e} over {} coordinates (worst {}[{}]: analytic {:.6e}, numeric {:.6e}) {}\n",
        report.max_rel_error,
        report.coordinates,
        report.worst_param,
        report.worst_index,
        report.worst_analytic,
        report.worst_numeric,
        if ok { "PASS" } else { "FAIL" }
    );
    Ok((text, ok))
}

fn experiment(run: &RunConfig, out: &Path, systems: &str, seeds: usize) -> Result<String> {
    let systems = parse_systems(systems)?;
    let reports = run_experiment(run, seeds, &systems, &mut |line| eprintln!("{line}"))?;
    create_dir(out)?;
    let tsv = results_tsv(&reports);
    let text = summary(&reports);
    write_text(&out.join("results.tsv"), &tsv)?;
    write_text(&out.join("summary.txt"), &text)?;
    Ok(format!("{tsv}{text}"))
}

/// Process exit status for an error: 1 for configuration and usage
/// problems, 2 for everything that fails at run time.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 1,
        _ => 2,
    }
}

/// Runs one parsed command, printing its report to standard output.
pub fn execute(cli: Cli) -> Result<i32> {
    let g = &cli.global;
    let fresh = || resolve_config(RunConfig::default(), g);
    let text = match &cli.command {
        Command::GenData { out } => gen_data(&fresh()?, out)?,
        Command::Annotate { data, lexicon, out } => annotate(&fresh()?, data, lexicon.as_deref(), out)?,
        Command::Tag {
            train,
            lexicon,
            input,
            out,
        } => tag(&fresh()?, train, lexicon.as_deref(), input, out)?,
        Command::Train { data, out } => train_cmd(&fresh()?, data, out)?,
        Command::Translate {
            model,
            input,
            annotated,
            out,
            beam,
            greedy,
            nbest,
        } => translate(g, model, input, annotated.as_deref(), out, *beam, *greedy, nbest.as_deref())?,
        Command::Rerank {
            model,
            nbest,
            input,
            annotated,
            out,
            nbest_out,
        } => rerank_cmd(g, model, nbest, input, annotated, out, nbest_out.as_deref())?,
        Command::Evaluate {
            hyp,
            reference,
            compare,
            dp_pred,
            dp_gold,
            out,
        } => {
            let dp = dp_pred.as_deref().zip(dp_gold.as_deref());
            evaluate(hyp, reference, compare.as_deref(), dp, out.as_deref())?
        }
        Command::GradCheck { variant } => {
            let run = fresh()?;
            let (text, ok) = grad_check_cmd(variant, run.seed)?;
            print!("{text}");
            return Ok(if ok { 0 } else { 2 });
        }
        Command::Experiment { out, systems, seeds } => experiment(&fresh()?, out, systems, *seeds)?,
    };
    print!("{text}");
    Ok(0)
}

/// Parses arguments and runs; returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
