//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Exactness and determinism criteria must pass. The synthetic-experiment
//! trend criteria (5-8) are measured and reported; a FAIL there is a finding
//! about the synthetic task, not a harness error, so it does not fail the
//! test target.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use dpnmt::autodiff::{backward, grad_check, GradCheckConfig, Graph, ParameterStore, Partition};
use dpnmt::corpus::{generate_synthetic_corpus, GeneratorConfig, EOS};
use dpnmt::data::{InputSpec, SourceView, Vocabularies};
use dpnmt::decoding::beam_search;
use dpnmt::eval::{bleu, dp_f1, sign_test, DpItem, F1Mode};
use dpnmt::model::init_parameters;
use dpnmt::nmt::{
    decode_teacher_forced, encode, AttentionVariant, Batch, EncodedExample, ModelConfig, ReconstructorMode,
};
use dpnmt::reconstructor::reconstruct_shared;
use dpnmt::training::{joint_loss, joint_loss_nodes, teacher_forced_accuracy, train, TrainHooks, TrainingConfig};
use dpnmt_cli::commands::{grad_check_config, random_batch, GRAD_CHECK_TOLERANCE};
use dpnmt_cli::config::RunConfig;
use dpnmt_cli::experiment::{final_bleu, results_tsv, run_experiment, System};

struct Line {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
    required: bool,
}

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

const VARIANTS: [&str; 6] = ["baseline", "separate", "independent", "enc_to_dec", "dec_to_enc", "joint"];

fn gradient_fidelity() -> (bool, String) {
    let started = Instant::now();
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (i, v) in VARIANTS.iter().enumerate() {
        let cfg = grad_check_config(v).unwrap();
        let store = init_parameters(&cfg, 40 + i as u64).unwrap();
        let batch = random_batch(&cfg, 40 + i as u64).unwrap();
        let r = grad_check(
            |g| Ok(joint_loss_nodes(g, &cfg, &batch)?.0.total),
            &store,
            &GradCheckConfig::default(),
        )
        .unwrap();
        worst = worst.max(r.max_rel_error);
        parts.push(format!("{v} {:.1e}", r.max_rel_error));
    }
    let secs = started.elapsed().as_secs_f64();
    (
        worst < GRAD_CHECK_TOLERANCE && secs < 60.0,
        format!("max rel error {worst:.2e} < 1e-4 ({}), {secs:.1}s", parts.join(", ")),
    )
}

/// Vocabularies and encoded examples of a small synthetic corpus under the
/// shared + joint input layout.
fn synthetic_examples(n: usize, seed: u64) -> (Vocabularies, Vec<EncodedExample>) {
    let gen = GeneratorConfig {
        train_size: n,
        dev_size: 1,
        test_size: 1,
        ..Default::default()
    };
    let corpus = generate_synthetic_corpus(&gen, seed).unwrap();
    let vocabs = Vocabularies::build(&corpus.train, &gen.lexicon(), 128).unwrap();
    let spec = InputSpec {
        view: SourceView::Plain,
        mode: ReconstructorMode::Shared,
        joint_prediction: true,
    };
    let ex = corpus
        .train
        .iter()
        .map(|e| spec.encode(&vocabs, e.gold.as_ref().unwrap(), Some(&e.target)).unwrap())
        .collect();
    (vocabs, ex)
}

fn zero_parameter_losses() -> (bool, String) {
    let (vocabs, examples) = synthetic_examples(20, 5);
    let base = ModelConfig {
        emb: 8,
        hidden: 8,
        ..Default::default()
    };
    let cfg = vocabs.model_config(&base.with_mode(ReconstructorMode::Shared, AttentionVariant::EncToDec, true));
    let mut store = init_parameters(&cfg, 0).unwrap();
    store.zero_all();
    let (vy, vx, vp) = (cfg.tgt_vocab as f64, cfg.src_vocab as f64, cfg.pronoun_vocab as f64);
    let mut worst = 0.0f64;
    for ex in &examples {
        let (i, t, d) = (ex.tgt.len() as f64, ex.rec.as_ref().unwrap().len() as f64, ex.dps.len() as f64);
        let expected = i * vy.ln() + t * vx.ln() + d * vp.ln();
        let got = joint_loss(&store, &cfg, &Batch::from_examples(std::slice::from_ref(ex)).unwrap()).unwrap();
        worst = worst.max((got.total - expected).abs());
    }
    (worst < 1e-9, format!("max |loss - closed form| {worst:.1e} over 20 sentences"))
}

fn structural_reductions() -> (bool, String) {
    let (vocabs, examples) = synthetic_examples(2, 6);
    let base = ModelConfig {
        emb: 6,
        hidden: 7,
        init_scale: 0.3,
        ..Default::default()
    };
    let batch = Batch::from_examples(&examples).unwrap();
    let step_log_probs = |store: &ParameterStore, cfg: &ModelConfig, variant: AttentionVariant| {
        let mut g = Graph::new(store);
        let enc = encode(&mut g, cfg, &batch.src).unwrap();
        let dec = decode_teacher_forced(&mut g, cfg, &enc, &batch.tgt).unwrap();
        let rec = batch.rec.as_ref().unwrap();
        reconstruct_shared(&mut g, cfg, variant, rec, &enc, &dec)
            .unwrap()
            .token_log_probs(&g, rec)
    };
    let mut diff = 0.0f64;
    for variant in [AttentionVariant::EncToDec, AttentionVariant::DecToEnc] {
        let cfg = vocabs.model_config(&base.with_mode(ReconstructorMode::Shared, variant, true));
        let mut store = init_parameters(&cfg, 9).unwrap();
        for name in ["rec.int_dec", "rec.int_enc"] {
            if let Ok(v) = store.value_mut(name) {
                v.data_mut().iter_mut().for_each(|x| *x = 0.0);
            }
        }
        let a = step_log_probs(&store, &cfg, variant);
        let b = step_log_probs(&store, &cfg, AttentionVariant::Independent);
        for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
            diff = diff.max((x - y).abs());
        }
    }

    let full = vocabs.model_config(&base.with_mode(ReconstructorMode::Shared, AttentionVariant::EncToDec, true));
    let none = vocabs.model_config(&base);
    let store = init_parameters(&full, 10).unwrap();
    let grads = {
        let mut g = Graph::new(&store);
        let (nodes, _) = joint_loss_nodes(&mut g, &none, &batch).unwrap();
        backward(&g, nodes.total, &store).unwrap()
    };
    let aux_zero = [Partition::Gamma, Partition::Psi].iter().all(|&p| {
        store
            .names_in(p)
            .iter()
            .all(|n| grads.get(n).unwrap().data().iter().all(|&x| x == 0.0))
    });
    (
        diff <= 1e-10 && aux_zero,
        format!("zeroed-interaction max diff {diff:.1e} <= 1e-10; mode=none gamma/psi gradients exactly zero: {aux_zero}"),
    )
}

fn overfit() -> (bool, String) {
    let started = Instant::now();
    let gen = GeneratorConfig {
        train_size: 32,
        dev_size: 1,
        test_size: 1,
        ..Default::default()
    };
    let corpus = generate_synthetic_corpus(&gen, 11).unwrap();
    let vocabs = Vocabularies::build(&corpus.train, &gen.lexicon(), 128).unwrap();
    let spec = InputSpec {
        view: SourceView::Plain,
        mode: ReconstructorMode::None,
        joint_prediction: false,
    };
    let cfg = vocabs.model_config(&ModelConfig::default());
    let examples: Vec<EncodedExample> = corpus
        .train
        .iter()
        .map(|e| spec.encode(&vocabs, e.gold.as_ref().unwrap(), Some(&e.target)).unwrap())
        .collect();
    let tcfg = TrainingConfig {
        max_epochs: 1000,
        max_steps: 500,
        seed: 11,
        ..Default::default()
    };
    let out = train(init_parameters(&cfg, 11).unwrap(), &cfg, &tcfg, &examples, TrainHooks::default()).unwrap();
    let acc = teacher_forced_accuracy(&out.last, &cfg, &examples).unwrap();
    let reproduced = examples
        .iter()
        .filter(|e| {
            let c = &beam_search(&out.last, &cfg, &e.src, 1, e.tgt.len() + 10).unwrap()[0];
            c.tokens == e.tgt && c.tokens.last() == Some(&EOS)
        })
        .count();
    let secs = started.elapsed().as_secs_f64();
    (
        acc >= 0.99 && reproduced == 32 && out.steps <= 500 && secs < 120.0,
        format!(
            "teacher-forced accuracy {:.2}% after {} steps; beam-1 reproduces {reproduced}/32; {secs:.1}s",
            100.0 * acc,
            out.steps
        ),
    )
}

fn metric_exactness() -> (bool, String) {
    let b = bleu(&[toks("a b c d")], &[toks("a b c d e")]).unwrap().bleu;
    let gold = [DpItem::new(0, 1, Some("我")), DpItem::new(0, 4, Some("他")), DpItem::new(1, 0, Some("你"))];
    let pred = [DpItem::new(0, 1, Some("我")), DpItem::new(0, 4, Some("它")), DpItem::new(1, 2, Some("你"))];
    let pos = dp_f1(&pred, &gold, F1Mode::Position);
    let word = dp_f1(&pred, &gold, F1Mode::Word);
    let a: Vec<f64> = (0..10).map(|i| if i < 7 { 1.0 } else { 0.0 }).collect();
    let c: Vec<f64> = (0..10).map(|i| if i < 7 { 0.0 } else { 1.0 }).collect();
    let p = sign_test(&a, &c).unwrap().p_value;
    let f1_ok = pos.f1 == 2.0 * (2.0 / 3.0) * (2.0 / 3.0) / (4.0 / 3.0) && word.true_positives == 1 && word.f1 == 1.0 / 3.0;
    let sign_ok = p == 2.0 * 176.0 / 1024.0;
    (
        (b - 77.88).abs() <= 0.01 && f1_ok && sign_ok,
        format!(
            "BLEU {b:.4} (77.88 +- 0.01); position F1 {:.6}, word F1 {:.6}; sign test 7-3 p = {p} (352/1024)",
            pos.f1, word.f1
        ),
    )
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let path = e.unwrap().path();
        let name = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
        if path.is_dir() {
            files.extend(dir_bytes(&path).into_iter().map(|(n, b)| (format!("{name}/{n}"), b)));
        } else {
            files.push((name, fs::read(&path).unwrap()));
        }
    }
    files.sort();
    files
}

fn determinism() -> (bool, String) {
    let tmp = tempfile::tempdir().unwrap();
    let small = [
        "--seed", "9", "--set", "gen.train_size=150", "--set", "gen.dev_size=10", "--set", "gen.test_size=10", "--set",
        "model.emb=10", "--set", "model.hidden=10", "--set", "train.max_epochs=2", "--set", "aux.epochs=1", "--set",
        "decode.beam=3",
    ];
    let run = |args: &[&str]| {
        let mut v = vec!["dpnmt"];
        v.extend_from_slice(args);
        v.extend_from_slice(&small);
        assert_eq!(dpnmt_cli::run(v), 0, "{args:?}");
    };
    let mut same = true;
    let mut checked = Vec::new();
    for round in ["a", "b"] {
        let root = tmp.path().join(round);
        let s = |p: &str| root.join(p).to_string_lossy().into_owned();
        run(&["gen-data", "--out", &s("data")]);
        run(&["tag", "--train", &s("data/train"), "--input", &s("data/test.src"), "--out", &s("test.tag.ann")]);
        run(&[
            "train", "--data", &s("data"), "--out", &s("model"), "--set", "model.mode=shared", "--set",
            "model.joint_prediction=true", "--set", "model.attention=dec_to_enc", "--set", "model.source_view=plain",
        ]);
        run(&[
            "translate", "--model", &s("model"), "--input", &s("data/test.src"), "--annotated", &s("test.tag.ann"),
            "--out", &s("hyp.txt"), "--nbest", &s("nbest.txt"),
        ]);
        run(&[
            "rerank", "--model", &s("model"), "--nbest", &s("nbest.txt"), "--input", &s("data/test.src"), "--annotated",
            &s("test.tag.ann"), "--out", &s("rerank.txt"),
        ]);
        run(&["experiment", "--out", &s("exp"), "--seeds", "1", "--systems", "3,6"]);
    }
    for sub in ["data", "model", "exp", ""] {
        let (a, b) = (tmp.path().join("a").join(sub), tmp.path().join("b").join(sub));
        let (fa, fb) = (dir_bytes(&a), dir_bytes(&b));
        let files = fa.iter().filter(|(_, bytes)| !bytes.is_empty()).count();
        same &= fa == fb;
        checked.push(format!("{}: {files} files", if sub.is_empty() { "all" } else { sub }));
    }
    (same, format!("two full runs byte-identical ({})", checked.join(", ")))
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn trend_criteria(lines: &mut Vec<Line>) {
    let run = RunConfig::default();
    let started = Instant::now();
    let reports = run_experiment(&run, 3, &System::DEFAULT, &mut |l| eprintln!("{l}")).unwrap();
    let per_seed = started.elapsed().as_secs_f64() / 3.0;
    eprint!("{}", results_tsv(&reports));
    let get = |s: System| reports.iter().map(move |r| r.get(s).unwrap());

    let diffs: Vec<f64> = get(System::SharedEncToDecJoint)
        .zip(get(System::BaselineDpps))
        .map(|(a, b)| final_bleu(a) - b.bleu)
        .collect();
    let significant = reports
        .iter()
        .filter(|r| r.sign_test.as_ref().is_some_and(|t| t.p_value < 0.05 && t.wins > t.losses))
        .count();
    let gain = mean(diffs.iter().copied());
    let pvals: Vec<String> = reports
        .iter()
        .map(|r| format!("{:.2e}", r.sign_test.as_ref().unwrap().p_value))
        .collect();
    lines.push(Line {
        id: 5,
        name: "BLEU gain of shared enc->dec + joint (reranked) over baseline+DPPs",
        pass: gain >= 1.0 && significant >= 2 && per_seed < 1800.0,
        detail: format!(
            "mean gain {gain:+.2} BLEU (need >= +1.00), p < 0.05 on {significant}/3 seeds (p = {}), {per_seed:.0}s/seed",
            pvals.join(", ")
        ),
        required: false,
    });

    let joint = mean(get(System::SharedEncToDecJoint).map(|r| r.dp_f1.as_ref().unwrap().f1));
    let external = mean(reports.iter().map(|r| r.external.word.f1));
    lines.push(Line {
        id: 6,
        name: "joint DP-word F1 over external tagger+classifier",
        pass: joint - external >= 0.03,
        detail: format!("joint {joint:.4} vs external {external:.4} (need gap >= 0.03)"),
        required: false,
    });

    let shared = mean(get(System::SharedEncToDecJoint).map(|r| r.bleu));
    let base = mean(get(System::BaselineDpps).map(|r| r.bleu));
    lines.push(Line {
        id: 7,
        name: "un-reranked shared-reconstructor BLEU over baseline+DPPs",
        pass: shared > base,
        detail: format!("{shared:.2} vs {base:.2}"),
        required: false,
    });

    let gaps: Vec<String> = reports
        .iter()
        .map(|r| format!("{:.3}/{:.3}", r.external.position.f1, r.external.word.f1))
        .collect();
    lines.push(Line {
        id: 8,
        name: "tagger position F1 over external word F1 on every seed",
        pass: reports.iter().all(|r| r.external.position.f1 > r.external.word.f1),
        detail: format!("position/word per seed: {}", gaps.join(", ")),
        required: false,
    });
}

#[test]
fn acceptance_report() {
    let mut lines = Vec::new();
    let mut push = |id, name, (pass, detail): (bool, String)| {
        lines.push(Line {
            id,
            name,
            pass,
            detail,
            required: true,
        })
    };
    push(1, "gradient fidelity on six configurations", gradient_fidelity());
    push(2, "zero-parameter joint loss closed form", zero_parameter_losses());
    push(3, "structural reductions", structural_reductions());
    push(4, "overfit smoke test on 32 pairs", overfit());
    push(9, "metric exactness", metric_exactness());
    push(10, "determinism of command outputs", determinism());
    trend_criteria(&mut lines);
    lines.sort_by_key(|l| l.id);

    // Written to the stream directly so the report survives output capture.
    let mut report = String::from("\n");
    for l in &lines {
        report += &format!(
            "[{}] {:>2} {}: {}\n",
            if l.pass { "PASS" } else { "FAIL" },
            l.id,
            l.name,
            l.detail
        );
    }
    std::io::stdout().write_all(report.as_bytes()).unwrap();
    let broken: Vec<usize> = lines.iter().filter(|l| l.required && !l.pass).map(|l| l.id).collect();
    assert!(broken.is_empty(), "required criteria failed: {broken:?}");
}
