use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dpnmt::corpus::io::read_annotated;
use dpnmt_cli::checkpoint;
use dpnmt_cli::commands::grad_check_cmd;

fn dpnmt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpnmt"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = dpnmt(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small corpus and model settings so the command tests stay fast.
const SMALL: &[&str] = &[
    "--set",
    "gen.train_size=120",
    "--set",
    "gen.dev_size=12",
    "--set",
    "gen.test_size=12",
    "--set",
    "model.emb=12",
    "--set",
    "model.hidden=12",
    "--set",
    "train.max_epochs=2",
    "--set",
    "aux.epochs=1",
];

fn with_small<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend_from_slice(SMALL);
    v
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn gen_data_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&with_small(&["gen-data", "--seed", "3", "--out", p(&a)]));
    ok(&with_small(&["gen-data", "--seed", "3", "--out", p(&b)]));
    let (fa, fb) = (dir_bytes(&a), dir_bytes(&b));
    assert!(fa.iter().any(|(n, _)| n == "train.src"));
    assert!(fa.iter().any(|(n, _)| n == "test.ann.tsv"));
    assert_eq!(fa, fb);
    let c = tmp.path().join("c");
    ok(&with_small(&["gen-data", "--seed", "4", "--out", p(&c)]));
    assert_ne!(dir_bytes(&c), fa);
}

#[test]
fn annotate_reproduces_generator_annotation() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&with_small(&["gen-data", "--seed", "5", "--out", p(&data)]));
    let out = tmp.path().join("train.proj.ann");
    ok(&["annotate", "--data", p(&data.join("train")), "--out", p(&out)]);
    assert_eq!(read_annotated(&out).unwrap(), read_annotated(&data.join("train.ann")).unwrap());
}

#[test]
fn pipeline_train_translate_rerank_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&with_small(&["gen-data", "--seed", "2", "--out", p(&data)]));

    let tagged = tmp.path().join("test.tag.ann");
    let test_src = data.join("test.src");
    ok(&with_small(&["tag", "--train", p(&data.join("train")), "--input", p(&test_src), "--out", p(&tagged)]));
    assert_eq!(read_annotated(&tagged).unwrap().len(), 12);

    let model = tmp.path().join("model");
    let mut train_args = with_small(&["train", "--seed", "2", "--data", p(&data), "--out", p(&model)]);
    train_args.extend_from_slice(&["--set", "model.mode=shared", "--set", "model.attention=enc_to_dec"]);
    train_args.extend_from_slice(&["--set", "model.joint_prediction=true", "--set", "model.source_view=plain"]);
    ok(&train_args);
    for f in ["config.txt", "model.ckpt", "loss.tsv", "src.vocab", "tgt.vocab", "pronouns.txt"] {
        assert!(model.join(f).exists(), "{f} missing");
    }
    let log = fs::read_to_string(model.join("loss.tsv")).unwrap();
    assert!(log.starts_with("step\tlikelihood\treconstruction\tprediction\ttotal\n"));

    // Beam 1 and greedy give identical files.
    let (beam1, greedy) = (tmp.path().join("beam1.txt"), tmp.path().join("greedy.txt"));
    ok(&["translate", "--model", p(&model), "--input", p(&test_src), "--out", p(&beam1), "--beam", "1"]);
    ok(&["translate", "--model", p(&model), "--input", p(&test_src), "--out", p(&greedy), "--greedy"]);
    assert_eq!(fs::read(&beam1).unwrap(), fs::read(&greedy).unwrap());

    let (hyp, nbest) = (tmp.path().join("beam.txt"), tmp.path().join("nbest.txt"));
    let translate = [
        "translate", "--model", p(&model), "--input", p(&test_src), "--annotated", p(&tagged), "--out", p(&hyp),
        "--beam", "4", "--nbest", p(&nbest),
    ];
    ok(&translate);
    let first = (fs::read(&hyp).unwrap(), fs::read(&nbest).unwrap());
    ok(&translate);
    assert_eq!(first, (fs::read(&hyp).unwrap(), fs::read(&nbest).unwrap()));

    let reranked = tmp.path().join("reranked.txt");
    let rescored = tmp.path().join("rescored.txt");
    ok(&[
        "rerank", "--model", p(&model), "--nbest", p(&nbest), "--input", p(&test_src), "--annotated", p(&tagged),
        "--out", p(&reranked), "--nbest-out", p(&rescored),
    ]);
    assert_eq!(fs::read_to_string(&reranked).unwrap().lines().count(), 12);
    // Every rescored line carries a reconstruction score.
    assert!(fs::read_to_string(&rescored)
        .unwrap()
        .lines()
        .all(|l| l.split(" ||| ").nth(3).is_some_and(|f| f != "-")));

    let report = ok(&[
        "evaluate", "--hyp", p(&reranked), "--ref", p(&data.join("test.tgt")), "--compare", p(&hyp),
        "--dp-pred", p(&tagged), "--dp-gold", p(&data.join("test.ann")),
    ]);
    assert!(report.starts_with("metric\tvalue\nbleu\t"), "{report}");
    assert!(report.contains("dp_word") && report.contains("sign_test"), "{report}");

    // A plain model cannot rerank.
    let plain_model = tmp.path().join("plain");
    ok(&with_small(&["train", "--data", p(&data), "--out", p(&plain_model), "--set", "train.max_epochs=1"]));
    let out = dpnmt(&[
        "rerank", "--model", p(&plain_model), "--nbest", p(&nbest), "--input", p(&test_src), "--annotated", p(&tagged),
        "--out", p(&reranked),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn grad_check_command_passes() {
    let out = dpnmt(&["grad-check", "--variant", "enc_to_dec", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("max relative error"));
    for v in ["baseline", "separate", "independent", "dec_to_enc", "joint"] {
        let (text, pass) = grad_check_cmd(v, 7).unwrap();
        assert!(pass, "{text}");
    }
}

#[test]
fn usage_and_config_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "seed = 1\nmodel.hiden = 32\n").unwrap();
    let out = dpnmt(&["gen-data", "--config", p(&cfg), "--out", p(&tmp.path().join("x"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.cfg:2") && err.contains("model.hiden"), "{err}");

    assert_eq!(dpnmt(&["gen-data", "--set", "nope=1", "--out", "x"]).status.code(), Some(1));
    assert_eq!(dpnmt(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(dpnmt(&["grad-check"]).status.code(), Some(1));
    assert_eq!(dpnmt(&["grad-check", "--variant", "bogus"]).status.code(), Some(1));
    assert_eq!(dpnmt(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_failures_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nothing");
    let out = dpnmt(&["evaluate", "--hyp", p(&missing), "--ref", p(&missing)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    // A corrupt checkpoint is a runtime failure.
    let data = tmp.path().join("data");
    ok(&with_small(&["gen-data", "--out", p(&data)]));
    let model = tmp.path().join("m");
    ok(&with_small(&["train", "--data", p(&data), "--out", p(&model), "--set", "train.max_steps=2"]));
    let ckpt = model.join("model.ckpt");
    let mut bytes = fs::read(&ckpt).unwrap();
    bytes.truncate(bytes.len() - 3);
    fs::write(&ckpt, bytes).unwrap();
    let src = data.join("test.src");
    let out = dpnmt(&["translate", "--model", p(&model), "--input", p(&src), "--out", p(&tmp.path().join("o")), "--greedy"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("truncated"));
}

#[test]
fn checkpoint_digest_mismatch_is_rejected_on_load() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&with_small(&["gen-data", "--out", p(&data)]));
    let model = tmp.path().join("m");
    ok(&with_small(&["train", "--data", p(&data), "--out", p(&model), "--set", "train.max_steps=2"]));
    // Same directory, different architecture requested at decode time.
    let out = dpnmt(&[
        "translate", "--model", p(&model), "--input", p(&data.join("test.src")), "--out", p(&tmp.path().join("o")),
        "--greedy", "--set", "model.hidden=13",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("digest mismatch"));

    let bytes = fs::read(model.join("model.ckpt")).unwrap();
    assert_eq!(&bytes[..6], checkpoint::MAGIC);
}
