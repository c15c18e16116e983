//! Case-insensitive corpus BLEU, dropped-pronoun F1 and the paired sign test.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct BleuReport {
    /// Percentage in `[0, 100]`.
    pub bleu: f64,
    pub precisions: [f64; MAX_ORDER],
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuReport {
    /// True when some order has no matches, which forces BLEU to 0.
    pub fn zero_precision(&self) -> bool {
        self.precisions.contains(&0.0)
    }

    pub fn summary(&self) -> String {
        let p: Vec<String> = self.precisions.iter().map(|p| format!("{:.1}", 100.0 * p)).collect();
        let mut s = format!(
            "BLEU = {:.2}, {} (BP={:.3}, hyp_len={}, ref_len={})",
            self.bleu,
            p.join("/"),
            self.brevity_penalty,
            self.hyp_len,
            self.ref_len
        );
        if self.zero_precision() {
            s.push_str(" [zero n-gram precision, unsmoothed]");
        }
        s
    }
}

fn fold(tokens: &[String]) -> Vec<String> {
    tokens.iter().map(|t| t.to_lowercase()).collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Clipped matches and totals per order for one segment.
fn segment_stats(hyp: &[String], reference: &[String]) -> ([usize; MAX_ORDER], [usize; MAX_ORDER]) {
    let (hyp, reference) = (fold(hyp), fold(reference));
    let mut matches = [0; MAX_ORDER];
    let mut totals = [0; MAX_ORDER];
    for n in 1..=MAX_ORDER {
        let h = ngram_counts(&hyp, n);
        let r = ngram_counts(&reference, n);
        matches[n - 1] = h.iter().map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0))).sum();
        totals[n - 1] = hyp.len().saturating_sub(n - 1);
    }
    (matches, totals)
}

fn brevity_penalty(hyp_len: usize, ref_len: usize) -> f64 {
    if hyp_len == 0 {
        0.0
    } else if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    }
}

fn report(matches: [usize; MAX_ORDER], totals: [usize; MAX_ORDER], hyp_len: usize, ref_len: usize, smooth_from: usize) -> BleuReport {
    let mut precisions = [0.0; MAX_ORDER];
    for n in 0..MAX_ORDER {
        let (m, t) = if n >= smooth_from {
            (matches[n] + 1, totals[n] + 1)
        } else {
            (matches[n], totals[n])
        };
        precisions[n] = if t == 0 { 0.0 } else { m as f64 / t as f64 };
    }
    let bp = brevity_penalty(hyp_len, ref_len);
    let bleu = if precisions.contains(&0.0) {
        0.0
    } else {
        let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
        100.0 * bp * log_mean.exp()
    };
    BleuReport {
        bleu,
        precisions,
        matches,
        totals,
        brevity_penalty: bp,
        hyp_len,
        ref_len,
    }
}

/// Corpus BLEU over single references, unsmoothed.
pub fn bleu<H: AsRef<[String]>, R: AsRef<[String]>>(hypotheses: &[H], references: &[R]) -> Result<BleuReport> {
    if hypotheses.len() != references.len() {
        return Err(Error::invalid(format!(
            "{} hypotheses for {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    let mut matches = [0; MAX_ORDER];
    let mut totals = [0; MAX_ORDER];
    let (mut hyp_len, mut ref_len) = (0, 0);
    for (h, r) in hypotheses.iter().zip(references) {
        let (m, t) = segment_stats(h.as_ref(), r.as_ref());
        for n in 0..MAX_ORDER {
            matches[n] += m[n];
            totals[n] += t[n];
        }
        hyp_len += h.as_ref().len();
        ref_len += r.as_ref().len();
    }
    Ok(report(matches, totals, hyp_len, ref_len, MAX_ORDER))
}

/// Segment BLEU with add-one smoothing on orders 2 to 4.
pub fn sentence_bleu(hypothesis: &[String], reference: &[String]) -> f64 {
    let (m, t) = segment_stats(hypothesis, reference);
    report(m, t, hypothesis.len(), reference.len(), 1).bleu
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum F1Mode {
    /// A prediction matches on sentence and position.
    Position,
    /// Sentence, position and word must all match.
    Word,
}

/// One predicted or gold dropped pronoun.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DpItem {
    pub sentence: usize,
    pub position: usize,
    pub word: Option<String>,
}

impl DpItem {
    pub fn new(sentence: usize, position: usize, word: Option<&str>) -> Self {
        DpItem {
            sentence,
            position,
            word: word.map(str::to_string),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct F1Report {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl F1Report {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        F1Report {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            precision,
            recall,
            f1,
        }
    }

    pub fn summary(&self) -> String {
        format!(
            "P={:.4} R={:.4} F1={:.4} (tp={} fp={} fn={})",
            self.precision, self.recall, self.f1, self.true_positives, self.false_positives, self.false_negatives
        )
    }
}

/// Exact-match F1 between two sets of dropped pronouns.
pub fn dp_f1(predicted: &[DpItem], gold: &[DpItem], mode: F1Mode) -> F1Report {
    let key = |d: &DpItem| match mode {
        F1Mode::Position => (d.sentence, d.position, None),
        F1Mode::Word => (d.sentence, d.position, d.word.clone()),
    };
    let p: BTreeSet<_> = predicted.iter().map(key).collect();
    let g: BTreeSet<_> = gold.iter().map(key).collect();
    let tp = p.intersection(&g).count();
    F1Report::from_counts(tp, p.len() - tp, g.len() - tp)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignTest {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// Two-sided exact binomial p-value at q = 1/2.
    pub p_value: f64,
    /// Every segment tied (`p_value` is then 1).
    pub all_tied: bool,
}

/// Paired sign test of `a` against `b`; ties are dropped.
pub fn sign_test(a: &[f64], b: &[f64]) -> Result<SignTest> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::invalid(format!(
            "sign test needs equal non-empty score lists, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let wins = a.iter().zip(b).filter(|(x, y)| x > y).count();
    let losses = a.iter().zip(b).filter(|(x, y)| x < y).count();
    let ties = a.len() - wins - losses;
    let n = wins + losses;
    if n == 0 {
        return Ok(SignTest {
            wins,
            losses,
            ties,
            p_value: 1.0,
            all_tied: true,
        });
    }
    let k = wins.min(losses);
    // log C(n, i) - n ln 2, accumulated for i = 0..=k.
    let ln2 = std::f64::consts::LN_2;
    let mut log_c = 0.0;
    let mut terms = Vec::with_capacity(k + 1);
    for i in 0..=k {
        if i > 0 {
            log_c += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        terms.push(log_c - n as f64 * ln2);
    }
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tail = max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln();
    Ok(SignTest {
        wins,
        losses,
        ties,
        p_value: (2.0 * tail.exp()).min(1.0),
        all_tied: false,
    })
}

/// Per-segment scores used by the sign test.
pub fn segment_scores<H: AsRef<[String]>, R: AsRef<[String]>>(hypotheses: &[H], references: &[R]) -> Result<Vec<f64>> {
    if hypotheses.len() != references.len() {
        return Err(Error::invalid("hypothesis and reference counts differ"));
    }
    Ok(hypotheses
        .iter()
        .zip(references)
        .map(|(h, r)| sentence_bleu(h.as_ref(), r.as_ref()))
        .collect())
}

pub const SEGMENT_METRIC: &str = "sentence BLEU, add-one smoothing on orders 2-4";

/// A system's scores as a TSV block: `metric<TAB>value` lines.
pub fn report_tsv(bleu: &BleuReport, f1: &[(&str, F1Report)]) -> String {
    let mut out = String::from("metric\tvalue\n");
    let mut row = |k: &str, v: f64| writeln!(out, "{k}\t{v}").expect("writing to a String");
    row("bleu", bleu.bleu);
    for (n, p) in bleu.precisions.iter().enumerate() {
        row(&format!("precision_{}", n + 1), *p);
    }
    row("brevity_penalty", bleu.brevity_penalty);
    row("hyp_len", bleu.hyp_len as f64);
    row("ref_len", bleu.ref_len as f64);
    for (name, r) in f1 {
        row(&format!("{name}_precision"), r.precision);
        row(&format!("{name}_recall"), r.recall);
        row(&format!("{name}_f1"), r.f1);
    }
    out
}
