use std::cmp::Ordering;

use crate::autodiff::{log_softmax_rows, Graph, ParameterStore, Var};
use crate::corpus::{BOS, EOS};
use crate::error::{Error, Result};
use crate::nmt::layers::Memory;
use crate::nmt::{encode, Decoder, ModelConfig, Padded, MAX_SENTENCE_LEN};

/// One translation hypothesis with its scores.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    /// Target ids, ending with EOS.
    pub tokens: Vec<usize>,
    /// Raw sum of token log-probabilities.
    pub log_likelihood: f64,
    /// `log R` against the annotated source, once scored.
    pub log_reconstruction: Option<f64>,
    /// Sum over markers of the predictor's best log-probability, once scored.
    pub log_dp: Option<f64>,
    /// Predicted pronoun id per marker of the annotated source (joint models).
    pub dp_words: Vec<usize>,
    /// Rerank score; equals `log_likelihood` until reranked.
    pub combined: f64,
    /// False when search hit the length limit and EOS was appended.
    pub finished: bool,
}

impl Candidate {
    pub fn new(tokens: Vec<usize>, log_likelihood: f64, finished: bool) -> Self {
        Candidate {
            tokens,
            log_likelihood,
            log_reconstruction: None,
            log_dp: None,
            dp_words: Vec::new(),
            combined: log_likelihood,
            finished,
        }
    }

    /// Length-normalized log-likelihood, the search score.
    pub fn normalized(&self) -> f64 {
        self.log_likelihood / self.tokens.len() as f64
    }
}

/// Beam output for one source sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct NBestList {
    pub source: Vec<usize>,
    /// Marker-annotated source used for reranking.
    pub annotated: Option<Vec<usize>>,
    /// Sorted by the active score: normalized log-likelihood after search,
    /// combined score after reranking.
    pub candidates: Vec<Candidate>,
}

impl NBestList {
    pub fn best(&self) -> &Candidate {
        &self.candidates[0]
    }
}

/// Output length limit for a source of `src_len` tokens (EOS included).
pub fn default_max_len(src_len: usize) -> usize {
    (2 * src_len + 10).min(MAX_SENTENCE_LEN + 1)
}

/// Search order: higher normalized score, then higher raw score, then the
/// lexicographically smaller token sequence.
fn order(a: (f64, f64), b: (f64, f64), lex: impl FnOnce() -> Ordering) -> Ordering {
    b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)).then_with(lex)
}

/// `copies` stacked copies of a batch-1 memory.
fn tile(g: &mut Graph<'_>, mem: &Memory, copies: usize) -> Result<Memory> {
    Ok(Memory {
        values: g.concat(&vec![mem.values; copies], 0)?,
        keys: g.concat(&vec![mem.keys; copies], 0)?,
        bias: g.concat(&vec![mem.bias; copies], 0)?,
        batch: copies,
        len: mem.len,
    })
}

/// The first `rows` entries of a tiled memory.
fn head(g: &mut Graph<'_>, mem: &Memory, rows: usize) -> Result<Memory> {
    if rows == mem.batch {
        return Ok(*mem);
    }
    Ok(Memory {
        values: g.slice(mem.values, 0, 0, rows * mem.len)?,
        keys: g.slice(mem.keys, 0, 0, rows * mem.len)?,
        bias: g.slice(mem.bias, 0, 0, rows)?,
        batch: rows,
        len: mem.len,
    })
}

struct Hyp {
    tokens: Vec<usize>,
    score: f64,
}

/// Beam search with length-normalized pruning. Finished hypotheses leave the
/// beam, which shrinks until `beam` have finished. If none finishes within
/// `max_len` steps the best live hypothesis is returned with EOS appended
/// and `finished = false`.
pub fn beam_search(
    store: &ParameterStore,
    cfg: &ModelConfig,
    src: &[usize],
    beam: usize,
    max_len: usize,
) -> Result<Vec<Candidate>> {
    if beam == 0 || max_len == 0 {
        return Err(Error::invalid("beam size and max length must be positive"));
    }
    let mut g = Graph::new(store);
    let padded = Padded::new(&[src])?;
    let enc = encode(&mut g, cfg, &padded)?;
    let dec = Decoder::new(cfg);
    let single = dec.memory(&mut g, &enc)?;
    let tiled = tile(&mut g, &single, beam)?;
    let mut state = dec.initial_state(&mut g, &enc)?;
    let mut live = vec![Hyp {
        tokens: Vec::new(),
        score: 0.0,
    }];
    let mut finished: Vec<Candidate> = Vec::new();

    for t in 0..max_len {
        let k = live.len();
        let mem = head(&mut g, &tiled, k)?;
        let prev: Vec<usize> = live.iter().map(|h| h.tokens.last().copied().unwrap_or(BOS)).collect();
        let e = dec.embed(&mut g, &prev)?;
        let step = dec.step(&mut g, &mem, state, e)?;
        let ro = dec.readout_input(&mut g, &step, e)?;
        let logits = dec.logits(&mut g, ro)?;
        let lp = log_softmax_rows(g.value(logits));
        let vocab = lp.cols();
        let len = (t + 1) as f64;

        let mut expansions: Vec<(f64, f64, usize, usize)> = Vec::with_capacity(k * vocab);
        for (p, h) in live.iter().enumerate() {
            for (tok, &l) in lp.row_slice(p).iter().enumerate() {
                let score = h.score + l;
                expansions.push((score / len, score, p, tok));
            }
        }
        let width = beam - finished.len();
        let cmp = |a: &(f64, f64, usize, usize), b: &(f64, f64, usize, usize)| {
            order((a.0, a.1), (b.0, b.1), || live[a.2].tokens.cmp(&live[b.2].tokens).then(a.3.cmp(&b.3)))
        };
        if expansions.len() > width {
            expansions.select_nth_unstable_by(width - 1, cmp);
            expansions.truncate(width);
        }
        expansions.sort_by(cmp);

        let mut next = Vec::with_capacity(width);
        let mut parents = Vec::with_capacity(width);
        for &(_, score, p, tok) in &expansions {
            let mut tokens = live[p].tokens.clone();
            tokens.push(tok);
            if tok == EOS {
                finished.push(Candidate::new(tokens, score, true));
            } else {
                next.push(Hyp { tokens, score });
                parents.push(p);
            }
        }
        if finished.len() >= beam || next.is_empty() {
            live = next;
            break;
        }
        state = gather(&mut g, step.state, &parents)?;
        live = next;
    }

    if finished.is_empty() {
        let best = live
            .into_iter()
            .min_by(|a, b| {
                let n = |h: &Hyp| (h.score / h.tokens.len() as f64, h.score);
                order(n(a), n(b), || a.tokens.cmp(&b.tokens))
            })
            .expect("the beam is never empty before the first hypothesis finishes");
        let mut tokens = best.tokens;
        tokens.push(EOS);
        return Ok(vec![Candidate::new(tokens, best.score, false)]);
    }
    finished.sort_by(|a, b| order((a.normalized(), a.log_likelihood), (b.normalized(), b.log_likelihood), || a.tokens.cmp(&b.tokens)));
    Ok(finished)
}

fn gather(g: &mut Graph<'_>, rows: Var, index: &[usize]) -> Result<Var> {
    if index.iter().enumerate().all(|(i, &p)| i == p) && index.len() == g.shape(rows)[0] {
        return Ok(rows);
    }
    g.embedding(rows, index)
}

/// Batched greedy decoding. Each step picks the token a beam of width one
/// would keep, so the two agree token for token.
pub fn greedy(store: &ParameterStore, cfg: &ModelConfig, sources: &[Vec<usize>]) -> Result<Vec<Candidate>> {
    let mut out = Vec::with_capacity(sources.len());
    for chunk in sources.chunks(GREEDY_CHUNK) {
        out.extend(greedy_batch(store, cfg, chunk)?);
    }
    Ok(out)
}

const GREEDY_CHUNK: usize = 64;

fn greedy_batch(store: &ParameterStore, cfg: &ModelConfig, sources: &[Vec<usize>]) -> Result<Vec<Candidate>> {
    let b = sources.len();
    if b == 0 {
        return Ok(Vec::new());
    }
    let mut g = Graph::new(store);
    let padded = Padded::new(sources)?;
    let enc = encode(&mut g, cfg, &padded)?;
    let dec = Decoder::new(cfg);
    let mem = dec.memory(&mut g, &enc)?;
    let mut state = dec.initial_state(&mut g, &enc)?;
    let limits: Vec<usize> = sources.iter().map(|s| default_max_len(s.len())).collect();
    let steps = limits.iter().copied().max().unwrap_or(0);
    let mut tokens: Vec<Vec<usize>> = vec![Vec::new(); b];
    let mut scores = vec![0.0; b];
    let mut done = vec![false; b];

    for t in 0..steps {
        let prev: Vec<usize> = tokens.iter().map(|s| s.last().copied().unwrap_or(BOS)).collect();
        let e = dec.embed(&mut g, &prev)?;
        let step = dec.step(&mut g, &mem, state, e)?;
        let ro = dec.readout_input(&mut g, &step, e)?;
        let logits = dec.logits(&mut g, ro)?;
        let lp = log_softmax_rows(g.value(logits));
        let len = (t + 1) as f64;
        for i in 0..b {
            if done[i] {
                continue;
            }
            let row = lp.row_slice(i);
            let mut best = 0;
            for tok in 1..row.len() {
                let (a, c) = (scores[i] + row[tok], scores[i] + row[best]);
                if order((a / len, a), (c / len, c), || Ordering::Equal) == Ordering::Less {
                    best = tok;
                }
            }
            scores[i] += row[best];
            tokens[i].push(best);
            if best == EOS || t + 1 == limits[i] {
                done[i] = true;
            }
        }
        if done.iter().all(|&d| d) {
            break;
        }
        state = step.state;
    }
    Ok(tokens
        .into_iter()
        .zip(scores)
        .map(|(mut t, s)| {
            let finished = t.last() == Some(&EOS);
            if !finished {
                t.push(EOS);
            }
            Candidate::new(t, s, finished)
        })
        .collect())
}
