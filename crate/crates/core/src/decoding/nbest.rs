use std::fmt::Write as _;

use super::search::{Candidate, NBestList};
use crate::corpus::{Vocabulary, EOS};
use crate::error::{Error, Result};

const SEP: &str = " ||| ";

fn fmt_score(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| v.to_string())
}

/// One line per candidate:
/// `sentence_index ||| tokens ||| loglik ||| logrec ||| combined`.
/// Tokens omit the final EOS; a missing reconstruction score is `-`.
pub fn write_nbest(lists: &[NBestList], vocab: &Vocabulary) -> String {
    let mut out = String::new();
    for (i, l) in lists.iter().enumerate() {
        for c in &l.candidates {
            writeln!(
                out,
                "{i}{SEP}{}{SEP}{}{SEP}{}{SEP}{}",
                vocab.decode(&c.tokens).join(" "),
                c.log_likelihood,
                fmt_score(c.log_reconstruction),
                c.combined
            )
            .expect("writing to a String");
        }
    }
    out
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field.trim().parse().map_err(|_| Error::Parse {
        path: "<n-best>".into(),
        line,
        message: format!("bad score {field:?}"),
    })
}

/// Parses an n-best file into `(sentence_index, candidate)` pairs in file order.
pub fn read_nbest(text: &str, vocab: &Vocabulary) -> Result<Vec<(usize, Candidate)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let lineno = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split("|||").collect();
        if fields.len() != 5 {
            return Err(Error::Parse {
                path: "<n-best>".into(),
                line: lineno,
                message: format!("expected 5 fields separated by |||, found {}", fields.len()),
            });
        }
        let idx = fields[0].trim().parse().map_err(|_| Error::Parse {
            path: "<n-best>".into(),
            line: lineno,
            message: format!("bad sentence index {:?}", fields[0].trim()),
        })?;
        let words: Vec<String> = fields[1].split_whitespace().map(str::to_string).collect();
        let tokens = vocab.encode_with_eos(&words);
        let loglik = parse_f64(fields[2], lineno)?;
        let logrec = match fields[3].trim() {
            "-" => None,
            f => Some(parse_f64(f, lineno)?),
        };
        let mut c = Candidate::new(tokens, loglik, true);
        c.log_reconstruction = logrec;
        c.combined = parse_f64(fields[4], lineno)?;
        debug_assert_eq!(c.tokens.last(), Some(&EOS));
        out.push((idx, c));
    }
    Ok(out)
}
