//! Plain-text corpus formats.
//!
//! * parallel text: one sentence per line, tokens separated by single spaces;
//! * alignment: space-separated `i-j` pairs per line (source `i`, target `j`);
//! * annotated source: tokens with literal `#DP#` markers, plus a sidecar TSV
//!   `line_index  marker_position  gold_word` (`-` when the word is unknown).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::annotate::{AnnotatedSentence, DpEntry, ParallelExample};
use crate::error::{Error, Result};
use crate::util::write_atomic;

pub const SIDECAR_HEADER: &str = "line_index\tmarker_position\tgold_word";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusPaths {
    pub source: PathBuf,
    pub target: PathBuf,
    pub alignment: Option<PathBuf>,
    /// The annotated source; its sidecar lives at [`sidecar_path`].
    pub annotated: Option<PathBuf>,
}

impl CorpusPaths {
    /// `<prefix>.src`, `<prefix>.tgt`, `<prefix>.align`, `<prefix>.ann`.
    pub fn with_prefix(prefix: impl AsRef<Path>) -> Self {
        let p = prefix.as_ref().as_os_str().to_owned();
        let ext = |e: &str| {
            let mut s = p.clone();
            s.push(e);
            PathBuf::from(s)
        };
        CorpusPaths {
            source: ext(".src"),
            target: ext(".tgt"),
            alignment: Some(ext(".align")),
            annotated: Some(ext(".ann")),
        }
    }

    /// Like [`with_prefix`](Self::with_prefix), keeping only the optional
    /// files that exist.
    pub fn existing_with_prefix(prefix: impl AsRef<Path>) -> Self {
        let mut p = Self::with_prefix(prefix);
        p.alignment = p.alignment.filter(|a| a.exists());
        p.annotated = p.annotated.filter(|a| a.exists());
        p
    }
}

pub fn sidecar_path(annotated: &Path) -> PathBuf {
    let mut s = annotated.as_os_str().to_owned();
    s.push(".tsv");
    PathBuf::from(s)
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn tokenize(line: &str) -> Vec<String> {
    line.split_whitespace().map(str::to_string).collect()
}

/// Reads one tokenized sentence per line. Lines are numbered from 1 in errors.
pub fn read_sentences(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = read(path)?;
    text.lines()
        .enumerate()
        .map(|(n, line)| {
            let toks = tokenize(line);
            if toks.is_empty() {
                Err(parse_err(path, n + 1, "empty sentence"))
            } else {
                Ok(toks)
            }
        })
        .collect()
}

pub fn write_sentences<S: AsRef<str>>(path: &Path, sentences: &[Vec<S>]) -> Result<()> {
    let mut out = String::new();
    for s in sentences {
        let line: Vec<&str> = s.iter().map(AsRef::as_ref).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn parse_alignment_line(line: &str) -> std::result::Result<Vec<(usize, usize)>, String> {
    line.split_whitespace()
        .map(|tok| {
            let (i, j) = tok
                .split_once('-')
                .ok_or_else(|| format!("malformed alignment token {tok:?}"))?;
            let i = i.parse().map_err(|_| format!("malformed alignment token {tok:?}"))?;
            let j = j.parse().map_err(|_| format!("malformed alignment token {tok:?}"))?;
            Ok((i, j))
        })
        .collect()
}

fn format_alignment(al: &[(usize, usize)]) -> String {
    al.iter().map(|(i, j)| format!("{i}-{j}")).collect::<Vec<_>>().join(" ")
}

/// Reads an annotated source file and its sidecar.
pub fn read_annotated(path: &Path) -> Result<Vec<AnnotatedSentence>> {
    let sentences = read_sentences(path)?;
    let side = sidecar_path(path);
    let mut entries: Vec<Vec<DpEntry>> = vec![Vec::new(); sentences.len()];
    let text = read(&side)?;
    for (n, line) in text.lines().enumerate() {
        if n == 0 {
            if line != SIDECAR_HEADER {
                return Err(parse_err(&side, 1, format!("expected header {SIDECAR_HEADER:?}")));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let [idx, pos, word] = cols[..] else {
            return Err(parse_err(&side, n + 1, "expected three tab-separated columns"));
        };
        let idx: usize = idx
            .parse()
            .map_err(|_| parse_err(&side, n + 1, format!("bad line index {idx:?}")))?;
        let pos: usize = pos
            .parse()
            .map_err(|_| parse_err(&side, n + 1, format!("bad marker position {pos:?}")))?;
        let list = entries
            .get_mut(idx)
            .ok_or_else(|| parse_err(&side, n + 1, format!("line index {idx} out of range")))?;
        list.push(if word == "-" {
            DpEntry::position_only(pos)
        } else {
            DpEntry::new(pos, word)
        });
    }
    sentences
        .into_iter()
        .zip(entries)
        .enumerate()
        .map(|(n, (toks, mut dps))| {
            dps.sort_by_key(|d| d.position);
            AnnotatedSentence::new(toks, dps).map_err(|e| parse_err(path, n + 1, e.to_string()))
        })
        .collect()
}

pub fn write_annotated(path: &Path, sentences: &[AnnotatedSentence]) -> Result<()> {
    let toks: Vec<Vec<String>> = sentences.iter().map(|s| s.tokens().to_vec()).collect();
    write_sentences(path, &toks)?;
    let mut side = String::from(SIDECAR_HEADER);
    side.push('\n');
    for (n, s) in sentences.iter().enumerate() {
        for d in s.dps() {
            let word = d.word.as_deref().unwrap_or("-");
            writeln!(side, "{n}\t{}\t{word}", d.position).expect("writing to a String");
        }
    }
    write_atomic(&sidecar_path(path), side.as_bytes())
}

pub fn load_corpus(paths: &CorpusPaths) -> Result<Vec<ParallelExample>> {
    let src = read_sentences(&paths.source)?;
    let tgt = read_sentences(&paths.target)?;
    if src.len() != tgt.len() {
        return Err(parse_err(
            &paths.target,
            src.len().min(tgt.len()) + 1,
            format!("{} source lines but {} target lines", src.len(), tgt.len()),
        ));
    }
    let mut out: Vec<ParallelExample> = src
        .into_iter()
        .zip(tgt)
        .map(|(source, target)| ParallelExample {
            source,
            target,
            alignment: None,
            gold: None,
        })
        .collect();

    if let Some(ap) = &paths.alignment {
        let text = read(ap)?;
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() != out.len() {
            return Err(parse_err(
                ap,
                lines.len().min(out.len()) + 1,
                format!("{} alignment lines for {} sentence pairs", lines.len(), out.len()),
            ));
        }
        for (n, (line, ex)) in lines.iter().zip(&mut out).enumerate() {
            let al = parse_alignment_line(line).map_err(|m| parse_err(ap, n + 1, m))?;
            if let Some(&(i, j)) = al
                .iter()
                .find(|&&(i, j)| i >= ex.source.len() || j >= ex.target.len())
            {
                return Err(parse_err(
                    ap,
                    n + 1,
                    format!(
                        "alignment {i}-{j} out of range for {} source and {} target tokens",
                        ex.source.len(),
                        ex.target.len()
                    ),
                ));
            }
            ex.alignment = Some(al);
        }
    }

    if let Some(annp) = &paths.annotated {
        let ann = read_annotated(annp)?;
        if ann.len() != out.len() {
            return Err(parse_err(
                annp,
                ann.len().min(out.len()) + 1,
                format!("{} annotated lines for {} sentence pairs", ann.len(), out.len()),
            ));
        }
        for (n, (a, ex)) in ann.into_iter().zip(&mut out).enumerate() {
            ex.gold = Some(a);
            ex.validate().map_err(|e| parse_err(annp, n + 1, e.to_string()))?;
        }
    }
    Ok(out)
}

/// Writes every component present in `examples`. Alignment/annotation files
/// are written only when a path is given, and then every example must carry
/// the component.
pub fn save_corpus(paths: &CorpusPaths, examples: &[ParallelExample]) -> Result<()> {
    let src: Vec<&Vec<String>> = examples.iter().map(|e| &e.source).collect();
    let tgt: Vec<&Vec<String>> = examples.iter().map(|e| &e.target).collect();
    write_sentences(&paths.source, &src.into_iter().cloned().collect::<Vec<_>>())?;
    write_sentences(&paths.target, &tgt.into_iter().cloned().collect::<Vec<_>>())?;
    if let Some(ap) = &paths.alignment {
        let mut out = String::new();
        for (n, e) in examples.iter().enumerate() {
            let al = e
                .alignment
                .as_ref()
                .ok_or_else(|| Error::invalid(format!("example {n} has no alignment to save")))?;
            out.push_str(&format_alignment(al));
            out.push('\n');
        }
        write_atomic(ap, out.as_bytes())?;
    }
    if let Some(annp) = &paths.annotated {
        let ann = examples
            .iter()
            .enumerate()
            .map(|(n, e)| {
                e.gold
                    .clone()
                    .ok_or_else(|| Error::invalid(format!("example {n} has no annotation to save")))
            })
            .collect::<Result<Vec<_>>>()?;
        write_annotated(annp, &ann)?;
    }
    Ok(())
}
