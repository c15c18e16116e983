use std::collections::{BTreeMap, BTreeSet};

use super::vocab::{DP_MARKER, UNK_TOKEN};
use crate::error::{Error, Result};

/// One dropped pronoun: the index of its `#DP#` marker and, when known, the
/// source-language pronoun it stands for.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DpEntry {
    pub position: usize,
    pub word: Option<String>,
}

impl DpEntry {
    pub fn new(position: usize, word: impl Into<String>) -> Self {
        DpEntry {
            position,
            word: Some(word.into()),
        }
    }

    pub fn position_only(position: usize) -> Self {
        DpEntry { position, word: None }
    }
}

/// A source sentence with `#DP#` markers and one entry per marker.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnnotatedSentence {
    tokens: Vec<String>,
    dps: Vec<DpEntry>,
}

impl AnnotatedSentence {
    /// Validates that `dps` lists exactly the marker positions of `tokens`,
    /// in increasing order.
    pub fn new(tokens: Vec<String>, dps: Vec<DpEntry>) -> Result<Self> {
        let markers: Vec<usize> = marker_positions(&tokens);
        let listed: Vec<usize> = dps.iter().map(|d| d.position).collect();
        if markers != listed {
            return Err(Error::invalid(format!(
                "DP entries at {listed:?} do not match marker positions {markers:?}"
            )));
        }
        if tokens.len() == markers.len() {
            return Err(Error::invalid("annotated sentence has no plain tokens"));
        }
        Ok(AnnotatedSentence { tokens, dps })
    }

    /// A sentence with no dropped pronouns.
    pub fn unannotated(tokens: Vec<String>) -> Result<Self> {
        Self::new(tokens, Vec::new())
    }

    /// Inserts markers into `plain` at boundary `slots` (slot `k` means before
    /// plain token `k`). Slots must be non-decreasing; equal slots keep their
    /// given order.
    pub fn from_slots(plain: &[String], slots: &[(usize, Option<String>)]) -> Result<Self> {
        if plain.is_empty() {
            return Err(Error::invalid("cannot annotate an empty sentence"));
        }
        if slots.windows(2).any(|w| w[0].0 > w[1].0) {
            return Err(Error::invalid("marker slots must be non-decreasing"));
        }
        if let Some((s, _)) = slots.iter().find(|(s, _)| *s > plain.len()) {
            return Err(Error::invalid(format!(
                "slot {s} out of range for {} tokens",
                plain.len()
            )));
        }
        let mut tokens = Vec::with_capacity(plain.len() + slots.len());
        let mut dps = Vec::with_capacity(slots.len());
        let mut pending = slots.iter().peekable();
        for k in 0..=plain.len() {
            while let Some((_, word)) = pending.next_if(|(s, _)| *s == k) {
                dps.push(DpEntry {
                    position: tokens.len(),
                    word: word.clone(),
                });
                tokens.push(DP_MARKER.to_string());
            }
            if let Some(t) = plain.get(k) {
                tokens.push(t.clone());
            }
        }
        Self::new(tokens, dps)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn dps(&self) -> &[DpEntry] {
        &self.dps
    }

    pub fn dp_count(&self) -> usize {
        self.dps.len()
    }

    pub fn marker_positions(&self) -> Vec<usize> {
        self.dps.iter().map(|d| d.position).collect()
    }

    /// Removes the markers; entries are re-indexed to plain boundary slots.
    pub fn strip(&self) -> (Vec<String>, Vec<DpEntry>) {
        let plain: Vec<String> = self
            .tokens
            .iter()
            .filter(|t| *t != DP_MARKER)
            .cloned()
            .collect();
        let dps = self
            .dps
            .iter()
            .enumerate()
            .map(|(i, d)| DpEntry {
                position: d.position - i,
                word: d.word.clone(),
            })
            .collect();
        (plain, dps)
    }

    /// The marker positions re-expressed as plain boundary slots.
    pub fn slots(&self) -> Vec<usize> {
        self.dps.iter().enumerate().map(|(i, d)| d.position - i).collect()
    }

    /// Tokens with each marker replaced by its DP word (`<unk>` when unknown).
    pub fn with_words(&self) -> Vec<String> {
        let mut out = self.tokens.clone();
        for d in &self.dps {
            out[d.position] = d.word.clone().unwrap_or_else(|| UNK_TOKEN.to_string());
        }
        out
    }

    /// Same markers, words dropped.
    pub fn positions_only(&self) -> AnnotatedSentence {
        AnnotatedSentence {
            tokens: self.tokens.clone(),
            dps: self
                .dps
                .iter()
                .map(|d| DpEntry::position_only(d.position))
                .collect(),
        }
    }
}

/// Strips markers from an annotated sentence; see [`AnnotatedSentence::strip`].
pub fn strip_annotation(sentence: &AnnotatedSentence) -> (Vec<String>, Vec<DpEntry>) {
    sentence.strip()
}

pub fn marker_positions<S: AsRef<str>>(tokens: &[S]) -> Vec<usize> {
    tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| t.as_ref() == DP_MARKER)
        .map(|(i, _)| i)
        .collect()
}

/// A sentence pair with optional word alignment and gold DP annotation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParallelExample {
    pub source: Vec<String>,
    pub target: Vec<String>,
    /// `(source index, target index)` pairs.
    pub alignment: Option<Vec<(usize, usize)>>,
    pub gold: Option<AnnotatedSentence>,
}

impl ParallelExample {
    pub fn new(source: Vec<String>, target: Vec<String>) -> Result<Self> {
        let ex = ParallelExample {
            source,
            target,
            alignment: None,
            gold: None,
        };
        ex.validate()?;
        Ok(ex)
    }

    pub fn validate(&self) -> Result<()> {
        if self.source.is_empty() || self.target.is_empty() {
            return Err(Error::invalid("empty sentence in parallel example"));
        }
        if let Some(al) = &self.alignment {
            if let Some(&(i, j)) = al
                .iter()
                .find(|&&(i, j)| i >= self.source.len() || j >= self.target.len())
            {
                return Err(Error::invalid(format!(
                    "alignment pair {i}-{j} out of range for {}x{} tokens",
                    self.source.len(),
                    self.target.len()
                )));
            }
        }
        if let Some(gold) = &self.gold {
            if gold.strip().0 != self.source {
                return Err(Error::invalid("gold annotation does not match the source sentence"));
            }
        }
        Ok(())
    }
}

/// Target-language pronouns and the source pronoun each maps to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PronounLexicon {
    map: BTreeMap<String, String>,
    /// Pronouns recognised on the target side that have no source counterpart.
    unmapped: BTreeSet<String>,
}

impl PronounLexicon {
    pub fn new(map: BTreeMap<String, String>) -> Result<Self> {
        Self::with_unmapped(map, BTreeSet::new())
    }

    pub fn with_unmapped(map: BTreeMap<String, String>, unmapped: BTreeSet<String>) -> Result<Self> {
        if map.is_empty() {
            return Err(Error::invalid("pronoun lexicon is empty"));
        }
        if let Some(k) = map.keys().chain(&unmapped).find(|k| k.to_lowercase() != **k) {
            return Err(Error::invalid(format!("lexicon key {k:?} is not lowercase")));
        }
        Ok(PronounLexicon { map, unmapped })
    }

    pub fn is_pronoun(&self, target_token: &str) -> bool {
        let t = target_token.to_lowercase();
        self.map.contains_key(&t) || self.unmapped.contains(&t)
    }

    pub fn source_for(&self, target_token: &str) -> Option<&str> {
        self.map.get(&target_token.to_lowercase()).map(String::as_str)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Distinct source pronouns, sorted.
    pub fn source_pronouns(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.map.values().collect();
        set.into_iter().cloned().collect()
    }

    /// `target<TAB>source` per line; `-` as source marks an unmapped pronoun.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.map {
            out.push_str(&format!("{k}\t{v}\n"));
        }
        for k in &self.unmapped {
            out.push_str(&format!("{k}\t-\n"));
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut unmapped = BTreeSet::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('\t')
                .ok_or_else(|| Error::invalid(format!("lexicon line {}: expected two tab-separated columns", n + 1)))?;
            if v == "-" {
                unmapped.insert(k.to_string());
            } else {
                map.insert(k.to_string(), v.to_string());
            }
        }
        Self::with_unmapped(map, unmapped)
    }
}

/// Marks target pronouns that have no aligned source token as dropped.
///
/// A dropped pronoun at target index `j` is placed right after the source
/// token aligned to the nearest aligned target token left of `j` (the
/// right-most such source token when there are several), or at slot 0 when
/// nothing to the left is aligned.
pub fn annotate_from_alignment(example: &ParallelExample, lexicon: &PronounLexicon) -> Result<AnnotatedSentence> {
    let alignment = example
        .alignment
        .as_ref()
        .ok_or_else(|| Error::invalid("annotation requires a word alignment"))?;
    example.validate()?;

    let mut aligned_source: Vec<Option<usize>> = vec![None; example.target.len()];
    for &(i, j) in alignment {
        let slot = &mut aligned_source[j];
        *slot = Some(slot.map_or(i, |s| s.max(i)));
    }

    let mut slots: Vec<(usize, Option<String>)> = Vec::new();
    for (j, tok) in example.target.iter().enumerate() {
        if aligned_source[j].is_some() || !lexicon.is_pronoun(tok) {
            continue;
        }
        let slot = aligned_source[..j]
            .iter()
            .rev()
            .find_map(|s| *s)
            .map_or(0, |i| i + 1);
        let word = lexicon.source_for(tok).unwrap_or(UNK_TOKEN).to_string();
        slots.push((slot, Some(word)));
    }
    // Stable: pronouns sharing a slot stay in target order.
    slots.sort_by_key(|(s, _)| *s);
    AnnotatedSentence::from_slots(&example.source, &slots)
}
