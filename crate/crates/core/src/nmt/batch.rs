use crate::autodiff::Tensor;
use crate::corpus::{EOS, PAD};
use crate::error::{Error, Result};

use super::config::MAX_SENTENCE_LEN;

/// One training or scoring instance, already mapped to ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedExample {
    /// Encoder input.
    pub src: Vec<usize>,
    /// Reference, ending with EOS.
    pub tgt: Vec<usize>,
    /// Sentence to reconstruct, if any.
    pub rec: Option<Vec<usize>>,
    /// `(marker index into rec, pronoun id)` per dropped pronoun.
    pub dps: Vec<(usize, usize)>,
}

impl EncodedExample {
    /// A pair without annotation.
    pub fn new(src: Vec<usize>, tgt: Vec<usize>) -> Self {
        EncodedExample {
            src,
            tgt,
            rec: None,
            dps: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.src.is_empty() || self.tgt.is_empty() {
            return Err(Error::invalid("empty source or target"));
        }
        if self.src.len() > MAX_SENTENCE_LEN || self.tgt.len() > MAX_SENTENCE_LEN + 1 {
            return Err(Error::invalid(format!(
                "sentence longer than {MAX_SENTENCE_LEN} tokens"
            )));
        }
        if self.tgt.last() != Some(&EOS) {
            return Err(Error::invalid("target must end with EOS"));
        }
        match &self.rec {
            Some(r) if r.is_empty() => return Err(Error::invalid("empty reconstruction target")),
            Some(r) => {
                if let Some(&(p, _)) = self.dps.iter().find(|(p, _)| *p >= r.len()) {
                    return Err(Error::invalid(format!(
                        "marker position {p} out of range for {} tokens",
                        r.len()
                    )));
                }
            }
            None if !self.dps.is_empty() => {
                return Err(Error::invalid("dropped-pronoun entries without a reconstruction target"))
            }
            None => {}
        }
        Ok(())
    }
}

/// Right-padded id sequences, one row per sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Padded {
    ids: Vec<Vec<usize>>,
    lens: Vec<usize>,
    max_len: usize,
}

impl Padded {
    pub fn new<S: AsRef<[usize]>>(seqs: &[S]) -> Result<Self> {
        if seqs.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let lens: Vec<usize> = seqs.iter().map(|s| s.as_ref().len()).collect();
        if lens.contains(&0) {
            return Err(Error::invalid("empty sequence in batch"));
        }
        let max_len = *lens.iter().max().expect("non-empty");
        let ids = seqs
            .iter()
            .map(|s| {
                let mut row = s.as_ref().to_vec();
                row.resize(max_len, PAD);
                row
            })
            .collect();
        Ok(Padded { ids, lens, max_len })
    }

    pub fn batch_size(&self) -> usize {
        self.lens.len()
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn lens(&self) -> &[usize] {
        &self.lens
    }

    pub fn row(&self, b: usize) -> &[usize] {
        &self.ids[b][..self.lens[b]]
    }

    /// Ids at step `t` for every sentence (PAD past the end).
    pub fn step(&self, t: usize) -> Vec<usize> {
        self.ids.iter().map(|r| r[t]).collect()
    }

    /// Ids in step-major order: entry `t * B + b`.
    pub fn step_major(&self) -> Vec<usize> {
        (0..self.max_len).flat_map(|t| self.step(t)).collect()
    }

    /// Ids in batch-major order: entry `b * T + t`.
    pub fn batch_major(&self) -> Vec<usize> {
        self.ids.iter().flatten().copied().collect()
    }

    /// True when every sentence is still active at step `t`.
    pub fn full(&self, t: usize) -> bool {
        self.lens.iter().all(|&l| t < l)
    }

    /// `[B, 1]` column of 1.0 for active sentences at step `t`, 0.0 otherwise.
    pub fn step_mask(&self, t: usize) -> Tensor {
        Tensor::column(self.lens.iter().map(|&l| if t < l { 1.0 } else { 0.0 }).collect())
    }

    /// `[B * T, 1]` batch-major activity mask.
    pub fn mask_column(&self) -> Tensor {
        let mut v = Vec::with_capacity(self.lens.len() * self.max_len);
        for &l in &self.lens {
            v.extend((0..self.max_len).map(|t| if t < l { 1.0 } else { 0.0 }));
        }
        Tensor::column(v)
    }

    /// `[B, T]` additive attention bias: 0 on real positions, a large negative
    /// value on padding.
    pub fn attention_bias(&self) -> Tensor {
        let mut v = Vec::with_capacity(self.lens.len() * self.max_len);
        for &l in &self.lens {
            v.extend((0..self.max_len).map(|t| if t < l { 0.0 } else { -1e30 }));
        }
        Tensor::new(self.lens.len(), self.max_len, v).expect("sized above")
    }
}

#[derive(Clone, Debug)]
pub struct Batch {
    pub src: Padded,
    pub tgt: Padded,
    pub rec: Option<Padded>,
    /// Per sentence, `(marker index, pronoun id)`.
    pub dps: Vec<Vec<(usize, usize)>>,
}

impl Batch {
    pub fn new(examples: &[&EncodedExample]) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        for e in examples {
            e.validate()?;
        }
        let with_rec = examples.iter().filter(|e| e.rec.is_some()).count();
        let rec = if with_rec == examples.len() {
            let r: Vec<&[usize]> = examples.iter().map(|e| e.rec.as_deref().expect("checked")).collect();
            Some(Padded::new(&r)?)
        } else if with_rec == 0 {
            None
        } else {
            return Err(Error::invalid("batch mixes annotated and unannotated examples"));
        };
        let src: Vec<&[usize]> = examples.iter().map(|e| e.src.as_slice()).collect();
        let tgt: Vec<&[usize]> = examples.iter().map(|e| e.tgt.as_slice()).collect();
        Ok(Batch {
            src: Padded::new(&src)?,
            tgt: Padded::new(&tgt)?,
            rec,
            dps: examples.iter().map(|e| e.dps.clone()).collect(),
        })
    }

    pub fn from_examples(examples: &[EncodedExample]) -> Result<Self> {
        let refs: Vec<&EncodedExample> = examples.iter().collect();
        Self::new(&refs)
    }

    pub fn size(&self) -> usize {
        self.src.batch_size()
    }
}
