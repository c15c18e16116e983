//! Reconstruction of the annotated source sentence from hidden states.
//!
//! The shared reconstructor reads encoder and decoder states through two
//! attention models. In the interactive wirings one model's context enters
//! the other's scorer as an extra additive term `c W_int`; with `W_int = 0`
//! both wirings reduce exactly to the independent one.

use rand::Rng;

use crate::autodiff::{Graph, Tensor, Var};
use crate::corpus::BOS;
use crate::error::{Error, Result};
use crate::nmt::layers::{keep_finished, sum_per_sentence, Affine, Attention, Gru, Memory, Registrar};
use crate::nmt::{
    mean_of_column, AttentionVariant, DecoderStates, EncoderStates, ModelConfig, Padded, ReconstructorMode,
};

pub const SHARED: &str = "rec";
pub const FROM_ENCODER: &str = "rec_enc";
pub const FROM_DECODER: &str = "rec_dec";

/// Adds reconstructor parameters for `cfg.mode` (nothing for `none`).
pub fn register_parameters(reg: &mut Registrar<'_, impl Rng>, cfg: &ModelConfig) -> Result<()> {
    let (e, h, v) = (cfg.emb, cfg.hidden, cfg.src_vocab);
    match cfg.mode {
        ReconstructorMode::None => Ok(()),
        ReconstructorMode::Shared => {
            let p = SHARED;
            reg.weight(format!("{p}.emb"), v, e)?;
            Affine::register(reg, &format!("{p}.init"), h, h)?;
            Attention::register(reg, &format!("{p}.att_enc"), h + e, 2 * h, h)?;
            Attention::register(reg, &format!("{p}.att_dec"), h + e, h, h)?;
            match cfg.attention {
                AttentionVariant::Independent => {}
                AttentionVariant::EncToDec => reg.weight(format!("{p}.int_dec"), 2 * h, h)?,
                AttentionVariant::DecToEnc => reg.weight(format!("{p}.int_enc"), h, h)?,
            }
            Gru::register(reg, &format!("{p}.gru"), e + 3 * h, h)?;
            Affine::register(reg, &format!("{p}.out"), e + h + 3 * h, v)
        }
        ReconstructorMode::Separate => {
            for (p, init_in, mem) in [(FROM_ENCODER, 2 * h, 2 * h), (FROM_DECODER, h, h)] {
                reg.weight(format!("{p}.emb"), v, e)?;
                Affine::register(reg, &format!("{p}.init"), init_in, h)?;
                Attention::register(reg, &format!("{p}.att"), h + e, mem, h)?;
                Gru::register(reg, &format!("{p}.gru"), e + mem, h)?;
                Affine::register(reg, &format!("{p}.out"), e + h + mem, v)?;
            }
            Ok(())
        }
    }
}

/// Attention weights and contexts over one state sequence, one node per step.
#[derive(Clone, Debug, Default)]
pub struct AttentionTrace {
    /// `[B, len(memory)]` rows.
    pub weights: Vec<Var>,
    /// `[B, D]` contexts.
    pub contexts: Vec<Var>,
}

/// One reconstructor pass over `x̂`.
#[derive(Clone, Debug)]
pub struct ReconstructionOutput {
    /// `h^rec_t`, one `[B, H]` node per annotated-source position.
    pub states: Vec<Var>,
    /// `states` stacked batch-major, `[B * T, H]`.
    pub values: Var,
    pub encoder_attention: Option<AttentionTrace>,
    pub decoder_attention: Option<AttentionTrace>,
    /// Masked `-log p(x̂_t)`, `[B * T, 1]` batch-major.
    pub token_nll: Var,
    /// `-log R` per sentence, `[B, 1]`.
    pub nll: Var,
}

impl ReconstructionOutput {
    /// Per-sentence lists of `log p(x̂_t | ...)`.
    pub fn token_log_probs(&self, g: &Graph<'_>, rec: &Padded) -> Vec<Vec<f64>> {
        let v = g.value(self.token_nll).data();
        let t_max = rec.max_len();
        (0..rec.batch_size())
            .map(|b| (0..rec.lens()[b]).map(|t| -v[b * t_max + t]).collect())
            .collect()
    }

    /// Per-sentence `log R`.
    pub fn log_scores(&self, g: &Graph<'_>) -> Vec<f64> {
        g.value(self.nll).data().iter().map(|x| -x).collect()
    }
}

#[derive(Clone, Debug)]
pub enum Reconstruction {
    Shared(ReconstructionOutput),
    Separate {
        from_encoder: ReconstructionOutput,
        from_decoder: ReconstructionOutput,
        /// Sum of both `-log R`, `[B, 1]`.
        nll: Var,
    },
}

impl Reconstruction {
    /// Combined `-log R` per sentence, `[B, 1]`.
    pub fn nll(&self) -> Var {
        match self {
            Reconstruction::Shared(o) => o.nll,
            Reconstruction::Separate { nll, .. } => *nll,
        }
    }

    pub fn log_scores(&self, g: &Graph<'_>) -> Vec<f64> {
        g.value(self.nll()).data().iter().map(|x| -x).collect()
    }

    pub fn shared(&self) -> Option<&ReconstructionOutput> {
        match self {
            Reconstruction::Shared(o) => Some(o),
            Reconstruction::Separate { .. } => None,
        }
    }
}

fn check(rec: &Padded, cfg: &ModelConfig, enc: &EncoderStates, dec: &DecoderStates) -> Result<()> {
    let b = rec.batch_size();
    if enc.bias.rows() != b || dec.bias.rows() != b {
        return Err(Error::ShapeMismatch {
            op: "reconstruct",
            shapes: vec![vec![b], vec![enc.bias.rows()], vec![dec.bias.rows()]],
        });
    }
    for i in 0..b {
        if let Some(&bad) = rec.row(i).iter().find(|&&t| t >= cfg.src_vocab) {
            return Err(Error::invalid(format!(
                "annotated-source id {bad} out of range for vocabulary of {}",
                cfg.src_vocab
            )));
        }
    }
    Ok(())
}

/// Step inputs: embeddings of `BOS, x̂_0, ..., x̂_{T-2}`, step-major.
fn input_embeddings(g: &mut Graph<'_>, table: &str, rec: &Padded) -> Result<Var> {
    let b = rec.batch_size();
    let mut ids = vec![BOS; b];
    for t in 0..rec.max_len().saturating_sub(1) {
        ids.extend(rec.step(t));
    }
    let table = g.param(table)?;
    g.embedding(table, &ids)
}

fn finish(
    g: &mut Graph<'_>,
    out: &Affine,
    rec: &Padded,
    states: Vec<Var>,
    readout: &[Var],
    encoder_attention: Option<AttentionTrace>,
    decoder_attention: Option<AttentionTrace>,
) -> Result<ReconstructionOutput> {
    let (b, t_max) = (rec.batch_size(), rec.max_len());
    let stacked = g.interleave(readout)?;
    let logits = out.apply(g, stacked)?;
    let raw = g.softmax_nll(logits, &rec.batch_major())?;
    let mask = g.constant(rec.mask_column());
    let token_nll = g.mul(raw, mask)?;
    let nll = sum_per_sentence(g, token_nll, b, t_max)?;
    let values = g.interleave(&states)?;
    Ok(ReconstructionOutput {
        states,
        values,
        encoder_attention,
        decoder_attention,
        token_nll,
        nll,
    })
}

/// The shared reconstructor over `x̂` (`rec`).
pub fn reconstruct_shared(
    g: &mut Graph<'_>,
    cfg: &ModelConfig,
    variant: AttentionVariant,
    rec: &Padded,
    enc: &EncoderStates,
    dec: &DecoderStates,
) -> Result<ReconstructionOutput> {
    check(rec, cfg, enc, dec)?;
    let p = SHARED;
    let (b, h) = (rec.batch_size(), cfg.hidden);
    let att_enc = Attention::new(&format!("{p}.att_enc"));
    let att_dec = Attention::new(&format!("{p}.att_dec"));
    let gru = Gru::new(&format!("{p}.gru"), h);
    let out = Affine::new(&format!("{p}.out"));
    let int = match variant {
        AttentionVariant::Independent => None,
        AttentionVariant::EncToDec => Some(g.param(&format!("{p}.int_dec"))?),
        AttentionVariant::DecToEnc => Some(g.param(&format!("{p}.int_enc"))?),
    };

    let mem_enc = att_enc.memory(g, enc.values, &enc.bias)?;
    let mem_dec = att_dec.memory(g, dec.values, &dec.bias)?;
    let emb = input_embeddings(g, &format!("{p}.emb"), rec)?;
    let init = Affine::new(&format!("{p}.init")).apply(g, dec.last)?;
    let mut state = g.tanh(init);

    let mut trace_enc = AttentionTrace::default();
    let mut trace_dec = AttentionTrace::default();
    let mut states = Vec::with_capacity(rec.max_len());
    let mut readout = Vec::with_capacity(rec.max_len());
    for t in 0..rec.max_len() {
        let e = g.slice(emb, 0, t * b, b)?;
        let (a_enc, c_enc, a_dec, c_dec) = match variant {
            AttentionVariant::Independent => {
                let (a_enc, c_enc) = attend(g, &att_enc, &mem_enc, state, e, None)?;
                let (a_dec, c_dec) = attend(g, &att_dec, &mem_dec, state, e, None)?;
                (a_enc, c_enc, a_dec, c_dec)
            }
            AttentionVariant::EncToDec => {
                let (a_enc, c_enc) = attend(g, &att_enc, &mem_enc, state, e, None)?;
                let (a_dec, c_dec) = attend(g, &att_dec, &mem_dec, state, e, Some((c_enc, int.expect("set"))))?;
                (a_enc, c_enc, a_dec, c_dec)
            }
            AttentionVariant::DecToEnc => {
                let (a_dec, c_dec) = attend(g, &att_dec, &mem_dec, state, e, None)?;
                let (a_enc, c_enc) = attend(g, &att_enc, &mem_enc, state, e, Some((c_dec, int.expect("set"))))?;
                (a_enc, c_enc, a_dec, c_dec)
            }
        };
        let input = g.concat(&[e, c_enc, c_dec], 1)?;
        let gx = gru.project(g, input)?;
        let next = gru.step(g, gx, state)?;
        state = keep_finished(g, next, state, rec, t)?;
        states.push(state);
        readout.push(g.concat(&[e, state, c_enc, c_dec], 1)?);
        trace_enc.weights.push(a_enc);
        trace_enc.contexts.push(c_enc);
        trace_dec.weights.push(a_dec);
        trace_dec.contexts.push(c_dec);
    }
    finish(g, &out, rec, states, &readout, Some(trace_enc), Some(trace_dec))
}

fn attend(
    g: &mut Graph<'_>,
    att: &Attention,
    mem: &Memory,
    state: Var,
    emb: Var,
    fed: Option<(Var, Var)>,
) -> Result<(Var, Var)> {
    let mut q = att.query(g, &[state, emb])?;
    if let Some((context, w_int)) = fed {
        let extra = g.matmul(context, w_int)?;
        q = g.add(q, extra)?;
    }
    att.attend(g, mem, q)
}

/// A single-source reconstructor with its own parameters under `prefix`.
fn reconstruct_single(
    g: &mut Graph<'_>,
    cfg: &ModelConfig,
    prefix: &str,
    rec: &Padded,
    memory_values: Var,
    memory_bias: &Tensor,
    init_from: Var,
) -> Result<ReconstructionOutput> {
    let (b, h) = (rec.batch_size(), cfg.hidden);
    let att = Attention::new(&format!("{prefix}.att"));
    let gru = Gru::new(&format!("{prefix}.gru"), h);
    let out = Affine::new(&format!("{prefix}.out"));
    let mem = att.memory(g, memory_values, memory_bias)?;
    let emb = input_embeddings(g, &format!("{prefix}.emb"), rec)?;
    let init = Affine::new(&format!("{prefix}.init")).apply(g, init_from)?;
    let mut state = g.tanh(init);
    let mut trace = AttentionTrace::default();
    let mut states = Vec::with_capacity(rec.max_len());
    let mut readout = Vec::with_capacity(rec.max_len());
    for t in 0..rec.max_len() {
        let e = g.slice(emb, 0, t * b, b)?;
        let (a, c) = attend(g, &att, &mem, state, e, None)?;
        let input = g.concat(&[e, c], 1)?;
        let gx = gru.project(g, input)?;
        let next = gru.step(g, gx, state)?;
        state = keep_finished(g, next, state, rec, t)?;
        states.push(state);
        readout.push(g.concat(&[e, state, c], 1)?);
        trace.weights.push(a);
        trace.contexts.push(c);
    }
    let (enc_trace, dec_trace) = if prefix == FROM_ENCODER {
        (Some(trace), None)
    } else {
        (None, Some(trace))
    };
    finish(g, &out, rec, states, &readout, enc_trace, dec_trace)
}

/// Two independent reconstructors: one reads only encoder states (and is
/// initialized from the first encoder state), the other only decoder states.
pub fn reconstruct_separate(
    g: &mut Graph<'_>,
    cfg: &ModelConfig,
    rec: &Padded,
    enc: &EncoderStates,
    dec: &DecoderStates,
) -> Result<(ReconstructionOutput, ReconstructionOutput)> {
    check(rec, cfg, enc, dec)?;
    let first = enc.steps[0];
    let from_encoder = reconstruct_single(g, cfg, FROM_ENCODER, rec, enc.values, &enc.bias, first)?;
    let from_decoder = reconstruct_single(g, cfg, FROM_DECODER, rec, dec.values, &dec.bias, dec.last)?;
    Ok((from_encoder, from_decoder))
}

/// Dispatches on `cfg.mode`; `None` for models without a reconstructor.
pub fn reconstruct(
    g: &mut Graph<'_>,
    cfg: &ModelConfig,
    rec: &Padded,
    enc: &EncoderStates,
    dec: &DecoderStates,
) -> Result<Option<Reconstruction>> {
    match cfg.mode {
        ReconstructorMode::None => Ok(None),
        ReconstructorMode::Shared => Ok(Some(Reconstruction::Shared(reconstruct_shared(
            g,
            cfg,
            cfg.attention,
            rec,
            enc,
            dec,
        )?))),
        ReconstructorMode::Separate => {
            let (from_encoder, from_decoder) = reconstruct_separate(g, cfg, rec, enc, dec)?;
            let nll = g.add(from_encoder.nll, from_decoder.nll)?;
            Ok(Some(Reconstruction::Separate {
                from_encoder,
                from_decoder,
                nll,
            }))
        }
    }
}

/// Mean over sentences of `-log R`.
pub fn reconstruction_loss(g: &mut Graph<'_>, reconstruction: &Reconstruction) -> Result<Var> {
    mean_of_column(g, reconstruction.nll())
}
