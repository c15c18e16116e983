use rand::Rng;

use crate::autodiff::{Graph, Tensor, Var};
use crate::corpus::BOS;
use crate::error::{Error, Result};

use super::batch::Padded;
use super::config::ModelConfig;
use super::layers::{keep_finished, sum_per_sentence, Affine, Attention, Gru, Memory, Registrar};

/// Adds the encoder–decoder parameters (all in the registrar's partition).
pub fn register_parameters(reg: &mut Registrar<'_, impl Rng>, cfg: &ModelConfig) -> Result<()> {
    let (e, h) = (cfg.emb, cfg.hidden);
    reg.weight("enc.emb".into(), cfg.src_vocab, e)?;
    Gru::register(reg, "enc.fwd", e, h)?;
    Gru::register(reg, "enc.bwd", e, h)?;
    reg.weight("dec.emb".into(), cfg.tgt_vocab, e)?;
    Affine::register(reg, "dec.init", h, h)?;
    Attention::register(reg, "dec.att", h + e, 2 * h, h)?;
    Gru::register(reg, "dec.gru", e + 2 * h, h)?;
    Affine::register(reg, "dec.out", h + 2 * h + e, cfg.tgt_vocab)
}

/// Encoder states for a padded batch.
#[derive(Clone, Debug)]
pub struct EncoderStates {
    /// One `[B, 2H]` node per source position (forward ++ backward).
    pub steps: Vec<Var>,
    /// The steps stacked batch-major, `[B * J, 2H]`.
    pub values: Var,
    /// `[B, J]` attention bias masking padding.
    pub bias: Tensor,
    /// Backward-direction state at position 0, `[B, H]`.
    pub backward_first: Var,
}

impl EncoderStates {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

fn check_ids(ids: &Padded, vocab: usize, what: &str) -> Result<()> {
    for b in 0..ids.batch_size() {
        if let Some(&bad) = ids.row(b).iter().find(|&&i| i >= vocab) {
            return Err(Error::invalid(format!(
                "{what} token id {bad} out of range for vocabulary of {vocab}"
            )));
        }
    }
    Ok(())
}

/// Bidirectional GRU over the source batch.
pub fn encode(g: &mut Graph<'_>, cfg: &ModelConfig, src: &Padded) -> Result<EncoderStates> {
    check_ids(src, cfg.src_vocab, "source")?;
    let (b, j, h) = (src.batch_size(), src.max_len(), cfg.hidden);
    let table = g.param("enc.emb")?;
    let emb = g.embedding(table, &src.step_major())?;
    let fwd = Gru::new("enc.fwd", h);
    let bwd = Gru::new("enc.bwd", h);
    let gx_f = fwd.project(g, emb)?;
    let gx_b = bwd.project(g, emb)?;

    let zero = g.constant(Tensor::zeros(b, h));
    let mut forward = Vec::with_capacity(j);
    let mut state = zero;
    for t in 0..j {
        let gx = g.slice(gx_f, 0, t * b, b)?;
        let next = fwd.step(g, gx, state)?;
        state = keep_finished(g, next, state, src, t)?;
        forward.push(state);
    }
    // Backward: padded tail steps keep the zero state, so each sentence
    // effectively starts at its own last token.
    let mut backward = vec![zero; j];
    state = zero;
    for t in (0..j).rev() {
        let gx = g.slice(gx_b, 0, t * b, b)?;
        let next = bwd.step(g, gx, state)?;
        state = keep_finished(g, next, state, src, t)?;
        backward[t] = state;
    }
    let steps = forward
        .iter()
        .zip(&backward)
        .map(|(&f, &r)| g.concat(&[f, r], 1))
        .collect::<Result<Vec<_>>>()?;
    let values = g.interleave(&steps)?;
    Ok(EncoderStates {
        steps,
        values,
        bias: src.attention_bias(),
        backward_first: backward[0],
    })
}

/// The decoder's parameter names, shared by teacher forcing and search.
#[derive(Clone, Debug)]
pub struct Decoder {
    init: Affine,
    att: Attention,
    gru: Gru,
    out: Affine,
}

/// One decoder transition.
#[derive(Clone, Copy, Debug)]
pub struct DecoderStep {
    pub state: Var,
    pub context: Var,
    pub weights: Var,
}

impl Decoder {
    pub fn new(cfg: &ModelConfig) -> Self {
        Decoder {
            init: Affine::new("dec.init"),
            att: Attention::new("dec.att"),
            gru: Gru::new("dec.gru", cfg.hidden),
            out: Affine::new("dec.out"),
        }
    }

    /// `s_0 = tanh(W h_bwd_0 + b)`.
    pub fn initial_state(&self, g: &mut Graph<'_>, enc: &EncoderStates) -> Result<Var> {
        let a = self.init.apply(g, enc.backward_first)?;
        Ok(g.tanh(a))
    }

    pub fn memory(&self, g: &mut Graph<'_>, enc: &EncoderStates) -> Result<Memory> {
        self.att.memory(g, enc.values, &enc.bias)
    }

    pub fn embed(&self, g: &mut Graph<'_>, ids: &[usize]) -> Result<Var> {
        let table = g.param("dec.emb")?;
        g.embedding(table, ids)
    }

    /// Attends with `(s_{i-1}, e(y_{i-1}))`, then updates the GRU on `[e; c]`.
    pub fn step(&self, g: &mut Graph<'_>, mem: &Memory, prev: Var, prev_emb: Var) -> Result<DecoderStep> {
        let q = self.att.query(g, &[prev, prev_emb])?;
        let (weights, context) = self.att.attend(g, mem, q)?;
        let input = g.concat(&[prev_emb, context], 1)?;
        let gx = self.gru.project(g, input)?;
        let state = self.gru.step(g, gx, prev)?;
        Ok(DecoderStep {
            state,
            context,
            weights,
        })
    }

    /// Readout input `[s_i; c_i; e(y_{i-1})]`.
    pub fn readout_input(&self, g: &mut Graph<'_>, step: &DecoderStep, prev_emb: Var) -> Result<Var> {
        g.concat(&[step.state, step.context, prev_emb], 1)
    }

    pub fn logits(&self, g: &mut Graph<'_>, readout_input: Var) -> Result<Var> {
        self.out.apply(g, readout_input)
    }
}

/// Teacher-forced decoder pass.
#[derive(Clone, Debug)]
pub struct DecoderStates {
    /// One `[B, H]` node per target position.
    pub steps: Vec<Var>,
    /// The steps stacked batch-major, `[B * I, H]`.
    pub values: Var,
    /// `[B, I]` attention bias masking padding.
    pub bias: Tensor,
    /// `[B, I]` attention weights over the source, one node per step.
    pub attention: Vec<Var>,
    /// State after each sentence's final token, `[B, H]`.
    pub last: Var,
    /// Output logits, `[B * I, |V_y|]` batch-major.
    pub logits: Var,
    /// Masked per-token negative log-probabilities, `[B * I, 1]` batch-major.
    pub token_nll: Var,
    /// Per-sentence negative log-likelihood, `[B, 1]`.
    pub nll: Var,
}

impl DecoderStates {
    /// Per-sentence lists of `log p(y_i | y_<i, x)`.
    pub fn token_log_probs(&self, g: &Graph<'_>, tgt: &Padded) -> Vec<Vec<f64>> {
        let v = g.value(self.token_nll).data();
        let i_max = tgt.max_len();
        (0..tgt.batch_size())
            .map(|b| (0..tgt.lens()[b]).map(|i| -v[b * i_max + i]).collect())
            .collect()
    }
}

pub fn decode_teacher_forced(
    g: &mut Graph<'_>,
    cfg: &ModelConfig,
    enc: &EncoderStates,
    tgt: &Padded,
) -> Result<DecoderStates> {
    check_ids(tgt, cfg.tgt_vocab, "target")?;
    let (b, i_max) = (tgt.batch_size(), tgt.max_len());
    if enc.bias.rows() != b {
        return Err(Error::ShapeMismatch {
            op: "decode",
            shapes: vec![vec![enc.bias.rows()], vec![b]],
        });
    }
    let dec = Decoder::new(cfg);
    let mem = dec.memory(g, enc)?;
    let mut inputs = vec![BOS; b];
    for t in 0..i_max.saturating_sub(1) {
        inputs.extend(tgt.step(t));
    }
    let emb_all = dec.embed(g, &inputs)?;

    let mut state = dec.initial_state(g, enc)?;
    let mut steps = Vec::with_capacity(i_max);
    let mut attention = Vec::with_capacity(i_max);
    let mut readout = Vec::with_capacity(i_max);
    for t in 0..i_max {
        let e = g.slice(emb_all, 0, t * b, b)?;
        let step = dec.step(g, &mem, state, e)?;
        readout.push(dec.readout_input(g, &step, e)?);
        state = keep_finished(g, step.state, state, tgt, t)?;
        steps.push(state);
        attention.push(step.weights);
    }
    let stacked = g.interleave(&readout)?;
    let logits = dec.logits(g, stacked)?;
    let raw_nll = g.softmax_nll(logits, &tgt.batch_major())?;
    let mask = g.constant(tgt.mask_column());
    let token_nll = g.mul(raw_nll, mask)?;
    let nll = sum_per_sentence(g, token_nll, b, i_max)?;
    let values = g.interleave(&steps)?;
    Ok(DecoderStates {
        steps,
        values,
        bias: tgt.attention_bias(),
        attention,
        last: state,
        logits,
        token_nll,
        nll,
    })
}

/// Mean over sentences of the summed target negative log-likelihood.
pub fn likelihood_loss(g: &mut Graph<'_>, dec: &DecoderStates) -> Result<Var> {
    mean_of_column(g, dec.nll)
}

/// `sum(column) / rows` as a `[1, 1]` node.
pub fn mean_of_column(g: &mut Graph<'_>, column: Var) -> Result<Var> {
    let rows = g.shape(column)[0];
    if rows == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let s = g.sum(column);
    Ok(g.scale(s, 1.0 / rows as f64))
}
