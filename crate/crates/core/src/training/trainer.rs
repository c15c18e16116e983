use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::batches::length_grouped_batches;
use super::loss::{joint_loss_nodes, LossBreakdown};
use crate::autodiff::{backward, Graph, ParameterStore};
use crate::error::{Error, Result};
use crate::nmt::{Batch, EncodedExample, ModelConfig};
use crate::optim::{clip_global_norm, Adam, AdamConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many updates (0 = no limit).
    pub max_steps: usize,
    pub clip_norm: f64,
    pub seed: u64,
    /// Call the checkpoint hook every this many steps (0 = never).
    pub checkpoint_every: usize,
    /// Dev evaluations without improvement before stopping (0 = never stop early).
    pub patience: usize,
    /// Evaluate on dev every this many steps (0 = once per epoch).
    pub eval_every: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            lr: 1e-3,
            batch_size: 16,
            max_epochs: 10,
            max_steps: 0,
            clip_norm: 1.0,
            seed: 1,
            checkpoint_every: 0,
            patience: 5,
            eval_every: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("training: lr must be finite and non-negative".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("training: batch_size and max_epochs must be positive".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config("training: clip_norm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub loss: LossBreakdown,
}

pub const LOSS_LOG_HEADER: &str = "step\tlikelihood\treconstruction\tprediction\ttotal";

/// The loss log as TSV. Values use Rust's shortest round-trip formatting.
pub fn loss_log_tsv(rows: &[LogRow]) -> String {
    let mut out = format!("{LOSS_LOG_HEADER}\n");
    for r in rows {
        let l = r.loss;
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.step, l.likelihood, l.reconstruction, l.prediction, l.total
        )
        .expect("writing to a String");
    }
    out
}

/// Optional callbacks into a training run.
#[derive(Default)]
pub struct TrainHooks<'a> {
    /// Dev score (higher is better) used for model selection and early stopping.
    pub dev_score: Option<Box<dyn Fn(&ParameterStore) -> Result<f64> + 'a>>,
    /// Receives `(step, parameters)` every `checkpoint_every` steps.
    pub checkpoint: Option<Box<dyn FnMut(usize, &ParameterStore) -> Result<()> + 'a>>,
    /// Receives each log row as it is produced.
    pub progress: Option<Box<dyn FnMut(&LogRow) + 'a>>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Best-dev parameters, or the final ones without a dev scorer.
    pub best: ParameterStore,
    pub last: ParameterStore,
    pub log: Vec<LogRow>,
    /// `(step, dev score)` of every evaluation.
    pub evaluations: Vec<(usize, f64)>,
    pub steps: usize,
    pub stopped_early: bool,
}

/// Minibatch training of all partitions together on the joint objective.
pub fn train(
    mut store: ParameterStore,
    model: &ModelConfig,
    cfg: &TrainingConfig,
    examples: &[EncodedExample],
    mut hooks: TrainHooks<'_>,
) -> Result<TrainOutcome> {
    model.validate()?;
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::invalid("empty training corpus"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::new(AdamConfig {
        lr: cfg.lr,
        ..Default::default()
    })?;
    let lengths: Vec<usize> = examples.iter().map(|e| e.src.len().max(e.tgt.len())).collect();
    let mut log = Vec::new();
    let mut evaluations = Vec::new();
    let mut best: Option<(f64, ParameterStore)> = None;
    let mut since_best = 0usize;
    let mut step = 0usize;
    let mut stopped_early = false;

    let mut evaluate = |step: usize, store: &ParameterStore, hooks: &TrainHooks<'_>| -> Result<bool> {
        let Some(score_fn) = &hooks.dev_score else {
            return Ok(false);
        };
        let score = score_fn(store)?;
        evaluations.push((step, score));
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, store.clone()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        Ok(cfg.patience > 0 && since_best >= cfg.patience)
    };

    'epochs: for _ in 0..cfg.max_epochs {
        for batch_idx in length_grouped_batches(&lengths, cfg.batch_size, &mut rng) {
            step += 1;
            let refs: Vec<&EncodedExample> = batch_idx.iter().map(|&i| &examples[i]).collect();
            let batch = Batch::new(&refs)?;
            let (row, mut grads) = {
                let mut g = Graph::new(&store);
                let (nodes, _) = joint_loss_nodes(&mut g, model, &batch)?;
                let row = LogRow {
                    step,
                    loss: nodes.breakdown(&g),
                };
                if !row.loss.total.is_finite() {
                    return Err(Error::Divergence { step });
                }
                (row, backward(&g, nodes.total, &store)?)
            };
            let norm = clip_global_norm(&mut grads, cfg.clip_norm);
            if !norm.is_finite() {
                return Err(Error::Divergence { step });
            }
            opt.update(&mut store, &grads)?;
            if let Some(p) = hooks.progress.as_mut() {
                p(&row);
            }
            log.push(row);

            if cfg.checkpoint_every > 0 && step.is_multiple_of(cfg.checkpoint_every) {
                if let Some(cb) = hooks.checkpoint.as_mut() {
                    cb(step, &store)?;
                }
            }
            if cfg.eval_every > 0 && step.is_multiple_of(cfg.eval_every) && evaluate(step, &store, &hooks)? {
                stopped_early = true;
                break 'epochs;
            }
            if cfg.max_steps > 0 && step >= cfg.max_steps {
                break 'epochs;
            }
        }
        if cfg.eval_every == 0 && evaluate(step, &store, &hooks)? {
            stopped_early = true;
            break;
        }
    }
    let best = best.map_or_else(|| store.clone(), |(_, s)| s);
    Ok(TrainOutcome {
        best,
        last: store,
        log,
        evaluations,
        steps: step,
        stopped_early,
    })
}

/// Fraction of reference tokens that are the teacher-forced argmax.
pub fn teacher_forced_accuracy(store: &ParameterStore, model: &ModelConfig, examples: &[EncodedExample]) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for chunk in examples.chunks(64) {
        let batch = Batch::from_examples(chunk)?;
        let mut g = Graph::new(store);
        let enc = crate::nmt::encode(&mut g, model, &batch.src)?;
        let dec = crate::nmt::decode_teacher_forced(&mut g, model, &enc, &batch.tgt)?;
        let logits = g.value(dec.logits);
        let i_max = batch.tgt.max_len();
        for b in 0..batch.size() {
            for (i, &y) in batch.tgt.row(b).iter().enumerate() {
                let row = logits.row_slice(b * i_max + i);
                let arg = crate::dp::argmax(row);
                correct += usize::from(arg == y);
                total += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::invalid("no examples"));
    }
    Ok(correct as f64 / total as f64)
}
