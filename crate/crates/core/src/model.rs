//! The full model: parameter initialization and one forward pass.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, ParameterStore, Partition};
use crate::dp::{dp_logits, DpLogits};
use crate::error::{Error, Result};
use crate::nmt::layers::Registrar;
use crate::nmt::{decode_teacher_forced, encode, Batch, DecoderStates, EncoderStates, ModelConfig};
use crate::reconstructor::{reconstruct, Reconstruction};

/// Creates θ (encoder–decoder), γ (reconstructor) and ψ (predictor) for
/// `cfg`, uniform in `[-init_scale, init_scale]` with zero biases.
pub fn init_parameters(cfg: &ModelConfig, seed: u64) -> Result<ParameterStore> {
    cfg.validate()?;
    let mut store = ParameterStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for partition in [Partition::Theta, Partition::Gamma, Partition::Psi] {
        let mut reg = Registrar {
            store: &mut store,
            rng: &mut rng,
            partition,
            scale: cfg.init_scale,
        };
        match partition {
            Partition::Theta => crate::nmt::register_parameters(&mut reg, cfg)?,
            Partition::Gamma => crate::reconstructor::register_parameters(&mut reg, cfg)?,
            Partition::Psi => crate::dp::register_parameters(&mut reg, cfg)?,
        }
    }
    Ok(store)
}

/// All nodes of one teacher-forced pass.
#[derive(Clone, Debug)]
pub struct Forward {
    pub encoder: EncoderStates,
    pub decoder: DecoderStates,
    pub reconstruction: Option<Reconstruction>,
    pub dp: Option<DpLogits>,
}

/// Encoder, teacher-forced decoder, and, as configured, the reconstructor and
/// the DP predictor.
pub fn forward(g: &mut Graph<'_>, cfg: &ModelConfig, batch: &Batch) -> Result<Forward> {
    let encoder = encode(g, cfg, &batch.src)?;
    let decoder = decode_teacher_forced(g, cfg, &encoder, &batch.tgt)?;
    let mut reconstruction = None;
    let mut dp = None;
    if cfg.reconstructs() {
        let rec = batch
            .rec
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("mode={} needs annotated source sentences", cfg.mode)))?;
        let r = reconstruct(g, cfg, rec, &encoder, &decoder)?.expect("mode reconstructs");
        if cfg.joint_prediction {
            let shared = r.shared().expect("joint prediction implies the shared reconstructor");
            let positions: Vec<Vec<usize>> = batch.dps.iter().map(|d| d.iter().map(|&(p, _)| p).collect()).collect();
            dp = dp_logits(g, shared.values, rec, &positions)?;
        }
        reconstruction = Some(r);
    }
    Ok(Forward {
        encoder,
        decoder,
        reconstruction,
        dp,
    })
}
