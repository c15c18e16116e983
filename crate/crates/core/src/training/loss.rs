use crate::autodiff::{Graph, ParameterStore, Var};
use crate::dp::dp_prediction_loss;
use crate::error::Result;
use crate::model::{forward, Forward};
use crate::nmt::{likelihood_loss, Batch, ModelConfig};
use crate::reconstructor::reconstruction_loss;

/// The three objective terms, each a negative log form, and their sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub likelihood: f64,
    pub reconstruction: f64,
    pub prediction: f64,
    pub total: f64,
}

/// Graph nodes of the objective. Inactive terms are `None`.
#[derive(Clone, Copy, Debug)]
pub struct LossNodes {
    pub likelihood: Var,
    pub reconstruction: Option<Var>,
    pub prediction: Option<Var>,
    pub total: Var,
}

impl LossNodes {
    pub fn breakdown(&self, g: &Graph<'_>) -> LossBreakdown {
        let v = |x: Option<Var>| x.map_or(0.0, |x| g.value(x).item());
        LossBreakdown {
            likelihood: g.value(self.likelihood).item(),
            reconstruction: v(self.reconstruction),
            prediction: v(self.prediction),
            total: g.value(self.total).item(),
        }
    }
}

/// Which terms enter the total.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Terms {
    pub likelihood: bool,
    pub reconstruction: bool,
    pub prediction: bool,
}

impl Terms {
    pub const ALL: Terms = Terms {
        likelihood: true,
        reconstruction: true,
        prediction: true,
    };
}

/// Builds the objective for `batch` under `cfg` with teacher forcing.
pub fn joint_loss_nodes(g: &mut Graph<'_>, cfg: &ModelConfig, batch: &Batch) -> Result<(LossNodes, Forward)> {
    joint_loss_terms(g, cfg, batch, Terms::ALL)
}

/// As [`joint_loss_nodes`], summing only the selected terms into the total.
pub fn joint_loss_terms(
    g: &mut Graph<'_>,
    cfg: &ModelConfig,
    batch: &Batch,
    terms: Terms,
) -> Result<(LossNodes, Forward)> {
    let fwd = forward(g, cfg, batch)?;
    let likelihood = likelihood_loss(g, &fwd.decoder)?;
    let reconstruction = match &fwd.reconstruction {
        Some(r) => Some(reconstruction_loss(g, r)?),
        None => None,
    };
    let prediction = if cfg.joint_prediction {
        let gold: Vec<Vec<usize>> = batch.dps.iter().map(|d| d.iter().map(|&(_, w)| w).collect()).collect();
        Some(dp_prediction_loss(g, fwd.dp.as_ref(), &gold)?)
    } else {
        None
    };
    let mut parts = Vec::with_capacity(3);
    if terms.likelihood {
        parts.push(likelihood);
    }
    if terms.reconstruction {
        parts.extend(reconstruction);
    }
    if terms.prediction {
        parts.extend(prediction);
    }
    let total = match parts.split_first() {
        None => g.constant(crate::autodiff::Tensor::scalar(0.0)),
        Some((&first, rest)) => {
            let mut acc = first;
            for &p in rest {
                acc = g.add(acc, p)?;
            }
            acc
        }
    };
    Ok((
        LossNodes {
            likelihood,
            reconstruction,
            prediction,
            total,
        },
        fwd,
    ))
}

/// Evaluates the objective without keeping the graph.
pub fn joint_loss(store: &ParameterStore, cfg: &ModelConfig, batch: &Batch) -> Result<LossBreakdown> {
    let mut g = Graph::new(store);
    let (nodes, _) = joint_loss_nodes(&mut g, cfg, batch)?;
    Ok(nodes.breakdown(&g))
}
