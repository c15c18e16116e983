use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Gradients, Graph, ParameterStore, Var};
use crate::error::{Error, Result};

/// Below this gradient magnitude errors are measured absolutely. Losses are
/// token sums of order 10, so stencil roundoff is ~1e-11 absolute and a
/// relative comparison against a 1e-8 gradient would measure only noise.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    /// Step of the five-point difference stencil.
    pub eps: f64,
    /// Coordinates checked per parameter tensor (all of them when smaller).
    pub samples: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            eps: 1e-3,
            samples: 8,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    /// Reverse-mode and finite-difference values at the worst coordinate.
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub coordinates: usize,
}

/// Compares reverse-mode gradients of `loss_fn` against finite differences
/// and returns the largest relative error
/// `|analytic - numeric| / max(|analytic|, |numeric|, REL_FLOOR)`.
pub fn grad_check<F>(loss_fn: F, store: &ParameterStore, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_>) -> Result<Var>,
{
    let mut g = Graph::new(store);
    let loss = loss_fn(&mut g)?;
    if !g.value(loss).item().is_finite() {
        return Err(Error::NonFiniteLoss {
            param: "<unperturbed>".into(),
        });
    }
    let analytic = super::backward(&g, loss, store)?;
    drop(g);
    compare_gradients(&analytic, loss_fn, store, cfg)
}

/// The numeric half of [`grad_check`], against caller-supplied gradients.
pub fn compare_gradients<F>(
    analytic: &Gradients,
    loss_fn: F,
    store: &ParameterStore,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_>) -> Result<Var>,
{
    if !(cfg.eps > 0.0 && cfg.eps <= 1e-2) {
        return Err(Error::invalid(format!("grad_check: eps {} not in (0, 1e-2]", cfg.eps)));
    }
    if cfg.samples == 0 {
        return Err(Error::invalid("grad_check: need at least one sample per parameter"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut work = store.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        coordinates: 0,
    };
    let names: Vec<String> = store.names().map(str::to_string).collect();
    for name in &names {
        let numel = store.value(name)?.numel();
        let coords: Vec<usize> = if numel <= cfg.samples {
            (0..numel).collect()
        } else {
            let mut picked = index::sample(&mut rng, numel, cfg.samples).into_vec();
            picked.sort_unstable();
            picked
        };
        let grad = analytic
            .get(name)
            .ok_or_else(|| Error::UnknownParameter(name.clone()))?;
        for i in coords {
            let original = work.value(name)?.data()[i];
            let mut at = |k: f64| -> Result<f64> {
                work.value_mut(name)?.data_mut()[i] = original + k * cfg.eps;
                eval(&loss_fn, &work, name)
            };
            // Truncation error is O(eps^4), so a larger step keeps roundoff
            // small even for near-zero gradients.
            let (p2, p1, m1, m2) = (at(2.0)?, at(1.0)?, at(-1.0)?, at(-2.0)?);
            work.value_mut(name)?.data_mut()[i] = original;

            let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * cfg.eps);
            let a = grad.data()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            report.coordinates += 1;
            if rel > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = rel.max(report.max_rel_error);
                if rel >= report.max_rel_error {
                    report.worst_param = name.clone();
                    report.worst_index = i;
                    report.worst_analytic = a;
                    report.worst_numeric = numeric;
                }
            }
        }
    }
    Ok(report)
}

fn eval<F>(loss_fn: &F, store: &ParameterStore, name: &str) -> Result<f64>
where
    F: Fn(&mut Graph<'_>) -> Result<Var>,
{
    let mut g = Graph::new(store);
    let v = loss_fn(&mut g)?;
    let value = g.value(v).item();
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFiniteLoss {
            param: name.to_string(),
        })
    }
}
