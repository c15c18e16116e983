use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::Tensor;
use crate::error::{Error, Result};

/// Which part of the joint objective a parameter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Partition {
    /// Encoder-decoder.
    Theta,
    /// Reconstructor(s).
    Gamma,
    /// Dropped-pronoun predictor.
    Psi,
}

impl Partition {
    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Theta => "theta",
            Partition::Gamma => "gamma",
            Partition::Psi => "psi",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Partition::Theta => 0,
            Partition::Gamma => 1,
            Partition::Psi => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Partition::Theta),
            1 => Some(Partition::Gamma),
            2 => Some(Partition::Psi),
            _ => None,
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theta" => Ok(Partition::Theta),
            "gamma" => Ok(Partition::Gamma),
            "psi" => Ok(Partition::Psi),
            other => Err(Error::invalid(format!("unknown partition `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub value: Tensor,
    pub partition: Partition,
}

/// Named model parameters, ordered by name so iteration is deterministic.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore {
    params: BTreeMap<String, Parameter>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, partition: Partition, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate parameter `{name}`")));
        }
        self.params.insert(name, Parameter { value, partition });
        Ok(())
    }

    /// Adds a parameter initialized uniformly in `[-scale, scale]`.
    pub fn insert_uniform(
        &mut self,
        name: impl Into<String>,
        partition: Partition,
        rows: usize,
        cols: usize,
        scale: f64,
        rng: &mut impl Rng,
    ) -> Result<()> {
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-scale..=scale))
            .collect();
        self.insert(name, partition, Tensor::new(rows, cols, data)?)
    }

    pub fn get(&self, name: &str) -> Option<&Parameter> {
        self.params.get(name)
    }

    pub fn value(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn value_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.params
            .get_mut(name)
            .map(|p| &mut p.value)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Parameter)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Parameter)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names_in(&self, partition: Partition) -> Vec<&str> {
        self.iter()
            .filter(|(_, p)| p.partition == partition)
            .map(|(n, _)| n)
            .collect()
    }

    pub fn num_values(&self) -> usize {
        self.params.values().map(|p| p.value.numel()).sum()
    }

    /// Sets every parameter to zero.
    pub fn zero_all(&mut self) {
        for p in self.params.values_mut() {
            p.value.data_mut().fill(0.0);
        }
    }
}

/// Gradients keyed by parameter name; covers every parameter of the store
/// it was computed against.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    grads: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub fn zeros_like(store: &ParameterStore) -> Self {
        let grads = store
            .iter()
            .map(|(n, p)| (n.to_string(), Tensor::zeros(p.value.rows(), p.value.cols())))
            .collect();
        Gradients { grads }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.grads.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.grads.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.grads.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.grads.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn global_norm(&self) -> f64 {
        self.grads.values().map(Tensor::squared_norm).sum::<f64>().sqrt()
    }

    /// Norm restricted to one partition of `store`.
    pub fn partition_norm(&self, store: &ParameterStore, partition: Partition) -> f64 {
        store
            .names_in(partition)
            .into_iter()
            .filter_map(|n| self.grads.get(n))
            .map(Tensor::squared_norm)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.grads.values_mut() {
            for v in g.data_mut() {
                *v *= factor;
            }
        }
    }

    /// Largest absolute coordinate difference against `other`.
    pub fn max_abs_diff(&self, other: &Gradients) -> f64 {
        self.grads
            .iter()
            .map(|(n, g)| match other.grads.get(n) {
                Some(o) => g.max_abs_diff(o),
                None => f64::INFINITY,
            })
            .fold(0.0, f64::max)
    }

    pub(crate) fn insert(&mut self, name: String, grad: Tensor) {
        self.grads.insert(name, grad);
    }
}
