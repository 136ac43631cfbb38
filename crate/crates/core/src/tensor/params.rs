use std::collections::BTreeMap;

use rand::Rng;

use super::{Tape, Tensor, Var};
use crate::error::{contract, Result};

/// Named trainable tensors.
pub type ParamMap = BTreeMap<String, Tensor>;

/// Parameters recorded on one tape, looked up by name.
#[derive(Debug, Clone, Default)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn bind(tape: &mut Tape, params: &ParamMap) -> Self {
        let vars = params
            .iter()
            .map(|(k, t)| (k.clone(), tape.leaf(t)))
            .collect();
        Self { vars }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| contract(format!("missing parameter {name}")))
    }

    /// Leaf gradients after `tape.backward`, keyed like the parameters.
    pub fn grads(&self, tape: &Tape) -> BTreeMap<String, Vec<f64>> {
        self.vars
            .iter()
            .filter_map(|(k, v)| tape.grad(*v).map(|g| (k.clone(), g.to_vec())))
            .collect()
    }
}

impl FromIterator<(String, Var)> for Bound {
    fn from_iter<I: IntoIterator<Item = (String, Var)>>(iter: I) -> Self {
        Self {
            vars: iter.into_iter().collect(),
        }
    }
}

/// Glorot-uniform weight in `±sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform<R: Rng + ?Sized>(
    rng: &mut R,
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-limit..=limit)).collect();
    Tensor::param(shape, data).expect("shape matches data")
}

pub fn zeros_param(shape: &[usize]) -> Tensor {
    let mut t = Tensor::zeros(shape);
    t.requires_grad = true;
    t
}

pub fn total_params(params: &ParamMap) -> usize {
    params.values().map(Tensor::numel).sum()
}
