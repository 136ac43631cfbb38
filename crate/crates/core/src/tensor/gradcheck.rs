use serde::{Deserialize, Serialize};

use super::{Tape, Tensor, Var};
use crate::error::Result;

/// Gradients smaller than this are compared on an absolute scale.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckEntry {
    pub name: String,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub epsilon: f64,
    pub tolerance: f64,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn worst(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max)
    }
}

/// Compares tape gradients of the scalar `f(inputs)` against central finite
/// differences for every input with `requires_grad`.
///
/// The relative error of one coordinate is
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-6)`.
pub fn grad_check<F>(
    f: F,
    inputs: &[(String, Tensor)],
    epsilon: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.leaf(t)).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out)[0])
    };

    let tensors: Vec<Tensor> = inputs.iter().map(|(_, t)| t.clone()).collect();
    let mut tape = Tape::new();
    let vars: Vec<Var> = tensors.iter().map(|t| tape.leaf(t)).collect();
    let loss = f(&mut tape, &vars)?;
    tape.backward(loss)?;

    let mut entries = Vec::new();
    for (i, (name, t)) in inputs.iter().enumerate() {
        if !t.requires_grad {
            continue;
        }
        let analytic = tape.grad(vars[i]).map(<[f64]>::to_vec).unwrap_or_default();
        let mut perturbed = tensors.clone();
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for j in 0..t.numel() {
            let x0 = t.data[j];
            perturbed[i].data[j] = x0 + epsilon;
            let up = eval(&perturbed)?;
            perturbed[i].data[j] = x0 - epsilon;
            let down = eval(&perturbed)?;
            perturbed[i].data[j] = x0;
            let numeric = (up - down) / (2.0 * epsilon);
            let a = analytic.get(j).copied().unwrap_or(0.0);
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(REL_FLOOR);
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(rel);
        }
        entries.push(GradCheckEntry {
            name: name.clone(),
            max_rel_error: max_rel,
            max_abs_error: max_abs,
            passed: max_rel < tolerance,
        });
    }
    Ok(GradCheckReport {
        epsilon,
        tolerance,
        entries,
    })
}
