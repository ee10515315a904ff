//! Temperature-controlled differentiable gate kernels.
//!
//! A relaxed gate computes `sigma(beta * (w . x + b))`. With the canonical
//! parameters below the gates converge to the discrete boolean truth tables
//! as `beta -> infinity`, with the worst-vertex error known in closed form:
//! `1/(1+exp(0.5*beta))` for `and`/`or` and `1/(1+exp(beta))` for `not`.

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RelaxError {
    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),
    #[error("non-finite input value {0}")]
    NonFiniteInput(f64),
    #[error("gate `{connective}` expects {expected} inputs, got {found}")]
    InputArity {
        connective: String,
        expected: usize,
        found: usize,
    },
    #[error("no closed-form error bound for connective `{0}`")]
    UnknownConnective(String),
    #[error("invalid annealing range: start {start}, end {end}, steps {steps}")]
    InvalidSchedule { start: f64, end: f64, steps: usize },
}

/// Sharpness parameter of the relaxation; strictly positive and finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(beta: f64) -> Result<Self, RelaxError> {
        if beta > 0.0 && beta.is_finite() {
            Ok(Temperature(beta))
        } else {
            Err(RelaxError::InvalidTemperature(beta))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl std::fmt::Display for Temperature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Numerically stable logistic function; the two branches avoid overflow for
/// large |z|.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// The parameter shape of one connective's gate: `arity` weights and a bias,
/// with canonical initial values.
#[derive(Debug, Clone, PartialEq)]
pub struct GateKernel {
    pub connective: String,
    pub arity: usize,
    pub canonical_weights: Vec<f64>,
    pub canonical_bias: f64,
}

impl GateKernel {
    /// Canonical parameters are the maximum-margin constants for `and`, `or`
    /// and `not` (matched by name and arity); everything else gets unit
    /// weights and zero bias.
    pub fn for_connective(name: &str, arity: usize) -> GateKernel {
        let (w, b) = match (name, arity) {
            ("and", 2) => (vec![1.0, 1.0], -1.5),
            ("or", 2) => (vec![1.0, 1.0], -0.5),
            ("not", 1) => (vec![-2.0], 1.0),
            _ => (vec![1.0; arity], 0.0),
        };
        GateKernel {
            connective: name.to_string(),
            arity,
            canonical_weights: w,
            canonical_bias: b,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.arity + 1
    }
}

fn check_inputs(kernel: &GateKernel, inputs: &[f64]) -> Result<(), RelaxError> {
    if inputs.len() != kernel.arity {
        return Err(RelaxError::InputArity {
            connective: kernel.connective.clone(),
            expected: kernel.arity,
            found: inputs.len(),
        });
    }
    for &x in inputs {
        if !x.is_finite() {
            return Err(RelaxError::NonFiniteInput(x));
        }
    }
    Ok(())
}

/// Evaluates `sigma(beta * (w . x + b))`; strictly inside (0, 1).
pub fn gate_eval(
    kernel: &GateKernel,
    weights: &[f64],
    bias: f64,
    inputs: &[f64],
    beta: Temperature,
) -> Result<f64, RelaxError> {
    check_inputs(kernel, inputs)?;
    let z: f64 = weights.iter().zip(inputs).map(|(w, x)| w * x).sum::<f64>() + bias;
    Ok(sigmoid(beta.value() * z))
}

/// Analytic derivatives of one gate evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct GateGrad {
    pub d_weights: Vec<f64>,
    pub d_bias: f64,
    pub d_inputs: Vec<f64>,
}

/// Chain rule through `sigma(beta * (w . x + b))`:
/// `d/dw_i = beta * x_i * s'`, `d/db = beta * s'`, `d/dx_i = beta * w_i * s'`
/// with `s' = s(1-s)` at the evaluated point.
pub fn gate_grad(
    kernel: &GateKernel,
    weights: &[f64],
    bias: f64,
    inputs: &[f64],
    beta: Temperature,
) -> Result<(f64, GateGrad), RelaxError> {
    check_inputs(kernel, inputs)?;
    let b = beta.value();
    let z: f64 = weights.iter().zip(inputs).map(|(w, x)| w * x).sum::<f64>() + bias;
    let s = sigmoid(b * z);
    let slope = b * s * (1.0 - s);
    Ok((
        s,
        GateGrad {
            d_weights: inputs.iter().map(|x| slope * x).collect(),
            d_bias: slope,
            d_inputs: weights.iter().map(|w| slope * w).collect(),
        },
    ))
}

/// Worst-vertex approximation error of a canonical gate at temperature
/// `beta`: `1/(1+e^{0.5 beta})` for `and`/`or`, `1/(1+e^{beta})` for `not`.
pub fn error_bound(connective: &str, beta: Temperature) -> Result<f64, RelaxError> {
    let rate = match connective {
        "and" | "or" => 0.5,
        "not" => 1.0,
        other => return Err(RelaxError::UnknownConnective(other.to_string())),
    };
    Ok(sigmoid(-rate * beta.value()))
}

/// `(beta * sqrt(2) / 4)^depth`, the layer-wise gradient bound compounded
/// through `depth` gate layers.
pub fn lipschitz_bound(depth: usize, beta: Temperature) -> f64 {
    (beta.value() * std::f64::consts::SQRT_2 / 4.0).powi(depth as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleShape {
    Linear,
    Exponential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnealSpec {
    pub beta_start: f64,
    pub beta_end: f64,
    pub steps: usize,
    pub shape: ScheduleShape,
}

/// Monotone non-decreasing temperature sequence of length `steps` from
/// `beta_start` to `beta_end` inclusive.
pub fn anneal_schedule(spec: &AnnealSpec) -> Result<Vec<f64>, RelaxError> {
    let AnnealSpec {
        beta_start,
        beta_end,
        steps,
        shape,
    } = *spec;
    let invalid = RelaxError::InvalidSchedule {
        start: beta_start,
        end: beta_end,
        steps,
    };
    if !(beta_start > 0.0 && beta_start.is_finite() && beta_end.is_finite()) {
        return Err(invalid);
    }
    if beta_end < beta_start || steps == 0 {
        return Err(invalid);
    }
    if steps == 1 {
        // a single step cannot hit two distinct endpoints
        if beta_start != beta_end {
            return Err(invalid);
        }
        return Ok(vec![beta_start]);
    }
    let n = (steps - 1) as f64;
    let seq = (0..steps)
        .map(|i| {
            let t = i as f64 / n;
            match shape {
                ScheduleShape::Linear => beta_start + (beta_end - beta_start) * t,
                ScheduleShape::Exponential => beta_start * (beta_end / beta_start).powf(t),
            }
        })
        .collect();
    Ok(seq)
}
