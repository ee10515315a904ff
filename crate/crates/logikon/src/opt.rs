//! Optimization on the logical constraint manifold.
//!
//! The training loop is projected gradient descent with a retraction: the
//! Euclidean loss gradient is projected onto the tangent space of
//! `G(W) = 0` (minimum-norm removal of its row-space component), the step is
//! taken in the ambient space, and Gauss-Newton iterations on `G` pull the
//! iterate back to within the constraint tolerance. Steps that fail to
//! retract or that increase the loss trigger learning-rate backoff. A plain
//! penalty-method baseline (`loss + lambda * |G|^2`, unconstrained descent)
//! is provided for comparison; it converges near but not onto the manifold.
//!
//! Rank-deficient constraint Jacobians are routine near gate saturation, so
//! the projection and the retraction both run through an SVD with a relative
//! singular-value cutoff.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint::{evaluate, jacobian, ConstraintSet};
use crate::net::{backward, forward, NetError, NetworkGraph, ParameterStore};
use crate::relax::{RelaxError, Temperature};

#[derive(Debug, Clone, Error)]
pub enum OptError {
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),
    #[error("initial point is off the manifold: |G| = {norm:.3e} > {tolerance:.3e}")]
    OffManifoldStart { norm: f64, tolerance: f64 },
    #[error("retraction failed: residual {residual:.3e} above {tolerance:.3e} after {steps} Newton steps")]
    RetractionFailed {
        residual: f64,
        tolerance: f64,
        steps: usize,
    },
    #[error("iteration {iteration}: no acceptable step after learning-rate backoff")]
    StepFailed { iteration: usize },
    #[error("iteration {iteration}: loss is not finite")]
    NonFiniteLoss { iteration: usize },
    #[error("dataset mismatch: {0}")]
    DataShape(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Relax(#[from] RelaxError),
}

/// Gauss-Newton retraction settings.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RetractionConfig {
    /// Newton iteration budget per retraction.
    pub max_newton_steps: usize,
    /// Relative singular-value cutoff for the pseudo-inverse.
    pub singular_value_cutoff: f64,
}

impl Default for RetractionConfig {
    fn default() -> Self {
        RetractionConfig {
            max_newton_steps: 40,
            singular_value_cutoff: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OptimizerConfig {
    /// Step size; halved on rejected steps, up to 20 times per iteration.
    pub learning_rate: f64,
    /// Manifold tolerance epsilon: accepted iterates satisfy |G(W)| <= eps.
    pub constraint_tolerance: f64,
    pub max_iterations: usize,
    /// Stop when the projected gradient norm falls below this.
    pub stationarity_tolerance: f64,
    pub retraction: RetractionConfig,
    /// Per-iteration temperatures; the last entry holds for any remaining
    /// iterations. The manifold moves with beta, so the iterate is
    /// re-retracted after each change.
    pub beta_schedule: Vec<f64>,
    /// Penalty weight lambda for the baseline method.
    pub penalty_weight: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 0.5,
            constraint_tolerance: 1e-8,
            max_iterations: 5000,
            stationarity_tolerance: 1e-6,
            retraction: RetractionConfig::default(),
            beta_schedule: vec![8.0],
            penalty_weight: 10.0,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptError> {
        let bad = |msg: &str| Err(OptError::InvalidConfig(msg.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.constraint_tolerance > 0.0 && self.constraint_tolerance < 1.0) {
            return bad("constraint_tolerance must lie in (0, 1)");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive");
        }
        if self.stationarity_tolerance <= 0.0 || !self.stationarity_tolerance.is_finite() {
            return bad("stationarity_tolerance must be positive");
        }
        if self.retraction.max_newton_steps == 0 {
            return bad("retraction.max_newton_steps must be positive");
        }
        if self.beta_schedule.is_empty() {
            return bad("beta_schedule must be non-empty");
        }
        for &b in &self.beta_schedule {
            Temperature::new(b).map_err(|e| OptError::InvalidConfig(e.to_string()))?;
        }
        if !(self.penalty_weight >= 0.0 && self.penalty_weight.is_finite()) {
            return bad("penalty_weight must be non-negative");
        }
        Ok(())
    }

    fn beta_at(&self, iteration: usize) -> Temperature {
        let idx = iteration.min(self.beta_schedule.len() - 1);
        Temperature::new(self.beta_schedule[idx]).expect("validated schedule")
    }
}

/// One per-iteration record of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub loss: f64,
    pub constraint_norm: f64,
    pub proj_grad_norm: f64,
    pub beta: f64,
    pub accepted: bool,
}

/// Full training trace; serializes to CSV with the column layout
/// `iteration,loss,constraint_norm,proj_grad_norm,beta,accepted`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
    /// Retraction correction norms logged after temperature changes
    /// (iteration, |correction|); not part of the CSV.
    pub beta_corrections: Vec<(usize, f64)>,
}

impl TrainTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,loss,constraint_norm,proj_grad_norm,beta,accepted\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.iteration, r.loss, r.constraint_norm, r.proj_grad_norm, r.beta, r.accepted
            ));
        }
        out
    }
}

/// Supervised data for the squared-error objective: one input row and one
/// target row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Dataset {
    pub fn new(samples: Vec<(Vec<f64>, Vec<f64>)>) -> Dataset {
        Dataset { samples }
    }

    fn check(&self, graph: &NetworkGraph) -> Result<(), OptError> {
        if self.samples.is_empty() {
            return Err(OptError::DataShape("dataset is empty".into()));
        }
        for (i, (x, y)) in self.samples.iter().enumerate() {
            if x.len() != graph.input_count() {
                return Err(OptError::DataShape(format!(
                    "sample {i}: {} inputs, network takes {}",
                    x.len(),
                    graph.input_count()
                )));
            }
            if y.len() != graph.output_count() {
                return Err(OptError::DataShape(format!(
                    "sample {i}: {} targets, network produces {}",
                    y.len(),
                    graph.output_count()
                )));
            }
        }
        Ok(())
    }
}

/// Removes the component of `v` lying in the row space of `jac` — the
/// minimum-norm correction `v - J^T (J J^T)^+ J v`. With mutually orthogonal
/// rows this equals subtracting `<v, g_i> g_i / |g_i|^2` per row.
pub fn project_tangent(v: &DVector<f64>, jac: &DMatrix<f64>, cutoff_rel: f64) -> DVector<f64> {
    if jac.nrows() == 0 {
        return v.clone();
    }
    let svd = jac.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let sigma_max = svd.singular_values.max();
    if sigma_max <= 0.0 {
        return v.clone();
    }
    let cutoff = cutoff_rel * sigma_max;
    let mut out = v.clone();
    for (k, &sigma) in svd.singular_values.iter().enumerate() {
        if sigma > cutoff {
            let row = v_t.row(k);
            let coeff = row.dot(&v.transpose());
            for (j, r) in row.iter().enumerate() {
                out[j] -= coeff * r;
            }
        }
    }
    out
}

/// Minimum-norm least-squares solution of `J x = rhs` through the SVD with a
/// relative singular-value cutoff.
fn min_norm_solve(jac: &DMatrix<f64>, rhs: &DVector<f64>, cutoff_rel: f64) -> DVector<f64> {
    let svd = jac.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let sigma_max = svd.singular_values.max();
    let mut x = DVector::zeros(jac.ncols());
    if sigma_max <= 0.0 {
        return x;
    }
    let cutoff = cutoff_rel * sigma_max;
    for (k, &sigma) in svd.singular_values.iter().enumerate() {
        if sigma > cutoff {
            let coeff = u.column(k).dot(rhs) / sigma;
            for (j, r) in v_t.row(k).iter().enumerate() {
                x[j] += coeff * r;
            }
        }
    }
    x
}

/// Outcome of a successful retraction.
#[derive(Debug, Clone, PartialEq)]
pub struct Retracted {
    pub point: DVector<f64>,
    pub residual_norm: f64,
    pub newton_steps: usize,
}

/// Applies `step` to `w` and Gauss-Newton-corrects the result back to
/// `|G| <= epsilon`. The scratch store supplies the parameter layout.
pub fn retract(
    w: &DVector<f64>,
    step: &DVector<f64>,
    gset: &ConstraintSet,
    scratch: &mut ParameterStore,
    beta: Temperature,
    cfg: &OptimizerConfig,
) -> Result<Retracted, OptError> {
    let eps = cfg.constraint_tolerance;
    let mut point = w + step;
    let mut residual_norm = f64::INFINITY;
    for newton_steps in 0..=cfg.retraction.max_newton_steps {
        scratch.set_values(point.as_slice())?;
        let g = evaluate(gset, scratch, beta)?;
        residual_norm = g.norm();
        if residual_norm <= eps {
            return Ok(Retracted {
                point,
                residual_norm,
                newton_steps,
            });
        }
        if newton_steps == cfg.retraction.max_newton_steps {
            break;
        }
        let jac = jacobian(gset, scratch, beta)?;
        let correction = min_norm_solve(&jac, &g, cfg.retraction.singular_value_cutoff);
        if !correction.iter().all(|c| c.is_finite()) {
            break;
        }
        point -= correction;
    }
    Err(OptError::RetractionFailed {
        residual: residual_norm,
        tolerance: eps,
        steps: cfg.retraction.max_newton_steps,
    })
}

/// Mean squared error over the dataset (summed across outputs) and its
/// gradient with respect to the full parameter vector.
pub fn loss_and_grad(
    graph: &NetworkGraph,
    store: &ParameterStore,
    data: &Dataset,
    beta: Temperature,
) -> Result<(f64, DVector<f64>), OptError> {
    let n = data.samples.len() as f64;
    let mut total = 0.0;
    let mut grad = DVector::zeros(store.len());
    let mut upstream = vec![0.0; graph.output_count()];
    for (x, y) in &data.samples {
        let (out, tape) = forward(graph, store, x, beta)?;
        for ((o, t), u) in out.iter().zip(y).zip(upstream.iter_mut()) {
            let r = o - t;
            total += r * r;
            *u = 2.0 * r / n;
        }
        let (dw, _) = backward(graph, store, tape, &upstream)?;
        for (g, d) in grad.iter_mut().zip(&dw) {
            *g += d;
        }
    }
    Ok((total / n, grad))
}

fn loss_only(
    graph: &NetworkGraph,
    store: &ParameterStore,
    data: &Dataset,
    beta: Temperature,
) -> Result<f64, OptError> {
    let n = data.samples.len() as f64;
    let mut total = 0.0;
    let mut scratch = Vec::new();
    let mut outputs = Vec::new();
    for (x, y) in &data.samples {
        crate::net::forward_into(graph, store, x, beta, &mut scratch, &mut outputs)?;
        for (o, t) in outputs.iter().zip(y) {
            let r = o - t;
            total += r * r;
        }
    }
    Ok(total / n)
}

const MAX_BACKOFF: usize = 20;

/// Riemannian gradient descent: project the loss gradient to the tangent
/// space, step, retract, and verify `|G| <= eps` on every accepted iterate.
/// Stops at stationarity of the projected gradient or at the iteration
/// budget. Requires an on-manifold start.
pub fn train(
    graph: &NetworkGraph,
    gset: &ConstraintSet,
    data: &Dataset,
    store0: &ParameterStore,
    cfg: &OptimizerConfig,
) -> Result<(ParameterStore, TrainTrace), OptError> {
    cfg.validate()?;
    data.check(graph)?;
    let cutoff = cfg.retraction.singular_value_cutoff;
    let mut scratch = store0.clone();
    let mut w = DVector::from_column_slice(store0.values());
    let mut trace = TrainTrace::default();

    let beta0 = cfg.beta_at(0);
    let start_norm = evaluate(gset, store0, beta0)?.norm();
    if start_norm > cfg.constraint_tolerance {
        return Err(OptError::OffManifoldStart {
            norm: start_norm,
            tolerance: cfg.constraint_tolerance,
        });
    }

    let mut prev_beta = beta0;
    for t in 0..cfg.max_iterations {
        let beta = cfg.beta_at(t);
        if beta != prev_beta {
            // the vertex residuals depend on beta, so the manifold moved
            let zero = DVector::zeros(w.len());
            let r = retract(&w, &zero, gset, &mut scratch, beta, cfg)?;
            trace
                .beta_corrections
                .push((t, (&r.point - &w).norm()));
            w = r.point;
            prev_beta = beta;
        }
        scratch.set_values(w.as_slice())?;
        let (loss, grad) = loss_and_grad(graph, &scratch, data, beta)?;
        if !loss.is_finite() {
            return Err(OptError::NonFiniteLoss { iteration: t });
        }
        let gnorm = evaluate(gset, &scratch, beta)?.norm();
        let jac = jacobian(gset, &scratch, beta)?;
        let xi = project_tangent(&grad, &jac, cutoff);
        let pg = xi.norm();

        if pg <= cfg.stationarity_tolerance {
            trace.records.push(TraceRecord {
                iteration: t,
                loss,
                constraint_norm: gnorm,
                proj_grad_norm: pg,
                beta: beta.value(),
                accepted: true,
            });
            break;
        }

        let mut eta = cfg.learning_rate;
        let mut accepted = None;
        for _ in 0..=MAX_BACKOFF {
            let step = -eta * &xi;
            match retract(&w, &step, gset, &mut scratch, beta, cfg) {
                Ok(r) => {
                    scratch.set_values(r.point.as_slice())?;
                    let new_loss = loss_only(graph, &scratch, data, beta)?;
                    if new_loss <= loss + 1e-12 {
                        accepted = Some(r.point);
                        break;
                    }
                }
                Err(OptError::RetractionFailed { .. }) => {}
                Err(e) => return Err(e),
            }
            eta /= 2.0;
        }
        let Some(next) = accepted else {
            trace.records.push(TraceRecord {
                iteration: t,
                loss,
                constraint_norm: gnorm,
                proj_grad_norm: pg,
                beta: beta.value(),
                accepted: false,
            });
            return Err(OptError::StepFailed { iteration: t });
        };
        trace.records.push(TraceRecord {
            iteration: t,
            loss,
            constraint_norm: gnorm,
            proj_grad_norm: pg,
            beta: beta.value(),
            accepted: true,
        });
        w = next;
    }

    let mut out = store0.clone();
    out.set_values(w.as_slice())?;
    Ok((out, trace))
}

/// Penalty baseline: unconstrained gradient descent on
/// `loss + lambda * |G|^2`. May start anywhere; constraint satisfaction is
/// approximate and the trace records how `|G|` evolves. The trace's
/// `proj_grad_norm` column holds the full penalized-gradient norm.
pub fn penalty_train(
    graph: &NetworkGraph,
    gset: &ConstraintSet,
    data: &Dataset,
    store0: &ParameterStore,
    cfg: &OptimizerConfig,
) -> Result<(ParameterStore, TrainTrace), OptError> {
    cfg.validate()?;
    data.check(graph)?;
    let lambda = cfg.penalty_weight;
    let mut scratch = store0.clone();
    let mut w = DVector::from_column_slice(store0.values());
    let mut trace = TrainTrace::default();

    for t in 0..cfg.max_iterations {
        let beta = cfg.beta_at(t);
        scratch.set_values(w.as_slice())?;
        let (loss, loss_grad) = loss_and_grad(graph, &scratch, data, beta)?;
        if !loss.is_finite() {
            return Err(OptError::NonFiniteLoss { iteration: t });
        }
        let g = evaluate(gset, &scratch, beta)?;
        let gnorm = g.norm();
        let mut full_grad = loss_grad;
        if lambda > 0.0 && !gset.is_empty() {
            let jac = jacobian(gset, &scratch, beta)?;
            full_grad += 2.0 * lambda * jac.transpose() * &g;
        }
        let fg = full_grad.norm();
        trace.records.push(TraceRecord {
            iteration: t,
            loss,
            constraint_norm: gnorm,
            proj_grad_norm: fg,
            beta: beta.value(),
            accepted: true,
        });
        if fg <= cfg.stationarity_tolerance {
            break;
        }
        w -= cfg.learning_rate * full_grad;
    }

    let mut out = store0.clone();
    out.set_values(w.as_slice())?;
    Ok((out, trace))
}

/// How to pick the starting point for [`initialize_on_manifold`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitMode {
    /// Project the store's current values onto the manifold.
    Canonical,
    /// Seeded Gaussian perturbation of the store's values, then projection.
    /// Perturbations are centered on the given values because the
    /// Gauss-Newton basin around them is where retraction is reliable.
    RandomThenRetract { seed: u64, scale: f64 },
}

/// Produces a starting point with `|G| <= eps` by projecting an initial
/// guess onto the manifold.
pub fn initialize_on_manifold(
    gset: &ConstraintSet,
    store: &ParameterStore,
    beta: Temperature,
    mode: InitMode,
    cfg: &OptimizerConfig,
) -> Result<(ParameterStore, Retracted), OptError> {
    cfg.validate()?;
    let mut base = DVector::from_column_slice(store.values());
    if let InitMode::RandomThenRetract { seed, scale } = mode {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let normal = rand_distr::Normal::new(0.0, 1.0).expect("unit normal");
        for v in base.iter_mut() {
            *v += normal.sample(&mut rng) * scale;
        }
    }
    let mut scratch = store.clone();
    let zero = DVector::zeros(base.len());
    let retracted = retract(&base, &zero, gset, &mut scratch, beta, cfg)?;
    let mut out = store.clone();
    out.set_values(retracted.point.as_slice())?;
    Ok((out, retracted))
}
