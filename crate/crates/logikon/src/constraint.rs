//! Constraint extraction: every axiom contributes residual functions whose
//! common zero set is the logical constraint manifold `G(W) = 0`.
//!
//! Axioms whose two sides are the same connective applied to permuted
//! distinct variables (commutativity and friends) additionally yield symbolic
//! weight-equality residuals `w_i - w_j`. Every axiom, including those, gets
//! one signed vertex residual per boolean assignment of its context:
//! `G_v(W) = N_lhs(v; W, beta) - N_rhs(v; W, beta)`, both sides compiled
//! against the same shared parameter slots.
//!
//! Equality on the full unit cube is an infinite constraint family; residuals
//! are enforced at the boolean vertices only, and [`interior_audit`] reports
//! (never enforces) sampled interior deviations.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::net::{
    backward, compile, forward, forward_into, NetError, NetworkGraph, ParameterStore,
    ParametricModel,
};
use crate::relax::Temperature;
use crate::theory::{Term, Theory};

/// A compiled axiom: both sides as networks over the axiom's context.
#[derive(Debug, Clone)]
pub struct ArmPair {
    pub axiom: String,
    pub context_size: usize,
    pub lhs: NetworkGraph,
    pub rhs: NetworkGraph,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResidualKind {
    /// `w[first] - w[second]` within one connective's weight slot.
    WeightSymmetry {
        connective: String,
        first: usize,
        second: usize,
    },
    /// Left-minus-right network output at one boolean assignment.
    Vertex { assignment: Vec<bool> },
}

#[derive(Debug, Clone)]
pub struct Residual {
    pub axiom: String,
    pub kind: ResidualKind,
    /// Index into [`ConstraintSet::arms`] for vertex residuals.
    arm: Option<usize>,
}

/// The residual system of a theory under a parametric model. Residual order
/// is fixed: axioms in declaration order, symmetry entries before vertex
/// entries, vertices in assignment-bit order.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    arms: Vec<ArmPair>,
    residuals: Vec<Residual>,
}

impl ConstraintSet {
    pub fn residuals(&self) -> &[Residual] {
        &self.residuals
    }

    pub fn arms(&self) -> &[ArmPair] {
        &self.arms
    }

    pub fn len(&self) -> usize {
        self.residuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residuals.is_empty()
    }

    /// A constraint set with no residuals (unconstrained optimization).
    pub fn empty() -> ConstraintSet {
        ConstraintSet {
            arms: Vec::new(),
            residuals: Vec::new(),
        }
    }
}

/// Detects the argument-permutation symmetry pattern: both sides apply the
/// same connective to the same set of distinct variables in different orders.
/// Returns deduplicated weight index pairs.
fn symmetry_pairs(lhs: &Term, rhs: &Term) -> Vec<(usize, usize)> {
    let (Term::App { connective: lc, args: la }, Term::App { connective: rc, args: ra }) =
        (lhs, rhs)
    else {
        return Vec::new();
    };
    if lc != rc || la.len() != ra.len() {
        return Vec::new();
    }
    let as_vars = |args: &[Term]| -> Option<Vec<usize>> {
        args.iter()
            .map(|a| match a {
                Term::Var(i) => Some(*i),
                _ => None,
            })
            .collect()
    };
    let (Some(lv), Some(rv)) = (as_vars(la), as_vars(ra)) else {
        return Vec::new();
    };
    let mut sorted_l = lv.clone();
    let mut sorted_r = rv.clone();
    sorted_l.sort_unstable();
    sorted_r.sort_unstable();
    let distinct = {
        let mut d = sorted_l.clone();
        d.dedup();
        d.len() == lv.len()
    };
    if !distinct || sorted_l != sorted_r {
        return Vec::new();
    }
    let mut pairs = Vec::new();
    for (p, v) in lv.iter().enumerate() {
        let q = rv.iter().position(|r| r == v).expect("permutation");
        if p != q {
            let pair = (p.min(q), p.max(q));
            if !pairs.contains(&pair) {
                pairs.push(pair);
            }
        }
    }
    pairs
}

/// Compiles every axiom into residuals against the model's shared slots.
pub fn extract_constraints(
    theory: &Theory,
    model: &ParametricModel,
) -> Result<ConstraintSet, NetError> {
    let mut arms = Vec::new();
    let mut residuals = Vec::new();
    for axiom in &theory.axioms {
        for (first, second) in symmetry_pairs(&axiom.lhs, &axiom.rhs) {
            let connective = match &axiom.lhs {
                Term::App { connective, .. } => connective.clone(),
                Term::Var(_) => unreachable!("symmetry requires an application"),
            };
            residuals.push(Residual {
                axiom: axiom.name.clone(),
                kind: ResidualKind::WeightSymmetry {
                    connective,
                    first,
                    second,
                },
                arm: None,
            });
        }
        let arm_index = arms.len();
        arms.push(ArmPair {
            axiom: axiom.name.clone(),
            context_size: axiom.context_size,
            lhs: compile(model, &axiom.lhs, axiom.context_size)?,
            rhs: compile(model, &axiom.rhs, axiom.context_size)?,
        });
        for v in 0..(1usize << axiom.context_size) {
            residuals.push(Residual {
                axiom: axiom.name.clone(),
                kind: ResidualKind::Vertex {
                    assignment: crate::lawvere::assignment_bits(v, axiom.context_size),
                },
                arm: Some(arm_index),
            });
        }
    }
    Ok(ConstraintSet { arms, residuals })
}

fn symmetry_value(
    store: &ParameterStore,
    connective: &str,
    first: usize,
    second: usize,
) -> Result<f64, NetError> {
    let (w, _) = store
        .slot_values(connective)
        .ok_or_else(|| NetError::MissingSlot(connective.to_string()))?;
    Ok(w[first] - w[second])
}

/// Evaluates the full residual vector `G(W)` in declaration order.
pub fn evaluate(
    gset: &ConstraintSet,
    store: &ParameterStore,
    beta: Temperature,
) -> Result<DVector<f64>, NetError> {
    let mut out = DVector::zeros(gset.residuals.len());
    let mut scratch = Vec::new();
    let mut outputs = Vec::new();
    let mut input = Vec::new();
    for (i, r) in gset.residuals.iter().enumerate() {
        out[i] = match &r.kind {
            ResidualKind::WeightSymmetry {
                connective,
                first,
                second,
            } => symmetry_value(store, connective, *first, *second)?,
            ResidualKind::Vertex { assignment } => {
                let arm = &gset.arms[r.arm.expect("vertex residual has an arm")];
                input.clear();
                input.extend(assignment.iter().map(|&b| if b { 1.0 } else { 0.0 }));
                forward_into(&arm.lhs, store, &input, beta, &mut scratch, &mut outputs)?;
                let l = outputs[0];
                forward_into(&arm.rhs, store, &input, beta, &mut scratch, &mut outputs)?;
                l - outputs[0]
            }
        };
    }
    Ok(out)
}

/// The Jacobian of `G`: one row per residual, one column per parameter.
/// Symmetry rows are signed indicators; vertex rows come from reverse passes
/// over the two arms.
pub fn jacobian(
    gset: &ConstraintSet,
    store: &ParameterStore,
    beta: Temperature,
) -> Result<DMatrix<f64>, NetError> {
    let mut jac = DMatrix::zeros(gset.residuals.len(), store.len());
    let mut input = Vec::new();
    for (i, r) in gset.residuals.iter().enumerate() {
        match &r.kind {
            ResidualKind::WeightSymmetry {
                connective,
                first,
                second,
            } => {
                let range = store
                    .weight_range(connective)
                    .ok_or_else(|| NetError::MissingSlot(connective.clone()))?;
                jac[(i, range.start + first)] = 1.0;
                jac[(i, range.start + second)] = -1.0;
            }
            ResidualKind::Vertex { assignment } => {
                let arm = &gset.arms[r.arm.expect("vertex residual has an arm")];
                input.clear();
                input.extend(assignment.iter().map(|&b| if b { 1.0 } else { 0.0 }));
                let (_, tape) = forward(&arm.lhs, store, &input, beta)?;
                let (dl, _) = backward(&arm.lhs, store, tape, &[1.0])?;
                let (_, tape) = forward(&arm.rhs, store, &input, beta)?;
                let (dr, _) = backward(&arm.rhs, store, tape, &[1.0])?;
                for (j, (a, b)) in dl.iter().zip(&dr).enumerate() {
                    jac[(i, j)] = a - b;
                }
            }
        }
    }
    Ok(jac)
}

/// One row of the constraint report emitted by the CLI.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    pub axiom: String,
    pub kind: String,
    pub value: f64,
    pub gradient_norm: f64,
}

pub fn report(
    gset: &ConstraintSet,
    store: &ParameterStore,
    beta: Temperature,
) -> Result<Vec<ResidualReport>, NetError> {
    let values = evaluate(gset, store, beta)?;
    let jac = jacobian(gset, store, beta)?;
    Ok(gset
        .residuals
        .iter()
        .enumerate()
        .map(|(i, r)| ResidualReport {
            axiom: r.axiom.clone(),
            kind: match &r.kind {
                ResidualKind::WeightSymmetry {
                    connective,
                    first,
                    second,
                } => format!("symmetry w_{connective}[{first}] - w_{connective}[{second}]"),
                ResidualKind::Vertex { assignment } => format!(
                    "vertex {}",
                    assignment
                        .iter()
                        .map(|&b| if b { '1' } else { '0' })
                        .collect::<String>()
                ),
            },
            value: values[i],
            gradient_norm: jac.row(i).norm(),
        })
        .collect())
}

/// Sampled interior deviations per axiom, max over `samples` uniform points
/// of the unit cube. Diagnostic only; the manifold is defined by the vertex
/// residuals.
pub fn interior_audit(
    gset: &ConstraintSet,
    store: &ParameterStore,
    beta: Temperature,
    samples: usize,
    seed: u64,
) -> Result<Vec<(String, f64)>, NetError> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut scratch = Vec::new();
    let mut outputs = Vec::new();
    for arm in &gset.arms {
        let mut worst = 0.0f64;
        for _ in 0..samples {
            let input: Vec<f64> = (0..arm.context_size)
                .map(|_| rng.gen_range(0.0..1.0))
                .collect();
            forward_into(&arm.lhs, store, &input, beta, &mut scratch, &mut outputs)?;
            let l = outputs[0];
            forward_into(&arm.rhs, store, &input, beta, &mut scratch, &mut outputs)?;
            worst = worst.max((l - outputs[0]).abs());
        }
        out.push((arm.axiom.clone(), worst));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{assign_model, InitScheme};
    use crate::relax::sigmoid;
    use crate::theory::{bool_theory, parse_theory};

    fn temp(b: f64) -> Temperature {
        Temperature::new(b).unwrap()
    }

    fn comm_theory() -> Theory {
        parse_theory("theory C { op and:2; axiom comm_and: and(x, y) = and(y, x); }").unwrap()
    }

    #[test]
    fn commutativity_yields_one_symbolic_plus_four_vertex_residuals() {
        let t = comm_theory();
        let (model, _) = assign_model(&t, temp(8.0), InitScheme::Canonical);
        let gset = extract_constraints(&t, &model).unwrap();
        assert_eq!(gset.len(), 5);
        assert!(matches!(
            &gset.residuals()[0].kind,
            ResidualKind::WeightSymmetry { connective, first: 0, second: 1 } if connective == "and"
        ));
        assert_eq!(
            gset.residuals()[1..]
                .iter()
                .filter(|r| matches!(r.kind, ResidualKind::Vertex { .. }))
                .count(),
            4
        );
    }

    #[test]
    fn residual_counts_follow_the_formula() {
        let t = bool_theory();
        let (model, _) = assign_model(&t, temp(8.0), InitScheme::Canonical);
        let gset = extract_constraints(&t, &model).unwrap();
        // comm_and: 1+4, comm_or: 1+4, de_morgan: 4, distrib: 8, double_neg: 2
        assert_eq!(gset.len(), 1 + 4 + 1 + 4 + 4 + 8 + 2);
    }

    #[test]
    fn canonical_store_satisfies_symmetry_exactly() {
        let t = comm_theory();
        let (model, store) = assign_model(&t, temp(8.0), InitScheme::Canonical);
        let gset = extract_constraints(&t, &model).unwrap();
        let g = evaluate(&gset, &store, temp(8.0)).unwrap();
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn asymmetric_weights_show_up_in_the_symmetry_residual() {
        let t = comm_theory();
        let (model, mut store) = assign_model(&t, temp(8.0), InitScheme::Canonical);
        store.set_values(&[1.0, 2.0, -1.5]).unwrap();
        let gset = extract_constraints(&t, &model).unwrap();
        let g = evaluate(&gset, &store, temp(8.0)).unwrap();
        assert_eq!(g[0], -1.0);
    }

    #[test]
    fn de_morgan_vertex_residual_at_true_true_matches_direct_evaluation() {
        let t = bool_theory();
        let beta = 10.0;
        let (model, store) = assign_model(&t, temp(beta), InitScheme::Canonical);
        let gset = extract_constraints(&t, &model).unwrap();
        let g = evaluate(&gset, &store, temp(beta)).unwrap();

        // independent evaluation with the sigmoid oracle
        let and11 = sigmoid(beta * (1.0 + 1.0 - 1.5));
        let lhs = sigmoid(beta * (-2.0 * and11 + 1.0));
        let not1 = sigmoid(beta * (-2.0 + 1.0));
        let rhs = sigmoid(beta * (not1 + not1 - 0.5));
        let expected = lhs - rhs;

        // de_morgan block starts after comm_and (1+4) and comm_or (1+4);
        // vertex (1,1) is assignment index 3
        let idx = 10 + 3;
        assert!(matches!(
            &gset.residuals()[idx].kind,
            ResidualKind::Vertex { assignment } if assignment == &vec![true, true]
        ));
        assert!((g[idx] - expected).abs() < 1e-15);
        // magnitude stays below the cascaded gate error budget at beta = 10
        assert!(g[idx].abs() < 0.02);
        // frozen regression value
        assert!((g[idx] - (-6.646_989_942_425_829e-3)).abs() < 1e-12);
    }

    #[test]
    fn jacobian_symbolic_rows_are_signed_indicators() {
        let t = comm_theory();
        let (model, store) = assign_model(&t, temp(8.0), InitScheme::Canonical);
        let gset = extract_constraints(&t, &model).unwrap();
        let jac = jacobian(&gset, &store, temp(8.0)).unwrap();
        assert_eq!(
            jac.row(0).iter().copied().collect::<Vec<_>>(),
            vec![1.0, -1.0, 0.0]
        );
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let t = bool_theory();
        let beta = temp(6.0);
        let (model, store) = assign_model(&t, beta, InitScheme::Random { seed: 44, scale: 0.7 });
        let gset = extract_constraints(&t, &model).unwrap();
        let jac = jacobian(&gset, &store, beta).unwrap();
        let h = 1e-6;
        let mut probe = store.clone();
        for col in 0..store.len() {
            let mut vals = store.values().to_vec();
            vals[col] += h;
            probe.set_values(&vals).unwrap();
            let up = evaluate(&gset, &probe, beta).unwrap();
            vals[col] -= 2.0 * h;
            probe.set_values(&vals).unwrap();
            let down = evaluate(&gset, &probe, beta).unwrap();
            for row in 0..gset.len() {
                let num = (up[row] - down[row]) / (2.0 * h);
                let a = jac[(row, col)];
                let rel = (a - num).abs() / a.abs().max(num.abs()).max(1e-3);
                assert!(rel < 1e-5, "row {row} col {col}: {a} vs {num}");
            }
        }
    }

    #[test]
    fn residuals_ignore_slots_their_axiom_never_mentions() {
        let t = bool_theory();
        let (model, store) = assign_model(&t, temp(6.0), InitScheme::Canonical);
        let gset = extract_constraints(&t, &model).unwrap();
        let jac = jacobian(&gset, &store, temp(6.0)).unwrap();
        // distrib rows never touch the `not` slot
        let not_cols: Vec<usize> = store
            .weight_range("not")
            .unwrap()
            .chain(std::iter::once(store.bias_index("not").unwrap()))
            .collect();
        for (i, r) in gset.residuals().iter().enumerate() {
            if r.axiom == "distrib" {
                for &c in &not_cols {
                    assert_eq!(jac[(i, c)], 0.0);
                }
            }
        }
    }

    #[test]
    fn residual_multiset_is_invariant_under_axiom_reordering() {
        let a = parse_theory(
            "theory A { op and:2; op or:2; op not:1; \
             axiom dm: not(and(x,y)) = or(not(x),not(y)); \
             axiom comm: and(x,y) = and(y,x); }",
        )
        .unwrap();
        let b = parse_theory(
            "theory B { op and:2; op or:2; op not:1; \
             axiom comm: and(x,y) = and(y,x); \
             axiom dm: not(and(x,y)) = or(not(x),not(y)); }",
        )
        .unwrap();
        let beta = temp(7.0);
        let (ma, sa) = assign_model(&a, beta, InitScheme::Canonical);
        let (mb, sb) = assign_model(&b, beta, InitScheme::Canonical);
        let ga = evaluate(&extract_constraints(&a, &ma).unwrap(), &sa, beta).unwrap();
        let gb = evaluate(&extract_constraints(&b, &mb).unwrap(), &sb, beta).unwrap();
        let mut va: Vec<f64> = ga.iter().copied().collect();
        let mut vb: Vec<f64> = gb.iter().copied().collect();
        va.sort_by(f64::total_cmp);
        vb.sort_by(f64::total_cmp);
        assert_eq!(va, vb);
    }

    #[test]
    fn interior_audit_reports_per_axiom() {
        let t = bool_theory();
        let (model, store) = assign_model(&t, temp(8.0), InitScheme::Canonical);
        let gset = extract_constraints(&t, &model).unwrap();
        let audit = interior_audit(&gset, &store, temp(8.0), 50, 5).unwrap();
        assert_eq!(audit.len(), t.axioms.len());
        for (_, worst) in &audit {
            assert!(worst.is_finite() && *worst >= 0.0);
        }
        // deterministic for a fixed seed
        let again = interior_audit(&gset, &store, temp(8.0), 50, 5).unwrap();
        assert_eq!(audit, again);
    }

    #[test]
    fn non_symmetry_axioms_get_no_symbolic_residuals() {
        // repeated variables or differing connectives fall through to
        // numeric-only handling
        let t = parse_theory(
            "theory T { op and:2; op or:2; \
             axiom idem: and(x, x) = x; \
             axiom absorb: and(x, or(x, y)) = x; }",
        )
        .unwrap();
        let (model, _) = assign_model(&t, temp(8.0), InitScheme::Canonical);
        let gset = extract_constraints(&t, &model).unwrap();
        assert!(gset
            .residuals()
            .iter()
            .all(|r| matches!(r.kind, ResidualKind::Vertex { .. })));
    }
}
