//! Executable verification checks: truth-table correctness of compiled
//! networks, exactness of the gate error bounds, equivalence of axiom arms,
//! extract/recompile round-trips, functoriality of compilation, and the
//! expressivity census against a brute-force truth-table oracle.
//!
//! Discrete reference values come from [`discrete`], a standalone boolean
//! evaluator that never touches network code; network outputs are always
//! compared against it, not against each other.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::lawvere::{self, EqualityMode, LawvereError, TupleMorphism};
use crate::net::{
    assign_model, compile, compile_many, compile_tuple, extract_model, forward_into,
    InitScheme, NetError, NetworkGraph, ParameterStore,
};
use crate::relax::{error_bound, gate_eval, GateKernel, RelaxError, Temperature};
use crate::theory::{Term, Theory};

#[derive(Debug, Clone, Error)]
pub enum VerifyError {
    #[error("vertex budget exceeded: {0} variables")]
    TooManyVariables(usize),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Lawvere(#[from] LawvereError),
    #[error(transparent)]
    Relax(#[from] RelaxError),
    #[error("connective `{0}` has no discrete interpretation")]
    NoDiscreteInterpretation(String),
}

/// The independent truth-table oracle. Deliberately separate from both the
/// network evaluator and the term-equality machinery.
pub mod discrete {
    use super::VerifyError;
    use crate::theory::Term;

    pub fn eval(term: &Term, assignment: &[bool]) -> Result<bool, VerifyError> {
        match term {
            Term::Var(i) => Ok(assignment[*i]),
            Term::App { connective, args } => {
                let mut vals = [false; 8];
                for (slot, a) in vals.iter_mut().zip(args) {
                    *slot = eval(a, assignment)?;
                }
                let v = &vals[..args.len()];
                match (connective.as_str(), args.len()) {
                    ("and", 2) => Ok(v[0] && v[1]),
                    ("or", 2) => Ok(v[0] || v[1]),
                    ("not", 1) => Ok(!v[0]),
                    ("xor", 2) => Ok(v[0] ^ v[1]),
                    ("nand", 2) => Ok(!(v[0] && v[1])),
                    ("nor", 2) => Ok(!(v[0] || v[1])),
                    ("implies", 2) => Ok(!v[0] || v[1]),
                    ("true", 0) => Ok(true),
                    ("false", 0) => Ok(false),
                    (name, _) => Err(VerifyError::NoDiscreteInterpretation(name.to_string())),
                }
            }
        }
    }

    /// Truth table as a bitmask: bit `v` is the value on the assignment
    /// whose bit `i` gives variable `i`.
    pub fn table(term: &Term, n: usize) -> Result<u64, VerifyError> {
        let mut out = 0u64;
        for v in 0..(1usize << n) {
            let assignment: Vec<bool> = (0..n).map(|i| (v >> i) & 1 == 1).collect();
            if eval(term, &assignment)? {
                out |= 1 << v;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
}

/// A failing input together with what was observed and expected there.
#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    pub context: String,
    pub input: Vec<f64>,
    pub observed: f64,
    pub expected: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckEntry {
    pub name: String,
    pub status: CheckStatus,
    /// Headline measurement, compared against `bound`.
    pub measured: f64,
    pub bound: f64,
    pub witnesses: Vec<Witness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl CheckEntry {
    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct VerificationReport {
    pub entries: Vec<CheckEntry>,
}

impl VerificationReport {
    pub fn push(&mut self, entry: CheckEntry) {
        self.entries.push(entry);
    }

    pub fn all_passed(&self) -> bool {
        self.entries.iter().all(CheckEntry::passed)
    }

    pub fn render_table(&self) -> String {
        let name_width = self
            .entries
            .iter()
            .map(|e| e.name.len())
            .max()
            .unwrap_or(4)
            .max(5);
        let mut out = format!("{:<name_width$}  {:<6}  {:>13}  {:>13}\n", "check", "status", "measured", "bound");
        for e in &self.entries {
            out.push_str(&format!(
                "{:<name_width$}  {:<6}  {:>13.6e}  {:>13.6e}\n",
                e.name,
                if e.passed() { "pass" } else { "FAIL" },
                e.measured,
                e.bound,
            ));
            if let Some(d) = &e.detail {
                out.push_str(&format!("{:<name_width$}    {}\n", "", d));
            }
            for w in e.witnesses.iter().take(4) {
                out.push_str(&format!(
                    "{:<name_width$}    witness {} input {:?}: observed {} expected {}\n",
                    "", w.context, w.input, w.observed, w.expected
                ));
            }
        }
        out
    }
}

const MAX_WITNESSES: usize = 8;

fn vertex_inputs(n: usize) -> impl Iterator<Item = (usize, Vec<f64>, Vec<bool>)> {
    (0..(1usize << n)).map(move |v| {
        let bits: Vec<bool> = (0..n).map(|i| (v >> i) & 1 == 1).collect();
        let input: Vec<f64> = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        (v, input, bits)
    })
}

/// Compares network forward values against the discrete oracle at every
/// boolean vertex; passes when the worst deviation stays within `tol`.
pub fn truth_table_check(
    graph: &NetworkGraph,
    expr: &Term,
    context_size: usize,
    store: &ParameterStore,
    beta: Temperature,
    tol: f64,
) -> Result<CheckEntry, VerifyError> {
    if context_size > 20 {
        return Err(VerifyError::TooManyVariables(context_size));
    }
    let mut worst = 0.0f64;
    let mut witnesses = Vec::new();
    let mut scratch = Vec::new();
    let mut outputs = Vec::new();
    for (_, input, bits) in vertex_inputs(context_size) {
        let truth = if discrete::eval(expr, &bits)? { 1.0 } else { 0.0 };
        forward_into(graph, store, &input, beta, &mut scratch, &mut outputs)?;
        let dev = (outputs[0] - truth).abs();
        if dev > worst {
            worst = dev;
        }
        if dev > tol && witnesses.len() < MAX_WITNESSES {
            witnesses.push(Witness {
                context: format!("beta={beta}"),
                input,
                observed: outputs[0],
                expected: truth,
            });
        }
    }
    Ok(CheckEntry {
        name: format!("truth_table[{expr}]"),
        status: if worst <= tol { CheckStatus::Pass } else { CheckStatus::Fail },
        measured: worst,
        bound: tol,
        witnesses,
        detail: None,
    })
}

/// Max output difference of two equal-arity networks over all boolean
/// vertices plus the supplied interior samples.
pub fn arm_equivalence_check(
    left: &NetworkGraph,
    right: &NetworkGraph,
    store: &ParameterStore,
    beta: Temperature,
    interior_samples: &[Vec<f64>],
    tol: f64,
) -> Result<CheckEntry, VerifyError> {
    if left.input_count() != right.input_count() {
        return Err(VerifyError::Net(NetError::CompositionArity {
            expected: left.input_count(),
            found: right.input_count(),
        }));
    }
    let n = left.input_count();
    if n > 20 {
        return Err(VerifyError::TooManyVariables(n));
    }
    let mut worst = 0.0f64;
    let mut witnesses = Vec::new();
    let mut scratch = Vec::new();
    let mut outputs = Vec::new();
    let vertices: Vec<Vec<f64>> = vertex_inputs(n).map(|(_, input, _)| input).collect();
    for input in vertices.iter().chain(interior_samples) {
        forward_into(left, store, input, beta, &mut scratch, &mut outputs)?;
        let l = outputs[0];
        forward_into(right, store, input, beta, &mut scratch, &mut outputs)?;
        let r = outputs[0];
        let dev = (l - r).abs();
        if dev > worst {
            worst = dev;
        }
        if dev > tol && witnesses.len() < MAX_WITNESSES {
            witnesses.push(Witness {
                context: format!("beta={beta}"),
                input: input.clone(),
                observed: l,
                expected: r,
            });
        }
    }
    Ok(CheckEntry {
        name: "arm_equivalence".into(),
        status: if worst <= tol { CheckStatus::Pass } else { CheckStatus::Fail },
        measured: worst,
        bound: tol,
        witnesses,
        detail: None,
    })
}

/// Exactness of the closed-form gate error bounds on a temperature grid:
/// every vertex error stays within the bound, the worst-case vertices attain
/// it to 1e-12, and the remaining vertices stay strictly below it.
pub fn gate_bound_check(beta_grid: &[f64]) -> Result<CheckEntry, VerifyError> {
    let mut worst_violation = 0.0f64;
    let mut witnesses = Vec::new();
    // (kernel, worst-case vertices, strict vertices)
    let gates = [
        ("and", vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]], vec![vec![0.0, 0.0]]),
        ("or", vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]], vec![vec![1.0, 1.0]]),
        ("not", vec![vec![0.0], vec![1.0]], vec![]),
    ];
    for &beta in beta_grid {
        let beta = Temperature::new(beta)?;
        for (name, attaining, strict) in &gates {
            let arity = if *name == "not" { 1 } else { 2 };
            let kernel = GateKernel::for_connective(name, arity);
            let bound = error_bound(name, beta)?;
            let truth = |input: &[f64]| -> f64 {
                match *name {
                    "and" => {
                        if input.iter().all(|&x| x == 1.0) {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    "or" => {
                        if input.contains(&1.0) { 1.0 } else { 0.0 }
                    }
                    _ => 1.0 - input[0],
                }
            };
            let mut check = |input: &Vec<f64>, must_attain: bool| -> Result<(), VerifyError> {
                let out = gate_eval(
                    &kernel,
                    &kernel.canonical_weights,
                    kernel.canonical_bias,
                    input,
                    beta,
                )?;
                let err = (out - truth(input)).abs();
                let violation = if must_attain {
                    (err - bound).abs()
                } else if err < bound {
                    0.0
                } else {
                    err - bound + 1e-12
                };
                if violation > worst_violation {
                    worst_violation = violation;
                }
                if violation > 1e-12 && witnesses.len() < MAX_WITNESSES {
                    witnesses.push(Witness {
                        context: format!("{name} beta={beta}"),
                        input: input.clone(),
                        observed: err,
                        expected: bound,
                    });
                }
                Ok(())
            };
            for input in attaining {
                check(input, true)?;
            }
            for input in strict {
                check(input, false)?;
            }
        }
    }
    Ok(CheckEntry {
        name: "gate_error_bounds".into(),
        status: if worst_violation <= 1e-12 { CheckStatus::Pass } else { CheckStatus::Fail },
        measured: worst_violation,
        bound: 1e-12,
        witnesses,
        detail: None,
    })
}

/// Per-axiom deviation envelope over a temperature grid: max vertex
/// deviation between the two compiled arms must decrease strictly in beta,
/// and the exponential rate fitted to
/// `dev ~ C * (beta sqrt2/4)^d * exp(-alpha beta)` must come out at least
/// 0.5. Degenerate axioms with zero deviation pass outright.
pub fn axiom_envelope_check(
    theory: &Theory,
    beta_grid: &[f64],
) -> Result<Vec<CheckEntry>, VerifyError> {
    let mut entries = Vec::new();
    for axiom in &theory.axioms {
        let d = axiom.lhs.depth().max(axiom.rhs.depth());
        let mut devs = Vec::with_capacity(beta_grid.len());
        for &beta in beta_grid {
            let beta_t = Temperature::new(beta)?;
            let (model, store) = assign_model(theory, beta_t, InitScheme::Canonical);
            let lhs = compile(&model, &axiom.lhs, axiom.context_size)?;
            let rhs = compile(&model, &axiom.rhs, axiom.context_size)?;
            let mut worst = 0.0f64;
            let mut scratch = Vec::new();
            let mut outputs = Vec::new();
            for (_, input, _) in vertex_inputs(axiom.context_size) {
                forward_into(&lhs, &store, &input, beta_t, &mut scratch, &mut outputs)?;
                let l = outputs[0];
                forward_into(&rhs, &store, &input, beta_t, &mut scratch, &mut outputs)?;
                worst = worst.max((l - outputs[0]).abs());
            }
            devs.push(worst);
        }
        let all_tiny = devs.iter().all(|&d| d <= 1e-15);
        if all_tiny {
            entries.push(CheckEntry {
                name: format!("axiom_envelope[{}]", axiom.name),
                status: CheckStatus::Pass,
                measured: 0.0,
                bound: 0.5,
                witnesses: vec![],
                detail: Some("deviation is zero on the whole grid".into()),
            });
            continue;
        }
        // "eventually decreasing": the longest strictly decreasing tail must
        // span at least two grid points; the rate is fitted on that tail
        let mut tail_start = devs.len() - 1;
        while tail_start > 0 && devs[tail_start - 1] > devs[tail_start] {
            tail_start -= 1;
        }
        let tail_devs = &devs[tail_start..];
        let tail_betas = &beta_grid[tail_start..];
        let eventually_decreasing = tail_devs.len() >= 2;
        let (alpha, c) = if eventually_decreasing {
            // least squares on ln dev - d ln(beta sqrt2/4) = ln C - alpha beta
            let ys: Vec<f64> = tail_devs
                .iter()
                .zip(tail_betas)
                .map(|(&dev, &beta)| {
                    dev.max(1e-300).ln()
                        - (d as f64) * (beta * std::f64::consts::SQRT_2 / 4.0).ln()
                })
                .collect();
            let m = tail_betas.len() as f64;
            let sum_b: f64 = tail_betas.iter().sum();
            let sum_y: f64 = ys.iter().sum();
            let sum_bb: f64 = tail_betas.iter().map(|b| b * b).sum();
            let sum_by: f64 = tail_betas.iter().zip(&ys).map(|(b, y)| b * y).sum();
            let slope = (m * sum_by - sum_b * sum_y) / (m * sum_bb - sum_b * sum_b);
            (-slope, ((sum_y - slope * sum_b) / m).exp())
        } else {
            (f64::NAN, f64::NAN)
        };
        let pass = eventually_decreasing && alpha >= 0.5;
        let mut witnesses = Vec::new();
        if !pass {
            witnesses.extend(devs.iter().zip(beta_grid).map(|(&dev, &beta)| Witness {
                context: format!("beta={beta}"),
                input: vec![],
                observed: dev,
                expected: 0.0,
            }));
        }
        entries.push(CheckEntry {
            name: format!("axiom_envelope[{}]", axiom.name),
            status: if pass { CheckStatus::Pass } else { CheckStatus::Fail },
            measured: alpha,
            bound: 0.5,
            witnesses,
            detail: Some(format!(
                "depth={d} alpha={alpha:.4} C={c:.4e} decreasing_from_beta={}",
                beta_grid[tail_start]
            )),
        });
    }
    Ok(entries)
}

/// Extract-recompile round trip: forward values must be bit-identical on all
/// boolean vertices and `samples` interior points.
pub fn roundtrip_check(
    graph: &NetworkGraph,
    store: &ParameterStore,
    beta: Temperature,
    samples: usize,
    seed: u64,
) -> Result<CheckEntry, VerifyError> {
    let n = graph.input_count();
    if n > 20 {
        return Err(VerifyError::TooManyVariables(n));
    }
    let (model, extracted_store) = extract_model(graph, store, beta)?;
    let terms = graph.to_terms();
    let recompiled = compile_many(&model, &terms, n)?;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut inputs: Vec<Vec<f64>> = vertex_inputs(n).map(|(_, i, _)| i).collect();
    for _ in 0..samples {
        inputs.push((0..n).map(|_| rng.gen_range(0.0..1.0)).collect());
    }
    let mut worst = 0.0f64;
    let mut witnesses = Vec::new();
    let mut scratch = Vec::new();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for input in &inputs {
        forward_into(graph, store, input, beta, &mut scratch, &mut a)?;
        let original = a.clone();
        forward_into(&recompiled, &extracted_store, input, beta, &mut scratch, &mut b)?;
        for (x, y) in original.iter().zip(&b) {
            let dev = if x.to_bits() == y.to_bits() { 0.0 } else { (x - y).abs().max(f64::MIN_POSITIVE) };
            if dev > worst {
                worst = dev;
            }
            if dev > 0.0 && witnesses.len() < MAX_WITNESSES {
                witnesses.push(Witness {
                    context: "roundtrip".into(),
                    input: input.clone(),
                    observed: *y,
                    expected: *x,
                });
            }
        }
    }
    Ok(CheckEntry {
        name: "roundtrip".into(),
        status: if worst == 0.0 { CheckStatus::Pass } else { CheckStatus::Fail },
        measured: worst,
        bound: 0.0,
        witnesses,
        detail: None,
    })
}

fn random_term(
    rng: &mut rand_chacha::ChaCha8Rng,
    theory: &Theory,
    n_vars: usize,
    depth: usize,
) -> Term {
    let applicable: Vec<_> = theory.connectives.iter().filter(|c| c.arity > 0).collect();
    if depth == 0 || applicable.is_empty() || rng.gen_bool(0.25) {
        return Term::Var(rng.gen_range(0..n_vars));
    }
    let c = applicable[rng.gen_range(0..applicable.len())];
    Term::app(
        c.name.clone(),
        (0..c.arity)
            .map(|_| random_term(rng, theory, n_vars, depth - 1))
            .collect(),
    )
}

/// Identity and composition preservation of compilation: the compiled
/// composite of two random term tuples must agree with running the compiled
/// parts in sequence, to 1e-12, under shared parameters.
pub fn functoriality_check(
    theory: &Theory,
    store: &ParameterStore,
    beta: Temperature,
    pairs: usize,
    seed: u64,
) -> Result<CheckEntry, VerifyError> {
    let (model, _) = assign_model(theory, beta, InitScheme::Canonical);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut witnesses = Vec::new();
    let mut scratch = Vec::new();
    let mut mid = Vec::new();
    let mut two_step = Vec::new();
    let mut one_step = Vec::new();
    for pair in 0..pairs {
        let n = rng.gen_range(1..=3);
        let m = rng.gen_range(1..=3);
        let k = rng.gen_range(1..=3);
        // every few pairs, force f = id to exercise identity preservation
        let f = if pair % 10 == 0 {
            TupleMorphism::identity(n)
        } else {
            TupleMorphism::new(
                n,
                (0..m).map(|_| random_term(&mut rng, theory, n, 2)).collect(),
            )
            .expect("generated terms fit the context")
        };
        let g = TupleMorphism::new(
            f.target_arity(),
            (0..k)
                .map(|_| random_term(&mut rng, theory, f.target_arity(), 2))
                .collect(),
        )
        .expect("generated terms fit the context");
        let composite = lawvere::compose(&f, &g)?;

        let f_graph = compile_tuple(&model, &f)?;
        let g_graph = compile_tuple(&model, &g)?;
        let c_graph = compile_tuple(&model, &composite)?;

        for _ in 0..3 {
            let input: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            forward_into(&f_graph, store, &input, beta, &mut scratch, &mut mid)?;
            let mid_vals = mid.clone();
            forward_into(&g_graph, store, &mid_vals, beta, &mut scratch, &mut two_step)?;
            forward_into(&c_graph, store, &input, beta, &mut scratch, &mut one_step)?;
            for (a, b) in two_step.iter().zip(&one_step) {
                let dev = (a - b).abs();
                if dev > worst {
                    worst = dev;
                }
                if dev > 1e-12 && witnesses.len() < MAX_WITNESSES {
                    witnesses.push(Witness {
                        context: format!("pair {pair}"),
                        input: input.clone(),
                        observed: *b,
                        expected: *a,
                    });
                }
            }
        }
    }
    Ok(CheckEntry {
        name: "functoriality".into(),
        status: if worst <= 1e-12 { CheckStatus::Pass } else { CheckStatus::Fail },
        measured: worst,
        bound: 1e-12,
        witnesses,
        detail: Some(format!("{pairs} random pairs, depth <= 2")),
    })
}

/// Outcome of the expressivity census: the verdict plus the reachable
/// function sets from both routes.
#[derive(Debug, Clone)]
pub struct CensusOutcome {
    pub entry: CheckEntry,
    /// Truth tables of the enumerated term classes (oracle route).
    pub class_tables: BTreeSet<u64>,
    /// Thresholded network functions of the class representatives.
    pub network_tables: BTreeSet<u64>,
    pub class_count: usize,
}

/// Enumerates term classes, compiles each representative, thresholds its
/// outputs at 0.5 on every vertex at a large beta, and compares the induced
/// boolean functions against the brute-force oracle tables: members of one
/// class must agree, distinct classes must differ, and the two reachable
/// sets must coincide.
pub fn expressivity_census(
    theory: &Theory,
    context_size: usize,
    max_depth: usize,
    beta_large: Temperature,
    cap: usize,
) -> Result<CensusOutcome, VerifyError> {
    if context_size > 6 {
        return Err(VerifyError::TooManyVariables(context_size));
    }
    let classes = lawvere::enumerate_terms(
        theory,
        context_size,
        max_depth,
        EqualityMode::BooleanSemantics,
        cap,
    )?;
    let (model, store) = assign_model(theory, beta_large, InitScheme::Canonical);

    let threshold_table = |term: &Term| -> Result<u64, VerifyError> {
        let graph = compile(&model, term, context_size)?;
        let mut scratch = Vec::new();
        let mut outputs = Vec::new();
        let mut mask = 0u64;
        for (v, input, _) in vertex_inputs(context_size) {
            forward_into(&graph, &store, &input, beta_large, &mut scratch, &mut outputs)?;
            if outputs[0] >= 0.5 {
                mask |= 1 << v;
            }
        }
        Ok(mask)
    };

    let mut class_tables = BTreeSet::new();
    let mut network_tables = BTreeSet::new();
    let mut witnesses = Vec::new();
    let mut mismatches = 0usize;
    for class in &classes {
        let oracle_table = discrete::table(&class.representative, context_size)?;
        class_tables.insert(oracle_table);
        let net_table = threshold_table(&class.representative)?;
        network_tables.insert(net_table);
        if net_table != oracle_table && witnesses.len() < MAX_WITNESSES {
            mismatches += 1;
            witnesses.push(Witness {
                context: format!("class {}", class.representative),
                input: vec![],
                observed: net_table as f64,
                expected: oracle_table as f64,
            });
        }
        // equal terms must induce the same network function
        for member in &class.members {
            let member_table = threshold_table(member)?;
            if member_table != net_table {
                mismatches += 1;
                if witnesses.len() < MAX_WITNESSES {
                    witnesses.push(Witness {
                        context: format!("member {member} of class {}", class.representative),
                        input: vec![],
                        observed: member_table as f64,
                        expected: net_table as f64,
                    });
                }
            }
        }
    }
    let distinct_ok = network_tables.len() == classes.len();
    let sets_match = class_tables == network_tables;
    let pass = mismatches == 0 && distinct_ok && sets_match;
    let entry = CheckEntry {
        name: "expressivity_census".into(),
        status: if pass { CheckStatus::Pass } else { CheckStatus::Fail },
        measured: mismatches as f64,
        bound: 0.0,
        witnesses,
        detail: Some(format!(
            "{} classes, {} reachable functions at beta={beta_large}",
            classes.len(),
            network_tables.len()
        )),
    };
    Ok(CensusOutcome {
        entry,
        class_tables,
        network_tables,
        class_count: classes.len(),
    })
}

/// Streams every term of the theory up to `max_depth` over each context size
/// in `1..=max_vars`, compiles it with canonical parameters, and checks it
/// against the discrete oracle: forward within `tol` at `beta`, and
/// 0.5-thresholded outputs exact at `beta_threshold`. Batches run in
/// parallel with a deterministic reduction.
pub fn truth_table_sweep(
    theory: &Theory,
    max_vars: usize,
    max_depth: usize,
    beta: Temperature,
    tol: f64,
    beta_threshold: Temperature,
    cap: usize,
) -> Result<CheckEntry, VerifyError> {
    const BATCH: usize = 8192;
    let mut worst = 0.0f64;
    let mut threshold_errors = 0usize;
    let mut witnesses: Vec<Witness> = Vec::new();
    let mut total_terms = 0usize;

    for n in 1..=max_vars {
        let (model, store) = assign_model(theory, beta, InitScheme::Canonical);
        let vertices: Vec<(Vec<f64>, Vec<bool>)> = vertex_inputs(n)
            .map(|(_, input, bits)| (input, bits))
            .collect();
        let inputs: Vec<Vec<f64>> = vertices.iter().map(|(i, _)| i.clone()).collect();
        let betas = [beta, beta_threshold];
        let process = |batch: &[Term]| -> Result<(f64, usize, Vec<Witness>), VerifyError> {
            batch
                .par_iter()
                .map_init(
                    || (Vec::new(), Vec::new()),
                    |(scratch, grid), term| -> Result<(f64, usize, Vec<Witness>), VerifyError> {
                        let graph = compile(&model, term, n)?;
                        let mut local_worst = 0.0f64;
                        let mut local_thresh = 0usize;
                        let mut local_witnesses = Vec::new();
                        crate::net::forward_grid(&graph, &store, &inputs, &betas, scratch, grid)?;
                        for (v, (input, bits)) in vertices.iter().enumerate() {
                            let truth = if discrete::eval(term, bits)? { 1.0 } else { 0.0 };
                            let smooth = grid[2 * v];
                            let sharp = grid[2 * v + 1];
                            let dev = (smooth - truth).abs();
                            if dev > local_worst {
                                local_worst = dev;
                            }
                            if dev > tol && local_witnesses.len() < 2 {
                                local_witnesses.push(Witness {
                                    context: format!("{term} beta={beta}"),
                                    input: input.clone(),
                                    observed: smooth,
                                    expected: truth,
                                });
                            }
                            let thresholded = if sharp >= 0.5 { 1.0 } else { 0.0 };
                            if thresholded != truth {
                                local_thresh += 1;
                                if local_witnesses.len() < 2 {
                                    local_witnesses.push(Witness {
                                        context: format!(
                                            "{term} thresholded beta={beta_threshold}"
                                        ),
                                        input: input.clone(),
                                        observed: thresholded,
                                        expected: truth,
                                    });
                                }
                            }
                        }
                        Ok((local_worst, local_thresh, local_witnesses))
                    },
                )
                .try_reduce(
                    || (0.0, 0, Vec::new()),
                    |mut a, b| {
                        a.0 = a.0.max(b.0);
                        a.1 += b.1;
                        if a.2.len() < MAX_WITNESSES {
                            a.2.extend(b.2);
                        }
                        Ok(a)
                    },
                )
        };

        let mut batch: Vec<Term> = Vec::with_capacity(BATCH);
        let flush = |batch: &mut Vec<Term>,
                         worst: &mut f64,
                         threshold_errors: &mut usize,
                         witnesses: &mut Vec<Witness>|
         -> Result<(), VerifyError> {
            if batch.is_empty() {
                return Ok(());
            }
            let (w, t, mut ws) = process(batch)?;
            *worst = worst.max(w);
            *threshold_errors += t;
            if witnesses.len() < MAX_WITNESSES {
                witnesses.append(&mut ws);
                witnesses.truncate(MAX_WITNESSES);
            }
            batch.clear();
            Ok(())
        };

        lawvere::visit_terms(theory, n, max_depth, cap, |t| -> Result<(), VerifyError> {
            total_terms += 1;
            batch.push(t.clone());
            if batch.len() >= BATCH {
                flush(&mut batch, &mut worst, &mut threshold_errors, &mut witnesses)?;
            }
            Ok(())
        })?;
        flush(&mut batch, &mut worst, &mut threshold_errors, &mut witnesses)?;
    }

    let pass = worst <= tol && threshold_errors == 0;
    Ok(CheckEntry {
        name: "truth_table_sweep".into(),
        status: if pass { CheckStatus::Pass } else { CheckStatus::Fail },
        measured: worst,
        bound: tol,
        witnesses,
        detail: Some(format!(
            "{total_terms} terms to depth {max_depth} over up to {max_vars} variables; {threshold_errors} threshold mismatches at beta={beta_threshold}"
        )),
    })
}
