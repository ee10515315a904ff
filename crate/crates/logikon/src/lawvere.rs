//! Computational content of the free category on a signature and its quotient
//! by the axioms: term tuples as morphisms `n -> m`, composition as
//! substitution, structural morphisms (projections, diagonals, permutations),
//! equality of terms modulo axioms, and bounded term enumeration into
//! equivalence classes.

use std::collections::{HashMap, HashSet, VecDeque};

use thiserror::Error;

use crate::theory::{Term, Theory};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum LawvereError {
    #[error("term uses variable x{var} outside context of size {context}")]
    VariableOutOfContext { var: usize, context: usize },
    #[error("arity mismatch: composing {lhs_target} outputs into {rhs_source} inputs")]
    CompositionArity { lhs_target: usize, rhs_source: usize },
    #[error("index {index} out of range for arity {arity}")]
    IndexOutOfRange { index: usize, arity: usize },
    #[error("sequence {0:?} is not a permutation")]
    NotAPermutation(Vec<usize>),
    #[error("connective `{0}` has no boolean interpretation")]
    NoBooleanInterpretation(String),
    #[error("term is not well-formed over the theory")]
    MalformedTerm,
    #[error("term budget of {cap} exceeded")]
    BudgetExceeded { cap: usize },
}

/// A morphism `n -> m` of the free (or quotient) category: an `m`-tuple of
/// terms over a context of `n` variables.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TupleMorphism {
    source_arity: usize,
    components: Vec<Term>,
}

impl TupleMorphism {
    pub fn new(source_arity: usize, components: Vec<Term>) -> Result<Self, LawvereError> {
        for c in &components {
            let need = c.min_context();
            if need > source_arity {
                return Err(LawvereError::VariableOutOfContext {
                    var: need - 1,
                    context: source_arity,
                });
            }
        }
        Ok(TupleMorphism {
            source_arity,
            components,
        })
    }

    /// The identity tuple `<x0, …, x{n-1}>`.
    pub fn identity(n: usize) -> Self {
        TupleMorphism {
            source_arity: n,
            components: (0..n).map(Term::Var).collect(),
        }
    }

    pub fn source_arity(&self) -> usize {
        self.source_arity
    }

    pub fn target_arity(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Term] {
        &self.components
    }
}

/// Replaces variable `i` with `args[i]` throughout.
pub fn substitute(term: &Term, args: &[Term]) -> Term {
    match term {
        Term::Var(i) => args[*i].clone(),
        Term::App { connective, args: ts } => Term::App {
            connective: connective.clone(),
            args: ts.iter().map(|t| substitute(t, args)).collect(),
        },
    }
}

/// Interprets a term over context `n` as the canonical morphism `n -> 1`.
pub fn interpret(term: &Term, context_size: usize) -> Result<TupleMorphism, LawvereError> {
    TupleMorphism::new(context_size, vec![term.clone()])
}

/// Composes `f: n -> m` with `g: m -> k` by substituting the components of
/// `f` for the variables of `g`.
pub fn compose(f: &TupleMorphism, g: &TupleMorphism) -> Result<TupleMorphism, LawvereError> {
    if f.target_arity() != g.source_arity() {
        return Err(LawvereError::CompositionArity {
            lhs_target: f.target_arity(),
            rhs_source: g.source_arity(),
        });
    }
    Ok(TupleMorphism {
        source_arity: f.source_arity,
        components: g
            .components
            .iter()
            .map(|c| substitute(c, &f.components))
            .collect(),
    })
}

/// The structural morphisms every Lawvere theory carries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Structural {
    /// `n -> 1`, picking out variable `index`.
    Projection { index: usize, arity: usize },
    /// `1 -> n`, duplicating the single input `n` times.
    Diagonal { arity: usize },
    /// `n -> n`, component `i` reads variable `perm[i]`.
    Permutation(Vec<usize>),
}

pub fn structural(kind: Structural) -> Result<TupleMorphism, LawvereError> {
    match kind {
        Structural::Projection { index, arity } => {
            if index >= arity {
                return Err(LawvereError::IndexOutOfRange { index, arity });
            }
            TupleMorphism::new(arity, vec![Term::Var(index)])
        }
        Structural::Diagonal { arity } => {
            TupleMorphism::new(1, (0..arity).map(|_| Term::Var(0)).collect())
        }
        Structural::Permutation(perm) => {
            let n = perm.len();
            let mut seen = vec![false; n];
            for &i in &perm {
                if i >= n || seen[i] {
                    return Err(LawvereError::NotAPermutation(perm));
                }
                seen[i] = true;
            }
            TupleMorphism::new(n, perm.into_iter().map(Term::Var).collect())
        }
    }
}

/// Discrete interpretation of a connective name, if it names a standard
/// boolean operation of the right arity.
pub fn boolean_op(name: &str, arity: usize) -> Option<fn(&[bool]) -> bool> {
    match (name, arity) {
        ("and", 2) => Some(|a| a[0] && a[1]),
        ("or", 2) => Some(|a| a[0] || a[1]),
        ("not", 1) => Some(|a| !a[0]),
        ("xor", 2) => Some(|a| a[0] ^ a[1]),
        ("nand", 2) => Some(|a| !(a[0] && a[1])),
        ("nor", 2) => Some(|a| !(a[0] || a[1])),
        ("implies", 2) => Some(|a| !a[0] || a[1]),
        ("true", 0) => Some(|_| true),
        ("false", 0) => Some(|_| false),
        _ => None,
    }
}

/// A theory has a boolean interpretation when every connective names a
/// standard boolean operation.
pub fn has_boolean_interpretation(theory: &Theory) -> bool {
    theory
        .connectives
        .iter()
        .all(|c| boolean_op(&c.name, c.arity).is_some())
}

/// Evaluates a term under the standard boolean interpretation.
pub fn eval_bool(term: &Term, assignment: &[bool]) -> Result<bool, LawvereError> {
    match term {
        Term::Var(i) => assignment
            .get(*i)
            .copied()
            .ok_or(LawvereError::VariableOutOfContext {
                var: *i,
                context: assignment.len(),
            }),
        Term::App { connective, args } => {
            let op = boolean_op(connective, args.len())
                .ok_or_else(|| LawvereError::NoBooleanInterpretation(connective.clone()))?;
            let vals = args
                .iter()
                .map(|a| eval_bool(a, assignment))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(op(&vals))
        }
    }
}

/// Assignment `v` over `n` variables: bit `i` of `v` is the value of `x_i`.
pub fn assignment_bits(v: usize, n: usize) -> Vec<bool> {
    (0..n).map(|i| (v >> i) & 1 == 1).collect()
}

/// The truth table of a term over `n` variables, bit `v` set when the term is
/// true on [`assignment_bits`]`(v, n)`.
pub fn truth_table(term: &Term, n: usize) -> Result<u64, LawvereError> {
    debug_assert!(n <= 6);
    let mut table = 0u64;
    for v in 0..(1usize << n) {
        if eval_bool(term, &assignment_bits(v, n))? {
            table |= 1 << v;
        }
    }
    Ok(table)
}

/// Outcome of an equality query in the quotient category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EqualityVerdict {
    Equal,
    /// A boolean assignment on which the two terms evaluate differently.
    Distinct(Vec<bool>),
    /// Bounded rewriting found no common form within the depth bound.
    Unknown(usize),
}

/// How to decide equality modulo axioms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EqualityMode {
    /// Exhaustive truth tables; sound and complete for theories with a
    /// standard boolean interpretation.
    BooleanSemantics,
    /// Bidirectional axiom rewriting, up to the given number of rewrite
    /// steps from each side. Can return `Unknown`.
    Rewrite { depth: usize },
}

/// Decides whether two terms over the same context are equal in the quotient
/// by the theory's axioms.
pub fn equal_modulo_axioms(
    a: &Term,
    b: &Term,
    theory: &Theory,
    context_size: usize,
    mode: EqualityMode,
) -> Result<EqualityVerdict, LawvereError> {
    if !a.well_formed(theory, context_size) || !b.well_formed(theory, context_size) {
        return Err(LawvereError::MalformedTerm);
    }
    match mode {
        EqualityMode::BooleanSemantics => {
            if !has_boolean_interpretation(theory) {
                let missing = theory
                    .connectives
                    .iter()
                    .find(|c| boolean_op(&c.name, c.arity).is_none())
                    .map(|c| c.name.clone())
                    .unwrap_or_default();
                return Err(LawvereError::NoBooleanInterpretation(missing));
            }
            for v in 0..(1usize << context_size) {
                let assignment = assignment_bits(v, context_size);
                if eval_bool(a, &assignment)? != eval_bool(b, &assignment)? {
                    return Ok(EqualityVerdict::Distinct(assignment));
                }
            }
            Ok(EqualityVerdict::Equal)
        }
        EqualityMode::Rewrite { depth } => rewrite_search(a, b, theory, depth),
    }
}

/// One-way first-order matching: binds pattern variables to subterms.
fn match_pattern(pattern: &Term, term: &Term, bindings: &mut HashMap<usize, Term>) -> bool {
    match pattern {
        Term::Var(i) => match bindings.get(i) {
            Some(bound) => bound == term,
            None => {
                bindings.insert(*i, term.clone());
                true
            }
        },
        Term::App { connective, args } => match term {
            Term::App {
                connective: tc,
                args: ta,
            } if tc == connective && ta.len() == args.len() => args
                .iter()
                .zip(ta)
                .all(|(p, t)| match_pattern(p, t, bindings)),
            _ => false,
        },
    }
}

fn instantiate(template: &Term, bindings: &HashMap<usize, Term>) -> Term {
    match template {
        Term::Var(i) => bindings[i].clone(),
        Term::App { connective, args } => Term::App {
            connective: connective.clone(),
            args: args.iter().map(|a| instantiate(a, bindings)).collect(),
        },
    }
}

/// All single-step rewrites of `term` by `lhs -> rhs` at any position.
fn rewrite_at_all_positions(term: &Term, lhs: &Term, rhs: &Term, out: &mut Vec<Term>) {
    let mut bindings = HashMap::new();
    if match_pattern(lhs, term, &mut bindings) {
        // only fire when every rhs variable got bound; rules may not invent
        // fresh variables
        if rhs_vars_bound(rhs, &bindings) {
            out.push(instantiate(rhs, &bindings));
        }
    }
    if let Term::App { connective, args } = term {
        for (i, arg) in args.iter().enumerate() {
            let mut rewritten = Vec::new();
            rewrite_at_all_positions(arg, lhs, rhs, &mut rewritten);
            for r in rewritten {
                let mut new_args = args.clone();
                new_args[i] = r;
                out.push(Term::App {
                    connective: connective.clone(),
                    args: new_args,
                });
            }
        }
    }
}

fn rhs_vars_bound(rhs: &Term, bindings: &HashMap<usize, Term>) -> bool {
    match rhs {
        Term::Var(i) => bindings.contains_key(i),
        Term::App { args, .. } => args.iter().all(|a| rhs_vars_bound(a, bindings)),
    }
}

/// Breadth-first bidirectional search over axiom rewrites. `Equal` when the
/// frontiers intersect within `depth` steps per side, otherwise
/// `Unknown(depth)`.
fn rewrite_search(
    a: &Term,
    b: &Term,
    theory: &Theory,
    depth: usize,
) -> Result<EqualityVerdict, LawvereError> {
    const FRONTIER_CAP: usize = 50_000;
    if a == b {
        return Ok(EqualityVerdict::Equal);
    }
    let rules: Vec<(&Term, &Term)> = theory
        .axioms
        .iter()
        .flat_map(|ax| [(&ax.lhs, &ax.rhs), (&ax.rhs, &ax.lhs)])
        .collect();

    let mut seen_a: HashSet<Term> = HashSet::from([a.clone()]);
    let mut seen_b: HashSet<Term> = HashSet::from([b.clone()]);
    let mut frontier_a: VecDeque<Term> = VecDeque::from([a.clone()]);
    let mut frontier_b: VecDeque<Term> = VecDeque::from([b.clone()]);

    fn expand(
        frontier: &mut VecDeque<Term>,
        seen: &mut HashSet<Term>,
        other_seen: &HashSet<Term>,
        rules: &[(&Term, &Term)],
    ) -> bool {
        let mut next = VecDeque::new();
        while let Some(t) = frontier.pop_front() {
            for (lhs, rhs) in rules {
                let mut rewrites = Vec::new();
                rewrite_at_all_positions(&t, lhs, rhs, &mut rewrites);
                for r in rewrites {
                    if other_seen.contains(&r) {
                        return true;
                    }
                    if seen.len() < FRONTIER_CAP && seen.insert(r.clone()) {
                        next.push_back(r);
                    }
                }
            }
        }
        *frontier = next;
        false
    }

    for _ in 0..depth {
        if expand(&mut frontier_a, &mut seen_a, &seen_b, &rules)
            || expand(&mut frontier_b, &mut seen_b, &seen_a, &rules)
        {
            return Ok(EqualityVerdict::Equal);
        }
    }
    Ok(EqualityVerdict::Unknown(depth))
}

/// An equivalence class discovered by [`enumerate_terms`]. The representative
/// is the least member under the `(depth, name, argument)` order; `members`
/// keeps the first few encountered and `size` counts all of them.
#[derive(Debug, Clone)]
pub struct TermClass {
    pub representative: Term,
    pub members: Vec<Term>,
    pub size: usize,
}

const MEMBER_SAMPLE: usize = 16;

/// Streams every term over `context_size` variables up to `max_depth`,
/// visiting smaller depths first. Depth 0 is the variables plus any declared
/// constants. Errors out after `cap` visits.
pub fn visit_terms<F, E>(
    theory: &Theory,
    context_size: usize,
    max_depth: usize,
    cap: usize,
    mut visit: F,
) -> Result<(), E>
where
    F: FnMut(&Term) -> Result<(), E>,
    E: From<LawvereError>,
{
    let mut count = 0usize;
    let mut tick = |t: &Term, visit: &mut F| -> Result<(), E> {
        count += 1;
        if count > cap {
            return Err(LawvereError::BudgetExceeded { cap }.into());
        }
        visit(t)
    };

    let mut level: Vec<Term> = (0..context_size).map(Term::Var).collect();
    for c in &theory.connectives {
        if c.arity == 0 {
            level.push(Term::app(c.name.clone(), vec![]));
        }
    }
    for t in &level {
        tick(t, &mut visit)?;
    }
    // `level` holds every term of depth <= r after round r. A term first
    // appears in the round where its deepest argument was fresh, so skipping
    // tuples drawn entirely from older entries emits each term exactly once.
    // The final round is streamed without being stored.
    let mut prev_len = 0usize;
    for round in 1..=max_depth {
        let last = round == max_depth;
        let mut fresh = Vec::new();
        for c in &theory.connectives {
            if c.arity == 0 || level.is_empty() {
                continue;
            }
            let mut tuple = vec![0usize; c.arity];
            'tuples: loop {
                if tuple.iter().any(|&i| i >= prev_len) {
                    let t = Term::app(
                        c.name.clone(),
                        tuple.iter().map(|&i| level[i].clone()).collect(),
                    );
                    tick(&t, &mut visit)?;
                    if !last {
                        fresh.push(t);
                    }
                }
                // lexicographic odometer over argument indices
                for slot in (0..c.arity).rev() {
                    tuple[slot] += 1;
                    if tuple[slot] < level.len() {
                        continue 'tuples;
                    }
                    tuple[slot] = 0;
                }
                break;
            }
        }
        if last || fresh.is_empty() {
            break;
        }
        prev_len = level.len();
        level.extend(fresh);
    }
    Ok(())
}

/// Enumerates all terms to `max_depth` and groups them into classes by
/// [`equal_modulo_axioms`]. In rewrite mode, terms the search cannot relate
/// stay in separate classes.
pub fn enumerate_terms(
    theory: &Theory,
    context_size: usize,
    max_depth: usize,
    mode: EqualityMode,
    cap: usize,
) -> Result<Vec<TermClass>, LawvereError> {
    let mut classes: Vec<TermClass> = Vec::new();
    match mode {
        EqualityMode::BooleanSemantics => {
            if !has_boolean_interpretation(theory) {
                let missing = theory
                    .connectives
                    .iter()
                    .find(|c| boolean_op(&c.name, c.arity).is_none())
                    .map(|c| c.name.clone())
                    .unwrap_or_default();
                return Err(LawvereError::NoBooleanInterpretation(missing));
            }
            let mut by_table: HashMap<u64, usize> = HashMap::new();
            visit_terms(theory, context_size, max_depth, cap, |t| {
                let table = truth_table(t, context_size)?;
                match by_table.get(&table) {
                    Some(&idx) => absorb(&mut classes[idx], t),
                    None => {
                        by_table.insert(table, classes.len());
                        classes.push(new_class(t));
                    }
                }
                Ok(())
            })?;
        }
        EqualityMode::Rewrite { .. } => {
            visit_terms(theory, context_size, max_depth, cap, |t| {
                for class in classes.iter_mut() {
                    let verdict =
                        equal_modulo_axioms(&class.representative, t, theory, context_size, mode)?;
                    if verdict == EqualityVerdict::Equal {
                        absorb(class, t);
                        return Ok(());
                    }
                }
                classes.push(new_class(t));
                Ok(())
            })?;
        }
    }
    classes.sort_by(|a, b| a.representative.cmp(&b.representative));
    Ok(classes)
}

fn new_class(t: &Term) -> TermClass {
    TermClass {
        representative: t.clone(),
        members: vec![t.clone()],
        size: 1,
    }
}

fn absorb(class: &mut TermClass, t: &Term) {
    if *t < class.representative {
        class.representative = t.clone();
    }
    if class.members.len() < MEMBER_SAMPLE {
        class.members.push(t.clone());
    }
    class.size += 1;
}
