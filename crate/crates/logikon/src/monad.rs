//! The free-algebra monad of a theory: elements pair an operation (a morphism
//! `n -> 1`) with an `n`-tuple of variables drawn from a carrier set. The unit
//! injects a carrier element as the identity operation applied to it, and
//! multiplication flattens a term-of-terms by substitution.

use crate::lawvere::{compose, LawvereError, TupleMorphism};
use crate::theory::Term;

/// A formal term over carrier `X`: an operation together with the variable
/// tuple it is applied to.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MonadElement<X> {
    operation: TupleMorphism,
    variables: Vec<X>,
}

impl<X> MonadElement<X> {
    /// The operation must have target arity 1 and source arity equal to the
    /// variable count.
    pub fn new(operation: TupleMorphism, variables: Vec<X>) -> Result<Self, LawvereError> {
        if operation.target_arity() != 1 {
            return Err(LawvereError::CompositionArity {
                lhs_target: operation.target_arity(),
                rhs_source: 1,
            });
        }
        if operation.source_arity() != variables.len() {
            return Err(LawvereError::CompositionArity {
                lhs_target: variables.len(),
                rhs_source: operation.source_arity(),
            });
        }
        Ok(MonadElement {
            operation,
            variables,
        })
    }

    pub fn operation(&self) -> &TupleMorphism {
        &self.operation
    }

    pub fn variables(&self) -> &[X] {
        &self.variables
    }

    /// Functorial action: renames the variables, keeping the operation.
    pub fn map<Y>(&self, f: impl FnMut(&X) -> Y) -> MonadElement<Y> {
        MonadElement {
            operation: self.operation.clone(),
            variables: self.variables.iter().map(f).collect(),
        }
    }
}

/// The unit `x -> (id_1, (x))`.
pub fn unit<X>(x: X) -> MonadElement<X> {
    MonadElement {
        operation: TupleMorphism::identity(1),
        variables: vec![x],
    }
}

/// Multiplication: substitutes each inner element's operation into the outer
/// operation and concatenates the variable tuples.
pub fn mult<X: Clone>(nested: &MonadElement<MonadElement<X>>) -> Result<MonadElement<X>, LawvereError> {
    let mut shifted: Vec<Term> = Vec::with_capacity(nested.variables.len());
    let mut variables = Vec::new();
    let mut offset = 0usize;
    for inner in &nested.variables {
        let inner_term = &inner.operation.components()[0];
        shifted.push(shift_vars(inner_term, offset));
        offset += inner.operation.source_arity();
        variables.extend(inner.variables.iter().cloned());
    }
    let pairing = TupleMorphism::new(offset, shifted)?;
    let operation = compose(&pairing, &nested.operation)?;
    Ok(MonadElement {
        operation,
        variables,
    })
}

fn shift_vars(term: &Term, offset: usize) -> Term {
    match term {
        Term::Var(i) => Term::Var(i + offset),
        Term::App { connective, args } => Term::App {
            connective: connective.clone(),
            args: args.iter().map(|a| shift_vars(a, offset)).collect(),
        },
    }
}
