//! logikon compiles finitary equational theories into differentiable gate
//! networks whose architecture and parameter constraints enforce the logic,
//! trains them on the logical constraint manifold, and verifies the result
//! against exhaustive boolean semantics.
//!
//! The pipeline, end to end:
//!
//! 1. [`theory`] parses a `.thy` specification into a signature plus axioms.
//! 2. [`lawvere`] gives terms their categorical reading: tuples of terms as
//!    morphisms, composition as substitution, equality modulo axioms, and
//!    bounded enumeration of term classes. [`monad`] adds the free-algebra
//!    monad over the same terms.
//! 3. [`relax`] supplies the temperature-controlled gate kernels and their
//!    closed-form error and Lipschitz bounds.
//! 4. [`net`] compiles terms into weight-shared gate DAGs with forward and
//!    reverse passes and a lossless JSON wire format.
//! 5. [`constraint`] turns each axiom into residual functions `G(W)` whose
//!    zero set is the logical constraint manifold.
//! 6. [`opt`] trains on that manifold by projected (Riemannian) gradient
//!    descent with a Gauss-Newton retraction, next to a penalty baseline.
//! 7. [`verify`] runs the executable checks: truth tables, error bounds,
//!    arm equivalence, round-trips, functoriality, and the expressivity
//!    census.

pub mod constraint;
pub mod lawvere;
pub mod monad;
pub mod net;
pub mod opt;
pub mod relax;
pub mod theory;
pub mod verify;

pub use lawvere::{EqualityMode, EqualityVerdict, TupleMorphism};
pub use net::{
    assign_model, backward, compile, compose_parallel, compose_sequential, extract_model,
    forward, InitScheme, NetworkGraph, ParameterStore, ParametricModel,
};
pub use relax::{GateKernel, Temperature};
pub use theory::{parse_theory, Axiom, Connective, Term, Theory};
