//! Boundary value and eigenvalue solvers with their adjoints.
//!
//! Linear systems are written `L X = F`, where `L` is an assembled matrix
//! (boundary rows on top, see [`tau_matrix`]) and `F` is a set of graph roots
//! packed into one vector by an [`RhsMap`]. Unknown leaves of a nonlinear
//! problem are packed by a [`StateLayout`].

mod evp;
mod lbvp;
mod nlbvp;
mod rhs;

pub use evp::{eigenvalue_sensitivity, eigenvector_sensitivity, left_vector_near, left_vectors, solve_evp, EigSolution, Evp};
pub use lbvp::Lbvp;
pub use nlbvp::Nlbvp;
pub use rhs::{tau_matrix, RhsBlock, RhsMap, StateLayout};
