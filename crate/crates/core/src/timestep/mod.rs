//! IMEX timesteppers for `M dX/dt + L X = F(X, p, t)` and their exact discrete adjoints.
//!
//! Multistep schemes take the form
//! `sum_i a_i M X_{n-i} + sum_i b_i L X_{n-i} = sum_{i>=1} c_i F(X_{n-i})`
//! and drop to lower order members during startup. Runge-Kutta schemes use
//! the implicit/explicit tableau pair `(H, A)` with stage abscissae `c`.

mod coefficients;
mod integrator;
mod system;

pub use coefficients::{multistep_coefficients, MultistepCoefficients, RkTableau, Scheme};
pub use integrator::{AdjointState, Integrator, StepState};
pub use system::{FactorCache, Ivp, ParamCotangents};
