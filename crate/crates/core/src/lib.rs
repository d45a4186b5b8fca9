//! Slow-fast analysis of a three-dimensional conductance-based neuron model
//! with a fast inward current, a slow outward current and a slow inward
//! current.
//!
//! ```text
//!     eps v' = i - i_ion(v, n, p)
//!         n' = -n + S_n(v)
//!     tau p' = -p + S_p(v)
//!
//!     i_ion = g_l (v - v_l) + S_m(v)(v - 1) + n (v + 1) + p (v - 1)
//! ```
//!
//! The crate is `no_std` (it needs `alloc`) and contains only numerics:
//!
//! * [`model`]: parameters, currents and vector fields with analytic derivatives.
//! * [`ode`]: adaptive Dormand-Prince 5(4) integrator with dense output and events.
//! * [`manifold`]: the critical manifold in the `(v, p)` chart, fold curves,
//!   fast jumps and folded singularities.
//! * [`reduced`]: reduced and desingularized slow flow, equilibria, saddle
//!   manifolds, the singular return map, the bistability classifier and the
//!   singular homoclinic.
//! * [`bifurcation`]: full-system equilibrium branch, saddle-node/Hopf detection
//!   and the limit-cycle family obtained by simulation.
//!
//! File formats and the command-line tool live in the `restspike` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bifurcation;
mod error;
pub mod linalg;
pub mod manifold;
pub mod model;
pub mod ode;
pub mod reduced;
pub mod roots;

pub use error::{Error, Result};
pub use model::{FullState, GateParams, ModelParams};
