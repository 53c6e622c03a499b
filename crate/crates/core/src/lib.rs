//! Solvers for a nonlocal heat model with Robin boundary cooling, plus the
//! optimization machinery that tunes the boundary heat-transfer coefficient.
//!
//! The temperature `u` on the unit interval obeys
//!
//! ```text
//! u_t - u_xx = lambda f(u) / (integral of f(u))^2,    du/dnu = -beta u
//! ```
//!
//! where `beta` is the control. The crate provides the forward solver, the
//! adjoint and sensitivity solvers needed for gradient-based optimization,
//! two cooperating scheme variants ([`SchemeMode`]), cost evaluation with the
//! clamp-based control update, and independent diagnostics used to
//! cross-check the production path.

pub mod diagnostics;
mod error;
pub mod fem;
pub mod model;
pub mod optim;
pub mod solver;

pub use diagnostics::{
    dense_reference_solve, energy_bound_report, scheme_cross_check, CrossCheckReport,
    EnergyBoundReport,
};
pub use error::{Error, Result};
pub use fem::{
    assemble_mass, assemble_stiffness, boundary_trace, integrate_nodal, star_norm_sq,
    thomas_solve, Mesh1D, Tridiagonal,
};
pub use model::{Conductivity, ConductivityId, ControlBox, ModelParams};
pub use optim::{
    constant_control_sweep, cost, forward_backward_sweep, gradient_direction,
    project_constant_control, project_control, projected_gradient_descent, ConstantLawWindow,
    CostBreakdown, OptimalityReport,
};
pub use solver::{
    adjoint_solve, forward_solve, sensitivity_solve, BoundaryControl, BoundarySamples,
    FieldHistory, SchemeMode,
};
