//! Cost evaluation, the pointwise control law, gradient directions, and the
//! iterative drivers that search for the optimal boundary coefficient.
//!
//! Sign convention: [`adjoint_solve`] integrates the dual problem with a +1
//! source, which produces a nonnegative field for nonnegative states. The
//! control law and the gradient density pair the temperature with the
//! descent multiplier, which is the negative of that field. The drivers flip
//! the sign once, right after each adjoint solve; [`project_control`] and
//! [`gradient_direction`] themselves apply their formulas verbatim to
//! whatever fields they are given.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::{integrate_nodal, Mesh1D};
use crate::model::{ControlBox, ModelParams};
use crate::solver::{
    adjoint_solve, forward_solve, BoundaryControl, BoundarySamples, FieldHistory, SchemeMode,
};

/// The two additive parts of the tracking functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostBreakdown {
    /// Space-time integral of the temperature (final-slice integral for a
    /// constant control).
    pub state_term: f64,
    /// Time integral of the squared boundary coefficient over both boundary
    /// points (plain square for a constant control).
    pub control_term: f64,
    pub total: f64,
}

/// Outcome of one optimization driver run.
#[derive(Debug, Clone, Serialize)]
pub struct OptimalityReport {
    pub control: BoundaryControl,
    pub cost: CostBreakdown,
    /// Control updates (sweep) or accepted steps (descent) performed.
    pub iterations: usize,
    /// Per-iteration convergence metric: sup-norm control change for the
    /// sweep, projected-gradient sup-norm for the descent driver.
    pub control_residuals: Vec<f64>,
    /// Total cost of each visited iterate, ending with the final control.
    pub cost_history: Vec<f64>,
    /// Sup-norm of the adjoint field at time zero for the final control,
    /// reported as a transversality indicator; never enforced.
    pub phi0_residual: f64,
    pub converged: bool,
    /// Set when backtracking hit its step floor without descent.
    pub stagnated: bool,
}

/// Time-trapezoid weight for level `n` of `0..=steps`.
fn time_weight(n: usize, steps: usize) -> f64 {
    if n == 0 || n == steps {
        0.5
    } else {
        1.0
    }
}

/// Evaluates the tracking functional for a control and the temperature it
/// produced. Trajectory controls use the space-time form
///
/// ```text
/// J = INT_0^T INT_0^1 u dx dt + INT_0^T (beta(0,t)^2 + beta(1,t)^2) dt
/// ```
///
/// by trapezoid quadrature in both variables; a constant control uses the
/// scalar form J = INT_0^1 u(T) dx + beta^2.
pub fn cost(params: &ModelParams, beta: &BoundaryControl, u: &FieldHistory) -> CostBreakdown {
    let steps = params.num_steps();
    assert_eq!(u.num_levels(), steps + 1, "state history does not match the parameter grid");
    assert_eq!(u.mesh().n_nodes(), params.n_elements + 1, "state mesh does not match parameters");
    beta.check_levels(steps + 1).expect("control does not cover the run");

    match beta {
        BoundaryControl::Constant(value) => {
            let state_term = integrate_nodal(u.mesh(), u.last());
            let control_term = value * value;
            CostBreakdown { state_term, control_term, total: state_term + control_term }
        }
        BoundaryControl::Trajectory { left, right } => {
            let tau = params.time_step;
            let mut state_term = 0.0;
            let mut control_term = 0.0;
            for n in 0..=steps {
                let w = tau * time_weight(n, steps);
                state_term += w * integrate_nodal(u.mesh(), u.level(n));
                control_term += w * (left[n] * left[n] + right[n] * right[n]);
            }
            CostBreakdown { state_term, control_term, total: state_term + control_term }
        }
    }
}

/// Pointwise control law: at each boundary point and level,
/// `clamp(-u * phi / 2)` into the box. Clamping is max-then-min, so repeated
/// projection of an in-box value reproduces it bitwise.
pub fn project_control(
    u: &FieldHistory,
    phi: &FieldHistory,
    control_box: &ControlBox,
) -> BoundaryControl {
    assert_eq!(u.num_levels(), phi.num_levels(), "state and adjoint level counts differ");
    assert_eq!(u.mesh().n_nodes(), phi.mesh().n_nodes(), "state and adjoint meshes differ");
    let last = u.mesh().n_nodes() - 1;
    let mut left = Vec::with_capacity(u.num_levels());
    let mut right = Vec::with_capacity(u.num_levels());
    for n in 0..u.num_levels() {
        let (un, pn) = (u.level(n), phi.level(n));
        left.push(control_box.clamp(-un[0] * pn[0] / 2.0));
        right.push(control_box.clamp(-un[last] * pn[last] / 2.0));
    }
    BoundaryControl::Trajectory { left, right }
}

/// Time slice the scalar control law reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConstantLawWindow {
    /// Evaluate the boundary integral at the final level (the literal
    /// reading of the time-free scalar functional).
    FinalTime,
    /// Average the boundary integral over the run.
    TimeAveraged,
}

/// Scalar control law: `clamp(-1/2 * INT_boundary u phi ds)`, the boundary
/// integral being the sum of the two endpoint products, read either at the
/// final level or time-averaged.
pub fn project_constant_control(
    mesh: &Mesh1D,
    u: &FieldHistory,
    phi: &FieldHistory,
    control_box: &ControlBox,
    window: ConstantLawWindow,
) -> f64 {
    assert_eq!(mesh.n_nodes(), u.mesh().n_nodes(), "mesh does not match the state history");
    assert_eq!(u.num_levels(), phi.num_levels(), "state and adjoint level counts differ");
    let last = mesh.n_nodes() - 1;
    let boundary_at = |n: usize| {
        let (un, pn) = (u.level(n), phi.level(n));
        un[0] * pn[0] + un[last] * pn[last]
    };
    let integral = match window {
        ConstantLawWindow::FinalTime => boundary_at(u.num_levels() - 1),
        ConstantLawWindow::TimeAveraged => {
            let steps = u.num_levels() - 1;
            let horizon = steps as f64 * u.dt();
            let sum: f64 =
                (0..=steps).map(|n| u.dt() * time_weight(n, steps) * boundary_at(n)).sum();
            sum / horizon
        }
    };
    control_box.clamp(-integral / 2.0)
}

/// Gradient density of the tracking functional at a control: per boundary
/// point and level, `g = 2 beta + u phi`.
pub fn gradient_direction(
    beta: &BoundaryControl,
    u: &FieldHistory,
    phi: &FieldHistory,
) -> BoundarySamples {
    assert_eq!(u.num_levels(), phi.num_levels(), "state and adjoint level counts differ");
    assert_eq!(u.mesh().n_nodes(), phi.mesh().n_nodes(), "state and adjoint meshes differ");
    let last = u.mesh().n_nodes() - 1;
    let levels = u.num_levels();
    beta.check_levels(levels).expect("control does not cover the run");
    let mut left = Vec::with_capacity(levels);
    let mut right = Vec::with_capacity(levels);
    for n in 0..levels {
        let (un, pn) = (u.level(n), phi.level(n));
        left.push(2.0 * beta.left_at(n) + un[0] * pn[0]);
        right.push(2.0 * beta.right_at(n) + un[last] * pn[last]);
    }
    BoundarySamples { left, right }
}

/// Negates every level: turns the +1-source adjoint into the descent
/// multiplier the control formulas expect.
fn descent_multiplier(phi: &FieldHistory) -> FieldHistory {
    let levels = (0..phi.num_levels())
        .map(|n| phi.level(n).iter().map(|v| -v).collect())
        .collect();
    FieldHistory::new(phi.mesh().clone(), phi.dt(), levels)
}

fn check_initial_control(beta: &BoundaryControl, control_box: &ControlBox) -> Result<()> {
    let inside = match beta {
        BoundaryControl::Constant(v) => control_box.contains(*v),
        BoundaryControl::Trajectory { left, right } => {
            left.iter().chain(right).all(|v| control_box.contains(*v))
        }
    };
    if inside {
        Ok(())
    } else {
        Err(Error::Config("initial control lies outside the admissible box".into()))
    }
}

fn at_iteration(iteration: usize) -> impl Fn(Error) -> Error {
    move |source| Error::DriverFailed { iteration, source: Box::new(source) }
}

/// Fixed-point iteration on the optimality system: forward solve, backward
/// adjoint solve, then a damped move toward the projected control law,
///
/// ```text
/// beta_{k+1} = (1 - relaxation) beta_k + relaxation * clamp(-u phi / 2)
/// ```
///
/// Stops when the sup-norm control change drops to `tol` or `max_iter` is
/// reached.
pub fn forward_backward_sweep(
    params: &ModelParams,
    beta0: &BoundaryControl,
    mode: SchemeMode,
    tol: f64,
    max_iter: usize,
    relaxation: f64,
) -> Result<OptimalityReport> {
    assert!(tol > 0.0, "tolerance must be positive");
    assert!(relaxation > 0.0 && relaxation <= 1.0, "relaxation must lie in (0, 1]");
    let control_box = &params.control_box;
    check_initial_control(beta0, control_box)?;

    let levels = params.num_levels();
    let mut current = beta0.to_samples(levels);
    let mut residuals = Vec::new();
    let mut cost_history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for k in 0..max_iter {
        let control = current.clone().into_control();
        let u = forward_solve(params, &control, mode).map_err(at_iteration(k))?;
        cost_history.push(cost(params, &control, &u).total);
        let phi = adjoint_solve(params, &control, &u, mode).map_err(at_iteration(k))?;
        let multiplier = descent_multiplier(&phi);
        let target = project_control(&u, &multiplier, control_box).to_samples(levels);

        let mut residual: f64 = 0.0;
        for (b, t) in current.left.iter_mut().zip(&target.left) {
            let next = (1.0 - relaxation) * *b + relaxation * t;
            residual = residual.max((next - *b).abs());
            *b = next;
        }
        for (b, t) in current.right.iter_mut().zip(&target.right) {
            let next = (1.0 - relaxation) * *b + relaxation * t;
            residual = residual.max((next - *b).abs());
            *b = next;
        }
        residuals.push(residual);
        iterations = k + 1;
        if residual <= tol {
            converged = true;
            break;
        }
    }

    finish_report(params, current.into_control(), mode, iterations, residuals, cost_history, converged, false)
}

/// Projected gradient descent with backtracking:
/// `beta_{k+1} = clamp(beta_k - s * g)` where `g = 2 beta + u phi` and `s`
/// halves until the cost stops increasing. Convergence is measured by the
/// projected-gradient sup-norm `|beta - clamp(beta - g)|`; hitting the step
/// floor without descent marks the report stagnated instead of failing.
pub fn projected_gradient_descent(
    params: &ModelParams,
    beta0: &BoundaryControl,
    mode: SchemeMode,
    step: f64,
    tol: f64,
    max_iter: usize,
) -> Result<OptimalityReport> {
    assert!(step > 0.0, "step must be positive");
    assert!(tol > 0.0, "tolerance must be positive");
    const STEP_FLOOR: f64 = 1e-8;
    let control_box = &params.control_box;
    check_initial_control(beta0, control_box)?;

    let levels = params.num_levels();
    let mut current = beta0.to_samples(levels);
    let mut residuals = Vec::new();
    let mut cost_history = Vec::new();
    let mut converged = false;
    let mut stagnated = false;
    let mut iterations = 0;

    for k in 0..max_iter {
        let control = current.clone().into_control();
        let u = forward_solve(params, &control, mode).map_err(at_iteration(k))?;
        let current_cost = cost(params, &control, &u).total;
        cost_history.push(current_cost);
        let phi = adjoint_solve(params, &control, &u, mode).map_err(at_iteration(k))?;
        let multiplier = descent_multiplier(&phi);
        let g = gradient_direction(&control, &u, &multiplier);

        let project_step = |s: f64| -> BoundarySamples {
            let left = current
                .left
                .iter()
                .zip(&g.left)
                .map(|(b, gv)| control_box.clamp(b - s * gv))
                .collect();
            let right = current
                .right
                .iter()
                .zip(&g.right)
                .map(|(b, gv)| control_box.clamp(b - s * gv))
                .collect();
            BoundarySamples { left, right }
        };

        let residual = current.sup_distance(&project_step(1.0));
        residuals.push(residual);
        if residual <= tol {
            converged = true;
            break;
        }

        let mut s = step;
        loop {
            let candidate = project_step(s);
            let cand_control = candidate.clone().into_control();
            let u_cand = forward_solve(params, &cand_control, mode).map_err(at_iteration(k))?;
            let cand_cost = cost(params, &cand_control, &u_cand).total;
            if cand_cost <= current_cost {
                current = candidate;
                iterations = k + 1;
                break;
            }
            s /= 2.0;
            if s < STEP_FLOOR {
                stagnated = true;
                break;
            }
        }
        if stagnated {
            break;
        }
    }

    finish_report(params, current.into_control(), mode, iterations, residuals, cost_history, converged, stagnated)
}

/// Scalar variant of the sweep for a control held constant in space and
/// time: iterates the damped scalar law.
pub fn constant_control_sweep(
    params: &ModelParams,
    beta0: f64,
    mode: SchemeMode,
    tol: f64,
    max_iter: usize,
    relaxation: f64,
    window: ConstantLawWindow,
) -> Result<OptimalityReport> {
    assert!(tol > 0.0, "tolerance must be positive");
    assert!(relaxation > 0.0 && relaxation <= 1.0, "relaxation must lie in (0, 1]");
    let control_box = &params.control_box;
    check_initial_control(&BoundaryControl::Constant(beta0), control_box)?;

    let mesh = Mesh1D::uniform(params.n_elements);
    let mut current = beta0;
    let mut residuals = Vec::new();
    let mut cost_history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for k in 0..max_iter {
        let control = BoundaryControl::Constant(current);
        let u = forward_solve(params, &control, mode).map_err(at_iteration(k))?;
        cost_history.push(cost(params, &control, &u).total);
        let phi = adjoint_solve(params, &control, &u, mode).map_err(at_iteration(k))?;
        let multiplier = descent_multiplier(&phi);
        let target = project_constant_control(&mesh, &u, &multiplier, control_box, window);

        let next = (1.0 - relaxation) * current + relaxation * target;
        let residual = (next - current).abs();
        current = next;
        residuals.push(residual);
        iterations = k + 1;
        if residual <= tol {
            converged = true;
            break;
        }
    }

    finish_report(params, BoundaryControl::Constant(current), mode, iterations, residuals, cost_history, converged, false)
}

/// Evaluates the final control once more so the report carries its cost and
/// the time-zero adjoint residual, then assembles the record.
#[allow(clippy::too_many_arguments)]
fn finish_report(
    params: &ModelParams,
    control: BoundaryControl,
    mode: SchemeMode,
    iterations: usize,
    control_residuals: Vec<f64>,
    mut cost_history: Vec<f64>,
    converged: bool,
    stagnated: bool,
) -> Result<OptimalityReport> {
    let u = forward_solve(params, &control, mode).map_err(at_iteration(iterations))?;
    let final_cost = cost(params, &control, &u);
    cost_history.push(final_cost.total);
    let phi = adjoint_solve(params, &control, &u, mode).map_err(at_iteration(iterations))?;
    let phi0_residual = phi.level(0).iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    Ok(OptimalityReport {
        control,
        cost: final_cost,
        iterations,
        control_residuals,
        cost_history,
        phi0_residual,
        converged,
        stagnated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Conductivity, ConductivityId, ControlBox, ModelParams};
    use crate::solver::DIVERGENCE_GUARD;

    fn flat_history(mesh: Mesh1D, dt: f64, levels: usize, value: f64) -> FieldHistory {
        let n = mesh.n_nodes();
        FieldHistory::new(mesh, dt, vec![vec![value; n]; levels])
    }

    fn constant_f_params(n: usize, tau: f64, horizon: f64) -> ModelParams {
        ModelParams::with_uniform_u0(
            Conductivity::builtin(ConductivityId::Constant(2.0)),
            1.0,
            ControlBox::new(0.1, 1.0),
            0.0,
            n,
            tau,
            horizon,
        )
    }

    fn catalog_params(n: usize, tau: f64, horizon: f64) -> ModelParams {
        ModelParams::with_uniform_u0(
            Conductivity::builtin(ConductivityId::ShiftedSine),
            1.0,
            ControlBox::new(0.1, 1.0),
            0.0,
            n,
            tau,
            horizon,
        )
    }

    #[test]
    fn cost_of_constant_fields_is_exact() {
        let params = {
            let mut p = constant_f_params(10, 0.1, 1.0);
            p.initial_temperature = vec![1.0; 11];
            p
        };
        let mesh = Mesh1D::uniform(10);
        let u = flat_history(mesh, 0.1, 11, 1.0);
        let beta = BoundaryControl::uniform_trajectory(11, 0.5);
        let j = cost(&params, &beta, &u);
        assert!((j.state_term - 1.0).abs() < 1e-13);
        assert!((j.control_term - 0.5).abs() < 1e-13);
        assert!((j.total - 1.5).abs() < 1e-13);
    }

    #[test]
    fn trajectory_control_term_is_twice_m_squared_t() {
        let params = constant_f_params(10, 0.1, 2.0);
        let mesh = Mesh1D::uniform(10);
        let u = flat_history(mesh, 0.1, 21, 0.0);
        let m = 0.1;
        let beta = BoundaryControl::uniform_trajectory(21, m);
        let j = cost(&params, &beta, &u);
        assert!((j.control_term - 2.0 * m * m * 2.0).abs() < 1e-13);
    }

    #[test]
    fn state_term_of_the_linear_growth_solution_is_a_quarter() {
        let params = constant_f_params(50, 0.01, 1.0);
        let beta = BoundaryControl::uniform_trajectory(101, 0.0);
        let u = forward_solve(&params, &beta, SchemeMode::ConsistentGalerkin).unwrap();
        let j = cost(
            &params,
            &BoundaryControl::Trajectory { left: vec![0.0; 101], right: vec![0.0; 101] },
            &u,
        );
        assert!((j.state_term - 0.25).abs() < 1e-10, "state term {}", j.state_term);
        assert_eq!(j.control_term, 0.0);
    }

    #[test]
    fn constant_control_cost_uses_the_final_slice() {
        let params = constant_f_params(10, 0.1, 1.0);
        let mesh = Mesh1D::uniform(10);
        let u = flat_history(mesh, 0.1, 11, 3.0);
        let j = cost(&params, &BoundaryControl::Constant(0.5), &u);
        assert!((j.state_term - 3.0).abs() < 1e-13);
        assert!((j.control_term - 0.25).abs() < 1e-13);
    }

    #[test]
    fn projection_clamps_each_case() {
        let mesh = Mesh1D::uniform(4);
        let control_box = ControlBox::new(0.1, 1.0);
        // -u*phi/2 values 0.5 (interior), 2 (above), -3 (below).
        let u = FieldHistory::new(mesh.clone(), 1.0, vec![
            vec![1.0, 0.0, 0.0, 0.0, 1.0],
            vec![2.0, 0.0, 0.0, 0.0, 2.0],
            vec![3.0, 0.0, 0.0, 0.0, 3.0],
        ]);
        let phi = FieldHistory::new(mesh, 1.0, vec![
            vec![-1.0, 0.0, 0.0, 0.0, -1.0],
            vec![-2.0, 0.0, 0.0, 0.0, -2.0],
            vec![2.0, 0.0, 0.0, 0.0, 2.0],
        ]);
        match project_control(&u, &phi, &control_box) {
            BoundaryControl::Trajectory { left, right } => {
                assert_eq!(left, vec![0.5, 1.0, 0.1]);
                assert_eq!(right, vec![0.5, 1.0, 0.1]);
            }
            other => panic!("unexpected control kind {other:?}"),
        }
    }

    #[test]
    fn projection_is_bitwise_idempotent() {
        let mesh = Mesh1D::uniform(6);
        let control_box = ControlBox::new(0.1, 1.0);
        let u = FieldHistory::new(
            mesh.clone(),
            0.5,
            vec![vec![0.3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.7]; 4],
        );
        let phi = FieldHistory::new(
            mesh,
            0.5,
            vec![vec![-1.9, 0.0, 0.0, 0.0, 0.0, 0.0, -1.3]; 4],
        );
        let first = project_control(&u, &phi, &control_box);
        // Feeding fields whose product reproduces the projected value must
        // return it unchanged, bit for bit.
        let (l0, r0) = match &first {
            BoundaryControl::Trajectory { left, right } => (left.clone(), right.clone()),
            _ => unreachable!(),
        };
        let mesh2 = Mesh1D::uniform(6);
        let u2 = FieldHistory::new(
            mesh2.clone(),
            0.5,
            vec![vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]; 4],
        );
        let phi2 = FieldHistory::new(
            mesh2,
            0.5,
            (0..4).map(|n| vec![-2.0 * l0[n], 0.0, 0.0, 0.0, 0.0, 0.0, -2.0 * r0[n]]).collect(),
        );
        let second = project_control(&u2, &phi2, &control_box);
        match (&first, &second) {
            (
                BoundaryControl::Trajectory { left: a, right: b },
                BoundaryControl::Trajectory { left: c, right: d },
            ) => {
                assert!(a.iter().zip(c).all(|(x, y)| x.to_bits() == y.to_bits()));
                assert!(b.iter().zip(d).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn scalar_law_clamps_each_case() {
        let mesh = Mesh1D::uniform(4);
        let control_box = ControlBox::new(0.1, 1.0);
        let make = |u_ends: f64, phi_ends: f64| {
            let u = FieldHistory::new(
                mesh.clone(),
                1.0,
                vec![vec![u_ends, 0.0, 0.0, 0.0, u_ends]; 2],
            );
            let phi = FieldHistory::new(
                mesh.clone(),
                1.0,
                vec![vec![phi_ends, 0.0, 0.0, 0.0, phi_ends]; 2],
            );
            (u, phi)
        };
        // Boundary integral -1.0: interior value 0.5.
        let (u, phi) = make(1.0, -0.5);
        assert_eq!(
            project_constant_control(&mesh, &u, &phi, &control_box, ConstantLawWindow::FinalTime),
            0.5
        );
        // Nonnegative integrand: lower clamp.
        let (u, phi) = make(1.0, 0.5);
        assert_eq!(
            project_constant_control(&mesh, &u, &phi, &control_box, ConstantLawWindow::FinalTime),
            0.1
        );
        // Integral -4: upper clamp.
        let (u, phi) = make(2.0, -1.0);
        assert_eq!(
            project_constant_control(&mesh, &u, &phi, &control_box, ConstantLawWindow::FinalTime),
            1.0
        );
    }

    #[test]
    fn gradient_density_is_plain_arithmetic() {
        let mesh = Mesh1D::uniform(4);
        let u = FieldHistory::new(mesh.clone(), 1.0, vec![vec![1.0, 0.0, 0.0, 0.0, 1.0]; 2]);
        let phi = FieldHistory::new(mesh, 1.0, vec![vec![-1.0, 0.0, 0.0, 0.0, -1.0]; 2]);
        let beta = BoundaryControl::uniform_trajectory(2, 0.3);
        let g = gradient_direction(&beta, &u, &phi);
        for v in g.left.iter().chain(&g.right) {
            assert!((v - (-0.4)).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_vanishes_at_the_unclamped_law() {
        let mesh = Mesh1D::uniform(4);
        let u = FieldHistory::new(mesh.clone(), 1.0, vec![vec![0.8, 0.0, 0.0, 0.0, 1.2]; 3]);
        let phi = FieldHistory::new(mesh, 1.0, vec![vec![-0.5, 0.0, 0.0, 0.0, -0.25]; 3]);
        let beta = BoundaryControl::Trajectory {
            left: vec![0.8 * 0.5 / 2.0; 3],
            right: vec![1.2 * 0.25 / 2.0; 3],
        };
        let g = gradient_direction(&beta, &u, &phi);
        for v in g.left.iter().chain(&g.right) {
            assert!(v.abs() < 1e-15);
        }
    }

    #[test]
    fn degenerate_box_pins_the_sweep_in_one_iteration() {
        let mut params = catalog_params(20, 0.01, 0.2);
        params.control_box = ControlBox::new(0.4, 0.4);
        let report = forward_backward_sweep(
            &params,
            &BoundaryControl::Constant(0.4),
            SchemeMode::ConsistentGalerkin,
            1e-6,
            20,
            0.5,
        )
        .unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 1);
        assert_eq!(report.control_residuals, vec![0.0]);
    }

    #[test]
    fn zero_state_forces_the_lower_clamp() {
        let mut params = catalog_params(20, 0.01, 0.2);
        params.lambda = 0.0;
        let report = forward_backward_sweep(
            &params,
            &BoundaryControl::Constant(1.0),
            SchemeMode::ConsistentGalerkin,
            1e-9,
            20,
            1.0,
        )
        .unwrap();
        assert!(report.converged);
        // One update lands exactly on m, the next sees zero change.
        assert_eq!(report.iterations, 2);
        match &report.control {
            BoundaryControl::Trajectory { left, right } => {
                assert!(left.iter().chain(right).all(|v| *v == 0.1));
            }
            other => panic!("unexpected control kind {other:?}"),
        }
    }

    #[test]
    fn sweep_iterates_stay_inside_the_box() {
        let params = catalog_params(20, 0.02, 0.3);
        let report = forward_backward_sweep(
            &params,
            &BoundaryControl::Constant(0.5),
            SchemeMode::ConsistentGalerkin,
            1e-8,
            30,
            0.5,
        )
        .unwrap();
        match &report.control {
            BoundaryControl::Trajectory { left, right } => {
                assert!(left.iter().chain(right).all(|v| (0.1..=1.0).contains(v)));
            }
            other => panic!("unexpected control kind {other:?}"),
        }
        assert!(report.phi0_residual.is_finite());
        assert_eq!(report.cost_history.len(), report.iterations + 1);
    }

    #[test]
    fn descent_converges_immediately_on_a_degenerate_box() {
        let mut params = catalog_params(20, 0.01, 0.2);
        params.control_box = ControlBox::new(0.4, 0.4);
        let report = projected_gradient_descent(
            &params,
            &BoundaryControl::Constant(0.4),
            SchemeMode::ConsistentGalerkin,
            1.0,
            1e-9,
            10,
        )
        .unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 0);
    }

    #[test]
    fn descent_cost_history_is_nonincreasing() {
        let params = catalog_params(20, 0.02, 0.4);
        let report = projected_gradient_descent(
            &params,
            &BoundaryControl::Constant(1.0),
            SchemeMode::ConsistentGalerkin,
            0.5,
            1e-4,
            15,
        )
        .unwrap();
        assert!(!report.stagnated || !report.cost_history.is_empty());
        for pair in report.cost_history.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "cost rose: {pair:?}");
        }
    }

    #[test]
    fn constant_driver_reaches_the_lower_bound_with_the_final_slice_law() {
        // The adjoint vanishes at the horizon, so the final-slice law always
        // projects to the lower bound; the damped iteration must settle there.
        let params = catalog_params(20, 0.02, 0.4);
        let report = constant_control_sweep(
            &params,
            0.7,
            SchemeMode::ConsistentGalerkin,
            1e-9,
            200,
            0.5,
            ConstantLawWindow::FinalTime,
        )
        .unwrap();
        assert!(report.converged);
        match report.control {
            BoundaryControl::Constant(v) => assert!((v - 0.1).abs() < 1e-7, "beta {v}"),
            other => panic!("unexpected control kind {other:?}"),
        }
    }

    #[test]
    fn time_averaged_scalar_law_is_available() {
        let params = catalog_params(20, 0.02, 0.4);
        let report = constant_control_sweep(
            &params,
            0.5,
            SchemeMode::ConsistentGalerkin,
            1e-8,
            300,
            0.5,
            ConstantLawWindow::TimeAveraged,
        )
        .unwrap();
        assert!(report.converged);
        match report.control {
            BoundaryControl::Constant(v) => assert!((0.1..=1.0).contains(&v)),
            other => panic!("unexpected control kind {other:?}"),
        }
    }

    #[test]
    fn out_of_box_start_is_rejected() {
        let params = catalog_params(10, 0.1, 1.0);
        let err = forward_backward_sweep(
            &params,
            &BoundaryControl::Constant(5.0),
            SchemeMode::ConsistentGalerkin,
            1e-6,
            5,
            0.5,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn driver_wraps_divergence_with_the_iteration_index() {
        // The boundary-lumped adjoint diverges on this grid, so the sweep
        // must surface the failure tagged with its iteration.
        let params = catalog_params(50, 0.01, 1.0);
        let err = forward_backward_sweep(
            &params,
            &BoundaryControl::Constant(0.5),
            SchemeMode::BoundaryLumped,
            1e-6,
            5,
            0.5,
        )
        .unwrap_err();
        match err {
            Error::DriverFailed { iteration, source } => {
                assert_eq!(iteration, 0);
                assert!(matches!(*source, Error::Diverged { guard, .. } if guard == DIVERGENCE_GUARD));
            }
            other => panic!("expected driver failure, got {other:?}"),
        }
    }
}
