//! Time steppers for the state, adjoint, and sensitivity problems.
//!
//! All three march the same tridiagonal structure produced by one of two
//! assembly variants:
//!
//! * [`SchemeMode::ConsistentGalerkin`] -- consistent mass and stiffness
//!   rows, Robin terms as diagonal boundary additions, and the nonlocal
//!   source distributed to every node by trapezoid quadrature.
//! * [`SchemeMode::BoundaryLumped`] -- the legacy variant this crate also
//!   reproduces row for row: one-sided ghost-node eliminations fold the
//!   Robin condition into the first and last equations, the boundary
//!   integral is halved, and the nonlocal source is carried only by the
//!   j = 0 equation with the domain integral of f replaced by the average
//!   of its two endpoint values.
//!
//! Forward and sensitivity sweeps run from the initial level upward; the
//! adjoint sweep starts from a zero terminal level and solves each earlier
//! level from the later one.
//!
//! A caution on the boundary-lumped variant: its ghost closure perturbs the
//! first equation at order one, so it does not preserve spatially uniform
//! solutions, and the resulting step map is contractive only when tau/h^2
//! is large (roughly 9 or more). In between there is a band of grids where
//! the forward map amplifies, and its adjoint marches the diffusion
//! explicitly, so that one further needs tau of order h^2. Out-of-window
//! runs end with a divergence error instead of returning garbage; use the
//! consistent variant when accuracy rather than row fidelity is the goal.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::{
    assemble_mass, assemble_stiffness, thomas_solve, trapezoid_weights, Mesh1D, Tridiagonal,
};
use crate::model::{Conductivity, ModelParams};

/// Nodal values above this threshold abort a sweep as divergent.
pub const DIVERGENCE_GUARD: f64 = 1e12;

/// Assembly variant used by the time steppers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SchemeMode {
    /// Legacy rows: ghost-node eliminations and a boundary-only source.
    BoundaryLumped,
    /// Consistent Galerkin rows with a distributed source.
    ConsistentGalerkin,
}

/// Boundary coefficient data for a whole run: either one value per time
/// level and boundary point, or a single constant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum BoundaryControl {
    Trajectory { left: Vec<f64>, right: Vec<f64> },
    Constant(f64),
}

impl BoundaryControl {
    pub fn constant(value: f64) -> BoundaryControl {
        BoundaryControl::Constant(value)
    }

    /// Same value at every level and both boundary points.
    pub fn uniform_trajectory(num_levels: usize, value: f64) -> BoundaryControl {
        BoundaryControl::Trajectory { left: vec![value; num_levels], right: vec![value; num_levels] }
    }

    pub fn left_at(&self, level: usize) -> f64 {
        match self {
            BoundaryControl::Trajectory { left, .. } => left[level],
            BoundaryControl::Constant(v) => *v,
        }
    }

    pub fn right_at(&self, level: usize) -> f64 {
        match self {
            BoundaryControl::Trajectory { right, .. } => right[level],
            BoundaryControl::Constant(v) => *v,
        }
    }

    /// Trajectory data must cover every stored time level.
    pub fn check_levels(&self, num_levels: usize) -> Result<()> {
        match self {
            BoundaryControl::Trajectory { left, right } => {
                if left.len() != num_levels || right.len() != num_levels {
                    return Err(Error::GridMismatch(format!(
                        "control has {}/{} levels, run has {}",
                        left.len(),
                        right.len(),
                        num_levels
                    )));
                }
                Ok(())
            }
            BoundaryControl::Constant(_) => Ok(()),
        }
    }

    /// Expands to explicit per-level samples.
    pub fn to_samples(&self, num_levels: usize) -> BoundarySamples {
        match self {
            BoundaryControl::Trajectory { left, right } => {
                BoundarySamples { left: left.clone(), right: right.clone() }
            }
            BoundaryControl::Constant(v) => BoundarySamples {
                left: vec![*v; num_levels],
                right: vec![*v; num_levels],
            },
        }
    }
}

/// Per-level values at the two boundary points; used for controls in flat
/// form, variation directions, and gradient densities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundarySamples {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl BoundarySamples {
    pub fn uniform(num_levels: usize, value: f64) -> BoundarySamples {
        BoundarySamples { left: vec![value; num_levels], right: vec![value; num_levels] }
    }

    pub fn num_levels(&self) -> usize {
        self.left.len()
    }

    pub fn sup_distance(&self, other: &BoundarySamples) -> f64 {
        let left = self
            .left
            .iter()
            .zip(&other.left)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        self.right
            .iter()
            .zip(&other.right)
            .map(|(a, b)| (a - b).abs())
            .fold(left, f64::max)
    }

    pub fn into_control(self) -> BoundaryControl {
        BoundaryControl::Trajectory { left: self.left, right: self.right }
    }
}

/// Space-time record of one solve: `levels[n]` holds the nodal values at
/// time `n * dt`.
#[derive(Debug, Clone)]
pub struct FieldHistory {
    mesh: Mesh1D,
    dt: f64,
    levels: Vec<Vec<f64>>,
}

impl FieldHistory {
    pub fn new(mesh: Mesh1D, dt: f64, levels: Vec<Vec<f64>>) -> FieldHistory {
        assert!(levels.iter().all(|l| l.len() == mesh.n_nodes()));
        FieldHistory { mesh, dt, levels }
    }

    pub fn mesh(&self) -> &Mesh1D {
        &self.mesh
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, n: usize) -> &[f64] {
        &self.levels[n]
    }

    pub fn last(&self) -> &[f64] {
        self.levels.last().expect("history holds at least the initial level")
    }

    pub fn time_at(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    /// Largest absolute nodal value over all levels.
    pub fn sup_norm(&self) -> f64 {
        self.levels.iter().flatten().fold(0.0, |acc: f64, v| acc.max(v.abs()))
    }

    /// Largest nodal distance to another history on the same grid.
    pub fn sup_distance(&self, other: &FieldHistory) -> f64 {
        assert_eq!(self.num_levels(), other.num_levels());
        self.levels
            .iter()
            .zip(&other.levels)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

fn guard_level(values: &[f64], level: usize) -> Result<()> {
    if values.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_GUARD) {
        return Err(Error::Diverged { level, guard: DIVERGENCE_GUARD });
    }
    Ok(())
}

fn step_solve(matrix: &Tridiagonal, rhs: &[f64], level: usize) -> Result<Vec<f64>> {
    thomas_solve(matrix, rhs).map_err(|e| match e {
        Error::SingularSystem { .. } => Error::SingularStep { level },
        other => other,
    })
}

/// Trapezoid approximation of the domain integral of f(u).
fn f_integral(f: &Conductivity, weights: &[f64], u: &[f64]) -> f64 {
    weights.iter().zip(u).map(|(w, v)| w * f.eval(*v)).sum()
}

// ---------------------------------------------------------------------------
// consistent Galerkin steps
// ---------------------------------------------------------------------------

/// Distributed source lambda f(u) / F^2 tested against each basis function
/// by trapezoid quadrature.
fn consistent_source(f: &Conductivity, lambda: f64, weights: &[f64], u: &[f64]) -> Vec<f64> {
    if lambda == 0.0 {
        return vec![0.0; u.len()];
    }
    let total = f_integral(f, weights, u);
    let scale = lambda / (total * total);
    weights.iter().zip(u).map(|(w, v)| scale * w * f.eval(*v)).collect()
}

/// Action of the state derivative of the source on a direction `psi`:
/// lambda w_j (f'(u_j) psi_j / F^2 - 2 f(u_j) G / F^3) with
/// G the integral of f'(u) psi.
fn source_derivative_action(
    f: &Conductivity,
    lambda: f64,
    weights: &[f64],
    u: &[f64],
    psi: &[f64],
) -> Vec<f64> {
    if lambda == 0.0 {
        return vec![0.0; u.len()];
    }
    let total = f_integral(f, weights, u);
    let coupled: f64 = weights.iter().zip(u).zip(psi).map(|((w, v), p)| w * f.deriv(*v) * p).sum();
    let local = lambda / (total * total);
    let nonlocal = 2.0 * lambda * coupled / (total * total * total);
    weights
        .iter()
        .zip(u)
        .zip(psi)
        .map(|((w, v), p)| w * (local * f.deriv(*v) * p - nonlocal * f.eval(*v)))
        .collect()
}

/// Transposed action of the same derivative on an adjoint field `phi`:
/// lambda w_k f'(u_k) (phi_k / F^2 - 2 H / F^3) with H the integral of
/// f(u) phi.
fn source_derivative_transpose(
    f: &Conductivity,
    lambda: f64,
    weights: &[f64],
    u: &[f64],
    phi: &[f64],
) -> Vec<f64> {
    if lambda == 0.0 {
        return vec![0.0; u.len()];
    }
    let total = f_integral(f, weights, u);
    let coupled: f64 = weights.iter().zip(u).zip(phi).map(|((w, v), p)| w * f.eval(*v) * p).sum();
    let local = lambda / (total * total);
    let nonlocal = 2.0 * lambda * coupled / (total * total * total);
    weights
        .iter()
        .zip(u)
        .zip(phi)
        .map(|((w, v), p)| w * f.deriv(*v) * (local * p - nonlocal))
        .collect()
}

struct ConsistentOperators {
    mass: Tridiagonal,
    implicit_base: Tridiagonal,
    weights: Vec<f64>,
}

impl ConsistentOperators {
    fn build(mesh: &Mesh1D, tau: f64) -> ConsistentOperators {
        let mass = assemble_mass(mesh);
        let stiffness = assemble_stiffness(mesh);
        let implicit_base = mass.add_scaled(tau, &stiffness);
        ConsistentOperators { mass, implicit_base, weights: trapezoid_weights(mesh) }
    }

    /// Mass + tau stiffness + tau Robin additions for the given coefficients.
    fn step_matrix(&self, tau: f64, beta_left: f64, beta_right: f64) -> Tridiagonal {
        let mut m = self.implicit_base.clone();
        m.diag[0] += tau * beta_left;
        let last = m.n() - 1;
        m.diag[last] += tau * beta_right;
        m
    }
}

// ---------------------------------------------------------------------------
// boundary-lumped steps
// ---------------------------------------------------------------------------

/// Implicit system rows of the boundary-lumped scheme. Unknowns are the
/// first `n_elements` nodes; the last node is reconstructed afterwards from
/// the one-sided elimination `u_N = u_{N-1} / (1 + beta h)`.
pub fn lumped_step_matrix(mesh: &Mesh1D, tau: f64, beta_left: f64, beta_right: f64) -> Tridiagonal {
    let n = mesh.n_elements();
    let h = mesh.spacing();
    let a = h / 6.0 - tau / h;
    let b = 2.0 * h / 3.0 + 2.0 * tau / h;
    let mut m = Tridiagonal::zero(n);
    m.diag[0] = a * (1.0 + h * beta_left) + b + tau * beta_left / 2.0;
    m.sup[0] = 2.0 * a;
    for j in 1..n - 1 {
        m.sub[j - 1] = a;
        m.diag[j] = b;
        m.sup[j] = a;
    }
    m.sub[n - 2] = a;
    m.diag[n - 1] = b + a / (1.0 + beta_right * h);
    m
}

/// Right-hand side of one boundary-lumped forward step from the full
/// previous level. The nonlocal source sits in the first equation only,
/// with the domain integral of f(u) replaced by the endpoint average.
pub fn lumped_step_rhs(
    mesh: &Mesh1D,
    tau: f64,
    lambda: f64,
    f: &Conductivity,
    prev: &[f64],
    beta_left: f64,
    beta_right: f64,
) -> Vec<f64> {
    let n = mesh.n_elements();
    let h = mesh.spacing();
    let mut rhs = vec![0.0; n];
    let f0 = f.eval(prev[0]);
    let fn_ = f.eval(prev[n]);
    let fsum = f0 + fn_;
    rhs[0] = h / 6.0 * (5.0 + h * beta_left) * prev[0]
        + h / 3.0 * prev[1]
        + 2.0 * lambda * tau * f0 / (fsum * fsum);
    for j in 1..n - 1 {
        rhs[j] = h / 6.0 * prev[j - 1] + 2.0 * h / 3.0 * prev[j] + h / 6.0 * prev[j + 1];
    }
    rhs[n - 1] = h / 6.0 * prev[n - 2]
        + 2.0 * h / 3.0 * (1.0 + 1.0 / (4.0 * (1.0 + beta_right * h))) * prev[n - 1];
    rhs
}

/// Completes a boundary-lumped level with the eliminated last node.
fn lumped_complete(mut inner: Vec<f64>, h: f64, beta_right: f64) -> Vec<f64> {
    let last = inner[inner.len() - 1] / (1.0 + beta_right * h);
    inner.push(last);
    inner
}

// ---------------------------------------------------------------------------
// forward solve
// ---------------------------------------------------------------------------

/// Marches the temperature from the initial level to the horizon under the
/// given boundary coefficient. Trajectory controls are read at the level
/// being computed.
pub fn forward_solve(
    params: &ModelParams,
    beta: &BoundaryControl,
    mode: SchemeMode,
) -> Result<FieldHistory> {
    let mesh = Mesh1D::uniform(params.n_elements);
    let steps = params.num_steps();
    let tau = params.time_step;
    beta.check_levels(steps + 1)?;
    if params.initial_temperature.len() != mesh.n_nodes() {
        return Err(Error::GridMismatch(format!(
            "initial temperature has {} values, mesh has {} nodes",
            params.initial_temperature.len(),
            mesh.n_nodes()
        )));
    }

    let f = &params.conductivity;
    let mut levels = Vec::with_capacity(steps + 1);
    levels.push(params.initial_temperature.clone());
    guard_level(&levels[0], 0)?;

    match mode {
        SchemeMode::ConsistentGalerkin => {
            let ops = ConsistentOperators::build(&mesh, tau);
            for n in 0..steps {
                let (bl, br) = (beta.left_at(n + 1), beta.right_at(n + 1));
                let matrix = ops.step_matrix(tau, bl, br);
                let prev = &levels[n];
                let source = consistent_source(f, params.lambda, &ops.weights, prev);
                let mut rhs = ops.mass.matvec(prev);
                for (r, s) in rhs.iter_mut().zip(&source) {
                    *r += tau * s;
                }
                let next = step_solve(&matrix, &rhs, n + 1)?;
                guard_level(&next, n + 1)?;
                levels.push(next);
            }
        }
        SchemeMode::BoundaryLumped => {
            let h = mesh.spacing();
            for n in 0..steps {
                let (bl, br) = (beta.left_at(n + 1), beta.right_at(n + 1));
                let matrix = lumped_step_matrix(&mesh, tau, bl, br);
                let rhs = lumped_step_rhs(&mesh, tau, params.lambda, f, &levels[n], bl, br);
                let inner = step_solve(&matrix, &rhs, n + 1)?;
                let next = lumped_complete(inner, h, br);
                guard_level(&next, n + 1)?;
                levels.push(next);
            }
        }
    }
    Ok(FieldHistory::new(mesh, tau, levels))
}

// ---------------------------------------------------------------------------
// adjoint solve
// ---------------------------------------------------------------------------

/// Solves the adjoint problem backward from a zero terminal level:
///
/// ```text
/// -phi_t - phi_xx = coupling(u) phi + 1,    dphi/dnu + beta phi = 0
/// ```
///
/// The f'(u)-coupling terms are taken explicitly at the already-known later
/// level, so each step stays tridiagonal. The value of `phi` at time zero is
/// left as computed; callers report its size as a residual.
pub fn adjoint_solve(
    params: &ModelParams,
    beta: &BoundaryControl,
    u: &FieldHistory,
    mode: SchemeMode,
) -> Result<FieldHistory> {
    let steps = params.num_steps();
    let tau = params.time_step;
    check_history(params, u, "state")?;
    beta.check_levels(steps + 1)?;

    let mesh = u.mesh().clone();
    let f = &params.conductivity;
    let n_nodes = mesh.n_nodes();
    let mut reversed: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    reversed.push(vec![0.0; n_nodes]);

    match mode {
        SchemeMode::ConsistentGalerkin => {
            let ops = ConsistentOperators::build(&mesh, tau);
            for n in (0..steps).rev() {
                let later = reversed.last().expect("terminal level present");
                let (bl, br) = (beta.left_at(n), beta.right_at(n));
                let matrix = ops.step_matrix(tau, bl, br);
                let coupling =
                    source_derivative_transpose(f, params.lambda, &ops.weights, u.level(n), later);
                let mut rhs = ops.mass.matvec(later);
                for ((r, w), c) in rhs.iter_mut().zip(&ops.weights).zip(&coupling) {
                    *r += tau * (w + c);
                }
                let earlier = step_solve(&matrix, &rhs, n)?;
                guard_level(&earlier, n)?;
                reversed.push(earlier);
            }
        }
        SchemeMode::BoundaryLumped => {
            let h = mesh.spacing();
            let n_inner = mesh.n_elements();
            let c = -h / 6.0 - tau / h;
            let d = -2.0 * h / 3.0 + 2.0 * tau / h;
            for n in (0..steps).rev() {
                let later = reversed.last().expect("terminal level present");
                let (bl, br) = (beta.left_at(n), beta.right_at(n));
                let state = u.level(n);
                let f0 = f.eval(state[0]);
                let fn_ = f.eval(state[n_nodes - 1]);
                let fsum = f0 + fn_;

                // Mass-pattern rows produced by the same ghost eliminations
                // as the forward scheme.
                let mut matrix = Tridiagonal::zero(n_inner);
                matrix.diag[0] = h / 6.0 * (5.0 + h * bl);
                matrix.sup[0] = h / 3.0;
                for j in 1..n_inner - 1 {
                    matrix.sub[j - 1] = h / 6.0;
                    matrix.diag[j] = 2.0 * h / 3.0;
                    matrix.sup[j] = h / 6.0;
                }
                matrix.sub[n_inner - 2] = h / 6.0;
                matrix.diag[n_inner - 1] =
                    2.0 * h / 3.0 * (1.0 + 1.0 / (4.0 * (1.0 + br * h)));

                // The later level enters through the (c, d) rows; the unit
                // cost source contributes tau h per equation; the nonlocal
                // corrections ride on the first equation only.
                let mut rhs = vec![0.0; n_inner];
                let fprime_term = 2.0 * lumped_coupling(params.lambda, tau, bl, f, state[0], fsum);
                rhs[0] = -((c * (1.0 + h * bl) + d + tau * bl / 2.0 - fprime_term) * later[0]
                    + 2.0 * c * later[1])
                    + tau * h
                    + 2.0 * params.lambda * tau * (later[0] + later[n_nodes - 1]) * f0
                        / (fsum * fsum * fsum);
                for j in 1..n_inner - 1 {
                    rhs[j] = -(c * later[j - 1] + d * later[j] + c * later[j + 1]) + tau * h;
                }
                rhs[n_inner - 1] = -(c * later[n_inner - 2]
                    + (d + c / (1.0 + br * h)) * later[n_inner - 1])
                    + tau * h;

                let inner = step_solve(&matrix, &rhs, n)?;
                let earlier = lumped_complete(inner, h, br);
                guard_level(&earlier, n)?;
                reversed.push(earlier);
            }
        }
    }
    reversed.reverse();
    Ok(FieldHistory::new(mesh, tau, reversed))
}

/// Diagonal f'(u) correction of the first boundary-lumped adjoint equation.
fn lumped_coupling(lambda: f64, tau: f64, beta_left: f64, f: &Conductivity, u0: f64, fsum: f64) -> f64 {
    lambda * tau * beta_left * f.deriv(u0) / (fsum * fsum)
}

// ---------------------------------------------------------------------------
// sensitivity solve
// ---------------------------------------------------------------------------

/// Solves the sensitivity problem: the derivative of the temperature with
/// respect to the boundary coefficient in the direction `l`, starting from
/// a zero initial level. Each step linearizes the matching forward step, so
/// the result is checkable against difference quotients of forward solves.
pub fn sensitivity_solve(
    params: &ModelParams,
    beta: &BoundaryControl,
    u: &FieldHistory,
    l: &BoundaryControl,
    mode: SchemeMode,
) -> Result<FieldHistory> {
    let steps = params.num_steps();
    let tau = params.time_step;
    check_history(params, u, "state")?;
    beta.check_levels(steps + 1)?;
    l.check_levels(steps + 1)?;

    let mesh = u.mesh().clone();
    let f = &params.conductivity;
    let n_nodes = mesh.n_nodes();
    let mut levels: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    levels.push(vec![0.0; n_nodes]);

    match mode {
        SchemeMode::ConsistentGalerkin => {
            let ops = ConsistentOperators::build(&mesh, tau);
            for n in 0..steps {
                let (bl, br) = (beta.left_at(n + 1), beta.right_at(n + 1));
                let (ll, lr) = (l.left_at(n + 1), l.right_at(n + 1));
                let matrix = ops.step_matrix(tau, bl, br);
                let prev = &levels[n];
                let coupling =
                    source_derivative_action(f, params.lambda, &ops.weights, u.level(n), prev);
                let mut rhs = ops.mass.matvec(prev);
                for (r, c) in rhs.iter_mut().zip(&coupling) {
                    *r += tau * c;
                }
                // Robin perturbation: the direction times the implicit state.
                let next_state = u.level(n + 1);
                rhs[0] -= tau * ll * next_state[0];
                rhs[n_nodes - 1] -= tau * lr * next_state[n_nodes - 1];
                let next = step_solve(&matrix, &rhs, n + 1)?;
                guard_level(&next, n + 1)?;
                levels.push(next);
            }
        }
        SchemeMode::BoundaryLumped => {
            let h = mesh.spacing();
            let n_inner = mesh.n_elements();
            let a = h / 6.0 - tau / h;
            for n in 0..steps {
                let (bl, br) = (beta.left_at(n + 1), beta.right_at(n + 1));
                let (ll, lr) = (l.left_at(n + 1), l.right_at(n + 1));
                let matrix = lumped_step_matrix(&mesh, tau, bl, br);
                let prev = &levels[n];
                let state = u.level(n);
                let next_state = u.level(n + 1);

                // Mass side applied to the previous sensitivity level.
                let mut rhs = vec![0.0; n_inner];
                rhs[0] = h / 6.0 * (5.0 + h * bl) * prev[0] + h / 3.0 * prev[1];
                for j in 1..n_inner - 1 {
                    rhs[j] = h / 6.0 * prev[j - 1] + 2.0 * h / 3.0 * prev[j] + h / 6.0 * prev[j + 1];
                }
                rhs[n_inner - 1] = h / 6.0 * prev[n_inner - 2]
                    + 2.0 * h / 3.0 * (1.0 + 1.0 / (4.0 * (1.0 + br * h))) * prev[n_inner - 1];

                // Source linearization at the known state level, first
                // equation only like the forward source.
                if params.lambda != 0.0 {
                    let f0 = f.eval(state[0]);
                    let fn_ = f.eval(state[n_nodes - 1]);
                    let fsum = f0 + fn_;
                    let fp0 = f.deriv(state[0]) * prev[0];
                    let fpn = f.deriv(state[n_nodes - 1]) * prev[n_nodes - 1];
                    rhs[0] += tau
                        * (2.0 * params.lambda * fp0 / (fsum * fsum)
                            - 4.0 * params.lambda * f0 * (fp0 + fpn) / (fsum * fsum * fsum));
                }

                // Robin perturbation in every slot where beta appears.
                let denom = 1.0 + br * h;
                rhs[0] += h * h / 6.0 * ll * state[0];
                rhs[0] -= (a * h * ll + tau * ll / 2.0) * next_state[0];
                rhs[n_inner - 1] -=
                    2.0 * h / 3.0 * h * lr / (4.0 * denom * denom) * state[n_inner - 1];
                rhs[n_inner - 1] += a * h * lr / (denom * denom) * next_state[n_inner - 1];

                let mut inner = step_solve(&matrix, &rhs, n + 1)?;
                let last = inner[n_inner - 1] / denom
                    - next_state[n_inner - 1] * h * lr / (denom * denom);
                inner.push(last);
                guard_level(&inner, n + 1)?;
                levels.push(inner);
            }
        }
    }
    Ok(FieldHistory::new(mesh, tau, levels))
}

/// The history must match the parameter grid.
fn check_history(params: &ModelParams, field: &FieldHistory, role: &str) -> Result<()> {
    if field.mesh().n_nodes() != params.n_elements + 1 {
        return Err(Error::GridMismatch(format!(
            "{role} history has {} nodes, parameters expect {}",
            field.mesh().n_nodes(),
            params.n_elements + 1
        )));
    }
    if field.num_levels() != params.num_levels() {
        return Err(Error::GridMismatch(format!(
            "{role} history has {} levels, parameters expect {}",
            field.num_levels(),
            params.num_levels()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Conductivity, ConductivityId, ControlBox, ModelParams};
    use crate::testutil::{dense_solve, sup_distance};

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
    fn constant_forcing_gives_linear_growth() {
        // f = 2, beta = 0, lambda = 1: source is 1/2 everywhere, so each
        // backward difference step adds exactly tau/2 at every node.
        let params = constant_f_params(50, 0.01, 1.0);
        let beta = BoundaryControl::constant(0.0);
        let u = forward_solve(&params, &beta, SchemeMode::ConsistentGalerkin).unwrap();
        for n in 0..u.num_levels() {
            let expected = n as f64 * 0.01 / 2.0;
            for v in u.level(n) {
                assert!((v - expected).abs() < 1e-12, "level {n}: {v} vs {expected}");
            }
        }
    }

    #[test]
    fn source_free_insulated_constant_state_is_preserved() {
        let mut params = constant_f_params(20, 0.05, 0.05);
        params.lambda = 0.0;
        params.initial_temperature = vec![0.75; 21];
        let beta = BoundaryControl::constant(0.0);
        let u = forward_solve(&params, &beta, SchemeMode::ConsistentGalerkin).unwrap();
        for v in u.last() {
            assert!((v - 0.75).abs() < 1e-13);
        }
    }

    #[test]
    fn forward_reaches_the_robin_steady_state() {
        // f = 2, beta = 1: the stationary profile solves -u'' = 1/2 with
        // u'(0) = u(0), u'(1) = -u(1), i.e. (x - x^2 + 1) / 4.
        let params = constant_f_params(100, 0.01, 10.0);
        let beta = BoundaryControl::constant(1.0);
        let u = forward_solve(&params, &beta, SchemeMode::ConsistentGalerkin).unwrap();
        for (x, v) in u.mesh().nodes().iter().zip(u.last()) {
            let expected = (x - x * x + 1.0) / 4.0;
            assert!((v - expected).abs() < 1e-3, "at {x}: {v} vs {expected}");
        }
    }

    #[test]
    fn lumped_rows_compose_from_the_legacy_constants() {
        let mesh = Mesh1D::uniform(10);
        let (tau, bl, br) = (0.01, 0.37, 0.81);
        let h = mesh.spacing();
        let a = h / 6.0 - tau / h;
        let b = 2.0 * h / 3.0 + 2.0 * tau / h;
        let m = lumped_step_matrix(&mesh, tau, bl, br);
        assert_eq!(m.diag[0], a * (1.0 + h * bl) + b + tau * bl / 2.0);
        assert_eq!(m.sup[0], 2.0 * a);
        for j in 1..9 {
            assert_eq!(m.diag[j], b);
            assert_eq!(m.sub[j - 1], a);
            assert_eq!(m.sup[j], a);
        }
        assert_eq!(m.diag[9], b + a / (1.0 + br * h));
        assert_eq!(m.sub[8], a);

        let f = Conductivity::builtin(ConductivityId::ShiftedSine);
        let prev: Vec<f64> = (0..11).map(|j| 0.1 * j as f64).collect();
        let rhs = lumped_step_rhs(&mesh, tau, 1.0, &f, &prev, bl, br);
        let fsum = f.eval(prev[0]) + f.eval(prev[10]);
        assert_eq!(
            rhs[0],
            h / 6.0 * (5.0 + h * bl) * prev[0]
                + h / 3.0 * prev[1]
                + 2.0 * 1.0 * tau * f.eval(prev[0]) / (fsum * fsum)
        );
        for j in 1..9 {
            assert_eq!(rhs[j], h / 6.0 * prev[j - 1] + 2.0 * h / 3.0 * prev[j] + h / 6.0 * prev[j + 1]);
        }
        assert_eq!(
            rhs[9],
            h / 6.0 * prev[8] + 2.0 * h / 3.0 * (1.0 + 1.0 / (4.0 * (1.0 + br * h))) * prev[9]
        );
    }

    #[test]
    fn lumped_forward_matches_a_dense_reimplementation_for_one_step() {
        // Re-assemble the eliminated system densely and compare one step.
        let mesh = Mesh1D::uniform(6);
        let params = {
            let mut p = catalog_params(6, 0.002, 0.002);
            p.initial_temperature = mesh.nodes().iter().map(|x| 0.3 + x * x).collect();
            p
        };
        let beta = BoundaryControl::constant(0.4);
        let u = forward_solve(&params, &beta, SchemeMode::BoundaryLumped).unwrap();

        let m = lumped_step_matrix(&mesh, 0.002, 0.4, 0.4);
        let rhs = lumped_step_rhs(
            &mesh,
            0.002,
            1.0,
            &params.conductivity,
            &params.initial_temperature,
            0.4,
            0.4,
        );
        let n = m.n();
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            dense[i][i] = m.diag[i];
            if i > 0 {
                dense[i][i - 1] = m.sub[i - 1];
            }
            if i + 1 < n {
                dense[i][i + 1] = m.sup[i];
            }
        }
        let x = dense_solve(&dense, &rhs);
        assert!(sup_distance(&x, &u.level(1)[..n]) < 1e-12);
        let expected_last = x[n - 1] / (1.0 + 0.4 * mesh.spacing());
        assert!((u.level(1)[n] - expected_last).abs() < 1e-12);
    }

    #[test]
    fn forward_modes_agree_on_the_source_free_zero_state() {
        let mut params = catalog_params(20, 0.01, 0.5);
        params.lambda = 0.0;
        let beta = BoundaryControl::constant(0.3);
        let a = forward_solve(&params, &beta, SchemeMode::ConsistentGalerkin).unwrap();
        let b = forward_solve(&params, &beta, SchemeMode::BoundaryLumped).unwrap();
        assert!(a.sup_norm() < 1e-14);
        assert!(b.sup_norm() < 1e-14);
    }

    #[test]
    fn adjoint_reduces_to_remaining_time_for_flat_conductivity() {
        // f' = 0 and beta = 0 reduce the adjoint problem to -phi_t = 1 with
        // phi(T) = 0, so every level is the remaining time.
        let params = constant_f_params(50, 0.01, 1.0);
        let beta = BoundaryControl::constant(0.0);
        let u = forward_solve(&params, &beta, SchemeMode::ConsistentGalerkin).unwrap();
        let phi = adjoint_solve(&params, &beta, &u, SchemeMode::ConsistentGalerkin).unwrap();
        for n in 0..phi.num_levels() {
            let expected = 1.0 - n as f64 * 0.01;
            for v in phi.level(n) {
                assert!((v - expected).abs() < 1e-12, "level {n}");
            }
        }
    }

    #[test]
    fn adjoint_terminal_level_is_exactly_zero() {
        let params = catalog_params(30, 0.01, 0.5);
        let beta = BoundaryControl::constant(0.5);
        let u = forward_solve(&params, &beta, SchemeMode::ConsistentGalerkin).unwrap();
        let phi = adjoint_solve(&params, &beta, &u, SchemeMode::ConsistentGalerkin).unwrap();
        assert!(phi.last().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn adjoint_steady_profile_matches_a_two_point_boundary_value_oracle() {
        // Long horizon: near t = 0 the adjoint saturates at the solution of
        // -phi'' = 1 with phi'(0) = phi(0), phi'(1) = -phi(1), which is
        // (x - x^2 + 1) / 2. Cross-check with a dense finite difference
        // solve of the same boundary value problem.
        let params = constant_f_params(80, 0.01, 10.0);
        let beta = BoundaryControl::constant(1.0);
        let u = forward_solve(&params, &beta, SchemeMode::ConsistentGalerkin).unwrap();
        let phi = adjoint_solve(&params, &beta, &u, SchemeMode::ConsistentGalerkin).unwrap();
        for (x, v) in phi.mesh().nodes().iter().zip(phi.level(0)) {
            let expected = (x - x * x + 1.0) / 2.0;
            assert!((v - expected).abs() < 1e-3, "closed form at {x}: {v}");
        }

        let n = 40usize;
        let h = 1.0 / n as f64;
        let mut dense = vec![vec![0.0; n + 1]; n + 1];
        let mut rhs = vec![1.0; n + 1];
        for i in 1..n {
            dense[i][i - 1] = -1.0 / (h * h);
            dense[i][i] = 2.0 / (h * h);
            dense[i][i + 1] = -1.0 / (h * h);
        }
        // Ghost-value second order Robin closures at both ends.
        dense[0][0] = 2.0 / (h * h) + 2.0 / h;
        dense[0][1] = -2.0 / (h * h);
        dense[n][n] = 2.0 / (h * h) + 2.0 / h;
        dense[n][n - 1] = -2.0 / (h * h);
        rhs[0] = 1.0;
        rhs[n] = 1.0;
        let oracle = dense_solve(&dense, &rhs);
        for (i, v) in oracle.iter().enumerate() {
            let x = i as f64 * h;
            let expected = (x - x * x + 1.0) / 2.0;
            assert!((v - expected).abs() < 1e-3, "oracle at {x}: {v}");
        }
    }

    #[test]
    fn lumped_adjoint_runs_inside_its_stability_window() {
        // The lumped adjoint advances the diffusion explicitly, so it needs
        // tau of order h^2. Within that window it recovers the remaining
        // time for flat conductivity away from the left boundary; the
        // first few nodes carry the O(1)-relative artifact of the legacy
        // ghost closure and are only required to stay bounded.
        let params = constant_f_params(8, 1e-3, 0.05);
        let beta = BoundaryControl::constant(0.0);
        let u = forward_solve(&params, &beta, SchemeMode::BoundaryLumped).unwrap();
        let phi = adjoint_solve(&params, &beta, &u, SchemeMode::BoundaryLumped).unwrap();
        assert!(phi.last().iter().all(|v| *v == 0.0));
        let level0 = phi.level(0);
        for v in level0 {
            assert!(*v > 0.0 && *v < 0.15, "phi(0) = {v}");
        }
        for v in &level0[4..] {
            assert!((v - 0.05).abs() < 1e-3, "interior phi(0) = {v}");
        }
    }

    #[test]
    fn lumped_adjoint_reports_divergence_outside_the_window() {
        let params = constant_f_params(50, 0.01, 1.0);
        let beta = BoundaryControl::constant(0.0);
        let u = forward_solve(&params, &beta, SchemeMode::BoundaryLumped).unwrap();
        match adjoint_solve(&params, &beta, &u, SchemeMode::BoundaryLumped) {
            Err(Error::Diverged { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn zero_direction_gives_zero_sensitivity() {
        // N = 50 with tau = 0.01 keeps the lumped closure inside its
        // stable window (large tau/h^2).
        for mode in [SchemeMode::ConsistentGalerkin, SchemeMode::BoundaryLumped] {
            let params = catalog_params(50, 0.01, 0.2);
            let beta = BoundaryControl::constant(0.5);
            let u = forward_solve(&params, &beta, mode).unwrap();
            let psi =
                sensitivity_solve(&params, &beta, &u, &BoundaryControl::constant(0.0), mode)
                    .unwrap();
            assert!(psi.sup_norm() == 0.0);
        }
    }

    #[test]
    fn sensitivity_matches_difference_quotients_of_forward_solves() {
        for mode in [SchemeMode::ConsistentGalerkin, SchemeMode::BoundaryLumped] {
            let params = catalog_params(30, 0.01, 0.5);
            let beta = BoundaryControl::constant(0.5);
            let dir = BoundaryControl::constant(1.0);
            let u = forward_solve(&params, &beta, mode).unwrap();
            let psi = sensitivity_solve(&params, &beta, &u, &dir, mode).unwrap();
            let mut previous = f64::INFINITY;
            for eps in [1e-2, 1e-3, 1e-4] {
                let shifted = BoundaryControl::constant(0.5 + eps);
                let u_eps = forward_solve(&params, &shifted, mode).unwrap();
                let mut worst: f64 = 0.0;
                for n in 0..u.num_levels() {
                    for j in 0..u.mesh().n_nodes() {
                        let quotient = (u_eps.level(n)[j] - u.level(n)[j]) / eps;
                        worst = worst.max((quotient - psi.level(n)[j]).abs());
                    }
                }
                assert!(worst < previous, "{mode:?}: error not decreasing at eps {eps}");
                previous = worst;
            }
            let scale = psi.sup_norm().max(1e-12);
            assert!(previous / scale < 5e-2, "{mode:?}: relative error {}", previous / scale);
        }
    }

    #[test]
    fn trajectory_level_count_is_enforced() {
        let params = catalog_params(10, 0.1, 1.0);
        let beta = BoundaryControl::Trajectory { left: vec![0.5; 3], right: vec![0.5; 3] };
        match forward_solve(&params, &beta, SchemeMode::ConsistentGalerkin) {
            Err(Error::GridMismatch(_)) => {}
            other => panic!("expected grid mismatch, got {other:?}"),
        }
    }
}
