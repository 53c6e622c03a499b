//! Monitors and brute-force references used to check the fast solvers.
//!
//! The dense reference solver deliberately shares no assembly code with the
//! rest of the crate: element integrals use two-point Gauss quadrature, the
//! nonlocal source is made fully implicit by an inner fixed-point iteration,
//! and each step is solved by dense LU factorization. Agreement between this
//! path and the production stepper is therefore evidence, not tautology.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::{integrate_nodal, star_norm_sq, Mesh1D};
use crate::model::{Conductivity, ModelParams};
use crate::solver::{forward_solve, BoundaryControl, FieldHistory, SchemeMode, DIVERGENCE_GUARD};

/// Boundedness monitor: discrete analogues of the a priori energy estimate.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnergyBoundReport {
    /// Largest squared L2 norm over all time levels.
    pub max_level_l2_sq: f64,
    /// Time-trapezoid sum of the boundary-weighted H1 norm squared, the
    /// boundary weight being the lower control bound.
    pub energy_time_sum: f64,
    /// Sum of the two monitors above.
    pub bound_total: f64,
    /// Largest nodal magnitude over all levels.
    pub max_level_sup: f64,
}

/// Read-only energy monitors for a computed trajectory.
pub fn energy_bound_report(params: &ModelParams, u: &FieldHistory) -> EnergyBoundReport {
    let mesh = u.mesh();
    let steps = u.num_levels() - 1;
    let tau = u.dt();
    let m = params.control_box.lower;

    let mut max_l2: f64 = 0.0;
    let mut energy_sum = 0.0;
    let mut max_sup: f64 = 0.0;
    for n in 0..=steps {
        let level = u.level(n);
        let squared: Vec<f64> = level.iter().map(|v| v * v).collect();
        max_l2 = max_l2.max(integrate_nodal(mesh, &squared));
        max_sup = max_sup.max(level.iter().fold(0.0f64, |acc, v| acc.max(v.abs())));
        let weight = if n == 0 || n == steps { 0.5 } else { 1.0 };
        energy_sum += tau * weight * star_norm_sq(mesh, level, m);
    }
    EnergyBoundReport {
        max_level_l2_sq: max_l2,
        energy_time_sum: energy_sum,
        bound_total: max_l2 + energy_sum,
        max_level_sup: max_sup,
    }
}

// ---------------------------------------------------------------------------
// dense reference solver
// ---------------------------------------------------------------------------

const GAUSS_POINTS: [f64; 2] = [-0.577_350_269_189_625_76, 0.577_350_269_189_625_76];

/// Dense matrices assembled per element with two-point Gauss quadrature.
struct DenseOperators {
    mass: Vec<Vec<f64>>,
    stiffness: Vec<Vec<f64>>,
}

fn dense_assemble(mesh: &Mesh1D) -> DenseOperators {
    let n = mesh.n_nodes();
    let mut mass = vec![vec![0.0; n]; n];
    let mut stiffness = vec![vec![0.0; n]; n];
    let nodes = mesh.nodes();
    for e in 0..mesh.n_elements() {
        let (x0, x1) = (nodes[e], nodes[e + 1]);
        let h = x1 - x0;
        for xi in GAUSS_POINTS {
            let x = 0.5 * (x0 + x1) + 0.5 * h * xi;
            let wq = 0.5 * h;
            let shapes = [(x1 - x) / h, (x - x0) / h];
            let grads = [-1.0 / h, 1.0 / h];
            for i in 0..2 {
                for j in 0..2 {
                    mass[e + i][e + j] += wq * shapes[i] * shapes[j];
                    stiffness[e + i][e + j] += wq * grads[i] * grads[j];
                }
            }
        }
    }
    DenseOperators { mass, stiffness }
}

/// Gauss-quadrature integral of f(u_h) for the piecewise-linear interpolant.
fn dense_f_integral(mesh: &Mesh1D, f: &Conductivity, u: &[f64]) -> f64 {
    let nodes = mesh.nodes();
    let mut total = 0.0;
    for e in 0..mesh.n_elements() {
        let (x0, x1) = (nodes[e], nodes[e + 1]);
        let h = x1 - x0;
        for xi in GAUSS_POINTS {
            let x = 0.5 * (x0 + x1) + 0.5 * h * xi;
            let s0 = (x1 - x) / h;
            let value = s0 * u[e] + (1.0 - s0) * u[e + 1];
            total += 0.5 * h * f.eval(value);
        }
    }
    total
}

/// Gauss-quadrature load vector: lambda f(u_h) / F^2 tested against each
/// shape function.
fn dense_source(mesh: &Mesh1D, f: &Conductivity, lambda: f64, u: &[f64]) -> Vec<f64> {
    let n = mesh.n_nodes();
    if lambda == 0.0 {
        return vec![0.0; n];
    }
    let total = dense_f_integral(mesh, f, u);
    let scale = lambda / (total * total);
    let nodes = mesh.nodes();
    let mut load = vec![0.0; n];
    for e in 0..mesh.n_elements() {
        let (x0, x1) = (nodes[e], nodes[e + 1]);
        let h = x1 - x0;
        for xi in GAUSS_POINTS {
            let x = 0.5 * (x0 + x1) + 0.5 * h * xi;
            let s0 = (x1 - x) / h;
            let value = s0 * u[e] + (1.0 - s0) * u[e + 1];
            let fv = scale * f.eval(value);
            load[e] += 0.5 * h * fv * s0;
            load[e + 1] += 0.5 * h * fv * (1.0 - s0);
        }
    }
    load
}

/// LU factorization with partial pivoting, stored in place.
struct DenseLu {
    lu: Vec<Vec<f64>>,
    pivots: Vec<usize>,
}

fn lu_factor(mut a: Vec<Vec<f64>>) -> Result<DenseLu> {
    let n = a.len();
    let mut pivots = vec![0usize; n];
    for col in 0..n {
        let mut best = col;
        for row in col + 1..n {
            if a[row][col].abs() > a[best][col].abs() {
                best = row;
            }
        }
        if a[best][col].abs() < 1e-14 {
            return Err(Error::SingularSystem { row: col });
        }
        a.swap(col, best);
        pivots[col] = best;
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            a[row][col] = factor;
            for k in col + 1..n {
                a[row][k] -= factor * a[col][k];
            }
        }
    }
    Ok(DenseLu { lu: a, pivots })
}

impl DenseLu {
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let mut x = rhs.to_vec();
        for col in 0..n {
            x.swap(col, self.pivots[col]);
            for row in col + 1..n {
                let factor = self.lu[row][col];
                x[row] -= factor * x[col];
            }
        }
        for row in (0..n).rev() {
            for col in row + 1..n {
                let v = x[col];
                x[row] -= self.lu[row][col] * v;
            }
            x[row] /= self.lu[row][row];
        }
        x
    }
}

/// Brute-force trajectory: dense Gauss assembly, fully implicit nonlocal
/// source resolved by an inner fixed-point iteration at every step, dense LU
/// per step. Limited to small meshes on purpose.
pub fn dense_reference_solve(params: &ModelParams, beta: &BoundaryControl) -> Result<FieldHistory> {
    if params.n_elements > 200 {
        return Err(Error::Config(
            "dense reference oracle supports at most 200 elements".into(),
        ));
    }
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

    let ops = dense_assemble(&mesh);
    let f = &params.conductivity;
    let n = mesh.n_nodes();
    let mut levels = Vec::with_capacity(steps + 1);
    levels.push(params.initial_temperature.clone());

    for step in 0..steps {
        let (bl, br) = (beta.left_at(step + 1), beta.right_at(step + 1));
        let mut matrix = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                matrix[i][j] = ops.mass[i][j] + tau * ops.stiffness[i][j];
            }
        }
        matrix[0][0] += tau * bl;
        matrix[n - 1][n - 1] += tau * br;
        let factored = lu_factor(matrix).map_err(|e| match e {
            Error::SingularSystem { .. } => Error::SingularStep { level: step + 1 },
            other => other,
        })?;

        let prev = &levels[step];
        let mut base_rhs = vec![0.0; n];
        for i in 0..n {
            base_rhs[i] = ops.mass[i].iter().zip(prev).map(|(m, v)| m * v).sum();
        }

        let next = if params.lambda == 0.0 {
            factored.solve(&base_rhs)
        } else {
            let mut guess = prev.clone();
            let mut accepted = None;
            for _ in 0..50 {
                let load = dense_source(&mesh, f, params.lambda, &guess);
                let mut rhs = base_rhs.clone();
                for (r, l) in rhs.iter_mut().zip(&load) {
                    *r += tau * l;
                }
                let candidate = factored.solve(&rhs);
                let scale = candidate.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
                let change = candidate
                    .iter()
                    .zip(&guess)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                guess = candidate;
                if change <= 1e-12 * scale {
                    accepted = Some(guess.clone());
                    break;
                }
            }
            accepted.ok_or(Error::InnerIterationStalled { level: step + 1 })?
        };

        if next.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_GUARD) {
            return Err(Error::Diverged { level: step + 1, guard: DIVERGENCE_GUARD });
        }
        levels.push(next);
    }
    Ok(FieldHistory::new(mesh, tau, levels))
}

// ---------------------------------------------------------------------------
// scheme cross-check
// ---------------------------------------------------------------------------

/// Gap record between the two assembly variants on one problem.
#[derive(Debug, Clone, Serialize)]
pub struct CrossCheckReport {
    /// Sup-norm gap at each time level.
    pub per_level_gaps: Vec<f64>,
    pub max_gap: f64,
    /// Max gap divided by h + tau.
    pub normalized_gap: f64,
}

/// Runs both assembly variants on the same problem and reports their
/// distance level by level.
pub fn scheme_cross_check(params: &ModelParams, beta: &BoundaryControl) -> Result<CrossCheckReport> {
    let consistent = forward_solve(params, beta, SchemeMode::ConsistentGalerkin)?;
    let lumped = forward_solve(params, beta, SchemeMode::BoundaryLumped)?;
    let per_level_gaps: Vec<f64> = (0..consistent.num_levels())
        .map(|n| {
            consistent
                .level(n)
                .iter()
                .zip(lumped.level(n))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max)
        })
        .collect();
    let max_gap = per_level_gaps.iter().fold(0.0f64, |acc, g| acc.max(*g));
    let h = consistent.mesh().spacing();
    let normalized_gap = max_gap / (h + params.time_step);
    Ok(CrossCheckReport { per_level_gaps, max_gap, normalized_gap })
}
