//! Piecewise-linear finite elements on a uniform mesh of the unit interval:
//! mass/stiffness assembly, a tridiagonal direct solver, and the quadrature
//! and norm helpers the time steppers are built from.

use crate::error::{Error, Result};

/// Uniform mesh of [0, 1] with `n_elements` cells and `n_elements + 1` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    n_elements: usize,
    h: f64,
    nodes: Vec<f64>,
}

impl Mesh1D {
    pub fn uniform(n_elements: usize) -> Mesh1D {
        assert!(n_elements >= 2, "mesh needs at least two elements");
        let h = 1.0 / n_elements as f64;
        let nodes = (0..=n_elements).map(|j| j as f64 / n_elements as f64).collect();
        Mesh1D { n_elements, h, nodes }
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn n_nodes(&self) -> usize {
        self.n_elements + 1
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
}

/// Symmetric storage of a tridiagonal matrix: `sub` and `sup` hold the
/// off-diagonals (length n - 1), `diag` the main diagonal (length n).
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl Tridiagonal {
    pub fn zero(n: usize) -> Tridiagonal {
        assert!(n >= 2);
        Tridiagonal { sub: vec![0.0; n - 1], diag: vec![0.0; n], sup: vec![0.0; n - 1] }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    /// self + factor * other, entrywise.
    pub fn add_scaled(&self, factor: f64, other: &Tridiagonal) -> Tridiagonal {
        assert_eq!(self.n(), other.n());
        Tridiagonal {
            sub: self.sub.iter().zip(&other.sub).map(|(a, b)| a + factor * b).collect(),
            diag: self.diag.iter().zip(&other.diag).map(|(a, b)| a + factor * b).collect(),
            sup: self.sup.iter().zip(&other.sup).map(|(a, b)| a + factor * b).collect(),
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        assert_eq!(x.len(), n);
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.sub[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.sup[i] * x[i + 1];
            }
            y[i] = s;
        }
        y
    }
}

/// Consistent mass matrix: interior rows (h/6, 2h/3, h/6), corner diagonal
/// h/3 from the half-support boundary basis functions.
pub fn assemble_mass(mesh: &Mesh1D) -> Tridiagonal {
    let n = mesh.n_nodes();
    let h = mesh.spacing();
    let mut m = Tridiagonal::zero(n);
    for i in 0..n {
        m.diag[i] = if i == 0 || i == n - 1 { h / 3.0 } else { 2.0 * h / 3.0 };
    }
    for i in 0..n - 1 {
        m.sub[i] = h / 6.0;
        m.sup[i] = h / 6.0;
    }
    m
}

/// Stiffness matrix of -d^2/dx^2 with natural boundary rows: interior rows
/// (-1/h, 2/h, -1/h), corner diagonal 1/h.
pub fn assemble_stiffness(mesh: &Mesh1D) -> Tridiagonal {
    let n = mesh.n_nodes();
    let h = mesh.spacing();
    let mut k = Tridiagonal::zero(n);
    for i in 0..n {
        k.diag[i] = if i == 0 || i == n - 1 { 1.0 / h } else { 2.0 / h };
    }
    for i in 0..n - 1 {
        k.sub[i] = -1.0 / h;
        k.sup[i] = -1.0 / h;
    }
    k
}

/// Direct tridiagonal solve by single-sweep elimination. A pivot smaller
/// than 1e-14 relative to its row scale is reported as singular rather than
/// silently amplified.
pub fn thomas_solve(matrix: &Tridiagonal, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = matrix.n();
    assert_eq!(rhs.len(), n);
    let mut diag = matrix.diag.clone();
    let mut x = rhs.to_vec();

    let row_scale = |i: usize| -> f64 {
        let mut s = matrix.diag[i].abs();
        if i > 0 {
            s += matrix.sub[i - 1].abs();
        }
        if i + 1 < n {
            s += matrix.sup[i].abs();
        }
        s
    };

    for i in 0..n {
        if i > 0 {
            let w = matrix.sub[i - 1] / diag[i - 1];
            diag[i] -= w * matrix.sup[i - 1];
            x[i] -= w * x[i - 1];
        }
        let scale = row_scale(i);
        if scale == 0.0 || diag[i].abs() < 1e-14 * scale {
            return Err(Error::SingularSystem { row: i });
        }
    }
    x[n - 1] /= diag[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = (x[i] - matrix.sup[i] * x[i + 1]) / diag[i];
    }
    Ok(x)
}

/// Trapezoid integral of a nodal function over [0, 1].
pub fn integrate_nodal(mesh: &Mesh1D, values: &[f64]) -> f64 {
    assert_eq!(values.len(), mesh.n_nodes());
    let h = mesh.spacing();
    let interior: f64 = values[1..values.len() - 1].iter().sum();
    h * (0.5 * values[0] + interior + 0.5 * values[values.len() - 1])
}

/// Trapezoid quadrature weights: h at interior nodes, h/2 at the ends.
pub(crate) fn trapezoid_weights(mesh: &Mesh1D) -> Vec<f64> {
    let n = mesh.n_nodes();
    let h = mesh.spacing();
    let mut w = vec![h; n];
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
    w
}

/// Squared energy norm |g'|^2 + m (g(0)^2 + g(1)^2) of the piecewise-linear
/// interpolant; the gradient part is exact for that interpolant.
pub fn star_norm_sq(mesh: &Mesh1D, values: &[f64], m: f64) -> f64 {
    assert_eq!(values.len(), mesh.n_nodes());
    let h = mesh.spacing();
    let mut grad = 0.0;
    for j in 0..mesh.n_elements() {
        let d = values[j + 1] - values[j];
        grad += d * d / h;
    }
    grad + m * (values[0] * values[0] + values[values.len() - 1] * values[values.len() - 1])
}

/// Values of a nodal function at the two boundary points.
pub fn boundary_trace(values: &[f64]) -> (f64, f64) {
    (values[0], values[values.len() - 1])
}

/// Largest absolute nodal value.
pub fn sup_norm(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}
