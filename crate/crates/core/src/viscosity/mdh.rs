//! Highest modal decay (MDH) viscosity: per cell, the energy fraction of the
//! top Legendre mode drives a smooth ramp from 0 to μ_max; the per-cell
//! values are then blended into a continuous degree-2 field.

use crate::autodiff::{Tape, Tensor};
use crate::equations::EquationSpec;
use crate::error::Result;
use crate::mesh::{invert, legendre, DgMesh};

use super::{mu_max_per_cell, scalar_field, Viscosity};

#[derive(Debug, Clone, Copy)]
pub struct MdhParams {
    pub c_a: f64,
    pub c_k: f64,
    /// Cap coefficient, shared with the DB model.
    pub c_max: f64,
}

impl Default for MdhParams {
    fn default() -> Self {
        MdhParams { c_a: 2.5, c_k: 0.2, c_max: 0.5 }
    }
}

/// Activation threshold r₀ = −(c_A + 4 log₁₀(p−1)).
pub fn threshold_r0(c_a: f64, p: usize) -> f64 {
    -(c_a + 4.0 * ((p - 1) as f64).log10())
}

/// The three-branch ramp from 0 to 1, continuous and monotone in r.
pub fn ramp(r: f64, r0: f64, c_k: f64) -> f64 {
    if r < r0 - c_k {
        0.0
    } else if r < r0 + c_k {
        0.5 * (1.0 + (std::f64::consts::PI * (r - r0) / (2.0 * c_k)).sin())
    } else {
        1.0
    }
}

/// Nodal-to-Legendre-modal transform for one cell's nodal values.
#[derive(Debug, Clone)]
pub struct ModalTransform {
    p: usize,
    /// Inverse Vandermonde, row-major [p, p]: modes = V⁻¹ · nodal.
    vinv: Vec<f64>,
    /// Legendre norms ‖ψ_k‖² = 2/(2k+1).
    norms: Vec<f64>,
}

impl ModalTransform {
    pub fn new(nodes: &[f64]) -> Result<ModalTransform> {
        let p = nodes.len();
        let mut v = vec![0.0; p * p];
        for (k, &x) in nodes.iter().enumerate() {
            for m in 0..p {
                v[k * p + m] = legendre(m, x).0;
            }
        }
        let vinv = invert(&v, p)?;
        let norms = (0..p).map(|k| 2.0 / (2 * k + 1) as f64).collect();
        Ok(ModalTransform { p, vinv, norms })
    }

    pub fn modes(&self, nodal: &[f64]) -> Vec<f64> {
        let p = self.p;
        let mut out = vec![0.0; p];
        for m in 0..p {
            for k in 0..p {
                out[m] += self.vinv[m * p + k] * nodal[k];
            }
        }
        out
    }

    /// r = log₁₀(‖ρ̂_{p−1} ψ_{p−1}‖² / ‖ρ‖²); −∞ when the top mode or the
    /// whole cell has no energy (treated as smooth by the ramp).
    pub fn modal_ratio(&self, nodal: &[f64]) -> f64 {
        let modes = self.modes(nodal);
        let p = self.p;
        let top = modes[p - 1] * modes[p - 1] * self.norms[p - 1];
        let total: f64 =
            modes.iter().zip(&self.norms).map(|(&m, &n)| m * m * n).sum();
        // A top mode at the round-off floor of the transform is zero in
        // exact arithmetic; report the sentinel rather than log10(noise).
        if total <= 0.0 || top <= total * 1e-28 {
            f64::NEG_INFINITY
        } else {
            (top / total).log10()
        }
    }
}

/// The highest-mode decay ratio of a single cell's nodal values.
pub fn legendre_modal_ratio(mesh: &DgMesh, rho_cell: &[f64]) -> Result<f64> {
    Ok(ModalTransform::new(&mesh.nodes)?.modal_ratio(rho_cell))
}

impl MdhParams {
    /// Per-cell viscosity values before interpolation.
    pub fn cell_values(&self, mesh: &DgMesh, eq: &EquationSpec, u: &[f64]) -> Result<Vec<f64>> {
        let (n_x, p) = (mesh.n_x, mesh.p);
        let n_points = n_x * p;
        // ρ is the scalar variable, or the density for Euler.
        let rho = scalar_field(eq, u, n_points, false);
        let mu_max = mu_max_per_cell(self.c_max, mesh, eq, u)?;
        let transform = ModalTransform::new(&mesh.nodes)?;
        let r0 = threshold_r0(self.c_a, p);
        let mut out = vec![0.0; n_x];
        for j in 0..n_x {
            let r = transform.modal_ratio(&rho[j * p..(j + 1) * p]);
            out[j] = mu_max[j] * ramp(r, r0, self.c_k);
        }
        Ok(out)
    }

    /// Blend per-cell values into a continuous field: a degree-2 polynomial
    /// per cell with the cell value at the midpoint and neighbor averages at
    /// the interfaces, evaluated at the quadrature nodes.
    pub fn interpolate(&self, mesh: &DgMesh, cell_mu: &[f64]) -> Vec<f64> {
        let (n_x, p) = (mesh.n_x, mesh.p);
        let periodic = mesh.boundary.is_periodic();
        let mut out = vec![0.0; n_x * p];
        for j in 0..n_x {
            let b = cell_mu[j];
            let left_neighbor = if j > 0 {
                cell_mu[j - 1]
            } else if periodic {
                cell_mu[n_x - 1]
            } else {
                // no neighbor: boundary cells average with themselves
                cell_mu[j]
            };
            let right_neighbor = if j + 1 < n_x {
                cell_mu[j + 1]
            } else if periodic {
                cell_mu[0]
            } else {
                cell_mu[j]
            };
            let a = 0.5 * (left_neighbor + b);
            let c = 0.5 * (b + right_neighbor);
            for (k, &x) in mesh.nodes.iter().enumerate() {
                let q = b + x * (c - a) / 2.0 + x * x * ((a + c) / 2.0 - b);
                // the quadratic can undershoot between cells (e.g. values
                // μmax, 0, 0); viscosity must stay nonnegative
                out[j * p + k] = q.max(0.0);
            }
        }
        out
    }

    pub fn field(&self, mesh: &DgMesh, eq: &EquationSpec, u: &[f64]) -> Result<Vec<f64>> {
        let cells = self.cell_values(mesh, eq, u)?;
        Ok(self.interpolate(mesh, &cells))
    }
}

impl Viscosity for MdhParams {
    fn mu(&self, _tape: &Tape, mesh: &DgMesh, eq: &EquationSpec, u: &Tensor) -> Result<Tensor> {
        let data = self.field(mesh, eq, u.data())?;
        Ok(Tensor::from_vec(vec![mesh.n_x, mesh.p], data))
    }
}
