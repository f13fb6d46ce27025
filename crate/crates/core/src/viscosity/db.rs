//! Derivative-based (DB) viscosity: a gradient-scaled term capped by a
//! wave-speed bound, μ = min(c_β (Δx/(p−1))² |∂_x u|, c_max Δx/(p−1) max|s|).

use crate::autodiff::{Tape, Tensor};
use crate::equations::EquationSpec;
use crate::error::Result;
use crate::mesh::DgMesh;

use super::{mu_max_per_cell, scalar_field, Viscosity};

#[derive(Debug, Clone, Copy)]
pub struct DbParams {
    pub c_beta: f64,
    pub c_max: f64,
}

impl Default for DbParams {
    fn default() -> Self {
        DbParams { c_beta: 1.0, c_max: 0.5 }
    }
}

impl DbParams {
    /// Per-node viscosity as raw data; `u` is [s, n_x, p] flattened.
    pub fn field(&self, mesh: &DgMesh, eq: &EquationSpec, u: &[f64]) -> Result<Vec<f64>> {
        let (n_x, p) = (mesh.n_x, mesh.p);
        let n_points = n_x * p;
        // u is the scalar variable, or the velocity for Euler.
        let w = scalar_field(eq, u, n_points, true);
        let mu_max = mu_max_per_cell(self.c_max, mesh, eq, u)?;
        let h = mesh.dx / (p as f64 - 1.0);
        let beta_coef = self.c_beta * h * h;
        let jac = 2.0 / mesh.dx;

        let mut out = vec![0.0; n_points];
        for j in 0..n_x {
            let cell = &w[j * p..(j + 1) * p];
            for k in 0..p {
                // in-cell polynomial derivative at node k
                let mut du = 0.0;
                for (l, &cl) in cell.iter().enumerate() {
                    du += mesh.diff[k * p + l] * cl;
                }
                let mu_beta = beta_coef * (jac * du).abs();
                out[j * p + k] = mu_beta.min(mu_max[j]);
            }
        }
        Ok(out)
    }
}

impl Viscosity for DbParams {
    fn mu(&self, _tape: &Tape, mesh: &DgMesh, eq: &EquationSpec, u: &Tensor) -> Result<Tensor> {
        let data = self.field(mesh, eq, u.data())?;
        Ok(Tensor::from_vec(vec![mesh.n_x, mesh.p], data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Boundary;

    fn mesh_32() -> DgMesh {
        DgMesh::build(0.0, 1.0, 32, 4, Boundary::Periodic).unwrap()
    }

    #[test]
    fn constant_state_gives_zero() {
        let mesh = mesh_32();
        let eq = EquationSpec::advection();
        let u = vec![1.7; 32 * 4];
        let f = DbParams::default().field(&mesh, &eq, &u).unwrap();
        assert!(f.iter().all(|&v| v.abs() < 1e-13));
    }

    #[test]
    fn gradient_term_matches_hand_formula() {
        // Nodal data of slope 3 in physical space on every cell: |∂x u| = 3.
        let mesh = mesh_32();
        let eq = EquationSpec::advection();
        let mut u = vec![0.0; 32 * 4];
        for j in 0..32 {
            for k in 0..4 {
                u[j * 4 + k] = 3.0 * mesh.node_x(j, k);
            }
        }
        let f = DbParams::default().field(&mesh, &eq, &u).unwrap();
        // μ_β = (1/96)²·3 ≈ 3.2552e-4, below the cap μ_max = 0.5/96
        let expected = (1.0 / 96.0f64).powi(2) * 3.0;
        let cap = 0.5 / 96.0;
        assert!(expected < cap);
        for &v in &f {
            assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
        }
    }

    #[test]
    fn steep_gradient_hits_cap() {
        let mesh = mesh_32();
        let eq = EquationSpec::advection();
        let mut u = vec![0.0; 32 * 4];
        for j in 0..32 {
            for k in 0..4 {
                u[j * 4 + k] = 100.0 * mesh.node_x(j, k);
            }
        }
        let f = DbParams::default().field(&mesh, &eq, &u).unwrap();
        let cap = 0.5 / 96.0;
        // μ_β ≈ 1.085e-2 exceeds the cap, so every node is capped.
        assert!((1.0 / 96.0f64).powi(2) * 100.0 > cap);
        for &v in &f {
            assert!((v - cap).abs() < 1e-12);
        }
    }

    #[test]
    fn capped_at_mu_max_everywhere() {
        let mesh = mesh_32();
        let eq = EquationSpec::Burgers;
        let u: Vec<f64> = (0..128).map(|i| (i as f64 * 0.37).sin() * 2.0).collect();
        let f = DbParams::default().field(&mesh, &eq, &u).unwrap();
        let mu_max = mu_max_per_cell(0.5, &mesh, &eq, &u).unwrap();
        for j in 0..32 {
            for k in 0..4 {
                let v = f[j * 4 + k];
                assert!(v >= 0.0 && v <= mu_max[j] + 1e-15);
            }
        }
    }
}
