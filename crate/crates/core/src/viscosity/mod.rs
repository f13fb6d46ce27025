//! Artificial viscosity policies: the two closed-form models from the
//! comparison literature (derivative-based and highest modal decay) and the
//! trainable convolutional network.

pub mod db;
pub mod mdh;
pub mod neural;

use crate::autodiff::{Tape, Tensor};
use crate::equations::EquationSpec;
use crate::error::Result;
use crate::mesh::DgMesh;

pub use db::DbParams;
pub use mdh::{legendre_modal_ratio, MdhParams};
pub use neural::{NetConfig, NetParams, NeuralViscosity};

/// Maps a DG solution tensor [s, n_x, p] to a per-node viscosity field
/// [n_x, p]. Implementations must return a nonnegative field.
pub trait Viscosity {
    fn mu(&self, tape: &Tape, mesh: &DgMesh, eq: &EquationSpec, u: &Tensor) -> Result<Tensor>;
}

/// Tagged viscosity policy.
#[derive(Debug, Clone)]
pub enum ViscosityModel {
    None,
    Db(DbParams),
    Mdh(MdhParams),
    Neural(NeuralViscosity),
}

impl Viscosity for ViscosityModel {
    fn mu(&self, tape: &Tape, mesh: &DgMesh, eq: &EquationSpec, u: &Tensor) -> Result<Tensor> {
        match self {
            ViscosityModel::None => Ok(Tensor::zeros(vec![mesh.n_x, mesh.p])),
            ViscosityModel::Db(p) => p.mu(tape, mesh, eq, u),
            ViscosityModel::Mdh(p) => p.mu(tape, mesh, eq, u),
            ViscosityModel::Neural(n) => n.mu(tape, mesh, eq, u),
        }
    }
}

impl ViscosityModel {
    pub fn label(&self) -> &'static str {
        match self {
            ViscosityModel::None => "none",
            ViscosityModel::Db(_) => "db",
            ViscosityModel::Mdh(_) => "mdh",
            ViscosityModel::Neural(_) => "nn",
        }
    }
}

/// Scalar field the closed-form models look at: the unique variable for
/// scalar equations, velocity (DB) or density (MDH) for Euler.
pub(crate) fn scalar_field(
    eq: &EquationSpec,
    u: &[f64],
    n_points: usize,
    use_velocity: bool,
) -> Vec<f64> {
    match eq {
        EquationSpec::Euler { .. } => {
            if use_velocity {
                (0..n_points).map(|i| u[n_points + i] / u[i]).collect()
            } else {
                u[..n_points].to_vec()
            }
        }
        _ => u[..n_points].to_vec(),
    }
}

/// Wave-speed cap both closed-form models share: c_max Δx/(p−1) max_cell |s|.
pub(crate) fn mu_max_per_cell(
    c_max: f64,
    mesh: &DgMesh,
    eq: &EquationSpec,
    u: &[f64],
) -> Result<Vec<f64>> {
    let (n_x, p, s) = (mesh.n_x, mesh.p, eq.n_vars());
    let n_points = n_x * p;
    let mut out = vec![0.0; n_x];
    let mut node = vec![0.0; s];
    for j in 0..n_x {
        let mut speed: f64 = 0.0;
        for k in 0..p {
            for v in 0..s {
                node[v] = u[v * n_points + j * p + k];
            }
            speed = speed.max(eq.max_wave_speed_node(&node)?);
        }
        out[j] = c_max * mesh.dx / (p as f64 - 1.0) * speed;
    }
    Ok(out)
}
