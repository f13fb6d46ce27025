//! Solution-quality cost: an oscillation detector (L¹ norm of the
//! second-difference mismatch on the fine grid), a fine-grid L¹ accuracy
//! term, and an L² penalty on the viscosity field. Systems average the
//! grid terms over variables.

use crate::autodiff::{Tape, Tensor};
use crate::dg::DgState;
use crate::error::{Error, Result};
use crate::fv::Projector;
use crate::mesh::DgMesh;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub osc: f64,
    pub acc: f64,
    pub visc: f64,
}

impl CostWeights {
    pub fn new(osc: f64, acc: f64, visc: f64) -> Result<CostWeights> {
        let w = CostWeights { osc, acc, visc };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.osc < 0.0 || self.acc < 0.0 || self.visc < 0.0 {
            return Err(Error::Config("cost weights must be nonnegative".into()));
        }
        if self.osc == 0.0 && self.acc == 0.0 && self.visc == 0.0 {
            return Err(Error::Config("at least one cost weight must be positive".into()));
        }
        Ok(())
    }
}

/// Per-term contributions (unweighted), tracked for logging.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CostTerms {
    pub osc: f64,
    pub acc: f64,
    pub visc: f64,
}

impl CostTerms {
    pub fn weighted_total(&self, w: &CostWeights) -> f64 {
        w.osc * self.osc + w.acc * self.acc + w.visc * self.visc
    }

    pub fn add(&mut self, other: &CostTerms) {
        self.osc += other.osc;
        self.acc += other.acc;
        self.visc += other.visc;
    }
}

/// Centered second difference (U_{i-1} − 2U_i + U_{i+1}) / Δx² along the
/// last axis of [s, n]: periodic wraps, Dirichlet keeps interior cells only.
pub fn d_xx(tape: &Tape, fine: &Tensor, dx: f64, periodic: bool) -> Result<Tensor> {
    let shape = fine.shape();
    let n = *shape.last().ok_or_else(|| Error::Shape("d_xx needs rank >= 1".into()))?;
    if n < 3 {
        return Err(Error::Shape(format!("d_xx needs at least 3 cells, got {n}")));
    }
    let axis = shape.len() - 1;
    let inv = 1.0 / (dx * dx);
    if periodic {
        let left = tape.concat(
            axis,
            &[&tape.slice(fine, axis, n - 1, 1)?, &tape.slice(fine, axis, 0, n - 1)?],
        )?;
        let right = tape.concat(
            axis,
            &[&tape.slice(fine, axis, 1, n - 1)?, &tape.slice(fine, axis, 0, 1)?],
        )?;
        let sum = tape.add(&left, &right)?;
        tape.scale(&tape.sub(&sum, &tape.scale(fine, 2.0)?)?, inv)
    } else {
        let left = tape.slice(fine, axis, 0, n - 2)?;
        let center = tape.slice(fine, axis, 1, n - 2)?;
        let right = tape.slice(fine, axis, 2, n - 2)?;
        let sum = tape.add(&left, &right)?;
        tape.scale(&tape.sub(&sum, &tape.scale(&center, 2.0)?)?, inv)
    }
}

/// Bundles everything the per-step cost needs.
pub struct CostEvaluator<'a> {
    pub mesh: &'a DgMesh,
    pub projector: &'a Projector,
    pub weights: CostWeights,
    pub dx_ref: f64,
}

impl<'a> CostEvaluator<'a> {
    pub fn new(mesh: &'a DgMesh, projector: &'a Projector, weights: CostWeights) -> CostEvaluator<'a> {
        CostEvaluator {
            mesh,
            projector,
            weights,
            dx_ref: (mesh.x_max - mesh.x_min) / projector.n_fine as f64,
        }
    }

    fn n_vars(&self, fine: &Tensor) -> f64 {
        fine.shape()[0] as f64
    }

    /// Oscillation mismatch of the projected DG solution against the
    /// reference, Δx_ref Σ |D_xx Π(U) − D_xx U_ref|, averaged over variables.
    pub fn c_osc(&self, tape: &Tape, proj_fine: &Tensor, ref_fine: &Tensor) -> Result<Tensor> {
        let periodic = self.mesh.boundary.is_periodic();
        let d_dg = d_xx(tape, proj_fine, self.dx_ref, periodic)?;
        let d_ref = d_xx(tape, ref_fine, self.dx_ref, periodic)?;
        let diff = tape.abs(&tape.sub(&d_dg, &d_ref)?)?;
        tape.scale(&tape.sum(&diff)?, self.dx_ref / self.n_vars(proj_fine))
    }

    /// Fine-grid L¹ distance Δx_ref Σ |Π(U) − U_ref|, averaged over variables.
    pub fn c_acc(&self, tape: &Tape, proj_fine: &Tensor, ref_fine: &Tensor) -> Result<Tensor> {
        let diff = tape.abs(&tape.sub(proj_fine, ref_fine)?)?;
        tape.scale(&tape.sum(&diff)?, self.dx_ref / self.n_vars(proj_fine))
    }

    /// ∫ μ(x)² dx by per-cell Gauss-Lobatto quadrature of the nodal field.
    pub fn c_visc(&self, tape: &Tape, mu: &Tensor) -> Result<Tensor> {
        let (n_x, p) = (self.mesh.n_x, self.mesh.p);
        if mu.shape() != [n_x, p] {
            return Err(Error::Shape(format!(
                "viscosity field shape {:?}, expected [{n_x}, {p}]",
                mu.shape()
            )));
        }
        let mut w = vec![0.0; n_x * p];
        for j in 0..n_x {
            for k in 0..p {
                w[j * p + k] = self.mesh.weights[k] * 0.5 * self.mesh.dx;
            }
        }
        let quad = Tensor::from_vec(vec![n_x, p], w);
        tape.sum(&tape.mul(&tape.square(mu)?, &quad)?)
    }

    /// Weighted one-step cost; terms with zero weight are skipped and
    /// reported as zero.
    pub fn step_cost(
        &self,
        tape: &Tape,
        dg_u: &Tensor,
        mu: &Tensor,
        ref_fine: &Tensor,
    ) -> Result<(Tensor, CostTerms)> {
        let mut total = Tensor::scalar(0.0);
        let mut terms = CostTerms::default();
        if self.weights.osc > 0.0 || self.weights.acc > 0.0 {
            let proj = self.projector.dg_to_fine(tape, dg_u)?;
            if self.weights.osc > 0.0 {
                let osc = self.c_osc(tape, &proj, ref_fine)?;
                terms.osc = osc.item();
                total = tape.add(&total, &tape.scale(&osc, self.weights.osc)?)?;
            }
            if self.weights.acc > 0.0 {
                let acc = self.c_acc(tape, &proj, ref_fine)?;
                terms.acc = acc.item();
                total = tape.add(&total, &tape.scale(&acc, self.weights.acc)?)?;
            }
        }
        if self.weights.visc > 0.0 {
            let visc = self.c_visc(tape, mu)?;
            terms.visc = visc.item();
            total = tape.add(&total, &tape.scale(&visc, self.weights.visc)?)?;
        }
        Ok((total, terms))
    }

    /// Σ_n of the weighted step costs over aligned state/viscosity/reference
    /// lists; fully tape-recordable.
    pub fn trajectory_cost(
        &self,
        tape: &Tape,
        states: &[DgState],
        mus: &[Tensor],
        refs: &[Tensor],
    ) -> Result<(Tensor, CostTerms)> {
        if states.len() != refs.len() || states.len() != mus.len() {
            return Err(Error::Shape(format!(
                "misaligned trajectory: {} states, {} viscosities, {} references",
                states.len(),
                mus.len(),
                refs.len()
            )));
        }
        let mut total = Tensor::scalar(0.0);
        let mut terms = CostTerms::default();
        for ((state, mu), rf) in states.iter().zip(mus).zip(refs) {
            let (step_total, step_terms) = self.step_cost(tape, &state.u, mu, rf)?;
            terms.add(&step_terms);
            total = tape.add(&total, &step_total)?;
        }
        Ok((total, terms))
    }
}

/// Table metrics on the fine grid, no tape involved: (c_osc, c_acc, l2, l∞)
/// where l2 is the squared L² norm Δx_ref Σ diff² (averaged over variables)
/// and l∞ the largest pointwise deviation.
pub fn fine_metrics(
    proj_fine: &[f64],
    ref_fine: &[f64],
    s: usize,
    dx: f64,
    periodic: bool,
) -> (f64, f64, f64, f64) {
    debug_assert_eq!(proj_fine.len(), ref_fine.len());
    let n = proj_fine.len() / s;
    let mut osc = 0.0;
    let mut acc = 0.0;
    let mut l2 = 0.0;
    let mut linf: f64 = 0.0;
    let second = |u: &[f64], i: usize| -> f64 {
        let prev = if i == 0 { u[n - 1] } else { u[i - 1] };
        let next = if i == n - 1 { u[0] } else { u[i + 1] };
        (prev - 2.0 * u[i] + next) / (dx * dx)
    };
    for v in 0..s {
        let a = &proj_fine[v * n..(v + 1) * n];
        let b = &ref_fine[v * n..(v + 1) * n];
        for i in 0..n {
            let interior = periodic || (i > 0 && i < n - 1);
            if interior {
                osc += (second(a, i) - second(b, i)).abs();
            }
            let d = (a[i] - b[i]).abs();
            acc += d;
            l2 += d * d;
            linf = linf.max(d);
        }
    }
    let sf = s as f64;
    (dx * osc / sf, dx * acc / sf, dx * l2 / sf, linf)
}

/// ∫ μ² dx from raw nodal data (eval path).
pub fn c_visc_raw(mesh: &DgMesh, mu: &[f64]) -> f64 {
    let (n_x, p) = (mesh.n_x, mesh.p);
    debug_assert_eq!(mu.len(), n_x * p);
    let mut acc = 0.0;
    for j in 0..n_x {
        for k in 0..p {
            let v = mu[j * p + k];
            acc += mesh.weights[k] * 0.5 * mesh.dx * v * v;
        }
    }
    acc
}
