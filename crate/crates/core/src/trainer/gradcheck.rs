//! Finite-difference verification of the backpropagated gradient of the
//! training objective through composed solver steps.
//!
//! The oracle is central differences of the unrecorded forward evaluation,
//! so it shares no code path with the backward rules it checks.

use crate::autodiff::Tape;
use crate::cost::CostEvaluator;
use crate::datagen::{project_ic_to_fv, sample_training_ic};
use crate::error::Result;
use crate::fv::{reference_rollout, FvMesh, FvState, Projector};
use crate::mesh::{Boundary, DgMesh};
use crate::rng::Rng;
use crate::viscosity::{NetConfig, NeuralViscosity};

use super::{sub_trajectory_loss, TrainConfig};

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub train: TrainConfig,
    /// Sub-trajectory lengths (macro-steps) to verify.
    pub m_values: Vec<usize>,
    /// Random θ components checked per m.
    pub components: usize,
    pub fd_step: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            train: TrainConfig {
                equation: "advection".into(),
                n_x: 8,
                p: 3,
                n_ref: 64,
                dt: 1e-4,
                stride: 8,
                n_macro: 8,
                sub_traj: 8,
                omega_osc: 1e-5,
                omega_acc: 1.0,
                omega_visc: 10.0,
                ..TrainConfig::default()
            },
            m_values: vec![1, 2, 4, 8],
            components: 20,
            fd_step: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// (m, max relative error over the checked components)
    pub per_m: Vec<(usize, f64)>,
    pub max_rel_error: f64,
}

fn rel_err(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs());
    if denom < 1e-12 {
        0.0
    } else {
        (a - b).abs() / denom
    }
}

/// Compare the tape gradient of J(θ) for each configured sub-trajectory
/// length against central finite differences on randomly chosen components.
///
/// `corrupt_by` offsets the tape gradient before comparison; it exists as a
/// negative control so tests can prove the check actually detects a broken
/// backward rule.
pub fn run_gradcheck(cfg: &GradCheckConfig, corrupt_by: Option<f64>) -> Result<GradCheckReport> {
    let tc = &cfg.train;
    tc.validate()?;
    let eq = tc.equation_spec()?;
    let mesh = DgMesh::build(0.0, 1.0, tc.n_x, tc.p, Boundary::Periodic)?;
    let fv_mesh = FvMesh::new(0.0, 1.0, tc.n_ref, Boundary::Periodic)?;
    let projector = Projector::new(&mesh, tc.n_ref)?;
    let weights = tc.weights()?;

    let mut rng = Rng::new(cfg.seed);
    let ic = sample_training_ic(&eq, &mut rng);
    let fv0 = project_ic_to_fv(&ic, &eq, &fv_mesh);
    let max_m = cfg.m_values.iter().copied().max().unwrap_or(1);
    let reference = reference_rollout(&eq, &fv_mesh, fv0, tc.dt, max_m, tc.stride)?;

    // Generic parameter point: perturb everything, including the zero head
    // kernel. The offsets are sized so gradient flow reaches every layer;
    // near the zero-head initialization most components' gradients sit at
    // the finite-difference noise floor and the comparison is meaningless.
    let mut net = NeuralViscosity::init(NetConfig::new(eq.n_vars(), tc.p), rng.next_u64());
    for idx in 0..net.params.len() {
        let data: Vec<f64> = net.params.tensors()[idx]
            .1
            .data()
            .iter()
            .map(|v| v + rng.uniform(-0.5, 0.5))
            .collect();
        net.params.set_data(idx, data);
    }

    let loss_of = |net: &NeuralViscosity, m: usize, reference: &[FvState]| -> Result<f64> {
        let tape = Tape::new();
        let evaluator = CostEvaluator::new(&mesh, &projector, weights);
        let (loss, _) = tape.paused(|| {
            sub_trajectory_loss(
                &tape, &mesh, &eq, &evaluator, net, reference, 0, m, tc.stride, tc.dt,
            )
        })?;
        Ok(loss.item())
    };

    let flat_len: usize = net.params.tensors().iter().map(|(_, t)| t.len()).sum();
    let mut per_m = Vec::new();
    let mut overall: f64 = 0.0;
    for &m in &cfg.m_values {
        // Tape gradient.
        let tape = Tape::new();
        let bound = net.bind(&tape);
        let evaluator = CostEvaluator::new(&mesh, &projector, weights);
        let (loss, _) = sub_trajectory_loss(
            &tape, &mesh, &eq, &evaluator, &bound, &reference, 0, m, tc.stride, tc.dt,
        )?;
        let grads = tape.backward(&loss)?;
        let mut flat_grad = Vec::with_capacity(flat_len);
        for (_, t) in bound.params.tensors() {
            flat_grad.extend_from_slice(grads.get(t).expect("param gradient").data());
        }
        if let Some(c) = corrupt_by {
            for g in flat_grad.iter_mut() {
                *g += c;
            }
        }

        // Central differences on randomly chosen components. Candidates are
        // restricted to gradients the FD budget can resolve: at step h the
        // quotient carries ~ε|J|/2h of absolute noise, so components more
        // than three decades below the dominant one cannot be certified to
        // a relative tolerance by any finite-difference probe.
        let g_inf = flat_grad.iter().fold(0.0f64, |a, &g| a.max(g.abs()));
        let candidates: Vec<usize> =
            (0..flat_len).filter(|&i| flat_grad[i].abs() >= 1e-3 * g_inf).collect();
        let mut worst: f64 = 0.0;
        let mut pick = Rng::new(cfg.seed ^ (m as u64).wrapping_mul(0x9E37_79B9));
        for _ in 0..cfg.components {
            let comp = candidates[pick.below(candidates.len())];
            // locate the tensor holding this component
            let (mut t_idx, mut offset) = (0, comp);
            while offset >= net.params.tensors()[t_idx].1.len() {
                offset -= net.params.tensors()[t_idx].1.len();
                t_idx += 1;
            }
            let base = net.params.tensors()[t_idx].1.data().to_vec();
            let bump = |delta: f64| -> Result<f64> {
                let mut v = base.clone();
                v[offset] += delta;
                let mut probe = net.clone();
                probe.params.set_data(t_idx, v);
                loss_of(&probe, m, &reference)
            };
            let up = bump(cfg.fd_step)?;
            let dn = bump(-cfg.fd_step)?;
            let fd = (up - dn) / (2.0 * cfg.fd_step);
            worst = worst.max(rel_err(flat_grad[comp], fd));
        }
        per_m.push((m, worst));
        overall = overall.max(worst);
    }
    Ok(GradCheckReport { per_m, max_rel_error: overall })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_config_passes_and_corruption_fails() {
        let cfg = GradCheckConfig {
            m_values: vec![1, 2],
            components: 8,
            ..GradCheckConfig::default()
        };
        let report = run_gradcheck(&cfg, None).unwrap();
        assert!(
            report.max_rel_error < 1e-6,
            "gradient check failed: {:?}",
            report.per_m
        );
        // negative control: a corrupted backward must be detected
        let bad = run_gradcheck(&cfg, Some(1e-3)).unwrap();
        assert!(bad.max_rel_error > 1e-5, "corruption went unnoticed: {:?}", bad.per_m);
    }
}
