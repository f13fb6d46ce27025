//! Nodal discontinuous Galerkin semi-discretization with pluggable
//! artificial viscosity and RK4 time stepping.
//!
//! The viscous term uses the first-order-system local DG form: an auxiliary
//! gradient Q is recovered from centered interface values, G = μ·Q is fluxed
//! with a centered interface value as well, while the advective flux uses
//! local Lax-Friedrichs. Everything runs through tape ops, so a recorded
//! rollout is differentiable end to end; with recording off the identical
//! kernels run and produce bit-identical states.

use crate::autodiff::{Tape, Tensor};
use crate::equations::EquationSpec;
use crate::error::{Error, Result};
use crate::mesh::{Boundary, DgMesh};
use crate::viscosity::Viscosity;

/// DG solution at one instant: nodal values [s, n_x, p] plus time.
#[derive(Debug, Clone)]
pub struct DgState {
    pub u: Tensor,
    pub t: f64,
}

impl DgState {
    pub fn new(u: Tensor, t: f64) -> DgState {
        DgState { u, t }
    }

    /// Finite entries; positive density and pressure for Euler.
    pub fn validate(&self, eq: &EquationSpec) -> Result<()> {
        if !self.u.is_all_finite() {
            return Err(Error::Unstable {
                step: 0,
                time: self.t,
                reason: "non-finite nodal value".into(),
            });
        }
        if let EquationSpec::Euler { .. } = eq {
            let d = self.u.data();
            let n = d.len() / 3;
            for i in 0..n {
                let (rho, mom, energy) = (d[i], d[n + i], d[2 * n + i]);
                if !(rho > 0.0) {
                    return Err(Error::Unstable {
                        step: 0,
                        time: self.t,
                        reason: "non-positive density".into(),
                    });
                }
                if !(eq.pressure(rho, mom, energy) > 0.0) {
                    return Err(Error::Unstable {
                        step: 0,
                        time: self.t,
                        reason: "non-positive pressure".into(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Local Lax-Friedrichs flux ½(f(uL)+f(uR)) − ½λ(uR−uL) on interface
/// state arrays of shape [s, n_if].
pub fn lax_friedrichs(
    tape: &Tape,
    eq: &EquationSpec,
    u_left: &Tensor,
    u_right: &Tensor,
) -> Result<Tensor> {
    let f_left = eq.flux(tape, u_left)?;
    let f_right = eq.flux(tape, u_right)?;
    let lam_l = eq.max_wave_speed(tape, u_left)?;
    let lam_r = eq.max_wave_speed(tape, u_right)?;
    let lam = tape.max(&lam_l, &lam_r)?;
    let lam = tile_vars(tape, &lam, eq.n_vars())?;
    let central = tape.scale(&tape.add(&f_left, &f_right)?, 0.5)?;
    let dissipation = tape.scale(&tape.mul(&lam, &tape.sub(u_right, u_left)?)?, 0.5)?;
    tape.sub(&central, &dissipation)
}

/// Repeat a [1, ...] tensor s times along the leading axis.
fn tile_vars(tape: &Tape, t: &Tensor, s: usize) -> Result<Tensor> {
    if s == 1 {
        return Ok(t.clone());
    }
    let parts: Vec<&Tensor> = std::iter::repeat(t).take(s).collect();
    tape.concat(0, &parts)
}

/// Interface state pairs (uL, uR) for every interface, honoring the mesh
/// boundary. Periodic meshes have n_x interfaces (index j = left face of
/// cell j); Dirichlet meshes have n_x + 1 with pinned ghost states.
fn interface_states(
    tape: &Tape,
    mesh: &DgMesh,
    left_traces: &Tensor,
    right_traces: &Tensor,
    s: usize,
) -> Result<(Tensor, Tensor)> {
    let n_x = mesh.n_x;
    match &mesh.boundary {
        Boundary::Periodic => {
            let roll_right = tape.concat(
                1,
                &[
                    &tape.slice(right_traces, 1, n_x - 1, 1)?,
                    &tape.slice(right_traces, 1, 0, n_x - 1)?,
                ],
            )?;
            Ok((roll_right, left_traces.clone()))
        }
        Boundary::Dirichlet { left, right } => {
            let ghost_l = Tensor::from_vec(vec![s, 1], left.clone());
            let ghost_r = Tensor::from_vec(vec![s, 1], right.clone());
            let u_l = tape.concat(1, &[&ghost_l, right_traces])?;
            let u_r = tape.concat(1, &[left_traces, &ghost_r])?;
            Ok((u_l, u_r))
        }
    }
}

/// Per-cell (left face, right face) interface values from the array of
/// per-interface values.
fn faces_per_cell(
    tape: &Tape,
    mesh: &DgMesh,
    interface_vals: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let n_x = mesh.n_x;
    match &mesh.boundary {
        Boundary::Periodic => {
            let left = interface_vals.clone();
            let right = tape.concat(
                1,
                &[
                    &tape.slice(interface_vals, 1, 1, n_x - 1)?,
                    &tape.slice(interface_vals, 1, 0, 1)?,
                ],
            )?;
            Ok((left, right))
        }
        Boundary::Dirichlet { .. } => Ok((
            tape.slice(interface_vals, 1, 0, n_x)?,
            tape.slice(interface_vals, 1, 1, n_x)?,
        )),
    }
}

/// Scatter per-cell face values into the weak-form boundary tensor:
/// (X⋆)_{j,k} = right_j δ_{k,p-1} − left_j δ_{k,0}.
fn face_tensor(tape: &Tape, mesh: &DgMesh, left: &Tensor, right: &Tensor, s: usize) -> Result<Tensor> {
    let n_x = mesh.n_x;
    let r = tape.matmul_last(&tape.reshape(right, vec![s, n_x, 1])?, &mesh.face_right_t)?;
    let l = tape.matmul_last(&tape.reshape(left, vec![s, n_x, 1])?, &mesh.face_left_t)?;
    tape.sub(&r, &l)
}

/// Semi-discrete right-hand side dU/dt for state `u` [s, n_x, p] and
/// per-node viscosity `mu` [n_x, p].
pub fn semidiscrete_rhs(
    tape: &Tape,
    mesh: &DgMesh,
    eq: &EquationSpec,
    u: &Tensor,
    mu: &Tensor,
) -> Result<Tensor> {
    let s = eq.n_vars();
    let (n_x, p) = (mesh.n_x, mesh.p);
    if u.shape() != [s, n_x, p] {
        return Err(Error::Shape(format!(
            "state shape {:?}, expected [{s}, {n_x}, {p}]",
            u.shape()
        )));
    }
    let jac = 2.0 / mesh.dx;

    let left_traces = tape.reshape(&tape.slice(u, 2, 0, 1)?, vec![s, n_x])?;
    let right_traces = tape.reshape(&tape.slice(u, 2, p - 1, 1)?, vec![s, n_x])?;
    let (u_l, u_r) = interface_states(tape, mesh, &left_traces, &right_traces, s)?;

    // Pass 1: auxiliary gradient Q from centered interface values.
    let u_centered = tape.scale(&tape.add(&u_l, &u_r)?, 0.5)?;
    let (ustar_l, ustar_r) = faces_per_cell(tape, mesh, &u_centered)?;
    let ustar = face_tensor(tape, mesh, &ustar_l, &ustar_r, s)?;
    let us = tape.matmul_last(u, &mesh.stiffness_t)?;
    let q = tape.scale(
        &tape.matmul_last(&tape.sub(&ustar, &us)?, &mesh.mass_inv_t)?,
        jac,
    )?;
    let mu_tiled = tile_vars(tape, &tape.reshape(mu, vec![1, n_x, p])?, s)?;
    let g = tape.mul(&mu_tiled, &q)?;

    // Pass 2: advective LLF flux and centered viscous flux.
    let f_nodal = eq.flux(tape, u)?;
    let fs = tape.matmul_last(&f_nodal, &mesh.stiffness_t)?;
    let f_hat = lax_friedrichs(tape, eq, &u_l, &u_r)?;
    let (fstar_l, fstar_r) = faces_per_cell(tape, mesh, &f_hat)?;
    let fstar = face_tensor(tape, mesh, &fstar_l, &fstar_r, s)?;

    let g_left = tape.reshape(&tape.slice(&g, 2, 0, 1)?, vec![s, n_x])?;
    let g_right = tape.reshape(&tape.slice(&g, 2, p - 1, 1)?, vec![s, n_x])?;
    // The ghost carries no gradient of its own: one-sided values at
    // Dirichlet ends, centered averages inside.
    let (g_l_if, g_r_if) = match &mesh.boundary {
        Boundary::Periodic => interface_states(tape, mesh, &g_left, &g_right, s)?,
        Boundary::Dirichlet { .. } => {
            let first = tape.slice(&g_left, 1, 0, 1)?;
            let last = tape.slice(&g_right, 1, n_x - 1, 1)?;
            let l = tape.concat(1, &[&first, &g_right])?;
            let r = tape.concat(1, &[&g_left, &last])?;
            (l, r)
        }
    };
    let g_centered = tape.scale(&tape.add(&g_l_if, &g_r_if)?, 0.5)?;
    let (gstar_l, gstar_r) = faces_per_cell(tape, mesh, &g_centered)?;
    let gstar = face_tensor(tape, mesh, &gstar_l, &gstar_r, s)?;
    let gs = tape.matmul_last(&g, &mesh.stiffness_t)?;

    let visc_part = tape.sub(&gstar, &gs)?;
    let adv_part = tape.sub(&fstar, &fs)?;
    tape.scale(
        &tape.matmul_last(&tape.sub(&visc_part, &adv_part)?, &mesh.mass_inv_t)?,
        jac,
    )
}

/// Classical RK4 combination for du/dt = rhs(u).
pub fn rk4<F>(tape: &Tape, u: &Tensor, dt: f64, mut rhs: F) -> Result<Tensor>
where
    F: FnMut(&Tape, &Tensor) -> Result<Tensor>,
{
    let k1 = rhs(tape, u)?;
    let u2 = tape.add(u, &tape.scale(&k1, 0.5 * dt)?)?;
    let k2 = rhs(tape, &u2)?;
    let u3 = tape.add(u, &tape.scale(&k2, 0.5 * dt)?)?;
    let k3 = rhs(tape, &u3)?;
    let u4 = tape.add(u, &tape.scale(&k3, dt)?)?;
    let k4 = rhs(tape, &u4)?;
    let sum = tape.add(
        &tape.add(&k1, &tape.scale(&k2, 2.0)?)?,
        &tape.add(&tape.scale(&k3, 2.0)?, &k4)?,
    )?;
    tape.add(u, &tape.scale(&sum, dt / 6.0)?)
}

/// One RK4 step. The viscosity is evaluated once from the incoming state
/// and frozen across all four stages.
pub fn rk4_step(
    tape: &Tape,
    mesh: &DgMesh,
    eq: &EquationSpec,
    state: &DgState,
    visc: &dyn Viscosity,
    dt: f64,
) -> Result<DgState> {
    let mu = visc.mu(tape, mesh, eq, &state.u)?;
    let u_next = rk4(tape, &state.u, dt, |t, u| semidiscrete_rhs(t, mesh, eq, u, &mu))?;
    let next = DgState { u: u_next, t: state.t + dt };
    next.validate(eq)?;
    Ok(next)
}

/// Largest wave speed over all nodes (raw data; no recording).
pub fn max_speed_over_state(eq: &EquationSpec, u: &Tensor) -> Result<f64> {
    let s = eq.n_vars();
    let n = u.len() / s;
    let d = u.data();
    let mut node = vec![0.0; s];
    let mut speed: f64 = 0.0;
    for i in 0..n {
        for v in 0..s {
            node[v] = d[v * n + i];
        }
        speed = speed.max(eq.max_wave_speed_node(&node)?);
    }
    Ok(speed)
}

/// Stability guideline Δt ≤ 0.5 Δx / ((2p−1) λ_max) for the advective part.
pub fn cfl_limit(mesh: &DgMesh, max_speed: f64) -> f64 {
    0.5 * mesh.dx / ((2 * mesh.p - 1) as f64 * max_speed.max(1e-300))
}

/// Compose `n_steps` RK4 steps. With `record` the whole composition lives
/// on the tape; otherwise recording is suspended for the entire rollout.
/// Aborts with the failing step index on instability.
pub fn rollout(
    tape: &Tape,
    mesh: &DgMesh,
    eq: &EquationSpec,
    state: DgState,
    visc: &dyn Viscosity,
    dt: f64,
    n_steps: usize,
    record: bool,
) -> Result<Vec<DgState>> {
    if dt <= 0.0 {
        return Err(Error::Config("dt must be positive".into()));
    }
    if let Ok(speed) = max_speed_over_state(eq, &state.u) {
        let limit = cfl_limit(mesh, speed);
        if dt > limit {
            eprintln!(
                "warning: dt = {dt:.3e} exceeds the CFL guideline {limit:.3e} \
                 (n_x = {}, p = {})",
                mesh.n_x, mesh.p
            );
        }
    }
    let run = |tape: &Tape| -> Result<Vec<DgState>> {
        let mut states = Vec::with_capacity(n_steps + 1);
        states.push(state.clone());
        for step in 0..n_steps {
            let t_now = states.last().unwrap().t;
            let next = rk4_step(tape, mesh, eq, states.last().unwrap(), visc, dt).map_err(
                |e| match e {
                    Error::Unstable { reason, .. } => {
                        Error::Unstable { step: step + 1, time: t_now, reason }
                    }
                    other => other,
                },
            )?;
            states.push(next);
        }
        Ok(states)
    };
    if record {
        run(tape)
    } else {
        tape.paused(|| run(tape))
    }
}

/// Discrete total mass Σ_cells Σ_nodes w_k (Δx/2) U per variable.
pub fn total_mass(mesh: &DgMesh, eq: &EquationSpec, u: &Tensor) -> Vec<f64> {
    let s = eq.n_vars();
    let (n_x, p) = (mesh.n_x, mesh.p);
    let d = u.data();
    let mut mass = vec![0.0; s];
    for v in 0..s {
        for j in 0..n_x {
            for k in 0..p {
                mass[v] += mesh.weights[k] * 0.5 * mesh.dx * d[(v * n_x + j) * p + k];
            }
        }
    }
    mass
}

/// Solution snapshot as CSV: x, var_1..var_s, mu — node-ordered.
pub fn snapshot_csv(mesh: &DgMesh, eq: &EquationSpec, state: &DgState, mu: &Tensor) -> String {
    let s = eq.n_vars();
    let (n_x, p) = (mesh.n_x, mesh.p);
    let mut out = String::from("x");
    for v in 1..=s {
        out.push_str(&format!(",var_{v}"));
    }
    out.push_str(",mu\n");
    let d = state.u.data();
    let m = mu.data();
    for j in 0..n_x {
        for k in 0..p {
            out.push_str(&format!("{}", mesh.node_x(j, k)));
            for v in 0..s {
                out.push_str(&format!(",{}", d[(v * n_x + j) * p + k]));
            }
            out.push_str(&format!(",{}\n", m[j * p + k]));
        }
    }
    out
}
