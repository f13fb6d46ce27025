//! Shared machinery for `eval` and `compare`: run a benchmark case with a
//! chosen viscosity model against the MUSCL reference and produce metric
//! rows and plot data.

use anyhow::{Context, Result};
use dgvisc::autodiff::Tape;
use dgvisc::cost::{c_visc_raw, fine_metrics};
use dgvisc::datagen::{project_ic_to_dg, project_ic_to_fv};
use dgvisc::dg::{rollout, snapshot_csv, DgState};
use dgvisc::fv::{rk2_step_limited, FvMesh, FvState, Limiter, Projector};
use dgvisc::mesh::{DgMesh, MassMatrix};
use dgvisc::viscosity::{Viscosity, ViscosityModel};

use crate::cases::Case;

#[derive(Debug, Clone, Copy)]
pub struct EvalSettings {
    pub cells: usize,
    pub p: usize,
    pub dt: f64,
    /// Reference solver timestep; defaults to `dt`.
    pub dt_ref: f64,
    /// Requested fine-grid resolution; rounded to a multiple of `cells`.
    pub n_ref: usize,
    /// Reference reconstruction limiter. Superbee keeps contacts sharp over
    /// the long benchmark horizons; minmod smears them enough to mask the
    /// Linf error of the DG solution being measured.
    pub limiter: Limiter,
    /// Element mass treatment of the DG scheme.
    pub mass: MassMatrix,
}

impl EvalSettings {
    /// Fine cells per DG cell: the requested resolution rounded to an exact
    /// multiple, never below `p` (the least-squares fit needs that many).
    pub fn ratio(&self) -> usize {
        let raw = (self.n_ref as f64 / self.cells as f64).round() as usize;
        raw.max(self.p).max(1)
    }

    pub fn n_ref_adjusted(&self) -> usize {
        self.ratio() * self.cells
    }
}

#[derive(Debug, Clone)]
pub struct MetricRow {
    pub model: String,
    pub cells: usize,
    pub c_osc: f64,
    pub c_acc: f64,
    pub c_visc: f64,
    pub l2: f64,
    pub linf: f64,
}

pub fn metrics_header() -> &'static str {
    "model,cells,c_osc,c_acc,c_visc,l2,linf\n"
}

impl MetricRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}\n",
            self.model, self.cells, self.c_osc, self.c_acc, self.c_visc, self.l2, self.linf
        )
    }
}

pub struct EvalOutput {
    pub metrics: MetricRow,
    pub solution_csv: String,
}

/// Final reference state of the case on `n_ref` cells (no intermediate
/// storage; evaluation only compares final states).
pub fn reference_final(
    case: &Case,
    n_ref: usize,
    dt_ref: f64,
    limiter: Limiter,
) -> Result<(FvMesh, FvState)> {
    let mesh = FvMesh::new(case.x_min, case.x_max, n_ref, case.boundary())?;
    let ic = |x: f64| case.ic(x);
    let mut state = project_ic_to_fv(&ic, &case.eq, &mesh);
    let steps = (case.t_final / dt_ref).round() as usize;
    let dt = case.t_final / steps as f64;
    for _ in 0..steps {
        state = rk2_step_limited(&case.eq, &mesh, &state, dt, limiter)
            .context("reference solver went unstable")?;
    }
    Ok((mesh, state))
}

/// Solve the case with the given viscosity model and measure it against the
/// reference final state.
pub fn run_case(
    case: &Case,
    model: &ViscosityModel,
    settings: &EvalSettings,
    reference: &(FvMesh, FvState),
) -> Result<EvalOutput> {
    let mesh = DgMesh::build_with_mass(
        case.x_min,
        case.x_max,
        settings.cells,
        settings.p,
        case.boundary(),
        settings.mass,
    )?;
    let ic = |x: f64| case.ic(x);
    let state0 = project_ic_to_dg(&ic, &case.eq, &mesh);

    let steps = (case.t_final / settings.dt).round() as usize;
    let dt = case.t_final / steps as f64;
    let tape = Tape::new();
    let states = rollout(&tape, &mesh, &case.eq, state0, model, dt, steps, false)
        .with_context(|| format!("{} with model '{}'", case.name, model.label()))?;
    let last: &DgState = states.last().expect("rollout returns at least one state");

    let mu = model.mu(&tape, &mesh, &case.eq, &last.u)?;
    let (ref_mesh, ref_state) = reference;
    anyhow::ensure!(
        ref_mesh.n == settings.n_ref_adjusted(),
        "reference resolution {} does not match settings {}",
        ref_mesh.n,
        settings.n_ref_adjusted()
    );
    let projector = Projector::new(&mesh, ref_mesh.n)?;
    let proj = projector.dg_to_fine(&tape, &last.u)?;
    let (c_osc, c_acc, l2, linf) = fine_metrics(
        proj.data(),
        &ref_state.u,
        case.eq.n_vars(),
        ref_mesh.dx,
        case.periodic,
    );
    let metrics = MetricRow {
        model: model.label().to_string(),
        cells: settings.cells,
        c_osc,
        c_acc,
        c_visc: c_visc_raw(&mesh, mu.data()),
        l2,
        linf,
    };
    Ok(EvalOutput { metrics, solution_csv: snapshot_csv(&mesh, &case.eq, last, &mu) })
}
