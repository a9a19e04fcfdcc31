//! Time stepping: the linear implicit scheme, the energy-dissipative nonlinear
//! scheme with its fixed-point inner solver, and the simulation loop.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::app::config::{SchemeKind, SimulationConfig, SolverSettings, StepSolver};
use crate::fem::{EnergyBreakdown, FeSpace, FemError, MassKind, NodalField};
use crate::linalg::{dot, solve_banded, solve_bicgstab_from, CsrMatrix, LinalgError, SolveStats, SolverOptions};
use crate::mesh::{Mesh, MeshError};
use crate::model::{check_boundary_compat, CurrentField, LlbParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error("step {step}: {source}")]
    Fem {
        step: usize,
        #[source]
        source: FemError,
    },
    #[error("step {step}: step system: {source}")]
    Linalg {
        step: usize,
        #[source]
        source: LinalgError,
    },
    #[error(
        "step {step}: step system did not converge (relative residual {:.3e} after {} iterations)",
        stats.final_relative_residual,
        stats.iterations
    )]
    SolverNotConverged { step: usize, stats: SolveStats },
    #[error(
        "step {step}: fixed-point iteration stalled after {} iterations (last increment {:.3e})",
        report.iterations,
        report.final_increment_l2
    )]
    FixedPointNotConverged { step: usize, report: FixedPointReport },
    #[error("step {step}: solution contains non-finite values")]
    NonFinite { step: usize },
    #[error("mesh: {0}")]
    Mesh(#[from] MeshError),
}

impl SchemeError {
    pub fn step(&self) -> Option<usize> {
        match self {
            SchemeError::Fem { step, .. }
            | SchemeError::Linalg { step, .. }
            | SchemeError::SolverNotConverged { step, .. }
            | SchemeError::FixedPointNotConverged { step, .. }
            | SchemeError::NonFinite { step } => Some(*step),
            SchemeError::Mesh(_) => None,
        }
    }
}

/// Inner-solver settings for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSettings {
    pub solver: SolverSettings,
    pub include_anisotropy: bool,
    /// Set once [`StepSolver::Auto`] has given up on the Krylov solver.
    pub direct: bool,
}

impl Default for StepSettings {
    fn default() -> Self {
        Self {
            solver: SolverSettings::default(),
            include_anisotropy: true,
            direct: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub iterations: usize,
    pub final_increment_l2: f64,
    pub converged: bool,
    /// `L²` norm (Riesz representer) of the step residual written with the
    /// difference quotient multiplied through by `k`:
    /// `⟨u - u_prev, χ⟩ + kγ⟨u×H, χ⟩ - αk⟨H, χ⟩ - kβ₁⟨(ν·∇)u_prev, χ⟩`.
    pub scheme_residual_l2: f64,
    /// The same residual divided by `k`, i.e. in the units of the equation.
    pub scheme_residual_unscaled: f64,
    /// Krylov iterations summed over all inner iterations.
    pub krylov_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub time: f64,
    pub energy: EnergyBreakdown,
    pub l2_norm: f64,
    pub linf_norm: f64,
    pub l4_norm: f64,
    pub fp_iterations: usize,
}

/// Per-step energy record. Times are strictly increasing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyTrace {
    rows: Vec<TraceRow>,
}

impl EnergyTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a trace from rows, rejecting non-increasing times.
    pub fn from_rows(rows: Vec<TraceRow>) -> Result<Self, String> {
        let mut trace = Self::new();
        for r in rows {
            trace.push(r)?;
        }
        Ok(trace)
    }

    pub fn push(&mut self, row: TraceRow) -> Result<(), String> {
        if let Some(last) = self.rows.last() {
            if !(row.time > last.time) {
                return Err(format!(
                    "trace time {} does not exceed previous {}",
                    row.time, last.time
                ));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.energy.total).collect()
    }
}

/// One step of the discrete energy balance
/// `ΔE + αk‖H‖² + kβ₁⟨(ν·∇)u_prev, H⟩ + kβ₂⟨u_prev×(ν·∇)u_prev, H⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub step: usize,
    pub time: f64,
    pub delta_energy: f64,
    pub dissipation: f64,
    pub current_work: f64,
    pub torque_work: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepperState {
    pub n: usize,
    pub t: f64,
    pub u: NodalField,
    pub trace: EnergyTrace,
}

fn trace_row(space: &FeSpace, params: &LlbParams, step: usize, time: f64, u: &NodalField, fp: usize) -> TraceRow {
    let norms = space.norms(u);
    TraceRow {
        step,
        time,
        energy: space.energy(params, u),
        l2_norm: norms.l2,
        linf_norm: norms.linf,
        l4_norm: norms.l4,
        fp_iterations: fp,
    }
}

impl StepperState {
    pub fn new(space: &FeSpace, params: &LlbParams, u0: NodalField) -> Self {
        let mut trace = EnergyTrace::new();
        trace.push(trace_row(space, params, 0, 0.0, &u0, 0)).expect("first row");
        Self {
            n: 0,
            t: 0.0,
            u: u0,
            trace,
        }
    }

    /// Records `u^{n+1}` as the new state.
    pub fn advance(&mut self, space: &FeSpace, params: &LlbParams, k: f64, u: NodalField, fp: usize) {
        self.n += 1;
        self.t = self.n as f64 * k;
        self.u = u;
        self.trace
            .push(trace_row(space, params, self.n, self.t, &self.u, fp))
            .expect("step times increase");
    }
}

/// Krylov budget of [`StepSolver::Auto`] before it switches to the banded solver.
pub const AUTO_KRYLOV_BUDGET: usize = 300;

fn solve_step(
    a: &CsrMatrix,
    b: &[f64],
    x0: &[f64],
    s: &SolverSettings,
    step: usize,
    direct: &mut bool,
) -> Result<(Vec<f64>, SolveStats), SchemeError> {
    let linalg = |source| SchemeError::Linalg { step, source };
    let use_direct = match s.step_solver {
        StepSolver::Banded => true,
        StepSolver::Bicgstab => false,
        StepSolver::Auto => *direct,
    };
    let (x, stats) = if use_direct {
        solve_banded(a, b, s.step_tol).map_err(linalg)?
    } else {
        let budget = match s.step_solver {
            StepSolver::Auto => s.step_max_iter.min(AUTO_KRYLOV_BUDGET),
            _ => s.step_max_iter,
        };
        let opts = SolverOptions::new(s.step_tol, budget, s.step_precond);
        let attempt = solve_bicgstab_from(a, b, Some(x0), opts);
        match (s.step_solver, attempt) {
            (StepSolver::Auto, Ok((_, stats))) if !stats.converged => {
                log::warn!(
                    "step {step}: bicgstab stalled at relative residual {:.3e}; switching to the banded solver",
                    stats.final_relative_residual
                );
                *direct = true;
                solve_banded(a, b, s.step_tol).map_err(linalg)?
            }
            (StepSolver::Auto, Err(LinalgError::Breakdown { .. })) => {
                log::warn!("step {step}: bicgstab broke down; switching to the banded solver");
                *direct = true;
                solve_banded(a, b, s.step_tol).map_err(linalg)?
            }
            (_, res) => res.map_err(linalg)?,
        }
    };
    if !stats.converged {
        return Err(SchemeError::SolverNotConverged { step, stats });
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(SchemeError::NonFinite { step });
    }
    Ok((x, stats))
}

/// `(1/k) M u_prev + β₁⟨(ν·∇)u_prev, χ⟩`.
fn step_rhs(space: &FeSpace, params: &LlbParams, cf: &CurrentField, u_prev: &NodalField, t: f64, k: f64) -> Vec<f64> {
    let mut rhs = space.mass_apply(u_prev);
    let d = space.assemble_d_rhs(params, u_prev, cf, t);
    for (r, di) in rhs.iter_mut().zip(d) {
        *r = *r / k + di;
    }
    rhs
}

/// One step of the linear scheme:
/// `⟨d_t u^n, χ⟩ + A(u^{n-1}; u^n, χ) = D(u^{n-1}, χ)`.
pub fn linear_step(
    space: &FeSpace,
    params: &LlbParams,
    cf: &CurrentField,
    state: &StepperState,
    k: f64,
    settings: &mut StepSettings,
) -> Result<(NodalField, SolveStats), SchemeError> {
    let step = state.n + 1;
    let t = step as f64 * k;
    let a = space.assemble_linear_scheme_matrix(params, &state.u, cf, t, k);
    let rhs = step_rhs(space, params, cf, &state.u, t, k);
    let (x, stats) = solve_step(
        &a,
        &rhs,
        state.u.as_flat(),
        &settings.solver,
        step,
        &mut settings.direct,
    )?;
    Ok((NodalField::from_flat(&x), stats))
}

/// Lagged field of the fixed-point iterate.
pub fn compute_iterate_field(
    space: &FeSpace,
    params: &LlbParams,
    u: &NodalField,
    include_anisotropy: bool,
) -> Result<NodalField, FemError> {
    space.compute_discrete_field_h(params, u, include_anisotropy)
}

/// Residual of the nonlinear scheme at `u`, multiplied through by `k`, as a
/// load vector.
pub fn scheme_residual_vector(
    space: &FeSpace,
    params: &LlbParams,
    cf: &CurrentField,
    u_prev: &NodalField,
    u: &NodalField,
    t: f64,
    k: f64,
) -> Result<Vec<f64>, FemError> {
    let h = space.compute_discrete_field_h(params, u, true)?;
    let du = u.sub(u_prev);
    let mut r = space.mass_apply(&du);
    let cross = space.cross_load(u, &h);
    let mh = space.mass_apply(&h);
    let d = space.assemble_d_rhs(params, u_prev, cf, t);
    for i in 0..r.len() {
        r[i] += k * params.gamma * cross[i] - k * params.alpha * mh[i] - k * d[i];
    }
    Ok(r)
}

/// `L²` norm of the Riesz representer of a load vector: `√(rᵀ M⁻¹ r)`.
pub fn dual_l2_norm(space: &FeSpace, r: &[f64]) -> Result<f64, FemError> {
    let z = space.mass_solve(r, "residual representer")?;
    Ok(dot(r, z.as_flat()).max(0.0).sqrt())
}

/// One step of the nonlinear scheme by fixed-point iteration starting from
/// `u^{n,0} = u^{n-1}`.
pub fn nonlinear_step(
    space: &FeSpace,
    params: &LlbParams,
    cf: &CurrentField,
    state: &StepperState,
    k: f64,
    settings: &mut StepSettings,
) -> Result<(NodalField, FixedPointReport), SchemeError> {
    let step = state.n + 1;
    let t = step as f64 * k;
    let s = settings.solver;
    let fem = |source| SchemeError::Fem { step, source };
    let rhs = step_rhs(space, params, cf, &state.u, t, k);
    let mut u = state.u.clone();
    let mut report = FixedPointReport {
        iterations: 0,
        final_increment_l2: f64::INFINITY,
        converged: false,
        scheme_residual_l2: f64::NAN,
        scheme_residual_unscaled: f64::NAN,
        krylov_iterations: 0,
    };
    while report.iterations < s.fp_max_iter {
        let h = compute_iterate_field(space, params, &u, settings.include_anisotropy).map_err(fem)?;
        let a = space.assemble_nonlinear_iterate_matrix(params, &u, &h, k);
        let (x, stats) = solve_step(&a, &rhs, u.as_flat(), &s, step, &mut settings.direct)?;
        let next = NodalField::from_flat(&x);
        report.iterations += 1;
        report.krylov_iterations += stats.iterations;
        report.final_increment_l2 = space.l2_norm_sq(&next.sub(&u)).sqrt();
        u = next;
        log::trace!(
            "step {step} fixed-point iteration {}: increment {:.3e}",
            report.iterations,
            report.final_increment_l2
        );
        if report.final_increment_l2 < s.fp_tol {
            report.converged = true;
            break;
        }
    }
    let r = scheme_residual_vector(space, params, cf, &state.u, &u, t, k).map_err(fem)?;
    report.scheme_residual_l2 = dual_l2_norm(space, &r).map_err(fem)?;
    report.scheme_residual_unscaled = report.scheme_residual_l2 / k;
    if !report.converged {
        return Err(SchemeError::FixedPointNotConverged { step, report });
    }
    Ok((u, report))
}

/// Field snapshot at a completed step.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub field: NodalField,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    Aborted { step: usize, reason: String },
}

#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub config: SimulationConfig,
    pub mesh: Mesh,
    pub trace: EnergyTrace,
    pub snapshots: Vec<Snapshot>,
    pub status: RunStatus,
    pub balance: Vec<BalanceRow>,
    pub fp_reports: Vec<FixedPointReport>,
    pub final_field: NodalField,
    /// The error that aborted the run, if any.
    pub error: Option<SchemeError>,
}

/// A configured run that can be advanced one step at a time.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: SimulationConfig,
    space: FeSpace,
    settings: StepSettings,
    state: StepperState,
    balance: Vec<BalanceRow>,
    fp_reports: Vec<FixedPointReport>,
    num_steps: usize,
}

impl Simulation {
    /// Builds the mesh and operators and projects the initial data
    /// (`L²` projection for the linear scheme, Ritz projection for the nonlinear one).
    pub fn new(config: &SimulationConfig) -> Result<Self, SchemeError> {
        let mesh = Mesh::build_structured(config.mesh_divisions, config.bounds)?;
        Self::on_mesh(config, mesh)
    }

    pub fn on_mesh(config: &SimulationConfig, mesh: Mesh) -> Result<Self, SchemeError> {
        let mass_kind = if config.lumped_mass {
            MassKind::Lumped
        } else {
            MassKind::Consistent
        };
        if config.validate_current_boundary {
            let report = check_boundary_compat(&config.current, &mesh, 0.0);
            if !report.compatible {
                log::warn!("current density violates nu·n=0 on boundary");
            }
        }
        let space = FeSpace::new(mesh)
            .with_mass_tol(config.solver.mass_tol)
            .with_mass_kind(mass_kind);
        let fem = |source| SchemeError::Fem { step: 0, source };
        let u0 = match config.scheme {
            SchemeKind::Linear => space.l2_project(&config.initial).map_err(fem)?,
            SchemeKind::Nonlinear => space.ritz_project(&config.initial).map_err(fem)?,
        };
        Ok(Self::from_initial(config, space, u0))
    }

    /// Starts from explicit initial coefficients instead of projecting `config.initial`.
    pub fn from_initial(config: &SimulationConfig, space: FeSpace, u0: NodalField) -> Self {
        let state = StepperState::new(&space, &config.params, u0);
        Self {
            settings: StepSettings {
                solver: config.solver,
                include_anisotropy: config.include_anisotropy_in_iterate,
                direct: false,
            },
            num_steps: config.num_steps(),
            config: config.clone(),
            space,
            state,
            balance: Vec::new(),
            fp_reports: Vec::new(),
        }
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    pub fn space(&self) -> &FeSpace {
        &self.space
    }

    pub fn state(&self) -> &StepperState {
        &self.state
    }

    pub fn num_steps(&self) -> usize {
        self.num_steps
    }

    pub fn is_finished(&self) -> bool {
        self.state.n >= self.num_steps
    }

    pub fn balance(&self) -> &[BalanceRow] {
        &self.balance
    }

    pub fn fp_reports(&self) -> &[FixedPointReport] {
        &self.fp_reports
    }

    /// Advances by one step.
    pub fn step(&mut self) -> Result<(), SchemeError> {
        let c = &self.config;
        let k = c.time_step;
        let (u, fp) = match c.scheme {
            SchemeKind::Linear => {
                let (u, _) = linear_step(&self.space, &c.params, &c.current, &self.state, k, &mut self.settings)?;
                (u, 0)
            }
            SchemeKind::Nonlinear => {
                let (u, report) =
                    nonlinear_step(&self.space, &c.params, &c.current, &self.state, k, &mut self.settings)?;
                self.fp_reports.push(report);
                (u, report.iterations)
            }
        };
        let step = self.state.n + 1;
        if !u.is_finite() {
            return Err(SchemeError::NonFinite { step });
        }
        if c.record_balance {
            let row = self
                .balance_row(&u)
                .map_err(|source| SchemeError::Fem { step, source })?;
            self.balance.push(row);
        }
        self.state.advance(&self.space, &c.params, k, u, fp);
        Ok(())
    }

    fn balance_row(&self, u: &NodalField) -> Result<BalanceRow, FemError> {
        let c = &self.config;
        let p = &c.params;
        let k = c.time_step;
        let step = self.state.n + 1;
        let t = step as f64 * k;
        let u_prev = &self.state.u;
        let h = self.space.compute_discrete_field_h(p, u, true)?;
        let e_prev = self.state.trace.last().expect("trace has a row").energy.total;
        let delta_energy = self.space.energy(p, u).total - e_prev;
        let dissipation = p.alpha * k * self.space.l2_norm_sq(&h);
        let (current_work, torque_work) = if c.current.is_zero() {
            (0.0, 0.0)
        } else {
            let cw = k * p.beta1 * dot(&self.space.convective_load(u_prev, &c.current, t), h.as_flat());
            let tw = if c.scheme == SchemeKind::Linear && p.beta2 != 0.0 {
                k * p.beta2 * dot(&self.space.torque_load(u_prev, &c.current, t), h.as_flat())
            } else {
                0.0
            };
            (cw, tw)
        };
        Ok(BalanceRow {
            step,
            time: t,
            delta_energy,
            dissipation,
            current_work,
            torque_work,
            residual: delta_energy + dissipation + current_work + torque_work,
        })
    }

    /// Runs to the final time, collecting snapshots at the requested times.
    pub fn run(mut self) -> SimulationResult {
        let k = self.config.time_step;
        let requested = self.config.snapshot_times.clone();
        let snapshot_steps: Vec<usize> = requested
            .iter()
            .map(|&t| nearest_step(t, k).min(self.num_steps))
            .collect();
        let mut snapshots = Vec::new();
        let take = |state: &StepperState, snapshots: &mut Vec<Snapshot>| {
            for (&s, &t) in snapshot_steps.iter().zip(&requested) {
                if s == state.n {
                    log::debug!("snapshot for t = {t} at step {s}");
                    snapshots.push(Snapshot {
                        step: s,
                        time: state.t,
                        field: state.u.clone(),
                    });
                }
            }
        };
        take(&self.state, &mut snapshots);
        let mut status = RunStatus::Completed;
        let mut error = None;
        while !self.is_finished() {
            if let Err(e) = self.step() {
                log::error!("{e}");
                status = RunStatus::Aborted {
                    step: e.step().unwrap_or(self.state.n + 1),
                    reason: e.to_string(),
                };
                error = Some(e);
                break;
            }
            take(&self.state, &mut snapshots);
        }
        SimulationResult {
            mesh: self.space.mesh().clone(),
            config: self.config,
            trace: self.state.trace,
            snapshots,
            status,
            balance: self.balance,
            fp_reports: self.fp_reports,
            final_field: self.state.u,
            error,
        }
    }
}

/// Nearest step index to time `t`, ties toward the earlier step.
pub fn nearest_step(t: f64, k: f64) -> usize {
    let s = t / k;
    let lo = s.floor();
    if s - lo > 0.5 {
        lo as usize + 1
    } else {
        lo as usize
    }
}

/// Builds and runs a simulation. Setup failures are errors; a failing step
/// yields an aborted result that keeps the partial trace.
pub fn run_simulation(config: &SimulationConfig) -> Result<SimulationResult, SchemeError> {
    Ok(Simulation::new(config)?.run())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Bounds;
    use crate::model::InitialDataSpec;

    fn unit_config(scheme: SchemeKind) -> SimulationConfig {
        SimulationConfig {
            preset: None,
            scheme,
            mesh_divisions: 4,
            bounds: Bounds::centred_unit_square(),
            params: LlbParams::unit(),
            current: CurrentField::Zero,
            initial: InitialDataSpec::Vortex,
            time_step: 0.1,
            final_time: 0.3,
            snapshot_times: vec![],
            solver: SolverSettings::default(),
            include_anisotropy_in_iterate: true,
            lumped_mass: false,
            validate_current_boundary: false,
            record_balance: false,
            out_dir: None,
        }
    }

    #[test]
    fn nearest_step_ties_go_early() {
        assert_eq!(nearest_step(0.25, 0.1), 2);
        assert_eq!(nearest_step(0.15, 0.1), 1);
        assert_eq!(nearest_step(0.26, 0.1), 3);
        assert_eq!(nearest_step(2e-3, 1e-6), 2000);
    }

    #[test]
    fn zero_state_is_fixed_for_both_schemes() {
        for scheme in [SchemeKind::Linear, SchemeKind::Nonlinear] {
            let cfg = unit_config(scheme);
            let space = FeSpace::new(Mesh::build_structured(3, cfg.bounds).unwrap());
            let n = space.num_nodes();
            let mut sim = Simulation::from_initial(&cfg, space, NodalField::zeros(n));
            sim.step().unwrap();
            assert_eq!(sim.state().u.max_norm(), 0.0);
        }
    }

    #[test]
    fn trace_rejects_non_increasing_time() {
        let row = TraceRow {
            step: 0,
            time: 0.0,
            energy: EnergyBreakdown::default(),
            l2_norm: 0.0,
            linf_norm: 0.0,
            l4_norm: 0.0,
            fp_iterations: 0,
        };
        let mut t = EnergyTrace::new();
        t.push(row).unwrap();
        assert!(t.push(row).is_err());
    }

    #[test]
    fn short_final_time_gives_single_row() {
        let mut cfg = unit_config(SchemeKind::Linear);
        cfg.final_time = 0.05;
        let r = run_simulation(&cfg).unwrap();
        assert_eq!(r.trace.len(), 1);
        assert_eq!(r.status, RunStatus::Completed);
    }
}
