//! Verification harness: extrapolated convergence rates, energy dissipation,
//! exponential decay and the per-step energy balance.

use std::fmt::Write as _;
use std::path::Path;
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::app::config::SimulationConfig;
use crate::fem::{FeSpace, FemError, MassKind, NodalField};
use crate::mesh::{Mesh, MeshError};
use crate::model::LlbParams;
use crate::schemes::{BalanceRow, EnergyTrace, SchemeError, Simulation, SimulationResult};

/// Fewest mesh levels accepted by a rate study.
pub const MIN_LEVELS: usize = 3;

/// Errors at or below this multiple of the solution size are treated as
/// rounding noise when forming rates.
pub const ROUNDING_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("{0}")]
    Config(String),
    #[error("level with {divisions} divisions: {source}")]
    Run {
        divisions: usize,
        #[source]
        source: SchemeError,
        /// Rows from the level pairs that completed before the failure.
        partial: RateTable,
    },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Fem(#[from] FemError),
}

/// One level pair of a rate study. `inv_h` and `k` belong to the coarser level;
/// the errors compare it with the next finer one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub inv_h: f64,
    pub k: f64,
    pub err_l2: f64,
    pub err_h1semi: f64,
    /// `log₂` of the previous row's `L²` error over this one; `None` on the first row.
    pub rate0: Option<f64>,
    pub rate1: Option<f64>,
    /// Set when an error of this row or the previous one is at rounding level,
    /// in which case the rates hold the `inf` sentinel.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
}

/// `log₂(coarse / fine)`, or `inf` when either error is not a positive finite number.
pub fn rate(coarse: f64, fine: f64) -> f64 {
    if coarse > 0.0 && fine > 0.0 && coarse.is_finite() && fine.is_finite() {
        (coarse / fine).log2()
    } else {
        f64::INFINITY
    }
}

/// Error measurement for one level pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelError {
    pub inv_h: f64,
    pub k: f64,
    pub err_l2: f64,
    pub err_h1semi: f64,
}

impl RateTable {
    /// Builds the table and its rates. Errors not above `floor` count as
    /// degenerate.
    pub fn from_errors(errors: &[LevelError], floor: f64) -> Self {
        let mut rows: Vec<RateRow> = Vec::with_capacity(errors.len());
        for (i, e) in errors.iter().enumerate() {
            let small = |v: f64| !(v > floor) || !v.is_finite();
            let mut row = RateRow {
                inv_h: e.inv_h,
                k: e.k,
                err_l2: e.err_l2,
                err_h1semi: e.err_h1semi,
                rate0: None,
                rate1: None,
                degenerate: small(e.err_l2) || small(e.err_h1semi),
            };
            if i > 0 {
                let p = &errors[i - 1];
                row.degenerate |= small(p.err_l2) || small(p.err_h1semi);
                let pick = |c: f64, f: f64| if row.degenerate { f64::INFINITY } else { rate(c, f) };
                row.rate0 = Some(pick(p.err_l2, e.err_l2));
                row.rate1 = Some(pick(p.err_h1semi, e.err_h1semi));
            }
            rows.push(row);
        }
        Self { rows }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rates of the finest pair, if there are two rows.
    pub fn finest_rates(&self) -> Option<(f64, f64)> {
        let last = self.rows.last()?;
        Some((last.rate0?, last.rate1?))
    }

    pub fn any_degenerate(&self) -> bool {
        self.rows.iter().any(|r| r.degenerate)
    }

    pub fn to_csv(&self) -> String {
        fn cell(v: Option<f64>) -> String {
            match v {
                None => String::new(),
                Some(x) if x.is_infinite() => "inf".to_string(),
                Some(x) => format!("{x:.16e}"),
            }
        }
        let mut out = String::from("inv_h,k,err_l2,err_h1semi,rate0,rate1\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
                r.inv_h,
                r.k,
                r.err_l2,
                r.err_h1semi,
                cell(r.rate0),
                cell(r.rate1)
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_csv())
    }
}

/// Time coupling of a temporal study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalMode {
    /// `k = 0.01 h²`, read in the `L²` norm.
    L2Coupled,
    /// `k = 0.01 h`, read in the `H¹` seminorm.
    H1Coupled,
}

impl TemporalMode {
    pub fn time_step(self, h: f64) -> f64 {
        match self {
            TemporalMode::L2Coupled => 0.01 * h * h,
            TemporalMode::H1Coupled => 0.01 * h,
        }
    }

    /// Ratio of consecutive time steps when `h` halves.
    fn ratio(self) -> usize {
        match self {
            TemporalMode::L2Coupled => 4,
            TemporalMode::H1Coupled => 2,
        }
    }
}

/// Nominal mesh size: side length over the number of divisions.
pub fn nominal_h(config: &SimulationConfig, divisions: usize) -> f64 {
    config.bounds.width() / divisions as f64
}

struct LevelRun {
    divisions: usize,
    space: FeSpace,
    fields: Vec<NodalField>,
}

fn study_config(base: &SimulationConfig, divisions: usize, k: f64, steps: usize) -> SimulationConfig {
    let mut c = base.clone();
    c.mesh_divisions = divisions;
    c.time_step = k;
    c.final_time = k * steps as f64;
    c.snapshot_times.clear();
    c.record_balance = false;
    c.out_dir = None;
    c
}

/// Runs `config` keeping every step's field, or only the last one.
fn run_level(config: &SimulationConfig, steps: usize, keep_all: bool) -> Result<LevelRun, SchemeError> {
    let mut sim = Simulation::new(config)?;
    let mut fields = vec![sim.state().u.clone()];
    for _ in 0..steps {
        sim.step()?;
        if keep_all {
            fields.push(sim.state().u.clone());
        }
    }
    if !keep_all {
        fields = vec![sim.state().u.clone()];
    }
    Ok(LevelRun {
        divisions: config.mesh_divisions,
        space: sim.space().clone(),
        fields,
    })
}

/// Runs the levels concurrently; results come back in level order.
fn run_levels(configs: &[(SimulationConfig, usize)], keep_all: bool) -> Vec<Result<LevelRun, SchemeError>> {
    thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .map(|(c, steps)| s.spawn(move || run_level(c, *steps, keep_all)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("level run panicked"))
            .collect()
    })
}

/// `(max L², max H¹-seminorm)` of `prolongate(coarse) - fine` over paired fields.
fn pair_errors(coarse: &LevelRun, fine: &LevelRun) -> Result<(f64, f64, f64), HarnessError> {
    let (mut l2, mut h1, mut scale) = (0.0f64, 0.0f64, 0.0f64);
    for (uc, uf) in coarse.fields.iter().zip(&fine.fields) {
        let e = coarse.space.mesh().prolongate(fine.space.mesh(), uc)?.sub(uf);
        l2 = l2.max(fine.space.l2_norm_sq(&e).sqrt());
        h1 = h1.max(fine.space.h1_semi_sq(&e).sqrt());
        scale = scale.max(fine.space.l2_norm_sq(uf).sqrt());
    }
    Ok((l2, h1, scale))
}

fn check_levels(levels: usize) -> Result<(), HarnessError> {
    if levels < MIN_LEVELS {
        return Err(HarnessError::Config(format!(
            "a rate study needs at least {MIN_LEVELS} levels (got {levels})"
        )));
    }
    Ok(())
}

fn tabulate(
    base: &SimulationConfig,
    configs: &[(SimulationConfig, usize)],
    runs: Vec<Result<LevelRun, SchemeError>>,
) -> Result<RateTable, HarnessError> {
    let mut errors = Vec::new();
    let mut floor = 0.0f64;
    let mut done: Vec<LevelRun> = Vec::new();
    for (run, (config, _)) in runs.into_iter().zip(configs) {
        let run = match run {
            Ok(r) => r,
            Err(source) => {
                return Err(HarnessError::Run {
                    divisions: config.mesh_divisions,
                    source,
                    partial: RateTable::from_errors(&errors, floor),
                })
            }
        };
        if let Some(prev) = done.last() {
            let (l2, h1, scale) = pair_errors(prev, &run)?;
            floor = floor.max(ROUNDING_FLOOR * scale.max(1.0));
            let coarse_config = &configs[done.len() - 1].0;
            errors.push(LevelError {
                inv_h: 1.0 / nominal_h(base, prev.divisions),
                k: coarse_config.time_step,
                err_l2: l2,
                err_h1semi: h1,
            });
        }
        done.push(run);
    }
    Ok(RateTable::from_errors(&errors, floor))
}

/// Spatial study on `m, 2m, 4m, ...` with the base time step and step count;
/// errors are maximised over all steps.
pub fn spatial_rate_study(base: &SimulationConfig, levels: usize) -> Result<RateTable, HarnessError> {
    check_levels(levels)?;
    let steps = base.num_steps();
    let configs: Vec<_> = (0..levels)
        .map(|i| {
            (
                study_config(base, base.mesh_divisions << i, base.time_step, steps),
                steps,
            )
        })
        .collect();
    let runs = run_levels(&configs, true);
    tabulate(base, &configs, runs)
}

/// Temporal study on `m, 2m, 4m, ...` with the time step tied to the mesh
/// size. The final time is the base final time rounded to a whole number of
/// coarsest steps (at least one), so every level ends at the same instant;
/// errors are compared there.
pub fn temporal_rate_study(
    base: &SimulationConfig,
    mode: TemporalMode,
    levels: usize,
) -> Result<RateTable, HarnessError> {
    check_levels(levels)?;
    let k0 = mode.time_step(nominal_h(base, base.mesh_divisions));
    let n0 = ((base.final_time / k0).round() as usize).max(1);
    let r = mode.ratio();
    let configs: Vec<_> = (0..levels)
        .map(|i| {
            let scale = r.pow(i as u32);
            let steps = n0 * scale;
            (
                study_config(base, base.mesh_divisions << i, k0 / scale as f64, steps),
                steps,
            )
        })
        .collect();
    let runs = run_levels(&configs, false);
    tabulate(base, &configs, runs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissipationReport {
    pub tol_abs: f64,
    /// Steps whose energy exceeds the previous row's by more than `tol_abs`.
    pub violations: Vec<usize>,
    /// Largest increase between consecutive rows (negative if energy always fell).
    pub max_increase: f64,
}

impl DissipationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// `1e-12 · max(1, E₀)`.
pub fn default_dissipation_tol(trace: &EnergyTrace) -> f64 {
    1e-12 * trace.rows().first().map_or(1.0, |r| r.energy.total.abs().max(1.0))
}

pub fn dissipation_check(trace: &EnergyTrace, tol_abs: f64) -> DissipationReport {
    let mut violations = Vec::new();
    let mut max_increase = f64::NEG_INFINITY;
    for w in trace.rows().windows(2) {
        let inc = w[1].energy.total - w[0].energy.total;
        max_increase = max_increase.max(inc);
        if inc > tol_abs || inc.is_nan() {
            violations.push(w[1].step);
        }
    }
    DissipationReport {
        tol_abs,
        violations,
        max_increase,
    }
}

/// Relative slack of the decay envelope.
pub const DECAY_SLACK: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    /// Least-squares slope of `ln E` against `t` over the last 80% of rows.
    pub fitted_exponent: f64,
    /// `2ακμ`, the guaranteed decay rate.
    pub theory_exponent: f64,
    /// Rows with `E > (1 + slack) e^{-2ακμ t} E₀`.
    pub envelope_violations: usize,
    pub rows_fitted: usize,
}

impl DecayReport {
    pub fn to_text(&self) -> String {
        format!(
            "fitted_exponent = {:.16e}\ntheory_exponent = {:.16e}\nenvelope_violations = {}\nrows_fitted = {}\n",
            self.fitted_exponent, self.theory_exponent, self.envelope_violations, self.rows_fitted
        )
    }
}

pub fn decay_fit(trace: &EnergyTrace, params: &LlbParams) -> Result<DecayReport, HarnessError> {
    let rows = trace.rows();
    if rows.len() < 10 {
        return Err(HarnessError::Config(format!(
            "decay fit needs at least 10 trace rows (got {})",
            rows.len()
        )));
    }
    let start = rows.len() / 5;
    let tail = &rows[start..];
    if let Some(r) = tail.iter().find(|r| !(r.energy.total > 0.0)) {
        return Err(HarnessError::Config(format!(
            "decay fit needs positive energies (step {} has {:e})",
            r.step, r.energy.total
        )));
    }
    let n = tail.len() as f64;
    let mean_t = tail.iter().map(|r| r.time).sum::<f64>() / n;
    let mean_y = tail.iter().map(|r| r.energy.total.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for r in tail {
        let dt = r.time - mean_t;
        sxy += dt * (r.energy.total.ln() - mean_y);
        sxx += dt * dt;
    }
    let rate = 2.0 * params.alpha * params.kappa * params.mu;
    let e0 = rows[0].energy.total;
    let envelope_violations = rows
        .iter()
        .filter(|r| r.energy.total > (1.0 + DECAY_SLACK) * (-rate * r.time).exp() * e0)
        .count();
    Ok(DecayReport {
        fitted_exponent: sxy / sxx,
        theory_exponent: rate,
        envelope_violations,
        rows_fitted: tail.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub rows: Vec<BalanceRow>,
    pub max_residual: f64,
    pub min_residual: f64,
    pub max_abs_residual: f64,
}

/// Summarises the per-step balance
/// `ΔE + αk‖H‖² + kβ₁⟨(ν·∇)u_prev, H⟩ [+ kβ₂⟨u_prev×(ν·∇)u_prev, H⟩]`
/// recorded by a run with `record_balance` set.
pub fn energy_balance_report(result: &SimulationResult) -> Result<BalanceReport, HarnessError> {
    if result.balance.len() + 1 < result.trace.len() {
        return Err(HarnessError::Config(
            "the run did not record the energy balance (set record_balance)".into(),
        ));
    }
    let residuals = result.balance.iter().map(|r| r.residual);
    Ok(BalanceReport {
        rows: result.balance.clone(),
        max_residual: residuals.clone().fold(f64::NEG_INFINITY, f64::max),
        min_residual: residuals.clone().fold(f64::INFINITY, f64::min),
        max_abs_residual: residuals.map(f64::abs).fold(0.0, f64::max),
    })
}

/// Finite-element space of a run's configuration, for post-processing.
pub fn space_for(config: &SimulationConfig) -> Result<FeSpace, MeshError> {
    let mesh = Mesh::build_structured(config.mesh_divisions, config.bounds)?;
    let kind = if config.lumped_mass {
        MassKind::Lumped
    } else {
        MassKind::Consistent
    };
    Ok(FeSpace::new(mesh)
        .with_mass_tol(config.solver.mass_tol)
        .with_mass_kind(kind))
}
