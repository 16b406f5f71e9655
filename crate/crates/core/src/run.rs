//! Executes a resolved [`RunRequest`].

use crate::config::{AnalysisSpec, RunRequest};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::lyapunov::{lyapunov_spectrum, LyapunovRecord};
use crate::poincare::{generate_section, PoincareCloud};
use crate::scenarios::{chaos_fraction, damping_study, trajectory, DampingRun, SweepResult};
use crate::model::SystemState;

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutput {
    Trajectory(Vec<SystemState>),
    Section(PoincareCloud),
    Lyapunov(Vec<LyapunovRecord>),
    Sweep(SweepResult),
    Damping(Vec<DampingRun>),
}

impl RunOutput {
    /// Per-initial-condition failures that did not abort the run.
    pub fn soft_failures(&self) -> Vec<String> {
        match self {
            RunOutput::Section(c) => c
                .failures
                .iter()
                .map(|f| format!("initial condition {} (q0 = {}) failed: {}", f.ic_index, f.q0, f.error))
                .collect(),
            RunOutput::Sweep(s) => s
                .details
                .iter()
                .filter_map(|d| {
                    d.error.as_ref().map(|e| {
                        format!(
                            "S = {}, initial condition {} (q0 = {}) failed: {e}",
                            d.value, d.ic_index, d.q0
                        )
                    })
                })
                .collect(),
            _ => Vec::new(),
        }
    }
}

pub fn execute(req: &RunRequest, exec: Exec) -> Result<RunOutput> {
    req.validate()?;
    let params = req.params.validated()?;
    let icfg = &req.integrator;
    let out = match &req.analysis {
        AnalysisSpec::Trajectory { ic, horizon, dt } => {
            RunOutput::Trajectory(trajectory(&params, ic, *horizon, *dt, icfg)?)
        }
        AnalysisSpec::Section { section } => {
            let cloud = generate_section(&params, section, icfg, exec)?;
            if cloud.sections.is_empty() && !cloud.failures.is_empty() {
                return Err(Error::AllFailed(format!(
                    "every initial condition failed; first: {}",
                    cloud.failures[0].error
                )));
            }
            RunOutput::Section(cloud)
        }
        AnalysisSpec::Lyapunov { ic, lyapunov } => {
            RunOutput::Lyapunov(lyapunov_spectrum(&params, ic, lyapunov, icfg)?)
        }
        AnalysisSpec::Sweep {
            drives,
            section,
            lyapunov,
            threshold,
        } => {
            let sweep = chaos_fraction(&params, drives, section, lyapunov, icfg, *threshold, exec)?;
            if sweep.rows.iter().all(|r| r.succeeded == 0) {
                return Err(Error::AllFailed("every sweep point failed".into()));
            }
            RunOutput::Sweep(sweep)
        }
        AnalysisSpec::Damping { ic, gammas, damping } => {
            RunOutput::Damping(damping_study(&params, gammas, ic, damping, icfg, exec)?)
        }
    };
    Ok(out)
}
