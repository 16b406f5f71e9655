//! Named presets for every figure configuration and the sweep drivers built
//! on top of the section and Lyapunov engines.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::integrator::{sample_uniform, IntegratorConfig};
use crate::lyapunov::{
    classify_chaotic, final_spectrum, lyapunov_spectrum, LyapunovConfig, LyapunovRecord,
};
use crate::model::{DriveParams, ModelParams, SystemState};
use crate::poincare::SectionConfig;

/// Coupling of every driven preset (G/ω = 2.1).
pub const STRONG_COUPLING: f64 = 2.1;
/// Default trajectory length for the temporal presets, 100 strobe periods.
pub const TRAJECTORY_HORIZON: f64 = 200.0 * PI;
/// Default Lyapunov run length for the spectrum presets.
pub const SPECTRUM_HORIZON: f64 = 1.0e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    Section,
    Trajectory,
    Lyapunov,
    Damping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPreset {
    pub id: String,
    pub params: ModelParams,
    /// Initial states for trajectory, Lyapunov and damping runs. Section
    /// presets take theirs from `section`.
    pub ics: Vec<SystemState>,
    pub analysis: Analysis,
    pub horizon: f64,
    pub section: Option<SectionConfig>,
    /// Damping rates compared by the damping preset.
    pub gammas: Vec<f64>,
    pub notes: String,
    /// Parameter conflicts carried into the run manifest.
    pub warnings: Vec<String>,
}

const FIG2_DRIVE_CONFLICT: &str =
    "drive amplitude for fig2g-fig2l is quoted both as 8 and as 2; 8 used";
const FIG5_DRIVE_CONFLICT: &str =
    "drive amplitude for fig5c/fig5d is quoted both as 20 and as 50; fig5c/fig5d keep 20, fig5cd uses 50";

fn base(coupling: f64, s_x: f64, s_y: f64) -> ModelParams {
    ModelParams::preset_base(coupling).with_drives(s_x, s_y)
}

fn rest(q_x: f64, q_y: f64) -> SystemState {
    SystemState::at_rest(q_x, q_y)
}

fn section_preset(id: String, params: ModelParams, notes: String, warnings: Vec<String>) -> ScenarioPreset {
    let section = SectionConfig::default();
    ScenarioPreset {
        id,
        params,
        ics: Vec::new(),
        analysis: Analysis::Section,
        horizon: section.horizon,
        section: Some(section),
        gammas: Vec::new(),
        notes,
        warnings,
    }
}

fn timed_preset(
    id: String,
    params: ModelParams,
    ic: SystemState,
    analysis: Analysis,
    horizon: f64,
    notes: String,
) -> ScenarioPreset {
    ScenarioPreset {
        id,
        params,
        ics: vec![ic],
        analysis,
        horizon,
        section: None,
        gammas: Vec::new(),
        notes,
        warnings: Vec::new(),
    }
}

/// Every preset, in catalog order.
pub fn catalog() -> Vec<ScenarioPreset> {
    let mut out = Vec::new();

    // fig2*: sections, panels paired (x mirror, y mirror) over the same run
    let fig2 = [
        (0.0, 0.0, 0.0),
        (0.1, 0.0, 0.0),
        (STRONG_COUPLING, 0.0, 0.0),
        (STRONG_COUPLING, 8.0, 0.0),
        (STRONG_COUPLING, 0.0, 8.0),
        (STRONG_COUPLING, 8.0, 8.0),
    ];
    for (pair, &(g, sx, sy)) in fig2.iter().enumerate() {
        for (offset, mirror) in ["x", "y"].iter().enumerate() {
            let panel = (b'a' + (2 * pair + offset) as u8) as char;
            let driven = sx > 0.0 || sy > 0.0;
            out.push(section_preset(
                format!("fig2{panel}"),
                base(g, sx, sy),
                format!("section, G/ω = {g}, S_x = {sx}, S_y = {sy}; panel shows mirror {mirror}"),
                if driven { vec![FIG2_DRIVE_CONFLICT.to_string()] } else { Vec::new() },
            ));
        }
    }

    // fig3*: undriven temporal response
    for (panel, g) in [('a', 0.0), ('b', 0.1), ('c', STRONG_COUPLING)] {
        out.push(timed_preset(
            format!("fig3{panel}"),
            base(g, 0.0, 0.0),
            rest(0.3, -1.0),
            Analysis::Trajectory,
            TRAJECTORY_HORIZON,
            format!("trajectory, G/ω = {g}, S = 0, ICs (0.3,0) and (-1,0)"),
        ));
    }
    out.push(timed_preset(
        "fig3d".into(),
        base(STRONG_COUPLING, 0.0, 0.0),
        rest(0.65, 0.65),
        Analysis::Trajectory,
        TRAJECTORY_HORIZON,
        "trajectory, G/ω = 2.1, S = 0, symmetric IC (0.65,0)".into(),
    ));

    // fig4*: one or both mirrors driven
    for (panel, sx, sy) in [('a', 8.0, 0.0), ('b', 0.0, 8.0), ('c', 8.0, 8.0)] {
        out.push(timed_preset(
            format!("fig4{panel}"),
            base(STRONG_COUPLING, sx, sy),
            rest(0.3, -1.0),
            Analysis::Trajectory,
            TRAJECTORY_HORIZON,
            format!("trajectory, G/ω = 2.1, S_x = {sx}, S_y = {sy}, ICs (0.3,0) and (-1,0)"),
        ));
    }

    // fig5*: sections at stronger drive
    for (panel, s) in [('a', 20.0), ('b', 20.0), ('c', 20.0), ('d', 20.0)] {
        let mirror = if panel == 'a' || panel == 'c' { "x" } else { "y" };
        let warnings = if panel >= 'c' {
            vec![FIG5_DRIVE_CONFLICT.to_string()]
        } else {
            Vec::new()
        };
        out.push(section_preset(
            format!("fig5{panel}"),
            base(STRONG_COUPLING, s, s),
            format!("section, G/ω = 2.1, S_x = S_y = {s} ; panel shows mirror {mirror}"),
            warnings,
        ));
    }
    out.push(section_preset(
        "fig5cd".into(),
        base(STRONG_COUPLING, 50.0, 50.0),
        "section, G/ω = 2.1, S_x = S_y = 50 (stronger of the two quoted values)".into(),
        vec![FIG5_DRIVE_CONFLICT.to_string()],
    ));

    for (panel, s) in [('a', 20.0), ('b', 50.0)] {
        out.push(timed_preset(
            format!("fig6{panel}"),
            base(STRONG_COUPLING, s, s),
            rest(0.3, -1.0),
            Analysis::Trajectory,
            TRAJECTORY_HORIZON,
            format!("trajectory, G/ω = 2.1, S_x = S_y = {s}, ICs (0.3,0) and (-1,0)"),
        ));
    }

    // fig7-*, fig8-*: spectra from (-1,0) and (1,0)
    let spectra = [
        (0.0, 0.0),
        (STRONG_COUPLING, 0.0),
        (STRONG_COUPLING, 8.0),
        (STRONG_COUPLING, 20.0),
        (STRONG_COUPLING, 50.0),
    ];
    for (fig, q0) in [(7, -1.0), (8, 1.0)] {
        for (k, &(g, s)) in spectra.iter().enumerate() {
            out.push(timed_preset(
                format!("fig{fig}-{}", k + 1),
                base(g, s, s),
                rest(q0, q0),
                Analysis::Lyapunov,
                SPECTRUM_HORIZON,
                format!("Lyapunov spectrum and KS entropy, G/ω = {g}, S_x = S_y = {s}, IC ({q0},0) for both mirrors"),
            ));
        }
    }

    // fig9*: damping at 0.01κ and 0.1κ
    let kappa = ModelParams::preset_base(STRONG_COUPLING).kappa;
    let gammas = vec![0.01 * kappa, 0.1 * kappa];
    for (panel, &gamma) in ['a', 'b'].iter().zip(&gammas) {
        out.push(timed_preset(
            format!("fig9{panel}"),
            base(STRONG_COUPLING, 8.0, 8.0).with_damping(gamma, gamma),
            rest(0.3, -1.0),
            Analysis::Trajectory,
            TRAJECTORY_HORIZON,
            format!("trajectory with damping γ = {}κ, G/ω = 2.1, S = 8", gamma / kappa),
        ));
    }
    out.push(ScenarioPreset {
        gammas,
        ..timed_preset(
            "fig9".into(),
            base(STRONG_COUPLING, 8.0, 8.0),
            rest(0.3, -1.0),
            Analysis::Damping,
            TRAJECTORY_HORIZON,
            "damping study comparing γ = 0.01κ and 0.1κ: envelopes, late mean |q| and λ1".into(),
        )
    });

    out
}

pub fn preset_ids() -> Vec<String> {
    catalog().into_iter().map(|p| p.id).collect()
}

/// Accepts `fig7a3`/`fig7b3` (spectrum and entropy panels of one run) as
/// aliases of `fig7-3`.
fn canonical_id(id: &str) -> String {
    let id = id.trim().to_ascii_lowercase();
    for fig in ["fig7", "fig8"] {
        if let Some(rest) = id.strip_prefix(fig) {
            let digits = rest.trim_start_matches(['a', 'b']);
            if digits.len() == 1 && digits.chars().all(|c| c.is_ascii_digit()) {
                return format!("{fig}-{digits}");
            }
        }
    }
    id
}

pub fn preset(id: &str) -> Result<ScenarioPreset> {
    let want = canonical_id(id);
    let all = catalog();
    match all.iter().position(|p| p.id == want) {
        Some(i) => Ok(all.into_iter().nth(i).expect("index in range")),
        None => Err(Error::UnknownPreset {
            id: id.to_string(),
            available: all.into_iter().map(|p| p.id).collect(),
        }),
    }
}

/// States at `ic.t + k·dt`, `k = 0..=floor(horizon/dt)`; the first sample is
/// the initial condition.
pub fn trajectory(
    params: &ModelParams,
    ic: &SystemState,
    horizon: f64,
    dt: f64,
    icfg: &IntegratorConfig,
) -> Result<Vec<SystemState>> {
    let params = params.validated()?;
    if !(dt > 0.0 && horizon >= dt && horizon.is_finite()) {
        return Err(Error::InvalidParam {
            name: "horizon",
            reason: format!("need horizon >= dt > 0, got horizon {horizon}, dt {dt}"),
        });
    }
    let count = ((horizon / dt) * (1.0 + 1e-12)).floor() as usize;
    let p = params;
    let pts = sample_uniform(
        move |t, y: &[f64; 4], dy: &mut [f64; 4]| p.rhs(t, y, dy),
        ic.t,
        ic.to_array(),
        dt,
        count,
        icfg,
    )?;
    let mut out = Vec::with_capacity(count + 1);
    out.push(*ic);
    out.extend(
        pts.into_iter()
            .enumerate()
            .map(|(k, y)| SystemState::from_array(ic.t + (k + 1) as f64 * dt, y)),
    );
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub chaos_fraction: f64,
    pub mean_lambda1: f64,
    pub mean_hks: f64,
    pub succeeded: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepDetail {
    pub axis_index: usize,
    pub value: f64,
    pub ic_index: usize,
    pub q0: f64,
    pub record: Option<LyapunovRecord>,
    pub chaotic: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: Vec<f64>,
    pub rows: Vec<SweepRow>,
    pub details: Vec<SweepDetail>,
}

/// For each drive amplitude (applied to both mirrors) runs a Lyapunov
/// spectrum from every section initial condition and reports the fraction
/// classified chaotic. Failed initial conditions are counted, not fatal.
pub fn chaos_fraction(
    base_params: &ModelParams,
    drive_values: &[f64],
    section: &SectionConfig,
    lyap: &LyapunovConfig,
    icfg: &IntegratorConfig,
    threshold: f64,
    exec: Exec,
) -> Result<SweepResult> {
    if drive_values.is_empty() {
        return Err(Error::InvalidParam {
            name: "drives",
            reason: "sweep needs at least one drive value".into(),
        });
    }
    section.validate()?;
    lyap.validate()?;
    icfg.validate()?;
    let mut params = Vec::with_capacity(drive_values.len());
    for &s in drive_values {
        let p = ModelParams {
            drive_x: DriveParams { amplitude: s, ..base_params.drive_x },
            drive_y: DriveParams { amplitude: s, ..base_params.drive_y },
            ..*base_params
        };
        params.push(p.validated()?);
    }
    let qs = section.ic_values();
    let jobs: Vec<(usize, usize)> = (0..drive_values.len())
        .flat_map(|a| (0..qs.len()).map(move |i| (a, i)))
        .collect();
    let results = exec.map(&jobs, |_, &(a, i)| {
        final_spectrum(&params[a], &section.initial_state(qs[i]), lyap, icfg)
    });

    let mut details = Vec::with_capacity(jobs.len());
    for (&(a, i), r) in jobs.iter().zip(results) {
        let (record, error) = match r {
            Ok(rec) => (Some(rec), None),
            Err(e) => (None, Some(e.to_string())),
        };
        details.push(SweepDetail {
            axis_index: a,
            value: drive_values[a],
            ic_index: i,
            q0: qs[i],
            chaotic: record.as_ref().is_some_and(|r| classify_chaotic(r, threshold)),
            record,
            error,
        });
    }
    let rows = drive_values
        .iter()
        .enumerate()
        .map(|(a, &value)| {
            let recs: Vec<&LyapunovRecord> = details
                .iter()
                .filter(|d| d.axis_index == a)
                .filter_map(|d| d.record.as_ref())
                .collect();
            let n = recs.len();
            let chaotic = details.iter().filter(|d| d.axis_index == a && d.chaotic).count();
            let mean = |f: &dyn Fn(&LyapunovRecord) -> f64| {
                if n == 0 {
                    f64::NAN
                } else {
                    recs.iter().map(|r| f(r)).sum::<f64>() / n as f64
                }
            };
            SweepRow {
                value,
                chaos_fraction: if n == 0 { 0.0 } else { chaotic as f64 / n as f64 },
                mean_lambda1: mean(&|r| r.lambda[0]),
                mean_hks: mean(&|r| r.hks),
                succeeded: n,
                failed: qs.len() - n,
            }
        })
        .collect();
    Ok(SweepResult {
        axis: drive_values.to_vec(),
        rows,
        details,
    })
}

/// Full spectrum series from two initial conditions under the same model.
pub fn ic_sensitivity(
    params: &ModelParams,
    ic_a: &SystemState,
    ic_b: &SystemState,
    lyap: &LyapunovConfig,
    icfg: &IntegratorConfig,
    exec: Exec,
) -> Result<(Vec<LyapunovRecord>, Vec<LyapunovRecord>)> {
    let params = params.validated()?;
    let mut runs = exec
        .map(&[*ic_a, *ic_b], |_, ic| lyapunov_spectrum(&params, ic, lyap, icfg))
        .into_iter();
    let a = runs.next().expect("two runs")?;
    let b = runs.next().expect("two runs")?;
    Ok((a, b))
}

/// Largest `|q|` over consecutive windows, stamped with the time it occurs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub t: Vec<f64>,
    pub value: Vec<f64>,
}

/// Running-max envelope of `q` sampled at `times`, over windows of length
/// `window` starting at `times[0]`.
pub fn envelope(times: &[f64], q: &[f64], window: f64) -> Envelope {
    let mut env = Envelope {
        t: Vec::new(),
        value: Vec::new(),
    };
    let Some(&t0) = times.first() else {
        return env;
    };
    let mut current: Option<(u64, f64, f64)> = None;
    for (&t, &v) in times.iter().zip(q) {
        let w = ((t - t0) / window).floor() as u64;
        match current {
            Some((cw, _, best)) if cw == w => {
                if v.abs() > best {
                    current = Some((w, t, v.abs()));
                }
            }
            _ => {
                if let Some((_, bt, best)) = current {
                    env.t.push(bt);
                    env.value.push(best);
                }
                current = Some((w, t, v.abs()));
            }
        }
    }
    if let Some((_, bt, best)) = current {
        env.t.push(bt);
        env.value.push(best);
    }
    env
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DampingRun {
    pub gamma: f64,
    pub samples: Vec<SystemState>,
    pub envelope_x: Envelope,
    pub envelope_y: Envelope,
    /// Mean of `|q_x|` and `|q_y|` over the last quarter of the horizon.
    pub late_mean_abs_q: f64,
    pub lambda1: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DampingConfig {
    pub horizon: f64,
    pub sample_dt: f64,
    pub window: f64,
    /// When set, λ1 is estimated over this run length as well.
    pub lyapunov: Option<LyapunovConfig>,
}

impl Default for DampingConfig {
    fn default() -> Self {
        Self {
            horizon: TRAJECTORY_HORIZON,
            sample_dt: TAU / 200.0,
            window: TAU,
            lyapunov: None,
        }
    }
}

/// Same model and initial condition at each damping rate (applied to both
/// mirrors).
pub fn damping_study(
    params: &ModelParams,
    gamma_values: &[f64],
    ic: &SystemState,
    cfg: &DampingConfig,
    icfg: &IntegratorConfig,
    exec: Exec,
) -> Result<Vec<DampingRun>> {
    if gamma_values.is_empty() {
        return Err(Error::InvalidParam {
            name: "gammas",
            reason: "damping study needs at least one damping rate".into(),
        });
    }
    if !(cfg.window > 0.0) {
        return Err(Error::InvalidParam {
            name: "window",
            reason: format!("must be > 0, got {}", cfg.window),
        });
    }
    let mut models = Vec::with_capacity(gamma_values.len());
    for &g in gamma_values {
        models.push(params.with_damping(g, g).validated()?);
    }
    let runs = exec.map(&models, |_, p| -> Result<DampingRun> {
        let samples = trajectory(p, ic, cfg.horizon, cfg.sample_dt, icfg)?;
        let times: Vec<f64> = samples.iter().map(|s| s.t).collect();
        let qx: Vec<f64> = samples.iter().map(|s| s.q_x).collect();
        let qy: Vec<f64> = samples.iter().map(|s| s.q_y).collect();
        let late_from = ic.t + 0.75 * cfg.horizon;
        let late: Vec<&SystemState> = samples.iter().filter(|s| s.t >= late_from).collect();
        let late_mean_abs_q =
            late.iter().map(|s| 0.5 * (s.q_x.abs() + s.q_y.abs())).sum::<f64>() / late.len() as f64;
        let lambda1 = match &cfg.lyapunov {
            Some(l) => Some(final_spectrum(p, ic, l, icfg)?.largest()),
            None => None,
        };
        Ok(DampingRun {
            gamma: p.gamma_x,
            envelope_x: envelope(&times, &qx, cfg.window),
            envelope_y: envelope(&times, &qy, cfg.window),
            samples,
            late_mean_abs_q,
            lambda1,
        })
    });
    runs.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_ids_are_unique_and_valid() {
        let all = catalog();
        let mut ids: Vec<&str> = all.iter().map(|p| p.id.as_str()).collect();
        let n = ids.len();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), n);
        for p in &all {
            p.params.validated().unwrap();
            match p.analysis {
                Analysis::Section => assert!(p.section.is_some()),
                _ => assert!(!p.ics.is_empty()),
            }
        }
        for fig in ["fig2", "fig3", "fig4", "fig5", "fig6", "fig9"] {
            assert!(all.iter().any(|p| p.id.starts_with(fig)));
        }
        assert_eq!(all.iter().filter(|p| p.id.starts_with("fig2")).count(), 12);
        assert_eq!(all.iter().filter(|p| p.id.starts_with("fig7-")).count(), 5);
    }

    #[test]
    fn preset_parameter_examples() {
        let e = preset("fig2e").unwrap();
        assert_eq!(e.params.g_x / e.params.omega_x, 2.1);
        assert_eq!(e.params.drive_x.amplitude, 0.0);
        assert_eq!(e.params.drive_y.amplitude, 0.0);
        assert_eq!((e.params.gamma_x, e.params.gamma_y), (0.0, 0.0));
        assert_eq!(e.params.omega_x, 0.1 * e.params.detuning);

        let a = preset("fig4a").unwrap();
        assert_eq!((a.params.drive_x.amplitude, a.params.drive_y.amplitude), (8.0, 0.0));
        let ic = a.ics[0];
        assert_eq!((ic.q_x, ic.p_x, ic.q_y, ic.p_y), (0.3, 0.0, -1.0, 0.0));

        let f = preset("fig8-3").unwrap();
        let ic = f.ics[0];
        assert_eq!((ic.q_x, ic.p_x, ic.q_y, ic.p_y), (1.0, 0.0, 1.0, 0.0));
        assert_eq!(f.params.drive_x.amplitude, 8.0);
        assert_eq!(preset("fig7a3").unwrap().id, "fig7-3");
        assert_eq!(preset("FIG7B3").unwrap().id, "fig7-3");
    }

    #[test]
    fn unknown_preset_lists_catalog() {
        match preset("fig42") {
            Err(Error::UnknownPreset { id, available }) => {
                assert_eq!(id, "fig42");
                assert!(available.contains(&"fig9b".to_string()));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn conflicting_values_are_noted() {
        assert!(!preset("fig2k").unwrap().warnings.is_empty());
        assert!(preset("fig2e").unwrap().warnings.is_empty());
        let cd = preset("fig5cd").unwrap();
        assert_eq!(cd.params.drive_x.amplitude, 50.0);
        assert!(!cd.warnings.is_empty());
        assert_eq!(preset("fig5c").unwrap().params.drive_x.amplitude, 20.0);
    }

    #[test]
    fn envelope_windows() {
        let t: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let q = [0.0, -3.0, 1.0, 0.5, 2.0, -0.1, 0.0, 0.0, 0.0, 7.0];
        let e = envelope(&t, &q, 3.0);
        assert_eq!(e.value, vec![3.0, 2.0, 0.0, 7.0]);
        assert_eq!(e.t, vec![1.0, 4.0, 6.0, 9.0]);
        assert!(envelope(&[], &[], 1.0).t.is_empty());
    }

    #[test]
    fn trajectory_starts_at_ic() {
        let ic = SystemState::at_rest(1.0, 0.0);
        let tr = trajectory(&ModelParams::harmonic(), &ic, TAU, TAU / 4.0, &IntegratorConfig::default()).unwrap();
        assert_eq!(tr.len(), 5);
        assert_eq!(tr[0], ic);
        assert!((tr[4].t - TAU).abs() < 1e-15);
        assert!((tr[1].q_x).abs() < 1e-9 && (tr[1].p_x + 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_inputs_rejected() {
        let p = ModelParams::harmonic();
        let icfg = IntegratorConfig::default();
        assert!(chaos_fraction(
            &p,
            &[],
            &SectionConfig::default(),
            &LyapunovConfig::default(),
            &icfg,
            0.02,
            Exec::Sequential
        )
        .is_err());
        assert!(damping_study(&p, &[], &SystemState::default(), &DampingConfig::default(), &icfg, Exec::Sequential).is_err());
        assert!(damping_study(&p, &[-0.1], &SystemState::default(), &DampingConfig::default(), &icfg, Exec::Sequential).is_err());
    }
}
