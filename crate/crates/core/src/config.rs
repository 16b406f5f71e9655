//! Run configuration: a JSON document naming a preset or inline parameters,
//! optional overrides, and an analysis block.
//!
//! ```json
//! {"preset": "fig2k", "override": {"drive_x": {"amplitude": 20}},
//!  "analysis": {"kind": "section", "section": {"ic_count": 12}}}
//! ```
//!
//! Partial blocks are merged over the defaults of the preset (or the library
//! defaults) before strict deserialization, so unknown keys are always
//! rejected by name.

use std::f64::consts::TAU;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::integrator::IntegratorConfig;
use crate::lyapunov::{LyapunovConfig, DEFAULT_CHAOS_THRESHOLD};
use crate::model::{ModelParams, SystemState};
use crate::poincare::{IcSampling, SectionConfig};
use crate::scenarios::{self, Analysis, DampingConfig, ScenarioPreset, TRAJECTORY_HORIZON};

/// Default drive amplitudes of a sweep.
pub const DEFAULT_SWEEP_DRIVES: [f64; 4] = [0.0, 8.0, 20.0, 50.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisKind {
    Trajectory,
    Section,
    Lyapunov,
    Sweep,
    Damping,
}

impl AnalysisKind {
    pub fn name(self) -> &'static str {
        match self {
            AnalysisKind::Trajectory => "trajectory",
            AnalysisKind::Section => "section",
            AnalysisKind::Lyapunov => "lyapunov",
            AnalysisKind::Sweep => "sweep",
            AnalysisKind::Damping => "damping",
        }
    }
}

impl From<Analysis> for AnalysisKind {
    fn from(a: Analysis) -> Self {
        match a {
            Analysis::Section => AnalysisKind::Section,
            Analysis::Trajectory => AnalysisKind::Trajectory,
            Analysis::Lyapunov => AnalysisKind::Lyapunov,
            Analysis::Damping => AnalysisKind::Damping,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnalysisSpec {
    Trajectory {
        ic: SystemState,
        horizon: f64,
        /// Output sample spacing.
        dt: f64,
    },
    Section {
        section: SectionConfig,
    },
    Lyapunov {
        ic: SystemState,
        lyapunov: LyapunovConfig,
    },
    Sweep {
        drives: Vec<f64>,
        section: SectionConfig,
        lyapunov: LyapunovConfig,
        threshold: f64,
    },
    Damping {
        ic: SystemState,
        gammas: Vec<f64>,
        damping: DampingConfig,
    },
}

impl AnalysisSpec {
    pub fn kind(&self) -> AnalysisKind {
        match self {
            AnalysisSpec::Trajectory { .. } => AnalysisKind::Trajectory,
            AnalysisSpec::Section { .. } => AnalysisKind::Section,
            AnalysisSpec::Lyapunov { .. } => AnalysisKind::Lyapunov,
            AnalysisSpec::Sweep { .. } => AnalysisKind::Sweep,
            AnalysisSpec::Damping { .. } => AnalysisKind::Damping,
        }
    }

    /// Defaults for `kind`, taking initial conditions and horizons from the
    /// preset when there is one.
    pub fn default_for(kind: AnalysisKind, preset: Option<&ScenarioPreset>, params: &ModelParams) -> Self {
        let ic = |fallback: SystemState| preset.and_then(|p| p.ics.first().copied()).unwrap_or(fallback);
        let same_kind = preset.filter(|p| AnalysisKind::from(p.analysis) == kind);
        match kind {
            AnalysisKind::Trajectory => AnalysisSpec::Trajectory {
                ic: ic(SystemState::at_rest(0.3, -1.0)),
                horizon: same_kind.map_or(TRAJECTORY_HORIZON, |p| p.horizon),
                dt: TAU / 100.0,
            },
            AnalysisKind::Section => AnalysisSpec::Section {
                section: preset.and_then(|p| p.section).unwrap_or_default(),
            },
            AnalysisKind::Lyapunov => AnalysisSpec::Lyapunov {
                ic: ic(SystemState::at_rest(-1.0, -1.0)),
                lyapunov: same_kind.map_or_else(LyapunovConfig::default, |p| LyapunovConfig::with_total(p.horizon)),
            },
            AnalysisKind::Sweep => AnalysisSpec::Sweep {
                drives: DEFAULT_SWEEP_DRIVES.to_vec(),
                section: SectionConfig {
                    ic_count: 24,
                    ..SectionConfig::default()
                },
                lyapunov: LyapunovConfig::default(),
                threshold: DEFAULT_CHAOS_THRESHOLD,
            },
            AnalysisKind::Damping => AnalysisSpec::Damping {
                ic: ic(SystemState::at_rest(0.3, -1.0)),
                gammas: same_kind
                    .map(|p| p.gammas.clone())
                    .filter(|g| !g.is_empty())
                    .unwrap_or_else(|| vec![0.01 * params.kappa, 0.1 * params.kappa]),
                damping: DampingConfig {
                    horizon: same_kind.map_or(TRAJECTORY_HORIZON, |p| p.horizon),
                    ..DampingConfig::default()
                },
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: String| Err(Error::InvalidParam { name, reason });
        match self {
            AnalysisSpec::Trajectory { ic, horizon, dt } => {
                if !ic.is_finite() {
                    return bad("ic", "must be finite".into());
                }
                if !(*dt > 0.0 && dt.is_finite()) {
                    return bad("dt", format!("must be finite and > 0, got {dt}"));
                }
                if !(*horizon >= *dt && horizon.is_finite()) {
                    return bad("horizon", format!("must be finite and >= dt, got {horizon}"));
                }
            }
            AnalysisSpec::Section { section } => section.validate()?,
            AnalysisSpec::Lyapunov { ic, lyapunov } => {
                if !ic.is_finite() {
                    return bad("ic", "must be finite".into());
                }
                lyapunov.validate()?;
            }
            AnalysisSpec::Sweep {
                drives,
                section,
                lyapunov,
                threshold,
            } => {
                if drives.is_empty() {
                    return bad("drives", "needs at least one value".into());
                }
                if let Some(d) = drives.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
                    return bad("drives", format!("amplitudes must be finite and >= 0, got {d}"));
                }
                if !threshold.is_finite() {
                    return bad("threshold", "must be finite".into());
                }
                section.validate()?;
                lyapunov.validate()?;
            }
            AnalysisSpec::Damping { ic, gammas, damping } => {
                if !ic.is_finite() {
                    return bad("ic", "must be finite".into());
                }
                if gammas.is_empty() {
                    return bad("gammas", "needs at least one value".into());
                }
                if let Some(g) = gammas.iter().find(|g| !(**g >= 0.0 && g.is_finite())) {
                    return bad("gammas", format!("damping rates must be finite and >= 0, got {g}"));
                }
                if !(damping.sample_dt > 0.0 && damping.horizon >= damping.sample_dt) {
                    return bad("damping", "need horizon >= sample_dt > 0".into());
                }
                if !(damping.window > 0.0) {
                    return bad("window", format!("must be > 0, got {}", damping.window));
                }
                if let Some(l) = &damping.lyapunov {
                    l.validate()?;
                }
            }
        }
        Ok(())
    }
}

/// Fully resolved, replayable run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRequest {
    #[serde(default)]
    pub preset: Option<String>,
    pub params: ModelParams,
    pub analysis: AnalysisSpec,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl RunRequest {
    pub fn validate(&self) -> Result<()> {
        self.params.validated()?;
        self.integrator.validate()?;
        self.analysis.validate()
    }

    /// Request for a preset with its own analysis and defaults.
    pub fn from_preset(id: &str) -> Result<Self> {
        let p = scenarios::preset(id)?;
        let analysis = AnalysisSpec::default_for(p.analysis.into(), Some(&p), &p.params);
        Ok(Self {
            preset: Some(p.id.clone()),
            params: p.params,
            analysis,
            integrator: IntegratorConfig::default(),
            warnings: p.warnings.clone(),
        })
    }

    /// Replaces the run length of whatever analysis is configured.
    pub fn set_horizon(&mut self, horizon: f64) {
        match &mut self.analysis {
            AnalysisSpec::Trajectory { horizon: h, .. } => *h = horizon,
            AnalysisSpec::Section { section } => section.horizon = horizon,
            AnalysisSpec::Lyapunov { lyapunov, .. } | AnalysisSpec::Sweep { lyapunov, .. } => {
                lyapunov.t_total = horizon
            }
            AnalysisSpec::Damping { damping, .. } => damping.horizon = horizon,
        }
    }

    /// Adaptive tolerances: relative `tol`, absolute `tol/100`.
    pub fn set_tolerance(&mut self, tol: f64) {
        self.integrator.rel_tol = tol;
        self.integrator.abs_tol = tol * 1e-2;
    }

    /// Switches section initial conditions to seeded Gaussian sampling.
    pub fn set_seed(&mut self, seed: u64) -> Result<()> {
        match &mut self.analysis {
            AnalysisSpec::Section { section } | AnalysisSpec::Sweep { section, .. } => {
                section.sampling = IcSampling::Gaussian { seed };
                Ok(())
            }
            other => Err(Error::Config(format!(
                "--seed selects Gaussian initial conditions and only applies to section and sweep runs, not {}",
                other.kind().name()
            ))),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    preset: Option<String>,
    #[serde(default)]
    params: Option<Map<String, Value>>,
    #[serde(default, rename = "override")]
    overrides: Option<Map<String, Value>>,
    #[serde(default)]
    analysis: Option<Map<String, Value>>,
    #[serde(default)]
    integrator: Option<Map<String, Value>>,
}

fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

fn strict<T: DeserializeOwned>(block: &str, v: Value) -> Result<T> {
    serde_json::from_value(v).map_err(|e| Error::Config(format!("{block}: {e}")))
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("config types serialize to JSON")
}

/// Parses and resolves a configuration. `kind` forces the analysis kind (as
/// the CLI subcommands do); a conflicting `analysis.kind` is an error.
pub fn parse_config(text: &str, kind: Option<AnalysisKind>) -> Result<RunRequest> {
    let file: ConfigFile =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;

    let preset = match &file.preset {
        Some(id) => Some(scenarios::preset(id)?),
        None => None,
    };
    let mut params_value = match (&preset, &file.params) {
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "config: give either `preset` or `params`, not both (use `override` to adjust a preset)".into(),
            ))
        }
        (Some(p), None) => to_value(&p.params),
        (None, Some(inline)) => Value::Object(inline.clone()),
        (None, None) => {
            return Err(Error::Config(
                "config: one of `preset` or `params` is required".into(),
            ))
        }
    };
    if let Some(o) = &file.overrides {
        merge(&mut params_value, &Value::Object(o.clone()));
    }
    let params: ModelParams = strict("params", params_value)?;

    let requested = match file.analysis.as_ref().and_then(|a| a.get("kind")) {
        None => None,
        Some(v) => Some(strict::<AnalysisKind>("analysis.kind", v.clone())?),
    };
    let kind = match (kind, requested) {
        (Some(k), Some(r)) if k != r => {
            return Err(Error::Config(format!(
                "analysis.kind is `{}` but the command runs `{}`",
                r.name(),
                k.name()
            )))
        }
        (Some(k), _) | (None, Some(k)) => k,
        (None, None) => match &preset {
            Some(p) => p.analysis.into(),
            None => {
                return Err(Error::Config(
                    "config: `analysis.kind` is required without a preset".into(),
                ))
            }
        },
    };
    let mut analysis_value = to_value(&AnalysisSpec::default_for(kind, preset.as_ref(), &params));
    if let Some(a) = &file.analysis {
        merge(&mut analysis_value, &Value::Object(a.clone()));
    }
    let analysis: AnalysisSpec = strict("analysis", analysis_value)?;

    let mut integrator_value = to_value(&IntegratorConfig::default());
    if let Some(i) = &file.integrator {
        merge(&mut integrator_value, &Value::Object(i.clone()));
    }
    let integrator: IntegratorConfig = strict("integrator", integrator_value)?;

    let req = RunRequest {
        preset: preset.as_ref().map(|p| p.id.clone()),
        params,
        analysis,
        integrator,
        warnings: preset.map(|p| p.warnings).unwrap_or_default(),
    };
    req.validate()?;
    Ok(req)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config_message(r: Result<RunRequest>) -> String {
        match r {
            Err(Error::Config(m)) => m,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn preset_lookup() {
        let r = parse_config(r#"{"preset":"fig2k"}"#, None).unwrap();
        assert_eq!(r.preset.as_deref(), Some("fig2k"));
        assert_eq!(r.params, scenarios::preset("fig2k").unwrap().params);
        assert_eq!(r.analysis.kind(), AnalysisKind::Section);
        assert!(!r.warnings.is_empty());
    }

    #[test]
    fn override_changes_only_the_named_field() {
        let r = parse_config(
            r#"{"preset":"fig2k","override":{"drive_x":{"amplitude":20}}}"#,
            None,
        )
        .unwrap();
        let base = scenarios::preset("fig2k").unwrap().params;
        assert_eq!(r.params.drive_x.amplitude, 20.0);
        assert_eq!(r.params.drive_x.frequency, base.drive_x.frequency);
        assert_eq!(r.params.drive_y, base.drive_y);
        // echoing the resolved config shows the override
        let echoed = serde_json::to_value(&r).unwrap();
        assert_eq!(echoed["params"]["drive_x"]["amplitude"], 20.0);
    }

    #[test]
    fn missing_inline_key_is_named() {
        let m = config_message(parse_config(
            r#"{"params":{"omega_x":1,"omega_y":1,"g_x":2.1,"g_y":2.1,"detuning":10,"pump":14},
                "analysis":{"kind":"trajectory"}}"#,
            None,
        ));
        assert!(m.contains("kappa"), "{m}");
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        for (text, key) in [
            (r#"{"preset":"fig2k","colour":1}"#, "colour"),
            (r#"{"preset":"fig2k","override":{"kapa":3}}"#, "kapa"),
            (r#"{"preset":"fig2k","analysis":{"section":{"ic_cnt":3}}}"#, "ic_cnt"),
            (r#"{"preset":"fig2k","integrator":{"rtol":1e-3}}"#, "rtol"),
        ] {
            let m = config_message(parse_config(text, None));
            assert!(m.contains(key), "{m}");
        }
    }

    #[test]
    fn syntax_errors_carry_position() {
        let m = config_message(parse_config("{\n  \"preset\": \"fig2k\",\n}", None));
        assert!(m.contains("line 3"), "{m}");
    }

    #[test]
    fn kind_resolution() {
        let r = parse_config(r#"{"preset":"fig7-3"}"#, Some(AnalysisKind::Trajectory)).unwrap();
        match r.analysis {
            AnalysisSpec::Trajectory { ic, horizon, .. } => {
                assert_eq!((ic.q_x, ic.q_y), (-1.0, -1.0));
                assert_eq!(horizon, TRAJECTORY_HORIZON);
            }
            other => panic!("{other:?}"),
        }
        let r = parse_config(r#"{"preset":"fig7-3"}"#, None).unwrap();
        match r.analysis {
            AnalysisSpec::Lyapunov { lyapunov, .. } => assert_eq!(lyapunov.t_total, 1e4),
            other => panic!("{other:?}"),
        }
        let m = config_message(parse_config(
            r#"{"preset":"fig7-3","analysis":{"kind":"section"}}"#,
            Some(AnalysisKind::Lyapunov),
        ));
        assert!(m.contains("section"), "{m}");
        assert!(parse_config(r#"{"preset":"fig7-3","params":{}}"#, None).is_err());
        assert!(parse_config(r#"{}"#, None).is_err());
    }

    #[test]
    fn invalid_values_are_config_class() {
        let e = parse_config(r#"{"preset":"fig2k","override":{"kappa":0}}"#, None).unwrap_err();
        assert_eq!(e.class(), crate::ErrorClass::Config);
        let e = parse_config(
            r#"{"preset":"fig7-3","analysis":{"lyapunov":{"t_total":10}}}"#,
            None,
        )
        .unwrap_err();
        assert_eq!(e.class(), crate::ErrorClass::Config);
    }

    #[test]
    fn resolved_request_round_trips() {
        let r = parse_config(
            r#"{"preset":"fig9","analysis":{"damping":{"horizon":50}}}"#,
            None,
        )
        .unwrap();
        let text = serde_json::to_string(&r).unwrap();
        let back: RunRequest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn flag_overrides() {
        let mut r = RunRequest::from_preset("fig2k").unwrap();
        r.set_horizon(100.0);
        r.set_tolerance(1e-8);
        r.set_seed(3).unwrap();
        match r.analysis {
            AnalysisSpec::Section { section } => {
                assert_eq!(section.horizon, 100.0);
                assert_eq!(section.sampling, IcSampling::Gaussian { seed: 3 });
            }
            other => panic!("{other:?}"),
        }
        assert_eq!((r.integrator.rel_tol, r.integrator.abs_tol), (1e-8, 1e-10));
        let mut l = RunRequest::from_preset("fig7-3").unwrap();
        assert!(l.set_seed(1).is_err());
    }
}
