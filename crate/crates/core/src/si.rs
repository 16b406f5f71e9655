//! Conversion from laboratory (SI) parameters to the dimensionless model.
//!
//! Frequencies and rates are divided by the mirror frequency ω_m, so the
//! mirror frequency itself becomes 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DriveParams, ModelParams, DEFAULT_DRIVE_FREQUENCY};
use crate::scenarios::STRONG_COUPLING;

/// Reduced Planck constant, J·s (exact SI value).
pub const HBAR: f64 = 1.054_571_817e-34;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SIParams {
    /// m
    pub cavity_length: f64,
    /// kg
    pub mirror_mass: f64,
    /// W
    pub pump_power: f64,
    /// rad/s
    pub pump_frequency: f64,
    /// rad/s
    pub cavity_frequency: f64,
    /// rad/s
    pub kappa: f64,
    /// rad/s
    pub mirror_frequency: f64,
    /// N
    #[serde(default)]
    pub drive_amplitude_x: f64,
    /// N
    #[serde(default)]
    pub drive_amplitude_y: f64,
    /// Mirror damping, rad/s.
    #[serde(default)]
    pub gamma: f64,
}

impl SIParams {
    /// Laboratory values for the four-mirror setup. The cavity resonance is
    /// set equal to the pump frequency, κ uses the 1.3·2π MHz figure, and the
    /// mirror mass (not quoted anywhere) is taken as 1e-12 kg.
    pub fn reference() -> Self {
        let tau = std::f64::consts::TAU;
        Self {
            cavity_length: 1.25e-4,
            mirror_mass: 1e-12,
            pump_power: 0.0164e-3,
            pump_frequency: tau * 3.8e14,
            cavity_frequency: tau * 3.8e14,
            kappa: tau * 1.3e6,
            mirror_frequency: tau * 15.2e3,
            drive_amplitude_x: 0.0,
            drive_amplitude_y: 0.0,
            gamma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cavity_length", self.cavity_length),
            ("mirror_mass", self.mirror_mass),
            ("pump_frequency", self.pump_frequency),
            ("cavity_frequency", self.cavity_frequency),
            ("kappa", self.kappa),
            ("mirror_frequency", self.mirror_frequency),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam {
                    name,
                    reason: format!("must be finite and > 0, got {v}"),
                });
            }
        }
        let non_negative = [
            ("pump_power", self.pump_power),
            ("drive_amplitude_x", self.drive_amplitude_x),
            ("drive_amplitude_y", self.drive_amplitude_y),
            ("gamma", self.gamma),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam {
                    name,
                    reason: format!("must be finite and >= 0, got {v}"),
                });
            }
        }
        Ok(())
    }
}

/// Dimensionless parameters plus the intermediate SI quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SIConversion {
    pub params: ModelParams,
    /// Zero-point amplitude √(ħ/2mω_m), m.
    pub x_zpf: f64,
    /// √2 (ω_c/L) x_zpf, rad/s.
    pub coupling_si: f64,
    /// √(Pκ/ħω_E), 1/s.
    pub pump_si: f64,
    /// α_j √(ħ/(ω_m m)), J.
    pub drive_energy_si: [f64; 2],
    pub warnings: Vec<String>,
}

pub fn zero_point_amplitude(mass: f64, omega: f64) -> f64 {
    (HBAR / (2.0 * mass * omega)).sqrt()
}

pub fn si_to_dimensionless(si: &SIParams) -> Result<SIConversion> {
    si.validate()?;
    let wm = si.mirror_frequency;
    let x_zpf = zero_point_amplitude(si.mirror_mass, wm);
    let coupling_si = std::f64::consts::SQRT_2 * si.cavity_frequency / si.cavity_length * x_zpf;
    let pump_si = (si.pump_power * si.kappa / (HBAR * si.pump_frequency)).sqrt();
    let length_scale = (HBAR / (wm * si.mirror_mass)).sqrt();
    let drive_energy_si = [
        si.drive_amplitude_x * length_scale,
        si.drive_amplitude_y * length_scale,
    ];
    let s = drive_energy_si.map(|e| e / (HBAR * wm));

    let g = coupling_si / wm;
    let params = ModelParams {
        omega_x: 1.0,
        omega_y: 1.0,
        g_x: g,
        g_y: g,
        detuning: (si.pump_frequency - si.cavity_frequency) / wm,
        kappa: si.kappa / wm,
        pump: pump_si / wm,
        gamma_x: si.gamma / wm,
        gamma_y: si.gamma / wm,
        drive_x: DriveParams::new(s[0], DEFAULT_DRIVE_FREQUENCY, 0.0),
        drive_y: DriveParams::new(s[1], DEFAULT_DRIVE_FREQUENCY, 0.0),
    }
    .validated()?;

    let mut warnings = Vec::new();
    if !(0.5..=2.0).contains(&(g / STRONG_COUPLING)) {
        warnings.push(format!(
            "derived G/ω = {g:.4e} is far from the preset coupling {STRONG_COUPLING}; \
             the SI table does not reproduce the dimensionless presets"
        ));
    }
    let preset = ModelParams::preset_base(STRONG_COUPLING);
    if !(0.5..=2.0).contains(&(params.kappa / preset.kappa)) {
        warnings.push(format!(
            "derived κ/ω = {:.4e} differs from the preset κ/ω = {}",
            params.kappa, preset.kappa
        ));
    }
    if !(0.5..=2.0).contains(&(params.pump / preset.pump)) {
        warnings.push(format!(
            "derived η/ω = {:.4e} differs from the preset η/ω = {}",
            params.pump, preset.pump
        ));
    }
    for (name, v) in [("S_x", s[0]), ("S_y", s[1])] {
        if v > 0.0 && !(0.5..=100.0).contains(&v) {
            warnings.push(format!(
                "derived {name} = {v:.4e} is outside the dimensionless drive range 0.5..100 used by the presets"
            ));
        }
    }
    if params.detuning == 0.0 {
        warnings.push(
            "pump and cavity frequencies are equal, so Δ_c = 0; presets use Δ_c = 10 ω".to_string(),
        );
    }
    Ok(SIConversion {
        params,
        x_zpf,
        coupling_si,
        pump_si,
        drive_energy_si,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    #[test]
    fn zero_point_amplitude_value() {
        // 1.054571817e-34 / (2 · 1e-12 · 2π·15.2e3) = 5.5211e-28 m², root 2.3497e-14 m
        let x = zero_point_amplitude(1e-12, TAU * 15.2e3);
        assert!((x - 2.349_694e-14).abs() < 1e-19, "{x:e}");
    }

    #[test]
    fn pump_rate_value_and_scaling() {
        let si = SIParams::reference();
        let c = si_to_dimensionless(&si).unwrap();
        // P κ / (ħ ω_E) = 1.64e-5 · 1.3e6 / (1.054571817e-34 · 3.8e14)
        let want = (1.64e-5 * 1.3e6 / (1.054_571_817e-34 * 3.8e14) as f64).sqrt();
        assert!((c.pump_si / want - 1.0).abs() < 1e-12);
        assert!((c.pump_si - 2.30655e10).abs() < 1e6);

        let doubled = si_to_dimensionless(&SIParams {
            pump_power: 2.0 * si.pump_power,
            ..si
        })
        .unwrap();
        assert!((doubled.pump_si / c.pump_si - std::f64::consts::SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn reference_set_warns() {
        let c = si_to_dimensionless(&SIParams {
            drive_amplitude_x: 8e-3,
            ..SIParams::reference()
        })
        .unwrap();
        assert_eq!(c.params.omega_x, 1.0);
        assert!((c.params.kappa - 1.3e6 / 15.2e3).abs() < 1e-9);
        assert!(c.warnings.len() >= 2, "{:?}", c.warnings);
        assert!(c.warnings.iter().any(|w| w.contains("S_x")));
    }

    #[test]
    fn rejects_nonpositive_inputs() {
        for bad in [
            SIParams { mirror_mass: 0.0, ..SIParams::reference() },
            SIParams { kappa: -1.0, ..SIParams::reference() },
            SIParams { pump_power: -1e-3, ..SIParams::reference() },
            SIParams { cavity_length: f64::NAN, ..SIParams::reference() },
        ] {
            assert!(matches!(si_to_dimensionless(&bad), Err(Error::InvalidParam { .. })));
        }
    }
}
