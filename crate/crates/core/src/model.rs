//! Semiclassical model of the two driven end mirrors.
//!
//! Everything is dimensionless: frequencies and rates are in units of the
//! x-mirror frequency and time is in units of its inverse. The cavity field
//! is eliminated adiabatically by default, so the mirrors feel the
//! instantaneous steady-state intensity
//!
//! ```text
//! I(q) = η² / (κ² + D²),   D = Δ_c + G_x q_x + G_y q_y
//! ```
//!
//! and obey
//!
//! ```text
//! dq_j/dt = ω_j p_j
//! dp_j/dt = −ω_j q_j + G_j I(q) + S_j cos(δ_j t + φ_j) − γ_j p_j
//! ```
//!
//! The full six-dimensional flow that keeps the cavity amplitude as a
//! dynamical variable is provided as a cross-check for the elimination.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default drive frequency. Integer values keep the 2π strobe an exact
/// multiple of the drive period.
pub const DEFAULT_DRIVE_FREQUENCY: f64 = 3.0;

/// External mechanical drive `S cos(δ t + φ)` acting on one mirror.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveParams {
    pub amplitude: f64,
    #[serde(default = "default_frequency")]
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

fn default_frequency() -> f64 {
    DEFAULT_DRIVE_FREQUENCY
}

impl DriveParams {
    pub fn new(amplitude: f64, frequency: f64, phase: f64) -> Self {
        Self {
            amplitude,
            frequency,
            phase: reduce_phase(phase),
        }
    }

    /// Drive with zero amplitude at the default frequency.
    pub fn off() -> Self {
        Self::new(0.0, DEFAULT_DRIVE_FREQUENCY, 0.0)
    }

    /// Drive of amplitude `amplitude` at the default frequency and zero phase.
    pub fn with_amplitude(amplitude: f64) -> Self {
        Self::new(amplitude, DEFAULT_DRIVE_FREQUENCY, 0.0)
    }

    #[inline]
    pub fn force(&self, t: f64) -> f64 {
        self.amplitude * (self.frequency * t + self.phase).cos()
    }

    /// Period of the drive, `2π/δ`.
    pub fn period(&self) -> f64 {
        TAU / self.frequency
    }
}

impl Default for DriveParams {
    fn default() -> Self {
        Self::off()
    }
}

fn reduce_phase(phase: f64) -> f64 {
    let r = phase.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Dimensionless dynamical coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub omega_x: f64,
    pub omega_y: f64,
    pub g_x: f64,
    pub g_y: f64,
    pub detuning: f64,
    pub kappa: f64,
    pub pump: f64,
    #[serde(default)]
    pub gamma_x: f64,
    #[serde(default)]
    pub gamma_y: f64,
    #[serde(default)]
    pub drive_x: DriveParams,
    #[serde(default)]
    pub drive_y: DriveParams,
}

impl ModelParams {
    /// Two bare unit-frequency oscillators: no coupling, pump, damping or drive.
    /// `κ = 1` keeps the parameter set valid.
    pub fn harmonic() -> Self {
        Self {
            omega_x: 1.0,
            omega_y: 1.0,
            g_x: 0.0,
            g_y: 0.0,
            detuning: 0.0,
            kappa: 1.0,
            pump: 0.0,
            gamma_x: 0.0,
            gamma_y: 0.0,
            drive_x: DriveParams::off(),
            drive_y: DriveParams::off(),
        }
    }

    /// Base set shared by the presets: `ω_x = ω_y = 1`, `Δ_c = 10 ω`, `κ = 4`,
    /// `η = 14`, couplings `G/ω` as given, no drive and no damping.
    pub fn preset_base(coupling: f64) -> Self {
        Self {
            omega_x: 1.0,
            omega_y: 1.0,
            g_x: coupling,
            g_y: coupling,
            detuning: 10.0,
            kappa: 4.0,
            pump: 14.0,
            gamma_x: 0.0,
            gamma_y: 0.0,
            drive_x: DriveParams::off(),
            drive_y: DriveParams::off(),
        }
    }

    pub fn with_drives(mut self, s_x: f64, s_y: f64) -> Self {
        self.drive_x.amplitude = s_x;
        self.drive_y.amplitude = s_y;
        self
    }

    pub fn with_damping(mut self, gamma_x: f64, gamma_y: f64) -> Self {
        self.gamma_x = gamma_x;
        self.gamma_y = gamma_y;
        self
    }

    /// Checks the parameter invariants and returns a copy with drive phases
    /// reduced to `[0, 2π)`.
    pub fn validated(mut self) -> Result<Self> {
        fn check(name: &'static str, v: f64, ok: bool, rule: &str) -> Result<()> {
            if !v.is_finite() {
                return Err(Error::InvalidParam {
                    name,
                    reason: format!("must be finite, got {v}"),
                });
            }
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidParam {
                    name,
                    reason: format!("must be {rule}, got {v}"),
                })
            }
        }
        check("omega_x", self.omega_x, self.omega_x > 0.0, "> 0")?;
        check("omega_y", self.omega_y, self.omega_y > 0.0, "> 0")?;
        check("g_x", self.g_x, self.g_x >= 0.0, ">= 0")?;
        check("g_y", self.g_y, self.g_y >= 0.0, ">= 0")?;
        check("detuning", self.detuning, true, "")?;
        check("kappa", self.kappa, self.kappa > 0.0, "> 0")?;
        check("pump", self.pump, self.pump >= 0.0, ">= 0")?;
        check("gamma_x", self.gamma_x, self.gamma_x >= 0.0, ">= 0")?;
        check("gamma_y", self.gamma_y, self.gamma_y >= 0.0, ">= 0")?;
        for (amp, freq, phase, drive) in [
            (
                "drive_x.amplitude",
                "drive_x.frequency",
                "drive_x.phase",
                &mut self.drive_x,
            ),
            (
                "drive_y.amplitude",
                "drive_y.frequency",
                "drive_y.phase",
                &mut self.drive_y,
            ),
        ] {
            check(amp, drive.amplitude, drive.amplitude >= 0.0, ">= 0")?;
            check(freq, drive.frequency, drive.frequency > 0.0, "> 0")?;
            check(phase, drive.phase, true, "")?;
            drive.phase = reduce_phase(drive.phase);
        }
        Ok(self)
    }

    /// True when swapping the mirror labels leaves the parameters unchanged.
    pub fn is_exchange_symmetric(&self) -> bool {
        self.omega_x == self.omega_y
            && self.g_x == self.g_y
            && self.gamma_x == self.gamma_y
            && self.drive_x == self.drive_y
    }

    /// Parameters with the mirror labels exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            omega_x: self.omega_y,
            omega_y: self.omega_x,
            g_x: self.g_y,
            g_y: self.g_x,
            gamma_x: self.gamma_y,
            gamma_y: self.gamma_x,
            drive_x: self.drive_y,
            drive_y: self.drive_x,
            ..*self
        }
    }

    #[inline]
    fn shift(&self, q_x: f64, q_y: f64) -> f64 {
        self.detuning + self.g_x * q_x + self.g_y * q_y
    }

    /// Right-hand side of the adiabatic flow on a raw `[q_x, p_x, q_y, p_y]`.
    #[inline]
    pub fn rhs(&self, t: f64, y: &[f64; 4], dy: &mut [f64; 4]) {
        let i = intensity(self, y[0], y[2]);
        dy[0] = self.omega_x * y[1];
        dy[1] = -self.omega_x * y[0] + self.g_x * i + self.drive_x.force(t) - self.gamma_x * y[1];
        dy[2] = self.omega_y * y[3];
        dy[3] = -self.omega_y * y[2] + self.g_y * i + self.drive_y.force(t) - self.gamma_y * y[3];
    }

    /// Right-hand side of the full flow on `[re_c, im_c, q_x, p_x, q_y, p_y]`.
    #[inline]
    pub fn full_rhs(&self, t: f64, y: &[f64; 6], dy: &mut [f64; 6]) {
        let (re, im) = (y[0], y[1]);
        let d = self.shift(y[2], y[4]);
        let n = re * re + im * im;
        dy[0] = -self.kappa * re - d * im + self.pump;
        dy[1] = d * re - self.kappa * im;
        dy[2] = self.omega_x * y[3];
        dy[3] = -self.omega_x * y[2] + self.g_x * n + self.drive_x.force(t) - self.gamma_x * y[3];
        dy[4] = self.omega_y * y[5];
        dy[5] = -self.omega_y * y[4] + self.g_y * n + self.drive_y.force(t) - self.gamma_y * y[5];
    }
}

/// Mirror positions and momenta at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemState {
    pub t: f64,
    pub q_x: f64,
    pub p_x: f64,
    pub q_y: f64,
    pub p_y: f64,
}

impl SystemState {
    pub fn new(t: f64, q_x: f64, p_x: f64, q_y: f64, p_y: f64) -> Self {
        Self {
            t,
            q_x,
            p_x,
            q_y,
            p_y,
        }
    }

    /// Both mirrors at rest at their own positions, `t = 0`.
    pub fn at_rest(q_x: f64, q_y: f64) -> Self {
        Self::new(0.0, q_x, 0.0, q_y, 0.0)
    }

    pub fn from_array(t: f64, y: [f64; 4]) -> Self {
        Self::new(t, y[0], y[1], y[2], y[3])
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.q_x, self.p_x, self.q_y, self.p_y]
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn swapped(&self) -> Self {
        Self::new(self.t, self.q_y, self.p_y, self.q_x, self.p_x)
    }
}

/// Classical intracavity amplitude `c = re_c + i·im_c`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CavityState {
    pub re_c: f64,
    pub im_c: f64,
}

impl CavityState {
    pub fn intensity(&self) -> f64 {
        self.re_c * self.re_c + self.im_c * self.im_c
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowDerivative {
    pub dq_x: f64,
    pub dp_x: f64,
    pub dq_y: f64,
    pub dp_y: f64,
    /// `(d re_c/dt, d im_c/dt)`, present only for the full model.
    pub cavity: Option<[f64; 2]>,
}

impl FlowDerivative {
    pub fn to_array(&self) -> [f64; 4] {
        [self.dq_x, self.dp_x, self.dq_y, self.dp_y]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
            && self
                .cavity
                .map_or(true, |c| c.iter().all(|v| v.is_finite()))
    }
}

/// Steady state of the linear cavity equation at frozen mirror positions,
/// `c_s = η / (κ − i D)`.
pub fn steady_state_field(params: &ModelParams, q_x: f64, q_y: f64) -> CavityState {
    let d = params.shift(q_x, q_y);
    let den = params.kappa * params.kappa + d * d;
    // η (κ + iD) / (κ² + D²)
    CavityState {
        re_c: params.pump * params.kappa / den,
        im_c: params.pump * d / den,
    }
}

/// Steady-state photon number `η² / (κ² + D²)`.
#[inline]
pub fn intensity(params: &ModelParams, q_x: f64, q_y: f64) -> f64 {
    let d = params.shift(q_x, q_y);
    params.pump * params.pump / (params.kappa * params.kappa + d * d)
}

pub fn flow_field(t: f64, s: &SystemState, params: &ModelParams) -> FlowDerivative {
    let mut dy = [0.0; 4];
    params.rhs(t, &s.to_array(), &mut dy);
    FlowDerivative {
        dq_x: dy[0],
        dp_x: dy[1],
        dq_y: dy[2],
        dp_y: dy[3],
        cavity: None,
    }
}

/// Analytic Jacobian of the adiabatic flow with respect to
/// `(q_x, p_x, q_y, p_y)`. Rows are derivatives, columns are variables.
#[inline]
pub fn jacobian(_t: f64, s: &SystemState, params: &ModelParams) -> [[f64; 4]; 4] {
    jacobian_at(params, s.q_x, s.q_y)
}

#[inline]
pub(crate) fn jacobian_at(params: &ModelParams, q_x: f64, q_y: f64) -> [[f64; 4]; 4] {
    let d = params.shift(q_x, q_y);
    let den = params.kappa * params.kappa + d * d;
    // ∂I/∂q_i = −2 η² D G_i / den²
    let c = -2.0 * params.pump * params.pump * d / (den * den);
    let (gx, gy) = (params.g_x, params.g_y);
    [
        [0.0, params.omega_x, 0.0, 0.0],
        [-params.omega_x + c * gx * gx, -params.gamma_x, c * gx * gy, 0.0],
        [0.0, 0.0, 0.0, params.omega_y],
        [c * gy * gx, 0.0, -params.omega_y + c * gy * gy, -params.gamma_y],
    ]
}

/// Potential whose negative gradient is the conservative part of the force:
///
/// ```text
/// V = Σ_j [ω_j q_j²/2 − S_j q_j cos(δ_j t + φ_j)] − (η²/κ) arctan(D/κ)
/// ```
pub fn effective_potential(q_x: f64, q_y: f64, t: f64, params: &ModelParams) -> f64 {
    let d = params.shift(q_x, q_y);
    0.5 * params.omega_x * q_x * q_x - q_x * params.drive_x.force(t)
        + 0.5 * params.omega_y * q_y * q_y
        - q_y * params.drive_y.force(t)
        - params.pump * params.pump / params.kappa * (d / params.kappa).atan()
}

/// `H_eff = Σ_j ω_j p_j²/2 + V`, evaluated at the state's own time.
pub fn total_energy(s: &SystemState, params: &ModelParams) -> f64 {
    0.5 * params.omega_x * s.p_x * s.p_x
        + 0.5 * params.omega_y * s.p_y * s.p_y
        + effective_potential(s.q_x, s.q_y, s.t, params)
}

pub fn full_flow_field(
    t: f64,
    s: &SystemState,
    c: &CavityState,
    params: &ModelParams,
) -> FlowDerivative {
    let y = [c.re_c, c.im_c, s.q_x, s.p_x, s.q_y, s.p_y];
    let mut dy = [0.0; 6];
    params.full_rhs(t, &y, &mut dy);
    FlowDerivative {
        dq_x: dy[2],
        dp_x: dy[3],
        dq_y: dy[4],
        dp_y: dy[5],
        cavity: Some([dy[0], dy[1]]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(rng: &mut ChaCha8Rng) -> ModelParams {
        ModelParams {
            omega_x: rng.random_range(0.5..2.0),
            omega_y: rng.random_range(0.5..2.0),
            g_x: rng.random_range(0.0..3.0),
            g_y: rng.random_range(0.0..3.0),
            detuning: rng.random_range(-10.0..10.0),
            kappa: rng.random_range(0.5..5.0),
            pump: rng.random_range(0.0..20.0),
            gamma_x: rng.random_range(0.0..0.5),
            gamma_y: rng.random_range(0.0..0.5),
            drive_x: DriveParams::new(
                rng.random_range(0.0..20.0),
                rng.random_range(0.5..4.0),
                rng.random_range(-7.0..7.0),
            ),
            drive_y: DriveParams::new(
                rng.random_range(0.0..20.0),
                rng.random_range(0.5..4.0),
                rng.random_range(-7.0..7.0),
            ),
        }
    }

    fn random_state(rng: &mut ChaCha8Rng) -> SystemState {
        SystemState::new(
            rng.random_range(0.0..100.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
        )
    }

    #[test]
    fn steady_state_zero_pump() {
        let p = ModelParams::preset_base(2.1);
        let p = ModelParams { pump: 0.0, ..p };
        let c = steady_state_field(&p, 1.3, -0.4);
        assert_eq!((c.re_c, c.im_c), (0.0, 0.0));
    }

    #[test]
    fn steady_state_real_denominator() {
        let p = ModelParams {
            pump: 1.0,
            ..ModelParams::harmonic()
        };
        let c = steady_state_field(&p, 0.7, 0.2);
        assert_eq!((c.re_c, c.im_c), (1.0, 0.0));
    }

    #[test]
    fn steady_state_complex_division() {
        let p = ModelParams {
            detuning: 2.0,
            g_x: 1.0,
            g_y: 1.0,
            pump: 1.0,
            ..ModelParams::harmonic()
        };
        // 1/(1 − 4i) = (1 + 4i)/17
        let c = steady_state_field(&p, 1.0, 1.0);
        assert!((c.re_c - 1.0 / 17.0).abs() < 1e-15);
        assert!((c.im_c - 4.0 / 17.0).abs() < 1e-15);
        assert!((intensity(&p, 1.0, 1.0) - 1.0 / 17.0).abs() < 1e-15);
    }

    #[test]
    fn intensity_on_resonance() {
        let p = ModelParams {
            pump: 2.0,
            ..ModelParams::harmonic()
        };
        assert_eq!(intensity(&p, 0.0, 0.0), 4.0);
    }

    #[test]
    fn intensity_matches_field_magnitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let p = random_params(&mut rng);
            let s = random_state(&mut rng);
            let c = steady_state_field(&p, s.q_x, s.q_y);
            let i = intensity(&p, s.q_x, s.q_y);
            assert!((c.intensity() - i).abs() < 1e-14 * i.max(1.0));
        }
    }

    #[test]
    fn flow_harmonic_oscillator() {
        let p = ModelParams::harmonic();
        let f = flow_field(0.0, &SystemState::new(0.0, 1.0, 0.0, 0.0, 0.0), &p);
        assert_eq!((f.dq_x, f.dp_x), (0.0, -1.0));
    }

    #[test]
    fn flow_pure_drive_at_origin() {
        let p = ModelParams {
            drive_x: DriveParams::new(2.0, 1.0, 0.0),
            ..ModelParams::harmonic()
        };
        let f = flow_field(0.0, &SystemState::default(), &p);
        assert_eq!(f.dp_x, 2.0);
    }

    #[test]
    fn flow_radiation_term() {
        let p = ModelParams {
            g_x: 1.0,
            pump: 1.0,
            ..ModelParams::harmonic()
        };
        let f = flow_field(0.0, &SystemState::default(), &p);
        assert_eq!(f.dp_x, 1.0);
        assert_eq!(f.dp_y, 0.0);
    }

    #[test]
    fn flow_position_derivative_is_structural() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let p = random_params(&mut rng);
            let s = random_state(&mut rng);
            let f = flow_field(s.t, &s, &p);
            assert_eq!(f.dq_x, p.omega_x * s.p_x);
            assert_eq!(f.dq_y, p.omega_y * s.p_y);
        }
    }

    #[test]
    fn jacobian_uncoupled_blocks() {
        let p = ModelParams {
            omega_x: 1.3,
            gamma_x: 0.2,
            gamma_y: 0.05,
            ..ModelParams::harmonic()
        };
        let j = jacobian(0.0, &SystemState::new(0.0, 0.3, 0.1, -0.2, 0.4), &p);
        let expect = [
            [0.0, 1.3, 0.0, 0.0],
            [-1.3, -0.2, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0, -0.05],
        ];
        assert_eq!(j, expect);
    }

    #[test]
    fn jacobian_trace_is_minus_total_damping() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let p = random_params(&mut rng);
            let s = random_state(&mut rng);
            let j = jacobian(s.t, &s, &p);
            let tr: f64 = (0..4).map(|i| j[i][i]).sum();
            assert_eq!(tr, -(p.gamma_x + p.gamma_y));
        }
    }

    /// Central differences of the flow, column by column.
    fn fd_jacobian(t: f64, s: &SystemState, p: &ModelParams) -> [[f64; 4]; 4] {
        let y = s.to_array();
        let mut j = [[0.0; 4]; 4];
        for col in 0..4 {
            let h = 1e-6 * y[col].abs().max(1.0);
            let mut yp = y;
            let mut ym = y;
            yp[col] += h;
            ym[col] -= h;
            let fp = flow_field(t, &SystemState::from_array(t, yp), p).to_array();
            let fm = flow_field(t, &SystemState::from_array(t, ym), p).to_array();
            for row in 0..4 {
                j[row][col] = (fp[row] - fm[row]) / (2.0 * h);
            }
        }
        j
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let p = random_params(&mut rng);
            let s = random_state(&mut rng);
            let a = jacobian(s.t, &s, &p);
            let n = fd_jacobian(s.t, &s, &p);
            let scale = a.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
            for r in 0..4 {
                for c in 0..4 {
                    assert!(
                        (a[r][c] - n[r][c]).abs() / scale < 1e-6,
                        "entry ({r},{c}): {} vs {}",
                        a[r][c],
                        n[r][c]
                    );
                }
            }
        }
    }

    #[test]
    fn potential_quadratic_well() {
        let p = ModelParams::harmonic();
        assert_eq!(effective_potential(1.0, 0.0, 0.0, &p), 0.5);
    }

    #[test]
    fn potential_gradient_is_conservative_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let p = random_params(&mut rng);
            let s = random_state(&mut rng);
            let f = flow_field(s.t, &s, &p);
            // conservative force = dp_j + γ_j p_j
            let force = [f.dp_x + p.gamma_x * s.p_x, f.dp_y + p.gamma_y * s.p_y];
            for (k, fk) in force.iter().enumerate() {
                let h = 1e-6 * if k == 0 { s.q_x } else { s.q_y }.abs().max(1.0);
                let (vp, vm) = if k == 0 {
                    (
                        effective_potential(s.q_x + h, s.q_y, s.t, &p),
                        effective_potential(s.q_x - h, s.q_y, s.t, &p),
                    )
                } else {
                    (
                        effective_potential(s.q_x, s.q_y + h, s.t, &p),
                        effective_potential(s.q_x, s.q_y - h, s.t, &p),
                    )
                };
                let grad = -(vp - vm) / (2.0 * h);
                assert!(
                    (grad - fk).abs() <= 1e-6 * fk.abs().max(1.0),
                    "{grad} vs {fk}"
                );
            }
        }
    }

    #[test]
    fn undriven_potential_is_autonomous() {
        let p = ModelParams::preset_base(2.1);
        assert_eq!(
            effective_potential(0.4, -1.1, 0.0, &p),
            effective_potential(0.4, -1.1, 17.3, &p)
        );
    }

    #[test]
    fn energy_examples() {
        let p = ModelParams::harmonic();
        assert_eq!(total_energy(&SystemState::default(), &p), 0.0);
        assert_eq!(
            total_energy(&SystemState::new(0.0, 0.0, 1.0, 0.0, 1.0), &p),
            1.0
        );
    }

    #[test]
    fn full_flow_fixed_point_at_steady_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let p = random_params(&mut rng);
            let s = random_state(&mut rng);
            let c = steady_state_field(&p, s.q_x, s.q_y);
            let f = full_flow_field(s.t, &s, &c, &p);
            let [dr, di] = f.cavity.unwrap();
            let scale = p.pump.max(1.0);
            assert!(dr.abs() < 1e-13 * scale && di.abs() < 1e-13 * scale);
        }
    }

    #[test]
    fn full_flow_mirror_force_uses_field_intensity() {
        let p = ModelParams::preset_base(2.1);
        let s = SystemState::at_rest(0.2, -0.3);
        let c = steady_state_field(&p, s.q_x, s.q_y);
        let a = flow_field(0.0, &s, &p);
        let b = full_flow_field(0.0, &s, &c, &p);
        assert!((a.dp_x - b.dp_x).abs() < 1e-12);
        assert!((a.dp_y - b.dp_y).abs() < 1e-12);
    }

    #[test]
    fn validation_rejects_degenerate_inputs() {
        let p = ModelParams {
            kappa: 0.0,
            ..ModelParams::harmonic()
        };
        match p.validated() {
            Err(Error::InvalidParam { name, .. }) => assert_eq!(name, "kappa"),
            other => panic!("expected kappa error, got {other:?}"),
        }
        let p = ModelParams {
            drive_y: DriveParams::new(1.0, 0.0, 0.0),
            ..ModelParams::harmonic()
        };
        assert!(p.validated().is_err());
        let p = ModelParams {
            g_x: -0.1,
            ..ModelParams::harmonic()
        };
        assert!(p.validated().is_err());
    }

    #[test]
    fn phase_reduced_on_validation() {
        let mut p = ModelParams::harmonic();
        p.drive_x.phase = -0.5;
        p.drive_y.phase = 3.0 * TAU + 1.0;
        let v = p.validated().unwrap();
        assert!((v.drive_x.phase - (TAU - 0.5)).abs() < 1e-12);
        assert!((v.drive_y.phase - 1.0).abs() < 1e-12);
        assert!(DriveParams::new(1.0, 1.0, -1e-300).phase < TAU);
    }

    #[test]
    fn flow_is_bit_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let p = random_params(&mut rng);
        let s = random_state(&mut rng);
        let a = flow_field(s.t, &s, &p).to_array();
        let b = flow_field(s.t, &s, &p).to_array();
        assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
    }
}
