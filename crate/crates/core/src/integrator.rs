//! Deterministic explicit Runge-Kutta integration.
//!
//! Two methods share one stepping interface:
//!
//! * `FixedRk4`: classical four-stage Runge-Kutta on the grid
//!   `t0 + i·step`, final step shortened to land on the end time. Dense
//!   output is the cubic Hermite interpolant through both step ends.
//! * `AdaptiveRk45`: Dormand-Prince 5(4) with local extrapolation, FSAL and
//!   the standard fourth-order continuous extension.
//!
//! Sampling at prescribed times (`strobe`, `sample_uniform`) evaluates the
//! dense output of an uninterrupted integration, so sample times never
//! perturb the step sequence. Sample times are formed as `t0 + k·dt`, never
//! by repeated addition.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FixedRk4,
    AdaptiveRk45,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Fixed-step size.
    pub step: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Budget of attempted steps per integration.
    pub max_steps: u64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::AdaptiveRk45,
            step: TAU / 1000.0,
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_steps: 1_000_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn fixed(step: f64) -> Self {
        Self {
            method: Method::FixedRk4,
            step,
            ..Self::default()
        }
    }

    pub fn adaptive(rel_tol: f64, abs_tol: f64) -> Self {
        Self {
            method: Method::AdaptiveRk45,
            rel_tol,
            abs_tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), IntegrationError> {
        let bad = |what: &str, v: f64| {
            Err(IntegrationError::InvalidConfig(format!(
                "{what} must be finite and > 0, got {v}"
            )))
        };
        if !(self.step > 0.0 && self.step.is_finite()) {
            return bad("step", self.step);
        }
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return bad("rel_tol", self.rel_tol);
        }
        if !(self.abs_tol > 0.0 && self.abs_tol.is_finite()) {
            return bad("abs_tol", self.abs_tol);
        }
        if self.max_steps == 0 {
            return Err(IntegrationError::InvalidConfig(
                "max_steps must be > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum IntegrationError {
    #[error("non-finite state at t = {t}: {state:?}")]
    NonFinite { t: f64, state: Vec<f64> },
    #[error("step budget of {max_steps} exhausted at t = {t}")]
    MaxSteps { t: f64, max_steps: u64 },
    #[error("step size underflow (h = {h:e}) at t = {t}")]
    StepUnderflow { t: f64, h: f64 },
    #[error("invalid integration interval [{t0}, {t1}]")]
    InvalidInterval { t0: f64, t1: f64 },
    #[error("invalid integrator config: {0}")]
    InvalidConfig(String),
}

/// One classical RK4 step of size `h` from `(t, y)`.
pub fn step_rk4<const N: usize, F>(
    f: &mut F,
    t: f64,
    y: &[f64; N],
    h: f64,
) -> Result<[f64; N], IntegrationError>
where
    F: FnMut(f64, &[f64; N], &mut [f64; N]),
{
    let mut k1 = [0.0; N];
    f(t, y, &mut k1);
    rk4_with_slope(f, t, y, &k1, h)
}

fn rk4_with_slope<const N: usize, F>(
    f: &mut F,
    t: f64,
    y: &[f64; N],
    k1: &[f64; N],
    h: f64,
) -> Result<[f64; N], IntegrationError>
where
    F: FnMut(f64, &[f64; N], &mut [f64; N]),
{
    let mut k2 = [0.0; N];
    let mut k3 = [0.0; N];
    let mut k4 = [0.0; N];
    let mut tmp = [0.0; N];
    let half = 0.5 * h;
    for i in 0..N {
        tmp[i] = y[i] + half * k1[i];
    }
    f(t + half, &tmp, &mut k2);
    for i in 0..N {
        tmp[i] = y[i] + half * k2[i];
    }
    f(t + half, &tmp, &mut k3);
    for i in 0..N {
        tmp[i] = y[i] + h * k3[i];
    }
    f(t + h, &tmp, &mut k4);
    let sixth = h / 6.0;
    let mut out = [0.0; N];
    for i in 0..N {
        out[i] = y[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(IntegrationError::NonFinite {
            t,
            state: y.to_vec(),
        })
    }
}

#[derive(Debug, Clone)]
enum Interp<const N: usize> {
    Hermite { f0: [f64; N], f1: [f64; N] },
    Dopri { r3: [f64; N], r4: [f64; N], r5: [f64; N] },
}

/// An accepted step together with its continuous extension.
#[derive(Debug, Clone)]
pub struct Segment<const N: usize> {
    pub t0: f64,
    pub t1: f64,
    pub y0: [f64; N],
    pub y1: [f64; N],
    interp: Interp<N>,
}

impl<const N: usize> Segment<N> {
    /// Dense output at `t ∈ [t0, t1]`; the endpoints are returned exactly.
    pub fn eval(&self, t: f64) -> [f64; N] {
        if t == self.t1 {
            return self.y1;
        }
        if t == self.t0 {
            return self.y0;
        }
        let h = self.t1 - self.t0;
        let th = (t - self.t0) / h;
        let th1 = 1.0 - th;
        let mut out = [0.0; N];
        match &self.interp {
            Interp::Hermite { f0, f1 } => {
                for i in 0..N {
                    let dy = self.y1[i] - self.y0[i];
                    out[i] = th1 * self.y0[i]
                        + th * self.y1[i]
                        + th * (th - 1.0)
                            * ((1.0 - 2.0 * th) * dy + (th - 1.0) * h * f0[i] + th * h * f1[i]);
                }
            }
            Interp::Dopri { r3, r4, r5 } => {
                for i in 0..N {
                    let r2 = self.y1[i] - self.y0[i];
                    out[i] = self.y0[i] + th * (r2 + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])));
                }
            }
        }
        out
    }
}

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;
const MAX_NONFINITE_RETRIES: u32 = 30;

/// Incremental integrator from `t0` towards a fixed end time.
///
/// The caller may overwrite the state between steps with [`Stepper::set_state`];
/// the step-size history is kept.
pub struct Stepper<const N: usize, F> {
    f: F,
    cfg: IntegratorConfig,
    t0: f64,
    t_end: f64,
    t: f64,
    y: [f64; N],
    dy: [f64; N],
    h: f64,
    fixed_index: u64,
    attempts: u64,
    err_dims: usize,
    max_h: f64,
}

impl<const N: usize, F> Stepper<N, F>
where
    F: FnMut(f64, &[f64; N], &mut [f64; N]),
{
    pub fn new(
        mut f: F,
        t0: f64,
        y0: [f64; N],
        t_end: f64,
        cfg: &IntegratorConfig,
    ) -> Result<Self, IntegrationError> {
        cfg.validate()?;
        if !(t0.is_finite() && t_end.is_finite() && t_end > t0) {
            return Err(IntegrationError::InvalidInterval { t0, t1: t_end });
        }
        if !y0.iter().all(|v| v.is_finite()) {
            return Err(IntegrationError::NonFinite {
                t: t0,
                state: y0.to_vec(),
            });
        }
        let mut dy = [0.0; N];
        f(t0, &y0, &mut dy);
        let mut s = Self {
            f,
            cfg: *cfg,
            t0,
            t_end,
            t: t0,
            y: y0,
            dy,
            h: 0.0,
            fixed_index: 0,
            attempts: 0,
            err_dims: N,
            max_h: f64::INFINITY,
        };
        s.h = match cfg.method {
            Method::FixedRk4 => cfg.step,
            Method::AdaptiveRk45 => s.initial_step(),
        };
        Ok(s)
    }

    /// Restricts adaptive error control to the first `dims` components.
    pub fn with_error_dims(mut self, dims: usize) -> Self {
        self.err_dims = dims.clamp(1, N);
        self.h = match self.cfg.method {
            Method::FixedRk4 => self.cfg.step,
            Method::AdaptiveRk45 => self.initial_step(),
        };
        self
    }

    /// Caps the adaptive step. Useful when the controlled components decay
    /// and stop constraining the step.
    pub fn with_max_step(mut self, h_max: f64) -> Self {
        if h_max > 0.0 {
            self.max_h = h_max;
            if self.cfg.method == Method::AdaptiveRk45 {
                self.h = self.h.min(h_max);
            }
        }
        self
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> &[f64; N] {
        &self.y
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.t_end
    }

    /// Replaces the current state (same time).
    pub fn set_state(&mut self, y: [f64; N]) {
        self.y = y;
        (self.f)(self.t, &self.y, &mut self.dy);
    }

    fn weight(&self, a: f64, b: f64) -> f64 {
        self.cfg.abs_tol + self.cfg.rel_tol * a.abs().max(b.abs())
    }

    fn initial_step(&mut self) -> f64 {
        let m = self.err_dims;
        let span = self.t_end - self.t;
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..m {
            let sk = self.weight(self.y[i], 0.0);
            d0 += (self.y[i] / sk).powi(2);
            d1 += (self.dy[i] / sk).powi(2);
        }
        let (d0, d1) = ((d0 / m as f64).sqrt(), (d1 / m as f64).sqrt());
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        h0 = h0.min(span);
        let mut y1 = [0.0; N];
        for i in 0..N {
            y1[i] = self.y[i] + h0 * self.dy[i];
        }
        let mut f1 = [0.0; N];
        (self.f)(self.t + h0, &y1, &mut f1);
        let mut d2 = 0.0;
        for i in 0..m {
            let sk = self.weight(self.y[i], 0.0);
            d2 += ((f1[i] - self.dy[i]) / sk).powi(2);
        }
        let d2 = (d2 / m as f64).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        let h = (100.0 * h0).min(h1);
        if h.is_finite() && h > 0.0 {
            h
        } else {
            1e-6
        }
    }

    /// Advances by one accepted step. Returns `None` once the end time is reached.
    pub fn step(&mut self) -> Result<Option<Segment<N>>, IntegrationError> {
        if self.is_done() {
            return Ok(None);
        }
        match self.cfg.method {
            Method::FixedRk4 => self.step_fixed().map(Some),
            Method::AdaptiveRk45 => self.step_adaptive().map(Some),
        }
    }

    fn count_attempt(&mut self) -> Result<(), IntegrationError> {
        self.attempts += 1;
        if self.attempts > self.cfg.max_steps {
            return Err(IntegrationError::MaxSteps {
                t: self.t,
                max_steps: self.cfg.max_steps,
            });
        }
        Ok(())
    }

    fn step_fixed(&mut self) -> Result<Segment<N>, IntegrationError> {
        self.count_attempt()?;
        let step = self.cfg.step;
        let mut next = self.t0 + (self.fixed_index + 1) as f64 * step;
        // land on the end time rather than leaving a sliver
        if next >= self.t_end - 1e-9 * step {
            next = self.t_end;
        }
        let h = next - self.t;
        let y1 = rk4_with_slope(&mut self.f, self.t, &self.y, &self.dy, h)?;
        let mut f1 = [0.0; N];
        (self.f)(next, &y1, &mut f1);
        let seg = Segment {
            t0: self.t,
            t1: next,
            y0: self.y,
            y1,
            interp: Interp::Hermite { f0: self.dy, f1 },
        };
        self.fixed_index += 1;
        self.t = next;
        self.y = y1;
        self.dy = f1;
        Ok(seg)
    }

    fn step_adaptive(&mut self) -> Result<Segment<N>, IntegrationError> {
        let mut nonfinite = 0;
        let mut rejected = false;
        loop {
            self.count_attempt()?;
            let remaining = self.t_end - self.t;
            let landing = self.h >= remaining || (self.t + 1.01 * self.h) >= self.t_end;
            let h = if landing { remaining } else { self.h };
            let min_h = 16.0 * f64::EPSILON * self.t.abs().max(1.0);
            if !landing && h < min_h {
                return Err(IntegrationError::StepUnderflow { t: self.t, h });
            }

            let t = self.t;
            let y = self.y;
            let k1 = self.dy;
            let mut k2 = [0.0; N];
            let mut k3 = [0.0; N];
            let mut k4 = [0.0; N];
            let mut k5 = [0.0; N];
            let mut k6 = [0.0; N];
            let mut k7 = [0.0; N];
            let mut tmp = [0.0; N];
            for i in 0..N {
                tmp[i] = y[i] + h * A21 * k1[i];
            }
            (self.f)(t + C2 * h, &tmp, &mut k2);
            for i in 0..N {
                tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            (self.f)(t + C3 * h, &tmp, &mut k3);
            for i in 0..N {
                tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            (self.f)(t + C4 * h, &tmp, &mut k4);
            for i in 0..N {
                tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            (self.f)(t + C5 * h, &tmp, &mut k5);
            for i in 0..N {
                tmp[i] = y[i]
                    + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            let t_new = if landing { self.t_end } else { t + h };
            (self.f)(t + h, &tmp, &mut k6);
            let mut y1 = [0.0; N];
            for i in 0..N {
                y1[i] = y[i]
                    + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            (self.f)(t_new, &y1, &mut k7);

            let mut err = 0.0;
            for i in 0..self.err_dims {
                let e = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i]
                        + E7 * k7[i]);
                err += (e / self.weight(y[i], y1[i])).powi(2);
            }
            let err = (err / self.err_dims as f64).sqrt();

            let finite = err.is_finite()
                && y1.iter().all(|v| v.is_finite())
                && k7.iter().all(|v| v.is_finite());
            if !finite {
                nonfinite += 1;
                if nonfinite > MAX_NONFINITE_RETRIES {
                    return Err(IntegrationError::NonFinite {
                        t,
                        state: y.to_vec(),
                    });
                }
                self.h = h * FAC_MIN;
                rejected = true;
                continue;
            }

            if err <= 1.0 {
                let mut fac = if err == 0.0 {
                    FAC_MAX
                } else {
                    (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
                };
                if rejected {
                    fac = fac.min(1.0);
                }
                let mut r3 = [0.0; N];
                let mut r4 = [0.0; N];
                let mut r5 = [0.0; N];
                for i in 0..N {
                    let r2 = y1[i] - y[i];
                    r3[i] = h * k1[i] - r2;
                    r4[i] = r2 - h * k7[i] - r3[i];
                    r5[i] = h
                        * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i]
                            + D7 * k7[i]);
                }
                let seg = Segment {
                    t0: t,
                    t1: t_new,
                    y0: y,
                    y1,
                    interp: Interp::Dopri { r3, r4, r5 },
                };
                // a forced short landing step says nothing about the natural size
                if !landing || h >= self.h {
                    self.h = (h * fac).min(self.max_h);
                }
                self.t = t_new;
                self.y = y1;
                self.dy = k7;
                return Ok(seg);
            }
            let fac = (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, 1.0);
            self.h = h * fac;
            rejected = true;
        }
    }
}

/// Result of [`integrate`]: every accepted step endpoint plus, optionally,
/// the piecewise dense output.
#[derive(Debug, Clone)]
pub struct Trajectory<const N: usize> {
    pub times: Vec<f64>,
    pub states: Vec<[f64; N]>,
    pub dense: Option<Vec<Segment<N>>>,
}

impl<const N: usize> Trajectory<N> {
    pub fn last(&self) -> (f64, [f64; N]) {
        (
            *self.times.last().expect("non-empty trajectory"),
            *self.states.last().expect("non-empty trajectory"),
        )
    }

    /// Dense-output evaluation at `t` within the integrated range.
    pub fn eval(&self, t: f64) -> Option<[f64; N]> {
        let dense = self.dense.as_ref()?;
        let first = dense.first()?;
        if t < first.t0 || t > dense.last()?.t1 {
            return None;
        }
        let idx = dense.partition_point(|s| s.t1 < t);
        dense.get(idx).map(|s| s.eval(t))
    }
}

/// Integrates from `t0` to exactly `t1`, calling `observer` on every accepted
/// step. Returns the final state.
pub fn integrate_observed<const N: usize, F, O>(
    f: F,
    t0: f64,
    t1: f64,
    y0: [f64; N],
    cfg: &IntegratorConfig,
    mut observer: O,
) -> Result<[f64; N], IntegrationError>
where
    F: FnMut(f64, &[f64; N], &mut [f64; N]),
    O: FnMut(&Segment<N>),
{
    let mut stepper = Stepper::new(f, t0, y0, t1, cfg)?;
    while let Some(seg) = stepper.step()? {
        observer(&seg);
    }
    Ok(*stepper.state())
}

pub fn integrate<const N: usize, F>(
    f: F,
    t0: f64,
    t1: f64,
    y0: [f64; N],
    cfg: &IntegratorConfig,
) -> Result<Trajectory<N>, IntegrationError>
where
    F: FnMut(f64, &[f64; N], &mut [f64; N]),
{
    let mut times = vec![t0];
    let mut states = vec![y0];
    let mut dense = Vec::new();
    integrate_observed(f, t0, t1, y0, cfg, |seg| {
        times.push(seg.t1);
        states.push(seg.y1);
        dense.push(seg.clone());
    })?;
    Ok(Trajectory {
        times,
        states,
        dense: Some(dense),
    })
}

/// States at `t0 + k·dt` for `k = 1..=count`.
pub fn sample_uniform<const N: usize, F>(
    f: F,
    t0: f64,
    y0: [f64; N],
    dt: f64,
    count: usize,
    cfg: &IntegratorConfig,
) -> Result<Vec<[f64; N]>, IntegrationError>
where
    F: FnMut(f64, &[f64; N], &mut [f64; N]),
{
    if !(dt > 0.0 && dt.is_finite()) || count == 0 {
        return Err(IntegrationError::InvalidConfig(format!(
            "sampling needs dt > 0 and count >= 1 (dt = {dt}, count = {count})"
        )));
    }
    let t_end = t0 + count as f64 * dt;
    let mut out = Vec::with_capacity(count);
    let mut k = 1usize;
    integrate_observed(f, t0, t_end, y0, cfg, |seg| {
        while k <= count {
            let tk = t0 + k as f64 * dt;
            if tk > seg.t1 {
                break;
            }
            out.push(seg.eval(tk));
            k += 1;
        }
    })?;
    debug_assert_eq!(out.len(), count);
    Ok(out)
}

/// Stroboscopic samples at `k·period`, `k = 1..=count`, starting from `t = 0`.
pub fn strobe<const N: usize, F>(
    f: F,
    y0: [f64; N],
    period: f64,
    count: usize,
    cfg: &IntegratorConfig,
) -> Result<Vec<[f64; N]>, IntegrationError>
where
    F: FnMut(f64, &[f64; N], &mut [f64; N]),
{
    sample_uniform(f, 0.0, y0, period, count, cfg)
}
