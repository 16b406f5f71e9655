//! Lyapunov spectrum by tangent-space integration with periodic Gram-Schmidt
//! reorthonormalization, and the Kolmogorov-Sinai entropy as the sum of the
//! positive exponents.
//!
//! The state and four tangent vectors are co-integrated as one 20-dimensional
//! system, `dv/dt = J(t, y(t))·v`. Step-size control only looks at the state,
//! and the tangent block of every step is linear in the frame at the step
//! start. Renormalization at `t_b` inside a step therefore works on the dense
//! output: the interpolated frame `V(t_b) = Q R` supplies the log growths,
//! and the frame carried on is `V(t_end)·R⁻¹`. The state trajectory is the
//! same for every renormalization interval. Steps are capped at 1/50 of the
//! fastest mechanical period so a decaying state cannot outrun the tangents.

use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{IntegratorConfig, Segment, Stepper};
use crate::model::{jacobian_at, ModelParams, SystemState};

pub const DEFAULT_CHAOS_THRESHOLD: f64 = 0.02;
const COLLAPSE_NORM: f64 = 1e-300;
const MIN_STEPS_PER_PERIOD: f64 = 50.0;

/// Four tangent vectors (stored as rows) and their accumulated log growths.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentFrame {
    pub vectors: [[f64; 4]; 4],
    pub log_sums: [f64; 4],
}

impl TangentFrame {
    pub fn identity() -> Self {
        let mut vectors = [[0.0; 4]; 4];
        for (i, v) in vectors.iter_mut().enumerate() {
            v[i] = 1.0;
        }
        Self {
            vectors,
            log_sums: [0.0; 4],
        }
    }

    /// Random orthonormal frame from a seeded Gaussian matrix.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vectors = [[0.0; 4]; 4];
        for v in vectors.iter_mut().flatten() {
            *v = StandardNormal.sample(&mut rng);
        }
        let (q, _) = gram_schmidt(&vectors).expect("gaussian frame is full rank");
        Self {
            vectors: q,
            log_sums: [0.0; 4],
        }
    }

    /// Orthonormalizes in place and adds `ln r_ii` to the running sums.
    pub fn renormalize(&mut self) -> std::result::Result<[f64; 4], usize> {
        let (q, r) = gram_schmidt(&self.vectors)?;
        let mut norms = [0.0; 4];
        for i in 0..4 {
            norms[i] = r[i][i];
            self.log_sums[i] += r[i][i].ln();
        }
        self.vectors = q;
        Ok(norms)
    }

    pub fn max_orthonormality_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..4 {
            for j in 0..4 {
                let d = dot(&self.vectors[i], &self.vectors[j]);
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((d - target).abs());
            }
        }
        worst
    }
}

#[inline]
fn dot(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

type Upper = [[f64; 4]; 4];

/// Modified Gram-Schmidt on the rows of `v`: returns `Q` and the upper
/// triangular `R` with `v_k = Σ_{j≤k} R[j][k] q_j`. On collapse returns the
/// index of the offending vector.
pub fn gram_schmidt(v: &[[f64; 4]; 4]) -> std::result::Result<([[f64; 4]; 4], Upper), usize> {
    let mut q = *v;
    let mut r = [[0.0; 4]; 4];
    for k in 0..4 {
        for j in 0..k {
            let c = dot(&q[j], &q[k]);
            r[j][k] = c;
            for m in 0..4 {
                q[k][m] -= c * q[j][m];
            }
        }
        let n = dot(&q[k], &q[k]).sqrt();
        if !(n > COLLAPSE_NORM) || !n.is_finite() {
            return Err(k);
        }
        r[k][k] = n;
        for m in 0..4 {
            q[k][m] /= n;
        }
    }
    Ok((q, r))
}

/// `X` with `X·R = V` (rows as vectors), i.e. `x_k = (v_k − Σ_{j<k} R[j][k] x_j)/R[k][k]`.
fn right_solve(v: &[[f64; 4]; 4], r: &Upper) -> [[f64; 4]; 4] {
    let mut x = [[0.0; 4]; 4];
    for k in 0..4 {
        let mut row = v[k];
        for j in 0..k {
            for m in 0..4 {
                row[m] -= r[j][k] * x[j][m];
            }
        }
        for m in 0..4 {
            x[k][m] = row[m] / r[k][k];
        }
    }
    x
}

/// Time-stamped Lyapunov estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovRecord {
    pub t: f64,
    /// Exponents sorted in descending order.
    pub lambda: [f64; 4],
    pub hks: f64,
}

impl LyapunovRecord {
    pub fn from_exponents(t: f64, mut lambda: [f64; 4]) -> Self {
        lambda.sort_by(|a, b| b.total_cmp(a));
        Self {
            t,
            lambda,
            hks: ks_entropy(&lambda),
        }
    }

    pub fn largest(&self) -> f64 {
        self.lambda[0]
    }

    pub fn sum(&self) -> f64 {
        self.lambda.iter().sum()
    }
}

/// Pesin sum: the total of the strictly positive exponents.
pub fn ks_entropy(lambda: &[f64; 4]) -> f64 {
    lambda.iter().filter(|&&l| l > 0.0).sum()
}

/// Chaotic iff the largest exponent strictly exceeds `threshold`.
pub fn classify_chaotic(record: &LyapunovRecord, threshold: f64) -> bool {
    record.largest() > threshold
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FrameInit {
    Identity,
    Random { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LyapunovConfig {
    pub t_total: f64,
    pub renorm_interval: f64,
    /// Renormalizations before this time are excluded from the averages.
    pub burn_in: f64,
    pub frame: FrameInit,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        Self {
            t_total: 800.0 * std::f64::consts::PI,
            renorm_interval: TAU,
            burn_in: 0.0,
            frame: FrameInit::Identity,
        }
    }
}

impl LyapunovConfig {
    pub fn with_total(t_total: f64) -> Self {
        Self {
            t_total,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: String| Err(Error::InvalidParam { name, reason });
        if !(self.renorm_interval > 0.0 && self.renorm_interval.is_finite()) {
            return bad(
                "renorm_interval",
                format!("must be finite and > 0, got {}", self.renorm_interval),
            );
        }
        if !(self.t_total >= 100.0 * self.renorm_interval && self.t_total.is_finite()) {
            return bad(
                "t_total",
                format!(
                    "must be at least 100 renormalization intervals ({}), got {}",
                    100.0 * self.renorm_interval,
                    self.t_total
                ),
            );
        }
        if !(self.burn_in >= 0.0 && self.burn_in < self.t_total) {
            return bad(
                "burn_in",
                format!("must lie in [0, t_total), got {}", self.burn_in),
            );
        }
        Ok(())
    }
}

/// Right-hand side of the state plus four tangent vectors.
#[inline]
fn variational_rhs(params: &ModelParams, t: f64, y: &[f64; 20], dy: &mut [f64; 20]) {
    let mut s = [0.0; 4];
    s.copy_from_slice(&y[..4]);
    let mut ds = [0.0; 4];
    params.rhs(t, &s, &mut ds);
    dy[..4].copy_from_slice(&ds);
    let j = jacobian_at(params, y[0], y[2]);
    for k in 0..4 {
        let v = &y[4 + 4 * k..8 + 4 * k];
        for r in 0..4 {
            dy[4 + 4 * k + r] = j[r][0] * v[0] + j[r][1] * v[1] + j[r][2] * v[2] + j[r][3] * v[3];
        }
    }
}

fn frame_of(y: &[f64; 20]) -> [[f64; 4]; 4] {
    let mut v = [[0.0; 4]; 4];
    for k in 0..4 {
        v[k].copy_from_slice(&y[4 + 4 * k..8 + 4 * k]);
    }
    v
}

fn store_frame(y: &mut [f64; 20], v: &[[f64; 4]; 4]) {
    for k in 0..4 {
        y[4 + 4 * k..8 + 4 * k].copy_from_slice(&v[k]);
    }
}

/// Lyapunov spectrum along the trajectory starting at `ic`.
///
/// Records are emitted at `ic.t + k·renorm_interval` and at `ic.t + t_total`;
/// the last record is the reported spectrum.
pub fn lyapunov_spectrum(
    params: &ModelParams,
    ic: &SystemState,
    cfg: &LyapunovConfig,
    icfg: &IntegratorConfig,
) -> Result<Vec<LyapunovRecord>> {
    let mut out = Vec::new();
    lyapunov_observed(params, ic, cfg, icfg, |r| out.push(*r))?;
    Ok(out)
}

/// Final spectrum only.
pub fn final_spectrum(
    params: &ModelParams,
    ic: &SystemState,
    cfg: &LyapunovConfig,
    icfg: &IntegratorConfig,
) -> Result<LyapunovRecord> {
    let mut last = None;
    lyapunov_observed(params, ic, cfg, icfg, |r| last = Some(*r))?;
    Ok(last.expect("at least one record"))
}

/// Streams records to `emit` as they are produced.
pub fn lyapunov_observed<E>(
    params: &ModelParams,
    ic: &SystemState,
    cfg: &LyapunovConfig,
    icfg: &IntegratorConfig,
    mut emit: E,
) -> Result<()>
where
    E: FnMut(&LyapunovRecord),
{
    cfg.validate()?;
    if !ic.is_finite() {
        return Err(Error::InvalidParam {
            name: "initial_condition",
            reason: format!("non-finite initial state {ic:?}"),
        });
    }
    let p = *params;
    let t0 = ic.t;
    let t_end = t0 + cfg.t_total;

    let mut frame = match cfg.frame {
        FrameInit::Identity => TangentFrame::identity(),
        FrameInit::Random { seed } => TangentFrame::random(seed),
    };
    let mut y0 = [0.0; 20];
    y0[..4].copy_from_slice(&ic.to_array());
    store_frame(&mut y0, &frame.vectors);

    let rhs = move |t: f64, y: &[f64; 20], dy: &mut [f64; 20]| variational_rhs(&p, t, y, dy);
    // a decaying state no longer limits the step, the tangent block still needs it
    let h_max = TAU / (MIN_STEPS_PER_PERIOD * p.omega_x.max(p.omega_y));
    let mut stepper = Stepper::new(rhs, t0, y0, t_end, icfg)?
        .with_error_dims(4)
        .with_max_step(h_max);

    let n_regular = (cfg.t_total / cfg.renorm_interval).floor() as u64;
    // boundary k sits at t0 + k·τ; the final one is t_end itself
    let boundary = |k: u64| -> f64 {
        if k > n_regular {
            t_end
        } else {
            let tb = t0 + k as f64 * cfg.renorm_interval;
            if tb > t_end {
                t_end
            } else {
                tb
            }
        }
    };
    let last_k = if boundary(n_regular) < t_end {
        n_regular + 1
    } else {
        n_regular
    };
    let mut k = 1u64;
    let mut burn_start: Option<f64> = if cfg.burn_in == 0.0 { Some(t0) } else { None };

    while let Some(seg) = stepper.step()? {
        let mut carry: Option<Upper> = None;
        while k <= last_k && boundary(k) <= seg.t1 {
            let tb = boundary(k);
            let raw = frame_at(&seg, tb);
            let v = match &carry {
                Some(c) => right_solve_chain(&raw, c),
                None => raw,
            };
            let (q, r) = gram_schmidt(&v).map_err(|index| Error::TangentCollapse {
                index,
                t: tb,
                norm: dot(&v[index], &v[index]).sqrt(),
            })?;
            frame.vectors = q;
            for i in 0..4 {
                frame.log_sums[i] += r[i][i].ln();
            }
            carry = Some(match carry {
                Some(c) => compose(&c, &r),
                None => r,
            });

            match burn_start {
                Some(tb0) if tb > tb0 => {
                    let span = tb - tb0;
                    let lambda = frame.log_sums.map(|s| s / span);
                    emit(&LyapunovRecord::from_exponents(tb, lambda));
                }
                Some(_) => {}
                None => {
                    if tb - t0 >= cfg.burn_in {
                        burn_start = Some(tb);
                        frame.log_sums = [0.0; 4];
                    }
                }
            }
            k += 1;
        }
        if let Some(c) = carry {
            let mut y = *stepper.state();
            let v_end = if seg.t1 == boundary(k - 1) {
                frame.vectors
            } else {
                right_solve_chain(&frame_of(&y), &c)
            };
            store_frame(&mut y, &v_end);
            stepper.set_state(y);
        }
    }
    Ok(())
}

fn frame_at(seg: &Segment<20>, t: f64) -> [[f64; 4]; 4] {
    frame_of(&seg.eval(t))
}

/// Upper-triangular product `a·b`.
fn compose(a: &Upper, b: &Upper) -> Upper {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in i..4 {
            c[i][j] = (i..=j).map(|m| a[i][m] * b[m][j]).sum();
        }
    }
    c
}

/// Solves `X·C = V` for upper-triangular `C`.
fn right_solve_chain(v: &[[f64; 4]; 4], c: &Upper) -> [[f64; 4]; 4] {
    right_solve(v, c)
}
