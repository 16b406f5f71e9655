//! Stroboscopic surfaces of section over a line of initial conditions.
//!
//! Every initial condition starts both mirrors at `(q0, p0)` unless a mirror
//! is pinned by an override, integrates to the horizon, and records
//! `(q, p)` of each mirror at `k·stride`.

use std::f64::consts::{PI, TAU};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::integrator::{strobe, IntegratorConfig};
use crate::model::{ModelParams, SystemState};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum IcSampling {
    /// `ic_min + k·(ic_max − ic_min)/(ic_count − 1)`.
    #[default]
    Grid,
    /// Seeded normal draws centred on the interval, σ = width/4, clamped
    /// into the interval and sorted.
    Gaussian { seed: u64 },
}

/// Fixed initial condition for one mirror, replacing the shared grid value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MirrorIc {
    pub q: f64,
    #[serde(default)]
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SectionConfig {
    pub ic_min: f64,
    pub ic_max: f64,
    pub ic_count: usize,
    pub initial_momentum: f64,
    pub horizon: f64,
    pub stride: f64,
    pub sampling: IcSampling,
    pub override_x: Option<MirrorIc>,
    pub override_y: Option<MirrorIc>,
}

impl Default for SectionConfig {
    fn default() -> Self {
        Self {
            ic_min: -TAU,
            ic_max: TAU,
            ic_count: 48,
            initial_momentum: 0.0,
            horizon: 800.0 * PI,
            stride: TAU,
            sampling: IcSampling::Grid,
            override_x: None,
            override_y: None,
        }
    }
}

impl SectionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: String| Err(Error::InvalidParam { name, reason });
        if !(self.ic_min.is_finite() && self.ic_max.is_finite()) {
            return bad("ic_min", "interval ends must be finite".into());
        }
        if self.ic_count == 0 {
            return bad("ic_count", "must be >= 1".into());
        }
        if self.ic_count > 1 && !(self.ic_min < self.ic_max) {
            return bad(
                "ic_min",
                format!("need ic_min < ic_max, got [{}, {}]", self.ic_min, self.ic_max),
            );
        }
        if !self.initial_momentum.is_finite() {
            return bad("initial_momentum", "must be finite".into());
        }
        if !(self.stride > 0.0 && self.stride.is_finite()) {
            return bad("stride", format!("must be finite and > 0, got {}", self.stride));
        }
        if !(self.horizon >= self.stride && self.horizon.is_finite()) {
            return bad(
                "horizon",
                format!("must be finite and >= stride, got {}", self.horizon),
            );
        }
        for (name, o) in [("override_x", self.override_x), ("override_y", self.override_y)] {
            if let Some(m) = o {
                if !(m.q.is_finite() && m.p.is_finite()) {
                    return bad(name, "must be finite".into());
                }
            }
        }
        Ok(())
    }

    /// Strobe points recorded per initial condition.
    pub fn points_per_ic(&self) -> usize {
        // 800π/2π must give 400, not 399, when the quotient rounds just below
        let n = self.horizon / self.stride;
        (n + 1e-9 * n.max(1.0)).floor() as usize
    }

    pub fn ic_values(&self) -> Vec<f64> {
        let n = self.ic_count;
        match self.sampling {
            IcSampling::Grid => {
                if n == 1 {
                    return vec![self.ic_min];
                }
                let width = self.ic_max - self.ic_min;
                (0..n)
                    .map(|k| self.ic_min + k as f64 * width / (n - 1) as f64)
                    .collect()
            }
            IcSampling::Gaussian { seed } => {
                let mid = 0.5 * (self.ic_min + self.ic_max);
                let sigma = 0.25 * (self.ic_max - self.ic_min);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut v: Vec<f64> = if sigma > 0.0 {
                    let normal = Normal::new(mid, sigma).expect("positive sigma");
                    (0..n)
                        .map(|_| normal.sample(&mut rng).clamp(self.ic_min, self.ic_max))
                        .collect()
                } else {
                    vec![mid; n]
                };
                v.sort_by(f64::total_cmp);
                v
            }
        }
    }

    /// Initial state for a grid value, honouring per-mirror overrides.
    pub fn initial_state(&self, q0: f64) -> SystemState {
        let x = self.override_x.unwrap_or(MirrorIc {
            q: q0,
            p: self.initial_momentum,
        });
        let y = self.override_y.unwrap_or(MirrorIc {
            q: q0,
            p: self.initial_momentum,
        });
        SystemState::new(0.0, x.q, x.p, y.q, y.p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcSection {
    pub ic_index: usize,
    pub q0: f64,
    /// `(q_x, p_x)` at `k·stride`, `k = 1..`.
    pub x: Vec<[f64; 2]>,
    pub y: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcFailure {
    pub ic_index: usize,
    pub q0: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincareCloud {
    pub stride: f64,
    pub sections: Vec<IcSection>,
    pub failures: Vec<IcFailure>,
}

/// Section for one initial state.
pub fn section_for_state(
    params: &ModelParams,
    ic: &SystemState,
    stride: f64,
    count: usize,
    icfg: &IntegratorConfig,
) -> Result<(Vec<[f64; 2]>, Vec<[f64; 2]>)> {
    let p = *params;
    let pts = strobe(
        move |t, y: &[f64; 4], dy: &mut [f64; 4]| p.rhs(t + ic.t, y, dy),
        ic.to_array(),
        stride,
        count,
        icfg,
    )?;
    Ok((
        pts.iter().map(|s| [s[0], s[1]]).collect(),
        pts.iter().map(|s| [s[2], s[3]]).collect(),
    ))
}

/// Sections over the configured initial conditions. Failed initial
/// conditions are listed in `failures` and do not abort the run.
pub fn generate_section(
    params: &ModelParams,
    cfg: &SectionConfig,
    icfg: &IntegratorConfig,
    exec: Exec,
) -> Result<PoincareCloud> {
    let params = params.validated()?;
    cfg.validate()?;
    icfg.validate()?;
    let count = cfg.points_per_ic();
    let qs = cfg.ic_values();
    let results = exec.map(&qs, |_, &q0| {
        section_for_state(&params, &cfg.initial_state(q0), cfg.stride, count, icfg)
    });
    let mut sections = Vec::new();
    let mut failures = Vec::new();
    for (ic_index, (q0, r)) in qs.iter().zip(results).enumerate() {
        match r {
            Ok((x, y)) => sections.push(IcSection {
                ic_index,
                q0: *q0,
                x,
                y,
            }),
            Err(e) => failures.push(IcFailure {
                ic_index,
                q0: *q0,
                error: e.to_string(),
            }),
        }
    }
    Ok(PoincareCloud {
        stride: cfg.stride,
        sections,
        failures,
    })
}

/// Number of occupied cells when the bounding box of `points` is split into
/// `bins × bins` cells.
pub fn box_count(points: &[[f64; 2]], bins: usize) -> usize {
    if points.is_empty() || bins == 0 {
        return 0;
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let cell = |v: f64, d: usize| -> usize {
        let w = hi[d] - lo[d];
        if w <= 0.0 {
            return 0;
        }
        (((v - lo[d]) / w * bins as f64) as usize).min(bins - 1)
    };
    let mut seen = vec![false; bins * bins];
    for p in points {
        seen[cell(p[0], 0) * bins + cell(p[1], 1)] = true;
    }
    seen.iter().filter(|&&s| s).count()
}

/// Two-scale box-counting slope `log2(N(16)/N(8))`: near 1 for points on a
/// curve, well above 1 for a scattered cloud, near 0 for a few isolated
/// points.
pub fn scatter_dimension(points: &[[f64; 2]]) -> f64 {
    let coarse = box_count(points, 8);
    let fine = box_count(points, 16);
    if coarse == 0 {
        return 0.0;
    }
    (fine as f64 / coarse as f64).log2()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_matches_protocol() {
        let c = SectionConfig::default();
        c.validate().unwrap();
        assert_eq!(c.points_per_ic(), 400);
        let qs = c.ic_values();
        assert_eq!(qs.len(), 48);
        assert_eq!(qs[0], -TAU);
        assert!((qs[47] - TAU).abs() <= 4.0 * f64::EPSILON * TAU);
        for (k, q) in qs.iter().enumerate() {
            assert_eq!(*q, -TAU + k as f64 * (2.0 * TAU) / 47.0);
        }
    }

    #[test]
    fn validation() {
        let base = SectionConfig::default();
        for bad in [
            SectionConfig { ic_count: 0, ..base },
            SectionConfig { ic_min: 1.0, ic_max: 0.0, ..base },
            SectionConfig { stride: 0.0, ..base },
            SectionConfig { horizon: 1.0, ..base },
            SectionConfig { horizon: f64::NAN, ..base },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn gaussian_sampling_is_seeded_and_bounded() {
        let c = SectionConfig {
            sampling: IcSampling::Gaussian { seed: 7 },
            ..SectionConfig::default()
        };
        let a = c.ic_values();
        assert_eq!(a, c.ic_values());
        assert!(a.iter().all(|q| (-TAU..=TAU).contains(q)));
        assert!(a.windows(2).all(|w| w[0] <= w[1]));
        let other = SectionConfig {
            sampling: IcSampling::Gaussian { seed: 8 },
            ..c
        };
        assert_ne!(a, other.ic_values());
    }

    #[test]
    fn overrides_pin_one_mirror() {
        let c = SectionConfig {
            override_y: Some(MirrorIc { q: -1.0, p: 0.5 }),
            ..SectionConfig::default()
        };
        let s = c.initial_state(0.3);
        assert_eq!((s.q_x, s.p_x, s.q_y, s.p_y), (0.3, 0.0, -1.0, 0.5));
    }

    #[test]
    fn harmonic_sections_sit_on_circles() {
        for omega in [1.0, 0.9] {
            let p = ModelParams {
                omega_x: omega,
                omega_y: omega,
                ..ModelParams::harmonic()
            };
            let cfg = SectionConfig {
                ic_min: 1.0,
                ic_max: 1.0,
                ic_count: 1,
                ..SectionConfig::default()
            };
            let cloud = generate_section(&p, &cfg, &IntegratorConfig::default(), Exec::Sequential)
                .unwrap();
            assert!(cloud.failures.is_empty());
            let sec = &cloud.sections[0];
            assert_eq!(sec.x.len(), 400);
            for pt in sec.x.iter().chain(&sec.y) {
                assert!((pt[0].hypot(pt[1]) - 1.0).abs() < 1e-7);
                if omega == 1.0 {
                    assert!((pt[0] - 1.0).abs() < 1e-7 && pt[1].abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn box_counting_separates_curves_from_clouds() {
        let circle: Vec<[f64; 2]> = (0..400)
            .map(|k| {
                let a = k as f64 * 2.399_963;
                [a.cos(), a.sin()]
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = rand_distr::Uniform::new(0.0, 1.0).unwrap();
        let cloud: Vec<[f64; 2]> = (0..400).map(|_| [u.sample(&mut rng), u.sample(&mut rng)]).collect();
        assert!(scatter_dimension(&circle) < 1.2, "{}", scatter_dimension(&circle));
        assert!(scatter_dimension(&cloud) > 1.5, "{}", scatter_dimension(&cloud));
        assert_eq!(scatter_dimension(&[[1.0, 1.0]; 5]), 0.0);
        assert_eq!(box_count(&[], 8), 0);
    }
}
