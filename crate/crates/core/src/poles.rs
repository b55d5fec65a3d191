//! Pole radius estimation by scanning `|H_k|` along the radial line at each
//! control-frequency angle.
//!
//! The pole angle is taken to be the control angle itself; only the radius
//! is searched. A coarse scan locates the largest sample, a golden-section
//! search inside the neighbouring cells refines it.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{check_index, Error, Result};
use crate::exec::Execution;
use crate::scenario::{Scenario, Strategy};
use crate::signal_model::MIN_PATH_RADIUS;
use crate::tf::transfer_function;

pub const R_MIN: f64 = MIN_PATH_RADIUS;
pub const R_MAX: f64 = 1.0 - 1e-6;
pub const COARSE_POINTS: usize = 512;
pub const RADIUS_RESOLUTION: f64 = 1e-6;

/// Angular offset (normalized frequency) used by the angle adequacy check.
pub const ANGLE_OFFSET: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoleFlag {
    Ok,
    /// Maximum at the scan boundary: no pole radius is claimed.
    UnstableOrBoundary,
}

impl PoleFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            PoleFlag::Ok => "ok",
            PoleFlag::UnstableOrBoundary => "unstable_or_boundary",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoleEstimate {
    pub sensor: usize,
    pub tone: usize,
    pub freq: f64,
    /// `None` when flagged.
    pub radius: Option<f64>,
    pub angle: f64,
    pub peak: f64,
    /// Width of the final bracket.
    pub resolution: f64,
    pub flag: PoleFlag,
}

/// `n` radii evenly spaced on `[R_MIN, R_MAX]`.
pub fn radial_grid(n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let step = (R_MAX - R_MIN) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { R_MAX } else { R_MIN + step * i as f64 })
        .collect()
}

fn magnitude_at(s: &Scenario, strategy: Strategy, k: usize, l: usize, r: f64) -> Result<f64> {
    let z = Complex64::from_polar(r, TAU * s.control_tone(l).freq());
    transfer_function(z, k, s, strategy)
        .map(|p| p.h.norm())
        .map_err(|e| Error::Radial {
            r,
            source: Box::new(e),
        })
}

/// `|H_k(r e^{i2πf_l})|` over `r_grid`.
pub fn radial_profile(s: &Scenario, strategy: Strategy, k: usize, l: usize, r_grid: &[f64]) -> Result<Vec<f64>> {
    check_index("sensor", k, s.sensors())?;
    check_index("tone", l, s.tones())?;
    for (i, &r) in r_grid.iter().enumerate() {
        if !(R_MIN..=R_MAX).contains(&r) {
            return Err(Error::InvalidArgument(format!("radius {r} outside [{R_MIN}, {R_MAX}]")));
        }
        if i > 0 && r <= r_grid[i - 1] {
            return Err(Error::InvalidArgument("radial grid must be strictly increasing".into()));
        }
    }
    r_grid.iter().map(|&r| magnitude_at(s, strategy, k, l, r)).collect()
}

/// Locate the radial maximum of `|H_k|` at the angle of tone `l`.
pub fn estimate_pole(s: &Scenario, strategy: Strategy, k: usize, l: usize) -> Result<PoleEstimate> {
    let grid = radial_grid(COARSE_POINTS);
    let profile = radial_profile(s, strategy, k, l, &grid)?;
    let freq = s.control_tone(l).freq();
    let mut best = 0;
    for (i, &v) in profile.iter().enumerate() {
        if v > profile[best] {
            best = i;
        }
    }
    let boundary = best == 0 || best == COARSE_POINTS - 1 || profile[best] <= profile[0].max(profile[COARSE_POINTS - 1]);
    if boundary {
        return Ok(PoleEstimate {
            sensor: k,
            tone: l,
            freq,
            radius: None,
            angle: TAU * freq,
            peak: profile[best],
            resolution: grid[1] - grid[0],
            flag: PoleFlag::UnstableOrBoundary,
        });
    }

    // golden-section search on the two cells around the coarse maximum
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mag = |r: f64| magnitude_at(s, strategy, k, l, r);
    let (mut a, mut b) = (grid[best - 1], grid[best + 1]);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = mag(x1)?;
    let mut f2 = mag(x2)?;
    while b - a > RADIUS_RESOLUTION {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = mag(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = mag(x2)?;
        }
    }
    let (mut radius, mut peak) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    if profile[best] > peak {
        radius = grid[best];
        peak = profile[best];
    }
    let flag = if radius >= R_MAX {
        PoleFlag::UnstableOrBoundary
    } else {
        PoleFlag::Ok
    };
    Ok(PoleEstimate {
        sensor: k,
        tone: l,
        freq,
        radius: (flag == PoleFlag::Ok).then_some(radius),
        angle: TAU * freq,
        peak,
        resolution: b - a,
        flag,
    })
}

/// Estimates for every (sensor, tone), sensor-major.
pub fn estimate_all(s: &Scenario, strategy: Strategy, exec: Execution) -> Result<Vec<PoleEstimate>> {
    let (k, l) = (s.sensors(), s.tones());
    exec.map(k * l, |i| estimate_pole(s, strategy, i / l, i % l))
        .into_iter()
        .collect()
}

/// `|H_k|` at the estimated radius and angles `2π(f_l - δ)`, `2πf_l`, `2π(f_l + δ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleCheck {
    pub minus: f64,
    pub center: f64,
    pub plus: f64,
}

impl AngleCheck {
    pub fn adequate(&self) -> bool {
        self.center > self.minus && self.center > self.plus
    }
}

pub fn angle_check(s: &Scenario, strategy: Strategy, est: &PoleEstimate, offset: f64) -> Result<AngleCheck> {
    let r = est
        .radius
        .ok_or_else(|| Error::InvalidArgument("pole estimate carries no radius".into()))?;
    let at = |f: f64| -> Result<f64> {
        let z = Complex64::from_polar(r, TAU * f);
        Ok(transfer_function(z, est.sensor, s, strategy)?.h.norm())
    };
    Ok(AngleCheck {
        minus: at(est.freq - offset)?,
        center: at(est.freq)?,
        plus: at(est.freq + offset)?,
    })
}

/// Samples until `|excess|` last exceeds `fraction` of its peak over the first
/// `window` samples. `None` if it never settles inside the record.
pub fn settling_samples(excess: &[f64], window: usize, fraction: f64) -> Option<usize> {
    let window = window.min(excess.len());
    let initial = excess[..window].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if initial == 0.0 {
        return Some(0);
    }
    let level = fraction * initial;
    let last = excess.iter().rposition(|v| v.abs() >= level)?;
    (last + 1 < excess.len()).then_some(last + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::testing::*;

    #[test]
    fn open_loop_profile_is_flat() {
        let s = single(0.25, 0.5, 0.0);
        let p = radial_profile(&s, Strategy::Common, 0, 0, &radial_grid(32)).unwrap();
        assert!(p.iter().all(|v| (v - 1.0).abs() < 1e-14));
        let e = estimate_pole(&s, Strategy::Common, 0, 0).unwrap();
        assert_eq!(e.flag, PoleFlag::UnstableOrBoundary);
        assert_eq!(e.radius, None);
    }

    #[test]
    fn profile_rejects_bad_grids() {
        let s = single(0.25, 0.5, 0.01);
        assert!(radial_profile(&s, Strategy::Common, 0, 0, &[0.01, 0.5]).is_err());
        assert!(radial_profile(&s, Strategy::Common, 0, 0, &[0.5, 0.4]).is_err());
        assert!(radial_profile(&s, Strategy::Common, 0, 0, &[0.5, 1.0]).is_err());
    }

    #[test]
    fn single_channel_pole_radius() {
        // identity paths, f0 = 1/4: the pole pair sits on the radial line at
        // r = sqrt(1 - 2μ/(1-β)²)
        for mu in [0.005, 0.01] {
            let s = single(0.25, 0.5, mu);
            let e = estimate_pole(&s, Strategy::Common, 0, 0).unwrap();
            let expected = (1.0 - 2.0 * mu / 0.25f64).sqrt();
            let r = e.radius.unwrap();
            assert!((r - expected).abs() < 1e-5, "mu {mu}: {r} vs {expected}");
            assert!(e.resolution <= RADIUS_RESOLUTION);
        }
    }

    #[test]
    fn doubling_mu_pulls_pole_inward() {
        let r = |mu| {
            estimate_pole(&single(0.25, 0.5, mu), Strategy::Common, 0, 0)
                .unwrap()
                .radius
                .unwrap()
        };
        assert!(r(0.01) < r(0.005));
    }

    #[test]
    fn refinement_stays_near_coarse_argmax() {
        let s = single(0.25, 0.5, 0.01);
        let grid = radial_grid(COARSE_POINTS);
        let p = radial_profile(&s, Strategy::Common, 0, 0, &grid).unwrap();
        let i = (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
        let e = estimate_pole(&s, Strategy::Common, 0, 0).unwrap();
        assert!((e.radius.unwrap() - grid[i]).abs() <= grid[1] - grid[0]);
    }

    #[test]
    fn modes_agree() {
        let s = single(0.25, 0.5, 0.01);
        let a = estimate_all(&s, Strategy::Common, Execution::Sequential).unwrap();
        let b = estimate_all(&s, Strategy::Common, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn settling() {
        let decay: Vec<f64> = (0..1000).map(|n| 0.99f64.powi(n)).collect();
        let n = settling_samples(&decay, 10, 0.05).unwrap();
        // 0.99^n < 0.05 from n = 299
        assert_eq!(n, 299);
        assert_eq!(settling_samples(&[1.0; 50], 10, 0.05), None);
        assert_eq!(settling_samples(&[0.0; 50], 10, 0.05), Some(0));
    }
}
