//! Sensor transfer functions `H_k(z) = E_k(z) / D_k(z)` of the equalizer.
//!
//! For each evaluation point `z` a `(K + LJ)`-square complex system
//!
//! ```text
//! [ A  B ] [ f ]   [ u ]
//! [ D  E ] [ g ] = [ v ]
//! ```
//!
//! is assembled and solved; `H_k = 1 / f_1`. The unknowns are
//! `f = (1/H_k, E_m/E_k for m ≠ k)` and `g = (Y_lj / E_k)`. The target sensor
//! is moved to position 1 by permuting every sensor-indexed quantity.
//!
//! The auxiliary functions `G_ljk(z)` carry the adaptive loop. They are
//! singular at `e^{±iω_l}`, so values at a control frequency come from the
//! two-sided limit in [`control_frequency_gain`].

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{check_index, Error, Result};
use crate::exec::Execution;
use crate::linalg::{solve, ComplexMatrix};
use crate::scenario::{Scenario, Strategy};

/// Raw evaluations closer than this to `e^{±iω_l}` are rejected.
pub const POLE_GUARD: f64 = 1e-9;

/// Angular offset used by the two-sided control-frequency limit.
pub const CONTROL_EPS: f64 = 1e-5 * TAU;

/// Relative disagreement between the two sides that raises a flag.
pub const SIDE_DISAGREE_TOL: f64 = 1e-3;

/// Smallest sweep grid accepted.
pub const MIN_GRID: usize = 16;

/// Default number of sweep points.
pub const DEFAULT_GRID: usize = 4096;

/// A sweep fails as a whole when more than this fraction of points fail.
pub const MAX_FAILED_FRACTION: f64 = 0.01;

const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// One auxiliary function `G(z)` with its parameters spelled out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxGain {
    pub omega: f64,
    pub mu: f64,
    /// Estimated path magnitude `Ã` at `ω`.
    pub est_amp: f64,
    /// Estimated path phase `φ̃` at `ω`.
    pub est_phase: f64,
    pub gamma: f64,
    pub beta: f64,
    /// Reference amplitude; enters squared (once in the output, once in the gradient).
    pub ref_amp: f64,
}

impl AuxGain {
    pub fn is_zero(&self) -> bool {
        self.mu == 0.0 || self.gamma == 1.0 || self.est_amp == 0.0 || self.ref_amp == 0.0
    }

    pub fn check_guard(&self, z: Complex64) -> Result<()> {
        let p = Complex64::from_polar(1.0, self.omega);
        if (z - p).norm() < POLE_GUARD || (z - p.conj()).norm() < POLE_GUARD {
            return Err(Error::PoleProximity {
                z,
                freq: self.omega / TAU,
            });
        }
        Ok(())
    }

    /// `-2μ Ã A_ref² (1-γ) [z cos(ω-φ̃) - cos φ̃] / [(1-β)(z² - 2z cos ω + 1)]`
    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        self.check_guard(z)?;
        let num = z * (self.omega - self.est_phase).cos() - self.est_phase.cos();
        let den = (z * z - z * (2.0 * self.omega.cos()) + 1.0) * (1.0 - self.beta);
        let scale = -2.0 * self.mu * self.est_amp * self.ref_amp * self.ref_amp * (1.0 - self.gamma);
        Ok(num * scale / den)
    }

    /// `|G(e^{iω})|` on the unit circle.
    pub fn magnitude_at(&self, omega: f64) -> Result<f64> {
        Ok(self.eval(Complex64::from_polar(1.0, omega))?.norm())
    }

    /// Width (radians) of the interval around the pole where `|G(e^{iω})| ≥ level`.
    ///
    /// Each edge is bracketed by stepping outwards from the pole and then
    /// bisected to `tol` radians. Returns `None` if the level is never reached
    /// inside `(0, π)`.
    pub fn level_width(&self, level: f64, tol: f64) -> Option<f64> {
        let edge = |dir: f64| -> Option<f64> {
            let limit = if dir > 0.0 { std::f64::consts::PI - self.omega } else { self.omega };
            let mag = |d: f64| self.magnitude_at(self.omega + dir * d).unwrap_or(f64::INFINITY);
            let mut inner = 1e-7;
            if mag(inner) < level {
                return None;
            }
            let mut outer = inner;
            loop {
                outer = (outer * 2.0).min(limit);
                if mag(outer) < level {
                    break;
                }
                if outer >= limit {
                    return Some(limit);
                }
                inner = outer;
            }
            while outer - inner > tol {
                let mid = 0.5 * (inner + outer);
                if mag(mid) >= level {
                    inner = mid;
                } else {
                    outer = mid;
                }
            }
            Some(0.5 * (inner + outer))
        };
        Some(edge(1.0)? + edge(-1.0)?)
    }
}

/// Path and loop quantities of a scenario evaluated at one point `z`.
struct PointEval {
    /// `G_ljk(z)` at `(l*J + j)*K + k`
    g: Vec<Complex64>,
    /// `C_jk(z)` at `j*K + k`
    c: Vec<Complex64>,
    /// `C̃_jk(z)` at `j*K + k`
    ct: Vec<Complex64>,
    /// `P_k(z)`
    p: Vec<Complex64>,
    j: usize,
    k: usize,
}

impl PointEval {
    fn new(z: Complex64, s: &Scenario) -> Result<Self> {
        let (j, k, l) = (s.actuators(), s.sensors(), s.tones());
        let mut g = Vec::with_capacity(l * j * k);
        for li in 0..l {
            for ji in 0..j {
                for ki in 0..k {
                    g.push(aux_for(s, li, ji, ki)?.eval(z)?);
                }
            }
        }
        let mut c = Vec::with_capacity(j * k);
        let mut ct = Vec::with_capacity(j * k);
        for ji in 0..j {
            for ki in 0..k {
                c.push(s.paths.true_path(ji, ki).gain(z)?);
                ct.push(s.paths.estimate(ji, ki).gain(z)?);
            }
        }
        let p = s.primary_paths.iter().map(|p| p.gain(z)).collect::<Result<_>>()?;
        Ok(Self { g, c, ct, p, j, k })
    }

    #[inline]
    fn g(&self, l: usize, j: usize, k: usize) -> Complex64 {
        self.g[(l * self.j + j) * self.k + k]
    }

    #[inline]
    fn c(&self, j: usize, k: usize) -> Complex64 {
        self.c[j * self.k + k]
    }

    #[inline]
    fn ct(&self, j: usize, k: usize) -> Complex64 {
        self.ct[j * self.k + k]
    }
}

/// The auxiliary function of tone `l`, actuator `j`, sensor `k`.
pub fn aux_for(s: &Scenario, l: usize, j: usize, k: usize) -> Result<AuxGain> {
    check_index("tone", l, s.tones())?;
    check_index("actuator", j, s.actuators())?;
    check_index("sensor", k, s.sensors())?;
    let tone = s.reference.tones[l];
    let est = s.paths.estimate(j, k).gain(tone.tone.unit_point())?;
    Ok(AuxGain {
        omega: tone.tone.omega(),
        mu: s.equalizer.mu[l],
        est_amp: est.norm(),
        est_phase: est.arg(),
        gamma: s.equalizer.gamma[l][j],
        beta: s.equalizer.beta[l][k],
        ref_amp: tone.amplitude,
    })
}

/// `G_jm(z)` of a single-frequency scenario, in the
/// `-2μ Ã (1-γ)/(1-β) · ratio` arrangement.
pub fn aux_gain_single(z: Complex64, j: usize, m: usize, s: &Scenario) -> Result<Complex64> {
    if s.tones() != 1 {
        return Err(Error::InvalidArgument(format!(
            "single-frequency auxiliary gain needs L = 1, scenario has {}",
            s.tones()
        )));
    }
    let a = aux_for(s, 0, j, m)?;
    a.check_guard(z)?;
    let w0 = a.omega;
    let ratio = (z * (w0 - a.est_phase).cos() - a.est_phase.cos()) / (z * z - z * (2.0 * w0.cos()) + 1.0);
    let weight = (1.0 - a.gamma) / (1.0 - a.beta);
    Ok(ratio * (-2.0 * a.mu * a.est_amp * a.ref_amp * a.ref_amp * weight))
}

/// `G_ljk(z)`
pub fn aux_gain_multi(z: Complex64, l: usize, j: usize, k: usize, s: &Scenario) -> Result<Complex64> {
    aux_for(s, l, j, k)?.eval(z)
}

/// An assembled system for one sensor at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct TfSystem {
    pub matrix: ComplexMatrix,
    pub rhs: Vec<Complex64>,
    pub target_sensor: usize,
    pub z: Complex64,
    pub sensors: usize,
    pub actuators: usize,
    pub tones: usize,
}

impl TfSystem {
    pub fn dim(&self) -> usize {
        self.sensors + self.tones * self.actuators
    }
}

/// Sensor order with `target` first, the rest ascending.
fn permutation(target: usize, k: usize) -> Vec<usize> {
    std::iter::once(target).chain((0..k).filter(|&m| m != target)).collect()
}

/// `a_f1 = P_f/P_1`, `a_ff = -1` (f ≠ 1)
fn a_entry(pe: &PointEval, perm: &[usize], f: usize, c: usize) -> Complex64 {
    if c == 0 {
        pe.p[perm[f]] / pe.p[perm[0]]
    } else if f == c {
        -ONE
    } else {
        ZERO
    }
}

/// `-(1-γ_Cc) Σ_k β_Ck/(1-β_Ck) G_Ffk C̃_ck`, plus one on the diagonal.
fn e_entry(s: &Scenario, pe: &PointEval, perm: &[usize], row: (usize, usize), col: (usize, usize)) -> Complex64 {
    let (lf, f) = row;
    let (lc, c) = col;
    let beta = &s.equalizer.beta[lc];
    let mut acc = ZERO;
    for &m in perm {
        acc += pe.g(lf, f, m) * pe.ct(c, m) * (beta[m] / (1.0 - beta[m]));
    }
    let diag = if lf == lc && f == c { ONE } else { ZERO };
    diag - acc * (1.0 - s.equalizer.gamma[lc][c])
}

fn check_target(s: &Scenario, target: usize) -> Result<()> {
    check_index("sensor", target, s.sensors())
}

/// Single-frequency system of size `K + J`.
pub fn assemble_single(z: Complex64, s: &Scenario, target: usize) -> Result<TfSystem> {
    if s.tones() != 1 {
        return Err(Error::InvalidArgument(format!(
            "single-frequency assembly needs L = 1, scenario has {}",
            s.tones()
        )));
    }
    check_target(s, target)?;
    let pe = PointEval::new(z, s)?;
    let (j, k) = (s.actuators(), s.sensors());
    let perm = permutation(target, k);
    let n = k + j;
    let mut m = ComplexMatrix::zeros(n, n);
    let mut rhs = vec![ZERO; n];

    for f in 0..k {
        for c in 0..k {
            m[(f, c)] = a_entry(&pe, &perm, f, c);
        }
        for c in 0..j {
            m[(f, k + c)] = pe.c(c, perm[f]) * (1.0 - s.equalizer.gamma[0][c]);
        }
    }
    rhs[0] = ONE;
    for f in 0..j {
        for c in 1..k {
            m[(k + f, c)] = -pe.g(0, f, perm[c]);
        }
        for c in 0..j {
            m[(k + f, k + c)] = e_entry(s, &pe, &perm, (0, f), (0, c));
        }
        rhs[k + f] = pe.g(0, f, perm[0]);
    }
    Ok(TfSystem {
        matrix: m,
        rhs,
        target_sensor: target,
        z,
        sensors: k,
        actuators: j,
        tones: 1,
    })
}

/// Multi-frequency system of size `K + LJ` for either strategy.
pub fn assemble(z: Complex64, s: &Scenario, target: usize, strategy: Strategy) -> Result<TfSystem> {
    check_target(s, target)?;
    let pe = PointEval::new(z, s)?;
    let (j, k, l) = (s.actuators(), s.sensors(), s.tones());
    let perm = permutation(target, k);
    let n = k + l * j;
    let mut m = ComplexMatrix::zeros(n, n);
    let mut rhs = vec![ZERO; n];
    let col = |li: usize, ji: usize| k + li * j + ji;

    for f in 0..k {
        for c in 0..k {
            m[(f, c)] = a_entry(&pe, &perm, f, c);
        }
        for li in 0..l {
            for c in 0..j {
                m[(f, col(li, c))] = pe.c(c, perm[f]) * (1.0 - s.equalizer.gamma[li][c]);
            }
        }
    }
    rhs[0] = ONE;
    for lf in 0..l {
        for f in 0..j {
            let row = col(lf, f);
            for c in 1..k {
                m[(row, c)] = -pe.g(lf, f, perm[c]);
            }
            for lc in 0..l {
                if strategy == Strategy::Multiple && lc != lf {
                    continue;
                }
                for c in 0..j {
                    m[(row, col(lc, c))] = e_entry(s, &pe, &perm, (lf, f), (lc, c));
                }
            }
            rhs[row] = pe.g(lf, f, perm[0]);
        }
    }
    Ok(TfSystem {
        matrix: m,
        rhs,
        target_sensor: target,
        z,
        sensors: k,
        actuators: j,
        tones: l,
    })
}

pub fn assemble_common(z: Complex64, s: &Scenario, target: usize) -> Result<TfSystem> {
    assemble(z, s, target, Strategy::Common)
}

pub fn assemble_multiple(z: Complex64, s: &Scenario, target: usize) -> Result<TfSystem> {
    assemble(z, s, target, Strategy::Multiple)
}

/// `H_k` at one point with the solver residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TfPoint {
    pub h: Complex64,
    pub residual: f64,
    /// `f_1` vanished: `z` sits on a pole of `H_k`.
    pub near_pole: bool,
}

/// All sensors' transfer functions at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct TfValue {
    pub z: Complex64,
    pub h: Vec<Complex64>,
    pub residual: f64,
    pub near_pole: bool,
}

fn guard_all(z: Complex64, s: &Scenario) -> Result<()> {
    for t in &s.reference.tones {
        let p = t.tone.unit_point();
        if (z - p).norm() < POLE_GUARD || (z - p.conj()).norm() < POLE_GUARD {
            return Err(Error::PoleProximity { z, freq: t.tone.freq() });
        }
    }
    Ok(())
}

/// `H_k(z)` for sensor `k` by assembling and solving the block system.
pub fn transfer_function(z: Complex64, k: usize, s: &Scenario, strategy: Strategy) -> Result<TfPoint> {
    guard_all(z, s)?;
    let sys = assemble(z, s, k, strategy)?;
    let sol = solve(&sys.matrix, &sys.rhs)?;
    let f1 = sol.x[0];
    let near_pole = f1 == ZERO || !f1.is_finite();
    let h = if near_pole {
        Complex64::new(f64::INFINITY, 0.0)
    } else {
        f1.inv()
    };
    Ok(TfPoint {
        h,
        residual: sol.residual,
        near_pole,
    })
}

pub fn transfer_functions(z: Complex64, s: &Scenario, strategy: Strategy) -> Result<TfValue> {
    let mut h = Vec::with_capacity(s.sensors());
    let mut residual: f64 = 0.0;
    let mut near_pole = false;
    for k in 0..s.sensors() {
        let p = transfer_function(z, k, s, strategy)?;
        h.push(p.h);
        residual = residual.max(p.residual);
        near_pole |= p.near_pole;
    }
    Ok(TfValue {
        z,
        h,
        residual,
        near_pole,
    })
}

/// Closed-form `H_1(z)` of a single-channel single-tone equalizer.
///
/// At `e^{±iω_0}` the removable singularity is resolved by its limit
/// `β C̃ / ((1-β) C + β C̃)`.
pub fn closed_form_single(z: Complex64, s: &Scenario) -> Result<Complex64> {
    if s.tones() != 1 || s.actuators() != 1 || s.sensors() != 1 {
        return Err(Error::InvalidArgument("closed form needs K = J = L = 1".into()));
    }
    let aux = aux_for(s, 0, 0, 0)?;
    if aux.is_zero() {
        return Ok(ONE);
    }
    let beta = s.equalizer.beta[0][0];
    let gamma = s.equalizer.gamma[0][0];
    let q = (1.0 - gamma) / (1.0 - beta);
    let p0 = s.control_tone(0).unit_point();
    let on_pole = |p: Complex64| (z - p).norm() < POLE_GUARD;
    if on_pole(p0) || on_pole(p0.conj()) {
        let at = if on_pole(p0) { p0 } else { p0.conj() };
        let c = s.paths.true_path(0, 0).gain(at)?;
        let ct = s.paths.estimate(0, 0).gain(at)?;
        return Ok(ct * beta / (c * (1.0 - beta) + ct * beta));
    }
    let g = aux.eval(z)?;
    let c = s.paths.true_path(0, 0).gain(z)?;
    let ct = s.paths.estimate(0, 0).gain(z)?;
    let num = ONE - g * ct * (q * beta);
    let den = ONE - g * c * q + g * (c - ct) * (q * beta);
    Ok(num / den)
}

/// Value of `H_k` at a control frequency from the two-sided limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlGain {
    pub value: Complex64,
    pub minus: Complex64,
    pub plus: Complex64,
    /// The two sides differ by more than [`SIDE_DISAGREE_TOL`] relative.
    pub sides_disagree: bool,
}

pub fn control_frequency_gain(k: usize, l: usize, s: &Scenario, strategy: Strategy) -> Result<ControlGain> {
    control_frequency_gain_with(k, l, s, strategy, CONTROL_EPS)
}

/// [`control_frequency_gain`] with an explicit angular offset.
pub fn control_frequency_gain_with(
    k: usize,
    l: usize,
    s: &Scenario,
    strategy: Strategy,
    eps: f64,
) -> Result<ControlGain> {
    check_index("sensor", k, s.sensors())?;
    check_index("tone", l, s.tones())?;
    let tone = s.control_tone(l);
    let side = |sign: f64| {
        let z = Complex64::from_polar(1.0, tone.omega() + sign * eps);
        transfer_function(z, k, s, strategy)
    };
    let nan = Complex64::new(f64::NAN, f64::NAN);
    let (minus, plus) = match (side(-1.0), side(1.0)) {
        (Ok(m), Ok(p)) if !m.near_pole && !p.near_pole => (m.h, p.h),
        (m, p) => {
            return Err(Error::NearPole {
                freq: tone.freq(),
                minus: m.map(|v| v.h).unwrap_or(nan),
                plus: p.map(|v| v.h).unwrap_or(nan),
            })
        }
    };
    let value = (minus + plus) * 0.5;
    let scale = value.norm().max(f64::MIN_POSITIVE);
    Ok(ControlGain {
        value,
        minus,
        plus,
        sides_disagree: (plus - minus).norm() > SIDE_DISAGREE_TOL * scale.max(1e-300),
    })
}

/// Status of one sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointFlag {
    Ok,
    /// Substituted by the control-frequency limit.
    Control,
    /// Evaluation landed on a pole of `H`.
    NearPole,
    Failed,
}

impl PointFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            PointFlag::Ok => "ok",
            PointFlag::Control => "control",
            PointFlag::NearPole => "near_pole",
            PointFlag::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub sensor: usize,
    pub radius: f64,
    /// Normalized frequencies, strictly increasing in `[0, 0.5)`.
    pub freqs: Vec<f64>,
    pub values: Vec<Complex64>,
    pub flags: Vec<PointFlag>,
}

impl SweepTable {
    pub fn magnitude(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    pub fn phase(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.arg()).collect()
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }
}

/// Uniform grid `f_i = i / (2 N)` for `i < N`.
pub fn sweep_grid(grid_size: usize) -> Vec<f64> {
    (0..grid_size).map(|i| 0.5 * i as f64 / grid_size as f64).collect()
}

/// Evaluate `H_k(r e^{i2πf})` over a uniform frequency grid.
pub fn sweep(
    s: &Scenario,
    k: usize,
    strategy: Strategy,
    grid_size: usize,
    radius: f64,
    exec: Execution,
) -> Result<SweepTable> {
    check_index("sensor", k, s.sensors())?;
    if grid_size < MIN_GRID {
        return Err(Error::InvalidArgument(format!("grid size {grid_size} below {MIN_GRID}")));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidArgument(format!("radius {radius} must be positive")));
    }
    let freqs = sweep_grid(grid_size);
    let nan = Complex64::new(f64::NAN, f64::NAN);
    let points = exec.map(grid_size, |i| {
        let z = Complex64::from_polar(radius, TAU * freqs[i]);
        let control = s.reference.tones.iter().position(|t| {
            let p = t.tone.unit_point();
            (z - p).norm() < POLE_GUARD || (z - p.conj()).norm() < POLE_GUARD
        });
        match control {
            Some(l) => match control_frequency_gain(k, l, s, strategy) {
                Ok(g) => (g.value, PointFlag::Control),
                Err(_) => (nan, PointFlag::Failed),
            },
            None => match transfer_function(z, k, s, strategy) {
                Ok(p) if p.near_pole => (p.h, PointFlag::NearPole),
                Ok(p) => (p.h, PointFlag::Ok),
                Err(_) => (nan, PointFlag::Failed),
            },
        }
    });
    let failed = points.iter().filter(|p| p.1 == PointFlag::Failed).count();
    if failed as f64 > MAX_FAILED_FRACTION * grid_size as f64 {
        return Err(Error::SweepFailed {
            failed,
            total: grid_size,
        });
    }
    let (values, flags) = points.into_iter().unzip();
    Ok(SweepTable {
        sensor: k,
        radius,
        freqs,
        values,
        flags,
    })
}

/// `G_jm(e^{i2πf})` of tone `l` over the sweep grid; `None` inside the pole guard.
pub fn aux_gain_sweep(s: &Scenario, l: usize, j: usize, m: usize, grid_size: usize) -> Result<Vec<(f64, Option<Complex64>)>> {
    let aux = aux_for(s, l, j, m)?;
    Ok(sweep_grid(grid_size)
        .into_iter()
        .map(|f| (f, aux.eval(Complex64::from_polar(1.0, TAU * f)).ok()))
        .collect())
}
