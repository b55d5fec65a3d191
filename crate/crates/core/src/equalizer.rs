//! Time-domain multi-channel multi-tone active noise equalizer.
//!
//! Each tone `l` and actuator `j` owns an in-phase/quadrature coefficient pair
//! `w_lj = (w, ŵ)`. Secondary paths act as per-tone complex gains (phasor
//! model): the FIR form of a path is collapsed to its value at `e^{iω_l}`.
//!
//! One step at sample `n`:
//! 1. `e_k = d_k + Σ_l Σ_j (1-γ_lj) x_ljkᵀ w_lj` with true path gains,
//! 2. pseudo-errors from estimated path gains (common or multiple),
//! 3. `w_lj ← w_lj - 2μ_l Σ_k (1-γ_lj)/(1-β_lk) x̃_ljk e'`.

use std::f64::consts::TAU;
use std::fmt;

use num_complex::Complex64;

use crate::error::{check_index, Error, Result};
use crate::scenario::{Scenario, Strategy};
use crate::signal_model::{noise_sample, ReferenceSpec};

/// Coefficient magnitude beyond which a run is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Default trailing window for steady-state measurements.
pub const STEADY_STATE_WINDOW: usize = 8192;

/// Relative agreement of half-window amplitudes required to call a signal settled.
pub const CONVERGENCE_TOL: f64 = 0.005;

/// Adaptive coefficients `w_lj = (w, ŵ)` stored tone-major, plus the sample index.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveState {
    tones: usize,
    actuators: usize,
    coeffs: Vec<[f64; 2]>,
    pub n: u64,
}

impl AdaptiveState {
    pub fn zeros(tones: usize, actuators: usize) -> Self {
        Self {
            tones,
            actuators,
            coeffs: vec![[0.0; 2]; tones * actuators],
            n: 0,
        }
    }

    pub fn for_scenario(s: &Scenario) -> Self {
        Self::zeros(s.tones(), s.actuators())
    }

    pub fn get(&self, l: usize, j: usize) -> [f64; 2] {
        self.coeffs[l * self.actuators + j]
    }

    pub fn set(&mut self, l: usize, j: usize, w: [f64; 2]) {
        self.coeffs[l * self.actuators + j] = w;
    }

    pub fn coeffs(&self) -> &[[f64; 2]] {
        &self.coeffs
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.tones, self.actuators)
    }
}

/// `y_lj(n) = w x_l(n) + ŵ x̂_l(n)`, before the `(1-γ_lj)` weight.
pub fn filter_output(l: usize, j: usize, n: u64, state: &AdaptiveState, reference: &ReferenceSpec) -> Result<f64> {
    check_index("tone", l, state.tones.min(reference.len()))?;
    check_index("actuator", j, state.actuators)?;
    let r = reference.phasor(l, n);
    let [w, wh] = state.get(l, j);
    Ok(w * r.re + wh * r.im)
}

#[inline]
fn dot(x: Complex64, w: [f64; 2]) -> f64 {
    x.re * w[0] + x.im * w[1]
}

/// Per-step signal values.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSignals {
    pub d: Vec<f64>,
    pub e: Vec<f64>,
    /// `K` values (common) or `L x K` values tone-major (multiple).
    pub pseudo: Vec<f64>,
}

/// Scenario with path gains collapsed at the control frequencies.
#[derive(Debug, Clone)]
pub struct Equalizer<'a> {
    scenario: &'a Scenario,
    strategy: Strategy,
    j: usize,
    k: usize,
    l: usize,
    /// `C_jk(e^{iω_l})` at `(l*J + j)*K + k`
    true_gain: Vec<Complex64>,
    /// `C̃_jk(e^{iω_l})`, same layout
    est_gain: Vec<Complex64>,
}

impl<'a> Equalizer<'a> {
    pub fn new(scenario: &'a Scenario) -> Result<Self> {
        let (j, k, l) = (scenario.actuators(), scenario.sensors(), scenario.tones());
        let mut true_gain = Vec::with_capacity(l * j * k);
        let mut est_gain = Vec::with_capacity(l * j * k);
        for li in 0..l {
            let z = scenario.control_tone(li).unit_point();
            for ji in 0..j {
                for ki in 0..k {
                    true_gain.push(scenario.paths.true_path(ji, ki).gain(z)?);
                    est_gain.push(scenario.paths.estimate(ji, ki).gain(z)?);
                }
            }
        }
        Ok(Self {
            scenario,
            strategy: scenario.equalizer.strategy,
            j,
            k,
            l,
            true_gain,
            est_gain,
        })
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    #[inline]
    fn gidx(&self, l: usize, j: usize, k: usize) -> usize {
        (l * self.j + j) * self.k + k
    }

    fn references(&self, n: u64) -> Vec<Complex64> {
        (0..self.l).map(|l| self.scenario.reference.phasor(l, n)).collect()
    }

    fn check_state(&self, state: &AdaptiveState) -> Result<()> {
        if state.dims() != (self.l, self.j) {
            return Err(Error::InvalidArgument(format!(
                "state has {:?} tones x actuators, scenario needs ({}, {})",
                state.dims(),
                self.l,
                self.j
            )));
        }
        Ok(())
    }

    /// `e_k(n)`
    fn error_with(&self, k: usize, n: u64, state: &AdaptiveState, refs: &[Complex64]) -> f64 {
        let eq = &self.scenario.equalizer;
        let mut secondary = 0.0;
        for (l, r) in refs.iter().enumerate() {
            for j in 0..self.j {
                let x = self.true_gain[self.gidx(l, j, k)] * r;
                secondary += (1.0 - eq.gamma[l][j]) * dot(x, state.get(l, j));
            }
        }
        noise_sample(k, n, &self.scenario.noise) + secondary
    }

    /// `Σ_j (1-γ_lj)/(1-β_lk) β_lk x̃_ljkᵀ w_lj`
    fn correction(&self, l: usize, k: usize, state: &AdaptiveState, refs: &[Complex64]) -> f64 {
        let eq = &self.scenario.equalizer;
        let beta = eq.beta[l][k];
        let mut acc = 0.0;
        for j in 0..self.j {
            let xt = self.est_gain[self.gidx(l, j, k)] * refs[l];
            acc += eq.weight(l, j, k) * beta * dot(xt, state.get(l, j));
        }
        acc
    }

    fn common_with(&self, k: usize, e: f64, state: &AdaptiveState, refs: &[Complex64]) -> f64 {
        let total = (0..self.l)
            .map(|l| self.correction(l, k, state, refs))
            .reduce(|a, b| a + b)
            .unwrap_or(0.0);
        e + total
    }

    pub fn sensor_error(&self, k: usize, n: u64, state: &AdaptiveState) -> Result<f64> {
        check_index("sensor", k, self.k)?;
        self.check_state(state)?;
        Ok(self.error_with(k, n, state, &self.references(n)))
    }

    pub fn pseudo_error_common(&self, k: usize, n: u64, state: &AdaptiveState) -> Result<f64> {
        check_index("sensor", k, self.k)?;
        self.check_state(state)?;
        let refs = self.references(n);
        let e = self.error_with(k, n, state, &refs);
        Ok(self.common_with(k, e, state, &refs))
    }

    pub fn pseudo_error_multiple(&self, l: usize, k: usize, n: u64, state: &AdaptiveState) -> Result<f64> {
        check_index("tone", l, self.l)?;
        check_index("sensor", k, self.k)?;
        self.check_state(state)?;
        let refs = self.references(n);
        let e = self.error_with(k, n, state, &refs);
        Ok(e + self.correction(l, k, state, &refs))
    }

    /// Advance `state` by one sample and return the signals seen at that sample.
    pub fn lms_step(&self, state: &mut AdaptiveState) -> Result<StepSignals> {
        self.check_state(state)?;
        let n = state.n;
        let refs = self.references(n);
        let d: Vec<f64> = (0..self.k).map(|k| noise_sample(k, n, &self.scenario.noise)).collect();
        let e: Vec<f64> = (0..self.k).map(|k| self.error_with(k, n, state, &refs)).collect();
        let pseudo: Vec<f64> = match self.strategy {
            Strategy::Common => (0..self.k).map(|k| self.common_with(k, e[k], state, &refs)).collect(),
            Strategy::Multiple => (0..self.l)
                .flat_map(|l| (0..self.k).map(move |k| (l, k)))
                .map(|(l, k)| e[k] + self.correction(l, k, state, &refs))
                .collect(),
        };

        let eq = &self.scenario.equalizer;
        let mut next = state.clone();
        for l in 0..self.l {
            let step = 2.0 * eq.mu[l];
            for j in 0..self.j {
                let mut grad = [0.0; 2];
                for k in 0..self.k {
                    let ep = match self.strategy {
                        Strategy::Common => pseudo[k],
                        Strategy::Multiple => pseudo[l * self.k + k],
                    };
                    let xt = self.est_gain[self.gidx(l, j, k)] * refs[l];
                    let q = eq.weight(l, j, k);
                    grad[0] += q * xt.re * ep;
                    grad[1] += q * xt.im * ep;
                }
                let [w, wh] = state.get(l, j);
                let updated = [w - step * grad[0], wh - step * grad[1]];
                if updated.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
                    return Err(Error::Divergence { l, j, n });
                }
                next.set(l, j, updated);
            }
        }
        next.n = n + 1;
        *state = next;
        Ok(StepSignals { d, e, pseudo })
    }

    /// Run from zero coefficients for `steps` samples.
    pub fn run(&self, steps: usize, options: &TraceOptions) -> Result<SimulationTrace, SimulationError> {
        let mut trace = SimulationTrace::empty(self.k, self.strategy, options.record_pseudo_error);
        if steps == 0 {
            return Err(SimulationError {
                partial: Box::new(trace),
                cause: Error::InvalidArgument("steps must be >= 1".into()),
            });
        }
        let mut state = AdaptiveState::zeros(self.l, self.j);
        for _ in 0..steps {
            if let Some(dec) = options.coeff_decimation {
                if dec > 0 && state.n.is_multiple_of(dec as u64) {
                    trace.coeffs.push(state.clone());
                }
            }
            match self.lms_step(&mut state) {
                Ok(sig) => trace.push(sig),
                Err(cause) => {
                    return Err(SimulationError {
                        partial: Box::new(trace),
                        cause,
                    })
                }
            }
        }
        trace.final_state = Some(state);
        Ok(trace)
    }
}

pub fn sensor_error(k: usize, n: u64, state: &AdaptiveState, scenario: &Scenario) -> Result<f64> {
    Equalizer::new(scenario)?.sensor_error(k, n, state)
}

pub fn pseudo_error_common(k: usize, n: u64, state: &AdaptiveState, scenario: &Scenario) -> Result<f64> {
    Equalizer::new(scenario)?.pseudo_error_common(k, n, state)
}

pub fn pseudo_error_multiple(l: usize, k: usize, n: u64, state: &AdaptiveState, scenario: &Scenario) -> Result<f64> {
    Equalizer::new(scenario)?.pseudo_error_multiple(l, k, n, state)
}

/// One LMS update at `state.n`, returning the new state.
pub fn lms_step(state: &AdaptiveState, scenario: &Scenario) -> Result<AdaptiveState> {
    let mut next = state.clone();
    Equalizer::new(scenario)?.lms_step(&mut next)?;
    Ok(next)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceOptions {
    pub record_pseudo_error: bool,
    /// Snapshot coefficients every `n` samples.
    pub coeff_decimation: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub sensors: usize,
    pub strategy: Strategy,
    /// `d[k][n]`
    pub d: Vec<Vec<f64>>,
    /// `e[k][n]`
    pub e: Vec<Vec<f64>>,
    /// Per-sample pseudo-errors when requested, layout as in [`StepSignals`].
    pub pseudo: Option<Vec<Vec<f64>>>,
    pub coeffs: Vec<AdaptiveState>,
    pub final_state: Option<AdaptiveState>,
}

impl SimulationTrace {
    fn empty(sensors: usize, strategy: Strategy, pseudo: bool) -> Self {
        Self {
            sensors,
            strategy,
            d: vec![Vec::new(); sensors],
            e: vec![Vec::new(); sensors],
            pseudo: pseudo.then(Vec::new),
            coeffs: Vec::new(),
            final_state: None,
        }
    }

    fn push(&mut self, sig: StepSignals) {
        for k in 0..self.sensors {
            self.d[k].push(sig.d[k]);
            self.e[k].push(sig.e[k]);
        }
        if let Some(p) = &mut self.pseudo {
            p.push(sig.pseudo);
        }
    }

    pub fn len(&self) -> usize {
        self.e.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A run that stopped early; carries what was recorded before the failure.
#[derive(Debug)]
pub struct SimulationError {
    pub partial: Box<SimulationTrace>,
    pub cause: Error,
}

impl fmt::Display for SimulationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "simulation stopped after {} samples: {}", self.partial.len(), self.cause)
    }
}

impl std::error::Error for SimulationError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.cause)
    }
}

pub fn run_simulation(scenario: &Scenario, steps: usize, options: &TraceOptions) -> Result<SimulationTrace, SimulationError> {
    let eq = Equalizer::new(scenario).map_err(|cause| SimulationError {
        partial: Box::new(SimulationTrace::empty(scenario.sensors(), scenario.equalizer.strategy, false)),
        cause,
    })?;
    eq.run(steps, options)
}

/// Amplitude of the `f` component over the last `window` samples:
/// `(2/W) |Σ s(n) e^{-i2πfn}|`.
pub fn tone_amplitude(signal: &[f64], f: f64, window: usize) -> Result<f64> {
    if !(f > 0.0 && f < 0.5) {
        return Err(Error::InvalidArgument(format!("frequency {f} outside (0, 0.5)")));
    }
    if window > signal.len() {
        return Err(Error::InvalidArgument(format!(
            "window {window} longer than signal ({})",
            signal.len()
        )));
    }
    if (window as f64) < 2.0 / f {
        return Err(Error::InvalidArgument(format!(
            "window {window} shorter than two periods of f = {f}"
        )));
    }
    let tail = &signal[signal.len() - window..];
    let omega = TAU * f;
    let acc = tail
        .iter()
        .enumerate()
        .fold(Complex64::new(0.0, 0.0), |acc, (n, &s)| {
            let arg = omega * n as f64;
            acc + Complex64::new(s * arg.cos(), -s * arg.sin())
        });
    Ok(2.0 * acc.norm() / window as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    pub amplitude: f64,
    pub first_half: f64,
    pub second_half: f64,
    pub converged: bool,
}

/// Trailing-window amplitude plus a settledness flag from the two half windows.
pub fn steady_state(signal: &[f64], f: f64, window: usize) -> Result<SteadyState> {
    let amplitude = tone_amplitude(signal, f, window)?;
    let half = window / 2;
    let second_half = tone_amplitude(signal, f, half)?;
    let first_half = tone_amplitude(&signal[..signal.len() - half], f, half)?;
    let scale = first_half.max(second_half);
    let converged = scale < 1e-12 || (first_half - second_half).abs() <= CONVERGENCE_TOL * scale;
    Ok(SteadyState {
        amplitude,
        first_half,
        second_half,
        converged,
    })
}
