//! The full problem description shared by the simulator and the analysis.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result, Violation};
use crate::signal_model::{NoiseField, PathMatrix, PathResponse, ReferenceSpec, ToneSpec};

/// How the pseudo-error fed to the LMS update is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Strategy {
    /// One pseudo-error per sensor, corrected by every tone.
    #[default]
    Common,
    /// One pseudo-error per (tone, sensor), corrected by its own tone only.
    Multiple,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Common => "common",
            Strategy::Multiple => "multiple",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "common" => Ok(Strategy::Common),
            "multiple" => Ok(Strategy::Multiple),
            other => Err(Error::InvalidArgument(format!(
                "unknown strategy {other:?} (expected common or multiple)"
            ))),
        }
    }
}

/// Equalizer settings. Tables are indexed by tone first.
#[derive(Debug, Clone, PartialEq)]
pub struct EqualizerConfig {
    /// `beta[l][k]`: target residual ratio of tone `l` at sensor `k`.
    pub beta: Vec<Vec<f64>>,
    /// `gamma[l][j]`: output attenuation of tone `l` at actuator `j`.
    pub gamma: Vec<Vec<f64>>,
    /// `mu[l]`: step size of tone `l`.
    pub mu: Vec<f64>,
    pub strategy: Strategy,
}

impl EqualizerConfig {
    /// `(1 - γ_lj) / (1 - β_lk)`
    #[inline]
    pub fn weight(&self, l: usize, j: usize, k: usize) -> f64 {
        (1.0 - self.gamma[l][j]) / (1.0 - self.beta[l][k])
    }
}

/// Settings used by the cross-validation harness.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckSettings {
    pub probe_freq: Option<f64>,
    pub probe_amplitude: f64,
    pub sim_steps: u64,
}

impl Default for CheckSettings {
    fn default() -> Self {
        Self {
            probe_freq: None,
            probe_amplitude: 1.0,
            sim_steps: 200_000,
        }
    }
}

/// A validated, immutable scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub reference: ReferenceSpec,
    /// Noise at the sensors. The first `L` tones coincide with the reference.
    pub noise: NoiseField,
    pub paths: PathMatrix,
    /// `P_k`, one per sensor.
    pub primary_paths: Vec<PathResponse>,
    pub equalizer: EqualizerConfig,
    pub checks: CheckSettings,
    /// Free-form note carried through canonical serialization.
    pub notes: Option<String>,
}

impl Scenario {
    /// Validate and wrap the parts.
    pub fn new(
        name: impl Into<String>,
        reference: ReferenceSpec,
        noise: NoiseField,
        paths: PathMatrix,
        primary_paths: Vec<PathResponse>,
        equalizer: EqualizerConfig,
    ) -> Result<Self> {
        Self {
            name: name.into(),
            reference,
            noise,
            paths,
            primary_paths,
            equalizer,
            checks: CheckSettings::default(),
            notes: None,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        let v = self.violations();
        if v.is_empty() {
            Ok(self)
        } else {
            Err(Error::Invalid(v))
        }
    }

    pub fn actuators(&self) -> usize {
        self.paths.actuators()
    }

    pub fn sensors(&self) -> usize {
        self.noise.sensors()
    }

    pub fn tones(&self) -> usize {
        self.reference.len()
    }

    pub fn control_tone(&self, l: usize) -> ToneSpec {
        self.reference.tones[l].tone
    }

    pub fn control_freqs(&self) -> Vec<f64> {
        self.reference.tones.iter().map(|t| t.tone.freq()).collect()
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.equalizer.strategy = strategy;
        self
    }

    pub fn with_mu(mut self, mu: &[f64]) -> Result<Self> {
        self.equalizer.mu = mu.to_vec();
        self.validated()
    }

    /// Every invariant violation, in document order.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let j_count = self.paths.actuators();
        let k_count = self.noise.sensors();
        let l_count = self.reference.len();

        if l_count == 0 {
            out.push(Violation::new("tones", "must list at least one tone"));
        }
        if j_count == 0 {
            out.push(Violation::new("paths.true", "must have at least one actuator"));
        }
        if k_count == 0 {
            out.push(Violation::new("noise.amplitude", "must have at least one sensor"));
        }

        // tones
        for (l, t) in self.reference.tones.iter().enumerate() {
            let f = t.tone.freq();
            if !(f > 0.0 && f < 0.5) {
                out.push(Violation::new(format!("tones[{}]", l + 1), format!("= {f} outside (0, 0.5)")));
            }
            if !(t.amplitude > 0.0 && t.amplitude.is_finite()) {
                out.push(Violation::new(
                    format!("reference.amplitude[{}]", l + 1),
                    format!("= {} must be positive", t.amplitude),
                ));
            }
            if !t.phase.is_finite() {
                out.push(Violation::new(format!("reference.phase[{}]", l + 1), "must be finite"));
            }
        }
        let all: Vec<f64> = self.noise.tones.iter().map(ToneSpec::freq).collect();
        for a in 0..all.len() {
            for b in a + 1..all.len() {
                if all[a] == all[b] {
                    out.push(Violation::new(
                        format!("tones[{}]", b + 1),
                        format!("= {} duplicates tones[{}]", all[b], a + 1),
                    ));
                }
            }
        }
        let reference_matches = self.noise.tones.len() >= l_count
            && self
                .reference
                .tones
                .iter()
                .zip(&self.noise.tones)
                .all(|(r, n)| r.tone == *n);
        if !reference_matches {
            out.push(Violation::new("noise", "leading noise tones must equal the reference tones"));
        }

        // noise table
        let t_count = self.noise.tones.len();
        check_table(&mut out, "noise.amplitude", &self.noise.amplitude, k_count, t_count, |a| {
            (a >= 0.0 && a.is_finite()).then_some(()).ok_or("must be finite and >= 0")
        });
        check_table(&mut out, "noise.phase", &self.noise.phase, k_count, t_count, |p| {
            p.is_finite().then_some(()).ok_or("must be finite")
        });

        // paths
        check_paths(&mut out, "paths.true", &self.paths.true_paths, j_count, k_count, &self.reference);
        if let Some(est) = &self.paths.estimated {
            check_paths(&mut out, "paths.estimated", est, j_count, k_count, &self.reference);
        }
        if self.primary_paths.len() != k_count {
            out.push(Violation::new(
                "primary_paths",
                format!("has {} entries, expected {k_count}", self.primary_paths.len()),
            ));
        }
        for (k, p) in self.primary_paths.iter().enumerate() {
            check_path(&mut out, &format!("primary_paths[{}]", k + 1), p, &self.reference);
        }

        // equalizer
        let eq = &self.equalizer;
        check_table(&mut out, "equalizer.beta", &eq.beta, l_count, k_count, |b| {
            if !b.is_finite() {
                Err("must be finite")
            } else if (b - 1.0).abs() <= 1e-9 {
                Err("violates β ≠ 1")
            } else {
                Ok(())
            }
        });
        check_table(&mut out, "equalizer.gamma", &eq.gamma, l_count, j_count, |g| {
            (0.0..=1.0).contains(&g).then_some(()).ok_or("must lie in [0, 1]")
        });
        if eq.mu.len() != l_count {
            out.push(Violation::new(
                "equalizer.mu",
                format!("has {} entries, expected {l_count}", eq.mu.len()),
            ));
        }
        for (l, m) in eq.mu.iter().enumerate() {
            if !(*m >= 0.0 && m.is_finite()) {
                out.push(Violation::new(format!("equalizer.mu[{}]", l + 1), format!("= {m} must be >= 0")));
            }
        }

        if let Some(p) = self.checks.probe_freq {
            if !(p > 0.0 && p < 0.5) {
                out.push(Violation::new("checks.probe_freq", format!("= {p} outside (0, 0.5)")));
            }
        }
        if !(self.checks.probe_amplitude > 0.0 && self.checks.probe_amplitude.is_finite()) {
            out.push(Violation::new("checks.probe_amplitude", "must be positive"));
        }
        if self.checks.sim_steps == 0 {
            out.push(Violation::new("checks.sim_steps", "must be >= 1"));
        }
        out
    }
}

fn check_table(
    out: &mut Vec<Violation>,
    name: &str,
    table: &[Vec<f64>],
    rows: usize,
    cols: usize,
    check: impl Fn(f64) -> std::result::Result<(), &'static str>,
) {
    if table.len() != rows {
        out.push(Violation::new(name, format!("has {} rows, expected {rows}", table.len())));
    }
    for (r, row) in table.iter().enumerate() {
        if row.len() != cols {
            out.push(Violation::new(
                format!("{name}[{}]", r + 1),
                format!("has {} entries, expected {cols}", row.len()),
            ));
        }
        for (c, &v) in row.iter().enumerate() {
            if let Err(msg) = check(v) {
                out.push(Violation::new(format!("{name}[{}][{}]", r + 1, c + 1), format!("= {v} {msg}")));
            }
        }
    }
}

fn check_paths(
    out: &mut Vec<Violation>,
    name: &str,
    grid: &[Vec<PathResponse>],
    j_count: usize,
    k_count: usize,
    reference: &ReferenceSpec,
) {
    if grid.len() != j_count {
        out.push(Violation::new(name, format!("has {} rows, expected {j_count}", grid.len())));
    }
    for (j, row) in grid.iter().enumerate() {
        if row.len() != k_count {
            out.push(Violation::new(
                format!("{name}[{}]", j + 1),
                format!("has {} entries, expected {k_count}", row.len()),
            ));
        }
        for (k, p) in row.iter().enumerate() {
            check_path(out, &format!("{name}[{}][{}]", j + 1, k + 1), p, reference);
        }
    }
}

fn check_path(out: &mut Vec<Violation>, name: &str, path: &PathResponse, reference: &ReferenceSpec) {
    match path {
        PathResponse::Fir(taps) => {
            if taps.iter().any(|c| !c.is_finite()) {
                out.push(Violation::new(name, "has non-finite taps"));
            } else if !taps.iter().any(|&c| c != 0.0) {
                out.push(Violation::new(name, "needs at least one nonzero tap"));
            }
        }
        PathResponse::GainTable(entries) => {
            for e in entries {
                if !(e.amplitude >= 0.0 && e.amplitude.is_finite() && e.phase.is_finite()) {
                    out.push(Violation::new(name, format!("gain at f = {} is not a valid magnitude/phase", e.freq)));
                }
            }
            for t in &reference.tones {
                if !entries.iter().any(|e| e.freq == t.tone.freq()) {
                    out.push(Violation::new(name, format!("lacks a gain for control frequency {}", t.tone.freq())));
                }
            }
        }
    }
}
