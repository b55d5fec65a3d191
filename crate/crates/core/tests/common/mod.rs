//! Random scenario generators shared by the integration tests and the
//! acceptance binary. Scenarios are written as TOML and loaded through the
//! public parser so generated cases exercise the same path as user files.
#![allow(dead_code)]

use std::fmt::Write;

use ane_core::scenario_io::parse_scenario_str;
use ane_core::Scenario;
use rand::Rng;

fn list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
    format!("[{}]", items.join(", "))
}

fn table(rows: &[Vec<f64>]) -> String {
    let items: Vec<String> = rows.iter().map(|r| list(r)).collect();
    format!("[{}]", items.join(", "))
}

fn path_grid(paths: &[Vec<Vec<f64>>]) -> String {
    let rows: Vec<String> = paths
        .iter()
        .map(|row| {
            let cells: Vec<String> = row.iter().map(|taps| format!("{{ fir = {} }}", list(taps))).collect();
            format!("[{}]", cells.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

/// Everything needed to write a scenario file. Tables follow the file
/// layout: noise K×L, paths J×K, beta L×K, gamma L×J.
#[derive(Debug, Clone)]
pub struct Spec {
    pub freqs: Vec<f64>,
    pub ref_amp: Vec<f64>,
    pub ref_phase: Vec<f64>,
    pub noise_amp: Vec<Vec<f64>>,
    pub noise_phase: Vec<Vec<f64>>,
    pub true_paths: Vec<Vec<Vec<f64>>>,
    pub est_paths: Option<Vec<Vec<Vec<f64>>>>,
    pub beta: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
    pub strategy: &'static str,
}

impl Spec {
    pub fn toml(&self) -> String {
        let j = self.true_paths.len();
        let k = self.true_paths[0].len();
        let mut t = String::new();
        writeln!(t, "name = \"generated\"").unwrap();
        writeln!(t, "[dimensions]\nactuators = {j}\nsensors = {k}\ntones = {}", self.freqs.len()).unwrap();
        writeln!(t, "[tones]\nfreq = {}", list(&self.freqs)).unwrap();
        writeln!(t, "[reference]\namplitude = {}\nphase = {}", list(&self.ref_amp), list(&self.ref_phase)).unwrap();
        writeln!(
            t,
            "[noise]\namplitude = {}\nphase = {}",
            table(&self.noise_amp),
            table(&self.noise_phase)
        )
        .unwrap();
        writeln!(t, "[paths]").unwrap();
        match &self.est_paths {
            Some(est) => {
                writeln!(t, "perfect_estimates = false").unwrap();
                writeln!(t, "true = {}", path_grid(&self.true_paths)).unwrap();
                writeln!(t, "estimated = {}", path_grid(est)).unwrap();
            }
            None => {
                writeln!(t, "perfect_estimates = true").unwrap();
                writeln!(t, "true = {}", path_grid(&self.true_paths)).unwrap();
            }
        }
        writeln!(
            t,
            "[equalizer]\nstrategy = \"{}\"\nmu = {}\nbeta = {}\ngamma = {}",
            self.strategy,
            list(&self.mu),
            table(&self.beta),
            table(&self.gamma)
        )
        .unwrap();
        t
    }

    pub fn build(&self) -> Scenario {
        let text = self.toml();
        parse_scenario_str(&text).unwrap_or_else(|e| panic!("{e}\n{text}"))
    }
}

pub fn random_fir<R: Rng>(rng: &mut R) -> Vec<f64> {
    let n = rng.gen_range(1..=4);
    let mut taps: Vec<f64> = (0..n).map(|i| rng.gen_range(-1.0..1.0) * 0.6f64.powi(i)).collect();
    // keep the lead tap away from zero so |C| is not degenerate everywhere
    taps[0] = taps[0].signum() * (0.3 + taps[0].abs());
    taps
}

/// `β` drawn from `[-2, 0.99] ∪ [1.01, 2]`.
pub fn random_beta<R: Rng>(rng: &mut R) -> f64 {
    if rng.gen_bool(0.75) {
        rng.gen_range(-2.0..=0.99)
    } else {
        rng.gen_range(1.01..=2.0)
    }
}

/// `μ` in `(0, 0.05]`.
pub fn random_mu<R: Rng>(rng: &mut R) -> f64 {
    0.05 - rng.gen_range(0.0..0.05)
}

fn fir_grid<R: Rng>(rng: &mut R, j: usize, k: usize) -> Vec<Vec<Vec<f64>>> {
    (0..j).map(|_| (0..k).map(|_| random_fir(rng)).collect()).collect()
}

/// Random scenario of the given shape. Frequencies are spread so no two
/// tones sit closer than 0.02.
pub fn random_spec<R: Rng>(rng: &mut R, j: usize, k: usize, l: usize, imperfect: bool) -> Spec {
    let mut freqs: Vec<f64> = Vec::with_capacity(l);
    while freqs.len() < l {
        let f = rng.gen_range(0.02..0.48);
        if freqs.iter().all(|g: &f64| (g - f).abs() > 0.02) {
            freqs.push(f);
        }
    }
    let est_paths = imperfect.then(|| fir_grid(rng, j, k));
    Spec {
        ref_amp: (0..l).map(|_| rng.gen_range(0.5..1.5)).collect(),
        ref_phase: (0..l).map(|_| rng.gen_range(-3.0..3.0)).collect(),
        noise_amp: (0..k).map(|_| (0..l).map(|_| rng.gen_range(0.2..2.0)).collect()).collect(),
        noise_phase: (0..k).map(|_| (0..l).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect(),
        true_paths: fir_grid(rng, j, k),
        est_paths,
        beta: (0..l).map(|_| (0..k).map(|_| random_beta(rng)).collect()).collect(),
        gamma: (0..l).map(|_| (0..j).map(|_| rng.gen_range(0.0..=0.9)).collect()).collect(),
        mu: (0..l).map(|_| random_mu(rng)).collect(),
        strategy: "common",
        freqs,
    }
}

/// Single-channel, single-tone scenario with the given parameters and
/// identity paths.
pub fn single(freq: f64, beta: f64, mu: f64) -> Spec {
    Spec {
        freqs: vec![freq],
        ref_amp: vec![1.0],
        ref_phase: vec![0.0],
        noise_amp: vec![vec![1.0]],
        noise_phase: vec![vec![0.0]],
        true_paths: vec![vec![vec![1.0]]],
        est_paths: None,
        beta: vec![vec![beta]],
        gamma: vec![vec![0.0]],
        mu: vec![mu],
        strategy: "common",
    }
}
