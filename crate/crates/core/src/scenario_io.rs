//! Scenario files and tabular output.
//!
//! Scenarios are TOML documents:
//!
//! ```toml
//! name = "example"
//!
//! [dimensions]
//! actuators = 1
//! sensors = 1
//! tones = 1
//!
//! [tones]
//! freq = [0.25]
//!
//! [noise]
//! amplitude = [[1.0]]          # [sensor][tone]
//!
//! [paths]
//! true = [[{ fir = [1.0] }]]   # [actuator][sensor]; or { gain = [[A, phase], ...] }
//!
//! [equalizer]
//! beta = [[0.5]]               # [tone][sensor]
//! mu = 0.01                    # scalar or one per tone
//! ```
//!
//! Optional sections: `reference` (amplitude, phase), `noise.phase`,
//! `paths.estimated` with `paths.perfect_estimates = false`,
//! `primary_paths.paths` (default identity), `equalizer.gamma` (default 0),
//! `equalizer.strategy` (default common), `checks`.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::equalizer::SimulationTrace;
use crate::error::{Error, Result, Violation};
use crate::poles::PoleEstimate;
use crate::scenario::{CheckSettings, EqualizerConfig, Scenario, Strategy};
use crate::signal_model::{
    wrap_phase, NoiseField, PathMatrix, PathResponse, ReferenceSpec, ReferenceTone, ToneGain, ToneSpec,
};
use crate::tf::SweepTable;
use crate::validation::ValidationReport;

/// Scenarios shipped with the crate, by name.
pub const BUILTIN: &[(&str, &str)] = &[
    ("fig2", include_str!("../scenarios/fig2.toml")),
    ("fig3_beta0", include_str!("../scenarios/fig3_beta0.toml")),
    ("fig3_beta05", include_str!("../scenarios/fig3_beta05.toml")),
    ("fig3_beta15", include_str!("../scenarios/fig3_beta15.toml")),
    ("fig4", include_str!("../scenarios/fig4.toml")),
    ("fig5", include_str!("../scenarios/fig5.toml")),
    ("probe_single", include_str!("../scenarios/probe_single.toml")),
];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    notes: Option<String>,
    dimensions: RawDimensions,
    tones: RawTones,
    reference: Option<RawReference>,
    noise: RawNoise,
    paths: RawPaths,
    primary_paths: Option<RawPrimary>,
    equalizer: RawEqualizer,
    checks: Option<RawChecks>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDimensions {
    actuators: usize,
    sensors: usize,
    tones: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTones {
    freq: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReference {
    amplitude: Option<Vec<f64>>,
    phase: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    amplitude: Vec<Vec<f64>>,
    phase: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPath {
    fir: Option<Vec<f64>>,
    gain: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPaths {
    perfect_estimates: Option<bool>,
    #[serde(rename = "true")]
    true_paths: Vec<Vec<RawPath>>,
    estimated: Option<Vec<Vec<RawPath>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPrimary {
    paths: Vec<RawPath>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawMu {
    Scalar(f64),
    List(Vec<f64>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEqualizer {
    beta: Vec<Vec<f64>>,
    gamma: Option<Vec<Vec<f64>>>,
    mu: RawMu,
    strategy: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChecks {
    probe_freq: Option<f64>,
    probe_amplitude: Option<f64>,
    sim_steps: Option<u64>,
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn convert_path(raw: &RawPath, at: &str, tones: &[ToneSpec], out: &mut Vec<Violation>) -> PathResponse {
    match (&raw.fir, &raw.gain) {
        (Some(taps), None) => PathResponse::Fir(taps.clone()),
        (None, Some(gains)) => {
            if gains.len() != tones.len() {
                out.push(Violation::new(
                    at,
                    format!("gain table has {} entries, expected one per tone ({})", gains.len(), tones.len()),
                ));
            }
            PathResponse::GainTable(
                gains
                    .iter()
                    .zip(tones)
                    .map(|(&[amplitude, phase], t)| ToneGain {
                        freq: t.freq(),
                        amplitude,
                        phase: wrap_phase(phase),
                    })
                    .collect(),
            )
        }
        _ => {
            out.push(Violation::new(at, "needs exactly one of `fir` or `gain`"));
            PathResponse::identity()
        }
    }
}

fn convert_grid(raw: &[Vec<RawPath>], name: &str, tones: &[ToneSpec], out: &mut Vec<Violation>) -> Vec<Vec<PathResponse>> {
    raw.iter()
        .enumerate()
        .map(|(j, row)| {
            row.iter()
                .enumerate()
                .map(|(k, p)| convert_path(p, &format!("{name}[{}][{}]", j + 1, k + 1), tones, out))
                .collect()
        })
        .collect()
}

fn check_len(out: &mut Vec<Violation>, at: &str, got: usize, want: usize) {
    if got != want {
        out.push(Violation::new(at, format!("has {got} entries, expected {want}")));
    }
}

fn from_raw(raw: RawScenario) -> Result<Scenario> {
    let mut out = Vec::new();
    let dims = &raw.dimensions;
    let (j, k, l) = (dims.actuators, dims.sensors, dims.tones);

    let tones: Vec<ToneSpec> = raw.tones.freq.iter().map(|&f| ToneSpec::unchecked(f)).collect();
    check_len(&mut out, "tones.freq", tones.len(), l);

    let reference = raw.reference.unwrap_or(RawReference {
        amplitude: None,
        phase: None,
    });
    let amplitude = reference.amplitude.unwrap_or_else(|| vec![1.0; tones.len()]);
    let phase = reference.phase.unwrap_or_else(|| vec![0.0; tones.len()]);
    check_len(&mut out, "reference.amplitude", amplitude.len(), tones.len());
    check_len(&mut out, "reference.phase", phase.len(), tones.len());
    let reference = ReferenceSpec {
        tones: tones
            .iter()
            .enumerate()
            .map(|(i, &tone)| ReferenceTone {
                tone,
                amplitude: amplitude.get(i).copied().unwrap_or(1.0),
                phase: wrap_phase(phase.get(i).copied().unwrap_or(0.0)),
            })
            .collect(),
    };

    check_len(&mut out, "noise.amplitude", raw.noise.amplitude.len(), k);
    let noise_phase = raw
        .noise
        .phase
        .map(|p| p.into_iter().map(|row| row.into_iter().map(wrap_phase).collect()).collect())
        .unwrap_or_else(|| raw.noise.amplitude.iter().map(|row| vec![0.0; row.len()]).collect::<Vec<_>>());
    let noise = NoiseField {
        tones: tones.clone(),
        amplitude: raw.noise.amplitude,
        phase: noise_phase,
    };

    let true_paths = convert_grid(&raw.paths.true_paths, "paths.true", &tones, &mut out);
    check_len(&mut out, "paths.true", true_paths.len(), j);
    let estimated = match (raw.paths.perfect_estimates, &raw.paths.estimated) {
        (Some(true), Some(_)) => {
            out.push(Violation::new("paths.estimated", "must be absent when perfect_estimates = true"));
            None
        }
        (Some(false), None) => {
            out.push(Violation::new("paths.estimated", "required when perfect_estimates = false"));
            None
        }
        (_, Some(est)) => Some(convert_grid(est, "paths.estimated", &tones, &mut out)),
        (_, None) => None,
    };
    let primary_paths = match &raw.primary_paths {
        Some(p) => p
            .paths
            .iter()
            .enumerate()
            .map(|(i, p)| convert_path(p, &format!("primary_paths.paths[{}]", i + 1), &tones, &mut out))
            .collect(),
        None => vec![PathResponse::identity(); k],
    };

    let eq = raw.equalizer;
    let mu = match eq.mu {
        RawMu::Scalar(m) => vec![m; tones.len()],
        RawMu::List(v) => v,
    };
    let strategy = match eq.strategy.as_deref() {
        None => Strategy::Common,
        Some(s) => s.parse().unwrap_or_else(|_| {
            out.push(Violation::new("equalizer.strategy", format!("= {s:?} is not common or multiple")));
            Strategy::Common
        }),
    };
    let gamma = eq.gamma.unwrap_or_else(|| vec![vec![0.0; j]; tones.len()]);

    let checks = raw.checks.map_or_else(CheckSettings::default, |c| {
        let d = CheckSettings::default();
        CheckSettings {
            probe_freq: c.probe_freq,
            probe_amplitude: c.probe_amplitude.unwrap_or(d.probe_amplitude),
            sim_steps: c.sim_steps.unwrap_or(d.sim_steps),
        }
    });

    let scenario = Scenario {
        name: raw.name.unwrap_or_else(|| "unnamed".into()),
        reference,
        noise,
        paths: PathMatrix { true_paths, estimated },
        primary_paths,
        equalizer: EqualizerConfig {
            beta: eq.beta,
            gamma,
            mu,
            strategy,
        },
        checks,
        notes: raw.notes,
    };
    out.extend(scenario.violations());
    if out.is_empty() {
        Ok(scenario)
    } else {
        Err(Error::Invalid(out))
    }
}

/// Parse and validate a scenario document.
pub fn parse_scenario_str(text: &str) -> Result<Scenario> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_column(text, s.start));
        Error::Syntax {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    from_raw(raw)
}

/// Parse and validate a scenario file.
pub fn parse_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario_str(&text)
}

pub fn builtin(name: &str) -> Option<&'static str> {
    BUILTIN.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Load a scenario from a file path, or by built-in name when no such file exists.
pub fn load_scenario(spec: &str) -> Result<Scenario> {
    let path = Path::new(spec);
    if path.exists() {
        return parse_scenario(path);
    }
    match builtin(spec) {
        Some(text) => parse_scenario_str(text),
        None => Err(Error::Io {
            path: path.to_path_buf(),
            source: io::Error::new(io::ErrorKind::NotFound, "no such file or built-in scenario"),
        }),
    }
}

fn float(x: f64) -> String {
    // Debug prints the shortest round-tripping form, always with a '.' or exponent
    format!("{x:?}")
}

fn list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|&x| float(x)).collect();
    format!("[{}]", items.join(", "))
}

fn table(v: &[Vec<f64>]) -> String {
    if v.is_empty() {
        return "[]".into();
    }
    let rows: Vec<String> = v.iter().map(|r| format!("    {},", list(r))).collect();
    format!("[\n{}\n]", rows.join("\n"))
}

fn path_entry(p: &PathResponse) -> String {
    match p {
        PathResponse::Fir(taps) => format!("{{ fir = {} }}", list(taps)),
        PathResponse::GainTable(g) => {
            let items: Vec<String> = g
                .iter()
                .map(|e| format!("[{}, {}]", float(e.amplitude), float(e.phase)))
                .collect();
            format!("{{ gain = [{}] }}", items.join(", "))
        }
    }
}

fn path_grid(grid: &[Vec<PathResponse>]) -> String {
    let rows: Vec<String> = grid
        .iter()
        .map(|r| format!("    [{}],", r.iter().map(path_entry).collect::<Vec<_>>().join(", ")))
        .collect();
    format!("[\n{}\n]", rows.join("\n"))
}

fn string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

/// Canonical TOML form. Parsing it yields an identical scenario.
pub fn canonical_toml(s: &Scenario) -> String {
    let mut o = String::new();
    let l = s.tones();
    let _ = writeln!(o, "name = {}", string(&s.name));
    if let Some(n) = &s.notes {
        let _ = writeln!(o, "notes = {}", string(n));
    }
    let _ = writeln!(
        o,
        "\n[dimensions]\nactuators = {}\nsensors = {}\ntones = {l}",
        s.actuators(),
        s.sensors()
    );
    let freqs = s.control_freqs();
    let _ = writeln!(o, "\n[tones]\nfreq = {}", list(&freqs));
    let amp: Vec<f64> = s.reference.tones.iter().map(|t| t.amplitude).collect();
    let ph: Vec<f64> = s.reference.tones.iter().map(|t| t.phase).collect();
    let _ = writeln!(o, "\n[reference]\namplitude = {}\nphase = {}", list(&amp), list(&ph));
    let _ = writeln!(
        o,
        "\n[noise]\namplitude = {}\nphase = {}",
        table(&s.noise.amplitude),
        table(&s.noise.phase)
    );
    let _ = writeln!(
        o,
        "\n[paths]\nperfect_estimates = {}\ntrue = {}",
        s.paths.perfect_estimates(),
        path_grid(&s.paths.true_paths)
    );
    if let Some(est) = &s.paths.estimated {
        let _ = writeln!(o, "estimated = {}", path_grid(est));
    }
    let primary: Vec<String> = s.primary_paths.iter().map(path_entry).collect();
    let _ = writeln!(o, "\n[primary_paths]\npaths = [{}]", primary.join(", "));
    let eq = &s.equalizer;
    let _ = writeln!(
        o,
        "\n[equalizer]\nstrategy = {}\nmu = {}\nbeta = {}\ngamma = {}",
        string(eq.strategy.as_str()),
        list(&eq.mu),
        table(&eq.beta),
        table(&eq.gamma)
    );
    let _ = writeln!(o, "\n[checks]");
    if let Some(p) = s.checks.probe_freq {
        let _ = writeln!(o, "probe_freq = {}", float(p));
    }
    let _ = writeln!(
        o,
        "probe_amplitude = {}\nsim_steps = {}",
        float(s.checks.probe_amplitude),
        s.checks.sim_steps
    );
    o
}

/// Numbers in CSV output: 12 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.11e}")
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_sweep<W: io::Write>(w: W, t: &SweepTable) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["f", "re", "im", "mag", "phase", "flag"])?;
    for i in 0..t.len() {
        let v = t.values[i];
        w.write_record([
            num(t.freqs[i]),
            num(v.re),
            num(v.im),
            num(v.norm()),
            num(v.arg()),
            t.flags[i].as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv(path: &Path, t: &SweepTable) -> Result<()> {
    let f = fs::File::create(path).map_err(io_err(path))?;
    write_sweep(f, t).map_err(csv_err(path))
}

/// One parsed row of a sweep CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub f: f64,
    pub re: f64,
    pub im: f64,
    pub mag: f64,
    pub phase: f64,
    pub flag: String,
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let field = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::InvalidArgument(format!("{}: bad number in column {}", path.display(), i + 1)))
        };
        rows.push(SweepRow {
            f: field(0)?,
            re: field(1)?,
            im: field(2)?,
            mag: field(3)?,
            phase: field(4)?,
            flag: rec.get(5).unwrap_or("").to_string(),
        });
    }
    Ok(rows)
}

pub fn write_trace<W: io::Write>(w: W, t: &SimulationTrace, decimation: usize) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(w);
    let k = t.sensors;
    let mut header = vec!["n".to_string()];
    header.extend((1..=k).map(|i| format!("d_{i}")));
    header.extend((1..=k).map(|i| format!("e_{i}")));
    w.write_record(&header)?;
    for n in (0..t.len()).step_by(decimation.max(1)) {
        let mut row = vec![n.to_string()];
        row.extend((0..k).map(|i| num(t.d[i][n])));
        row.extend((0..k).map(|i| num(t.e[i][n])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_csv(path: &Path, t: &SimulationTrace, decimation: usize) -> Result<()> {
    let f = fs::File::create(path).map_err(io_err(path))?;
    write_trace(f, t, decimation).map_err(csv_err(path))
}

pub fn write_poles<W: io::Write>(w: W, poles: &[PoleEstimate]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["sensor", "tone_f", "radius", "angle", "peak", "flag"])?;
    for p in poles {
        w.write_record([
            (p.sensor + 1).to_string(),
            num(p.freq),
            p.radius.map_or_else(String::new, num),
            num(p.angle),
            num(p.peak),
            p.flag.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_pole_csv(path: &Path, poles: &[PoleEstimate]) -> Result<()> {
    let f = fs::File::create(path).map_err(io_err(path))?;
    write_poles(f, poles).map_err(csv_err(path))
}

pub fn write_report_csv<W: io::Write>(w: W, report: &ValidationReport) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["check", "scenario", "measured", "expected", "tolerance", "status", "detail"])?;
    for e in report.entries() {
        w.write_record([
            e.id.clone(),
            e.scenario.clone(),
            num(e.measured),
            num(e.expected),
            num(e.tolerance),
            e.status.as_str().to_string(),
            e.detail.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Companion paths for a report: `(csv, text)`.
pub fn report_paths(out: &Path) -> (PathBuf, PathBuf) {
    if out.extension().is_some_and(|e| e == "txt") {
        (out.with_extension("csv"), out.to_path_buf())
    } else {
        (out.to_path_buf(), out.with_extension("txt"))
    }
}

/// Write the report as CSV and as text side by side.
pub fn write_report(out: &Path, report: &ValidationReport) -> Result<()> {
    let (csv_path, text_path) = report_paths(out);
    let f = fs::File::create(&csv_path).map_err(io_err(&csv_path))?;
    write_report_csv(f, report).map_err(csv_err(&csv_path))?;
    fs::write(&text_path, format!("{report}\n")).map_err(io_err(&text_path))
}
