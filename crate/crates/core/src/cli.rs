//! Command-line front end. Exit codes: 0 success, 1 validation or runtime
//! failure, 2 usage error.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::equalizer::{run_simulation, TraceOptions};
use crate::error::Error;
use crate::exec::Execution;
use crate::poles::estimate_all;
use crate::scenario::{Scenario, Strategy};
use crate::scenario_io::{
    canonical_toml, load_scenario, num, write_poles, write_report, write_sweep, write_trace,
};
use crate::tf::{aux_gain_sweep, sweep, DEFAULT_GRID, MIN_GRID};
use crate::validation::{run_suite, Suite};

#[derive(Debug, Parser)]
#[command(name = "ane", version, about = "Multichannel multi-tone active noise equalizer analysis")]
struct Cli {
    /// Evaluate sequentially instead of on the thread pool.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the time-domain equalizer and write the sensor trace.
    Sim {
        #[arg(long)]
        scenario: String,
        /// Samples to simulate (default: the scenario's sim_steps).
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        strategy: Option<Strategy>,
        /// Keep every n-th sample in the trace.
        #[arg(long, default_value_t = 1)]
        trace_decimation: usize,
    },
    /// Sweep a sensor transfer function over frequency.
    Tf {
        #[arg(long)]
        scenario: String,
        /// Sensor index, 1-based.
        #[arg(long, default_value_t = 1)]
        sensor: usize,
        #[arg(long, default_value_t = DEFAULT_GRID)]
        grid: usize,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long)]
        strategy: Option<Strategy>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate pole radii along the control-frequency radial lines.
    Poles {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        strategy: Option<Strategy>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Frequency response of one auxiliary function G_jm.
    Gfunc {
        #[arg(long)]
        scenario: String,
        /// Actuator index, 1-based.
        #[arg(long, default_value_t = 1)]
        j: usize,
        /// Sensor index, 1-based.
        #[arg(long, default_value_t = 1)]
        m: usize,
        /// Tone index, 1-based.
        #[arg(long, default_value_t = 1)]
        tone: usize,
        #[arg(long, default_value_t = DEFAULT_GRID)]
        grid: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-check simulation against the analysis.
    Verify {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value = "all")]
        suite: Suite,
        #[arg(long)]
        strategy: Option<Strategy>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the canonical form of a scenario.
    Canon {
        #[arg(long)]
        scenario: String,
    },
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn index(name: &str, value: usize, size: usize) -> Result<usize, Failure> {
    if value == 0 || value > size {
        Err(usage(format!("--{name} {value} out of range 1..={size}")))
    } else {
        Ok(value - 1)
    }
}

/// Run `f` against the output file or stdout.
fn emit<F>(out: &Option<PathBuf>, f: F) -> Result<(), Failure>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    match out {
        Some(path) => {
            let mut file = fs::File::create(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            f(&mut file).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock).map_err(|e| Failure::Runtime(format!("stdout: {e}")))
        }
    }
}

fn csv_io(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

fn with_strategy(mut s: Scenario, over: Option<Strategy>) -> (Scenario, Strategy) {
    if let Some(st) = over {
        s.equalizer.strategy = st;
    }
    let st = s.equalizer.strategy;
    (s, st)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match cli.command {
        Command::Sim {
            scenario,
            steps,
            out,
            strategy,
            trace_decimation,
        } => {
            if steps == Some(0) {
                return Err(usage("--steps must be at least 1"));
            }
            if trace_decimation == 0 {
                return Err(usage("--trace-decimation must be at least 1"));
            }
            let s = load_scenario(&scenario)?;
            let (s, _) = with_strategy(s, strategy);
            let steps = steps.unwrap_or(s.checks.sim_steps as usize);
            match run_simulation(&s, steps, &TraceOptions::default()) {
                Ok(trace) => emit(&out, |w| write_trace(w, &trace, trace_decimation).map_err(csv_io)),
                Err(err) => {
                    emit(&out, |w| write_trace(w, &err.partial, trace_decimation).map_err(csv_io))?;
                    Err(Failure::Runtime(err.to_string()))
                }
            }
        }
        Command::Tf {
            scenario,
            sensor,
            grid,
            radius,
            strategy,
            out,
        } => {
            if grid < MIN_GRID {
                return Err(usage(format!("--grid must be at least {MIN_GRID}")));
            }
            if !(radius > 0.0 && radius.is_finite()) {
                return Err(usage("--radius must be positive"));
            }
            let s = load_scenario(&scenario)?;
            let k = index("sensor", sensor, s.sensors())?;
            let (s, st) = with_strategy(s, strategy);
            let table = sweep(&s, k, st, grid, radius, exec)?;
            emit(&out, |w| write_sweep(w, &table).map_err(csv_io))
        }
        Command::Poles { scenario, strategy, out } => {
            let s = load_scenario(&scenario)?;
            let (s, st) = with_strategy(s, strategy);
            let poles = estimate_all(&s, st, exec)?;
            emit(&out, |w| write_poles(w, &poles).map_err(csv_io))
        }
        Command::Gfunc {
            scenario,
            j,
            m,
            tone,
            grid,
            out,
        } => {
            if grid < MIN_GRID {
                return Err(usage(format!("--grid must be at least {MIN_GRID}")));
            }
            let s = load_scenario(&scenario)?;
            let j = index("j", j, s.actuators())?;
            let m = index("m", m, s.sensors())?;
            let l = index("tone", tone, s.tones())?;
            let rows = aux_gain_sweep(&s, l, j, m, grid)?;
            emit(&out, |w| {
                let mut c = csv::Writer::from_writer(w);
                c.write_record(["f", "re", "im", "mag", "flag"]).map_err(csv_io)?;
                for (f, g) in rows {
                    let rec = match g {
                        Some(g) => [num(f), num(g.re), num(g.im), num(g.norm()), "ok".into()],
                        None => [num(f), num(f64::NAN), num(f64::NAN), num(f64::INFINITY), "pole".into()],
                    };
                    c.write_record(rec).map_err(csv_io)?;
                }
                c.flush()
            })
        }
        Command::Verify {
            scenario,
            suite,
            strategy,
            out,
        } => {
            let s = load_scenario(&scenario)?;
            let (s, st) = with_strategy(s, strategy);
            let report = run_suite(&s, st, suite);
            println!("{report}");
            if let Some(path) = out {
                write_report(&path, &report)?;
            }
            if report.passed() {
                Ok(())
            } else {
                Err(Failure::Runtime("validation failed".into()))
            }
        }
        Command::Canon { scenario } => {
            let s = load_scenario(&scenario)?;
            print!("{}", canonical_toml(&s));
            Ok(())
        }
    }
}

/// Entry point shared by the binary and the tests.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}
