//! Batch front-end: single runs, parameter sweeps, radii tables and
//! scenario validation.

pub mod output;
pub mod sweep;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use thzmm_core::radio::{self, CoverageRadii};
use thzmm_core::scenario::ArrayDims;
use thzmm_core::{default_scenario, dynamics, load_scenario, strategies, Error, Scenario};
use thzmm_sim::{simulate_sweep, SimConfig};

use output::{write_rows, Format, Point, ResultRow};
use sweep::SweepSpec;

/// Environment variable holding the worker thread count.
pub const WORKERS_ENV: &str = "THZMM_WORKERS";

pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const VALIDATION: i32 = 2;
    pub const CONVERGENCE: i32 = 3;
    pub const IO: i32 = 4;
}

#[derive(Parser, Debug)]
#[command(
    name = "thzmm",
    version,
    about = "THz/mmWave association and multi-connectivity performance"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Evaluate a scenario or a sweep over one of its parameters.
    Run(RunArgs),
    /// Print BS service radii.
    Radii(RadiiArgs),
    /// Check a scenario and report each invariant.
    Validate(ConfigArg),
}

#[derive(Args, Debug)]
pub struct ConfigArg {
    /// Scenario file (TOML); defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Analytic,
    Simulate,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Ndjson,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Ndjson => Format::Ndjson,
        }
    }
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Dotted scenario key and an inclusive START:STOP:COUNT grid.
    #[arg(long, num_args = 2, value_names = ["KEY", "START:STOP:COUNT"])]
    pub sweep: Option<Vec<String>>,
    #[arg(long, value_enum, default_value_t = Mode::Analytic)]
    pub mode: Mode,
    /// Base seed; sweep point i uses seed XOR i.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,
    /// Simulation replications (default 20).
    #[arg(long)]
    pub replications: Option<usize>,
    /// End of the simulated window in seconds (default 1e4/mu).
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Simulated warmup in seconds (default 10/mu).
    #[arg(long)]
    pub warmup: Option<f64>,
}

#[derive(Args, Debug)]
pub struct RadiiArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Comma-separated BS arrays (e.g. 8x4,16x4,32x4); each row uses the
    /// array at both the mmWave and the THz BS.
    #[arg(long, value_delimiter = ',')]
    pub arrays: Option<Vec<ArrayDims>>,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::NonConvergence { .. } => exit::CONVERGENCE,
        Error::Io(_) => exit::IO,
        _ => exit::VALIDATION,
    }
}

fn load(arg: &ConfigArg) -> thzmm_core::Result<Scenario> {
    match &arg.config {
        Some(p) => load_scenario(p),
        None => Ok(default_scenario()),
    }
}

fn open_out(path: &Option<PathBuf>) -> thzmm_core::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn io(e: std::io::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn cmd_run(args: &RunArgs) -> thzmm_core::Result<()> {
    let base = load(&args.config)?;
    let spec = match &args.sweep {
        Some(v) => Some(SweepSpec::parse(&v[0], &v[1])?),
        None => None,
    };
    let scenarios = match &spec {
        Some(s) => s.scenarios(&base)?,
        None => vec![base.clone()],
    };
    let points: Vec<Point> = scenarios
        .iter()
        .enumerate()
        .map(|(i, scn)| Point {
            scn,
            parameter: spec.as_ref().map(|s| s.key.as_str()),
            value: spec.as_ref().map(|s| s.values[i]),
        })
        .collect();

    let analytic = if args.mode == Mode::Simulate {
        None
    } else {
        Some(
            scenarios
                .par_iter()
                .map(strategies::run)
                .collect::<thzmm_core::Result<Vec<_>>>()?,
        )
    };
    let simulated = if args.mode == Mode::Analytic {
        None
    } else {
        let mut cfg = SimConfig::for_scenario(&base, args.seed);
        if let Some(r) = args.replications {
            cfg.replications = r;
        }
        if let Some(h) = args.horizon {
            cfg.horizon = h;
        }
        if let Some(w) = args.warmup {
            cfg.warmup = w;
        }
        Some(simulate_sweep(&scenarios, &cfg)?)
    };

    let mut rows = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let report = analytic.as_ref().map(|a| &a[i]);
        if let Some(r) = report {
            rows.push(ResultRow::analytic(p, r));
        }
        if let Some(s) = &simulated {
            rows.push(ResultRow::simulated(p, &s[i], args.seed ^ i as u64, report));
        }
    }
    let mut out = open_out(&args.out)?;
    write_rows(&mut out, args.format.into(), &rows).map_err(io)?;
    out.flush().map_err(io)
}

fn radii_for(scn: &Scenario) -> thzmm_core::Result<CoverageRadii> {
    radio::coverage_radii(scn)
}

pub fn cmd_radii(args: &RadiiArgs) -> thzmm_core::Result<()> {
    let base = load(&args.config)?;
    let mut out = open_out(&args.out)?;
    writeln!(out, "# thzmm {} service radii, m", env!("CARGO_PKG_VERSION")).map_err(io)?;
    writeln!(out, "mmwave_bs,thz_bs,r_M,r_T_A1,r_T_A2").map_err(io)?;
    let rows: Vec<Scenario> = match &args.arrays {
        Some(list) => list
            .iter()
            .map(|a| {
                let mut s = base.clone();
                s.antenna.mmwave_bs = *a;
                s.antenna.thz_bs = *a;
                s
            })
            .collect(),
        None => vec![base],
    };
    for s in &rows {
        let r = radii_for(s)?;
        writeln!(
            out,
            "{},{},{},{},{}",
            s.antenna.mmwave_bs, s.antenna.thz_bs, r.r_m, r.r_t_a1, r.r_t_a2
        )
        .map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub outcome: Result<(), String>,
}

/// Runs the invariant suite; later checks are skipped once one fails.
pub fn validation_checks(scn: &Scenario) -> Vec<Check> {
    let mut checks = Vec::new();
    let mut push = |name: &'static str, r: thzmm_core::Result<()>| {
        let ok = r.is_ok();
        checks.push(Check {
            name,
            outcome: r.map_err(|e| e.to_string()),
        });
        ok
    };
    if !push("scenario", scn.validate()) {
        return checks;
    }
    let radii = match radii_for(scn) {
        Ok(r) => r,
        Err(e) => {
            push("radio.coverage_radii", Err(e));
            return checks;
        }
    };
    push("radio.coverage_radii", Ok(()));
    if !push(
        "association_split.p_T",
        strategies::association_split(scn, &radii).map(|_| ()),
    ) {
        return checks;
    }
    let rates = dynamics::event_rates(scn, &radii).and_then(|r| {
        let all = [r.nu, r.nu_b, r.nu_m, r.t_b, r.p_o1, r.p_o2.unwrap_or(0.0)];
        if all.iter().all(|v| v.is_finite() && *v >= 0.0) && r.p_o1 <= 1.0 {
            Ok(())
        } else {
            Err(Error::Domain(format!("event rates out of range: {r:?}")))
        }
    });
    if !push("dynamics.event_rates", rates) {
        return checks;
    }
    let inputs = match strategies::prepare(scn) {
        Ok(i) => i,
        Err(e) => {
            push("demand.pmfs", Err(e));
            return checks;
        }
    };
    let norm = |p: &thzmm_core::demand::ResourcePmf| {
        if (p.total() - 1.0).abs() <= 1e-9 {
            Ok(())
        } else {
            Err(Error::Domain(format!("mass {}", p.total())))
        }
    };
    push("demand.p1", norm(&inputs.p1));
    push("demand.p2", norm(&inputs.p2));
    push("strategies.run", strategies::evaluate(scn, &inputs).map(|_| ()));
    checks
}

pub fn cmd_validate(arg: &ConfigArg) -> thzmm_core::Result<bool> {
    let scn = match load(arg) {
        Ok(s) => s,
        Err(e) if matches!(e.root(), Error::Io(_)) => return Err(e),
        Err(e) => {
            println!("FAIL scenario: {e}");
            return Ok(false);
        }
    };
    let checks = validation_checks(&scn);
    for c in &checks {
        match &c.outcome {
            Ok(()) => println!("PASS {}", c.name),
            Err(m) => println!("FAIL {}: {m}", c.name),
        }
    }
    Ok(checks.iter().all(|c| c.outcome.is_ok()))
}

fn configure_workers() -> Result<(), String> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    if let Err(m) = configure_workers() {
        eprintln!("error: {m}");
        return exit::USAGE;
    }
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a).map(|_| true),
        Command::Radii(a) => cmd_radii(a).map(|_| true),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(true) => exit::OK,
        Ok(false) => exit::VALIDATION,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
