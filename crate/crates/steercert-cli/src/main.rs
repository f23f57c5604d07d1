//! Command-line front end: run certification tests, reproduce the benchmark
//! table of critical visibilities, and sweep visibility grids.
//!
//! Exit codes follow the scientific outcome so shell pipelines can branch on
//! it: 0 when a lower bound on the number of incompatible measurements was
//! certified, 2 when the test was inconclusive (including every threshold
//! computation), 1 on configuration, input, or solver errors.

mod instance;
mod output;
mod parallel;
mod sweep;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use steercert::certify::{
    build_problem_with, certify_from_state, critical_visibility, solve, CertificationReport,
    ConstraintTier, DpsEncoding, ProblemOptions, SolveMode,
};
use steercert::report::ReportFile;
use steercert::scenarios::{depolarize, NoiseModel};
use steercert::sdp_adapter::SolverSettings;

use instance::{InstanceArgs, Loaded};
use output::emit;

const EXIT_CERTIFIED: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_INCONCLUSIVE: u8 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "steercert",
    version,
    about = "Certify lower bounds on the number of incompatible measurements \
             from steering data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one compatibility test and write a JSON report.
    Certify(CertifyArgs),
    /// Compute the table of critical visibilities for the MUB families.
    Table1(table::TableArgs),
    /// Test a grid of visibilities and report per-point verdicts.
    Sweep(sweep::SweepArgs),
}

/// Solver limits; unset flags fall back to the `STEERCERT_*` environment
/// overrides, then to built-in defaults.
#[derive(Args, Debug)]
struct SolverArgs {
    /// Iteration cap per solve.
    #[arg(long)]
    max_iter: Option<u32>,
    /// Wall-clock limit per solve, in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Solver convergence tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Refuse solves whose estimated working set exceeds this many megabytes.
    #[arg(long)]
    mem_budget_mb: Option<usize>,
    /// Print solver progress to stderr.
    #[arg(long)]
    verbose: bool,
}

impl SolverArgs {
    fn settings(&self) -> SolverSettings {
        let mut s = SolverSettings::from_env();
        if let Some(v) = self.max_iter {
            s.max_iter = v;
        }
        if let Some(v) = self.time_limit {
            s.time_limit_s = v;
        }
        if let Some(v) = self.tol {
            s.tol = v;
        }
        if let Some(v) = self.mem_budget_mb {
            s.mem_budget_mb = v;
        }
        s.verbose |= self.verbose;
        s
    }
}

/// Extension-tier encoding selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum EncodingArg {
    /// Extension blocks on every duplicate-swap invariant sector.
    SwapBlocks,
    /// Only the symmetric-subspace block; smallest, still exact.
    Bose,
    /// Explicit extensions with swap constraints, for cross-validation.
    Uncompressed,
}

impl EncodingArg {
    fn to_encoding(self) -> DpsEncoding {
        match self {
            EncodingArg::SwapBlocks => DpsEncoding::SwapBlocks,
            EncodingArg::Bose => DpsEncoding::BoseSymmetric,
            EncodingArg::Uncompressed => DpsEncoding::Uncompressed,
        }
    }
}

fn parse_tier(s: &str) -> Result<ConstraintTier, String> {
    s.parse()
}

#[derive(Args, Debug)]
struct CertifyArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Number of hypothetically compatible measurements to test against; a
    /// certified verdict means at least k + 1 are incompatible.
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Constraint tier: kcompat, ppt, dps, or dps3.
    #[arg(long, default_value = "kcompat", value_parser = parse_tier)]
    tier: ConstraintTier,
    /// Visibility at which to test the depolarized family (default 1).
    #[arg(long, conflicts_with = "threshold")]
    t: Option<f64>,
    /// Compute the tier's critical visibility instead of testing a fixed
    /// one; always exits 2 (a threshold is not a certificate).
    #[arg(long)]
    threshold: bool,
    /// Extension-tier encoding.
    #[arg(long, value_enum, default_value_t = EncodingArg::SwapBlocks)]
    encoding: EncodingArg,
    /// Proceed past the built-in problem-size caps.
    #[arg(long)]
    override_caps: bool,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

/// Solve one fixed-visibility instance, steering first when a state is
/// present (the visibility then scales Alice's measurements before steering).
fn solve_at(
    loaded: &Loaded,
    t: f64,
    k: usize,
    tier: ConstraintTier,
    settings: &SolverSettings,
    opts: &ProblemOptions,
) -> Result<CertificationReport, String> {
    match &loaded.state {
        Some((state, _, _)) => {
            let noise = NoiseModel::new(t).map_err(|e| e.to_string())?;
            let m = depolarize(&loaded.assemblage, noise);
            certify_from_state(state, &m, k, tier, settings, opts).map_err(|e| e.to_string())
        }
        None => {
            let p = build_problem_with(&loaded.assemblage, k, tier, SolveMode::Feasibility { t }, opts)
                .map_err(|e| e.to_string())?;
            solve(&p, settings).map_err(|e| e.to_string())
        }
    }
}

fn run_certify(args: &CertifyArgs) -> Result<u8, String> {
    let settings = args.solver.settings();
    let opts = ProblemOptions {
        dps_encoding: args.encoding.to_encoding(),
        override_caps: args.override_caps,
        mem_budget_mb: settings.mem_budget_mb,
        ..ProblemOptions::default()
    };
    let loaded = args.instance.load()?;

    let (report, mode) = if args.threshold {
        if loaded.state.is_some() {
            return Err(
                "--threshold does not apply to instances with a state; the threshold is a \
                 property of a fixed family, but here the observables themselves depend on \
                 the visibility"
                    .into(),
            );
        }
        let rep = critical_visibility(&loaded.assemblage, args.k, args.tier, &settings, &opts)
            .map_err(|e| e.to_string())?;
        (rep, "max-visibility")
    } else {
        let t = args.t.unwrap_or(1.0);
        (solve_at(&loaded, t, args.k, args.tier, &settings, &opts)?, "feasibility")
    };

    let file = ReportFile::new("certify", &loaded.label, mode, &report);
    emit(args.out.as_deref(), &file.to_json())?;
    eprintln!("{}", summary_line(&report));
    Ok(if report.verdict.is_certified() { EXIT_CERTIFIED } else { EXIT_INCONCLUSIVE })
}

fn summary_line(rep: &CertificationReport) -> String {
    let point = match (rep.t_queried, rep.t_c) {
        (Some(t), _) => format!("t={t}"),
        (None, Some(tc)) => format!("t_c={tc:.4}"),
        (None, None) => "t_c undetermined".into(),
    };
    format!(
        "{} [{} k={} {} {} {:.2}s]",
        rep.verdict, rep.tier, rep.k, point, rep.raw_solver_status, rep.wall_time_s
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Certify(args) => run_certify(args),
        Command::Table1(args) => table::run(args),
        Command::Sweep(args) => sweep::run(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
