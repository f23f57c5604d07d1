//! Visibility sweeps: per-point verdicts over a grid, with a monotonicity
//! check — depolarizing harder can only make the test easier to pass, so
//! feasible points must sit below infeasible ones. Inversions are emitted
//! anyway, flagged as solver instability.

use std::path::PathBuf;

use clap::Args;

use steercert::certify::{ConstraintTier, ProblemOptions, Verdict};
use steercert::report::status_string;
use steercert::sdp_adapter::SolveStatus;

use crate::instance::InstanceArgs;
use crate::output::{csv_field, emit, OutputFormat};
use crate::parallel::run_ordered;
use crate::{parse_tier, solve_at, EncodingArg, SolverArgs};

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Number of hypothetically compatible measurements to test against.
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Constraint tier: kcompat, ppt, dps, or dps3.
    #[arg(long, default_value = "kcompat", value_parser = parse_tier)]
    tier: ConstraintTier,
    /// Comma-separated visibilities in [0, 1].
    #[arg(long, value_delimiter = ',', required = true)]
    grid: Vec<f64>,
    /// Extension-tier encoding.
    #[arg(long, value_enum, default_value_t = EncodingArg::SwapBlocks)]
    encoding: EncodingArg,
    /// Parallel point solves.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

/// What one grid point established about feasibility of the tier's program.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Feasibility {
    Feasible,
    Infeasible,
    Undecided,
}

impl Feasibility {
    fn label(self) -> &'static str {
        match self {
            Feasibility::Feasible => "feasible",
            Feasibility::Infeasible => "infeasible",
            Feasibility::Undecided => "undecided",
        }
    }
}

struct PointResult {
    feasibility: Feasibility,
    verdict: String,
    status: String,
    wall_time_s: f64,
}

pub fn run(args: &SweepArgs) -> Result<u8, String> {
    if args.grid.is_empty() {
        return Err("--grid needs at least one visibility".into());
    }
    if let Some(bad) = args.grid.iter().find(|t| !(0.0..=1.0).contains(*t) || !t.is_finite()) {
        return Err(format!("grid point {bad} is outside [0, 1]"));
    }
    let settings = args.solver.settings();
    let opts = ProblemOptions {
        dps_encoding: args.encoding.to_encoding(),
        mem_budget_mb: settings.mem_budget_mb,
        ..ProblemOptions::default()
    };
    let loaded = args.instance.load()?;

    let results = run_ordered(args.grid.len(), args.jobs, |i| {
        match solve_at(&loaded, args.grid[i], args.k, args.tier, &settings, &opts) {
            Ok(rep) => PointResult {
                feasibility: match rep.solver_status {
                    SolveStatus::Optimal => Feasibility::Feasible,
                    SolveStatus::PrimalInfeasible => Feasibility::Infeasible,
                    SolveStatus::Unknown { .. } => Feasibility::Undecided,
                },
                verdict: match rep.verdict {
                    Verdict::CertifiedAtLeast(n) => format!("CERTIFIED_AT_LEAST({n})"),
                    Verdict::Inconclusive => "INCONCLUSIVE".into(),
                },
                status: status_string(&rep.solver_status),
                wall_time_s: rep.wall_time_s,
            },
            Err(e) => PointResult {
                feasibility: Feasibility::Undecided,
                verdict: "INCONCLUSIVE".into(),
                status: format!("error: {e}"),
                wall_time_s: 0.0,
            },
        }
    });

    let flags = instability_flags(&args.grid, &results);
    let text = match args.format {
        OutputFormat::Csv => to_csv(&args.grid, &results, &flags),
        OutputFormat::Json => to_json(&args.grid, &results, &flags),
    };
    emit(args.out.as_deref(), &text)?;
    Ok(0)
}

/// Flag every decided pair that inverts the expected monotone structure: a
/// feasible point strictly above an infeasible one.
fn instability_flags(grid: &[f64], results: &[PointResult]) -> Vec<bool> {
    let mut flags = vec![false; grid.len()];
    for i in 0..grid.len() {
        for j in 0..grid.len() {
            if results[i].feasibility == Feasibility::Infeasible
                && results[j].feasibility == Feasibility::Feasible
                && grid[j] > grid[i]
            {
                flags[i] = true;
                flags[j] = true;
            }
        }
    }
    flags
}

fn to_csv(grid: &[f64], results: &[PointResult], flags: &[bool]) -> String {
    let mut out = String::from("t,feasible,verdict,solver_status,wall_time_s,flag\n");
    for ((t, r), flagged) in grid.iter().zip(results).zip(flags) {
        out.push_str(&format!(
            "{},{},{},{},{:.2},{}\n",
            t,
            r.feasibility.label(),
            r.verdict,
            csv_field(&r.status),
            r.wall_time_s,
            if *flagged { "solver-instability" } else { "" }
        ));
    }
    out
}

fn to_json(grid: &[f64], results: &[PointResult], flags: &[bool]) -> String {
    let rows: Vec<serde_json::Value> = grid
        .iter()
        .zip(results)
        .zip(flags)
        .map(|((t, r), flagged)| {
            serde_json::json!({
                "t": t,
                "feasible": r.feasibility.label(),
                "verdict": r.verdict,
                "solver_status": r.status,
                "wall_time_s": r.wall_time_s,
                "flag": if *flagged { "solver-instability" } else { "" },
            })
        })
        .collect();
    serde_json::to_string_pretty(&rows).expect("plain data serializes")
}
