//! The benchmark table: critical visibilities for the MUB families at every
//! tier — two qubit rows (where closed forms exist for cross-checking) and
//! the three qutrit scenarios times three tiers.

use std::path::PathBuf;

use clap::Args;

use steercert::certify::{critical_visibility, ConstraintTier, DpsEncoding, ProblemOptions};
use steercert::report::status_string;
use steercert::scenarios::mub_assemblage;
use steercert::sdp_adapter::SolverSettings;

use crate::output::{csv_field, emit, OutputFormat};
use crate::parallel::run_ordered;
use crate::SolverArgs;

/// Extension-tier optima are degenerate (the antisymmetric extension sectors
/// vanish), which stalls the interior point near convergence; unless the
/// user pins `--tol`, extension cells run at this looser tolerance.
const DPS_CELL_TOL: f64 = 1e-5;

#[derive(Args, Debug)]
pub struct TableArgs {
    /// Also compute the largest cell (qutrit, n_m = 4, k = 3, extension
    /// tier); expect a long solve and a multi-GB working set.
    #[arg(long)]
    include_heavy: bool,
    /// Parallel cell solves.
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

struct Cell {
    d: usize,
    n_m: usize,
    k: usize,
    tier: ConstraintTier,
    skip: bool,
}

struct CellResult {
    t_c: Option<f64>,
    wall_time_s: f64,
    status: String,
}

fn cells(include_heavy: bool) -> Vec<Cell> {
    let mut out = vec![
        Cell { d: 2, n_m: 3, k: 2, tier: ConstraintTier::Kcompat, skip: false },
        Cell { d: 2, n_m: 3, k: 2, tier: ConstraintTier::KcompatPpt, skip: false },
    ];
    for (n_m, k) in [(3, 2), (4, 2), (4, 3)] {
        for tier in [
            ConstraintTier::Kcompat,
            ConstraintTier::KcompatPpt,
            ConstraintTier::KcompatPptDps { level: 2 },
        ] {
            let heavy = k >= 3 && matches!(tier, ConstraintTier::KcompatPptDps { .. });
            out.push(Cell { d: 3, n_m, k, tier, skip: heavy && !include_heavy });
        }
    }
    out
}

fn solve_cell(cell: &Cell, base: &SolverSettings, tol_pinned: bool) -> CellResult {
    if cell.skip {
        return CellResult {
            t_c: None,
            wall_time_s: 0.0,
            status: "skipped (enable with --include-heavy)".into(),
        };
    }
    let dps = matches!(cell.tier, ConstraintTier::KcompatPptDps { .. });
    let mut settings = base.clone();
    if dps && !tol_pinned {
        settings.tol = settings.tol.max(DPS_CELL_TOL);
    }
    let opts = ProblemOptions {
        // At three copies only the symmetric-subspace encoding fits.
        dps_encoding: if dps && cell.k >= 3 {
            DpsEncoding::BoseSymmetric
        } else {
            DpsEncoding::SwapBlocks
        },
        mem_budget_mb: settings.mem_budget_mb,
        ..ProblemOptions::default()
    };
    let m = match mub_assemblage(cell.d, cell.n_m) {
        Ok(m) => m,
        Err(e) => {
            return CellResult { t_c: None, wall_time_s: 0.0, status: format!("error: {e}") }
        }
    };
    match critical_visibility(&m, cell.k, cell.tier, &settings, &opts) {
        Ok(rep) => CellResult {
            t_c: rep.t_c,
            wall_time_s: rep.wall_time_s,
            status: status_string(&rep.solver_status),
        },
        Err(e) => CellResult { t_c: None, wall_time_s: 0.0, status: format!("error: {e}") },
    }
}

fn to_csv(cells: &[Cell], results: &[CellResult]) -> String {
    let mut out = String::from("d,n_m,k,tier,t_c,wall_time_s,solver_status\n");
    for (c, r) in cells.iter().zip(results) {
        let t_c = r.t_c.map(|v| format!("{v:.4}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{:.2},{}\n",
            c.d,
            c.n_m,
            c.k,
            c.tier,
            t_c,
            r.wall_time_s,
            csv_field(&r.status)
        ));
    }
    out
}

fn to_json(cells: &[Cell], results: &[CellResult]) -> String {
    let rows: Vec<serde_json::Value> = cells
        .iter()
        .zip(results)
        .map(|(c, r)| {
            serde_json::json!({
                "d": c.d,
                "n_m": c.n_m,
                "k": c.k,
                "tier": c.tier.to_string(),
                "t_c": r.t_c,
                "wall_time_s": r.wall_time_s,
                "solver_status": r.status,
            })
        })
        .collect();
    serde_json::to_string_pretty(&rows).expect("plain data serializes")
}

pub fn run(args: &TableArgs) -> Result<u8, String> {
    let base = args.solver.settings();
    let cells = cells(args.include_heavy);
    let results =
        run_ordered(cells.len(), args.jobs, |i| solve_cell(&cells[i], &base, args.solver.tol.is_some()));
    let text = match args.format {
        OutputFormat::Csv => to_csv(&cells, &results),
        OutputFormat::Json => to_json(&cells, &results),
    };
    emit(args.out.as_deref(), &text)?;
    Ok(0)
}
