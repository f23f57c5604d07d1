//! Dump assembled programs in SDPA sparse format (`.dat-s`) and parse them
//! back, so solutions can be cross-validated through an independent reading
//! of the constraints (and fed to external solvers). The exact mapping is
//! documented in `docs/sdp-dump-format.md`.
//!
//! SDPA dual standard form: minimize cᵀx subject to Σ_k x_k F_k − F_0 ⪰ 0
//! with a fixed block-diagonal structure (negative block sizes mean diagonal
//! blocks). Our equality rows become ± pairs of diagonal entries, scalar
//! inequalities one diagonal entry each, and every PSD cone one matrix block.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use super::encode::SQRT2;
use super::ConicProgram;

/// Map an svec index back to (row ≤ col) in the column-major upper triangle.
fn svec_index_to_ij(l: usize) -> (usize, usize) {
    let mut j = 0;
    while (j + 1) * (j + 2) / 2 <= l {
        j += 1;
    }
    (l - j * (j + 1) / 2, j)
}

/// One `matno blkno i j value` record (all indices 1-based as in the format).
#[derive(Debug, Clone, PartialEq)]
pub struct SdpaEntry {
    pub matno: usize,
    pub blkno: usize,
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

/// A parsed SDPA sparse program.
#[derive(Debug, Clone)]
pub struct SdpaProgram {
    pub n_vars: usize,
    /// Block sizes; negative means a diagonal block of that many entries.
    pub block_struct: Vec<i64>,
    pub objective: Vec<f64>,
    pub entries: Vec<SdpaEntry>,
}

impl SdpaProgram {
    /// Assemble Σ x_k F_k − F_0 per block (diagonal blocks as dense diagonal
    /// matrices) — the slack that must be PSD for x to be feasible.
    pub fn evaluate(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        assert_eq!(x.len(), self.n_vars);
        let mut blocks: Vec<DMatrix<f64>> = self
            .block_struct
            .iter()
            .map(|&s| DMatrix::zeros(s.unsigned_abs() as usize, s.unsigned_abs() as usize))
            .collect();
        for e in &self.entries {
            let w = if e.matno == 0 { -e.value } else { x[e.matno - 1] * e.value };
            let blk = &mut blocks[e.blkno - 1];
            blk[(e.i - 1, e.j - 1)] += w;
            if e.i != e.j {
                blk[(e.j - 1, e.i - 1)] += w;
            }
        }
        blocks
    }

    /// Most negative eigenvalue across all slack blocks (≥ 0 ⇔ feasible).
    pub fn min_slack_eig(&self, x: &[f64]) -> f64 {
        self.evaluate(x)
            .into_iter()
            .flat_map(|b| {
                nalgebra::SymmetricEigen::new(b).eigenvalues.iter().copied().collect::<Vec<_>>()
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

/// Serialize a program to SDPA sparse text.
pub fn dump(program: &ConicProgram) -> String {
    let n_eq = program.eq.rhs.len();
    let n_ineq = program.ineq.rhs.len();
    let diag_size = 2 * n_eq + n_ineq;
    let mut out = String::new();
    let _ = writeln!(out, "* conic feasibility/visibility program, SDPA sparse format");
    let _ = writeln!(out, "{}", program.n_vars);
    let n_block = usize::from(diag_size > 0) + program.psd.len();
    let _ = writeln!(out, "{n_block}");
    let mut sizes: Vec<String> = Vec::new();
    if diag_size > 0 {
        sizes.push(format!("-{diag_size}"));
    }
    sizes.extend(program.psd.iter().map(|b| b.emb_dim.to_string()));
    let _ = writeln!(out, "{}", sizes.join(" "));
    let _ = writeln!(
        out,
        "{}",
        program.objective.iter().map(|v| format!("{v:.17e}")).collect::<Vec<_>>().join(" ")
    );

    let mut push = |matno: usize, blkno: usize, i: usize, j: usize, value: f64| {
        if value != 0.0 {
            let _ = writeln!(out, "{matno} {blkno} {i} {j} {value:.17e}");
        }
    };
    if diag_size > 0 {
        // Equality row r: (aᵀx − b ≥ 0) at diag slot 2r+1, (b − aᵀx ≥ 0) at 2r+2.
        for (r, &rhs) in program.eq.rhs.iter().enumerate() {
            push(0, 1, 2 * r + 1, 2 * r + 1, rhs);
            push(0, 1, 2 * r + 2, 2 * r + 2, -rhs);
        }
        for &(r, c, v) in &program.eq.triplets {
            push(c + 1, 1, 2 * r + 1, 2 * r + 1, v);
            push(c + 1, 1, 2 * r + 2, 2 * r + 2, -v);
        }
        // Inequality row aᵀx ≤ b ⇔ b − aᵀx ≥ 0.
        for (r, &rhs) in program.ineq.rhs.iter().enumerate() {
            push(0, 1, 2 * n_eq + r + 1, 2 * n_eq + r + 1, -rhs);
        }
        for &(r, c, v) in &program.ineq.triplets {
            push(c + 1, 1, 2 * n_eq + r + 1, 2 * n_eq + r + 1, -v);
        }
    }
    // PSD cone slack Mat(b) − Σ x_k Mat(A_k) ⪰ 0 ⇒ F_0 = −Mat(b), F_k = −Mat(A_k);
    // svec off-diagonals carry a √2 factor that must be stripped for entries.
    let blk0 = usize::from(diag_size > 0);
    for (bi, blk) in program.psd.iter().enumerate() {
        let blkno = blk0 + bi + 1;
        let unscale = |l: usize, v: f64| {
            let (i, j) = svec_index_to_ij(l);
            (i, j, if i == j { v } else { v / SQRT2 })
        };
        for (l, &rhs) in blk.rows.rhs.iter().enumerate() {
            let (i, j, v) = unscale(l, rhs);
            push(0, blkno, i + 1, j + 1, -v);
        }
        for &(l, c, val) in &blk.rows.triplets {
            let (i, j, v) = unscale(l, val);
            push(c + 1, blkno, i + 1, j + 1, -v);
        }
    }
    out
}

/// Parse SDPA sparse text (comments `*`/`"` tolerated before the data).
pub fn parse(text: &str) -> Result<SdpaProgram, String> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('*') && !l.starts_with('"'));
    let mut next_line = |what: &str| lines.next().ok_or_else(|| format!("missing {what}"));
    let n_vars: usize =
        next_line("variable count")?.parse().map_err(|e| format!("variable count: {e}"))?;
    let n_block: usize =
        next_line("block count")?.parse().map_err(|e| format!("block count: {e}"))?;
    let block_struct: Vec<i64> = next_line("block structure")?
        .split(|c: char| c.is_whitespace() || c == ',' || c == '(' || c == ')' || c == '{' || c == '}')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|e| format!("block structure: {e}")))
        .collect::<Result<_, _>>()?;
    if block_struct.len() != n_block {
        return Err(format!("expected {n_block} blocks, got {}", block_struct.len()));
    }
    let objective: Vec<f64> = next_line("objective")?
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|e| format!("objective: {e}")))
        .collect::<Result<_, _>>()?;
    if objective.len() != n_vars {
        return Err(format!("expected {n_vars} objective entries, got {}", objective.len()));
    }
    let mut entries = Vec::new();
    for line in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 5 {
            return Err(format!("malformed entry line: {line:?}"));
        }
        let entry = SdpaEntry {
            matno: tok[0].parse().map_err(|e| format!("matno: {e}"))?,
            blkno: tok[1].parse().map_err(|e| format!("blkno: {e}"))?,
            i: tok[2].parse().map_err(|e| format!("row: {e}"))?,
            j: tok[3].parse().map_err(|e| format!("col: {e}"))?,
            value: tok[4].parse().map_err(|e| format!("value: {e}"))?,
        };
        if entry.matno > n_vars || entry.blkno == 0 || entry.blkno > n_block {
            return Err(format!("entry indices out of range: {line:?}"));
        }
        entries.push(entry);
    }
    Ok(SdpaProgram { n_vars, block_struct, objective, entries })
}

/// Convenience: dump, reparse, and measure the worst slack violation of `x`
/// under the reparsed constraints — an independent feasibility reading.
pub fn cross_check_feasibility(program: &ConicProgram, x: &[f64]) -> Result<f64, String> {
    Ok(parse(&dump(program))?.min_slack_eig(x))
}
