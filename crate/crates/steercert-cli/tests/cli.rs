//! End-to-end checks of the binary: exit codes, report validity and
//! reproducibility, sweep verdict patterns, and the table's shape.

use std::path::PathBuf;
use std::process::{Command, Output};

use steercert::report::{InstanceFile, OperatorData, ReportFile, StateData};
use steercert::scenarios::{maximally_entangled, mub_assemblage};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_steercert"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("steercert-cli-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("scratch dir");
    dir.join(name)
}

#[test]
fn certify_exit_codes_follow_the_verdict() {
    // Above the qubit 2-compatibility threshold √3/2 ≈ 0.866: certified.
    let out = run(&[
        "certify", "--scenario", "mub", "--d", "2", "--n-m", "3", "--k", "2", "--t", "0.95",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));

    // Full depolarization is compatible with anything: inconclusive.
    let out = run(&[
        "certify", "--scenario", "mub", "--d", "2", "--n-m", "3", "--k", "2", "--t", "0",
    ]);
    assert_eq!(out.status.code(), Some(2));

    // Non-prime dimension: configuration error.
    let out = run(&["certify", "--scenario", "mub", "--d", "9", "--n-m", "3"]);
    assert_eq!(out.status.code(), Some(1));

    // Malformed input file: error.
    let path = scratch("garbage.json");
    std::fs::write(&path, "{ not json").unwrap();
    let out = run(&["certify", "--scenario", "file", "--input", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn reports_validate_and_reproduce_modulo_wall_time() {
    let paths = [scratch("rep1.json"), scratch("rep2.json")];
    for p in &paths {
        let out = run(&[
            "certify", "--scenario", "mub", "--d", "2", "--n-m", "3", "--k", "2", "--t", "0.9",
            "--out", p.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    }
    let mut reports = paths
        .iter()
        .map(|p| ReportFile::from_json(&std::fs::read_to_string(p).unwrap()).expect("valid report"));
    let (mut a, mut b) = (reports.next().unwrap(), reports.next().unwrap());
    a.wall_time_s = 0.0;
    b.wall_time_s = 0.0;
    assert_eq!(a.to_json(), b.to_json(), "identical configs give identical reports");
}

#[test]
fn threshold_mode_reports_the_critical_visibility() {
    let path = scratch("threshold.json");
    let out = run(&[
        "certify", "--scenario", "mub", "--d", "2", "--n-m", "3", "--k", "2", "--threshold",
        "--out", path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "thresholds are not certificates");
    let rep = ReportFile::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let t_c = rep.t_c.expect("threshold mode sets t_c");
    assert!((t_c - 0.75f64.sqrt()).abs() < 1e-4, "t_c = {t_c}");
}

#[test]
fn file_scenario_steers_the_supplied_state() {
    // A qubit MUB pair through the maximally entangled state: the
    // steering-equivalent observables are the transposed bases, so the pair
    // threshold 1/√2 applies and full visibility is certified at k = 1.
    let m = mub_assemblage(2, 2).unwrap();
    let file = InstanceFile {
        measurements: m
            .effects()
            .iter()
            .map(|povm| povm.iter().map(OperatorData::from_operator).collect())
            .collect(),
        state: Some(StateData {
            dim_a: 2,
            dim_b: 2,
            matrix: OperatorData::from_operator(&maximally_entangled(2)),
        }),
    };
    let path = scratch("instance.json");
    std::fs::write(&path, file.to_json()).unwrap();
    let out = run(&[
        "certify", "--scenario", "file", "--input", path.to_str().unwrap(), "--k", "1",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let rep = ReportFile::from_json(&stdout(&out)).expect("stdout report validates");
    assert_eq!(rep.certified_lower_bound, Some(2));
    assert_eq!(rep.seo_rank, Some(2));
}

#[test]
fn sweep_shows_feasibility_turning_over_at_the_threshold() {
    let out = run(&[
        "sweep", "--scenario", "mub", "--d", "2", "--n-m", "3", "--k", "2", "--grid",
        "0.80,0.85,0.90", "--jobs", "3",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,feasible,verdict,solver_status,wall_time_s,flag");
    assert!(lines[1].starts_with("0.8,feasible,INCONCLUSIVE"), "{}", lines[1]);
    assert!(lines[2].starts_with("0.85,feasible,INCONCLUSIVE"), "{}", lines[2]);
    assert!(lines[3].starts_with("0.9,infeasible,CERTIFIED_AT_LEAST(3)"), "{}", lines[3]);
    assert!(
        text.lines().all(|l| !l.contains("solver-instability")),
        "a monotone pattern must not be flagged"
    );
}

#[test]
fn sweep_trivial_grids_are_feasible() {
    // Full noise is compatible with anything.
    let out = run(&["sweep", "--scenario", "mub", "--d", "3", "--n-m", "3", "--grid", "0"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(stdout(&out).lines().nth(1).unwrap().starts_with("0,feasible"));

    // As many copies as settings: compatible even at full visibility.
    let out = run(&[
        "sweep", "--scenario", "mub", "--d", "2", "--n-m", "2", "--k", "2", "--grid", "1",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(stdout(&out).lines().nth(1).unwrap().starts_with("1,feasible"));
}

#[test]
fn sweep_json_rows_carry_the_same_fields() {
    let out = run(&[
        "sweep", "--scenario", "mub", "--d", "2", "--n-m", "3", "--grid", "0.5,0.95",
        "--format", "json",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let rows: serde_json::Value = serde_json::from_str(&stdout(&out)).expect("json output");
    let rows = rows.as_array().expect("array of rows");
    assert_eq!(rows.len(), 2);
    for key in ["t", "feasible", "verdict", "solver_status", "wall_time_s", "flag"] {
        assert!(rows[0].get(key).is_some(), "missing {key}");
    }
}

/// Parse one CSV cell of the table as f64.
fn cell(line: &str, idx: usize) -> f64 {
    line.split(',').nth(idx).unwrap().parse().unwrap()
}

#[test]
fn table_emits_every_cell_in_config_order() {
    // A loose tolerance keeps the extension cells quick; thresholds are
    // checked to matching looseness.
    let out = run(&["table1", "--jobs", "2", "--tol", "1e-4"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "d,n_m,k,tier,t_c,wall_time_s,solver_status");
    assert_eq!(lines.len(), 12, "header, two qubit rows, nine qutrit rows:\n{text}");

    assert!(lines[1].starts_with("2,3,2,kcompat,"), "{}", lines[1]);
    assert!((cell(lines[1], 4) - 0.8660).abs() < 5e-3, "{}", lines[1]);
    assert!(lines[2].starts_with("2,3,2,kcompat+ppt,"), "{}", lines[2]);
    assert!((cell(lines[2], 4) - 0.8165).abs() < 5e-3, "{}", lines[2]);
    assert!(lines[3].starts_with("3,3,2,kcompat,"), "{}", lines[3]);
    assert!((cell(lines[3], 4) - 0.8553).abs() < 5e-3, "{}", lines[3]);

    // The heavy cell is present but skipped without --include-heavy.
    assert!(lines[11].starts_with("3,4,3,kcompat+ppt+dps(2),,"), "{}", lines[11]);
    assert!(lines[11].contains("skipped"), "{}", lines[11]);
}
