//! Machine-readable artifacts: a versioned JSON record of certification runs,
//! and the JSON input format for user-supplied states and measurement
//! families.
//!
//! The report schema is the [`ReportFile`] struct itself: serialization fixes
//! field names and order, and [`ReportFile::from_json`] rejects unknown
//! fields, missing fields, and cross-field inconsistencies — parsing *is*
//! validation. Matrices travel as explicit-dimension row-major `[re, im]`
//! pairs so fixtures stay diffable.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certify::{CertificationReport, Verdict};
use crate::qops::{Operator, C64};
use crate::scenarios::{MeasurementAssemblage, ScenarioError};
use crate::sdp_adapter::{CertificateQuality, SolveStatus};

/// Bumped whenever a field is added, removed, or reinterpreted.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Errors from parsing or validating reports and instance files.
#[derive(Debug, Error)]
pub enum ReportError {
    /// JSON is malformed or does not match the schema struct.
    #[error("schema violation: {0}")]
    Schema(String),
    /// Matrix data is internally inconsistent (dims vs. entry count, shape).
    #[error("invalid operator data: {0}")]
    BadOperator(String),
    /// The parsed effects fail the POVM invariants.
    #[error(transparent)]
    Assemblage(#[from] ScenarioError),
}

/// Dense complex matrix: row-major entries as `[re, im]` pairs with explicit
/// dimensions.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorData {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<[f64; 2]>,
}

impl OperatorData {
    pub fn from_operator(op: &Operator) -> Self {
        let entries = (0..op.nrows())
            .flat_map(|i| (0..op.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| [op[(i, j)].re, op[(i, j)].im])
            .collect();
        Self { rows: op.nrows(), cols: op.ncols(), entries }
    }

    pub fn to_operator(&self) -> Result<Operator, ReportError> {
        if self.rows * self.cols != self.entries.len() {
            return Err(ReportError::BadOperator(format!(
                "{}×{} matrix with {} entries",
                self.rows,
                self.cols,
                self.entries.len()
            )));
        }
        if self.entries.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ReportError::BadOperator("non-finite entry".into()));
        }
        Ok(Operator::from_fn(self.rows, self.cols, |i, j| {
            let [re, im] = self.entries[i * self.cols + j];
            C64::new(re, im)
        }))
    }
}

/// A bipartite state with its factor dimensions.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateData {
    pub dim_a: usize,
    pub dim_b: usize,
    pub matrix: OperatorData,
}

/// User-supplied certification instance: measurement effects indexed
/// `[setting][outcome]`, plus optionally a shared bipartite state — when the
/// state is present the steering pipeline runs first and the tests apply to
/// the resulting steering-equivalent observables.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub measurements: Vec<Vec<OperatorData>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<StateData>,
}

impl InstanceFile {
    pub fn from_json(s: &str) -> Result<Self, ReportError> {
        serde_json::from_str(s).map_err(|e| ReportError::Schema(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    /// Parse and validate the measurement family.
    pub fn assemblage(&self) -> Result<MeasurementAssemblage, ReportError> {
        let effects = self
            .measurements
            .iter()
            .map(|povm| povm.iter().map(OperatorData::to_operator).collect())
            .collect::<Result<Vec<Vec<Operator>>, _>>()?;
        Ok(MeasurementAssemblage::new(effects)?)
    }

    /// Parse the state, checking squareness against the declared factors.
    pub fn state_operator(&self) -> Result<Option<(Operator, usize, usize)>, ReportError> {
        match &self.state {
            None => Ok(None),
            Some(s) => {
                let op = s.matrix.to_operator()?;
                let dim = s.dim_a * s.dim_b;
                if op.nrows() != dim || op.ncols() != dim {
                    return Err(ReportError::BadOperator(format!(
                        "state is {}×{} but dims declare {}·{} = {dim}",
                        op.nrows(),
                        op.ncols(),
                        s.dim_a,
                        s.dim_b
                    )));
                }
                Ok(Some((op, s.dim_a, s.dim_b)))
            }
        }
    }
}

/// Infeasibility-certificate quality, mirrored into the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateData {
    pub ray_residual: f64,
    pub ray_gap: f64,
    pub cone_violation: f64,
}

impl From<&CertificateQuality> for CertificateData {
    fn from(c: &CertificateQuality) -> Self {
        Self { ray_residual: c.ray_residual, ray_gap: c.ray_gap, cone_violation: c.cone_violation }
    }
}

/// One run's complete machine-readable record.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportFile {
    pub schema_version: u32,
    /// Subcommand that produced the record.
    pub command: String,
    /// Instance description (scenario name, dimensions, settings).
    pub scenario: String,
    pub tier: String,
    pub k: usize,
    /// "feasibility" or "max-visibility".
    pub mode: String,
    pub verdict: String,
    /// Lower bound on the number of incompatible measurements when certified.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certified_lower_bound: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_queried: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_c: Option<f64>,
    pub solver_status: String,
    pub raw_solver_status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_constraint_violation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateData>,
    pub iterations: u32,
    /// Excluded from reproducibility comparisons.
    pub wall_time_s: f64,
    pub encoding: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seo_rank: Option<usize>,
}

/// Stable status string for reports (the raw backend string travels
/// separately).
pub fn status_string(status: &SolveStatus) -> String {
    match status {
        SolveStatus::Optimal => "optimal".into(),
        SolveStatus::PrimalInfeasible => "primal-infeasible".into(),
        SolveStatus::Unknown { reason } => format!("unknown: {reason}"),
    }
}

impl ReportFile {
    /// Package a certification outcome with its run context.
    pub fn new(command: &str, scenario: &str, mode: &str, rep: &CertificationReport) -> Self {
        let certified_lower_bound = match rep.verdict {
            Verdict::CertifiedAtLeast(n) => Some(n),
            Verdict::Inconclusive => None,
        };
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            command: command.into(),
            scenario: scenario.into(),
            tier: rep.tier.to_string(),
            k: rep.k,
            mode: mode.into(),
            verdict: rep.verdict.to_string(),
            certified_lower_bound,
            t_queried: rep.t_queried,
            t_c: rep.t_c,
            solver_status: status_string(&rep.solver_status),
            raw_solver_status: rep.raw_solver_status.clone(),
            max_constraint_violation: rep.max_constraint_violation,
            certificate: rep.certificate.as_ref().map(CertificateData::from),
            iterations: rep.iterations,
            wall_time_s: rep.wall_time_s,
            encoding: rep.encoding.into(),
            seo_rank: rep.seo_rank,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    /// Parse strictly and check the cross-field invariants; this is the
    /// schema validator.
    pub fn from_json(s: &str) -> Result<Self, ReportError> {
        let report: Self =
            serde_json::from_str(s).map_err(|e| ReportError::Schema(e.to_string()))?;
        report.validate()?;
        Ok(report)
    }

    /// Cross-field invariants beyond what the type system enforces.
    pub fn validate(&self) -> Result<(), ReportError> {
        if self.schema_version != REPORT_SCHEMA_VERSION {
            return Err(ReportError::Schema(format!(
                "schema_version {} (this build reads {REPORT_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let claims = self.verdict.starts_with("CERTIFIED_AT_LEAST");
        if claims != self.certified_lower_bound.is_some() {
            return Err(ReportError::Schema(
                "verdict and certified_lower_bound disagree".into(),
            ));
        }
        if claims && self.certificate.is_none() {
            return Err(ReportError::Schema(
                "a certified verdict requires certificate quality data".into(),
            ));
        }
        if let Some(b) = self.certified_lower_bound {
            if b != self.k + 1 {
                return Err(ReportError::Schema(format!(
                    "certified bound {b} does not match k + 1 = {}",
                    self.k + 1
                )));
            }
        }
        for (name, v) in [("t_queried", self.t_queried), ("t_c", self.t_c)] {
            if let Some(v) = v {
                if !(0.0..=1.0).contains(&v) {
                    return Err(ReportError::Schema(format!("{name} = {v} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::ConstraintTier;
    use crate::scenarios::mub_assemblage;

    fn sample_report() -> CertificationReport {
        CertificationReport {
            verdict: Verdict::CertifiedAtLeast(3),
            tier: ConstraintTier::KcompatPpt,
            k: 2,
            t_queried: Some(0.9),
            t_c: None,
            solver_status: SolveStatus::PrimalInfeasible,
            raw_solver_status: "PrimalInfeasible".into(),
            max_constraint_violation: None,
            certificate: Some(CertificateQuality {
                ray_residual: 1e-11,
                ray_gap: 0.3,
                cone_violation: 0.0,
            }),
            iterations: 17,
            wall_time_s: 0.21,
            encoding: "reduced",
            seo_rank: None,
        }
    }

    #[test]
    fn report_round_trips_and_validates() {
        let file = ReportFile::new("certify", "mub d=2 n_m=3", "feasibility", &sample_report());
        let json = file.to_json();
        let back = ReportFile::from_json(&json).unwrap();
        assert_eq!(back.verdict, "CERTIFIED_AT_LEAST(3)");
        assert_eq!(back.certified_lower_bound, Some(3));
        assert_eq!(back.tier, "kcompat+ppt");
        assert_eq!(back.solver_status, "primal-infeasible");
        // Byte-reproducible modulo wall time: same inputs, same JSON.
        let again = ReportFile::new("certify", "mub d=2 n_m=3", "feasibility", &sample_report());
        assert_eq!(json, again.to_json());
    }

    #[test]
    fn validation_rejects_inconsistent_reports() {
        let mut file =
            ReportFile::new("certify", "mub d=2 n_m=3", "feasibility", &sample_report());
        file.schema_version = 99;
        assert!(matches!(file.validate(), Err(ReportError::Schema(_))));

        let mut file =
            ReportFile::new("certify", "mub d=2 n_m=3", "feasibility", &sample_report());
        file.certified_lower_bound = None;
        assert!(file.validate().is_err(), "verdict string still claims a bound");

        let mut file =
            ReportFile::new("certify", "mub d=2 n_m=3", "feasibility", &sample_report());
        file.certified_lower_bound = Some(5);
        assert!(file.validate().is_err(), "bound must be k + 1");

        let mut file =
            ReportFile::new("certify", "mub d=2 n_m=3", "feasibility", &sample_report());
        file.certificate = None;
        assert!(file.validate().is_err(), "certified verdicts carry certificate quality");
    }

    #[test]
    fn parser_rejects_unknown_and_missing_fields() {
        let file = ReportFile::new("certify", "s", "feasibility", &sample_report());
        let mut v: serde_json::Value = serde_json::from_str(&file.to_json()).unwrap();
        v["surprise"] = 1.into();
        assert!(ReportFile::from_json(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&file.to_json()).unwrap();
        v.as_object_mut().unwrap().remove("verdict");
        assert!(ReportFile::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn operator_data_round_trips() {
        let m = mub_assemblage(3, 2).unwrap();
        let data = OperatorData::from_operator(m.effect(1, 2));
        let back = data.to_operator().unwrap();
        assert!(crate::qops::hs_norm(&(back - m.effect(1, 2))) < 1e-15);

        let bad = OperatorData { rows: 2, cols: 2, entries: vec![[1.0, 0.0]; 3] };
        assert!(bad.to_operator().is_err());
        let nan = OperatorData { rows: 1, cols: 1, entries: vec![[f64::NAN, 0.0]] };
        assert!(nan.to_operator().is_err());
    }

    #[test]
    fn instance_file_round_trips() {
        let m = mub_assemblage(2, 3).unwrap();
        let file = InstanceFile {
            measurements: m
                .effects()
                .iter()
                .map(|povm| povm.iter().map(OperatorData::from_operator).collect())
                .collect(),
            state: Some(StateData {
                dim_a: 2,
                dim_b: 2,
                matrix: OperatorData::from_operator(&crate::scenarios::maximally_entangled(2)),
            }),
        };
        let parsed = InstanceFile::from_json(&file.to_json()).unwrap();
        let back = parsed.assemblage().unwrap();
        assert_eq!(back.n_settings(), 3);
        let (state, d_a, d_b) = parsed.state_operator().unwrap().unwrap();
        assert_eq!((d_a, d_b), (2, 2));
        assert_eq!(state.nrows(), 4);

        // Declared dims must match the matrix.
        let mut wrong = file.clone();
        wrong.state.as_mut().unwrap().dim_b = 3;
        assert!(wrong.state_operator().is_err());
    }
}
