//! Instance selection shared by the subcommands: built-in scenarios and
//! user-supplied JSON files.

use std::path::PathBuf;

use clap::{Args, ValueEnum};

use steercert::qops::Operator;
use steercert::report::InstanceFile;
use steercert::scenarios::{hollow_triangle, mub_assemblage, MeasurementAssemblage};

/// Which measurement family to certify.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScenarioKind {
    /// The first `--n-m` mutually unbiased bases in prime dimension `--d`.
    Mub,
    /// Fixed qubit family: the three Pauli bases at visibility 0.7 —
    /// pairwise compatible yet jointly incompatible.
    HollowTriangle,
    /// User-supplied JSON (`--input`): measurement effects and optionally a
    /// bipartite state to steer with.
    File,
}

#[derive(Args, Debug)]
pub struct InstanceArgs {
    /// Measurement family to test.
    #[arg(long, value_enum)]
    pub scenario: ScenarioKind,
    /// Local dimension for `--scenario mub` (prime).
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    /// Number of bases for `--scenario mub` (at most d + 1).
    #[arg(long = "n-m", default_value_t = 3)]
    pub n_m: usize,
    /// Instance JSON for `--scenario file`.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

/// A resolved instance: the measurement family, the optional bipartite state
/// it acts on (with its factor dimensions), and a label for reports.
pub struct Loaded {
    pub assemblage: MeasurementAssemblage,
    pub state: Option<(Operator, usize, usize)>,
    pub label: String,
}

impl InstanceArgs {
    pub fn load(&self) -> Result<Loaded, String> {
        match self.scenario {
            ScenarioKind::Mub => {
                let assemblage = mub_assemblage(self.d, self.n_m).map_err(|e| e.to_string())?;
                Ok(Loaded {
                    assemblage,
                    state: None,
                    label: format!("mub d={} n_m={}", self.d, self.n_m),
                })
            }
            ScenarioKind::HollowTriangle => Ok(Loaded {
                assemblage: hollow_triangle(),
                state: None,
                label: "hollow-triangle".into(),
            }),
            ScenarioKind::File => {
                let path = self.input.as_ref().ok_or("--scenario file requires --input")?;
                let text = std::fs::read_to_string(path)
                    .map_err(|e| format!("{}: {e}", path.display()))?;
                let parsed = InstanceFile::from_json(&text).map_err(|e| e.to_string())?;
                let assemblage = parsed.assemblage().map_err(|e| e.to_string())?;
                let state = parsed.state_operator().map_err(|e| e.to_string())?;
                if let Some((_, d_a, _)) = &state {
                    if *d_a != assemblage.d() {
                        return Err(format!(
                            "state factor A has dimension {} but the measurements act on \
                             dimension {}",
                            d_a,
                            assemblage.d()
                        ));
                    }
                }
                Ok(Loaded {
                    assemblage,
                    state,
                    label: format!("file {}", path.display()),
                })
            }
        }
    }
}
