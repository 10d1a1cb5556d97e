use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sdsearch::estimation::{DgpConfig, EstimationConfig, Params, Scenario};
use sdsearch::learning::BeliefState;
use sdsearch::{Distribution, SearchEnvironment, SearchMode};

use crate::error::CliError;

/// Everything a run needs. Sections a command does not use are ignored but
/// still recorded in the provenance header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional guard: when present it must name the subcommand being run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub environment: Option<SearchEnvironment>,
    #[serde(default)]
    pub x: Option<Distribution>,
    #[serde(default)]
    pub y: Option<Distribution>,
    #[serde(default)]
    pub simulate: SimulateOptions,
    #[serde(default)]
    pub payoff: PayoffOptions,
    #[serde(default)]
    pub demand: DemandOptions,
    #[serde(default)]
    pub bounds: Option<BoundsOptions>,
    #[serde(default)]
    pub oracle: OracleOptions,
    #[serde(default)]
    pub panel: PanelOptions,
    #[serde(default)]
    pub estimation: EstimationConfig,
    #[serde(default)]
    pub counterfactual: CounterfactualOptions,
    #[serde(default)]
    pub tables: TablesOptions,
}

fn default_seed() -> u64 {
    1
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            command: None,
            seed: default_seed(),
            environment: None,
            x: None,
            y: None,
            simulate: SimulateOptions::default(),
            payoff: PayoffOptions::default(),
            demand: DemandOptions::default(),
            bounds: None,
            oracle: OracleOptions::default(),
            panel: PanelOptions::default(),
            estimation: EstimationConfig::default(),
            counterfactual: CounterfactualOptions::default(),
            tables: TablesOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateOptions {
    pub consumers: usize,
    /// Modes to simulate; empty means the environment's own mode.
    pub modes: Vec<SearchMode>,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        SimulateOptions {
            consumers: 10_000,
            modes: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PayoffOptions {
    pub paths: usize,
    /// Cost reduction for the discovery-versus-inspection threshold; skipped when absent.
    pub delta: Option<f64>,
    pub n_max: usize,
}

impl Default for PayoffOptions {
    fn default() -> Self {
        PayoffOptions {
            paths: 100_000,
            delta: None,
            n_max: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemandOptions {
    pub modes: Vec<SearchMode>,
    pub h_max: usize,
    pub paths: usize,
    pub force_mc: bool,
}

impl Default for DemandOptions {
    fn default() -> Self {
        DemandOptions {
            modes: vec![SearchMode::Sd, SearchMode::Rs],
            h_max: 20,
            paths: 100_000,
            force_mc: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsOptions {
    pub belief: BeliefState,
    /// Best available utility; when set the report includes the stop/continue decision.
    #[serde(default)]
    pub best_u: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleOptions {
    /// Corpus file (JSON list of instances with stored dp values); the bundled corpus when absent.
    pub corpus: Option<PathBuf>,
    /// Generate this many fresh instances instead of reading a corpus.
    pub generate: Option<usize>,
    pub tol: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            corpus: None,
            generate: None,
            tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PanelOptions {
    /// Panel CSV to read; simulated from `dgp` when absent.
    pub path: Option<PathBuf>,
    pub consumers: usize,
    pub dgp: DgpConfig,
}

impl Default for PanelOptions {
    fn default() -> Self {
        PanelOptions {
            path: None,
            consumers: 500,
            dgp: DgpConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CounterfactualOptions {
    pub model: SearchMode,
    /// Parameters to simulate at. When absent the SD model uses the generating
    /// parameters and every other model is fitted first.
    pub params: Option<Params>,
    /// Simulated search paths per consumer.
    pub paths: usize,
    pub scenarios: Vec<Scenario>,
}

impl Default for CounterfactualOptions {
    fn default() -> Self {
        CounterfactualOptions {
            model: SearchMode::Sd,
            params: None,
            paths: 5000,
            scenarios: vec![Scenario::RemoveCosts, Scenario::price_cut_fifth()],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TablesOptions {
    pub models: Vec<SearchMode>,
    pub paths: usize,
}

impl Default for TablesOptions {
    fn default() -> Self {
        TablesOptions {
            models: vec![SearchMode::Sd, SearchMode::Ds1, SearchMode::Ds2, SearchMode::Rs, SearchMode::Fi],
            paths: 5000,
        }
    }
}

impl ExperimentConfig {
    /// Reads JSON or TOML, chosen by file extension (`.toml`, anything else is JSON).
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        if is_toml {
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        } else {
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        }
    }

    pub fn environment(&self) -> Result<&SearchEnvironment, CliError> {
        self.environment
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [environment] section".into()))
    }

    pub fn x(&self) -> Result<&Distribution, CliError> {
        self.x.as_ref().ok_or_else(|| CliError::Config("missing x distribution".into()))
    }

    pub fn y(&self) -> Result<&Distribution, CliError> {
        self.y.as_ref().ok_or_else(|| CliError::Config("missing y distribution".into()))
    }
}
