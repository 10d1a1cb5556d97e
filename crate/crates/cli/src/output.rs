use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::error::CliError;

/// Version of the CSV layouts. Bump when a column changes.
pub const CSV_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

pub struct Table {
    pub name: &'static str,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &'static str, columns: &[&'static str]) -> Self {
        Table {
            name,
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

pub fn num(v: f64) -> String {
    v.to_string()
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Result of one command. `violation` is set when the output is complete but
/// the run must still fail (oracle mismatches).
pub struct Artifact {
    pub result: Value,
    pub tables: Vec<Table>,
    pub violation: Option<String>,
}

impl Artifact {
    pub fn new<T: Serialize>(result: &T, tables: Vec<Table>) -> Result<Self, CliError> {
        Ok(Artifact {
            result: serde_json::to_value(result).map_err(|e| CliError::Io(e.to_string()))?,
            tables,
            violation: None,
        })
    }
}

#[derive(Serialize)]
struct Provenance<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config: &'a ExperimentConfig,
}

fn provenance<'a>(command: &'a str, cfg: &'a ExperimentConfig) -> Provenance<'a> {
    Provenance {
        tool: "sdsearch",
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: cfg.seed,
        config: cfg,
    }
}

fn render_json(command: &str, cfg: &ExperimentConfig, a: &Artifact) -> Result<String, CliError> {
    #[derive(Serialize)]
    struct Doc<'a> {
        provenance: Provenance<'a>,
        result: &'a Value,
    }
    let doc = Doc {
        provenance: provenance(command, cfg),
        result: &a.result,
    };
    let mut s = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn render_table(command: &str, cfg: &ExperimentConfig, t: &Table) -> Result<String, CliError> {
    let header = serde_json::to_string(&provenance(command, cfg)).map_err(|e| CliError::Io(e.to_string()))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&t.columns)?;
    for r in &t.rows {
        w.write_record(r)?;
    }
    let body = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    let body = String::from_utf8(body).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(format!("# sdsearch {command}/{} csv-v{CSV_VERSION}\n# provenance {header}\n{body}", t.name))
}

/// Renders everything first, then writes, so a failure leaves no partial files.
pub fn emit(
    command: &str,
    cfg: &ExperimentConfig,
    a: &Artifact,
    format: Format,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let files: Vec<(String, String)> = match format {
        Format::Json => vec![(format!("{command}.json"), render_json(command, cfg, a)?)],
        Format::Csv => a
            .tables
            .iter()
            .map(|t| Ok((format!("{command}-{}.csv", t.name), render_table(command, cfg, t)?)))
            .collect::<Result<_, CliError>>()?,
    };
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            for (name, text) in files {
                std::fs::write(dir.join(name), text)?;
            }
        }
        None => {
            let joined: Vec<String> = files.into_iter().map(|f| f.1).collect();
            print!("{}", joined.join("\n"));
        }
    }
    Ok(())
}
