//! Scenario-driven front end: reads a JSON scenario, runs one analysis, and
//! writes `<out>/<command>.json` and `<out>/<command>.csv`.

use std::fs;
use std::path::Path;

use serde::Serialize;

pub mod commands;
pub mod scenario;

pub use commands::Command;
pub use scenario::Scenario;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("unknown subcommand `{0}`")]
    UnknownCommand(String),
    #[error("{0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::UnknownCommand(_) => 1,
            CliError::Validation(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<weaktrans_core::Error> for CliError {
    fn from(e: weaktrans_core::Error) -> Self {
        use weaktrans_core::quadrature::QuadError;
        use weaktrans_core::Error as E;
        match e {
            E::InvalidParameter(_)
            | E::ParameterOutOfDomain { .. }
            | E::OutsideSupport { .. }
            | E::IndexOutOfRange { .. }
            | E::UnknownKernelParameter(_)
            | E::Unsupported(_)
            | E::DimensionMismatch { .. }
            | E::Quadrature(QuadError::InvalidConfig(_)) => CliError::Validation(e.to_string()),
            E::StepFailure(_)
            | E::Singular(_)
            | E::SvdFailure
            | E::NotOnStratum { .. }
            | E::DegenerateStratum { .. }
            | E::Quadrature(_) => CliError::Numerical(e.to_string()),
        }
    }
}

/// A CSV table; every cell already formatted.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Io(e.to_string());
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
    }
}

/// Shortest round-trip formatting, with exponents where they help.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        serde_json::to_string(&v).expect("finite float")
    }
}

pub struct Report {
    pub result: serde_json::Value,
    pub table: Table,
}

#[derive(Serialize)]
struct Envelope<'a> {
    command: &'a str,
    seed: Option<u64>,
    scenario: &'a Scenario,
    result: &'a serde_json::Value,
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    Scenario::from_json(&text)
}

/// Renders the JSON and CSV outputs without touching the filesystem.
pub fn render(command: Command, scenario: &Scenario, seed: Option<u64>) -> Result<(String, String), CliError> {
    let report = commands::execute(command, scenario)?;
    let env = Envelope {
        command: command.name(),
        seed,
        scenario,
        result: &report.result,
    };
    let mut json = serde_json::to_string_pretty(&env).map_err(|e| CliError::Io(e.to_string()))?;
    json.push('\n');
    Ok((json, report.table.to_csv()?))
}

/// Runs `command` on the scenario at `scenario_path`; output files are
/// written only after the whole analysis succeeded.
pub fn run(command: &str, scenario_path: &Path, out_dir: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let cmd = Command::parse(command)?;
    let scenario = load_scenario(scenario_path)?;
    let (json, csv) = render(cmd, &scenario, seed)?;
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", out_dir.display()));
    fs::create_dir_all(out_dir).map_err(io)?;
    fs::write(out_dir.join(format!("{}.json", cmd.name())), json).map_err(io)?;
    fs::write(out_dir.join(format!("{}.csv", cmd.name())), csv).map_err(io)?;
    Ok(())
}
