//! Experiment reports and their serialisations.
//!
//! CSV and plot-data floats are written with 17 significant digits
//! (`{:.16e}`); JSON floats use the shortest representation that reads back
//! to the same `f64`. All three are pure functions of the report.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    /// Non-finite values become text so that JSON stays lossless.
    pub fn float(x: f64) -> Cell {
        if x.is_finite() {
            Cell::Float(x)
        } else {
            Cell::Text(x.to_string())
        }
    }

    pub fn int(x: impl TryInto<i64>) -> Cell {
        Cell::Int(x.try_into().unwrap_or(i64::MAX))
    }

    pub fn text(s: impl Into<String>) -> Cell {
        Cell::Text(s.into())
    }

    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => format!("{x:.16e}"),
            Cell::Text(s) => s.clone(),
        }
    }
}

/// How `measured` is compared with `oracle`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `|measured − oracle| ≤ tolerance`
    Within,
    /// `measured ≤ oracle + tolerance`
    AtMost,
    /// `measured ≥ oracle − tolerance`
    AtLeast,
}

impl Relation {
    pub fn holds(self, measured: f64, oracle: f64, tolerance: f64) -> bool {
        if !(measured.is_finite() && oracle.is_finite()) {
            return false;
        }
        match self {
            Relation::Within => (measured - oracle).abs() <= tolerance,
            Relation::AtMost => measured <= oracle + tolerance,
            Relation::AtLeast => measured >= oracle - tolerance,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Relation::Within => "≈",
            Relation::AtMost => "≤",
            Relation::AtLeast => "≥",
        }
    }
}

/// One pass/fail verdict with everything needed to audit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub relation: Relation,
    pub oracle: f64,
    pub measured: f64,
    pub tolerance: f64,
    /// Independent replicas behind `measured` (0 for deterministic checks).
    pub seeds: u64,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, relation: Relation, oracle: f64, measured: f64, tolerance: f64, seeds: u64) -> Self {
        Check {
            name: name.into(),
            relation,
            oracle,
            measured,
            tolerance,
            seeds,
            passed: relation.holds(measured, oracle, tolerance),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: measured {:.6} {} oracle {:.6} (tol {:.3e}, {} seeds)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.relation.symbol(),
            self.oracle,
            self.tolerance,
            self.seeds
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub base_seed: u64,
    pub reps: usize,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Plotdata,
}

impl Report {
    pub fn new(experiment: &str, base_seed: u64, reps: usize, columns: &[&str]) -> Self {
        Report {
            experiment: experiment.to_string(),
            base_seed,
            reps,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            checks: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn check(&mut self, check: Check) {
        log::debug!("{check}");
        self.checks.push(check);
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    /// Rows only, header first.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }

    /// The whole report, pretty-printed, with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Report, HarnessError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Whitespace-separated table for gnuplot; text cells are double-quoted.
    pub fn to_plotdata(&self) -> String {
        let mut out = format!(
            "# experiment {} base_seed {} reps {}\n# {}\n",
            self.experiment,
            self.base_seed,
            self.reps,
            self.columns.join(" ")
        );
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Text(s) => format!("\"{}\"", s.replace('"', "'")),
                    other => other.render(),
                })
                .collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
            Format::Plotdata => self.to_plotdata(),
        }
    }
}

/// Writes `report` to `path` in `format`.
pub fn emit(report: &Report, path: &Path, format: Format) -> Result<(), HarnessError> {
    let io = |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = std::fs::File::create(path).map_err(io)?;
    file.write_all(report.render(format).as_bytes()).map_err(io)?;
    file.sync_all().map_err(io)
}
