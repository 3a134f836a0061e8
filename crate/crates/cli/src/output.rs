//! CSV and JSON writers. CSV bodies carry no timestamps, so two runs of the
//! same command produce identical files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use gnep_core::{GnePair, LqGame};
use serde_json::{json, Value};

use crate::error::CliError;

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        ryu::Buffer::new().format_finite(v).to_owned()
    } else if v.is_nan() {
        "NaN".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// In-memory CSV table.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
        String::from_utf8(bytes).map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Columns `k, x[i], u[v][i], lambda[v][i]` with agents numbered from 1; the
/// input cells of the final row are empty.
pub fn trajectory_table(game: &LqGame, pair: &GnePair) -> Table {
    let n = game.n_x();
    let mut header = vec!["k".to_string()];
    header.extend((0..n).map(|i| format!("x[{i}]")));
    for v in 0..game.agents() {
        header.extend((0..game.n_u(v)).map(|i| format!("u[{}][{i}]", v + 1)));
    }
    for v in 0..game.agents() {
        header.extend((0..n).map(|i| format!("lambda[{}][{i}]", v + 1)));
    }
    let mut table = Table::new(header);
    let horizon = pair.traj.horizon();
    for k in 0..=horizon {
        let mut row = vec![k.to_string()];
        row.extend(pair.traj.x[k].iter().map(|&x| fmt_f64(x)));
        if k < horizon {
            row.extend(pair.traj.u[k].iter().map(|&u| fmt_f64(u)));
        } else {
            row.extend(std::iter::repeat_n(String::new(), game.total_inputs()));
        }
        for d in &pair.duals {
            row.extend(d.lambda[k].iter().map(|&l| fmt_f64(l)));
        }
        table.push(row);
    }
    table
}

pub fn vec_json(v: &gnep_core::Vector) -> Value {
    json!(v.iter().copied().collect::<Vec<f64>>())
}

/// JSON number or string for non-finite values.
pub fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(fmt_f64(v))
    }
}

pub fn unix_time() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Output directory; files are written only when one is configured.
pub struct Sink {
    dir: Option<PathBuf>,
}

impl Sink {
    pub fn new(dir: Option<&Path>) -> Result<Self, CliError> {
        if let Some(d) = dir {
            fs::create_dir_all(d)?;
        }
        Ok(Self {
            dir: dir.map(Path::to_path_buf),
        })
    }

    pub fn csv(&self, name: &str, table: &Table) -> Result<(), CliError> {
        if let Some(d) = &self.dir {
            fs::write(d.join(format!("{name}.csv")), table.to_csv()?)?;
        }
        Ok(())
    }

    /// Writes `<name>.json` and prints it to stdout.
    pub fn summary(&self, name: &str, value: &Value) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(d) = &self.dir {
            fs::write(d.join(format!("{name}.json")), format!("{text}\n"))?;
        }
        let mut out = std::io::stdout().lock();
        match writeln!(out, "{text}").and_then(|_| out.flush()) {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
            _ => Ok(()),
        }
    }
}
