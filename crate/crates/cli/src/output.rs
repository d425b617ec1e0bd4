//! Artifact files: delimited tables, snapshot records and reports.

use glauber_core::dynamics::{EventCounts, TrajectorySample};
use glauber_core::{FiniteConfiguration, ModelParams, SpacePoint};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use toml::{Table, Value};

use crate::Failure;

/// The only place that touches the output directory.
pub struct Writer {
    dir: PathBuf,
    written: Vec<String>,
}

impl Writer {
    pub fn new(dir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| Failure::Config(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), Failure> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}

/// `(extension, delimiter)` for a table.
pub fn table_name(stem: &str, delimiter: char) -> String {
    let ext = match delimiter {
        '\t' => "tsv",
        ',' => "csv",
        _ => "dat",
    };
    format!("{stem}.{ext}")
}

/// A delimited table with a header row. Numbers use the shortest
/// representation that reads back to the same `f64`.
pub struct DelimitedTable {
    delimiter: char,
    text: String,
}

impl DelimitedTable {
    pub fn new(delimiter: char, header: &[&str]) -> Self {
        let mut t = Self {
            delimiter,
            text: String::new(),
        };
        t.row(header.iter().map(|h| h.to_string()));
        t
    }

    pub fn row(&mut self, cells: impl IntoIterator<Item = String>) {
        let mut first = true;
        for c in cells {
            if !first {
                self.text.push(self.delimiter);
            }
            first = false;
            self.text.push_str(&c);
        }
        self.text.push('\n');
    }

    pub fn finish(self) -> String {
        self.text
    }
}

/// Structured report: a TOML document with a fixed top-level layout.
pub struct Report {
    table: Table,
}

impl Report {
    pub fn new(command: &str, seed: u64) -> Self {
        let mut table = Table::new();
        table.insert("command".into(), Value::String(command.into()));
        table.insert("seed".into(), Value::Integer(seed as i64));
        Self { table }
    }

    /// Sets `section.key`, creating the section on first use.
    pub fn set(&mut self, section: &str, key: &str, value: impl Into<Value>) {
        let entry = self
            .table
            .entry(section.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        if let Value::Table(t) = entry {
            t.insert(key.to_string(), value.into());
        }
    }

    pub fn status(&mut self, pass: bool) {
        self.table
            .insert("status".into(), Value::String(if pass { "pass" } else { "fail" }.into()));
    }

    pub fn finish(mut self, resolved_config: &str) -> String {
        let cfg: Table = toml::from_str(resolved_config).expect("resolved configuration parses");
        self.table.insert("config".into(), Value::Table(cfg));
        toml::to_string(&self.table).expect("report serializes")
    }
}

pub fn floats(values: &[f64]) -> Value {
    Value::Array(values.iter().map(|&v| Value::Float(v)).collect())
}

pub fn counts_value(c: &EventCounts) -> Value {
    let mut t = Table::new();
    t.insert("births".into(), Value::Integer(c.births as i64));
    t.insert("deaths".into(), Value::Integer(c.deaths as i64));
    t.insert("rejected".into(), Value::Integer(c.rejected as i64));
    Value::Table(t)
}

/// One line per snapshot: time, point count, then the coordinates of every
/// point in order, separated by single spaces.
pub fn snapshot_records(sample: &TrajectorySample) -> String {
    let dim = sample.model.geometry.dimension();
    let mut out = format!("# time count coordinates (dimension {dim})\n");
    for (t, gamma) in &sample.snapshots {
        let _ = write!(out, "{t} {}", gamma.len());
        for p in gamma.iter() {
            for a in 0..dim {
                let _ = write!(out, " {}", p.coord(a));
            }
        }
        out.push('\n');
    }
    out
}

/// Reads [`snapshot_records`] back. Event counts are not stored and come
/// back as zero.
pub fn read_snapshots(path: &str, model: &ModelParams) -> Result<TrajectorySample, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {path}: {e}")))?;
    let dim = model.geometry.dimension();
    let mut snapshots = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: &str| Failure::Config(format!("{path}:{}: {msg}", i + 1));
        let nums: Vec<f64> = line
            .split_whitespace()
            .map(|w| w.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad("non-numeric field"))?;
        if nums.len() < 2 || nums[1].fract() != 0.0 || nums[1] < 0.0 {
            return Err(bad("expected time and point count"));
        }
        let n = nums[1] as usize;
        if nums.len() != 2 + n * dim {
            return Err(bad(&format!("expected {n} points of dimension {dim}")));
        }
        let points: Vec<SpacePoint> = nums[2..].chunks(dim).map(SpacePoint::new).collect();
        if !points.iter().all(|p| model.geometry.contains(p)) {
            return Err(bad("point outside the box"));
        }
        let cfg = FiniteConfiguration::new(points).map_err(|e| bad(&e.to_string()))?;
        snapshots.push((nums[0], cfg));
    }
    let interval = match snapshots.as_slice() {
        [a, b, ..] => b.0 - a.0,
        _ => 0.0,
    };
    Ok(TrajectorySample {
        model: model.clone(),
        snapshot_interval: interval,
        snapshots,
        counts: EventCounts::default(),
    })
}

pub fn snapshot_file(replica: usize) -> String {
    format!("snapshots_{replica:03}.txt")
}
