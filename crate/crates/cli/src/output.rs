use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Version recorded in manifests. Builds may inject `git describe` output.
pub const VERSION: &str = match option_env!("GRAMLAB_GIT_DESCRIBE") {
    Some(v) => v,
    None => concat!("v", env!("CARGO_PKG_VERSION")),
};

/// Bumped whenever a CSV column is added, removed or renamed.
pub const CSV_SCHEMA_VERSION: u32 = 1;

/// Provenance sidecar written next to every run's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub csv_schema_version: u32,
    pub version: String,
    pub config: serde_json::Value,
    /// SHA-256 of the canonical (sorted-key, compact) JSON config.
    pub config_digest: String,
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub wall_time_s: f64,
}

pub fn config_digest(config: &serde_json::Value) -> String {
    // serde_json maps are ordered by key, so this string is canonical.
    let canonical = serde_json::to_string(config).expect("config serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Collects the files a command writes and emits the manifest at the end.
pub struct Run {
    dir: PathBuf,
    command: String,
    config: serde_json::Value,
    seed: Option<u64>,
    outputs: Vec<String>,
    started: f64,
    clock: Instant,
}

impl Run {
    pub fn new(dir: &Path, command: &str, config: &impl Serialize, seed: Option<u64>) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            seed,
            outputs: Vec::new(),
            started: unix_now(),
            clock: Instant::now(),
        })
    }

    fn write(&mut self, name: &str, body: &str) -> anyhow::Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(path.display().to_string());
        Ok(path)
    }

    pub fn csv(&mut self, name: &str, table: Table) -> anyhow::Result<PathBuf> {
        self.write(name, &table.render())
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> anyhow::Result<PathBuf> {
        let mut body = serde_json::to_string_pretty(value)?;
        body.push('\n');
        self.write(name, &body)
    }

    pub fn finish(self) -> anyhow::Result<PathBuf> {
        let manifest = RunManifest {
            config_digest: config_digest(&self.config),
            command: self.command.clone(),
            csv_schema_version: CSV_SCHEMA_VERSION,
            version: VERSION.to_string(),
            config: self.config,
            seed: self.seed,
            outputs: self.outputs,
            started_unix: self.started,
            finished_unix: unix_now(),
            wall_time_s: self.clock.elapsed().as_secs_f64(),
        };
        let path = self.dir.join(format!("{}.manifest.json", self.command));
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// A CSV table with a header row. Floats use the shortest representation
/// that round-trips, so equal values give equal bytes.
pub struct Table {
    writer: csv::Writer<Vec<u8>>,
}

pub enum Cell {
    F(f64),
    U(u64),
    B(bool),
    S(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}
impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::U(v as u64)
    }
}
impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::U(v)
    }
}
impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::B(v)
    }
}
impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => format!("{v:?}"),
            Cell::U(v) => v.to_string(),
            Cell::B(v) => v.to_string(),
            Cell::S(v) => v.clone(),
        }
    }
}

impl Table {
    pub fn new(header: &str) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header.split(',')).expect("write to memory");
        Self { writer }
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        self.writer
            .write_record(cells.iter().map(Cell::render))
            .expect("write to memory");
    }

    pub fn render(self) -> String {
        let bytes = self.writer.into_inner().expect("flush to memory");
        String::from_utf8(bytes).expect("utf-8 cells")
    }
}

#[macro_export]
macro_rules! row {
    ($($c:expr),* $(,)?) => {
        vec![$($crate::output::Cell::from($c)),*]
    };
}
