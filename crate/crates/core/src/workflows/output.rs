//! Run directories: CSV tables and a `summary.json`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use crate::Result;

#[derive(Debug)]
pub struct RunOutput {
    dir: PathBuf,
    started: Instant,
}

#[derive(Serialize)]
struct Summary<'a> {
    command: &'a str,
    version: &'a str,
    config: &'a Value,
    wall_clock_seconds: f64,
    diagnostics: &'a Value,
    results: &'a Value,
}

impl RunOutput {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), started: Instant::now() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write_csv<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, serde_json::to_string_pretty(value)?)?;
        Ok(path)
    }

    pub fn write_summary(&self, command: &str, version: &str, config: &Value, diagnostics: &Value, results: &Value) -> Result<PathBuf> {
        let s = Summary {
            command,
            version,
            config,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            diagnostics,
            results,
        };
        self.write_json("summary.json", &s)
    }
}
