//! Report artifacts: pretty JSON on stdout and in `--out`, CSV twins on request.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use osst::model::threshold_serde;
use serde::{Serialize, Serializer};

use crate::UsageError;

pub struct Output {
    dir: Option<PathBuf>,
    csv: bool,
}

/// Deterministic pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Finite numbers as JSON numbers, infinities as `"inf"`/`"-inf"`.
pub fn opt_threshold<S: Serializer>(value: &Option<f64>, serializer: S) -> Result<S::Ok, S::Error> {
    match value {
        Some(v) => threshold_serde::serialize(v, serializer),
        None => serializer.serialize_none(),
    }
}

/// Shortest round-trip form, `inf`/`-inf` for infinities.
pub fn fmt_f64(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        v.to_string()
    }
}

impl Output {
    pub fn new(dir: Option<PathBuf>, csv: bool) -> anyhow::Result<Self> {
        if csv && dir.is_none() {
            return Err(UsageError("--emit-csv requires --out".into()).into());
        }
        if let Some(dir) = &dir {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        Ok(Output { dir, csv })
    }

    fn path(&self, name: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(name))
    }

    fn write(path: &Path, content: &str) -> anyhow::Result<()> {
        fs::write(path, content).with_context(|| format!("writing {}", path.display()))
    }

    /// Prints the primary report and stores it as `name` under `--out`.
    pub fn report<T: Serialize>(&self, name: &str, value: &T) -> anyhow::Result<()> {
        let json = to_json(value)?;
        print!("{json}");
        self.json(name, value)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> anyhow::Result<()> {
        if let Some(path) = self.path(name) {
            Self::write(&path, &to_json(value)?)?;
        }
        Ok(())
    }

    pub fn jsonl<T: Serialize>(&self, name: &str, rows: &[T]) -> anyhow::Result<()> {
        if let Some(path) = self.path(name) {
            let mut out = String::new();
            for row in rows {
                out.push_str(&serde_json::to_string(row)?);
                out.push('\n');
            }
            Self::write(&path, &out)?;
        }
        Ok(())
    }

    pub fn csv(&self, name: &str, header: &[String], rows: &[Vec<String>]) -> anyhow::Result<()> {
        if !self.csv {
            return Ok(());
        }
        let Some(path) = self.path(name) else { return Ok(()) };
        let mut writer = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        writer.write_record(header)?;
        for row in rows {
            writer.write_record(row)?;
        }
        writer.flush()?;
        Ok(())
    }
}
