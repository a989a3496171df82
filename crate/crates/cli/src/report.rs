//! Output files. Data files are deterministic; run-specific details such as
//! the timestamp and thread count go to `metadata.json` only.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, Result};

pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
        Ok(OutputDir { root })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn csv(&self, name: &str, header: &[&str]) -> Result<CsvFile> {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut writer = csv::Writer::from_writer(BufWriter::new(file));
        writer.write_record(header).map_err(|source| CliError::Csv { path: path.clone(), source })?;
        Ok(CsvFile { path, writer })
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).expect("output types serialize");
        text.push('\n');
        self.text(name, &text)
    }

    pub fn text(&self, name: &str, text: &str) -> Result<()> {
        let path = self.path(name);
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }

    pub fn lines<I: IntoIterator<Item = String>>(&self, name: &str, lines: I) -> Result<()> {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut w = BufWriter::new(file);
        for line in lines {
            writeln!(w, "{line}").map_err(|e| CliError::io(&path, e))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))
    }

    /// Writes `metadata.json` with the command, versions and run details.
    pub fn metadata(&self, command: &str, details: Value) -> Result<()> {
        let mut meta = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "core_version": cmjvax::VERSION,
            "created": chrono::Utc::now().to_rfc3339(),
        });
        if let (Value::Object(meta), Value::Object(details)) = (&mut meta, details) {
            meta.extend(details);
        }
        self.json("metadata.json", &meta)
    }
}

pub struct CsvFile {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvFile {
    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).map_err(|source| CliError::Csv { path: self.path.clone(), source })
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

/// Shortest round-trip decimal; `inf` for unresolved values.
pub fn num(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x}")
    }
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}
