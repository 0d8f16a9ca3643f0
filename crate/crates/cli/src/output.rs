use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::CliError;

/// Creates output files that all start with the same `#` metadata block.
pub struct ArtifactWriter {
    dir: PathBuf,
    header: Vec<String>,
    written: Vec<PathBuf>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path, config: &ExperimentConfig, experiment: &str) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        let header = vec![
            format!("experiment: {experiment}"),
            format!("config_sha256: {}", config.hash()),
            format!("seed: {}", config.seed()),
            format!("ridgeapprox: {}", ridgeapprox::VERSION),
            format!("ridgeapprox-cli: {}", env!("CARGO_PKG_VERSION")),
        ];
        Ok(Self {
            dir: dir.to_path_buf(),
            header,
            written: Vec::new(),
        })
    }

    /// Opens `name` for writing with the metadata lines already in place.
    pub fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        for line in &self.header {
            writeln!(w, "# {line}")?;
        }
        self.written.push(path);
        Ok(w)
    }

    /// The metadata block as a JSON object, for formats without comments.
    pub fn header_json(&self) -> serde_json::Value {
        let map = self
            .header
            .iter()
            .filter_map(|l| l.split_once(": "))
            .map(|(k, v)| (k.to_string(), serde_json::Value::String(v.to_string())))
            .collect();
        serde_json::Value::Object(map)
    }

    pub fn create_json(&mut self, name: &str, body: serde_json::Value) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let doc = serde_json::json!({ "meta": self.header_json(), "report": body });
        let mut w = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| CliError::Io(e.into()))?;
        writeln!(w)?;
        w.flush()?;
        self.written.push(path);
        Ok(())
    }

    pub fn into_written(self) -> Vec<PathBuf> {
        self.written
    }
}

/// Formats an optional value as a CSV cell (empty when absent).
pub fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
