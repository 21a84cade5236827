use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

/// Formats a float with full precision in scientific notation.
pub fn sci(x: f64) -> String {
    format!("{x:.17e}")
}

/// CSV with `#`-prefixed metadata lines, a header row and full-precision rows.
pub struct CsvTable {
    pub metadata: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { metadata: Vec::new(), header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.push((key.to_string(), value.to_string()));
        self
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k}: {v}");
        }
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|x| sci(*x)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Collects the files and fitted constants of one run and writes them under the output directory.
pub struct RunOutput {
    pub dir: PathBuf,
    pub files: Vec<String>,
    pub constants: Map<String, Value>,
    pub reports: Map<String, Value>,
}

impl RunOutput {
    pub fn new(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new(), constants: Map::new(), reports: Map::new() })
    }

    pub fn csv(&mut self, name: &str, table: &CsvTable) -> io::Result<()> {
        fs::write(self.dir.join(name), table.render())?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> io::Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
        fs::write(self.dir.join(name), text + "\n")?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn constant(&mut self, name: &str, value: impl Serialize) {
        self.constants.insert(name.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    pub fn report(&mut self, name: &str, value: impl Serialize) {
        self.reports.insert(name.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    /// Writes manifest.json with the config hash, versions, outputs and fitted constants.
    pub fn manifest(mut self, subcommand: &str, config_text: &str, config: &impl Serialize) -> io::Result<()> {
        let hash = Sha256::digest(config_text.as_bytes());
        let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();
        let mut root = Map::new();
        root.insert("tool".into(), Value::from("isodiff"));
        root.insert("version".into(), Value::from(env!("CARGO_PKG_VERSION")));
        root.insert("subcommand".into(), Value::from(subcommand));
        root.insert("config_sha256".into(), Value::from(hex));
        root.insert("config".into(), serde_json::to_value(config).unwrap_or(Value::Null));
        root.insert("outputs".into(), Value::from(std::mem::take(&mut self.files)));
        root.insert("constants".into(), Value::Object(std::mem::take(&mut self.constants)));
        root.insert("reports".into(), Value::Object(std::mem::take(&mut self.reports)));
        let text = serde_json::to_string_pretty(&Value::Object(root)).map_err(io::Error::other)?;
        fs::write(self.dir.join("manifest.json"), text + "\n")
    }
}
