//! Output directory, CSV/JSON writers and the run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use scm_core::scanfield::Field2D;
use scm_core::Series;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Config, FORMAT_VERSION};
use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub format_version: u32,
    pub subcommand: &'a str,
    pub seed: u64,
    /// Input path as given, with the SHA-256 of its contents.
    pub inputs: &'a BTreeMap<String, String>,
    pub config: &'a Config,
    pub outputs: &'a BTreeMap<String, String>,
}

/// Collects every file written by a subcommand so the manifest can list
/// their hashes. Files are written in full before they are hashed.
pub struct OutputDir {
    root: PathBuf,
    outputs: BTreeMap<String, String>,
    inputs: BTreeMap<String, String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root)
            .map_err(|e| CliError::input(format!("cannot create output directory {}: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            outputs: BTreeMap::new(),
            inputs: BTreeMap::new(),
        })
    }

    /// Reads an input file, recording its hash.
    pub fn read_input(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        self.inputs
            .insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    pub fn load_series(&mut self, path: &Path) -> Result<Series, CliError> {
        let bytes = self.read_input(path)?;
        Series::read_csv(bytes.as_slice()).map_err(|e| CliError::core_at(path, e))
    }

    pub fn load_field(&mut self, path: &Path) -> Result<Field2D, CliError> {
        let bytes = self.read_input(path)?;
        Field2D::read_csv(bytes.as_slice()).map_err(|e| CliError::core_at(path, e))
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn series(&mut self, name: &str, s: &Series) -> Result<(), CliError> {
        let mut buf = Vec::new();
        s.write_csv(&mut buf)?;
        self.write(name, &buf)
    }

    pub fn field(&mut self, name: &str, f: &Field2D) -> Result<(), CliError> {
        let mut buf = Vec::new();
        f.write_csv(&mut buf)?;
        self.write(name, &buf)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(scm_core::Error::from)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn table(&mut self, name: &str, table: &Table) -> Result<(), CliError> {
        self.write(name, table.text.as_bytes())
    }

    pub fn finish(mut self, subcommand: &str, seed: u64, config: &Config) -> Result<(), CliError> {
        let outputs = std::mem::take(&mut self.outputs);
        let inputs = std::mem::take(&mut self.inputs);
        let manifest = Manifest {
            tool: "scm",
            version: env!("CARGO_PKG_VERSION"),
            format_version: FORMAT_VERSION,
            subcommand,
            seed,
            inputs: &inputs,
            config,
            outputs: &outputs,
        };
        self.json("manifest.json", &manifest)
    }
}

/// A numeric CSV table with a header row and LF line endings.
pub struct Table {
    text: String,
    columns: usize,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let names: Vec<&str> = header.iter().map(AsRef::as_ref).collect();
        Self {
            text: format!("{}\n", names.join(",")),
            columns: names.len(),
        }
    }

    pub fn row(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.columns);
        for (i, v) in values.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            write!(self.text, "{v}").expect("writing to a String cannot fail");
        }
        self.text.push('\n');
    }
}
