//! Flat `key = value` configuration files and run manifests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::CliError;

/// Keys written by the manifest writer that the loader accepts and ignores.
const META_KEYS: [&str; 2] = ["command", "version"];
const DIGEST_PREFIX: &str = "digest.";

/// Resolved settings of one command: defaults, then the config file, then flags.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("config line {}: expected `key = value`, got {raw:?}", line_no + 1))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(CliError::Usage(format!("config line {}: empty key", line_no + 1)));
            }
            values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn set_default(&mut self, key: &str, value: impl ToString) {
        self.values.entry(key.to_string()).or_insert_with(|| value.to_string());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Parses a required key.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self
            .raw(key)
            .ok_or_else(|| CliError::Usage(format!("missing setting `{key}`")))?;
        raw.parse()
            .map_err(|e| CliError::Usage(format!("setting `{key} = {raw}`: {e}")))
    }

    /// Rejects keys the command does not understand.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<(), CliError> {
        for key in self.values.keys() {
            let known = allowed.contains(&key.as_str())
                || META_KEYS.contains(&key.as_str())
                || key.starts_with(DIGEST_PREFIX);
            if !known {
                return Err(CliError::Usage(format!("unknown setting `{key}`")));
            }
        }
        Ok(())
    }

    /// Settings without manifest bookkeeping keys.
    pub fn settings(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values
            .iter()
            .filter(|(k, _)| !META_KEYS.contains(&k.as_str()) && !k.starts_with(DIGEST_PREFIX))
            .map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

/// Everything needed to reproduce a command's outputs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: Config,
    /// `(label, sha256 hex)` of every input file.
    pub digests: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(command: &str, config: &Config) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            digests: Vec::new(),
        }
    }

    pub fn add_digest(&mut self, label: &str, bytes: &[u8]) {
        self.digests.push((label.to_string(), hex::encode(Sha256::digest(bytes))));
    }

    /// Manifest text; it parses back as a config for the same command.
    pub fn render(&self) -> String {
        let mut out = String::from("# lassomix run manifest\n");
        let _ = writeln!(out, "command = {}", self.command);
        let _ = writeln!(out, "version = {}", self.version);
        for (key, value) in self.config.settings() {
            let _ = writeln!(out, "{key} = {value}");
        }
        for (label, digest) in &self.digests {
            let _ = writeln!(out, "{DIGEST_PREFIX}{label} = {digest}");
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        crate::csvio::write_text(&dir.join("manifest.txt"), &self.render())
    }
}
