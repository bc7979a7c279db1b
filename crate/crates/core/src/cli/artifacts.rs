//! Artifact assembly and persistence. Files are staged in memory and
//! written together once a command has produced all of them.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::OutputFormat;
use crate::error::{Error, Result};

pub const TOOL_NAME: &str = "biasengine";

/// Provenance carried by every artifact. Equal headers imply equal bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Header {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
}

impl Header {
    pub fn new(seed: u64, config_hash: String) -> Self {
        Header {
            tool: TOOL_NAME.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_hash,
        }
    }

    fn line(&self) -> String {
        format!(
            "tool={} version={} seed={} config_hash={}",
            self.tool, self.version, self.seed, self.config_hash
        )
    }
}

/// Refuses a non-empty output directory unless `force` is set.
pub fn check_output_dir(dir: &Path, force: bool) -> Result<()> {
    if !dir.exists() {
        return Ok(());
    }
    if !dir.is_dir() {
        return Err(Error::config(format!("{} exists and is not a directory", dir.display())));
    }
    let occupied = std::fs::read_dir(dir)
        .map_err(|e| Error::config(format!("cannot read {}: {e}", dir.display())))?
        .next()
        .is_some();
    if occupied && !force {
        return Err(Error::config(format!(
            "output directory {} is not empty; pass --force to overwrite",
            dir.display()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Format(OutputFormat),
    /// Human-readable text, written whatever the format filter.
    Text,
}

#[derive(Debug)]
pub struct ArtifactSet {
    header: Header,
    filter: Option<OutputFormat>,
    files: Vec<(String, Kind, String)>,
}

impl ArtifactSet {
    pub fn new(header: Header, filter: Option<OutputFormat>) -> Self {
        ArtifactSet { header, filter, files: Vec::new() }
    }

    pub fn header(&self) -> &Header {
        &self.header
    }

    fn wants(&self, format: OutputFormat) -> bool {
        self.filter.is_none_or(|f| f == format)
    }

    /// `{"header": ..., key: payload}` pretty-printed, full float precision.
    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, key: &str, payload: &T) -> Result<()> {
        if !self.wants(OutputFormat::Json) {
            return Ok(());
        }
        let mut doc = serde_json::Map::new();
        doc.insert("header".into(), to_value(&self.header)?);
        doc.insert(key.into(), to_value(payload)?);
        let mut text = serde_json::to_string_pretty(&doc).map_err(|e| Error::invalid(e.to_string()))?;
        text.push('\n');
        self.push(name, Kind::Format(OutputFormat::Json), text);
        Ok(())
    }

    /// CSV body preceded by a `#` header line.
    pub fn csv(&mut self, name: &str, body: &str) {
        if self.wants(OutputFormat::Csv) {
            let text = format!("# {}\n{body}", self.header.line());
            self.push(name, Kind::Format(OutputFormat::Csv), text);
        }
    }

    /// DOT body preceded by a `//` header line.
    pub fn dot(&mut self, name: &str, body: &str) {
        if self.wants(OutputFormat::Dot) {
            let text = format!("// {}\n{body}", self.header.line());
            self.push(name, Kind::Format(OutputFormat::Dot), text);
        }
    }

    pub fn text(&mut self, name: &str, body: &str) {
        self.push(name, Kind::Text, body.to_string());
    }

    fn push(&mut self, name: &str, kind: Kind, text: String) {
        self.files.push((name.to_string(), kind, text));
    }

    pub fn names(&self) -> Vec<&str> {
        self.files.iter().map(|(n, _, _)| n.as_str()).collect()
    }

    /// Writes every staged file. Fails when a format filter left nothing
    /// but text behind, since that filter cannot apply to this command.
    pub fn write(self, dir: &Path) -> Result<Vec<PathBuf>> {
        if let Some(f) = self.filter {
            if !self.files.iter().any(|(_, k, _)| *k == Kind::Format(f)) {
                return Err(Error::config(format!("this command writes no {} artifacts", f.extension())));
            }
        }
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display(), e))?;
        let mut written = Vec::new();
        for (name, _, text) in self.files {
            let path = dir.join(&name);
            std::fs::write(&path, text).map_err(|e| Error::io(path.display(), e))?;
            written.push(path);
        }
        Ok(written)
    }
}

fn to_value<T: Serialize + ?Sized>(v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| Error::invalid(e.to_string()))
}

/// File-name-safe form of a prompt.
pub fn slug(text: &str) -> String {
    let mut out = String::new();
    for c in text.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    out.trim_matches('-').to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs_are_file_safe() {
        assert_eq!(slug("A photo of a Chef!"), "a-photo-of-a-chef");
        assert_eq!(slug("computer programmer"), "computer-programmer");
    }

    #[test]
    fn format_filter_drops_other_formats() {
        let mut a = ArtifactSet::new(Header::new(1, "h".into()), Some(OutputFormat::Dot));
        a.csv("x.csv", "a\n");
        a.dot("x.dot", "digraph {}\n");
        a.text("x.txt", "t");
        assert_eq!(a.names(), vec!["x.dot", "x.txt"]);
    }

    #[test]
    fn csv_and_dot_carry_header_lines() {
        let mut a = ArtifactSet::new(Header::new(7, "abc".into()), None);
        a.csv("x.csv", "a,b\n");
        let dir = tempfile::tempdir().unwrap();
        let paths = a.write(dir.path()).unwrap();
        let text = std::fs::read_to_string(&paths[0]).unwrap();
        assert!(text.starts_with("# tool=biasengine version="));
        assert!(text.contains("seed=7 config_hash=abc\na,b\n"));
    }
}
