//! Line-oriented `key = value` manifests.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;

use crate::config::sha256_hex;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(kind: &str) -> Self {
        let mut m = Self::default();
        m.push("manifest", kind);
        m
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Display) {
        let key = key.into();
        debug_assert!(!key.contains('=') && !key.contains('\n'));
        // values are kept on one line
        let value = value.to_string().replace('\n', "\\n");
        self.entries.push((key, value));
    }

    pub fn extend(&mut self, lines: impl IntoIterator<Item = (String, String)>) {
        for (k, v) in lines {
            self.push(k, v);
        }
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Self::default();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line.split_once(" = ").ok_or_else(|| CliError::Parse {
                path: "manifest".into(),
                message: format!("line {}: expected `key = value`", n + 1),
            })?;
            m.entries.push((k.to_string(), v.to_string()));
        }
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn as_map(&self) -> BTreeMap<&str, &str> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect()
    }
}

/// Writes files into one output directory and records their hashes.
pub struct ArtifactWriter<'a> {
    dir: &'a Path,
    pub files: Vec<(String, String)>,
}

impl<'a> ArtifactWriter<'a> {
    pub fn new(dir: &'a Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self { dir, files: Vec::new() })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.files.push((name.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    /// Appends `file.NAME = sha256` lines and writes `manifest.txt`.
    pub fn finish(self, mut manifest: Manifest) -> Result<Manifest> {
        for (name, hash) in &self.files {
            manifest.push(format!("file.{name}"), hash);
        }
        let path = self.dir.join("manifest.txt");
        std::fs::write(&path, manifest.render()).map_err(|e| CliError::io(&path, e))?;
        Ok(manifest)
    }
}
