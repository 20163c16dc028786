//! Deterministic output handling. Commands stage every artifact in memory
//! and flush them together once the computation has fully succeeded, so a
//! failure part-way through never leaves a half-written result set behind.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::Failure;

/// Staged output files: (name, contents) pairs written in one batch.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, String)>,
}

impl Artifacts {
    pub fn new() -> Artifacts {
        Artifacts::default()
    }

    pub fn push_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| Failure::Config(format!("cannot serialize {name}: {e}")))?;
        text.push('\n');
        self.files.push((name.to_string(), text));
        Ok(())
    }

    pub fn push_csv(&mut self, name: &str, header: &str, rows: &[Vec<String>]) {
        let mut text = String::from(header);
        text.push('\n');
        for row in rows {
            let _ = writeln!(text, "{}", row.join(","));
        }
        self.files.push((name.to_string(), text));
    }

    /// Creates `dir` if needed and writes every staged file into it,
    /// returning the file names in write order.
    pub fn write(self, dir: &Path) -> Result<Vec<String>, Failure> {
        std::fs::create_dir_all(dir).map_err(|e| {
            Failure::Config(format!("cannot create output directory {}: {e}", dir.display()))
        })?;
        let mut names = Vec::with_capacity(self.files.len());
        for (name, contents) in self.files {
            let path = dir.join(&name);
            std::fs::write(&path, contents).map_err(|e| {
                Failure::Config(format!("cannot write {}: {e}", path.display()))
            })?;
            names.push(name);
        }
        Ok(names)
    }
}

/// Shortest round-trip decimal form of a float, used for every CSV field so
/// reruns are byte-identical.
pub fn fmt_f64(x: f64) -> String {
    let mut buf = ryu::Buffer::new();
    buf.format(x).to_string()
}
