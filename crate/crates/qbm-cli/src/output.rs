//! CSV and JSON emission with a provenance header.
//!
//! Every file starts with the schema line, then `# key=value` metadata, of
//! which only the `# generated=` line varies between identical runs.

use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::CliError;

pub const SCHEMA: &str = "qbm-compare/v1";

/// Seventeen significant digits, enough to round-trip any f64.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Metadata {
    pub entries: Vec<(String, String)>,
}

impl Metadata {
    pub fn new(command: &str) -> Self {
        let mut m = Metadata::default();
        m.push("tool", concat!("qbm-cli ", env!("CARGO_PKG_VERSION")));
        m.push("command", command);
        m
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn push_num(&mut self, key: &str, value: f64) {
        self.push(key, num(value));
    }

    pub fn push_list(&mut self, key: &str, values: &[f64]) {
        self.push(
            key,
            values.iter().map(|v| num(*v)).collect::<Vec<_>>().join(";"),
        );
    }
}

fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

pub struct Output {
    dir: PathBuf,
    pub written: Vec<PathBuf>,
}

impl Output {
    pub fn new(dir: PathBuf) -> Result<Self, CliError> {
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Output {
            dir,
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn write(&mut self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, text)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn csv(
        &mut self,
        name: &str,
        meta: &Metadata,
        columns: &[&str],
        rows: &[Vec<String>],
    ) -> Result<PathBuf, CliError> {
        let mut s = String::new();
        let _ = writeln!(s, "# schema={SCHEMA}");
        let _ = writeln!(s, "# generated={}", timestamp());
        for (k, v) in &meta.entries {
            let _ = writeln!(s, "# {k}={v}");
        }
        let _ = writeln!(s, "{}", columns.join(","));
        for r in rows {
            let _ = writeln!(s, "{}", r.join(","));
        }
        self.write(name, &s)
    }

    pub fn json<T: Serialize>(
        &mut self,
        name: &str,
        meta: &Metadata,
        result: &T,
    ) -> Result<PathBuf, CliError> {
        let meta_map: serde_json::Map<String, serde_json::Value> = meta
            .entries
            .iter()
            .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
            .collect();
        let doc = serde_json::json!({
            "schema": SCHEMA,
            "generated": timestamp(),
            "metadata": meta_map,
            "result": result,
        });
        let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Io(e.to_string()))?;
        self.write(name, &(text + "\n"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_carry_seventeen_digits() {
        let s = num(0.1);
        assert_eq!(s, "1.0000000000000001e-1");
        assert_eq!(s.parse::<f64>().unwrap(), 0.1);
        let mant = s.split('e').next().unwrap().replace('.', "");
        assert_eq!(mant.len(), 17);
    }
}
