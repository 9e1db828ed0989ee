//! Output directory handling: atomic writes and the metadata sidecar.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;

pub const OUTPUT_DIR_ENV: &str = "SLE_LAB_OUTPUT_DIR";

pub struct Output {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Output {
    /// `--out-dir`, else `$SLE_LAB_OUTPUT_DIR`, else the working directory.
    pub fn resolve(flag: Option<&Path>) -> Self {
        let dir = flag
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        Self { dir, written: Vec::new() }
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// Writes through a temp file in the target directory, then renames.
    pub fn write_with(&mut self, name: &str, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<PathBuf> {
        fs::create_dir_all(&self.dir).with_context(|| format!("creating output directory {}", self.dir.display()))?;
        let path = self.dir.join(name);
        let mut tmp = tempfile::Builder::new()
            .prefix(&format!(".{name}."))
            .tempfile_in(&self.dir)
            .with_context(|| format!("creating temp file in {}", self.dir.display()))?;
        {
            let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
            f(&mut buf).with_context(|| format!("writing {}", path.display()))?;
            buf.flush()?;
        }
        tmp.persist(&path).with_context(|| format!("renaming into {}", path.display()))?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(value)?;
        self.write_with(name, |w| writeln!(w, "{text}"))
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        self.write_with(name, |w| w.write_all(text.as_bytes()))
    }

    /// Run metadata; the only output allowed to differ between identical runs.
    pub fn write_meta(&mut self, subcommand: &str, argv: &[String], threads: usize) -> Result<PathBuf> {
        let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let outputs: Vec<String> =
            self.written.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect();
        let meta = serde_json::json!({
            "schema_version": sle_core::SCHEMA_VERSION,
            "tool": "sle-lab",
            "tool_version": env!("CARGO_PKG_VERSION"),
            "subcommand": subcommand,
            "argv": argv,
            "threads": threads,
            "created_unix": created,
            "outputs": outputs,
        });
        self.write_json(&format!("{subcommand}.meta.json"), &meta)
    }
}
