//! One directory per run holding the data files and a `manifest.json`.

use anyhow::{bail, Context, Result};
use chrono::{DateTime, Utc};
use serde::Serialize;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::Config;

/// Environment variable holding the default output root.
pub const OUT_ROOT_ENV: &str = "FLOQUET_OUT_DIR";
pub const DEFAULT_OUT_ROOT: &str = "runs";

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub arguments: Vec<String>,
    pub config: Config,
    pub version: String,
    pub started: String,
    pub finished: String,
    pub status: String,
    /// Paths relative to the run directory.
    pub outputs: Vec<String>,
}

#[derive(Debug)]
pub struct RunDir {
    path: PathBuf,
    command: String,
    started: DateTime<Utc>,
    outputs: Vec<String>,
}

impl RunDir {
    /// Use `explicit` if given (it must be absent or empty), otherwise a fresh
    /// `<root>/<command>-<UTC time>` directory.
    pub fn create(root: &Path, command: &str, explicit: Option<&Path>) -> Result<Self> {
        let started = Utc::now();
        let path = match explicit {
            Some(p) => {
                if p.exists() && fs::read_dir(p)?.next().is_some() {
                    bail!("run directory {} is not empty", p.display());
                }
                fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
                p.to_path_buf()
            }
            None => {
                fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
                let stem = format!("{command}-{}", started.format("%Y%m%dT%H%M%S%.3fZ"));
                let mut n = 1;
                loop {
                    let name = if n == 1 { stem.clone() } else { format!("{stem}-{n}") };
                    let p = root.join(name);
                    match fs::create_dir(&p) {
                        Ok(()) => break p,
                        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => n += 1,
                        Err(e) => return Err(e).with_context(|| format!("creating {}", p.display())),
                    }
                }
            }
        };
        Ok(RunDir { path, command: command.to_owned(), started, outputs: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Write `name` through `f` and record it as an output.
    pub fn write(&mut self, name: &str, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<PathBuf> {
        let p = self.path.join(name);
        let file = fs::File::create(&p).with_context(|| format!("creating {}", p.display()))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush()?;
        self.outputs.push(name.to_owned());
        Ok(p)
    }

    pub fn write_str(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        self.write(name, |w| Ok(w.write_all(text.as_bytes())?))
    }

    /// Write `manifest.json` and return its path.
    pub fn finish(self, config: &Config, arguments: &[String], status: &str) -> Result<PathBuf> {
        for o in &self.outputs {
            debug_assert!(self.path.join(o).exists());
        }
        let manifest = RunManifest {
            command: self.command,
            arguments: arguments.to_vec(),
            config: config.clone(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            started: self.started.to_rfc3339(),
            finished: Utc::now().to_rfc3339(),
            status: status.to_owned(),
            outputs: self.outputs,
        };
        let p = self.path.join("manifest.json");
        fs::write(&p, floquet_core::output::to_json(&manifest)?)?;
        Ok(p)
    }
}
