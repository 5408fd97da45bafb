//! Headered CSV tables and the run manifest.
//!
//! Every CSV file starts with one comment line
//! `# dweuler <version> config_hash=<sha256> seed=<seed>` followed by a
//! header row. Floats are written in shortest round-trip exponent form.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST: &str = "manifest.txt";

pub fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn float(v: f64) -> String {
    format!("{v:e}")
}

/// Provenance written as the first line of every table.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn of(cfg: &ExperimentConfig) -> Self {
        Self {
            config_hash: cfg.hash(),
            seed: cfg.kh.seed,
        }
    }

    pub fn comment(&self) -> String {
        format!(
            "# dweuler {VERSION} config_hash={} seed={}",
            self.config_hash, self.seed
        )
    }
}

/// Writes a CSV table with the provenance comment and header row.
pub fn write_csv<I, R>(path: &Path, prov: &Provenance, header: &[&str], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut file = BufWriter::new(File::create(path).map_err(io_err(path))?);
    writeln!(file, "{}", prov.comment()).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    let wrap = |e: csv::Error| CliError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(row).map_err(wrap)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Plain-text manifest: `key = value` lines. Configuration keys come first
/// and are sufficient to reproduce the run; `tool.*` and `run.*` keys are
/// informational.
#[derive(Debug, Default)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &ExperimentConfig) -> Self {
        let mut m = Self::default();
        m.push("tool.name", "dweuler");
        m.push("tool.version", VERSION);
        m.push("tool.command", command);
        m.push("tool.config_hash", cfg.hash());
        m.push("tool.workers", cfg.workers);
        for (k, v) in cfg.canonical() {
            m.push(k, v);
        }
        m
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn render(&self) -> String {
        let mut out = String::from("# dweuler manifest\n");
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(MANIFEST);
        std::fs::write(&path, self.render()).map_err(io_err(&path))?;
        Ok(path)
    }
}

/// Reads the configuration recorded in `dir/manifest.txt`.
pub fn read_manifest(dir: &Path) -> Result<ExperimentConfig, CliError> {
    let path = dir.join(MANIFEST);
    if !path.exists() {
        return Err(CliError::Input(format!("missing {}", path.display())));
    }
    let mut cfg = ExperimentConfig::default();
    cfg.load_file(&path)?;
    cfg.out = dir.to_path_buf();
    Ok(cfg)
}

pub fn snapshot_name(level: u32) -> String {
    format!("state_n{level}_final.dwf")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_comment_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let prov = Provenance {
            config_hash: "abc".into(),
            seed: 3,
        };
        write_csv(&path, &prov, &["a", "b"], [vec![float(1.5), float(1e-20)]]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], format!("# dweuler {VERSION} config_hash=abc seed=3"));
        assert_eq!(lines[1], "a,b");
        assert_eq!(lines[2], "1.5e0,1e-20");
        assert_eq!("1e-20".parse::<f64>().unwrap(), 1e-20);
    }

    #[test]
    fn manifest_reloads_as_config() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::default();
        cfg.kh.seed = 42;
        cfg.scheme.cfl = 0.2;
        let mut m = Manifest::new("run", &cfg);
        m.push("run.n1.steps", 10);
        m.write(dir.path()).unwrap();
        let back = read_manifest(dir.path()).unwrap();
        assert_eq!(back.hash(), cfg.hash());
    }
}
