//! Run provenance: every output directory gets a manifest tying the files
//! to the exact resolved configuration (by hash), tool version, command
//! line, and seed, and every text output starts with the same header.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::errors::{CliError, CliResult};

/// 64-bit FNV-1a hash (stable, dependency-free fingerprint for config text).
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Identity of one command run.
#[derive(Debug, Clone)]
pub struct Provenance {
    /// Tool version.
    pub version: &'static str,
    /// FNV-1a hash of the canonical resolved configuration text.
    pub config_hash: u64,
    /// The command line as invoked (without the binary path).
    pub command: String,
    /// Effective RNG seed.
    pub seed: u64,
}

impl Provenance {
    /// Capture the identity of this run from the resolved configuration.
    pub fn capture(cfg: &RunConfig) -> Self {
        Provenance {
            version: env!("CARGO_PKG_VERSION"),
            config_hash: fnv1a64(cfg.to_text().as_bytes()),
            command: std::env::args().skip(1).collect::<Vec<_>>().join(" "),
            seed: cfg.camera.seed,
        }
    }

    /// `#`-prefixed header lines for text outputs (reports, CSV).
    pub fn header(&self) -> String {
        format!(
            "# biphoton {}\n# config fnv1a64={:016x}\n# command {}\n# seed {}\n",
            self.version, self.config_hash, self.command, self.seed
        )
    }
}

/// Output directory bookkeeping: creates the directory, tracks every file
/// written, and finishes by dropping the resolved config and a manifest.
pub struct OutDir {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl OutDir {
    /// Create (if needed) and wrap an output directory.
    pub fn create(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io_at(dir, e))?;
        Ok(OutDir { dir: dir.to_path_buf(), written: Vec::new() })
    }

    /// Absolute path for `name`, recorded as an output of this run.
    pub fn file(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    /// Write a text file (report or CSV) with the provenance header.
    pub fn write_text(&mut self, name: &str, prov: &Provenance, body: &str) -> CliResult<PathBuf> {
        let path = self.file(name);
        let mut content = prov.header();
        content.push_str(body);
        fs::write(&path, content).map_err(|e| CliError::io_at(&path, e))?;
        Ok(path)
    }

    /// Drop `config_resolved.conf` and `manifest.txt`, closing out the run.
    pub fn finish(mut self, cfg: &RunConfig, prov: &Provenance) -> CliResult<()> {
        let resolved = self.file("config_resolved.conf");
        fs::write(&resolved, cfg.to_text()).map_err(|e| CliError::io_at(&resolved, e))?;

        let mut body = prov.header();
        body.push_str("# files written by this run:\n");
        let manifest_path = self.dir.join("manifest.txt");
        self.written.push(manifest_path.clone());
        for file in &self.written {
            let name = file.file_name().map(|n| n.to_string_lossy().into_owned());
            body.push_str(&name.unwrap_or_else(|| file.display().to_string()));
            body.push('\n');
        }
        fs::write(&manifest_path, body).map_err(|e| CliError::io_at(&manifest_path, e))?;
        Ok(())
    }
}
