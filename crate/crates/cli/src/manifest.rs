//! Every run leaves a `key = value` manifest beside its outputs: the
//! command line, the resolved configuration, seeds and the tool version.

use std::path::{Path, PathBuf};

use sim2real_core::kv::KvFile;
use sim2real_core::Result;

pub struct Manifest {
    kv: KvFile,
}

impl Manifest {
    pub fn new(command: &str, seed: u64) -> Self {
        let mut kv = KvFile::new();
        kv.set("command", command);
        kv.set("argv", std::env::args().skip(1).collect::<Vec<_>>().join(" "));
        kv.set("version", env!("CARGO_PKG_VERSION"));
        kv.set("seed", seed);
        kv.set("threads", rayon::current_num_threads());
        Manifest { kv }
    }

    pub fn set(&mut self, key: &str, value: impl std::fmt::Display) {
        self.kv.set(key, value);
    }

    /// Copies `section` under `prefix.`.
    pub fn section(&mut self, prefix: &str, section: &KvFile) {
        self.kv.merge_section(prefix, section);
    }

    /// Writes `<dir>/manifest.txt` for directory outputs, `<file>.manifest` otherwise.
    pub fn write_beside(&self, out: &Path) -> Result<PathBuf> {
        let path = if out.is_dir() {
            out.join("manifest.txt")
        } else {
            let mut s = out.as_os_str().to_owned();
            s.push(".manifest");
            PathBuf::from(s)
        };
        self.kv.save(&path)?;
        Ok(path)
    }
}

/// `<path><suffix>` without touching the extension.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}
