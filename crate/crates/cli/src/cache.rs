//! Content-addressed report store keyed by config hash.

use crate::report::{write_atomic, Report};
use std::path::{Path, PathBuf};

pub const CACHE_ENV: &str = "CBPLAB_CACHE";

pub struct Cache {
    root: PathBuf,
}

pub enum Lookup {
    Hit(Report),
    Miss,
    /// Present but unreadable or for another config.
    Corrupt(String),
}

impl Cache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, hash: &str) -> PathBuf {
        let shard = hash.get(..2).unwrap_or("00");
        self.root.join(shard).join(format!("{hash}.json"))
    }

    pub fn get(&self, hash: &str) -> Lookup {
        let path = self.path(hash);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Lookup::Miss,
            Err(e) => return Lookup::Corrupt(format!("{}: {e}", path.display())),
        };
        match serde_json::from_str::<Report>(&text) {
            Ok(r) if r.config_hash == hash && r.inputs.hash() == hash => Lookup::Hit(r),
            Ok(_) => Lookup::Corrupt(format!("{}: entry belongs to another config", path.display())),
            Err(e) => Lookup::Corrupt(format!("{}: {e}", path.display())),
        }
    }

    /// Stores the report as computed, with `cached` cleared.
    pub fn put(&self, report: &Report) -> std::io::Result<()> {
        let mut r = report.clone();
        r.cached = false;
        write_atomic(&self.path(&r.config_hash), r.to_json().as_bytes())
    }
}

/// `--cache-dir`, else `$CBPLAB_CACHE`, else `~/.cache/cbplab`.
pub fn default_root(explicit: Option<&Path>) -> Option<PathBuf> {
    if let Some(p) = explicit {
        return Some(p.to_path_buf());
    }
    if let Some(p) = std::env::var_os(CACHE_ENV).filter(|p| !p.is_empty()) {
        return Some(PathBuf::from(p));
    }
    std::env::var_os("HOME").map(|h| PathBuf::from(h).join(".cache").join("cbplab"))
}
