use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::Result;

pub const CACHE_ENV: &str = "WELDFCS_CACHE";

/// Content-addressed store of command outputs at `<dir>/v1/<sha256>.json`.
#[derive(Clone, Debug)]
pub struct Cache {
    root: PathBuf,
}

impl Cache {
    /// Flag value first, then the environment variable, then the config entry.
    pub fn resolve(flag: Option<&Path>, config: Option<&str>) -> Option<Cache> {
        let dir = flag
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
            .or_else(|| config.map(PathBuf::from))?;
        Some(Cache { root: dir.join("v1") })
    }

    pub fn key(payload: &str) -> String {
        let digest = Sha256::digest(payload.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn path(&self, key: &str) -> PathBuf {
        self.root.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Option<String> {
        std::fs::read_to_string(self.path(key)).ok()
    }

    pub fn put(&self, key: &str, body: &str) -> Result<()> {
        std::fs::create_dir_all(&self.root)?;
        let tmp = self.root.join(format!("{key}.tmp"));
        std::fs::write(&tmp, body)?;
        std::fs::rename(&tmp, self.path(key))?;
        Ok(())
    }
}
