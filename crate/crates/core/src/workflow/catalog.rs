//! Content-addressed on-disk store: `data/<digest>` holds dataset bytes,
//! `keys/<cache key>.json` maps a component invocation to its outputs.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::ContentDigest;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog I/O at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("catalog entry {0} is missing")]
    Missing(ContentDigest),
    #[error("catalog entry {expected} is corrupt (content hashes to {actual})")]
    Corrupt { expected: ContentDigest, actual: ContentDigest },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub kind: String,
    pub outputs: BTreeMap<String, ContentDigest>,
}

#[derive(Debug, Clone)]
pub struct DataCatalog {
    root: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CatalogError + '_ {
    move |source| CatalogError::Io { path: path.to_path_buf(), source }
}

impl DataCatalog {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, CatalogError> {
        let root = root.into();
        for sub in ["data", "keys"] {
            let p = root.join(sub);
            fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn data_path(&self, d: &ContentDigest) -> PathBuf {
        self.root.join("data").join(d.as_str())
    }

    fn key_path(&self, key: &ContentDigest) -> PathBuf {
        self.root.join("keys").join(format!("{key}.json"))
    }

    fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CatalogError> {
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
        fs::rename(&tmp, path).map_err(io_err(path))
    }

    /// Stores bytes under their digest. Existing entries are left untouched.
    pub fn put(&self, bytes: &[u8]) -> Result<ContentDigest, CatalogError> {
        let d = ContentDigest::of(bytes);
        let path = self.data_path(&d);
        if !path.exists() {
            Self::write_atomic(&path, bytes)?;
        }
        Ok(d)
    }

    pub fn contains(&self, d: &ContentDigest) -> bool {
        self.data_path(d).is_file()
    }

    /// Reads an entry and checks its digest.
    pub fn get(&self, d: &ContentDigest) -> Result<Vec<u8>, CatalogError> {
        let path = self.data_path(d);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(CatalogError::Missing(d.clone())),
            Err(e) => return Err(CatalogError::Io { path, source: e }),
        };
        let actual = ContentDigest::of(&bytes);
        if actual != *d {
            return Err(CatalogError::Corrupt { expected: d.clone(), actual });
        }
        Ok(bytes)
    }

    pub fn lookup(&self, key: &ContentDigest) -> Option<CacheEntry> {
        let bytes = fs::read(self.key_path(key)).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    pub fn record(&self, key: &ContentDigest, entry: &CacheEntry) -> Result<(), CatalogError> {
        let bytes = serde_json::to_vec_pretty(entry).expect("entry serialises");
        Self::write_atomic(&self.key_path(key), &bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn put_get_verify() {
        let dir = tempfile::tempdir().unwrap();
        let cat = DataCatalog::open(dir.path()).unwrap();
        let d = cat.put(b"hello").unwrap();
        assert_eq!(cat.put(b"hello").unwrap(), d);
        assert_eq!(cat.get(&d).unwrap(), b"hello");
        fs::write(dir.path().join("data").join(d.as_str()), b"tampered").unwrap();
        assert!(matches!(cat.get(&d), Err(CatalogError::Corrupt { .. })));
        let other = ContentDigest::of(b"absent");
        assert!(matches!(cat.get(&other), Err(CatalogError::Missing(_))));
        let entry = CacheEntry { kind: "k".into(), outputs: BTreeMap::from([("out".into(), d.clone())]) };
        cat.record(&other, &entry).unwrap();
        assert_eq!(cat.lookup(&other), Some(entry));
    }
}
