use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

const SCHEME: &str = "sha256:";

/// Content-addressed file store: `<root>/ab/abcdef…`, addressed as `sha256:<hex>`.
#[derive(Debug, Clone)]
pub struct BlobStore {
    root: PathBuf,
}

impl BlobStore {
    pub fn open(root: impl Into<PathBuf>) -> std::io::Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(BlobStore { root })
    }

    pub fn put(&self, bytes: &[u8]) -> std::io::Result<String> {
        let digest = hex::encode(Sha256::digest(bytes));
        let path = self.path_of(&digest);
        if !path.exists() {
            let dir = path.parent().expect("blob paths have a parent");
            std::fs::create_dir_all(dir)?;
            let tmp = dir.join(format!(".{digest}.{}", uuid::Uuid::new_v4().simple()));
            std::fs::write(&tmp, bytes)?;
            std::fs::rename(&tmp, &path)?;
        }
        Ok(format!("{SCHEME}{digest}"))
    }

    /// Local path of a stored blob; `None` for malformed URIs.
    pub fn path(&self, uri: &str) -> Option<PathBuf> {
        let digest = uri.strip_prefix(SCHEME)?;
        (digest.len() == 64 && digest.bytes().all(|b| b.is_ascii_hexdigit())).then(|| self.path_of(digest))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path_of(&self, digest: &str) -> PathBuf {
        self.root.join(&digest[..2]).join(digest)
    }
}
