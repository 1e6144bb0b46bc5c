//! File formats and rendering behind the `gridshield` command-line tool.
//!
//! Shields and trees are stored as versioned JSON documents. Shield cells
//! are run-length encoded in row-major order, and every file carries a
//! provenance block so a tree can be traced back to the shield it was
//! compacted from.

pub mod shield_file;
pub mod svg;
pub mod trace;
pub mod tree_file;

use std::path::{Path, PathBuf};

use gridshield::shield::ShieldRepr;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use shield_file::{ShieldFile, ShieldProvenance};
pub use tree_file::{TreeFile, TreeProvenance};

#[derive(Debug, Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("expected a `{expected}` file, found `{found}`")]
    Format { expected: String, found: String },
    #[error("unsupported {format} version {found} (this build reads version {supported})")]
    Version {
        format: String,
        found: u32,
        supported: u32,
    },
    #[error("cell data, entry {offset}: {message}")]
    Rle { offset: usize, message: String },
    #[error("invalid contents: {0}")]
    Invalid(String),
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub(crate) fn read(path: &Path) -> Result<Vec<u8>, FileError> {
    std::fs::read(path).map_err(|source| FileError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write(path: &Path, bytes: &[u8]) -> Result<(), FileError> {
    std::fs::write(path, bytes).map_err(|source| FileError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Checks the `format`/`version` header shared by all files.
pub(crate) fn check_header(format: &str, version: u32, expected: &str, supported: u32) -> Result<(), FileError> {
    if format != expected {
        return Err(FileError::Format {
            expected: expected.into(),
            found: format.into(),
        });
    }
    if version != supported {
        return Err(FileError::Version {
            format: expected.into(),
            found: version,
            supported,
        });
    }
    Ok(())
}

/// Either kind of shield file, as found on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyShieldFile {
    Grid(ShieldFile),
    Tree(TreeFile),
}

impl AnyShieldFile {
    pub fn into_repr(self) -> ShieldRepr {
        match self {
            AnyShieldFile::Grid(f) => ShieldRepr::Grid(f.shield),
            AnyShieldFile::Tree(f) => ShieldRepr::Tree(f.tree),
        }
    }
}

/// Parses a shield or tree file, telling them apart by their header.
pub fn parse_any(bytes: &[u8]) -> Result<AnyShieldFile, FileError> {
    #[derive(Deserialize)]
    struct Header {
        format: String,
    }
    let header: Header = serde_json::from_slice(bytes)?;
    match header.format.as_str() {
        shield_file::FORMAT => Ok(AnyShieldFile::Grid(ShieldFile::from_json(bytes)?)),
        tree_file::FORMAT => Ok(AnyShieldFile::Tree(TreeFile::from_json(bytes)?)),
        other => Err(FileError::Format {
            expected: format!("{} or {}", shield_file::FORMAT, tree_file::FORMAT),
            found: other.into(),
        }),
    }
}

/// Loads a shield or tree file and returns it with the digest of its bytes.
pub fn load_any(path: &Path) -> Result<(AnyShieldFile, String), FileError> {
    let bytes = read(path)?;
    Ok((parse_any(&bytes)?, digest(&bytes)))
}
