//! Genome and checkpoint files.
//!
//! Both are JSON documents whose `checksum` field is the SHA-256 of the
//! compact JSON encoding of every other field.

use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{hex, RunConfig};
use crate::evolution::EsState;
use crate::genome::{Genome, GenomeError, Layout};

pub const GENOME_FORMAT: &str = "plasticlab-genome";
pub const CHECKPOINT_FORMAT: &str = "plasticlab-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: malformed file: {message}")]
    Malformed { path: String, message: String },
    #[error("{path}: checksum mismatch (file is corrupted or was edited)")]
    Checksum { path: String },
    #[error("{path}: expected a {expected} file, found `{found}`")]
    Format {
        path: String,
        expected: &'static str,
        found: String,
    },
    #[error("{path}: format version {found} is not supported (expected {FORMAT_VERSION})")]
    Version { path: String, found: u32 },
    #[error("{path}: written for config {found}, current config is {expected}")]
    ConfigHash {
        path: String,
        expected: String,
        found: String,
    },
    #[error(transparent)]
    Genome(#[from] GenomeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenomeBody {
    pub format: String,
    pub format_version: u32,
    pub tool_version: String,
    pub config_hash: String,
    pub layout: Layout,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointBody {
    pub format: String,
    pub format_version: u32,
    pub tool_version: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub layout: Layout,
    /// Noise is a function of (seed, generation, index), so the generation
    /// counter inside `state` is the complete RNG state.
    pub state: EsState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Sealed<T> {
    #[serde(flatten)]
    body: T,
    checksum: String,
}

fn digest<T: Serialize>(body: &T) -> String {
    let compact = serde_json::to_vec(body).expect("bodies serialize to json");
    hex(&Sha256::digest(&compact))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PersistError + '_ {
    move |source| PersistError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes through a temporary sibling and renames, so readers never see a
/// half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PersistError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

fn write_sealed<T: Serialize>(path: &Path, body: T) -> Result<(), PersistError> {
    let checksum = digest(&body);
    let mut text = serde_json::to_string_pretty(&Sealed { body, checksum })
        .expect("sealed files serialize to json");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn read_sealed<T: Serialize + DeserializeOwned>(path: &Path) -> Result<T, PersistError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let shown = || path.display().to_string();
    let sealed: Sealed<T> = serde_json::from_str(&text).map_err(|e| PersistError::Malformed {
        path: shown(),
        message: e.to_string(),
    })?;
    if digest(&sealed.body) != sealed.checksum {
        return Err(PersistError::Checksum { path: shown() });
    }
    Ok(sealed.body)
}

fn check_header(
    path: &Path,
    format: &str,
    version: u32,
    expected: &'static str,
) -> Result<(), PersistError> {
    if format != expected {
        return Err(PersistError::Format {
            path: path.display().to_string(),
            expected,
            found: format.to_string(),
        });
    }
    if version != FORMAT_VERSION {
        return Err(PersistError::Version {
            path: path.display().to_string(),
            found: version,
        });
    }
    Ok(())
}

pub fn save_genome(path: &Path, genome: &Genome, config_hash: &str) -> Result<(), PersistError> {
    write_sealed(
        path,
        GenomeBody {
            format: GENOME_FORMAT.into(),
            format_version: FORMAT_VERSION,
            tool_version: crate::TOOL_VERSION.into(),
            config_hash: config_hash.into(),
            layout: genome.layout.clone(),
            theta: genome.theta.clone(),
        },
    )
}

/// Loads and verifies a genome file. The config hash is returned, not checked.
pub fn load_genome(path: &Path) -> Result<(Genome, GenomeBody), PersistError> {
    let body: GenomeBody = read_sealed(path)?;
    check_header(path, &body.format, body.format_version, GENOME_FORMAT)?;
    let genome = Genome::new(body.layout.clone(), body.theta.clone())?;
    Ok((genome, body))
}

/// Fails unless `found` matches `expected` or `force` is set.
pub fn check_config_hash(
    path: &Path,
    expected: &str,
    found: &str,
    force: bool,
) -> Result<(), PersistError> {
    if expected == found || force {
        Ok(())
    } else {
        Err(PersistError::ConfigHash {
            path: path.display().to_string(),
            expected: expected.into(),
            found: found.into(),
        })
    }
}

pub fn save_checkpoint(
    path: &Path,
    config: &RunConfig,
    layout: &Layout,
    state: &EsState,
) -> Result<(), PersistError> {
    write_sealed(
        path,
        CheckpointBody {
            format: CHECKPOINT_FORMAT.into(),
            format_version: FORMAT_VERSION,
            tool_version: crate::TOOL_VERSION.into(),
            config_hash: config.hash(),
            config: config.clone(),
            layout: layout.clone(),
            state: state.clone(),
        },
    )
}

pub fn load_checkpoint(path: &Path) -> Result<CheckpointBody, PersistError> {
    let body: CheckpointBody = read_sealed(path)?;
    check_header(path, &body.format, body.format_version, CHECKPOINT_FORMAT)?;
    if body.state.theta.len() != body.layout.len() {
        return Err(PersistError::Malformed {
            path: path.display().to_string(),
            message: format!(
                "theta has {} entries, layout needs {}",
                body.state.theta.len(),
                body.layout.len()
            ),
        });
    }
    Ok(body)
}

/// Any serializable value with a trailing newline, written atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PersistError> {
    let mut text = serde_json::to_string_pretty(value).expect("values serialize to json");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PersistError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| PersistError::Malformed {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
