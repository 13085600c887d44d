use std::path::PathBuf;

use thiserror::Error;

#[derive(Error, Debug)]
pub enum LomacError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("grid too small: {n} points, at least {min} required")]
    Sizing { n: usize, min: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported domain: {0}")]
    UnsupportedDomain(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("rank {rank} exceeds cap {cap} at t = {time}")]
    RankExplosion { rank: usize, cap: usize, time: f64 },

    #[error("CFL number {cfl:.3} exceeds 1 at t = {time}")]
    CflViolation { cfl: f64, time: f64 },

    #[error("snapshot error: {0}")]
    Snapshot(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, LomacError>;

impl LomacError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LomacError::Io {
            path: path.into(),
            source,
        }
    }
}
