//! File formats: PNG, PFM, scene manifests and benchmark datasets.

mod dataset;
mod manifest;
mod pfm;
mod png;

pub use dataset::{list_scene_dirs, GROUND_TRUTH_FILE, MANIFEST_FILE};
pub use manifest::{load_scene, save_scene, LayerEntry, LensSection, SceneManifest};
pub use pfm::{decode_pfm, encode_pfm, read_pfm, write_pfm};
pub use png::{
    decode_srgb, display_referred, encode_linear, encode_srgb, load_color_png, load_gray_png,
    save_color_png, save_gray_png, DISPLAY_GAMMA,
};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::scene::SceneError;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("{}: {message}", path.display())]
    Decode { path: PathBuf, message: String },
    #[error(transparent)]
    Scene(#[from] SceneError),
}

impl IoError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            IoError::Io { .. } => "IO_FAILURE",
            IoError::Parse { .. } => "PARSE_ERROR",
            IoError::Decode { .. } => "DECODE_ERROR",
            IoError::Scene(_) => "SCENE_INVALID",
        }
    }
}

/// Writes a text file, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    write_bytes(path, text.as_bytes())
}

/// Writes a file, creating parent directories.
pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| IoError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| IoError::io(path, e))
}
