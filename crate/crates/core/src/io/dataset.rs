use std::path::{Path, PathBuf};

use super::IoError;

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const GROUND_TRUTH_FILE: &str = "bokeh_gt.png";

/// Scene sub-directories of a dataset (those holding a manifest), sorted by
/// name.
pub fn list_scene_dirs(root: &Path) -> Result<Vec<PathBuf>, IoError> {
    let mut dirs = Vec::new();
    for entry in std::fs::read_dir(root).map_err(|e| IoError::io(root, e))? {
        let entry = entry.map_err(|e| IoError::io(root, e))?;
        let path = entry.path();
        if path.is_dir() && path.join(MANIFEST_FILE).is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}
