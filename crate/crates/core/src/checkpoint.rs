//! Parameter checkpoints: a JSON manifest (names, shapes, offsets, config
//! hash, stage metadata) plus one little-endian float32 blob.

use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::tape::Scalar;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    rows: usize,
    cols: usize,
    offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub meta: BTreeMap<String, String>,
    entries: Vec<ManifestEntry>,
    total_len: usize,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_FILE: &str = "params.f32";

/// Stage tags recorded in checkpoint metadata.
pub const STAGE_KEY: &str = "stage";
pub const STAGE_COARSE_FINE: &str = "coarse_fine";
pub const STAGE_ACTOR: &str = "actor";

pub fn save_checkpoint<S: Scalar>(
    store: &ParamStore<S>,
    config_hash: u64,
    meta: &BTreeMap<String, String>,
    dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::new();
    let mut blob: Vec<f32> = Vec::new();
    for (name, rows, cols, data) in store.export() {
        entries.push(ManifestEntry { name, rows, cols, offset: blob.len() });
        blob.extend_from_slice(&data);
    }
    let manifest = Manifest {
        config_hash: format!("{config_hash:016x}"),
        meta: meta.clone(),
        total_len: blob.len(),
        entries,
    };
    crate::io::write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    crate::io::write_f32_le(&dir.join(BLOB_FILE), &blob)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    crate::io::read_json(&dir.join(MANIFEST_FILE))
}

pub fn checkpoint_exists(dir: &Path) -> bool {
    dir.join(MANIFEST_FILE).is_file() && dir.join(BLOB_FILE).is_file()
}

/// Load a checkpoint into a store whose architecture (names and shapes)
/// must already match. When `expect_hash` is given, the stored config hash
/// must equal it.
pub fn load_checkpoint<S: Scalar>(
    store: &mut ParamStore<S>,
    dir: &Path,
    expect_hash: Option<u64>,
) -> Result<Manifest> {
    let manifest = read_manifest(dir)?;
    if let Some(h) = expect_hash {
        let want = format!("{h:016x}");
        if manifest.config_hash != want {
            return Err(Error::Checkpoint(format!(
                "config hash mismatch: checkpoint {} vs expected {want}",
                manifest.config_hash
            )));
        }
    }
    let blob = crate::io::read_f32_le(&dir.join(BLOB_FILE))?;
    if blob.len() != manifest.total_len {
        return Err(Error::Checkpoint(format!(
            "blob length {} does not match manifest {}",
            blob.len(),
            manifest.total_len
        )));
    }
    let arrays: Vec<(String, usize, usize, Vec<f32>)> = manifest
        .entries
        .iter()
        .map(|e| {
            let len = e.rows * e.cols;
            (
                e.name.clone(),
                e.rows,
                e.cols,
                blob[e.offset..e.offset + len].to_vec(),
            )
        })
        .collect();
    store.import(&arrays)?;
    Ok(manifest)
}
