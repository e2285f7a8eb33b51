//! Parameter checkpoints: a flat little-endian binary next to a JSON manifest
//! carrying layer names, shapes, dtype, seed, and the norm-stats hash.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::params::Params;
use super::{NnError, Real};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestParam {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub dtype: String,
    pub seed: u64,
    pub norm_stats_sha256: String,
    pub params: Vec<ManifestParam>,
    /// Model-specific configuration, owned by the model that wrote it.
    pub model: serde_json::Value,
}

fn dtype_name() -> &'static str {
    if cfg!(feature = "f32") {
        "f32"
    } else {
        "f64"
    }
}

/// Manifest path for a given binary path (`model.bin` -> `model.bin.json`).
pub fn manifest_path(bin_path: &Path) -> std::path::PathBuf {
    let mut os = bin_path.as_os_str().to_os_string();
    os.push(".json");
    os.into()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save(
    bin_path: &Path,
    params: &Params,
    seed: u64,
    norm_stats_sha256: &str,
    model: serde_json::Value,
) -> Result<(), NnError> {
    let mut bytes = Vec::with_capacity(params.len() * std::mem::size_of::<Real>());
    for v in params.flat() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(bin_path, &bytes).map_err(|e| NnError::Checkpoint(e.to_string()))?;

    let manifest = CheckpointManifest {
        format_version: CHECKPOINT_FORMAT_VERSION,
        dtype: dtype_name().to_string(),
        seed,
        norm_stats_sha256: norm_stats_sha256.to_string(),
        params: params
            .entries()
            .iter()
            .map(|e| ManifestParam {
                name: e.name.clone(),
                rows: e.rows,
                cols: e.cols,
                offset: e.offset,
            })
            .collect(),
        model,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| NnError::Checkpoint(e.to_string()))?;
    fs::write(manifest_path(bin_path), json).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    Ok(())
}

pub fn load_manifest(bin_path: &Path) -> Result<CheckpointManifest, NnError> {
    let text = fs::read_to_string(manifest_path(bin_path))
        .map_err(|e| NnError::Checkpoint(format!("manifest: {e}")))?;
    serde_json::from_str(&text).map_err(|e| NnError::Checkpoint(format!("manifest: {e}")))
}

/// Loads the flat binary into `params`, validating the layout against the
/// manifest.
pub fn load_into(
    bin_path: &Path,
    manifest: &CheckpointManifest,
    params: &mut Params,
) -> Result<(), NnError> {
    if manifest.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(NnError::Checkpoint(format!(
            "unsupported checkpoint format version {}",
            manifest.format_version
        )));
    }
    if manifest.dtype != dtype_name() {
        return Err(NnError::Checkpoint(format!(
            "checkpoint dtype {} does not match build dtype {}",
            manifest.dtype,
            dtype_name()
        )));
    }
    if manifest.params.len() != params.entries().len() {
        return Err(NnError::Checkpoint(format!(
            "expected {} parameter tensors, manifest has {}",
            params.entries().len(),
            manifest.params.len()
        )));
    }
    for (have, want) in params.entries().iter().zip(&manifest.params) {
        if have.name != want.name
            || have.rows != want.rows
            || have.cols != want.cols
            || have.offset != want.offset
        {
            return Err(NnError::Checkpoint(format!(
                "parameter layout mismatch at {}: manifest has {} ({}x{} @{})",
                have.name, want.name, want.rows, want.cols, want.offset
            )));
        }
    }
    let bytes = fs::read(bin_path).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    let width = std::mem::size_of::<Real>();
    if bytes.len() != params.len() * width {
        return Err(NnError::Checkpoint(format!(
            "binary size {} does not match {} parameters",
            bytes.len(),
            params.len()
        )));
    }
    let mut values = Vec::with_capacity(params.len());
    for chunk in bytes.chunks_exact(width) {
        let mut arr = [0u8; std::mem::size_of::<Real>()];
        arr.copy_from_slice(chunk);
        values.push(Real::from_le_bytes(arr));
    }
    params.assign_flat(&values)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let mut p = Params::new();
        let a = p.register("layer.weight", 2, 3);
        p.set_from(a, &[0.1, -0.2, 1e-300, 3.0, 4.5, -6.25]).unwrap();

        save(&path, &p, 42, "deadbeef", serde_json::json!({"kind": "test"})).unwrap();

        let manifest = load_manifest(&path).unwrap();
        assert_eq!(manifest.seed, 42);
        assert_eq!(manifest.norm_stats_sha256, "deadbeef");

        let mut q = Params::new();
        q.register("layer.weight", 2, 3);
        load_into(&path, &manifest, &mut q).unwrap();
        assert_eq!(p.flat(), q.flat());
    }

    #[test]
    fn layout_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let mut p = Params::new();
        p.register("a", 1, 2);
        save(&path, &p, 0, "", serde_json::Value::Null).unwrap();
        let manifest = load_manifest(&path).unwrap();

        let mut q = Params::new();
        q.register("b", 1, 2);
        assert!(load_into(&path, &manifest, &mut q).is_err());
    }
}
