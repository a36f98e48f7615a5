//! Embedding bundles: a JSON manifest plus a raw little-endian `f32` payload.
//!
//! ```text
//! <name>.manifest.json   {"version": 1, "dim": d, "count": n, "dtype": "f32le",
//!                         "payload": "<relative path>", "meta": [{"id": .., "group": ..}, ..]}
//! <name>.f32             n * d * 4 bytes, row-major
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, LoadError, Result};

pub const BUNDLE_VERSION: u32 = 1;
pub const DTYPE_F32LE: &str = "f32le";

/// Sample group tag carried by image rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Id,
    Ood,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowMeta {
    pub id: String,
    pub group: Option<Group>,
}

impl RowMeta {
    pub fn new(id: impl Into<String>, group: Option<Group>) -> Self {
        Self {
            id: id.into(),
            group,
        }
    }
}

/// Dense row-major matrix of raw (unnormalized) embeddings with per-row metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    data: Vec<f32>,
    meta: Vec<RowMeta>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, data: Vec<f32>, meta: Vec<RowMeta>) -> Result<Self, LoadError> {
        if dim == 0 {
            return Err(LoadError::ZeroDim);
        }
        let expected = meta.len() * dim;
        if data.len() != expected {
            return Err(LoadError::SizeMismatch {
                expected: (expected * 4) as u64,
                found: (data.len() * 4) as u64,
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(LoadError::NonFinite {
                row: pos / dim,
                col: pos % dim,
            });
        }
        Ok(Self { dim, data, meta })
    }

    pub fn from_rows<R: AsRef<[f32]>>(
        dim: usize,
        rows: impl IntoIterator<Item = (RowMeta, R)>,
    ) -> Result<Self> {
        let mut data = Vec::new();
        let mut meta = Vec::new();
        for (m, row) in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
            meta.push(m);
        }
        Ok(Self::new(dim, data, meta)?)
    }

    pub fn empty(dim: usize) -> Result<Self, LoadError> {
        Self::new(dim, Vec::new(), Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn meta(&self) -> &[RowMeta] {
        &self.meta
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = (&RowMeta, &[f32])> {
        self.meta.iter().zip(self.data.chunks_exact(self.dim))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Copies the listed rows, in the given order, into a new table.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        let mut meta = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.row(i));
            meta.push(self.meta[i].clone());
        }
        Self {
            dim: self.dim,
            data,
            meta,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    dim: usize,
    count: usize,
    dtype: String,
    payload: String,
    meta: Vec<RowMeta>,
}

/// Payload file name written next to `manifest_path`: `foo.manifest.json` -> `foo.f32`.
pub fn payload_name(manifest_path: &Path) -> String {
    let name = manifest_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "bundle".to_owned());
    let stem = name
        .strip_suffix(".manifest.json")
        .or_else(|| name.strip_suffix(".json"))
        .unwrap_or(&name);
    format!("{stem}.f32")
}

pub fn read_bundle(manifest_path: impl AsRef<Path>) -> Result<EmbeddingTable, LoadError> {
    let manifest_path = manifest_path.as_ref();
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| LoadError::Io { path, source }
    };
    let text = fs::read_to_string(manifest_path).map_err(io_err(manifest_path))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|source| LoadError::Manifest {
        path: manifest_path.to_path_buf(),
        source,
    })?;
    if manifest.version != BUNDLE_VERSION {
        return Err(LoadError::Version {
            found: manifest.version,
            expected: BUNDLE_VERSION,
        });
    }
    if manifest.dtype != DTYPE_F32LE {
        return Err(LoadError::Dtype(manifest.dtype));
    }
    if manifest.dim == 0 {
        return Err(LoadError::ZeroDim);
    }
    if manifest.meta.len() != manifest.count {
        return Err(LoadError::MetaCount {
            meta: manifest.meta.len(),
            count: manifest.count,
        });
    }

    let payload_path = resolve_payload(manifest_path, &manifest.payload);
    let bytes = fs::read(&payload_path).map_err(io_err(&payload_path))?;
    let expected = (manifest.count * manifest.dim * 4) as u64;
    if bytes.len() as u64 != expected {
        return Err(LoadError::SizeMismatch {
            expected,
            found: bytes.len() as u64,
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    EmbeddingTable::new(manifest.dim, data, manifest.meta)
}

fn resolve_payload(manifest_path: &Path, payload: &str) -> PathBuf {
    match manifest_path.parent() {
        Some(dir) => dir.join(payload),
        None => PathBuf::from(payload),
    }
}

/// Writes the payload and manifest; the payload lands beside the manifest.
pub fn write_bundle(table: &EmbeddingTable, manifest_path: impl AsRef<Path>) -> Result<()> {
    let manifest_path = manifest_path.as_ref();
    let payload = payload_name(manifest_path);
    let payload_path = resolve_payload(manifest_path, &payload);

    let mut bytes = Vec::with_capacity(table.data.len() * 4);
    for v in &table.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_atomic(&payload_path, &bytes)?;

    let manifest = Manifest {
        version: BUNDLE_VERSION,
        dim: table.dim,
        count: table.len(),
        dtype: DTYPE_F32LE.to_owned(),
        payload,
        meta: table.meta.clone(),
    };
    let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    json.push(b'\n');
    write_atomic(manifest_path, &json)
}

/// Write to a sibling temp file, then rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let wrap = |source| Error::Write {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(wrap)?;
    }
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(
        ".{file_name}.tmp.{}.{:?}",
        std::process::id(),
        std::thread::current().id()
    ));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(wrap)
}
