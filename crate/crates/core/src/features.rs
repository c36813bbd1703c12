//! Per-patch feature vectors.
//!
//! Features are produced externally (or synthetically) and stored as 32-bit
//! floats; every statistic downstream widens to 64-bit. The on-disk format is
//! little-endian binary: magic `PBFV`, format version `u32`, count `u64`,
//! dimension `u32`, then `count` records of `patch_id u64` followed by
//! `dimension` `f32` values.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"PBFV";
pub const FEATURE_VERSION: u32 = 1;

/// Immutable feature store; one vector per patch id, uniform dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    dim: usize,
    ids: Vec<u64>,
    data: Vec<f32>,
    normalized: bool,
    component_min: f64,
    component_max: f64,
}

impl FeatureStore {
    /// Build a store from `(patch_id, vector)` rows. Rows are sorted by id;
    /// duplicate ids and dimension mismatches are rejected.
    pub fn from_rows(mut rows: Vec<(u64, Vec<f32>)>) -> Result<FeatureStore> {
        let Some(dim) = rows.first().map(|(_, v)| v.len()) else {
            return Ok(FeatureStore {
                dim: 0,
                ids: Vec::new(),
                data: Vec::new(),
                normalized: false,
                component_min: 0.0,
                component_max: 0.0,
            });
        };
        if dim == 0 {
            return Err(Error::Data("feature dimension must be positive".into()));
        }
        rows.sort_by_key(|(id, _)| *id);
        let mut ids = Vec::with_capacity(rows.len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (id, values) in rows {
            if values.len() != dim {
                return Err(Error::Data(format!(
                    "patch {id}: dimension {} differs from store dimension {dim}",
                    values.len()
                )));
            }
            if let Some(last) = ids.last() {
                if *last == id {
                    return Err(Error::Data(format!("duplicate patch_id {id}")));
                }
            }
            for &v in &values {
                if !v.is_finite() {
                    return Err(Error::Data(format!("patch {id}: non-finite component {v}")));
                }
            }
            ids.push(id);
            data.extend_from_slice(&values);
        }
        let mut store = FeatureStore {
            dim,
            ids,
            data,
            normalized: false,
            component_min: 0.0,
            component_max: 0.0,
        };
        store.recompute_range();
        Ok(store)
    }

    fn recompute_range(&mut self) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.data {
            let v = f64::from(v);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if self.data.is_empty() {
            lo = 0.0;
            hi = 0.0;
        }
        self.component_min = lo;
        self.component_max = hi;
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Global component range across the whole store, used when binning
    /// vectors into probability distributions.
    pub fn component_range(&self) -> (f64, f64) {
        (self.component_min, self.component_max)
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    fn row_index(&self, patch_id: u64) -> Option<usize> {
        self.ids.binary_search(&patch_id).ok()
    }

    pub fn contains(&self, patch_id: u64) -> bool {
        self.row_index(patch_id).is_some()
    }

    pub fn row(&self, patch_id: u64) -> Option<&[f32]> {
        self.row_index(patch_id)
            .map(|i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn row_f64(&self, patch_id: u64) -> Option<Vec<f64>> {
        self.row(patch_id)
            .map(|r| r.iter().map(|&v| f64::from(v)).collect())
    }

    /// Every store id must be known to the manifest.
    pub fn validate_ids(&self, known: &BTreeSet<u64>) -> Result<()> {
        for &id in &self.ids {
            if !known.contains(&id) {
                return Err(Error::Data(format!(
                    "feature store references patch {id} absent from the manifest"
                )));
            }
        }
        Ok(())
    }

    /// Scale every vector to unit Euclidean norm. Norms are computed in f64;
    /// zero vectors are rejected.
    pub fn l2_normalize(&self) -> Result<FeatureStore> {
        let mut data = Vec::with_capacity(self.data.len());
        for (i, &id) in self.ids.iter().enumerate() {
            let row = &self.data[i * self.dim..(i + 1) * self.dim];
            let norm = row
                .iter()
                .map(|&v| {
                    let v = f64::from(v);
                    v * v
                })
                .sum::<f64>()
                .sqrt();
            if norm == 0.0 {
                return Err(Error::Data(format!(
                    "cannot normalize zero vector for patch {id}"
                )));
            }
            for &v in row {
                data.push((f64::from(v) / norm) as f32);
            }
        }
        let mut store = FeatureStore {
            dim: self.dim,
            ids: self.ids.clone(),
            data,
            normalized: true,
            component_min: 0.0,
            component_max: 0.0,
        };
        store.recompute_range();
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(20 + self.ids.len() * (8 + self.dim * 4));
        bytes.extend_from_slice(FEATURE_MAGIC);
        bytes.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        bytes.extend_from_slice(&(self.ids.len() as u64).to_le_bytes());
        bytes.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for (i, &id) in self.ids.iter().enumerate() {
            bytes.extend_from_slice(&id.to_le_bytes());
            for &v in &self.data[i * self.dim..(i + 1) * self.dim] {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<FeatureStore> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let fail = |detail: &str| Error::parse(path, "feature file", detail);
        if bytes.len() < 20 {
            return Err(fail("truncated header"));
        }
        if &bytes[0..4] != FEATURE_MAGIC {
            return Err(fail("bad magic, expected PBFV"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FEATURE_VERSION {
            return Err(fail(&format!("unsupported format version {version}")));
        }
        let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
        let record = 8 + dim * 4;
        let expected = 20 + count * record;
        if bytes.len() != expected {
            return Err(fail(&format!(
                "size mismatch: expected {expected} bytes for {count} records of dimension {dim}, found {}",
                bytes.len()
            )));
        }
        let mut rows = Vec::with_capacity(count);
        for r in 0..count {
            let off = 20 + r * record;
            let id = u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
            let mut values = Vec::with_capacity(dim);
            for c in 0..dim {
                let o = off + 8 + c * 4;
                values.push(f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()));
            }
            rows.push((id, values));
        }
        FeatureStore::from_rows(rows)
    }
}
