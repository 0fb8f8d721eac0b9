//! Parameter tensors and the on-disk blob store.
//!
//! A blob store is a directory holding `index.json`, which maps each
//! parameter name to `{"file": <relative path>, "shape": [..]}`, plus one raw
//! file per parameter containing little-endian IEEE-754 `f32` values in
//! row-major order. Weights are laid out OWHC.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl ParamTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        ParamTensor { shape, data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

pub type ParamStore = BTreeMap<String, ParamTensor>;

#[derive(Debug, Serialize, Deserialize)]
struct IndexEntry {
    file: String,
    shape: Vec<usize>,
}

pub const INDEX_FILE: &str = "index.json";

pub fn encode_blob(data: &[f32]) -> Vec<u8> {
    data.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode_blob(bytes: &[u8]) -> Result<Vec<f32>> {
    if !bytes.len().is_multiple_of(4) {
        return Err(Error::Schema(format!(
            "blob length {} is not a multiple of 4",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn load_blob_store(dir: &Path) -> Result<ParamStore> {
    let index: BTreeMap<String, IndexEntry> =
        serde_json::from_slice(&fs::read(dir.join(INDEX_FILE))?)?;
    let mut store = ParamStore::new();
    for (name, entry) in index {
        let bytes = fs::read(dir.join(&entry.file))
            .map_err(|_| Error::DanglingRef(name.clone()))?;
        let data = decode_blob(&bytes)?;
        let expected: usize = entry.shape.iter().product();
        if data.len() != expected {
            return Err(Error::Schema(format!(
                "blob `{name}` holds {} values but shape {:?} needs {expected}",
                data.len(),
                entry.shape
            )));
        }
        store.insert(name, ParamTensor::new(entry.shape, data));
    }
    Ok(store)
}

fn file_name_for(name: &str) -> String {
    let safe: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect();
    format!("{safe}.bin")
}

pub fn save_blob_store(dir: &Path, store: &ParamStore) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut index = BTreeMap::new();
    let mut used = std::collections::BTreeSet::new();
    for (name, t) in store {
        let mut file = file_name_for(name);
        let mut n = 1;
        while !used.insert(file.clone()) {
            file = format!("{}_{n}.bin", file.trim_end_matches(".bin"));
            n += 1;
        }
        fs::write(dir.join(&file), encode_blob(&t.data))?;
        index.insert(
            name.clone(),
            IndexEntry {
                file,
                shape: t.shape.clone(),
            },
        );
    }
    fs::write(dir.join(INDEX_FILE), serde_json::to_vec_pretty(&index)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_bytes_are_little_endian_f32() {
        let bytes = encode_blob(&[1.0, -2.5]);
        assert_eq!(bytes, vec![0, 0, 0x80, 0x3f, 0, 0, 0x20, 0xc0]);
        assert_eq!(decode_blob(&bytes).unwrap(), vec![1.0, -2.5]);
        assert!(decode_blob(&bytes[..3]).is_err());
    }

    #[test]
    fn store_round_trips_through_directory() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = ParamStore::new();
        store.insert("c1.w".into(), ParamTensor::new(vec![2, 1, 1, 3], (0..6).map(|v| v as f32).collect()));
        store.insert("c1/b".into(), ParamTensor::new(vec![2], vec![0.5, -0.5]));
        save_blob_store(dir.path(), &store).unwrap();
        assert_eq!(load_blob_store(dir.path()).unwrap(), store);
    }

    #[test]
    fn missing_blob_file_is_dangling() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join(INDEX_FILE),
            r#"{"w": {"file": "nope.bin", "shape": [1]}}"#,
        )
        .unwrap();
        assert!(matches!(load_blob_store(dir.path()), Err(Error::DanglingRef(n)) if n == "w"));
    }
}
