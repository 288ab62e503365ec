//! Checkpoint format: a JSON header (format version, config echo, signature
//! strings, parameter name -> shape table with byte offsets) followed by the
//! raw little-endian f32 arrays in declaration order. Round-trips bit-exact.

use crate::error::{Error, Result};
use crate::graddiff::params::ParameterStore;
use crate::graddiff::real::Real;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"HGCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamMeta {
    pub name: String,
    pub shape: Vec<usize>,
    /// Element offset into the data section.
    pub offset: usize,
    pub len: usize,
    pub init: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    /// Echo of the run configuration that produced the checkpoint.
    pub config: serde_json::Value,
    /// Named irrep signature strings (e.g. trunk/bottleneck layouts).
    pub signatures: BTreeMap<String, String>,
    pub params: Vec<ParamMeta>,
    pub total_len: usize,
}

pub fn save<F: Real, W: Write>(
    mut w: W,
    params: &ParameterStore<F>,
    config: serde_json::Value,
    signatures: BTreeMap<String, String>,
) -> Result<()> {
    let mut metas = Vec::new();
    let mut offset = 0usize;
    for e in params.iter() {
        metas.push(ParamMeta {
            name: e.name.clone(),
            shape: e.shape.clone(),
            offset,
            len: e.values.len(),
            init: e.init.clone(),
        });
        offset += e.values.len();
    }
    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        config,
        signatures,
        params: metas,
        total_len: offset,
    };
    let header_bytes = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    for e in params.iter() {
        for v in &e.values {
            w.write_all(&(v.as_f64() as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load<R: Read>(mut r: R) -> Result<(CheckpointHeader, ParameterStore<f32>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let mut len8 = [0u8; 8];
    r.read_exact(&mut len8)?;
    let hlen = u64::from_le_bytes(len8) as usize;
    let mut hbytes = vec![0u8; hlen];
    r.read_exact(&mut hbytes)?;
    let header: CheckpointHeader = serde_json::from_slice(&hbytes)?;
    let mut store: ParameterStore<f32> = ParameterStore::new();
    let mut data = vec![0u8; header.total_len * 4];
    r.read_exact(&mut data)?;
    for meta in &header.params {
        let mut values = Vec::with_capacity(meta.len);
        for i in 0..meta.len {
            let at = (meta.offset + i) * 4;
            values.push(f32::from_le_bytes(data[at..at + 4].try_into().unwrap()));
        }
        store.insert(&meta.name, meta.shape.clone(), values, &meta.init);
    }
    Ok((header, store))
}

pub fn save_file<F: Real>(
    path: &Path,
    params: &ParameterStore<F>,
    config: serde_json::Value,
    signatures: BTreeMap<String, String>,
) -> Result<()> {
    // Atomic write: temp file in the same directory, then rename.
    let tmp = path.with_extension("tmp");
    {
        let f = std::fs::File::create(&tmp)?;
        let mut w = std::io::BufWriter::new(f);
        save(&mut w, params, config, signatures)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_file(path: &Path) -> Result<(CheckpointHeader, ParameterStore<f32>)> {
    let f = std::fs::File::open(path)?;
    load(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_exact_roundtrip() {
        let mut params: ParameterStore<f32> = ParameterStore::new();
        params.insert("a.w", vec![2, 3], vec![0.1, -0.2, 0.3, 1.5e-7, -0.0, f32::MIN_POSITIVE], "normal");
        params.insert("b.bias", vec![2], vec![4.25, -9.5], "const(0)");
        let mut sigs = BTreeMap::new();
        sigs.insert("trunk".to_string(), "16x0+16x1+16x2".to_string());
        let cfg = serde_json::json!({"seed": 7});

        let mut buf = Vec::new();
        save(&mut buf, &params, cfg.clone(), sigs.clone()).unwrap();
        let (header, loaded) = load(buf.as_slice()).unwrap();
        assert_eq!(header.format_version, FORMAT_VERSION);
        assert_eq!(header.signatures["trunk"], "16x0+16x1+16x2");
        assert_eq!(header.config, cfg);
        for (a, b) in params.iter().zip(loaded.iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.shape, b.shape);
            for (x, y) in a.values.iter().zip(&b.values) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        // Saving the loaded store reproduces identical bytes.
        let mut buf2 = Vec::new();
        save(&mut buf2, &loaded, cfg, sigs).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn rejects_bad_magic() {
        let err = load(&b"NOPE1234"[..]).unwrap_err();
        assert_eq!(err.category(), "checkpoint");
    }
}
