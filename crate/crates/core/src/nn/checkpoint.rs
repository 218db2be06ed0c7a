//! Binary checkpoints: magic, version, a manifest of parameter names and
//! shapes, then little-endian `f32` blobs in manifest order.

use std::io::{Read, Write};

use super::layers::Layer;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FDNN";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
}

fn put_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

pub fn manifest(model: &dyn Layer) -> Vec<ManifestEntry> {
    let mut out = Vec::new();
    model.visit_params_ref(&mut |p| {
        out.push(ManifestEntry { name: p.name.clone(), shape: p.value.shape().to_vec(), trainable: p.trainable })
    });
    out
}

pub fn save<W: Write>(model: &dyn Layer, mut w: W) -> Result<()> {
    let entries = manifest(model);
    w.write_all(MAGIC)?;
    put_u32(&mut w, VERSION as usize)?;
    put_u32(&mut w, entries.len())?;
    for e in &entries {
        put_u32(&mut w, e.name.len())?;
        w.write_all(e.name.as_bytes())?;
        w.write_all(&[e.trainable as u8])?;
        put_u32(&mut w, e.shape.len())?;
        for &d in &e.shape {
            put_u32(&mut w, d)?;
        }
    }
    let mut blob = Vec::new();
    model.visit_params_ref(&mut |p| {
        for &v in p.value.data() {
            blob.extend_from_slice(&(v as f32).to_le_bytes());
        }
    });
    w.write_all(&blob)?;
    Ok(())
}

/// Load into a model of identical architecture; names and shapes must match.
pub fn load<R: Read>(model: &mut dyn Layer, mut r: R) -> Result<()> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a model checkpoint".into()));
    }
    let version = get_u32(&mut r)?;
    if version != VERSION as usize {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let count = get_u32(&mut r)?;
    let mut file_entries = Vec::with_capacity(count);
    for _ in 0..count {
        let len = get_u32(&mut r)?;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("parameter name is not UTF-8".into()))?;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let rank = get_u32(&mut r)?;
        let shape = (0..rank).map(|_| get_u32(&mut r)).collect::<Result<Vec<_>>>()?;
        file_entries.push(ManifestEntry { name, shape, trainable: flag[0] != 0 });
    }
    let expected = manifest(model);
    if expected != file_entries {
        return Err(Error::Format("checkpoint manifest does not match the model architecture".into()));
    }
    let mut values = Vec::new();
    for e in &file_entries {
        let n: usize = e.shape.iter().product();
        let mut buf = vec![0u8; n * 4];
        r.read_exact(&mut buf)?;
        values.push(buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect::<Vec<_>>());
    }
    let mut i = 0;
    model.visit_params(&mut |p| {
        p.value.data_mut().copy_from_slice(&values[i]);
        i += 1;
    });
    Ok(())
}
