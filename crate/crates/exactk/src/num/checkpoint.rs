use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::params::ParamStore;
use super::scalar::Scalar;
use super::tensor::TensorData;

const MAGIC: &[u8; 4] = b"EXKC";
const VERSION: u32 = 1;

/// Ordered key=value hyperparameter manifest stored alongside the
/// parameter records.
pub type Manifest = Vec<(String, String)>;

/// Write a flat archive of (name, shape, little-endian f64 payload)
/// records plus a text manifest. Load is bitwise exact for f64 stores.
pub fn write_checkpoint<T: Scalar>(
    path: &Path,
    store: &ParamStore<T>,
    manifest: &Manifest,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for (name, value) in store.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(value.shape().len() as u32).to_le_bytes())?;
        for &d in value.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &x in value.data() {
            w.write_all(&x.to_f64c().to_le_bytes())?;
        }
    }
    let text: String = manifest
        .iter()
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect();
    w.write_all(&(text.len() as u32).to_le_bytes())?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// Read back a checkpoint archive as named tensors plus its manifest.
#[allow(clippy::type_complexity)]
pub fn read_checkpoint<T: Scalar>(path: &Path) -> Result<(Vec<(String, TensorData<T>)>, Manifest)> {
    let mut r = BufReader::new(File::open(path)?);
    let bad = |msg: &str| Error::Checkpoint(format!("{}: {msg}", path.display()));

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    if read_u32(&mut r)? != VERSION {
        return Err(bad("unsupported version"));
    }
    let n = read_u32(&mut r)? as usize;
    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        let name_len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| bad("non-utf8 parameter name"))?;
        let ndim = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_u32(&mut r)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        let mut buf = [0u8; 8];
        for _ in 0..numel {
            r.read_exact(&mut buf)?;
            data.push(T::of(f64::from_le_bytes(buf)));
        }
        records.push((name, TensorData::new(shape, data)));
    }
    let text_len = read_u32(&mut r)? as usize;
    let mut text = vec![0u8; text_len];
    r.read_exact(&mut text)?;
    let text = String::from_utf8(text).map_err(|_| bad("non-utf8 manifest"))?;
    let manifest = text
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            let (k, v) = l
                .split_once('=')
                .ok_or_else(|| bad("manifest line without '='"))?;
            Ok((k.to_string(), v.to_string()))
        })
        .collect::<Result<Manifest>>()?;
    Ok((records, manifest))
}

pub fn manifest_get<'a>(manifest: &'a Manifest, key: &str) -> Option<&'a str> {
    manifest
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}
