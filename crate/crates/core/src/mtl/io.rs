//! Model container: magic, version, shape manifest, then little-endian f64 blobs.
//!
//! Layout: `MAGIC | u32 version | u32 feature_dim | u32 num_pairs | f64 xi_c | f64 xi_r |
//! u32 layer_count | (u32 rows, u32 cols) per layer | mean[d] | scale[d] |
//! per layer: weights row-major, then bias`.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::net::{Dense, MtlNet};
use super::MtlModel;
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"RISMTL\0\0";
pub const MODEL_VERSION: u32 = 1;

impl MtlModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        let u32le = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
        let f64le = |out: &mut Vec<u8>, v: f64| out.extend_from_slice(&v.to_le_bytes());
        u32le(&mut out, MODEL_VERSION as usize);
        u32le(&mut out, self.input_dim());
        u32le(&mut out, self.num_pairs());
        f64le(&mut out, self.xi_c);
        f64le(&mut out, self.xi_r);
        let layers = self.net.layers();
        u32le(&mut out, layers.len());
        for l in &layers {
            u32le(&mut out, l.outputs());
            u32le(&mut out, l.inputs());
        }
        for &v in self.feature_mean.iter().chain(&self.feature_scale) {
            f64le(&mut out, v);
        }
        for l in &layers {
            for &v in l.w.iter().chain(l.b.iter()) {
                f64le(&mut out, v);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { bytes, pos: 0 };
        if r.take(8)? != MODEL_MAGIC {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != MODEL_VERSION {
            return Err(Error::Format(format!(
                "model version {version} is not supported (expected {MODEL_VERSION})"
            )));
        }
        let d = r.u32()? as usize;
        let k = r.u32()? as usize;
        let xi_c = r.f64()?;
        let xi_r = r.f64()?;
        let count = r.u32()? as usize;
        if count < 2 {
            return Err(Error::Format(format!("{count} layers, need at least the two heads")));
        }
        let mut shapes = Vec::with_capacity(count);
        for _ in 0..count {
            shapes.push((r.u32()? as usize, r.u32()? as usize));
        }
        let trunk = count - 2;
        let top = if trunk == 0 { d } else { shapes[trunk - 1].0 };
        let mut width = d;
        for (i, &(rows, cols)) in shapes[..trunk].iter().enumerate() {
            if cols != width {
                return Err(Error::Format(format!("layer {i} takes {cols} inputs, expected {width}")));
            }
            width = rows;
        }
        if shapes[trunk] != (2 * k, top) || shapes[trunk + 1] != (k, top) {
            return Err(Error::Format("head shapes do not match the manifest".into()));
        }
        let feature_mean = r.f64s(d)?;
        let feature_scale = r.f64s(d)?;
        let mut layers = Vec::with_capacity(count);
        for &(rows, cols) in &shapes {
            let w = Array2::from_shape_vec((rows, cols), r.f64s(rows * cols)?)
                .map_err(|e| Error::Format(e.to_string()))?;
            let b = Array1::from(r.f64s(rows)?);
            layers.push(Dense { w, b });
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let reg = layers.pop().expect("count >= 2");
        let cls = layers.pop().expect("count >= 2");
        Ok(MtlModel {
            net: MtlNet { trunk: layers, cls, reg },
            feature_mean,
            feature_scale,
            xi_c,
            xi_r,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format("model file is truncated".into())),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}
