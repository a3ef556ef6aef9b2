//! Binary checkpoint: the network's parameter registry in order.
//!
//! ```text
//! "HINT" | version u32 | count u32 |
//!   count x ( name_len u16 | name utf-8 | dtype u8 | rank u8 | extents u32 x rank | payload )
//! ```
//!
//! All integers and payload values are little-endian. dtype 0 is f32, 1 is f64.

use std::fs;
use std::path::Path;

use hinet_core::network::Network;
use hinet_core::Scalar;

use crate::error::{HinetError, Result};

pub const MAGIC: &[u8; 4] = b"HINT";
pub const VERSION: u32 = 1;

/// One registry entry as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: Values,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Values {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl Values {
    fn len(&self) -> usize {
        match self {
            Values::F32(v) => v.len(),
            Values::F64(v) => v.len(),
        }
    }

    fn into_scalars<T: Scalar>(self) -> Vec<T> {
        match self {
            Values::F32(v) => v.into_iter().map(|x| T::from_f64(x as f64)).collect(),
            Values::F64(v) => v.into_iter().map(T::from_f64).collect(),
        }
    }
}

pub fn encode<T: Scalar>(net: &Network<T>) -> Vec<u8> {
    let params = net.params();
    let mut out = Vec::with_capacity(12 + 4 * net.count_params() * std::mem::size_of::<T>());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in &params {
        out.extend_from_slice(&(p.name.len() as u16).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.push(T::DTYPE_CODE);
        out.push(p.dims.len() as u8);
        for &d in &p.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in p.data {
            if T::DTYPE_CODE == 0 {
                out.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
            } else {
                out.extend_from_slice(&v.to_f64().to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(HinetError::Truncated {
                path: self.path.to_path_buf(),
                expected: (self.pos + n) as u64,
                actual: self.bytes.len() as u64,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn malformed(&self, reason: String) -> HinetError {
        HinetError::MalformedHeader {
            path: self.path.to_path_buf(),
            reason,
        }
    }
}

/// Parse checkpoint bytes; `path` only labels diagnostics.
pub fn decode(bytes: &[u8], path: &Path) -> Result<Vec<Entry>> {
    let mut r = Reader { bytes, pos: 0, path };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(HinetError::BadMagic {
            path: path.to_path_buf(),
            found: String::from_utf8_lossy(magic).into_owned(),
            expected: "HINT",
        });
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.malformed(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|e| r.malformed(format!("parameter name is not utf-8: {e}")))?
            .to_owned();
        let dtype = r.u8()?;
        let rank = r.u8()? as usize;
        let dims = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        let values = match dtype {
            0 => Values::F32(
                r.take(4 * n)?
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            1 => Values::F64(
                r.take(8 * n)?
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            other => return Err(r.malformed(format!("parameter {name}: unknown dtype code {other}"))),
        };
        debug_assert_eq!(values.len(), n);
        entries.push(Entry { name, dims, values });
    }
    if r.pos != bytes.len() {
        return Err(r.malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(entries)
}

/// Rebuild a network from decoded entries, converting the stored dtype to `T`.
pub fn to_network<T: Scalar>(entries: Vec<Entry>) -> Result<Network<T>> {
    let entries = entries
        .into_iter()
        .map(|e| (e.name, e.dims, e.values.into_scalars()))
        .collect();
    Ok(Network::from_params(entries, 0)?)
}

pub fn save<T: Scalar>(path: &Path, net: &Network<T>) -> Result<()> {
    fs::write(path, encode(net)).map_err(|e| HinetError::io(path, e))
}

pub fn load<T: Scalar>(path: &Path) -> Result<Network<T>> {
    let bytes = fs::read(path).map_err(|e| HinetError::io(path, e))?;
    to_network(decode(&bytes, path)?)
}
