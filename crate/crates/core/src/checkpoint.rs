//! Network checkpoint container.
//!
//! All integers are little-endian.
//!
//! ```text
//! magic          8 bytes   "MCSLCKPT"
//! version        u32       1
//! config_len     u32       byte length of the JSON that follows
//! config         UTF-8 JSON NetworkConfig
//! tensor_count   u32
//! tensor_count times:
//!   name_len     u32
//!   name         UTF-8, e.g. "block0.conv1.weight", "head.output.bias"
//!   rank         u32
//!   dims         rank x u64
//!   values       prod(dims) x binary32
//! ```
//!
//! Tensors appear in [`Network::tensors`] order; a reader matches them by
//! name and shape against the config it just decoded.

use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tcn::{Network, NetworkConfig};

pub const MAGIC: &[u8; 8] = b"MCSLCKPT";
pub const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn to_bytes<T: Scalar>(net: &Network<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let cfg = serde_json::to_vec(net.config()).expect("NetworkConfig serializes");
    put_u32(&mut out, cfg.len());
    out.extend_from_slice(&cfg);
    let tensors = net.tensors();
    put_u32(&mut out, tensors.len());
    for t in tensors {
        put_u32(&mut out, t.name.len());
        out.extend_from_slice(t.name.as_bytes());
        put_u32(&mut out, t.shape.len());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data {
            out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(format!("truncated at byte {} (wanted {n} more)", self.pos)),
        }
    }

    fn u32(&mut self) -> std::result::Result<usize, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> std::result::Result<usize, String> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| format!("dimension {v} too large"))
    }
}

pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Network<f32>, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err("not a checkpoint (bad magic)".into());
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let cfg_len = r.u32()?;
    let config: NetworkConfig = serde_json::from_slice(r.take(cfg_len)?)
        .map_err(|e| format!("bad network config: {e}"))?;
    let mut net = Network::<f32>::zeros(config).map_err(|e| e.to_string())?;
    let expected: Vec<(String, Vec<usize>)> =
        net.tensors().into_iter().map(|t| (t.name, t.shape)).collect();

    let count = r.u32()?;
    if count != expected.len() {
        return Err(format!("{count} tensors stored, config needs {}", expected.len()));
    }
    for ((name, shape), (_, dst)) in expected.iter().zip(net.tensors_mut()) {
        let name_len = r.u32()?;
        let stored = std::str::from_utf8(r.take(name_len)?).map_err(|_| "tensor name is not UTF-8")?;
        if stored != name {
            return Err(format!("expected tensor {name}, found {stored}"));
        }
        let rank = r.u32()?;
        let dims = (0..rank).map(|_| r.u64()).collect::<std::result::Result<Vec<_>, _>>()?;
        if &dims != shape {
            return Err(format!("tensor {name} has shape {dims:?}, expected {shape:?}"));
        }
        let raw = r.take(dst.len() * 4)?;
        for (d, chunk) in dst.iter_mut().zip(raw.chunks_exact(4)) {
            *d = f32::from_le_bytes(chunk.try_into().unwrap());
            if !d.is_finite() {
                return Err(format!("tensor {name} holds a non-finite value"));
            }
        }
    }
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Ok(net)
}

pub fn save<T: Scalar>(net: &Network<T>, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(net)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Network<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes).map_err(|msg| Error::format(path, msg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Network<f32> {
        Network::new(NetworkConfig::standard(3, 3, 2, 2, 5, 4), 21).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let net = small();
        assert_eq!(from_bytes(&to_bytes(&net)).unwrap(), net);
    }

    #[test]
    fn header_layout() {
        let bytes = to_bytes(&small());
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        let cfg_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let cfg: NetworkConfig = serde_json::from_slice(&bytes[16..16 + cfg_len]).unwrap();
        assert_eq!(&cfg, small().config());
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let bytes = to_bytes(&small());
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(from_bytes(&extra).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(from_bytes(&magic).is_err());
        let mut nan = bytes.clone();
        let n = nan.len();
        nan[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(from_bytes(&nan).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let net = small();
        save(&net, &p).unwrap();
        assert_eq!(load(&p).unwrap(), net);
        std::fs::write(&p, b"junk").unwrap();
        assert!(matches!(load(&p), Err(Error::Format { .. })));
    }
}
