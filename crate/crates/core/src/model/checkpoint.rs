//! Binary checkpoint: `STFC`, version, model configuration as JSON, then
//! every parameter tensor as (name, rank, dims, little-endian `f32` values).

use std::fs;
use std::io::Write;
use std::path::Path;

use super::config::ModelConfig;
use super::params::ModelParams;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"STFC";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams<f32>,
}

pub fn write_checkpoint<W: Write>(config: &ModelConfig, params: &ModelParams<f32>, mut w: W) -> Result<()> {
    let json = serde_json::to_vec(config).map_err(|e| Error::Config(e.to_string()))?;
    let mut buf = Vec::with_capacity(16 + json.len() + params.parameter_count() * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    let named = params.named();
    buf.extend_from_slice(&(named.len() as u32).to_le_bytes());
    for (name, t) in named {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.dims().len() as u32).to_le_bytes());
        for &d in t.dims() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    config: &ModelConfig,
    params: &ModelParams<f32>,
) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(config, params, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::ingestion_offset(self.pos, format!("truncated {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::ingestion_offset(0, "not a checkpoint (bad magic)"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::ingestion_offset(
            4,
            format!("unsupported checkpoint version {version}"),
        ));
    }
    let len = r.u32("config length")? as usize;
    let at = r.pos;
    let config: ModelConfig = serde_json::from_slice(r.take(len, "config")?)
        .map_err(|e| Error::ingestion_offset(at, format!("bad config: {e}")))?;
    config.validate()?;
    let mut params = ModelParams::<f32>::zeros(&config);
    let count = r.u32("tensor count")? as usize;
    let expected = params.named().len();
    if count != expected {
        return Err(Error::ingestion_offset(
            r.pos - 4,
            format!("{count} tensors stored, configuration needs {expected}"),
        ));
    }
    for (name, t) in params.named_mut() {
        let at = r.pos;
        let name_len = r.u32("name length")? as usize;
        let stored = r.take(name_len, "name")?;
        if stored != name.as_bytes() {
            return Err(Error::ingestion_offset(
                at,
                format!(
                    "expected tensor {name}, found {}",
                    String::from_utf8_lossy(stored)
                ),
            ));
        }
        let rank = r.u32("rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32("dims")? as usize);
        }
        if dims != t.dims() {
            return Err(Error::ingestion_offset(
                at,
                format!("tensor {name} has dims {dims:?}, expected {:?}", t.dims()),
            ));
        }
        let payload = r.take(t.len() * 4, "tensor payload")?;
        for (v, c) in t.data_mut().iter_mut().zip(payload.chunks_exact(4)) {
            *v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::ingestion_offset(r.pos, "trailing bytes after last tensor"));
    }
    Ok(Checkpoint { config, params })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    read_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let config = ModelConfig::tiny();
        let mut params = ModelParams::<f32>::glorot(&config, 3);
        params.input_b.data_mut()[0] = f32::from_bits(0x0000_0001);
        params.out_b2.data_mut()[1] = -0.0;
        let mut buf = Vec::new();
        write_checkpoint(&config, &params, &mut buf).unwrap();
        let back = read_checkpoint(&buf).unwrap();
        assert_eq!(back.config, config);
        for (a, b) in params.tensors().iter().zip(back.params.tensors()) {
            let ab: Vec<u32> = a.data().iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u32> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(ab, bb);
        }
        let mut again = Vec::new();
        write_checkpoint(&back.config, &back.params, &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let config = ModelConfig::tiny();
        let params = ModelParams::<f32>::zeros(&config);
        let mut buf = Vec::new();
        write_checkpoint(&config, &params, &mut buf).unwrap();
        assert!(read_checkpoint(&buf[..buf.len() - 1]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(&bad).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_checkpoint(&extra).is_err());
    }
}
