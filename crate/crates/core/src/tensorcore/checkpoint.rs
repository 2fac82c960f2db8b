//! Named-parameter checkpoints.
//!
//! Layout, all little-endian: magic `CPWT`, `u32` version, `u32` parameter count, then
//! per parameter `u32` name length, UTF-8 name, `u32` rank, `u32` dims, `f32` payload.

use std::io::{Read, Write};

use super::{Result, Tensor, TensorError};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CPWT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(mut w: W, params: &[(&str, &Tensor)]) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, t) in params {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|e| TensorError::Checkpoint(format!("truncated: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Vec<(String, Tensor)>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|e| TensorError::Checkpoint(format!("truncated: {e}")))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(TensorError::Checkpoint(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(TensorError::Checkpoint(format!(
            "unsupported version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let count = read_u32(&mut r)?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)
            .map_err(|e| TensorError::Checkpoint(format!("truncated: {e}")))?;
        let name = String::from_utf8(name).map_err(|e| TensorError::Checkpoint(e.to_string()))?;
        let rank = read_u32(&mut r)? as usize;
        let shape = (0..rank)
            .map(|_| read_u32(&mut r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let mut bytes = vec![0u8; n * 4];
        r.read_exact(&mut bytes)
            .map_err(|e| TensorError::Checkpoint(format!("truncated payload of {name}: {e}")))?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.push((name, Tensor::new(shape, data)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_truncation() {
        let a = Tensor::matrix(2, 3, vec![1.0, -2.0, 3.5, 0.0, 1e-7, 9.0]).unwrap();
        let b = Tensor::matrix(1, 1, vec![42.0]).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &[("w", &a), ("bias", &b)]).unwrap();
        assert_eq!(&buf[..4], b"CPWT");
        let back = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back, vec![("w".to_string(), a), ("bias".to_string(), b)]);
        assert!(read_checkpoint(&buf[..buf.len() - 1]).is_err());
        let mut bad = buf.clone();
        bad[4] = 9;
        assert!(read_checkpoint(&bad[..]).is_err());
    }
}
