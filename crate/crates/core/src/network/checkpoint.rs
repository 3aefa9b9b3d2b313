//! Checkpoint container: self-describing binary file holding the layer
//! sizes followed by each layer's weights (row-major) and biases as
//! little-endian f64. Round-trips are lossless.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{NetworkError, NetworkParams};

const MAGIC: &[u8; 8] = b"MPNCKPT\0";
const FORMAT_VERSION: u32 = 1;

pub fn save_checkpoint(params: &NetworkParams, path: &Path) -> Result<(), NetworkError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(params.layer_sizes().len() as u32).to_le_bytes())?;
    for &s in params.layer_sizes() {
        w.write_all(&(s as u32).to_le_bytes())?;
    }
    for &v in params.flat() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<NetworkParams, NetworkError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| NetworkError::Checkpoint("file too short for header".into()))?;
    if &magic != MAGIC {
        return Err(NetworkError::Checkpoint("bad magic (not a checkpoint file)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(NetworkError::Checkpoint(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let n_layers = read_u32(&mut r)? as usize;
    if n_layers < 2 || n_layers > 1024 {
        return Err(NetworkError::Checkpoint(format!("implausible layer count {n_layers}")));
    }
    let mut sizes = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        sizes.push(read_u32(&mut r)? as usize);
    }
    let total: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    let mut data = Vec::with_capacity(total);
    let mut buf = [0u8; 8];
    for i in 0..total {
        r.read_exact(&mut buf)
            .map_err(|_| NetworkError::Checkpoint(format!("truncated data: expected {total} values, got {i}")))?;
        data.push(f64::from_le_bytes(buf));
    }
    let mut tail = [0u8; 1];
    if r.read(&mut tail)? != 0 {
        return Err(NetworkError::Checkpoint("trailing bytes after parameter data".into()));
    }
    NetworkParams::from_flat(sizes, data)
}

fn read_u32(r: &mut impl Read) -> Result<u32, NetworkError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|_| NetworkError::Checkpoint("truncated header".into()))?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_lossless() {
        let dir = std::env::temp_dir().join(format!("mp_ckpt_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("net.bin");
        let p = NetworkParams::init(&[3, 7, 5, 2], 99).unwrap();
        save_checkpoint(&p, &path).unwrap();
        let q = load_checkpoint(&path).unwrap();
        assert_eq!(p.layer_sizes(), q.layer_sizes());
        for (a, b) in p.flat().iter().zip(q.flat()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn rejects_garbage_and_truncation() {
        let dir = std::env::temp_dir().join(format!("mp_ckpt_bad_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let garbage = dir.join("garbage.bin");
        std::fs::write(&garbage, b"not a checkpoint at all").unwrap();
        assert!(matches!(load_checkpoint(&garbage), Err(NetworkError::Checkpoint(_))));

        let truncated = dir.join("trunc.bin");
        let p = NetworkParams::init(&[2, 3, 1], 0).unwrap();
        save_checkpoint(&p, &truncated).unwrap();
        let bytes = std::fs::read(&truncated).unwrap();
        std::fs::write(&truncated, &bytes[..bytes.len() - 9]).unwrap();
        assert!(matches!(load_checkpoint(&truncated), Err(NetworkError::Checkpoint(_))));
        std::fs::remove_dir_all(&dir).ok();
    }
}
