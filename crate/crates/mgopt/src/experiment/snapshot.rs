//! Parameter snapshots: flat binary with a small header, then the flattened
//! parameter vector in 64-bit little-endian.
//!
//! Layout: magic `MGPS`, format version (u32), input_dim/width/num_classes/
//! depth (u32 each), dt (f64), parameter count (u64), parameters (f64 each).
//! All numeric header fields are little-endian.

use crate::network::NetSpec;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: [u8; 4] = *b"MGPS";
const VERSION: u32 = 1;

pub fn write_params(path: &Path, spec: &NetSpec, theta: &[f64]) -> io::Result<()> {
    assert_eq!(theta.len(), spec.param_len(), "parameter length mismatch");
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(spec.input_dim as u32).to_le_bytes())?;
    w.write_all(&(spec.width as u32).to_le_bytes())?;
    w.write_all(&(spec.num_classes as u32).to_le_bytes())?;
    w.write_all(&(spec.depth as u32).to_le_bytes())?;
    w.write_all(&spec.dt.to_le_bytes())?;
    w.write_all(&(theta.len() as u64).to_le_bytes())?;
    for value in theta {
        w.write_all(&value.to_le_bytes())?;
    }
    w.flush()
}

fn invalid(reason: String) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, reason)
}

pub fn read_params(path: &Path) -> io::Result<(NetSpec, Vec<f64>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(invalid(format!(
            "bad snapshot magic: expected {MAGIC:?}, found {magic:?}"
        )));
    }
    let mut u32_buf = [0u8; 4];
    let mut read_u32 = |r: &mut BufReader<File>| -> io::Result<u32> {
        r.read_exact(&mut u32_buf)?;
        Ok(u32::from_le_bytes(u32_buf))
    };
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(invalid(format!("unsupported snapshot version {version}")));
    }
    let input_dim = read_u32(&mut r)? as usize;
    let width = read_u32(&mut r)? as usize;
    let num_classes = read_u32(&mut r)? as usize;
    let depth = read_u32(&mut r)? as usize;
    let mut f64_buf = [0u8; 8];
    r.read_exact(&mut f64_buf)?;
    let dt = f64::from_le_bytes(f64_buf);
    let mut u64_buf = [0u8; 8];
    r.read_exact(&mut u64_buf)?;
    let count = u64::from_le_bytes(u64_buf) as usize;

    let spec = NetSpec::new(input_dim, width, num_classes, depth, dt);
    if count != spec.param_len() {
        return Err(invalid(format!(
            "snapshot holds {count} parameters but the header architecture needs {}",
            spec.param_len()
        )));
    }
    let mut theta = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut f64_buf)?;
        theta.push(f64::from_le_bytes(f64_buf));
    }
    Ok((spec, theta))
}
