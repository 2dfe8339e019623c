use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use super::PlanarGrid;

pub const BINARY_MAGIC: &[u8; 4] = b"QBPL";
const HEADER_LEN: usize = 16;

/// 16-byte header (`QBPL`, `u32` M, two reserved `u32` zeros), then `M²`
/// little-endian `f64` values in row-major order (rows indexed by `y`).
pub fn write_binary(path: &Path, m: usize, values: &[f64]) -> io::Result<()> {
    assert_eq!(values.len(), m * m);
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&(m as u32).to_le_bytes())?;
    w.write_all(&[0u8; 8])?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()
}

pub fn read_binary(path: &Path) -> io::Result<(usize, Vec<f64>)> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < HEADER_LEN || &bytes[..4] != BINARY_MAGIC {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "missing QBPL header"));
    }
    let m = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * m * m {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "payload size does not match M"));
    }
    let values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((m, values))
}

/// `x,y,u` rows over the interior nodes.
pub fn write_xyu_csv(path: &Path, grid: &PlanarGrid, values: &[f64]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "x,y,u")?;
    for j in 0..grid.m {
        for i in 0..grid.m {
            let (x, y) = grid.coords(i, j);
            writeln!(w, "{x:.16e},{y:.16e},{:.16e}", values[j * grid.m + i])?;
        }
    }
    w.flush()
}
