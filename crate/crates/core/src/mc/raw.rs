//! `MCVOL` raw dump: a text header line `MCVOL nx ny nz voxel_mm` followed by
//! little-endian f32 values, x fastest. Voxels are assumed cubic; the header
//! carries the x pitch.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::grid::Grid3;

use super::AbsorbedEnergyMap;

pub const MCVOL_MAGIC: &str = "MCVOL";

pub fn write_mcvol(map: &AbsorbedEnergyMap, out: &mut impl Write) -> std::io::Result<()> {
    let [nx, ny, nz] = map.grid.dims();
    writeln!(out, "{MCVOL_MAGIC} {nx} {ny} {nz} {}", map.voxel_size_mm[0])?;
    let mut buf = Vec::with_capacity(nx * ny * nz * 4);
    for &v in map.grid.as_slice() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out.write_all(&buf)
}

/// Reads a dump back as `(grid, voxel_mm)`.
pub fn read_mcvol(input: &mut impl BufRead) -> Result<(Grid3<f32>, f64)> {
    let bad = |m: &str| Error::Format {
        path: "<mcvol>".into(),
        message: m.to_string(),
    };
    let mut header = String::new();
    input
        .read_line(&mut header)
        .map_err(|e| Error::io("<mcvol>", e))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != MCVOL_MAGIC {
        return Err(bad("bad header"));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("bad dimension"));
    let dims = [parse(fields[1])?, parse(fields[2])?, parse(fields[3])?];
    let voxel: f64 = fields[4].parse().map_err(|_| bad("bad voxel size"))?;
    let n = dims[0] * dims[1] * dims[2];
    let mut bytes = vec![0u8; n * 4];
    input
        .read_exact(&mut bytes)
        .map_err(|_| bad("truncated data"))?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((Grid3::from_vec(dims, data)?, voxel))
}
