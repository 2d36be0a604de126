//! Field snapshots on disk.
//!
//! Binary layout, little endian: the 8-byte magic `CSAVFLD1`, `Nx` and `Ny`
//! as `u32`, `Lx` and `Ly` as `f64`, then `Nx·Ny` `f64` values in row-major
//! order (`x` fastest). The CSV export has columns `i,j,x,y,value`.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::grid::{make_grid, PeriodicGrid, ScalarField};

pub const MAGIC: &[u8; 8] = b"CSAVFLD1";
pub const HEADER_LEN: usize = 32;

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

pub fn write_binary<W: Write>(field: &ScalarField, mut out: W) -> io::Result<()> {
    let g = field.grid();
    let nx = u32::try_from(g.nx()).map_err(|_| invalid("nx exceeds u32"))?;
    let ny = u32::try_from(g.ny()).map_err(|_| invalid("ny exceeds u32"))?;
    out.write_all(MAGIC)?;
    out.write_all(&nx.to_le_bytes())?;
    out.write_all(&ny.to_le_bytes())?;
    out.write_all(&g.lx().to_le_bytes())?;
    out.write_all(&g.ly().to_le_bytes())?;
    for v in field.values() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a snapshot, building a fresh grid from its header.
pub fn read_binary<R: Read>(mut input: R) -> io::Result<ScalarField> {
    let mut header = [0u8; HEADER_LEN];
    input.read_exact(&mut header)?;
    if &header[..8] != MAGIC {
        return Err(invalid("bad snapshot magic"));
    }
    let nx = u32::from_le_bytes(header[8..12].try_into().expect("4 bytes")) as usize;
    let ny = u32::from_le_bytes(header[12..16].try_into().expect("4 bytes")) as usize;
    let lx = f64::from_le_bytes(header[16..24].try_into().expect("8 bytes"));
    let ly = f64::from_le_bytes(header[24..32].try_into().expect("8 bytes"));
    let grid = make_grid(lx, ly, nx, ny).map_err(|e| invalid(e.to_string()))?;
    read_values(input, &grid)
}

fn read_values<R: Read>(mut input: R, grid: &Arc<PeriodicGrid>) -> io::Result<ScalarField> {
    let mut values = Vec::with_capacity(grid.len());
    let mut buf = [0u8; 8];
    for _ in 0..grid.len() {
        input.read_exact(&mut buf)?;
        values.push(f64::from_le_bytes(buf));
    }
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(invalid(format!("{} trailing bytes after snapshot", rest.len())));
    }
    ScalarField::from_values(grid, values).map_err(|e| invalid(e.to_string()))
}

pub fn write_csv<W: Write>(field: &ScalarField, mut out: W) -> io::Result<()> {
    let g = field.grid();
    writeln!(out, "i,j,x,y,value")?;
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            let v = field.values()[g.index(i, j)];
            writeln!(out, "{i},{j},{:.17e},{:.17e},{v:.17e}", g.x(i), g.y(j))?;
        }
    }
    Ok(())
}

pub fn save_binary(field: &ScalarField, path: &Path) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_binary(field, &mut w)?;
    w.flush()
}

pub fn load_binary(path: &Path) -> io::Result<ScalarField> {
    read_binary(BufReader::new(File::open(path)?))
}

pub fn save_csv(field: &ScalarField, path: &Path) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_csv(field, &mut w)?;
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip_is_exact() {
        let g = make_grid(1.5, 2.0, 8, 6).unwrap();
        let f = ScalarField::from_fn(&g, |x, y| (3.0 * x).sin() * y.exp() + 1e-300);
        let mut buf = Vec::new();
        write_binary(&f, &mut buf).unwrap();
        assert_eq!(buf.len(), HEADER_LEN + 8 * 48);
        assert_eq!(&buf[..8], MAGIC);
        let back = read_binary(buf.as_slice()).unwrap();
        assert_eq!(back.values(), f.values());
        assert_eq!(back.grid().lx(), 1.5);
        assert_eq!(back.grid().ny(), 6);
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let g = make_grid(1.0, 1.0, 4, 4).unwrap();
        let mut buf = Vec::new();
        write_binary(&ScalarField::zeros(&g), &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_binary(bad.as_slice()).is_err());
        assert!(read_binary(&buf[..buf.len() - 3]).is_err());
        let mut long = buf;
        long.push(0);
        assert!(read_binary(long.as_slice()).is_err());
    }

    #[test]
    fn csv_has_one_row_per_node() {
        let g = make_grid(1.0, 1.0, 4, 4).unwrap();
        let mut buf = Vec::new();
        write_csv(&ScalarField::constant(&g, 2.0), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 17);
        assert!(text.lines().nth(2).unwrap().starts_with("1,0,2.5"));
    }
}
