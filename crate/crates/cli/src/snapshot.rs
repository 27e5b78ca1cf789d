//! Binary snapshot files.
//!
//! Layout, all little-endian:
//!
//! | field    | type            |
//! |----------|-----------------|
//! | magic    | `b"NLCH1"`      |
//! | version  | `u16`           |
//! | dim      | `u16`           |
//! | counts   | `u64` per axis  |
//! | lengths  | `f64` per axis  |
//! | time     | `f64`           |
//! | payload  | `f64` per cell, row-major |

use std::fs;
use std::path::Path;

use nlch_core::{Field, FieldTag, Grid};

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 5] = b"NLCH1";
pub const VERSION: u16 = 1;

pub fn encode(field: &Field, t: f64) -> Vec<u8> {
    let g = field.grid();
    let mut out = Vec::with_capacity(5 + 4 + 16 * g.dim() + 8 + 8 * g.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(g.dim() as u16).to_le_bytes());
    for &c in g.counts() {
        out.extend_from_slice(&(c as u64).to_le_bytes());
    }
    for &l in g.lengths() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out.extend_from_slice(&t.to_le_bytes());
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> std::result::Result<[u8; N], String> {
        let end = self.pos + N;
        let chunk = self.bytes.get(self.pos..end).ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        self.pos = end;
        Ok(chunk.try_into().unwrap())
    }
}

pub fn decode(bytes: &[u8]) -> std::result::Result<(Field, f64), String> {
    let mut r = Reader { bytes, pos: 0 };
    if &r.take::<5>()? != MAGIC {
        return Err("bad magic".into());
    }
    let version = u16::from_le_bytes(r.take()?);
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let dim = u16::from_le_bytes(r.take()?) as usize;
    if !(1..=2).contains(&dim) {
        return Err(format!("unsupported dimension {dim}"));
    }
    let mut counts = Vec::with_capacity(dim);
    for _ in 0..dim {
        let c = u64::from_le_bytes(r.take()?);
        counts.push(usize::try_from(c).map_err(|_| format!("count {c} too large"))?);
    }
    let mut lengths = Vec::with_capacity(dim);
    for _ in 0..dim {
        lengths.push(f64::from_le_bytes(r.take()?));
    }
    let t = f64::from_le_bytes(r.take()?);
    let grid = Grid::new(dim, &lengths, &counts).map_err(|e| e.to_string())?;
    let n = grid.len();
    if bytes.len() - r.pos != 8 * n {
        return Err(format!("payload holds {} bytes, expected {}", bytes.len() - r.pos, 8 * n));
    }
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        values.push(f64::from_le_bytes(r.take()?));
    }
    let field = Field::new(grid, values, FieldTag::OrderParameter).map_err(|e| e.to_string())?;
    Ok((field, t))
}

pub fn write(path: &Path, field: &Field, t: f64) -> Result<()> {
    fs::write(path, encode(field, t)).map_err(|e| CliError::io(path, e))
}

pub fn read(path: &Path) -> Result<(Field, f64)> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes).map_err(|message| CliError::Snapshot {
        path: path.to_path_buf(),
        message,
    })
}
