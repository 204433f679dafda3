//! Binary adapter checkpoints and the raw matrix file used by `svd-compress`.
//!
//! Checkpoint layout, all integers and floats little-endian:
//!
//! | bytes | field |
//! |-------|-------|
//! | 4     | magic `FQL1` |
//! | 4     | format version, `u32` (currently 1) |
//! | 1     | mode, `u8` (0 frozen, 1 spatial_lora, 2 freq_lora) |
//! | 4     | `out_dim`, `u32` |
//! | 4     | `in_dim`, `u32` |
//! | 4     | rank `k`, `u32` |
//! | 8     | `alpha`, `f64` |
//! | …     | `W` (`out x in`), `up` (`out x k`), `down` (`k x in`), row-major `f64` |
//!
//! Matrix file: `u32 rows`, `u32 cols`, then `rows * cols` row-major `f64`.

use std::path::Path;

use serde::Serialize;

use crate::adapters::{AdapterParams, Mode};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const MAGIC: [u8; 4] = *b"FQL1";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 1 + 4 + 4 + 4 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub mode: Mode,
    pub out_dim: usize,
    pub in_dim: usize,
    pub rank: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub mode: Mode,
    pub alpha: f64,
    pub params: AdapterParams,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Format {
                what: self.what,
                message: format!("truncated at byte {} (need {n} more)", self.pos),
            });
        };
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let len = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or(Error::Format {
                what: self.what,
                message: format!("matrix {rows}x{cols} is too large"),
            })?;
        let data = self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Matrix::from_vec(rows, cols, data)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format {
                what: self.what,
                message: format!("{} trailing bytes", self.bytes.len() - self.pos),
            });
        }
        Ok(())
    }
}

fn dim_u32(what: &'static str, v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format {
        what,
        message: format!("dimension {v} does not fit in u32"),
    })
}

fn push_matrix(out: &mut Vec<u8>, m: &Matrix) {
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn parse_header(c: &mut Cursor<'_>) -> Result<CheckpointHeader> {
    let magic = c.take(4)?;
    if magic != MAGIC {
        return Err(Error::Format {
            what: "checkpoint",
            message: format!("bad magic {magic:?}, expected \"FQL1\""),
        });
    }
    let version = c.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format {
            what: "checkpoint",
            message: format!("unsupported format version {version}"),
        });
    }
    let mode_byte = c.take(1)?[0];
    let mode = Mode::from_u8(mode_byte).ok_or(Error::Format {
        what: "checkpoint",
        message: format!("unknown mode byte {mode_byte}"),
    })?;
    Ok(CheckpointHeader {
        version,
        mode,
        out_dim: c.u32()? as usize,
        in_dim: c.u32()? as usize,
        rank: c.u32()? as usize,
        alpha: c.f64()?,
    })
}

impl Checkpoint {
    pub fn header(&self) -> CheckpointHeader {
        CheckpointHeader {
            version: FORMAT_VERSION,
            mode: self.mode,
            out_dim: self.params.out_dim(),
            in_dim: self.params.in_dim(),
            rank: self.params.rank(),
            alpha: self.alpha,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let h = self.header();
        let p = &self.params;
        let mut out = Vec::with_capacity(
            HEADER_LEN
                + 8 * (p.w.as_slice().len() + p.up.as_slice().len() + p.down.as_slice().len()),
        );
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(h.mode.as_u8());
        for d in [h.out_dim, h.in_dim, h.rank] {
            out.extend_from_slice(&dim_u32("checkpoint", d)?.to_le_bytes());
        }
        out.extend_from_slice(&h.alpha.to_le_bytes());
        push_matrix(&mut out, &p.w);
        push_matrix(&mut out, &p.up);
        push_matrix(&mut out, &p.down);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut c = Cursor {
            bytes,
            pos: 0,
            what: "checkpoint",
        };
        let h = parse_header(&mut c)?;
        if h.out_dim == 0 || h.in_dim == 0 || h.rank == 0 {
            return Err(Error::Format {
                what: "checkpoint",
                message: format!(
                    "zero dimension in {}x{} rank {}",
                    h.out_dim, h.in_dim, h.rank
                ),
            });
        }
        let w = c.matrix(h.out_dim, h.in_dim)?;
        let up = c.matrix(h.out_dim, h.rank)?;
        let down = c.matrix(h.rank, h.in_dim)?;
        c.finish()?;
        Ok(Checkpoint {
            mode: h.mode,
            alpha: h.alpha,
            params: AdapterParams { w, up, down },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Checkpoint::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Reads only the fixed-size header of a checkpoint file.
pub fn read_checkpoint_header(bytes: &[u8]) -> Result<CheckpointHeader> {
    parse_header(&mut Cursor {
        bytes,
        pos: 0,
        what: "checkpoint",
    })
}

pub fn encode_matrix(m: &Matrix) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + 8 * m.as_slice().len());
    out.extend_from_slice(&dim_u32("matrix file", m.rows())?.to_le_bytes());
    out.extend_from_slice(&dim_u32("matrix file", m.cols())?.to_le_bytes());
    push_matrix(&mut out, m);
    Ok(out)
}

pub fn decode_matrix(bytes: &[u8]) -> Result<Matrix> {
    let mut c = Cursor {
        bytes,
        pos: 0,
        what: "matrix file",
    };
    let rows = c.u32()? as usize;
    let cols = c.u32()? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::Format {
            what: "matrix file",
            message: format!("zero dimension {rows}x{cols}"),
        });
    }
    let m = c.matrix(rows, cols)?;
    c.finish()?;
    Ok(m)
}

pub fn read_matrix_file(path: &Path) -> Result<Matrix> {
    decode_matrix(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_matrix_file(path: &Path, m: &Matrix) -> Result<()> {
    std::fs::write(path, encode_matrix(m)?).map_err(|e| Error::io(path, e))
}
