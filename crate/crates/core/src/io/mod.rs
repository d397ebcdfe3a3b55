//! Checkpoint and plot files, and the output comparator.
//!
//! Layout (all integers little-endian):
//!
//! | bytes | content |
//! |---|---|
//! | 4 | magic `FLXD` |
//! | 4 | format version, u32 |
//! | 4 | dims, u32 |
//! | 12 | blocks per axis, 3 × u32 |
//! | 12 | cells per block per axis (nxb, nyb, nzb), 3 × u32 |
//! | 8 | step, u64 |
//! | 8 | time, f64 |
//! | 4 | variable count, u32 |
//! | … | per variable: name length u16, UTF-8 name, centering u8, persistence u8 |
//! | … | per variable, per block in tile order: owned points as f64, x fastest |
//! | 4 | CRC-32 of every preceding byte |
//!
//! Centering codes are 0 center, 1–3 faces x–z; persistence codes are
//! 0 checkpoint, 1 plot, 2 scratch.

use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::grid::{BlockGrid, Centering, Persistence, VarId};

pub const MAGIC: &[u8; 4] = b"FLXD";
pub const VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IoError {
    #[error("i/o: {0}")]
    Io(String),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("file truncated")]
    Truncated,
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error("geometry mismatch: file has {file}, run has {run}")]
    GeometryMismatch { file: String, run: String },
    #[error("checkpoint variable `{0}` is not registered in this run")]
    UnknownVariable(String),
    #[error("files are not comparable: {0}")]
    Incompatible(String),
}

impl From<std::io::Error> for IoError {
    fn from(e: std::io::Error) -> Self {
        IoError::Io(e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VarEntry {
    pub name: String,
    pub centering: Centering,
    pub persistence: Persistence,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Header {
    pub dims: usize,
    pub nblocks: [usize; 3],
    pub cells: [usize; 3],
    pub step: u64,
    pub time: f64,
    pub vars: Vec<VarEntry>,
}

impl Header {
    pub fn block_count(&self) -> usize {
        self.nblocks[..self.dims].iter().product()
    }

    /// Owned points of one variable on one block.
    pub fn points_per_block(&self, centering: Centering) -> usize {
        self.checked_total(centering).expect("geometry overflow") / self.block_count()
    }

    /// Owned points of one variable over all blocks.
    fn checked_total(&self, centering: Centering) -> Option<usize> {
        let mut n: usize = 1;
        for a in 0..3 {
            let c = if a < self.dims { self.cells[a] } else { 1 };
            n = n.checked_mul(c + usize::from(a < self.dims && centering.face_axis() == Some(a)))?;
        }
        self.nblocks[..self.dims].iter().try_fold(n, |acc, &b| acc.checked_mul(b))
    }

    fn geometry(&self) -> String {
        format!("{}-D, blocks {:?}, cells {:?}", self.dims, &self.nblocks[..self.dims], &self.cells[..self.dims])
    }
}

/// Decoded file contents; `data[v]` concatenates every block of variable `v`.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: Header,
    pub data: Vec<Vec<f64>>,
}

fn centering_code(c: Centering) -> u8 {
    match c {
        Centering::Center => 0,
        Centering::FaceX => 1,
        Centering::FaceY => 2,
        Centering::FaceZ => 3,
    }
}

fn persistence_code(p: Persistence) -> u8 {
    match p {
        Persistence::Checkpoint => 0,
        Persistence::Plot => 1,
        Persistence::Scratch => 2,
    }
}

impl Checkpoint {
    /// Snapshot of the listed variables.
    pub fn capture(grid: &BlockGrid, ids: &[VarId], step: u64, time: f64) -> Self {
        let d = grid.domain();
        let vars = ids
            .iter()
            .map(|&id| {
                let s = grid.registry().spec(id);
                VarEntry { name: s.name.clone(), centering: s.centering, persistence: s.persistence }
            })
            .collect();
        let data = ids
            .iter()
            .map(|&id| {
                let mut v = Vec::new();
                for t in grid.tiles() {
                    let f = t.field(id);
                    f.for_each_interior(|p, _| v.push(f.get(p)));
                }
                v
            })
            .collect();
        let mut cells = d.cells;
        let mut nblocks = d.nblocks;
        for a in d.dims..3 {
            cells[a] = 1;
            nblocks[a] = 1;
        }
        Checkpoint {
            header: Header { dims: d.dims, nblocks, cells, step, time, vars },
            data,
        }
    }

    /// Every variable with checkpoint persistence that lives on an active
    /// axis.
    pub fn capture_checkpoint(grid: &BlockGrid, step: u64, time: f64) -> Self {
        let dims = grid.dims();
        let ids: Vec<VarId> = grid
            .registry()
            .iter()
            .filter(|(_, s)| s.persistence == Persistence::Checkpoint)
            .filter(|(_, s)| s.centering.face_axis().is_none_or(|a| a < dims))
            .map(|(id, _)| id)
            .collect();
        Checkpoint::capture(grid, &ids, step, time)
    }

    pub fn encode(&self) -> Vec<u8> {
        let h = &self.header;
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        b.extend_from_slice(&(h.dims as u32).to_le_bytes());
        for v in h.nblocks.iter().chain(&h.cells) {
            b.extend_from_slice(&(*v as u32).to_le_bytes());
        }
        b.extend_from_slice(&h.step.to_le_bytes());
        b.extend_from_slice(&h.time.to_le_bytes());
        b.extend_from_slice(&(h.vars.len() as u32).to_le_bytes());
        for v in &h.vars {
            b.extend_from_slice(&(v.name.len() as u16).to_le_bytes());
            b.extend_from_slice(v.name.as_bytes());
            b.push(centering_code(v.centering));
            b.push(persistence_code(v.persistence));
        }
        for vals in &self.data {
            for x in vals {
                b.extend_from_slice(&x.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&b);
        b.extend_from_slice(&crc.to_le_bytes());
        b
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, IoError> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(if bytes.len() < 4 { IoError::Truncated } else { IoError::BadMagic });
        }
        if bytes.len() < 8 {
            return Err(IoError::Truncated);
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(IoError::Checksum { stored, computed });
        }
        let mut r = Reader { b: body, at: 4 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(IoError::UnsupportedVersion(version));
        }
        let dims = r.u32()? as usize;
        if !(2..=3).contains(&dims) {
            return Err(IoError::Malformed(format!("dims = {dims}")));
        }
        let mut nblocks = [0; 3];
        let mut cells = [0; 3];
        for v in nblocks.iter_mut().chain(cells.iter_mut()) {
            *v = r.u32()? as usize;
            if *v == 0 {
                return Err(IoError::Malformed("zero block or cell count".into()));
            }
        }
        let step = r.u64()?;
        let time = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let nvars = r.u32()? as usize;
        let mut vars = Vec::new();
        for _ in 0..nvars {
            let len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| IoError::Malformed("variable name is not UTF-8".into()))?
                .to_string();
            let centering = match r.take(1)?[0] {
                0 => Centering::Center,
                1 => Centering::FaceX,
                2 => Centering::FaceY,
                3 => Centering::FaceZ,
                c => return Err(IoError::Malformed(format!("centering code {c}"))),
            };
            let persistence = match r.take(1)?[0] {
                0 => Persistence::Checkpoint,
                1 => Persistence::Plot,
                2 => Persistence::Scratch,
                c => return Err(IoError::Malformed(format!("persistence code {c}"))),
            };
            if centering.face_axis().is_some_and(|a| a >= dims) {
                return Err(IoError::Malformed(format!("`{name}` is centered on a missing axis")));
            }
            vars.push(VarEntry { name, centering, persistence });
        }
        let header = Header { dims, nblocks, cells, step, time, vars };
        let mut data = Vec::with_capacity(nvars);
        for v in &header.vars {
            let n = header
                .checked_total(v.centering)
                .filter(|n| n.checked_mul(8).is_some_and(|b| b <= r.remaining()))
                .ok_or(IoError::Truncated)?;
            let raw = r.take(n * 8)?;
            data.push(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect());
        }
        if r.remaining() != 0 {
            return Err(IoError::Malformed(format!("{} trailing bytes", r.remaining())));
        }
        Ok(Checkpoint { header, data })
    }

    /// Writes the file contents back into `grid`. Variables absent from the
    /// file are left untouched.
    pub fn restore(&self, grid: &mut BlockGrid) -> Result<(), IoError> {
        let h = &self.header;
        let d = grid.domain();
        let run = Checkpoint::capture(grid, &[], 0, 0.0).header;
        if h.dims != d.dims || h.nblocks != run.nblocks || h.cells != run.cells {
            return Err(IoError::GeometryMismatch { file: h.geometry(), run: run.geometry() });
        }
        let mut ids = Vec::new();
        for v in &h.vars {
            let id = grid.var(&v.name).map_err(|_| IoError::UnknownVariable(v.name.clone()))?;
            if grid.registry().spec(id).centering != v.centering {
                return Err(IoError::UnknownVariable(v.name.clone()));
            }
            ids.push(id);
        }
        for (id, vals) in ids.into_iter().zip(&self.data) {
            let mut it = vals.iter();
            for t in grid.tiles_mut() {
                let f = t.field_mut(id);
                let pts: Vec<_> = f.interior_points().collect();
                for p in pts {
                    f.set(p[0], p[1], p[2], *it.next().expect("length checked at decode"));
                }
            }
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        Checkpoint::decode(&std::fs::read(path)?)
    }

    pub fn variable(&self, name: &str) -> Option<&[f64]> {
        self.header.vars.iter().position(|v| v.name == name).map(|i| self.data[i].as_slice())
    }
}

struct Reader<'a> {
    b: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IoError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.b.len()).ok_or(IoError::Truncated)?;
        let s = &self.b[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, IoError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.b.len() - self.at
    }
}

pub fn checkpoint_name(basenm: &str, n: usize) -> String {
    format!("{basenm}chk_{n:04}")
}

pub fn plot_name(basenm: &str, n: usize) -> String {
    format!("{basenm}plt_{n:04}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct VarComparison {
    pub name: String,
    pub max_abs: f64,
    pub l2: f64,
    /// Block index and owned-point offset of the largest error.
    pub location: Option<(usize, usize)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Success,
    Failure,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Success => "SUCCESS",
            Verdict::Failure => "FAILURE",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    pub vars: Vec<VarComparison>,
    pub tolerance: f64,
    pub verdict: Verdict,
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<16} {:>14} {:>14}  location", "variable", "max abs", "l2")?;
        for v in &self.vars {
            let loc = v.location.map_or("-".to_string(), |(b, i)| format!("block {b} point {i}"));
            writeln!(f, "{:<16} {:>14.6e} {:>14.6e}  {loc}", v.name, v.max_abs, v.l2)?;
        }
        writeln!(f, "tolerance {:e}", self.tolerance)?;
        write!(f, "{}", self.verdict)
    }
}

/// Per-variable max-abs and RMS differences; SUCCESS iff every max-abs
/// error is within `tol`. NaN differences always fail.
pub fn compare(a: &Checkpoint, b: &Checkpoint, tol: f64) -> Result<ComparisonReport, IoError> {
    let (ha, hb) = (&a.header, &b.header);
    if ha.dims != hb.dims || ha.nblocks != hb.nblocks || ha.cells != hb.cells {
        return Err(IoError::Incompatible(format!("{} vs {}", ha.geometry(), hb.geometry())));
    }
    let names = |h: &Header| h.vars.iter().map(|v| (v.name.clone(), v.centering)).collect::<Vec<_>>();
    if names(ha) != names(hb) {
        return Err(IoError::Incompatible("variable tables differ".into()));
    }
    let mut vars = Vec::new();
    let mut ok = true;
    for (k, v) in ha.vars.iter().enumerate() {
        let per_block = ha.points_per_block(v.centering);
        let (mut max_abs, mut sum2, mut location) = (0.0f64, 0.0, None);
        for (i, (x, y)) in a.data[k].iter().zip(&b.data[k]).enumerate() {
            let e = if x.to_bits() == y.to_bits() { 0.0 } else { (x - y).abs() };
            let e = if e.is_nan() { f64::INFINITY } else { e };
            sum2 += e * e;
            if e > max_abs {
                max_abs = e;
                location = Some((i / per_block, i % per_block));
            }
        }
        let l2 = (sum2 / a.data[k].len().max(1) as f64).sqrt();
        ok &= max_abs <= tol;
        vars.push(VarComparison { name: v.name.clone(), max_abs, l2, location });
    }
    Ok(ComparisonReport {
        vars,
        tolerance: tol,
        verdict: if ok { Verdict::Success } else { Verdict::Failure },
    })
}

pub fn compare_files(a: &Path, b: &Path, tol: f64) -> Result<ComparisonReport, IoError> {
    compare(&Checkpoint::read(a)?, &Checkpoint::read(b)?, tol)
}
