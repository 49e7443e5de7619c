//! On-disk formats.
//!
//! Grid file (`ISACGRID`, little-endian):
//!
//! ```text
//! magic     8 bytes  "ISACGRID"
//! version   u32      1
//! N         u32      subcarriers
//! M         u32      symbols
//! frame     u64      frame index
//! kind      u8       0 = reference, 1 = reflected, 2 = channel
//! data      N·M × (f32 re, f32 im), row-major (subcarrier-major)
//! mask      ⌈N·M/8⌉ bytes, element n·M+m at bit (n·M+m) % 8 of byte (n·M+m) / 8
//! ```
//!
//! Periodogram file (`ISACPGRM`, little-endian):
//!
//! ```text
//! magic     8 bytes  "ISACPGRM"
//! version   u32      1
//! N'        u32      range bins
//! M'        u32      Doppler bins
//! Δf        f64      subcarrier spacing, Hz
//! T_sym     f64      symbol duration, s
//! λ         f64      wavelength, m
//! values    N'·M' × f64, row-major (range-major), Doppler axis centered
//! ```

use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::ResourceGrid;
use crate::spu::{ChannelMatrix, Detection, Periodogram};
use crate::track::TrackState;

pub const GRID_MAGIC: &[u8; 8] = b"ISACGRID";
pub const PERIODOGRAM_MAGIC: &[u8; 8] = b"ISACPGRM";
pub const FORMAT_VERSION: u32 = 1;
pub const GRID_HEADER_LEN: usize = 8 + 4 + 4 + 4 + 8 + 1;
pub const PERIODOGRAM_HEADER_LEN: usize = 8 + 4 + 4 + 4 + 3 * 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum GridKind {
    Reference = 0,
    Reflected = 1,
    Channel = 2,
}

impl TryFrom<u8> for GridKind {
    type Error = u8;

    fn try_from(v: u8) -> std::result::Result<Self, u8> {
        match v {
            0 => Ok(GridKind::Reference),
            1 => Ok(GridKind::Reflected),
            2 => Ok(GridKind::Channel),
            other => Err(other),
        }
    }
}

/// Contents of a grid file. Values carry f32 precision.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFile {
    pub kind: GridKind,
    pub frame_index: u64,
    pub data: Array2<Complex64>,
    pub mask: Array2<bool>,
}

impl GridFile {
    pub fn from_grid(kind: GridKind, frame_index: u64, grid: &ResourceGrid) -> Self {
        Self {
            kind,
            frame_index,
            data: grid.data().clone(),
            mask: grid.mask().clone(),
        }
    }

    pub fn from_channel(frame_index: u64, channel: &ChannelMatrix) -> Self {
        Self {
            kind: GridKind::Channel,
            frame_index,
            data: channel.data().clone(),
            mask: channel.mask().clone(),
        }
    }

    pub fn into_resource_grid(self) -> Result<ResourceGrid> {
        ResourceGrid::new(self.data, self.mask)
    }

    pub fn into_channel(self) -> Result<ChannelMatrix> {
        ChannelMatrix::new(self.data, self.mask)
    }

    pub fn encode(&self) -> Vec<u8> {
        let (n, m) = self.data.dim();
        let count = n * m;
        let mut out = Vec::with_capacity(GRID_HEADER_LEN + count * 8 + count.div_ceil(8));
        out.extend_from_slice(GRID_MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(n as u32).to_le_bytes());
        out.extend_from_slice(&(m as u32).to_le_bytes());
        out.extend_from_slice(&self.frame_index.to_le_bytes());
        out.push(self.kind as u8);
        for v in self.data.iter() {
            out.extend_from_slice(&(v.re as f32).to_le_bytes());
            out.extend_from_slice(&(v.im as f32).to_le_bytes());
        }
        let mut bits = vec![0u8; count.div_ceil(8)];
        for (i, _) in self.mask.iter().enumerate().filter(|(_, &b)| b) {
            bits[i / 8] |= 1 << (i % 8);
        }
        out.extend_from_slice(&bits);
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader::new(bytes, path);
        if r.take(8)? != GRID_MAGIC {
            return Err(Error::format(path, "bad magic, not an ISACGRID file"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::format(path, format!("unsupported version {version}")));
        }
        let n = r.u32()? as usize;
        let m = r.u32()? as usize;
        let frame_index = r.u64()?;
        let kind_byte = r.take(1)?[0];
        let kind = GridKind::try_from(kind_byte).map_err(|k| Error::format(path, format!("unknown kind {k}")))?;
        let count = n
            .checked_mul(m)
            .ok_or_else(|| Error::format(path, "grid dimensions overflow"))?;
        let expected = GRID_HEADER_LEN + count * 8 + count.div_ceil(8);
        if bytes.len() != expected {
            return Err(Error::format(
                path,
                format!("expected {expected} bytes for a {n}×{m} grid, found {}", bytes.len()),
            ));
        }
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            let re = r.f32()?;
            let im = r.f32()?;
            values.push(Complex64::new(re as f64, im as f64));
        }
        let bits = r.take(count.div_ceil(8))?;
        let mask: Vec<bool> = (0..count).map(|i| bits[i / 8] >> (i % 8) & 1 == 1).collect();
        Ok(Self {
            kind,
            frame_index,
            data: Array2::from_shape_vec((n, m), values).expect("length checked"),
            mask: Array2::from_shape_vec((n, m), mask).expect("length checked"),
        })
    }
}

pub fn encode_periodogram(p: &Periodogram) -> Vec<u8> {
    let (n, m) = p.shape();
    let mut out = Vec::with_capacity(PERIODOGRAM_HEADER_LEN + n * m * 8);
    out.extend_from_slice(PERIODOGRAM_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(m as u32).to_le_bytes());
    out.extend_from_slice(&p.subcarrier_spacing().to_le_bytes());
    out.extend_from_slice(&p.symbol_duration().to_le_bytes());
    out.extend_from_slice(&p.wavelength().to_le_bytes());
    for v in p.values().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_periodogram(bytes: &[u8], path: &Path) -> Result<Periodogram> {
    let mut r = Reader::new(bytes, path);
    if r.take(8)? != PERIODOGRAM_MAGIC {
        return Err(Error::format(path, "bad magic, not an ISACPGRM file"));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let n = r.u32()? as usize;
    let m = r.u32()? as usize;
    let df = r.f64()?;
    let t_sym = r.f64()?;
    let lambda = r.f64()?;
    let expected = PERIODOGRAM_HEADER_LEN + n * m * 8;
    if bytes.len() != expected {
        return Err(Error::format(
            path,
            format!("expected {expected} bytes for {n}×{m} bins, found {}", bytes.len()),
        ));
    }
    let values = (0..n * m).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let values = Array2::from_shape_vec((n, m), values).expect("length checked");
    Periodogram::from_values(values, df, t_sym, lambda).map_err(|e| Error::format(path, e.to_string()))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        Self { bytes, pos: 0, path }
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos + len;
        if end > self.bytes.len() {
            return Err(Error::format(self.path, format!("truncated at byte {}", self.bytes.len())));
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_grid(path: &Path, grid: &GridFile) -> Result<()> {
    write_atomic(path, &grid.encode())
}

pub fn read_grid(path: &Path) -> Result<GridFile> {
    GridFile::decode(&read_bytes(path)?, path)
}

pub fn write_periodogram(path: &Path, p: &Periodogram) -> Result<()> {
    write_atomic(path, &encode_periodogram(p))
}

pub fn read_periodogram(path: &Path) -> Result<Periodogram> {
    decode_periodogram(&read_bytes(path)?, path)
}

/// One `range_m,velocity_mps,power` row per bin.
pub fn periodogram_csv(p: &Periodogram) -> String {
    let mut out = String::from("range_m,velocity_mps,power\n");
    for ((i, j), v) in p.values().indexed_iter() {
        out.push_str(&format!("{},{},{}\n", p.range_axis()[i], p.velocity_axis()[j], v));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub frame: u64,
    pub range_m: f64,
    pub velocity_mps: f64,
    pub power_db: f64,
    pub bin_r: usize,
    pub bin_d: usize,
}

impl DetectionRecord {
    pub fn new(frame: u64, d: &Detection) -> Self {
        Self {
            frame,
            range_m: d.range,
            velocity_mps: d.velocity,
            power_db: crate::linear_to_db(d.power),
            bin_r: d.bin.0,
            bin_d: d.bin.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackRecord {
    pub frame: u64,
    pub id: u64,
    pub range_m: f64,
    pub speed_mps: f64,
    /// Row-major 2×2 covariance.
    pub cov: [f64; 4],
}

impl TrackRecord {
    pub fn new(frame: u64, t: &TrackState) -> Self {
        let p = t.covariance;
        Self {
            frame,
            id: t.id,
            range_m: t.range(),
            speed_mps: t.speed(),
            cov: [p[(0, 0)], p[(0, 1)], p[(1, 0)], p[(1, 1)]],
        }
    }
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

/// Parses JSON-lines, skipping blank lines. Errors carry the 1-based line.
pub fn from_jsonl<T: for<'de> Deserialize<'de>>(reader: impl BufRead, path: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    from_jsonl(std::io::BufReader::new(file), path)
}
