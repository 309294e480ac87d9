//! 4-D scalar volumes and label masks, plus their on-disk header/raw format.
//!
//! A dataset on disk is a small UTF-8 header of `key: value` lines next to a
//! packed little-endian payload file:
//!
//! ```text
//! format: vol4
//! dims: 96 96 96 8
//! spacing_mm: 1 1 1
//! frame_interval_s: 0.04
//! data: phantom.raw
//! dtype: f32le
//! ```
//!
//! Element `(x, y, z, t)` lives at `x + nx * (y + ny * (z + nz * t))`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Voxel counts along x, y, z and the number of frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims4 {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub nt: usize,
}

impl Dims4 {
    pub fn new(nx: usize, ny: usize, nz: usize, nt: usize) -> Self {
        Self { nx, ny, nz, nt }
    }

    pub fn frame_len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn len(&self) -> usize {
        self.frame_len() * self.nt
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spatial(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize, t: usize) -> usize {
        x + self.nx * (y + self.ny * (z + self.nz * t))
    }
}

/// Shared geometry of volumes and masks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub dims: Dims4,
    pub spacing_mm: [f64; 3],
    pub frame_interval_s: f64,
}

impl Geometry {
    pub fn new(dims: Dims4, spacing_mm: [f64; 3], frame_interval_s: f64) -> Result<Self> {
        let g = Self {
            dims,
            spacing_mm,
            frame_interval_s,
        };
        g.validate()?;
        Ok(g)
    }

    /// Unit spacing, static.
    pub fn unit(dims: Dims4) -> Result<Self> {
        Self::new(dims, [1.0; 3], 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dims;
        if d.nx == 0 || d.ny == 0 || d.nz == 0 || d.nt == 0 {
            return Err(Error::Domain(format!(
                "all dims must be >= 1, got {} {} {} {}",
                d.nx, d.ny, d.nz, d.nt
            )));
        }
        if !self.spacing_mm.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(Error::Domain(format!(
                "spacing must be positive, got {:?}",
                self.spacing_mm
            )));
        }
        if !(self.frame_interval_s.is_finite() && self.frame_interval_s >= 0.0) {
            return Err(Error::Domain(format!(
                "frame interval must be >= 0, got {}",
                self.frame_interval_s
            )));
        }
        Ok(())
    }

    /// Same dims and spacing, ignoring frame timing.
    pub fn same_grid(&self, other: &Geometry) -> bool {
        self.dims == other.dims && self.spacing_mm == other.spacing_mm
    }
}

/// 4-D scalar field of 32-bit reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume4 {
    geometry: Geometry,
    data: Vec<f32>,
}

impl Volume4 {
    pub fn new(geometry: Geometry, data: Vec<f32>) -> Result<Self> {
        geometry.validate()?;
        if data.len() != geometry.dims.len() {
            return Err(Error::Size(format!(
                "expected {} elements, got {}",
                geometry.dims.len(),
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value at element {i}")));
        }
        Ok(Self { geometry, data })
    }

    pub fn filled(geometry: Geometry, value: f32) -> Result<Self> {
        Self::new(geometry, vec![value; geometry.dims.len()])
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn dims(&self) -> Dims4 {
        self.geometry.dims
    }

    pub fn spacing_mm(&self) -> [f64; 3] {
        self.geometry.spacing_mm
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        let n = self.geometry.dims.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn get(&self, x: usize, y: usize, z: usize, t: usize) -> f32 {
        self.data[self.geometry.dims.index(x, y, z, t)]
    }

    /// Applies `f` to every value. Fails if the result is not finite.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Result<Self> {
        Self::new(self.geometry, self.data.iter().map(|&v| f(v)).collect())
    }
}

/// Voxel class codes stored in a [`Mask4`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Label {
    Background = 0,
    BloodPool = 1,
    Myocardium = 2,
}

impl Label {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Label::Background),
            1 => Some(Label::BloodPool),
            2 => Some(Label::Myocardium),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }
}

/// 4-D label field with codes in {0, 1, 2}.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask4 {
    geometry: Geometry,
    labels: Vec<u8>,
}

impl Mask4 {
    pub fn new(geometry: Geometry, labels: Vec<u8>) -> Result<Self> {
        geometry.validate()?;
        if labels.len() != geometry.dims.len() {
            return Err(Error::Size(format!(
                "expected {} labels, got {}",
                geometry.dims.len(),
                labels.len()
            )));
        }
        if let Some(i) = labels.iter().position(|&l| Label::from_code(l).is_none()) {
            return Err(Error::Data(format!(
                "invalid label {} at element {i}",
                labels[i]
            )));
        }
        Ok(Self { geometry, labels })
    }

    pub fn empty(geometry: Geometry) -> Result<Self> {
        Self::new(geometry, vec![0; geometry.dims.len()])
    }

    /// Builds a mask where `label` marks every voxel with `fg[i] == true`.
    pub fn from_binary(geometry: Geometry, fg: &[bool], label: Label) -> Result<Self> {
        Self::new(
            geometry,
            fg.iter()
                .map(|&b| if b { label.code() } else { 0 })
                .collect(),
        )
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn dims(&self) -> Dims4 {
        self.geometry.dims
    }

    pub fn spacing_mm(&self) -> [f64; 3] {
        self.geometry.spacing_mm
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn frame(&self, t: usize) -> &[u8] {
        let n = self.geometry.dims.frame_len();
        &self.labels[t * n..(t + 1) * n]
    }

    pub fn get(&self, x: usize, y: usize, z: usize, t: usize) -> u8 {
        self.labels[self.geometry.dims.index(x, y, z, t)]
    }

    /// Binary frame selecting voxels whose code is in `codes`.
    pub fn frame_binary(&self, t: usize, codes: &[u8]) -> Vec<bool> {
        self.frame(t).iter().map(|l| codes.contains(l)).collect()
    }
}

const VOL_FORMAT: &str = "vol4";
const MASK_FORMAT: &str = "mask4";
const VOL_DTYPE: &str = "f32le";
const MASK_DTYPE: &str = "u8";

struct Header {
    format: String,
    geometry: Geometry,
    data: PathBuf,
    dtype: String,
}

fn raw_path_for(header: &Path) -> PathBuf {
    let raw = header.with_extension("raw");
    if raw == header {
        header.with_extension("raw.data")
    } else {
        raw
    }
}

fn write_header(path: &Path, format: &str, dtype: &str, g: &Geometry) -> Result<PathBuf> {
    let raw = raw_path_for(path);
    let raw_name = raw
        .file_name()
        .ok_or_else(|| Error::Format(format!("bad header path {}", path.display())))?
        .to_string_lossy()
        .into_owned();
    let d = g.dims;
    let mut text = String::new();
    let _ = writeln!(text, "format: {format}");
    let _ = writeln!(text, "dims: {} {} {} {}", d.nx, d.ny, d.nz, d.nt);
    let [sx, sy, sz] = g.spacing_mm;
    let _ = writeln!(text, "spacing_mm: {sx} {sy} {sz}");
    let _ = writeln!(text, "frame_interval_s: {}", g.frame_interval_s);
    let _ = writeln!(text, "data: {raw_name}");
    let _ = writeln!(text, "dtype: {dtype}");
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(raw)
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str, n: usize) -> Result<Vec<T>> {
    let parts: Vec<&str> = value.split_whitespace().collect();
    if parts.len() != n {
        return Err(Error::Format(format!(
            "`{key}` needs {n} values, got {}",
            parts.len()
        )));
    }
    parts
        .iter()
        .map(|p| {
            p.parse::<T>()
                .map_err(|_| Error::Format(format!("`{key}`: cannot parse `{p}`")))
        })
        .collect()
}

fn read_header(path: &Path) -> Result<Header> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut format = None;
    let mut dims = None;
    let mut spacing = None;
    let mut interval = None;
    let mut data = None;
    let mut dtype = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once(':').ok_or_else(|| {
            Error::Format(format!("line {}: expected `key: value`", lineno + 1))
        })?;
        let value = value.trim();
        match key.trim() {
            "format" => format = Some(value.to_string()),
            "dims" => dims = Some(parse_list::<usize>("dims", value, 4)?),
            "spacing_mm" => spacing = Some(parse_list::<f64>("spacing_mm", value, 3)?),
            "frame_interval_s" => {
                interval = Some(parse_list::<f64>("frame_interval_s", value, 1)?[0])
            }
            "data" => data = Some(value.to_string()),
            "dtype" => dtype = Some(value.to_string()),
            other => return Err(Error::Format(format!("unknown header key `{other}`"))),
        }
    }
    let missing = |k: &str| Error::Format(format!("header missing `{k}`"));
    let dims = dims.ok_or_else(|| missing("dims"))?;
    let spacing = spacing.ok_or_else(|| missing("spacing_mm"))?;
    let geometry = Geometry::new(
        Dims4::new(dims[0], dims[1], dims[2], dims[3]),
        [spacing[0], spacing[1], spacing[2]],
        interval.ok_or_else(|| missing("frame_interval_s"))?,
    )
    .map_err(|e| Error::Format(e.to_string()))?;
    let data = data.ok_or_else(|| missing("data"))?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    Ok(Header {
        format: format.ok_or_else(|| missing("format"))?,
        geometry,
        data: base.join(data),
        dtype: dtype.ok_or_else(|| missing("dtype"))?,
    })
}

fn read_checked(header: &Header, want_format: &str, want_dtype: &str, elem: usize) -> Result<Vec<u8>> {
    if header.format != want_format {
        return Err(Error::Format(format!(
            "expected format `{want_format}`, found `{}`",
            header.format
        )));
    }
    if header.dtype != want_dtype {
        return Err(Error::Format(format!(
            "expected dtype `{want_dtype}`, found `{}`",
            header.dtype
        )));
    }
    let bytes = fs::read(&header.data).map_err(|e| Error::io(&header.data, e))?;
    let expected = header.geometry.dims.len() * elem;
    if bytes.len() != expected {
        return Err(Error::Size(format!(
            "payload {} has {} bytes, header implies {expected}",
            header.data.display(),
            bytes.len()
        )));
    }
    Ok(bytes)
}

/// Reads a `vol4` header and its payload.
pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume4> {
    let header = read_header(path.as_ref())?;
    let bytes = read_checked(&header, VOL_FORMAT, VOL_DTYPE, 4)?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Volume4::new(header.geometry, data)
}

/// Writes `vol` as a header at `path` plus a `.raw` payload beside it.
pub fn save_volume(vol: &Volume4, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let raw = write_header(path, VOL_FORMAT, VOL_DTYPE, vol.geometry())?;
    let mut bytes = Vec::with_capacity(vol.data.len() * 4);
    for v in &vol.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&raw, bytes).map_err(|e| Error::io(&raw, e))
}

/// Reads a `mask4` header and its payload.
pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask4> {
    let header = read_header(path.as_ref())?;
    let bytes = read_checked(&header, MASK_FORMAT, MASK_DTYPE, 1)?;
    Mask4::new(header.geometry, bytes)
}

pub fn save_mask(mask: &Mask4, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let raw = write_header(path, MASK_FORMAT, MASK_DTYPE, mask.geometry())?;
    fs::write(&raw, &mask.labels).map_err(|e| Error::io(&raw, e))
}
