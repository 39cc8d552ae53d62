//! The `.nlt` container: `NLTV` magic, little-endian `u32` version and
//! header length, a UTF-8 JSON header, then a packed little-endian payload
//! (`f32`, or interleaved `f32` pairs for complex data) in `[d0, d1, d2]`
//! order.

use std::fs;
use std::path::Path;

use ndarray::Array3;
use nlos_core::phasor::PhasorField;
use nlos_core::{
    Complex64, DepthAxis, FrequencyAxis, Lattice, ReconVolume, ScanGrid, TransientVolume,
};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, Result};

pub const MAGIC: [u8; 4] = *b"NLTV";
pub const VERSION: u32 = 1;
pub const SUPPORTED_VERSIONS: [u32; 1] = [VERSION];

const PREAMBLE: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Transient,
    Phasor,
    Volume,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dtype {
    #[serde(rename = "f32")]
    F32,
    #[serde(rename = "c64")]
    C64,
}

impl Dtype {
    fn bytes(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::C64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub width_m: f64,
    pub height_m: f64,
    pub nx: usize,
    pub ny: usize,
    pub confocal: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub laser_point_m: Option<[f64; 3]>,
    /// Exact pixel lattice; without it the grid is rebuilt centred on the
    /// wall origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<Lattice>,
}

impl GridHeader {
    pub fn of(grid: &ScanGrid) -> Self {
        Self {
            width_m: grid.width_m(),
            height_m: grid.height_m(),
            nx: grid.nx(),
            ny: grid.ny(),
            confocal: grid.confocal(),
            laser_point_m: grid.laser_point_m(),
            lattice: Some(grid.lattice()),
        }
    }

    pub fn to_grid(&self) -> nlos_core::Result<ScanGrid> {
        match self.lattice {
            Some(l) => ScanGrid::from_lattice(self.nx, self.ny, l, self.confocal, self.laser_point_m),
            None => ScanGrid::new(
                self.width_m,
                self.height_m,
                self.nx,
                self.ny,
                self.confocal,
                self.laser_point_m,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub dims: [usize; 3],
    pub dtype: Dtype,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_resolution_ps: Option<f64>,
    pub grid: GridHeader,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0_offset_bins: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band_indices: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_m: Option<f64>,
    pub kind: Kind,
    /// Length of the time axis a phasor field's band indices refer to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_bins: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<DepthAxis>,
    /// Signed real data (band-passed transients), not photon counts.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub signed: bool,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

/// Anything that can be stored in a `.nlt` file.
#[derive(Debug, Clone, PartialEq)]
pub enum NltObject {
    Transient(TransientVolume),
    Phasor(PhasorField),
    Volume(ReconVolume),
    /// Signed time-domain data on a scan grid.
    Signal {
        data: Array3<f64>,
        bin_resolution_ps: f64,
        t0_offset_bins: i64,
        grid: ScanGrid,
    },
}

impl NltObject {
    pub fn kind_name(&self) -> &'static str {
        match self {
            NltObject::Transient(_) => "transient",
            NltObject::Phasor(_) => "phasor",
            NltObject::Volume(_) => "volume",
            NltObject::Signal { .. } => "signal",
        }
    }

    fn header(&self, extra: Map<String, Value>) -> Header {
        let base = |dims: (usize, usize, usize), dtype, grid: &ScanGrid, kind| Header {
            dims: [dims.0, dims.1, dims.2],
            dtype,
            bin_resolution_ps: None,
            grid: GridHeader::of(grid),
            t0_offset_bins: None,
            band_indices: None,
            lambda_m: None,
            kind,
            time_bins: None,
            depth: None,
            signed: false,
            extra,
        };
        match self {
            NltObject::Transient(v) => Header {
                bin_resolution_ps: Some(v.bin_resolution_ps()),
                t0_offset_bins: Some(v.t0_offset_bins()),
                ..base(v.data().dim(), Dtype::F32, v.grid(), Kind::Transient)
            },
            NltObject::Signal {
                data,
                bin_resolution_ps,
                t0_offset_bins,
                grid,
            } => Header {
                bin_resolution_ps: Some(*bin_resolution_ps),
                t0_offset_bins: Some(*t0_offset_bins),
                signed: true,
                ..base(data.dim(), Dtype::F32, grid, Kind::Transient)
            },
            NltObject::Phasor(f) => Header {
                bin_resolution_ps: Some(f.axis().bin_resolution_ps()),
                band_indices: Some(f.band().to_vec()),
                lambda_m: Some(f.lambda_m()),
                time_bins: Some(f.axis().len()),
                ..base(f.values().dim(), Dtype::C64, f.grid(), Kind::Phasor)
            },
            NltObject::Volume(v) => Header {
                depth: Some(v.depth().clone()),
                ..base(v.data().dim(), Dtype::F32, v.grid(), Kind::Volume)
            },
        }
    }
}

fn push_f32(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&(v as f32).to_le_bytes());
}

/// Serialises `object` with additional header metadata.
pub fn encode(object: &NltObject, extra: Map<String, Value>) -> Result<Vec<u8>> {
    encode_with_offset(object, extra, None)
}

/// Like [`encode`], recording `t0_offset_bins` for objects that do not carry
/// one (phasor fields computed from a temporally cropped transient).
pub fn encode_with_offset(
    object: &NltObject,
    extra: Map<String, Value>,
    t0_offset_bins: Option<i64>,
) -> Result<Vec<u8>> {
    let mut header = object.header(extra);
    if t0_offset_bins.is_some() {
        header.t0_offset_bins = t0_offset_bins;
    }
    let json = serde_json::to_vec(&header)
        .map_err(|e| CliError::Format(format!("cannot serialise header: {e}")))?;
    let header_len = u32::try_from(json.len())
        .map_err(|_| CliError::Format("header exceeds 4 GiB".into()))?;
    let count: usize = header.dims.iter().product();
    let mut out = Vec::with_capacity(PREAMBLE + json.len() + count * header.dtype.bytes());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(&json);
    match object {
        NltObject::Transient(v) => v.data().iter().for_each(|x| push_f32(&mut out, *x)),
        NltObject::Signal { data, .. } => data.iter().for_each(|x| push_f32(&mut out, *x)),
        NltObject::Volume(v) => v.data().iter().for_each(|x| push_f32(&mut out, *x)),
        NltObject::Phasor(f) => f.values().iter().for_each(|z| {
            push_f32(&mut out, z.re);
            push_f32(&mut out, z.im);
        }),
    }
    Ok(out)
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

/// Splits a container into its header and raw payload, checking magic,
/// version and payload length.
pub fn decode_header(bytes: &[u8]) -> Result<(Header, &[u8])> {
    if bytes.len() < PREAMBLE {
        return Err(CliError::Format(format!(
            "file is {} bytes, shorter than the {PREAMBLE}-byte preamble",
            bytes.len()
        )));
    }
    if bytes[..4] != MAGIC {
        return Err(CliError::Format(format!(
            "bad magic {:?} (expected \"NLTV\")",
            String::from_utf8_lossy(&bytes[..4])
        )));
    }
    let version = read_u32(bytes, 4);
    if !SUPPORTED_VERSIONS.contains(&version) {
        return Err(CliError::Format(format!(
            "unsupported version {version}; supported versions: {SUPPORTED_VERSIONS:?}"
        )));
    }
    let header_len = read_u32(bytes, 8) as usize;
    let header_end = PREAMBLE
        .checked_add(header_len)
        .filter(|end| *end <= bytes.len())
        .ok_or_else(|| {
            CliError::Integrity(format!(
                "header of {header_len} bytes runs past the end of a {}-byte file",
                bytes.len()
            ))
        })?;
    let header: Header = serde_json::from_slice(&bytes[PREAMBLE..header_end])
        .map_err(|e| CliError::Format(format!("malformed header: {e}")))?;
    let expected_dtype = if header.kind == Kind::Phasor {
        Dtype::C64
    } else {
        Dtype::F32
    };
    if header.dtype != expected_dtype {
        return Err(CliError::Format(format!(
            "{:?} data must be stored as {:?}",
            header.kind, expected_dtype
        )));
    }
    let payload = &bytes[header_end..];
    let expected = header
        .dims
        .iter()
        .try_fold(header.dtype.bytes(), |acc, d| acc.checked_mul(*d))
        .ok_or_else(|| CliError::Integrity(format!("dims {:?} overflow", header.dims)))?;
    if payload.len() != expected {
        return Err(CliError::Integrity(format!(
            "payload is {} bytes but dims {:?} of {:?} need {expected}",
            payload.len(),
            header.dims,
            header.dtype
        )));
    }
    Ok((header, payload))
}

fn floats(payload: &[u8]) -> impl Iterator<Item = f64> + '_ {
    payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
}

fn integrity(e: nlos_core::NlosError) -> CliError {
    CliError::Integrity(e.to_string())
}

fn required<T>(value: Option<T>, field: &str, kind: Kind) -> Result<T> {
    value.ok_or_else(|| CliError::Format(format!("{kind:?} header lacks `{field}`")))
}

/// Parses a container back into its object and header.
pub fn decode(bytes: &[u8]) -> Result<(NltObject, Header)> {
    let (header, payload) = decode_header(bytes)?;
    let grid = header.grid.to_grid().map_err(integrity)?;
    let [d0, d1, d2] = header.dims;
    if (d1, d2) != (grid.ny(), grid.nx()) {
        return Err(CliError::Integrity(format!(
            "dims {:?} disagree with a {}x{} grid",
            header.dims,
            grid.ny(),
            grid.nx()
        )));
    }
    let shape = (d0, d1, d2);
    let kind = header.kind;
    let object = match kind {
        Kind::Transient => {
            let data = Array3::from_shape_vec(shape, floats(payload).collect())
                .map_err(|e| CliError::Integrity(e.to_string()))?;
            let bin_res = required(header.bin_resolution_ps, "bin_resolution_ps", kind)?;
            let t0 = header.t0_offset_bins.unwrap_or(0);
            if header.signed {
                NltObject::Signal {
                    data,
                    bin_resolution_ps: bin_res,
                    t0_offset_bins: t0,
                    grid,
                }
            } else {
                NltObject::Transient(TransientVolume::new(data, bin_res, t0, grid).map_err(integrity)?)
            }
        }
        Kind::Volume => {
            let data = Array3::from_shape_vec(shape, floats(payload).collect())
                .map_err(|e| CliError::Integrity(e.to_string()))?;
            let depth = required(header.depth.clone(), "depth", kind)?;
            NltObject::Volume(ReconVolume::new(data, grid, depth).map_err(integrity)?)
        }
        Kind::Phasor => {
            let parts: Vec<f64> = floats(payload).collect();
            let values: Vec<Complex64> = parts
                .chunks_exact(2)
                .map(|p| Complex64::new(p[0], p[1]))
                .collect();
            let values = Array3::from_shape_vec(shape, values)
                .map_err(|e| CliError::Integrity(e.to_string()))?;
            let bin_res = required(header.bin_resolution_ps, "bin_resolution_ps", kind)?;
            let bins = required(header.time_bins, "time_bins", kind)?;
            let band = required(header.band_indices.clone(), "band_indices", kind)?;
            let lambda = required(header.lambda_m, "lambda_m", kind)?;
            let axis = FrequencyAxis::new(bins, bin_res).map_err(integrity)?;
            NltObject::Phasor(PhasorField::new(values, band, axis, grid, lambda).map_err(integrity)?)
        }
    };
    Ok((object, header))
}

pub fn write_nlt(path: &Path, object: &NltObject, extra: Map<String, Value>) -> Result<()> {
    let bytes = encode(object, extra)?;
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn write_nlt_with_offset(
    path: &Path,
    object: &NltObject,
    extra: Map<String, Value>,
    t0_offset_bins: i64,
) -> Result<()> {
    let bytes = encode_with_offset(object, extra, Some(t0_offset_bins))?;
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn read_nlt(path: &Path) -> Result<(NltObject, Header)> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes)
}

pub fn read_transient(path: &Path) -> Result<TransientVolume> {
    match read_nlt(path)?.0 {
        NltObject::Transient(v) => Ok(v),
        other => Err(CliError::Config(format!(
            "{} holds a {}, expected a transient",
            path.display(),
            other.kind_name()
        ))),
    }
}

pub fn read_phasor(path: &Path) -> Result<PhasorField> {
    match read_nlt(path)?.0 {
        NltObject::Phasor(f) => Ok(f),
        other => Err(CliError::Config(format!(
            "{} holds a {}, expected a phasor field",
            path.display(),
            other.kind_name()
        ))),
    }
}

pub fn read_volume(path: &Path) -> Result<ReconVolume> {
    match read_nlt(path)?.0 {
        NltObject::Volume(v) => Ok(v),
        other => Err(CliError::Config(format!(
            "{} holds a {}, expected a reconstruction volume",
            path.display(),
            other.kind_name()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nlos_core::make_scan_grid;

    fn transient() -> TransientVolume {
        let grid = make_scan_grid(1.0, 1.0, 3, 3, true, None).unwrap();
        let data = Array3::from_shape_fn((4, 3, 3), |(t, i, j)| (t * 9 + i * 3 + j) as f64 * 0.1);
        TransientVolume::new(data, 32.0, 5, grid).unwrap()
    }

    #[test]
    fn header_field_order() {
        let bytes = encode(&NltObject::Transient(transient()), Map::new()).unwrap();
        let len = read_u32(&bytes, 8) as usize;
        let text = std::str::from_utf8(&bytes[12..12 + len]).unwrap();
        assert!(text.starts_with("{\"dims\":[4,3,3],\"dtype\":\"f32\",\"bin_resolution_ps\":32.0,\"grid\":{"));
        assert!(text.contains("\"kind\":\"transient\""));
        assert_eq!(bytes.len(), 12 + len + 4 * 36);
    }

    #[test]
    fn extra_metadata_survives() {
        let mut extra = Map::new();
        extra.insert("seed".into(), Value::from(7));
        let bytes = encode(&NltObject::Transient(transient()), extra).unwrap();
        let (_, header) = decode(&bytes).unwrap();
        assert_eq!(header.extra.get("seed"), Some(&Value::from(7)));
    }

    #[test]
    fn signed_signal_round_trip() {
        let grid = make_scan_grid(1.0, 1.0, 2, 2, true, None).unwrap();
        let obj = NltObject::Signal {
            data: Array3::from_elem((3, 2, 2), -1.5),
            bin_resolution_ps: 16.0,
            t0_offset_bins: 0,
            grid,
        };
        let (back, _) = decode(&encode(&obj, Map::new()).unwrap()).unwrap();
        assert_eq!(back, obj);
    }

    #[test]
    fn dtype_must_match_kind() {
        let mut bytes = encode(&NltObject::Transient(transient()), Map::new()).unwrap();
        let len = read_u32(&bytes, 8) as usize;
        let text = String::from_utf8(bytes[12..12 + len].to_vec()).unwrap();
        let patched = text.replace("\"f32\"", "\"c64\"");
        bytes.splice(12..12 + len, patched.into_bytes());
        assert!(matches!(decode(&bytes), Err(CliError::Format(_))));
    }
}
