//! Little-endian single-file NIfTI-1 (`n+1`) reader and writer.
//!
//! Supported datatypes: int16 (4), float32 (16), float64 (64). Orientation
//! fields are round-tripped verbatim and never interpreted.

use std::fs;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};
use log::warn;

use crate::error::{NlsamError, Result};
use crate::volume::{Mask3D, Orientation, Volume4D};

const HEADER_SIZE: usize = 348;
const DEFAULT_VOX_OFFSET: usize = 352;
const MAGIC: &[u8; 4] = b"n+1\0";

mod offsets {
    pub const SIZEOF_HDR: usize = 0;
    pub const DIM: usize = 40;
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const SCL_INTER: usize = 116;
    pub const XYZT_UNITS: usize = 123;
    pub const DESCRIP: usize = 148;
    pub const QFORM_CODE: usize = 252;
    pub const SFORM_CODE: usize = 254;
    pub const QUATERN_B: usize = 256;
    pub const QOFFSET_X: usize = 268;
    pub const SROW_X: usize = 280;
    pub const MAGIC: usize = 344;
}

/// On-disk sample type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NiftiDataType {
    Int16,
    Float32,
    Float64,
}

impl NiftiDataType {
    pub fn code(self) -> i16 {
        match self {
            NiftiDataType::Int16 => 4,
            NiftiDataType::Float32 => 16,
            NiftiDataType::Float64 => 64,
        }
    }

    pub fn from_code(code: i16) -> Result<Self> {
        match code {
            4 => Ok(NiftiDataType::Int16),
            16 => Ok(NiftiDataType::Float32),
            64 => Ok(NiftiDataType::Float64),
            other => Err(NlsamError::UnsupportedDatatype(other)),
        }
    }

    pub fn bytes(self) -> usize {
        match self {
            NiftiDataType::Int16 => 2,
            NiftiDataType::Float32 => 4,
            NiftiDataType::Float64 => 8,
        }
    }
}

/// Reads a NIfTI-1 file. 3D images become a single-volume `Volume4D`.
/// Negative intensities are clamped to zero with a logged count.
pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume4D> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| NlsamError::io(path, e))?;
    let mut vol = parse_volume(&bytes)?;
    let clamped = vol.clamp_negative();
    if clamped > 0 {
        warn!("{}: clamped {clamped} negative intensities to 0", path.display());
    }
    Ok(vol)
}

pub(crate) fn parse_volume(bytes: &[u8]) -> Result<Volume4D> {
    if bytes.len() < HEADER_SIZE {
        return Err(NlsamError::MalformedHeader(format!("file has {} bytes, header needs {HEADER_SIZE}", bytes.len())));
    }
    let sizeof_hdr = LittleEndian::read_i32(&bytes[offsets::SIZEOF_HDR..]);
    if sizeof_hdr != HEADER_SIZE as i32 {
        if byteorder::BigEndian::read_i32(&bytes[offsets::SIZEOF_HDR..]) == HEADER_SIZE as i32 {
            return Err(NlsamError::MalformedHeader("big-endian files are not supported".into()));
        }
        return Err(NlsamError::MalformedHeader(format!("sizeof_hdr is {sizeof_hdr}, expected {HEADER_SIZE}")));
    }
    if &bytes[offsets::MAGIC..offsets::MAGIC + 4] != MAGIC {
        return Err(NlsamError::MalformedHeader(format!("bad magic {:?}", &bytes[offsets::MAGIC..offsets::MAGIC + 4])));
    }

    let mut dim = [0i16; 8];
    for (i, d) in dim.iter_mut().enumerate() {
        *d = LittleEndian::read_i16(&bytes[offsets::DIM + 2 * i..]);
    }
    let ndim = dim[0];
    if !(3..=4).contains(&ndim) {
        return Err(NlsamError::MalformedHeader(format!("dimension count {ndim} not in 3..=4")));
    }
    let mut dims = [1usize; 4];
    for i in 0..ndim as usize {
        let d = dim[i + 1];
        if d < 1 {
            return Err(NlsamError::MalformedHeader(format!("dim[{}] = {d}", i + 1)));
        }
        dims[i] = d as usize;
    }

    let datatype = NiftiDataType::from_code(LittleEndian::read_i16(&bytes[offsets::DATATYPE..]))?;
    let mut pixdim = [0f32; 8];
    for (i, p) in pixdim.iter_mut().enumerate() {
        *p = LittleEndian::read_f32(&bytes[offsets::PIXDIM + 4 * i..]);
    }
    let spacing = [1, 2, 3].map(|i| {
        let s = pixdim[i].abs() as f64;
        if s > 0.0 && s.is_finite() {
            s
        } else {
            1.0
        }
    });

    let vox_offset = LittleEndian::read_f32(&bytes[offsets::VOX_OFFSET..]);
    if !(vox_offset.is_finite() && vox_offset >= 0.0) {
        return Err(NlsamError::MalformedHeader(format!("vox_offset {vox_offset}")));
    }
    let vox_offset = (vox_offset as usize).max(HEADER_SIZE);
    let slope = LittleEndian::read_f32(&bytes[offsets::SCL_SLOPE..]) as f64;
    let inter = LittleEndian::read_f32(&bytes[offsets::SCL_INTER..]) as f64;
    let (slope, inter) = if slope != 0.0 && slope.is_finite() {
        (slope, if inter.is_finite() { inter } else { 0.0 })
    } else {
        (1.0, 0.0)
    };

    let n: usize = dims.iter().product();
    let expected = n * datatype.bytes();
    let available = bytes.len().saturating_sub(vox_offset);
    if available < expected {
        return Err(NlsamError::TruncatedData { expected, found: available });
    }
    let raw = &bytes[vox_offset..vox_offset + expected];
    let data: Vec<f64> = match datatype {
        NiftiDataType::Int16 => raw.chunks_exact(2).map(|c| LittleEndian::read_i16(c) as f64 * slope + inter).collect(),
        NiftiDataType::Float32 => {
            raw.chunks_exact(4).map(|c| LittleEndian::read_f32(c) as f64 * slope + inter).collect()
        }
        NiftiDataType::Float64 => raw.chunks_exact(8).map(|c| LittleEndian::read_f64(c) * slope + inter).collect(),
    };

    let orientation = Orientation {
        qform_code: LittleEndian::read_i16(&bytes[offsets::QFORM_CODE..]),
        sform_code: LittleEndian::read_i16(&bytes[offsets::SFORM_CODE..]),
        quatern: [0, 1, 2].map(|i| LittleEndian::read_f32(&bytes[offsets::QUATERN_B + 4 * i..])),
        qoffset: [0, 1, 2].map(|i| LittleEndian::read_f32(&bytes[offsets::QOFFSET_X + 4 * i..])),
        qfac: pixdim[0],
        srow: [0, 1, 2]
            .map(|r| [0, 1, 2, 3].map(|c| LittleEndian::read_f32(&bytes[offsets::SROW_X + 16 * r + 4 * c..]))),
        xyzt_units: bytes[offsets::XYZT_UNITS],
    };

    let mut vol = Volume4D::new(dims, spacing, data)?;
    vol.orientation = orientation;
    Ok(vol)
}

/// Writes `vol` as float32.
pub fn write_volume(vol: &Volume4D, path: impl AsRef<Path>) -> Result<()> {
    write_volume_as(vol, path, NiftiDataType::Float32)
}

pub fn write_volume_as(vol: &Volume4D, path: impl AsRef<Path>, datatype: NiftiDataType) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_volume(vol, datatype);
    fs::write(path, bytes).map_err(|e| NlsamError::io(path, e))
}

pub(crate) fn encode_volume(vol: &Volume4D, datatype: NiftiDataType) -> Vec<u8> {
    let dims = vol.dims();
    let n = vol.data().len();
    let mut out = vec![0u8; DEFAULT_VOX_OFFSET + n * datatype.bytes()];
    let h = &mut out[..HEADER_SIZE];

    LittleEndian::write_i32(&mut h[offsets::SIZEOF_HDR..], HEADER_SIZE as i32);
    let ndim: i16 = if dims[3] > 1 { 4 } else { 3 };
    let dim = [ndim, dims[0] as i16, dims[1] as i16, dims[2] as i16, dims[3] as i16, 1, 1, 1];
    for (i, d) in dim.iter().enumerate() {
        LittleEndian::write_i16(&mut h[offsets::DIM + 2 * i..], *d);
    }
    LittleEndian::write_i16(&mut h[offsets::DATATYPE..], datatype.code());
    LittleEndian::write_i16(&mut h[offsets::BITPIX..], (datatype.bytes() * 8) as i16);

    let o = &vol.orientation;
    let sp = vol.spacing();
    let pixdim = [o.qfac, sp[0] as f32, sp[1] as f32, sp[2] as f32, 1.0, 1.0, 1.0, 1.0];
    for (i, p) in pixdim.iter().enumerate() {
        LittleEndian::write_f32(&mut h[offsets::PIXDIM + 4 * i..], *p);
    }
    LittleEndian::write_f32(&mut h[offsets::VOX_OFFSET..], DEFAULT_VOX_OFFSET as f32);
    LittleEndian::write_f32(&mut h[offsets::SCL_SLOPE..], 1.0);
    LittleEndian::write_f32(&mut h[offsets::SCL_INTER..], 0.0);
    h[offsets::XYZT_UNITS] = o.xyzt_units;
    let descrip = b"nlsam";
    h[offsets::DESCRIP..offsets::DESCRIP + descrip.len()].copy_from_slice(descrip);
    LittleEndian::write_i16(&mut h[offsets::QFORM_CODE..], o.qform_code);
    LittleEndian::write_i16(&mut h[offsets::SFORM_CODE..], o.sform_code);
    for i in 0..3 {
        LittleEndian::write_f32(&mut h[offsets::QUATERN_B + 4 * i..], o.quatern[i]);
        LittleEndian::write_f32(&mut h[offsets::QOFFSET_X + 4 * i..], o.qoffset[i]);
    }
    for r in 0..3 {
        for c in 0..4 {
            LittleEndian::write_f32(&mut h[offsets::SROW_X + 16 * r + 4 * c..], o.srow[r][c]);
        }
    }
    h[offsets::MAGIC..offsets::MAGIC + 4].copy_from_slice(MAGIC);

    let body = &mut out[DEFAULT_VOX_OFFSET..];
    match datatype {
        NiftiDataType::Int16 => {
            for (c, &v) in body.chunks_exact_mut(2).zip(vol.data()) {
                let q = v.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
                LittleEndian::write_i16(c, q);
            }
        }
        NiftiDataType::Float32 => {
            for (c, &v) in body.chunks_exact_mut(4).zip(vol.data()) {
                LittleEndian::write_f32(c, v as f32);
            }
        }
        NiftiDataType::Float64 => {
            for (c, &v) in body.chunks_exact_mut(8).zip(vol.data()) {
                LittleEndian::write_f64(c, v);
            }
        }
    }
    out
}

/// Reads a mask: any voxel with a positive value in the first volume is set.
pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask3D> {
    let vol = read_volume(path)?;
    Mask3D::from_values(vol.spatial_dims(), vol.volume(0))
}

pub fn write_mask(mask: &Mask3D, spacing: [f64; 3], path: impl AsRef<Path>) -> Result<()> {
    let d = mask.dims();
    let data = mask.data().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let vol = Volume4D::new([d[0], d[1], d[2], 1], spacing, data)?;
    write_volume_as(&vol, path, NiftiDataType::Int16)
}
