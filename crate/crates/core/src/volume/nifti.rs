//! Minimal NIfTI-1 reader and writer.
//!
//! Only the fields needed for evaluation are interpreted: `dim`, `datatype`,
//! `bitpix`, `pixdim[1..=3]`, `vox_offset`, `scl_slope`/`scl_inter`, the
//! sform rows and `magic`. Byte order follows `sizeof_hdr`.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::{MaskVolume, VolumeHeader};
use crate::error::{Error, ParseError, Result};
use crate::labeling::LabelMap;

const HEADER_SIZE: usize = 348;
const SINGLE_FILE_OFFSET: usize = 352;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NiftiDatatype {
    Uint8,
    Int8,
    Int16,
    Uint16,
    Int32,
    Uint32,
    Int64,
    Uint64,
    Float32,
    Float64,
}

impl NiftiDatatype {
    pub fn from_code(code: i16) -> Option<Self> {
        use NiftiDatatype::*;
        Some(match code {
            2 => Uint8,
            4 => Int16,
            8 => Int32,
            16 => Float32,
            64 => Float64,
            256 => Int8,
            512 => Uint16,
            768 => Uint32,
            1024 => Int64,
            1280 => Uint64,
            _ => return None,
        })
    }

    pub fn code(self) -> i16 {
        use NiftiDatatype::*;
        match self {
            Uint8 => 2,
            Int16 => 4,
            Int32 => 8,
            Float32 => 16,
            Float64 => 64,
            Int8 => 256,
            Uint16 => 512,
            Uint32 => 768,
            Int64 => 1024,
            Uint64 => 1280,
        }
    }

    pub fn size(self) -> usize {
        use NiftiDatatype::*;
        match self {
            Uint8 | Int8 => 1,
            Int16 | Uint16 => 2,
            Int32 | Uint32 | Float32 => 4,
            Int64 | Uint64 | Float64 => 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Endian {
    Little,
    Big,
}

struct Fields<'a> {
    bytes: &'a [u8],
    endian: Endian,
}

impl Fields<'_> {
    fn arr<const N: usize>(&self, off: usize) -> [u8; N] {
        let mut a = [0u8; N];
        a.copy_from_slice(&self.bytes[off..off + N]);
        a
    }

    fn i16(&self, off: usize) -> i16 {
        match self.endian {
            Endian::Little => i16::from_le_bytes(self.arr(off)),
            Endian::Big => i16::from_be_bytes(self.arr(off)),
        }
    }

    fn f32(&self, off: usize) -> f32 {
        match self.endian {
            Endian::Little => f32::from_le_bytes(self.arr(off)),
            Endian::Big => f32::from_be_bytes(self.arr(off)),
        }
    }
}

/// A decoded NIfTI-1 image whose voxel payload has not been converted yet.
#[derive(Debug, Clone)]
pub struct RawVolume {
    pub header: VolumeHeader,
    datatype: NiftiDatatype,
    endian: Endian,
    scale: Option<(f64, f64)>,
    payload: Vec<u8>,
}

macro_rules! decode_each {
    ($payload:expr, $endian:expr, $ty:ty, $f:expr) => {{
        const W: usize = std::mem::size_of::<$ty>();
        let f = $f;
        match $endian {
            Endian::Little => {
                for c in $payload.chunks_exact(W) {
                    f(<$ty>::from_le_bytes(c.try_into().unwrap()) as f64);
                }
            }
            Endian::Big => {
                for c in $payload.chunks_exact(W) {
                    f(<$ty>::from_be_bytes(c.try_into().unwrap()) as f64);
                }
            }
        }
    }};
}

impl RawVolume {
    pub fn datatype(&self) -> NiftiDatatype {
        self.datatype
    }

    fn for_each_value(&self, mut f: impl FnMut(f64)) {
        let (slope, inter) = self.scale.unwrap_or((1.0, 0.0));
        let mut g = |v: f64| f(v * slope + inter);
        let p = &self.payload;
        match self.datatype {
            NiftiDatatype::Uint8 => p.iter().for_each(|&b| g(b as f64)),
            NiftiDatatype::Int8 => p.iter().for_each(|&b| g(b as i8 as f64)),
            NiftiDatatype::Int16 => decode_each!(p, self.endian, i16, &mut g),
            NiftiDatatype::Uint16 => decode_each!(p, self.endian, u16, &mut g),
            NiftiDatatype::Int32 => decode_each!(p, self.endian, i32, &mut g),
            NiftiDatatype::Uint32 => decode_each!(p, self.endian, u32, &mut g),
            NiftiDatatype::Int64 => decode_each!(p, self.endian, i64, &mut g),
            NiftiDatatype::Uint64 => decode_each!(p, self.endian, u64, &mut g),
            NiftiDatatype::Float32 => decode_each!(p, self.endian, f32, &mut g),
            NiftiDatatype::Float64 => decode_each!(p, self.endian, f64, &mut g),
        }
    }

    /// Scaled voxel values in storage order.
    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.header.voxel_count());
        self.for_each_value(|v| out.push(v));
        out
    }

    /// `value > threshold` becomes foreground; NaN is background.
    pub fn binarize(&self, threshold: f64) -> MaskVolume {
        let mut voxels = Vec::with_capacity(self.header.voxel_count());
        self.for_each_value(|v| voxels.push(u8::from(v > threshold)));
        MaskVolume {
            header: self.header.clone(),
            voxels,
        }
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b {
        let mut out = Vec::with_capacity(bytes.len() * 4);
        MultiGzDecoder::new(&bytes[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                source: ParseError::Gzip(e),
            })?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

/// Image file paired with a `ni1` header: `x.hdr[.gz]` -> `x.img[.gz]`.
fn paired_image_path(path: &Path) -> Option<PathBuf> {
    let name = path.file_name()?.to_str()?;
    for (hdr, img) in [(".hdr.gz", ".img.gz"), (".hdr", ".img")] {
        if let Some(stem) = name.strip_suffix(hdr) {
            let plain = path.with_file_name(format!("{stem}{img}"));
            if plain.exists() {
                return Some(plain);
            }
            let other = if img.ends_with(".gz") {
                format!("{stem}.img")
            } else {
                format!("{stem}.img.gz")
            };
            return Some(path.with_file_name(other));
        }
    }
    None
}

pub(crate) fn parse_header(bytes: &[u8]) -> std::result::Result<(VolumeHeader, HeaderExtra), ParseError> {
    if bytes.len() < HEADER_SIZE {
        return Err(ParseError::TooShort { len: bytes.len() });
    }
    let le = i32::from_le_bytes(bytes[0..4].try_into().unwrap());
    let endian = if le == 348 {
        Endian::Little
    } else if i32::from_be_bytes(bytes[0..4].try_into().unwrap()) == 348 {
        Endian::Big
    } else {
        return Err(ParseError::SizeofHdr(le));
    };
    let f = Fields { bytes, endian };

    let magic: [u8; 4] = f.arr(344);
    let single_file = match &magic {
        b"n+1\0" => true,
        b"ni1\0" => false,
        _ => return Err(ParseError::Magic(magic)),
    };

    let ndim = f.i16(40);
    if !(1..=7).contains(&ndim) {
        return Err(ParseError::DimCount(ndim));
    }
    let mut dims = [1usize; 3];
    let mut spacing = [1.0f64; 3];
    for axis in 1..=7usize {
        let value = f.i16(40 + 2 * axis);
        let used = axis <= ndim as usize;
        if axis <= 3 {
            if used {
                if value < 1 {
                    return Err(ParseError::Dim { axis, value });
                }
                dims[axis - 1] = value as usize;
                let p = f.f32(76 + 4 * axis);
                if !(p.is_finite() && p > 0.0) {
                    return Err(ParseError::Pixdim { axis, value: p });
                }
                spacing[axis - 1] = p as f64;
            }
        } else if used && value > 1 {
            return Err(ParseError::NotThreeD { axis, value });
        }
    }

    let code = f.i16(70);
    let datatype = NiftiDatatype::from_code(code).ok_or(ParseError::Datatype { code })?;
    let bitpix = f.i16(72);
    if bitpix != 0 && bitpix as usize != datatype.size() * 8 {
        return Err(ParseError::Bitpix { code, bitpix });
    }

    let vox_offset = f.f32(108);
    let offset = if single_file {
        if !(vox_offset.is_finite() && vox_offset >= HEADER_SIZE as f32) {
            return Err(ParseError::VoxOffset(vox_offset));
        }
        vox_offset as usize
    } else {
        vox_offset.max(0.0) as usize
    };

    let slope = f.f32(112) as f64;
    let inter = f.f32(116) as f64;
    let scale = (slope.is_finite() && slope != 0.0 && !(slope == 1.0 && inter == 0.0))
        .then_some((slope, if inter.is_finite() { inter } else { 0.0 }));

    let qform = f.i16(252);
    let sform = f.i16(254);
    let affine = (sform > 0).then(|| {
        let mut rows = [[0.0f64; 4]; 3];
        for (r, row) in rows.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = f.f32(280 + 16 * r + 4 * c) as f64;
            }
        }
        rows
    });

    let header = VolumeHeader {
        dims,
        spacing,
        datatype_code: code,
        affine_present: sform > 0 || qform > 0,
        affine,
    };
    Ok((
        header,
        HeaderExtra {
            datatype,
            endian,
            scale,
            offset,
            single_file,
        },
    ))
}

pub(crate) struct HeaderExtra {
    datatype: NiftiDatatype,
    endian: Endian,
    scale: Option<(f64, f64)>,
    offset: usize,
    single_file: bool,
}

/// Reads a `.nii`, `.nii.gz`, or `.hdr`/`.img` pair without binarizing.
pub fn read_nifti(path: &Path) -> Result<RawVolume> {
    let parse_err = |source| Error::Parse {
        path: path.to_path_buf(),
        source,
    };
    let bytes = read_maybe_gz(path)?;
    let (header, extra) = parse_header(&bytes).map_err(parse_err)?;
    let needed = header.voxel_count() * extra.datatype.size();

    let mut payload = if extra.single_file {
        let start = extra.offset.min(bytes.len());
        let available = bytes.len() - start;
        if available < needed {
            return Err(parse_err(ParseError::Truncated {
                offset: extra.offset,
                expected: needed,
                found: available,
            }));
        }
        let mut bytes = bytes;
        bytes.truncate(start + needed);
        bytes.drain(..start);
        bytes
    } else {
        let img = paired_image_path(path).ok_or_else(|| {
            parse_err(ParseError::Magic(*b"ni1\0"))
        })?;
        let mut data = read_maybe_gz(&img)?;
        let available = data.len().saturating_sub(extra.offset);
        if available < needed {
            return Err(Error::Parse {
                path: img,
                source: ParseError::Truncated {
                    offset: extra.offset,
                    expected: needed,
                    found: available,
                },
            });
        }
        data.truncate(extra.offset + needed);
        data.drain(..extra.offset);
        data
    };
    payload.shrink_to_fit();

    Ok(RawVolume {
        header,
        datatype: extra.datatype,
        endian: extra.endian,
        scale: extra.scale,
        payload,
    })
}

fn header_bytes(header: &VolumeHeader, datatype: NiftiDatatype) -> [u8; SINGLE_FILE_OFFSET] {
    let mut h = [0u8; SINGLE_FILE_OFFSET];
    let mut put = |off: usize, b: &[u8]| h[off..off + b.len()].copy_from_slice(b);
    put(0, &348i32.to_le_bytes());
    put(38, b"r");
    put(40, &3i16.to_le_bytes());
    for (i, &d) in header.dims.iter().enumerate() {
        put(42 + 2 * i, &(d as i16).to_le_bytes());
    }
    for i in 3..7 {
        put(42 + 2 * i, &1i16.to_le_bytes());
    }
    put(70, &datatype.code().to_le_bytes());
    put(72, &((datatype.size() * 8) as i16).to_le_bytes());
    put(76, &1f32.to_le_bytes());
    for (i, &s) in header.spacing.iter().enumerate() {
        put(80 + 4 * i, &(s as f32).to_le_bytes());
    }
    put(108, &(SINGLE_FILE_OFFSET as f32).to_le_bytes());
    put(112, &1f32.to_le_bytes());
    // xyzt_units: mm
    put(123, &[2u8]);
    if let Some(rows) = &header.affine {
        put(254, &1i16.to_le_bytes());
        for (r, row) in rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                put(280 + 16 * r + 4 * c, &(v as f32).to_le_bytes());
            }
        }
    }
    put(344, b"n+1\0");
    h
}

fn write_volume(path: &Path, header: &VolumeHeader, datatype: NiftiDatatype, payload: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let gz = path
        .file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.ends_with(".gz"));
    let head = header_bytes(header, datatype);
    let res = if gz {
        // flate2 writes mtime 0, so the compressed bytes are reproducible.
        let mut enc = GzEncoder::new(BufWriter::new(file), Compression::default());
        enc.write_all(&head)
            .and_then(|_| enc.write_all(payload))
            .and_then(|_| enc.finish().map(|_| ()))
    } else {
        let mut w = BufWriter::new(file);
        w.write_all(&head)
            .and_then(|_| w.write_all(payload))
            .and_then(|_| w.flush())
    };
    res.map_err(|e| Error::io(path, e))
}

/// Writes a mask as uint8 NIfTI-1; gzip when the name ends in `.gz`.
pub fn write_mask(path: impl AsRef<Path>, mask: &MaskVolume) -> Result<()> {
    write_volume(path.as_ref(), mask.header(), NiftiDatatype::Uint8, mask.voxels())
}

/// Writes a label map as int32 NIfTI-1 for external inspection.
pub fn write_label_map(path: impl AsRef<Path>, labels: &LabelMap) -> Result<()> {
    let payload: Vec<u8> = labels
        .labels()
        .iter()
        .flat_map(|&l| (l as i32).to_le_bytes())
        .collect();
    write_volume(path.as_ref(), labels.header(), NiftiDatatype::Int32, &payload)
}
