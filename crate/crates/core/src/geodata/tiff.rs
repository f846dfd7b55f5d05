//! Strict GeoTIFF subset: single image, striped, uncompressed, u8/u16/f32
//! samples, georeferenced through ModelPixelScale + ModelTiepoint +
//! GeoKeyDirectory with an EPSG code. Anything outside the subset is
//! rejected with an error naming the offending tag.
//!
//! The writer emits one canonical layout (little-endian, IFD at offset 8,
//! out-of-line tag values in tag order, then 64-row chunky strips), so the
//! same grid always produces the same bytes.

use thiserror::Error;

use super::{GeoTransform, RasterGrid, SampleType, Samples};
use crate::geodesy::{CrsId, CrsKind};

pub const IMAGE_WIDTH: u16 = 256;
pub const IMAGE_LENGTH: u16 = 257;
pub const BITS_PER_SAMPLE: u16 = 258;
pub const COMPRESSION: u16 = 259;
pub const PHOTOMETRIC: u16 = 262;
pub const IMAGE_DESCRIPTION: u16 = 270;
pub const STRIP_OFFSETS: u16 = 273;
pub const SAMPLES_PER_PIXEL: u16 = 277;
pub const ROWS_PER_STRIP: u16 = 278;
pub const STRIP_BYTE_COUNTS: u16 = 279;
pub const PLANAR_CONFIG: u16 = 284;
pub const TILE_WIDTH: u16 = 322;
pub const TILE_LENGTH: u16 = 323;
pub const TILE_OFFSETS: u16 = 324;
pub const TILE_BYTE_COUNTS: u16 = 325;
pub const SAMPLE_FORMAT: u16 = 339;
pub const MODEL_PIXEL_SCALE: u16 = 33550;
pub const MODEL_TIEPOINT: u16 = 33922;
pub const MODEL_TRANSFORMATION: u16 = 34264;
pub const GEO_KEY_DIRECTORY: u16 = 34735;
pub const GDAL_NODATA: u16 = 42113;

const KEY_MODEL_TYPE: u16 = 1024;
const KEY_RASTER_TYPE: u16 = 1025;
const KEY_GEOGRAPHIC_TYPE: u16 = 2048;
const KEY_PROJECTED_TYPE: u16 = 3072;

const MODEL_PROJECTED: u16 = 1;
const MODEL_GEOGRAPHIC: u16 = 2;
const RASTER_PIXEL_IS_AREA: u16 = 1;
const RASTER_PIXEL_IS_POINT: u16 = 2;

/// Rows per strip used by the writer.
pub const WRITER_ROWS_PER_STRIP: usize = 64;

const TYPE_BYTE: u16 = 1;
const TYPE_ASCII: u16 = 2;
const TYPE_SHORT: u16 = 3;
const TYPE_LONG: u16 = 4;
const TYPE_DOUBLE: u16 = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoTiffError {
    #[error("not a TIFF file: bad byte-order mark or magic number")]
    BadMagic,
    #[error("truncated input: {needed} bytes required at offset {offset}, file is {len} bytes")]
    Truncated { offset: u64, needed: u64, len: u64 },
    #[error("unsupported feature (tag {tag}): {detail}")]
    Unsupported { tag: u16, detail: String },
    #[error("missing required tag {0}")]
    MissingTag(u16),
    #[error("not georeferenced: missing {0}")]
    NotGeoreferenced(&'static str),
    #[error("malformed tag {tag}: {detail}")]
    Malformed { tag: u16, detail: String },
    #[error("cannot encode raster: {0}")]
    Validation(String),
}

type Result<T> = std::result::Result<T, GeoTiffError>;

fn unsupported(tag: u16, detail: impl Into<String>) -> GeoTiffError {
    GeoTiffError::Unsupported { tag, detail: detail.into() }
}

fn malformed(tag: u16, detail: impl Into<String>) -> GeoTiffError {
    GeoTiffError::Malformed { tag, detail: detail.into() }
}

struct Bytes<'a> {
    data: &'a [u8],
    big_endian: bool,
}

impl<'a> Bytes<'a> {
    fn slice(&self, offset: u64, len: u64) -> Result<&'a [u8]> {
        let end = offset.checked_add(len);
        match end {
            Some(end) if end <= self.data.len() as u64 => Ok(&self.data[offset as usize..end as usize]),
            _ => Err(GeoTiffError::Truncated { offset, needed: len, len: self.data.len() as u64 }),
        }
    }

    fn u16(&self, offset: u64) -> Result<u16> {
        let b: [u8; 2] = self.slice(offset, 2)?.try_into().unwrap();
        Ok(if self.big_endian { u16::from_be_bytes(b) } else { u16::from_le_bytes(b) })
    }

    fn u32(&self, offset: u64) -> Result<u32> {
        let b: [u8; 4] = self.slice(offset, 4)?.try_into().unwrap();
        Ok(if self.big_endian { u32::from_be_bytes(b) } else { u32::from_le_bytes(b) })
    }

    fn u64(&self, offset: u64) -> Result<u64> {
        let b: [u8; 8] = self.slice(offset, 8)?.try_into().unwrap();
        Ok(if self.big_endian { u64::from_be_bytes(b) } else { u64::from_le_bytes(b) })
    }

    fn f64(&self, offset: u64) -> Result<f64> {
        self.u64(offset).map(f64::from_bits)
    }
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    tag: u16,
    typ: u16,
    count: u64,
    /// File position of the 4-byte value/offset field.
    field: u64,
}

fn type_size(typ: u16) -> Option<u64> {
    match typ {
        1 | 2 | 6 | 7 => Some(1),
        3 | 8 => Some(2),
        4 | 9 | 11 => Some(4),
        5 | 10 | 12 | 16 | 17 => Some(8),
        _ => None,
    }
}

struct Ifd<'a> {
    bytes: Bytes<'a>,
    entries: Vec<Entry>,
}

impl<'a> Ifd<'a> {
    fn find(&self, tag: u16) -> Option<&Entry> {
        self.entries.iter().find(|e| e.tag == tag)
    }

    fn data_offset(&self, e: &Entry) -> Result<u64> {
        let size = type_size(e.typ).unwrap_or(1) * e.count;
        if size <= 4 {
            Ok(e.field)
        } else {
            self.bytes.u32(e.field).map(u64::from)
        }
    }

    fn uints(&self, tag: u16) -> Result<Option<Vec<u64>>> {
        let Some(e) = self.find(tag) else { return Ok(None) };
        let size = match e.typ {
            TYPE_BYTE => 1,
            TYPE_SHORT => 2,
            TYPE_LONG => 4,
            16 => 8,
            other => return Err(malformed(tag, format!("expected an unsigned integer type, found type {other}"))),
        };
        let start = self.data_offset(e)?;
        self.bytes.slice(start, size * e.count)?;
        let mut out = Vec::with_capacity(e.count as usize);
        for i in 0..e.count {
            let at = start + i * size;
            out.push(match size {
                1 => self.bytes.data[at as usize] as u64,
                2 => self.bytes.u16(at)? as u64,
                4 => self.bytes.u32(at)? as u64,
                _ => self.bytes.u64(at)?,
            });
        }
        Ok(Some(out))
    }

    fn uint(&self, tag: u16) -> Result<Option<u64>> {
        match self.uints(tag)? {
            None => Ok(None),
            Some(v) if v.len() == 1 => Ok(Some(v[0])),
            Some(v) => Err(malformed(tag, format!("expected 1 value, found {}", v.len()))),
        }
    }

    fn doubles(&self, tag: u16) -> Result<Option<Vec<f64>>> {
        let Some(e) = self.find(tag) else { return Ok(None) };
        if e.typ != TYPE_DOUBLE {
            return Err(malformed(tag, format!("expected DOUBLE values, found type {}", e.typ)));
        }
        let start = self.data_offset(e)?;
        self.bytes.slice(start, 8 * e.count)?;
        (0..e.count).map(|i| self.bytes.f64(start + 8 * i)).collect::<Result<Vec<_>>>().map(Some)
    }

    fn ascii(&self, tag: u16) -> Result<Option<String>> {
        let Some(e) = self.find(tag) else { return Ok(None) };
        if e.typ != TYPE_ASCII {
            return Err(malformed(tag, format!("expected ASCII, found type {}", e.typ)));
        }
        let start = self.data_offset(e)?;
        let raw = self.bytes.slice(start, e.count)?;
        let text = raw.split(|&b| b == 0).next().unwrap_or(&[]);
        String::from_utf8(text.to_vec()).map(Some).map_err(|_| malformed(tag, "non-ASCII text"))
    }
}

fn parse_ifd(data: &[u8]) -> Result<Ifd<'_>> {
    if data.len() < 2 {
        return Err(GeoTiffError::BadMagic);
    }
    let big_endian = match &data[..2] {
        b"II" => false,
        b"MM" => true,
        _ => return Err(GeoTiffError::BadMagic),
    };
    let bytes = Bytes { data, big_endian };
    match bytes.u16(2)? {
        42 => {}
        43 => return Err(unsupported(0, "BigTIFF")),
        _ => return Err(GeoTiffError::BadMagic),
    }
    let ifd_offset = bytes.u32(4)? as u64;
    if ifd_offset < 8 {
        return Err(malformed(0, format!("IFD offset {ifd_offset} overlaps the header")));
    }
    let count = bytes.u16(ifd_offset)? as u64;
    bytes.slice(ifd_offset + 2, count * 12)?;
    let mut entries = Vec::with_capacity(count as usize);
    for i in 0..count {
        let at = ifd_offset + 2 + i * 12;
        let tag = bytes.u16(at)?;
        let typ = bytes.u16(at + 2)?;
        let count = bytes.u32(at + 4)? as u64;
        // Unknown field types are skipped, as baseline readers must.
        if type_size(typ).is_some() {
            entries.push(Entry { tag, typ, count, field: at + 8 });
        }
    }
    Ok(Ifd { bytes, entries })
}

/// Decodes a GeoTIFF subset file into a fully materialised grid.
pub fn read_geotiff(data: &[u8]) -> Result<RasterGrid> {
    let ifd = parse_ifd(data)?;

    for tag in [TILE_WIDTH, TILE_LENGTH, TILE_OFFSETS, TILE_BYTE_COUNTS] {
        if ifd.find(tag).is_some() {
            return Err(unsupported(tag, "tiled layout"));
        }
    }
    let compression = ifd.uint(COMPRESSION)?.unwrap_or(1);
    if compression != 1 {
        return Err(unsupported(COMPRESSION, format!("compression scheme {compression}")));
    }
    let width = ifd.uint(IMAGE_WIDTH)?.ok_or(GeoTiffError::MissingTag(IMAGE_WIDTH))? as usize;
    let height = ifd.uint(IMAGE_LENGTH)?.ok_or(GeoTiffError::MissingTag(IMAGE_LENGTH))? as usize;
    if width == 0 || height == 0 {
        return Err(malformed(IMAGE_WIDTH, format!("empty image {width}x{height}")));
    }
    let spp = ifd.uint(SAMPLES_PER_PIXEL)?.unwrap_or(1) as usize;
    if spp == 0 {
        return Err(malformed(SAMPLES_PER_PIXEL, "zero samples per pixel"));
    }
    let bits = ifd.uints(BITS_PER_SAMPLE)?.unwrap_or_else(|| vec![1]);
    let formats = ifd.uints(SAMPLE_FORMAT)?.unwrap_or_else(|| vec![1]);
    let bits = uniform(BITS_PER_SAMPLE, &bits, spp)?;
    let format = uniform(SAMPLE_FORMAT, &formats, spp)?;
    let sample_type = match (bits, format) {
        (8, 1) => SampleType::U8,
        (16, 1) => SampleType::U16,
        (32, 3) => SampleType::F32,
        (b, 1 | 3) if ![8, 16, 32].contains(&b) => return Err(unsupported(BITS_PER_SAMPLE, format!("{b} bits per sample"))),
        (b, f) => return Err(unsupported(SAMPLE_FORMAT, format!("sample format {f} with {b} bits"))),
    };
    let planar = ifd.uint(PLANAR_CONFIG)?.unwrap_or(1);
    if planar != 1 && planar != 2 {
        return Err(unsupported(PLANAR_CONFIG, format!("planar configuration {planar}")));
    }
    let rows_per_strip = ifd.uint(ROWS_PER_STRIP)?.unwrap_or(u32::MAX as u64).clamp(1, height as u64) as usize;
    let offsets = ifd.uints(STRIP_OFFSETS)?.ok_or(GeoTiffError::MissingTag(STRIP_OFFSETS))?;
    let counts = ifd.uints(STRIP_BYTE_COUNTS)?.ok_or(GeoTiffError::MissingTag(STRIP_BYTE_COUNTS))?;

    let strips_per_plane = height.div_ceil(rows_per_strip);
    let planes = if planar == 1 { 1 } else { spp };
    let expected_strips = strips_per_plane * planes;
    if offsets.len() != expected_strips {
        return Err(malformed(STRIP_OFFSETS, format!("{} strips, expected {expected_strips}", offsets.len())));
    }
    if counts.len() != expected_strips {
        return Err(malformed(STRIP_BYTE_COUNTS, format!("{} strips, expected {expected_strips}", counts.len())));
    }

    let (transform, crs) = read_georeference(&ifd)?;
    let nodata = match ifd.ascii(GDAL_NODATA)? {
        Some(text) => Some(
            text.trim().parse::<f64>().map_err(|_| malformed(GDAL_NODATA, format!("unparseable nodata {text:?}")))?,
        ),
        None => None,
    };

    let bps = sample_type.bytes();
    let plane_len = width * height;
    let mut samples = Samples::zeros(sample_type, plane_len * spp);
    let samples_per_strip_pixel = if planar == 1 { spp } else { 1 };
    for plane in 0..planes {
        for s in 0..strips_per_plane {
            let first_row = s * rows_per_strip;
            let rows = rows_per_strip.min(height - first_row);
            let expected = (rows * width * samples_per_strip_pixel * bps) as u64;
            let idx = plane * strips_per_plane + s;
            if counts[idx] < expected {
                return Err(malformed(STRIP_BYTE_COUNTS, format!("strip {idx} holds {} bytes, needs {expected}", counts[idx])));
            }
            let raw = ifd.bytes.slice(offsets[idx], expected)?;
            decode_strip(raw, ifd.bytes.big_endian, &mut samples, |k| {
                // k-th sample within the strip
                let px = k / samples_per_strip_pixel;
                let band = if planar == 1 { k % spp } else { plane };
                band * plane_len + first_row * width + px
            });
        }
    }

    let description = ifd.ascii(IMAGE_DESCRIPTION)?;
    RasterGrid::new(width, height, spp, samples, nodata, crs, transform)
        .map(|g| g.with_description(description))
        .map_err(|e| malformed(0, e.to_string()))
}

fn uniform(tag: u16, values: &[u64], spp: usize) -> Result<u64> {
    let first = *values.first().ok_or_else(|| malformed(tag, "no values"))?;
    if values.len() != 1 && values.len() != spp {
        return Err(malformed(tag, format!("{} values for {spp} samples per pixel", values.len())));
    }
    if values.iter().any(|&v| v != first) {
        return Err(unsupported(tag, "mixed per-sample values"));
    }
    Ok(first)
}

fn decode_strip(raw: &[u8], big_endian: bool, samples: &mut Samples, index: impl Fn(usize) -> usize) {
    match samples {
        Samples::U8(v) => {
            for (k, &b) in raw.iter().enumerate() {
                v[index(k)] = b;
            }
        }
        Samples::U16(v) => {
            for (k, c) in raw.chunks_exact(2).enumerate() {
                let b = [c[0], c[1]];
                v[index(k)] = if big_endian { u16::from_be_bytes(b) } else { u16::from_le_bytes(b) };
            }
        }
        Samples::F32(v) => {
            for (k, c) in raw.chunks_exact(4).enumerate() {
                let b = [c[0], c[1], c[2], c[3]];
                let bits = if big_endian { u32::from_be_bytes(b) } else { u32::from_le_bytes(b) };
                v[index(k)] = f32::from_bits(bits);
            }
        }
    }
}

fn read_georeference(ifd: &Ifd<'_>) -> Result<(GeoTransform, CrsId)> {
    let scale = ifd.doubles(MODEL_PIXEL_SCALE)?;
    let tie = ifd.doubles(MODEL_TIEPOINT)?;
    if scale.is_none() && tie.is_none() && ifd.find(MODEL_TRANSFORMATION).is_some() {
        return Err(unsupported(MODEL_TRANSFORMATION, "affine model transformation"));
    }
    let scale = scale.ok_or(GeoTiffError::NotGeoreferenced("ModelPixelScale (33550)"))?;
    let tie = tie.ok_or(GeoTiffError::NotGeoreferenced("ModelTiepoint (33922)"))?;
    let keys = ifd.uints(GEO_KEY_DIRECTORY)?.ok_or(GeoTiffError::NotGeoreferenced("GeoKeyDirectory (34735)"))?;

    if scale.len() < 2 {
        return Err(malformed(MODEL_PIXEL_SCALE, "fewer than 2 values"));
    }
    if tie.len() < 6 {
        return Err(malformed(MODEL_TIEPOINT, "fewer than 6 values"));
    }
    if tie.len() > 6 {
        return Err(unsupported(MODEL_TIEPOINT, "multiple tiepoints"));
    }
    let (sx, sy) = (scale[0], scale[1]);
    if !(sx > 0.0 && sy > 0.0 && sx.is_finite() && sy.is_finite()) {
        return Err(unsupported(MODEL_PIXEL_SCALE, format!("pixel scale ({sx}, {sy}) is not north-up")));
    }

    let mut model_type = None;
    let mut raster_type = RASTER_PIXEL_IS_AREA;
    let mut epsg = None;
    if keys.len() < 4 || keys[0] != 1 {
        return Err(malformed(GEO_KEY_DIRECTORY, "bad directory header"));
    }
    let n = keys[3] as usize;
    if keys.len() < 4 + 4 * n {
        return Err(malformed(GEO_KEY_DIRECTORY, format!("{n} keys declared, {} values present", keys.len())));
    }
    for k in keys[4..4 + 4 * n].chunks_exact(4) {
        let (id, location, value) = (k[0] as u16, k[1], k[3]);
        let inline = location == 0;
        match id {
            KEY_MODEL_TYPE if inline => model_type = Some(value as u16),
            KEY_RASTER_TYPE if inline => raster_type = value as u16,
            KEY_GEOGRAPHIC_TYPE | KEY_PROJECTED_TYPE if inline && (id == KEY_PROJECTED_TYPE || epsg.is_none()) => {
                epsg = Some((id, value as u32));
            }
            _ => {}
        }
    }
    let (key, code) = epsg.ok_or(GeoTiffError::NotGeoreferenced("EPSG code in GeoKeyDirectory"))?;
    let code = match (model_type, key) {
        (Some(MODEL_GEOGRAPHIC), KEY_GEOGRAPHIC_TYPE) | (Some(MODEL_PROJECTED) | None, KEY_PROJECTED_TYPE) => code,
        (None, KEY_GEOGRAPHIC_TYPE) => code,
        (Some(m), _) => return Err(unsupported(GEO_KEY_DIRECTORY, format!("model type {m} with key {key}"))),
        _ => code,
    };
    let crs = CrsId::from_epsg(code).map_err(|_| unsupported(GEO_KEY_DIRECTORY, format!("EPSG:{code}")))?;

    let (i, j, x, y) = (tie[0], tie[1], tie[3], tie[4]);
    let mut origin_x = x - i * sx;
    let mut origin_y = y + j * sy;
    match raster_type {
        RASTER_PIXEL_IS_AREA => {}
        RASTER_PIXEL_IS_POINT => {
            origin_x -= sx / 2.0;
            origin_y += sy / 2.0;
        }
        other => return Err(unsupported(GEO_KEY_DIRECTORY, format!("raster type {other}"))),
    }
    let transform = GeoTransform::new(origin_x, origin_y, sx, sy)
        .map_err(|e| malformed(MODEL_TIEPOINT, e.to_string()))?;
    Ok((transform, crs))
}

enum Payload {
    Shorts(Vec<u16>),
    Longs(Vec<u32>),
    Doubles(Vec<f64>),
    Ascii(Vec<u8>),
}

impl Payload {
    fn typ(&self) -> u16 {
        match self {
            Payload::Shorts(_) => TYPE_SHORT,
            Payload::Longs(_) => TYPE_LONG,
            Payload::Doubles(_) => TYPE_DOUBLE,
            Payload::Ascii(_) => TYPE_ASCII,
        }
    }

    fn count(&self) -> usize {
        match self {
            Payload::Shorts(v) => v.len(),
            Payload::Longs(v) => v.len(),
            Payload::Doubles(v) => v.len(),
            Payload::Ascii(v) => v.len(),
        }
    }

    fn encode(&self) -> Vec<u8> {
        match self {
            Payload::Shorts(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            Payload::Longs(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            Payload::Doubles(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            Payload::Ascii(v) => v.clone(),
        }
    }
}

/// Encodes a grid in the canonical layout.
pub fn write_geotiff(grid: &RasterGrid) -> Result<Vec<u8>> {
    let (w, h, spp) = (grid.width(), grid.height(), grid.band_count());
    if spp == 0 || spp > u16::MAX as usize {
        return Err(GeoTiffError::Validation(format!("band count {spp}")));
    }
    let ty = grid.sample_type();
    let bps = ty.bytes();
    let row_bytes = w.checked_mul(spp).and_then(|n| n.checked_mul(bps));
    let total = row_bytes.and_then(|r| r.checked_mul(h));
    let total = match total {
        Some(t) if t < u32::MAX as usize / 2 && w <= u32::MAX as usize && h <= u32::MAX as usize => t,
        _ => return Err(GeoTiffError::Validation(format!("{w}x{h}x{spp} exceeds classic TIFF limits"))),
    };
    let row_bytes = row_bytes.unwrap();

    let strips = h.div_ceil(WRITER_ROWS_PER_STRIP);
    let strip_counts: Vec<u32> = (0..strips)
        .map(|s| {
            let rows = WRITER_ROWS_PER_STRIP.min(h - s * WRITER_ROWS_PER_STRIP);
            (rows * row_bytes) as u32
        })
        .collect();

    let (bits, format) = match ty {
        SampleType::U8 => (8u16, 1u16),
        SampleType::U16 => (16, 1),
        SampleType::F32 => (32, 3),
    };
    let t = grid.transform();
    let (model_key, crs_key) = match grid.crs().kind() {
        CrsKind::Geographic => (MODEL_GEOGRAPHIC, KEY_GEOGRAPHIC_TYPE),
        CrsKind::Utm { .. } => (MODEL_PROJECTED, KEY_PROJECTED_TYPE),
    };
    let epsg = grid.crs().epsg() as u16;

    let mut entries: Vec<(u16, Payload)> = vec![
        (IMAGE_WIDTH, Payload::Longs(vec![w as u32])),
        (IMAGE_LENGTH, Payload::Longs(vec![h as u32])),
        (BITS_PER_SAMPLE, Payload::Shorts(vec![bits; spp])),
        (COMPRESSION, Payload::Shorts(vec![1])),
        (PHOTOMETRIC, Payload::Shorts(vec![1])),
    ];
    if let Some(text) = grid.description() {
        if text.bytes().any(|b| b == 0 || !b.is_ascii()) {
            return Err(GeoTiffError::Validation("description must be NUL-free ASCII".into()));
        }
        let mut bytes = text.as_bytes().to_vec();
        bytes.push(0);
        entries.push((IMAGE_DESCRIPTION, Payload::Ascii(bytes)));
    }
    entries.extend([
        (STRIP_OFFSETS, Payload::Longs(vec![0; strips])),
        (SAMPLES_PER_PIXEL, Payload::Shorts(vec![spp as u16])),
        (ROWS_PER_STRIP, Payload::Longs(vec![WRITER_ROWS_PER_STRIP as u32])),
        (STRIP_BYTE_COUNTS, Payload::Longs(strip_counts.clone())),
        (PLANAR_CONFIG, Payload::Shorts(vec![1])),
        (SAMPLE_FORMAT, Payload::Shorts(vec![format; spp])),
        (MODEL_PIXEL_SCALE, Payload::Doubles(vec![t.pixel_size_x, t.pixel_size_y, 0.0])),
        (MODEL_TIEPOINT, Payload::Doubles(vec![0.0, 0.0, 0.0, t.origin_x, t.origin_y, 0.0])),
        (
            GEO_KEY_DIRECTORY,
            Payload::Shorts(vec![
                1, 1, 0, 3,
                KEY_MODEL_TYPE, 0, 1, model_key,
                KEY_RASTER_TYPE, 0, 1, RASTER_PIXEL_IS_AREA,
                crs_key, 0, 1, epsg,
            ]),
        ),
    ]);
    if let Some(nd) = grid.nodata() {
        let mut text = format!("{nd}").into_bytes();
        text.push(0);
        entries.push((GDAL_NODATA, Payload::Ascii(text)));
    }

    // Layout: header, IFD, out-of-line values (word aligned), strips.
    let ifd_len = 2 + 12 * entries.len() + 4;
    let mut cursor = 8 + ifd_len;
    let mut positions = Vec::with_capacity(entries.len());
    for (_, p) in &entries {
        let len = p.encode().len();
        if len > 4 {
            cursor += cursor % 2;
            positions.push(Some(cursor));
            cursor += len;
        } else {
            positions.push(None);
        }
    }
    cursor += cursor % 2;
    let data_start = cursor;
    let mut offset = data_start;
    let mut strip_offsets = Vec::with_capacity(strips);
    for c in &strip_counts {
        strip_offsets.push(offset as u32);
        offset += *c as usize;
    }
    for (tag, p) in entries.iter_mut() {
        if *tag == STRIP_OFFSETS {
            *p = Payload::Longs(strip_offsets.clone());
        }
    }

    let mut out = Vec::with_capacity(data_start + total);
    out.extend_from_slice(b"II");
    out.extend_from_slice(&42u16.to_le_bytes());
    out.extend_from_slice(&8u32.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u16).to_le_bytes());
    for ((tag, p), pos) in entries.iter().zip(&positions) {
        out.extend_from_slice(&tag.to_le_bytes());
        out.extend_from_slice(&p.typ().to_le_bytes());
        out.extend_from_slice(&(p.count() as u32).to_le_bytes());
        match pos {
            Some(at) => out.extend_from_slice(&(*at as u32).to_le_bytes()),
            None => {
                let mut field = p.encode();
                field.resize(4, 0);
                out.extend_from_slice(&field);
            }
        }
    }
    out.extend_from_slice(&0u32.to_le_bytes());
    for ((_, p), pos) in entries.iter().zip(&positions) {
        if let Some(at) = pos {
            out.resize(*at, 0);
            out.extend_from_slice(&p.encode());
        }
    }
    out.resize(data_start, 0);

    let plane = w * h;
    let samples = grid.samples();
    for px in 0..plane {
        for b in 0..spp {
            let i = b * plane + px;
            match samples {
                Samples::U8(v) => out.push(v[i]),
                Samples::U16(v) => out.extend_from_slice(&v[i].to_le_bytes()),
                Samples::F32(v) => out.extend_from_slice(&v[i].to_bits().to_le_bytes()),
            }
        }
    }
    debug_assert_eq!(out.len(), data_start + total);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label_map() -> RasterGrid {
        let t = GeoTransform::new(340_000.0, 540_000.0, 10.0, 10.0).unwrap();
        let crs = CrsId::from_epsg(32636).unwrap();
        RasterGrid::new(2, 1, 1, Samples::U8(vec![1, 4]), Some(0.0), crs, t).unwrap()
    }

    /// Hand-assembled little-endian file for `label_map()`, built field by
    /// field from the TIFF 6.0 / GeoTIFF 1.0 layouts.
    fn hand_assembled() -> Vec<u8> {
        let mut f = Vec::new();
        let le16 = |f: &mut Vec<u8>, v: u16| f.extend_from_slice(&v.to_le_bytes());
        let le32 = |f: &mut Vec<u8>, v: u32| f.extend_from_slice(&v.to_le_bytes());
        f.extend_from_slice(b"II");
        le16(&mut f, 42);
        le32(&mut f, 8);
        // 15 entries -> IFD spans 8 .. 8 + 2 + 180 + 4 = 194
        le16(&mut f, 15);
        let inline = |f: &mut Vec<u8>, tag: u16, typ: u16, value: u32| {
            le16(f, tag);
            le16(f, typ);
            le32(f, 1);
            le32(f, value);
        };
        inline(&mut f, 256, 4, 2);
        inline(&mut f, 257, 4, 1);
        inline(&mut f, 258, 3, 8);
        inline(&mut f, 259, 3, 1);
        inline(&mut f, 262, 3, 1);
        inline(&mut f, 273, 4, 298); // strip right after the value area
        inline(&mut f, 277, 3, 1);
        inline(&mut f, 278, 4, 64);
        inline(&mut f, 279, 4, 2);
        inline(&mut f, 284, 3, 1);
        inline(&mut f, 339, 3, 1);
        // 33550: 3 doubles at 194
        le16(&mut f, 33550);
        le16(&mut f, 12);
        le32(&mut f, 3);
        le32(&mut f, 194);
        // 33922: 6 doubles at 218
        le16(&mut f, 33922);
        le16(&mut f, 12);
        le32(&mut f, 6);
        le32(&mut f, 218);
        // 34735: 16 shorts at 266
        le16(&mut f, 34735);
        le16(&mut f, 3);
        le32(&mut f, 16);
        le32(&mut f, 266);
        // 42113: "0\0" inline
        le16(&mut f, 42113);
        le16(&mut f, 2);
        le32(&mut f, 2);
        f.extend_from_slice(&[b'0', 0, 0, 0]);
        le32(&mut f, 0);
        assert_eq!(f.len(), 194);
        for d in [10.0f64, 10.0, 0.0, 0.0, 0.0, 0.0, 340_000.0, 540_000.0, 0.0] {
            f.extend_from_slice(&d.to_le_bytes());
        }
        assert_eq!(f.len(), 266);
        for s in [1u16, 1, 0, 3, 1024, 0, 1, 1, 1025, 0, 1, 1, 3072, 0, 1, 32636] {
            le16(&mut f, s);
        }
        assert_eq!(f.len(), 298);
        f.extend_from_slice(&[1, 4]);
        f
    }

    #[test]
    fn writer_matches_hand_assembled_fixture() {
        let bytes = write_geotiff(&label_map()).unwrap();
        assert_eq!(bytes, hand_assembled());
        let back = read_geotiff(&hand_assembled()).unwrap();
        assert_eq!(back, label_map());
        assert_eq!(back.crs().epsg(), 32636);
    }

    #[test]
    fn one_pixel_u8() {
        let t = GeoTransform::new(33.0, 1.0, 0.0001, 0.0001).unwrap();
        let g = RasterGrid::new(1, 1, 1, Samples::U8(vec![201]), None, CrsId::WGS84, t).unwrap();
        let back = read_geotiff(&write_geotiff(&g).unwrap()).unwrap();
        assert_eq!(back.get(0, 0, 0), 201.0);
        assert_eq!(back, g);
    }

    #[test]
    fn four_band_u16_round_trip() {
        let t = GeoTransform::new(340_000.0, 540_000.0, 10.0, 10.0).unwrap();
        let crs = CrsId::from_epsg(32636).unwrap();
        let g = RasterGrid::new(2, 2, 4, Samples::U16((0..16).map(|v| v * 1000 + 7).collect()), None, crs, t).unwrap();
        let bytes = write_geotiff(&g).unwrap();
        let back = read_geotiff(&bytes).unwrap();
        assert_eq!(back, g);
        assert_eq!(write_geotiff(&back).unwrap(), bytes);
    }

    /// Big-endian planar-separate file assembled by hand: the reader must not
    /// depend on the writer's canonical choices.
    #[test]
    fn reads_big_endian_planar() {
        let mut f = Vec::new();
        let be16 = |f: &mut Vec<u8>, v: u16| f.extend_from_slice(&v.to_be_bytes());
        let be32 = |f: &mut Vec<u8>, v: u32| f.extend_from_slice(&v.to_be_bytes());
        f.extend_from_slice(b"MM");
        be16(&mut f, 42);
        be32(&mut f, 8);
        let n = 11u16;
        be16(&mut f, n);
        let values_at = 8 + 2 + 12 * n as u32 + 4;
        // short inline values are left-justified in the 4-byte field
        let short = |f: &mut Vec<u8>, tag: u16, v: u16| {
            be16(f, tag);
            be16(f, 3);
            be32(f, 1);
            be16(f, v);
            be16(f, 0);
        };
        let long = |f: &mut Vec<u8>, tag: u16, count: u32, v: u32| {
            be16(f, tag);
            be16(f, 4);
            be32(f, count);
            be32(f, v);
        };
        long(&mut f, 256, 1, 2);
        long(&mut f, 257, 1, 1);
        // bits per sample: 2 shorts inline
        be16(&mut f, 258);
        be16(&mut f, 3);
        be32(&mut f, 2);
        be16(&mut f, 16);
        be16(&mut f, 16);
        let scale_at = values_at;
        let tie_at = scale_at + 24;
        let keys_at = tie_at + 48;
        let offs_at = keys_at + 32;
        let strips_at = offs_at + 8;
        long(&mut f, 273, 2, offs_at);
        short(&mut f, 277, 2);
        long(&mut f, 278, 1, 1);
        // byte counts: 2 longs -> out of line; reuse a block after offsets
        long(&mut f, 279, 2, strips_at + 8);
        short(&mut f, 284, 2);
        be16(&mut f, 33550);
        be16(&mut f, 12);
        be32(&mut f, 3);
        be32(&mut f, scale_at);
        be16(&mut f, 33922);
        be16(&mut f, 12);
        be32(&mut f, 6);
        be32(&mut f, tie_at);
        be16(&mut f, 34735);
        be16(&mut f, 3);
        be32(&mut f, 16);
        be32(&mut f, keys_at);
        be32(&mut f, 0);
        assert_eq!(f.len() as u32, values_at);
        for d in [10.0f64, 10.0, 0.0, 0.0, 0.0, 0.0, 500.0, 900.0, 0.0] {
            f.extend_from_slice(&d.to_be_bytes());
        }
        for s in [1u16, 1, 0, 3, 1024, 0, 1, 1, 1025, 0, 1, 1, 3072, 0, 1, 32736] {
            be16(&mut f, s);
        }
        be32(&mut f, strips_at);
        be32(&mut f, strips_at + 4);
        // plane 0: [1, 2], plane 1: [300, 400]
        for v in [1u16, 2, 300, 400] {
            be16(&mut f, v);
        }
        be32(&mut f, 4);
        be32(&mut f, 4);
        let g = read_geotiff(&f).unwrap();
        assert_eq!((g.width(), g.height(), g.band_count()), (2, 1, 2));
        assert_eq!(g.pixel(0, 0), vec![1.0, 300.0]);
        assert_eq!(g.pixel(0, 1), vec![2.0, 400.0]);
        assert_eq!(g.crs().epsg(), 32736);
        assert_eq!(g.transform().origin_x, 500.0);
    }

    #[test]
    fn truncated_strip_reports_offset() {
        let bytes = write_geotiff(&label_map()).unwrap();
        let cut = &bytes[..bytes.len() - 1];
        match read_geotiff(cut) {
            Err(GeoTiffError::Truncated { offset, needed, len }) => {
                assert_eq!((offset, needed, len), (298, 2, 299));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_compression_and_tiles() {
        let mut bytes = write_geotiff(&label_map()).unwrap();
        // compression entry is the 4th; value field at 10 + 3*12 + 8
        bytes[10 + 3 * 12 + 8] = 5;
        assert!(matches!(read_geotiff(&bytes), Err(GeoTiffError::Unsupported { tag: 259, .. })));
        let mut bytes = write_geotiff(&label_map()).unwrap();
        // retag RowsPerStrip (8th entry) as TileWidth
        bytes[10 + 7 * 12..10 + 7 * 12 + 2].copy_from_slice(&322u16.to_le_bytes());
        assert!(matches!(read_geotiff(&bytes), Err(GeoTiffError::Unsupported { tag: 322, .. })));
    }

    #[test]
    fn missing_geokeys() {
        let mut bytes = write_geotiff(&label_map()).unwrap();
        // retag GeoKeyDirectory (14th entry) as an unrelated private tag
        bytes[10 + 13 * 12..10 + 13 * 12 + 2].copy_from_slice(&65000u16.to_le_bytes());
        assert!(matches!(read_geotiff(&bytes), Err(GeoTiffError::NotGeoreferenced(_))));
    }

    #[test]
    fn bad_magic() {
        assert_eq!(read_geotiff(b"PK\x03\x04"), Err(GeoTiffError::BadMagic));
        assert_eq!(read_geotiff(b"II\x2b\x00"), Err(unsupported(0, "BigTIFF")));
        assert_eq!(read_geotiff(b""), Err(GeoTiffError::BadMagic));
    }
}
