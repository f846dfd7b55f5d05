//! Colour rendering of label maps.

use super::{GeodataError, LabelScheme, RasterGrid, Result, SampleType, Samples};

pub type Rgb = [u8; 3];

pub const NODATA_COLOR: Rgb = [0x00, 0x00, 0x00];

const PALETTE: [(&str, Rgb); 4] = [
    ("trees", [0x22, 0x8B, 0x22]),
    ("grass", [0xAD, 0xFF, 0x2F]),
    ("impervious", [0x80, 0x80, 0x80]),
    ("water", [0x1E, 0x90, 0xFF]),
];

/// Colour used for categories missing from the fixed table.
const OTHER_COLOR: Rgb = [0xFF, 0x00, 0xFF];

pub fn color_for(category: &str) -> Rgb {
    let key = category.trim().to_ascii_lowercase();
    PALETTE.iter().find(|(n, _)| *n == key).map(|e| e.1).unwrap_or(OTHER_COLOR)
}

#[derive(Debug, Clone)]
pub struct RenderedMap {
    /// 3-band u8 raster with the label map's georeferencing.
    pub rgb: RasterGrid,
    /// The same pixels as an 8-bit RGB PNG.
    pub png: Vec<u8>,
    /// Pixels whose (non-zero) label is not in the scheme.
    pub unknown_labels: u64,
}

pub fn render_classmap(labels: &RasterGrid, scheme: &LabelScheme) -> Result<RenderedMap> {
    if labels.band_count() != 1 {
        return Err(GeodataError::InvalidRaster(format!("label map has {} bands", labels.band_count())));
    }
    let (w, h) = (labels.width(), labels.height());
    let n = w * h;
    let mut table = [None; 256];
    for (name, code) in scheme.entries() {
        table[*code as usize] = Some(color_for(name));
    }
    let mut planes = vec![0u8; 3 * n];
    let mut unknown = 0u64;
    for r in 0..h {
        for c in 0..w {
            let v = labels.get(0, r, c);
            let color = if labels.is_nodata(v) || v == 0.0 {
                NODATA_COLOR
            } else {
                let code = v as i64;
                let hit = if (0..256).contains(&code) && code as f64 == v { table[code as usize] } else { None };
                hit.unwrap_or_else(|| {
                    unknown += 1;
                    NODATA_COLOR
                })
            };
            let i = r * w + c;
            for b in 0..3 {
                planes[b * n + i] = color[b];
            }
        }
    }
    let rgb = RasterGrid::new(w, h, 3, Samples::U8(planes), None, labels.crs(), labels.transform())?;
    let png = encode_png(&rgb)?;
    Ok(RenderedMap { rgb, png, unknown_labels: unknown })
}

/// Encodes a 3-band u8 raster as a non-interlaced 8-bit RGB PNG.
pub fn encode_png(rgb: &RasterGrid) -> Result<Vec<u8>> {
    if rgb.band_count() != 3 || rgb.sample_type() != SampleType::U8 {
        return Err(GeodataError::InvalidRaster("PNG output needs a 3-band u8 raster".into()));
    }
    let (w, h) = (rgb.width(), rgb.height());
    let mut data = Vec::with_capacity(3 * w * h);
    for r in 0..h {
        for c in 0..w {
            for b in 0..3 {
                data.push(rgb.get(b, r, c) as u8);
            }
        }
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w as u32, h as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| GeodataError::Serialize(e.to_string()))?;
        writer.write_image_data(&data).map_err(|e| GeodataError::Serialize(e.to_string()))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodata::GeoTransform;
    use crate::geodesy::CrsId;

    fn labels(values: Vec<u8>, w: usize, h: usize) -> RasterGrid {
        let t = GeoTransform::new(0.0, 0.0, 10.0, 10.0).unwrap();
        RasterGrid::new(w, h, 1, Samples::U8(values), Some(0.0), CrsId::from_epsg(32636).unwrap(), t).unwrap()
    }

    fn decode(png_bytes: &[u8]) -> (png::OutputInfo, Vec<u8>) {
        let decoder = png::Decoder::new(std::io::Cursor::new(png_bytes));
        let mut reader = decoder.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        let info = reader.next_frame(&mut buf).unwrap();
        buf.truncate(info.buffer_size());
        (info, buf)
    }

    #[test]
    fn all_water() {
        let m = render_classmap(&labels(vec![4; 6], 3, 2), &LabelScheme::default()).unwrap();
        for r in 0..2 {
            for c in 0..3 {
                assert_eq!(m.rgb.pixel(r, c), vec![30.0, 144.0, 255.0]);
            }
        }
        assert_eq!(m.unknown_labels, 0);
    }

    #[test]
    fn png_matches_raster() {
        let m = render_classmap(&labels(vec![1, 2, 3, 4], 2, 2), &LabelScheme::default()).unwrap();
        let (info, buf) = decode(&m.png);
        assert_eq!((info.width, info.height), (2, 2));
        assert_eq!(info.color_type, png::ColorType::Rgb);
        let mut colors = std::collections::BTreeSet::new();
        for r in 0..2 {
            for c in 0..2 {
                let px: Vec<u8> = m.rgb.pixel(r, c).iter().map(|v| *v as u8).collect();
                let at = 3 * (r * 2 + c);
                assert_eq!(&buf[at..at + 3], px.as_slice());
                colors.insert(px);
            }
        }
        assert_eq!(colors.len(), 4);
        assert_eq!(m.rgb.transform(), labels(vec![0; 4], 2, 2).transform());
    }

    #[test]
    fn unknown_labels_counted() {
        let m = render_classmap(&labels(vec![0, 9, 1, 9], 2, 2), &LabelScheme::default()).unwrap();
        assert_eq!(m.unknown_labels, 2);
        assert_eq!(m.rgb.pixel(0, 1), vec![0.0, 0.0, 0.0]);
        assert_eq!(m.rgb.pixel(0, 0), vec![0.0, 0.0, 0.0]);
    }
}
