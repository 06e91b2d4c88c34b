//! File formats: PNG and binary PGM rasters, Middlebury `.flo`, and the
//! little-endian `SVPP` (probability map), `SVPW` (fusion weights) and `SVPM`
//! (parser model) containers.
//!
//! Every format has a pure `encode_*`/`decode_*` pair over byte buffers and a
//! path wrapper. Binary containers store 32-bit floats; trained parameters are
//! kept at `f32` precision, so write-then-read is exact.

use std::fs;
use std::path::Path;

use crate::confidence::ConfidenceMap;
use crate::error::{malformed, Result};
use crate::fusion::FusionWeights;
use crate::grid::{FlowField, Grid, Image, LabelMap, ProbMap};
use crate::parser::ParserModel;

/// Middlebury `.flo` sanity tag.
pub const FLO_TAG: f32 = 202021.25;

/// Refuse headers describing more than this many floats.
const MAX_ELEMENTS: u64 = 1 << 31;

struct Reader<'a> {
    format: &'static str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(format: &'static str, bytes: &'a [u8]) -> Self {
        Self {
            format,
            bytes,
            pos: 0,
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| malformed(self.format, "unexpected end of data"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn magic(&mut self, tag: &[u8; 4]) -> Result<()> {
        if self.take(4)? != tag {
            return Err(malformed(self.format, "bad magic"));
        }
        Ok(())
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    /// `n` floats, after checking that exactly that many remain.
    fn floats(&mut self, n: u64, expect_end: bool) -> Result<Vec<f32>> {
        if n > MAX_ELEMENTS {
            return Err(malformed(self.format, "header declares too many values"));
        }
        let bytes = self.take(n as usize * 4)?;
        if expect_end {
            self.end()?;
        }
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn end(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(malformed(self.format, "trailing bytes"));
        }
        Ok(())
    }
}

fn push_f32s(out: &mut Vec<u8>, values: impl IntoIterator<Item = f32>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn push_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn product(dims: &[u32]) -> u64 {
    dims.iter().fold(1u64, |acc, &d| acc.saturating_mul(d as u64))
}

// --- SVPP ---

pub fn encode_probmap(map: &ProbMap) -> Vec<u8> {
    encode_svpp_grid(map.grid())
}

/// `SVPP` container for any non-negative grid; used for raw confidence export
/// with `K = 1`.
pub fn encode_svpp_grid(grid: &Grid) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + grid.data().len() * 4);
    out.extend_from_slice(b"SVPP");
    push_u32(&mut out, grid.width());
    push_u32(&mut out, grid.height());
    push_u32(&mut out, grid.channels());
    push_f32s(&mut out, grid.data().iter().copied());
    out
}

pub fn decode_svpp_grid(bytes: &[u8]) -> Result<Grid> {
    let mut r = Reader::new("SVPP", bytes);
    r.magic(b"SVPP")?;
    let (w, h, k) = (r.u32()?, r.u32()?, r.u32()?);
    let data = r.floats(product(&[w, h, k]), true)?;
    Grid::new(w as usize, h as usize, k as usize, data).map_err(|e| malformed("SVPP", e))
}

pub fn decode_probmap(bytes: &[u8]) -> Result<ProbMap> {
    ProbMap::new(decode_svpp_grid(bytes)?).map_err(|e| malformed("SVPP", e))
}

pub fn decode_confidence(bytes: &[u8]) -> Result<ConfidenceMap> {
    let g = decode_svpp_grid(bytes)?;
    if g.channels() != 1 {
        return Err(malformed("SVPP", "confidence maps have one channel"));
    }
    ConfidenceMap::new(g.width(), g.height(), g.into_data()).map_err(|e| malformed("SVPP", e))
}

// --- .flo ---

pub fn encode_flo(flow: &FlowField) -> Vec<u8> {
    let g = flow.grid();
    let mut out = Vec::with_capacity(12 + g.data().len() * 4);
    out.extend_from_slice(&FLO_TAG.to_le_bytes());
    out.extend_from_slice(&(g.width() as i32).to_le_bytes());
    out.extend_from_slice(&(g.height() as i32).to_le_bytes());
    push_f32s(&mut out, g.data().iter().copied());
    out
}

pub fn decode_flo(bytes: &[u8]) -> Result<FlowField> {
    let mut r = Reader::new("flo", bytes);
    if r.f32()? != FLO_TAG {
        return Err(malformed("flo", "bad tag"));
    }
    let (w, h) = (r.i32()?, r.i32()?);
    if w <= 0 || h <= 0 {
        return Err(malformed("flo", format!("bad size {w}x{h}")));
    }
    let data = r.floats(product(&[w as u32, h as u32, 2]), true)?;
    let grid = Grid::new(w as usize, h as usize, 2, data).map_err(|e| malformed("flo", e))?;
    FlowField::new(grid).map_err(|e| malformed("flo", e))
}

// --- SVPW ---

pub fn encode_fusion_weights(w: &FusionWeights) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(b"SVPW");
    push_u32(&mut out, w.classes());
    push_f32s(&mut out, w.matrix().iter().chain(w.bias()).map(|&v| v as f32));
    out
}

pub fn decode_fusion_weights(bytes: &[u8]) -> Result<FusionWeights> {
    let mut r = Reader::new("SVPW", bytes);
    r.magic(b"SVPW")?;
    let k = r.u32()?;
    let matrix = r.floats(product(&[k, k, 3]), false)?;
    let bias = r.floats(k as u64, true)?;
    FusionWeights::new(
        k as usize,
        matrix.into_iter().map(f64::from).collect(),
        bias.into_iter().map(f64::from).collect(),
    )
    .map_err(|e| malformed("SVPW", e))
}

// --- SVPM ---

pub fn encode_parser_model(m: &ParserModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(b"SVPM");
    push_u32(&mut out, m.classes());
    push_u32(&mut out, m.feature_mean().len());
    let all = m
        .matrix()
        .iter()
        .chain(m.bias())
        .chain(m.feature_mean())
        .chain(m.feature_std());
    push_f32s(&mut out, all.map(|&v| v as f32));
    out
}

pub fn decode_parser_model(bytes: &[u8]) -> Result<ParserModel> {
    let mut r = Reader::new("SVPM", bytes);
    r.magic(b"SVPM")?;
    let (k, d) = (r.u32()?, r.u32()?);
    let to64 = |v: Vec<f32>| v.into_iter().map(f64::from).collect::<Vec<_>>();
    let matrix = to64(r.floats(product(&[k, d]), false)?);
    let bias = to64(r.floats(k as u64, false)?);
    let mean = to64(r.floats(d as u64, false)?);
    let std = to64(r.floats(d as u64, true)?);
    ParserModel::new(k as usize, matrix, bias, mean, std).map_err(|e| malformed("SVPM", e))
}

// --- PGM ---

/// Binary PGM (`P5`, maxval 255) with one byte per pixel.
pub fn encode_pgm(labels: &LabelMap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", labels.width(), labels.height()).into_bytes();
    out.extend_from_slice(labels.data());
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<LabelMap> {
    let bad = |why: &str| malformed("PGM", why);
    if bytes.get(..2) != Some(b"P5") {
        return Err(bad("expected P5 magic"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for f in &mut fields {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *f = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad header number"))?;
    }
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(bad("only maxval 255 is supported"));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(bad("missing separator after header"));
    }
    pos += 1;
    let n = w.checked_mul(h).ok_or_else(|| bad("size overflow"))?;
    if bytes.len() - pos != n {
        return Err(bad("pixel data length does not match the header"));
    }
    LabelMap::new(w, h, bytes[pos..].to_vec()).map_err(|e| malformed("PGM", e))
}

// --- PNG ---

fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// 8-bit RGB bytes of an image, row-major.
pub fn image_to_rgb8(img: &Image) -> Vec<u8> {
    img.grid().data().iter().map(|&v| to_byte(v)).collect()
}

pub fn image_from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Image> {
    Image::from_rgb(
        width,
        height,
        bytes.iter().map(|&b| b as f32 / 255.0).collect(),
    )
}

/// `round(255 * c)` per pixel.
pub fn confidence_to_gray8(conf: &ConfidenceMap) -> Vec<u8> {
    conf.values().iter().map(|&v| to_byte(v)).collect()
}

#[cfg(feature = "png")]
mod png_io {
    use super::*;
    use image::{ExtendedColorType, ImageFormat};

    fn save(path: &Path, w: usize, h: usize, bytes: &[u8], color: ExtendedColorType) -> Result<()> {
        image::save_buffer_with_format(path, bytes, w as u32, h as u32, color, ImageFormat::Png)?;
        Ok(())
    }

    pub fn write_rgb8_png(path: &Path, w: usize, h: usize, rgb: &[u8]) -> Result<()> {
        save(path, w, h, rgb, ExtendedColorType::Rgb8)
    }

    pub fn read_image(path: &Path) -> Result<Image> {
        let img = image::open(path)?.into_rgb8();
        let (w, h) = img.dimensions();
        image_from_rgb8(w as usize, h as usize, img.as_raw())
    }

    pub fn write_image(path: &Path, img: &Image) -> Result<()> {
        write_rgb8_png(path, img.width(), img.height(), &image_to_rgb8(img))
    }

    pub fn read_label_png(path: &Path) -> Result<LabelMap> {
        let img = image::open(path)?;
        if img.color() != image::ColorType::L8 {
            return Err(malformed("label PNG", "expected 8-bit grayscale"));
        }
        let g = img.into_luma8();
        let (w, h) = g.dimensions();
        LabelMap::new(w as usize, h as usize, g.into_raw())
    }

    pub fn write_label_png(path: &Path, labels: &LabelMap) -> Result<()> {
        save(path, labels.width(), labels.height(), labels.data(), ExtendedColorType::L8)
    }

    pub fn write_confidence_png(path: &Path, conf: &ConfidenceMap) -> Result<()> {
        save(
            path,
            conf.width(),
            conf.height(),
            &confidence_to_gray8(conf),
            ExtendedColorType::L8,
        )
    }
}

#[cfg(feature = "png")]
pub use png_io::{read_image, write_confidence_png, write_image, write_rgb8_png};

fn is_pgm(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

/// Reads a label map from `.pgm`, or from an 8-bit grayscale PNG otherwise.
pub fn read_label_map(path: &Path) -> Result<LabelMap> {
    if is_pgm(path) {
        return decode_pgm(&fs::read(path)?);
    }
    #[cfg(feature = "png")]
    {
        png_io::read_label_png(path)
    }
    #[cfg(not(feature = "png"))]
    Err(crate::error::invalid("PNG support is disabled; use .pgm"))
}

pub fn write_label_map(path: &Path, labels: &LabelMap) -> Result<()> {
    if is_pgm(path) {
        return Ok(fs::write(path, encode_pgm(labels))?);
    }
    #[cfg(feature = "png")]
    {
        png_io::write_label_png(path, labels)
    }
    #[cfg(not(feature = "png"))]
    Err(crate::error::invalid("PNG support is disabled; use .pgm"))
}

pub fn read_probmap(path: &Path) -> Result<ProbMap> {
    decode_probmap(&fs::read(path)?)
}

pub fn write_probmap(path: &Path, map: &ProbMap) -> Result<()> {
    Ok(fs::write(path, encode_probmap(map))?)
}

pub fn read_flo(path: &Path) -> Result<FlowField> {
    decode_flo(&fs::read(path)?)
}

pub fn write_flo(path: &Path, flow: &FlowField) -> Result<()> {
    Ok(fs::write(path, encode_flo(flow))?)
}

pub fn read_fusion_weights(path: &Path) -> Result<FusionWeights> {
    decode_fusion_weights(&fs::read(path)?)
}

pub fn write_fusion_weights(path: &Path, w: &FusionWeights) -> Result<()> {
    Ok(fs::write(path, encode_fusion_weights(w))?)
}

pub fn read_parser_model(path: &Path) -> Result<ParserModel> {
    decode_parser_model(&fs::read(path)?)
}

pub fn write_parser_model(path: &Path, m: &ParserModel) -> Result<()> {
    Ok(fs::write(path, encode_parser_model(m))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn flo_layout() {
        let f = FlowField::uniform(2, 1, 1.5, -2.0).unwrap();
        let b = encode_flo(&f);
        assert_eq!(b.len(), 12 + 16);
        assert_eq!(&b[..4], &202021.25f32.to_le_bytes());
        assert_eq!(&b[4..8], &2i32.to_le_bytes());
        assert_eq!(&b[12..16], &1.5f32.to_le_bytes());
        assert_eq!(&b[16..20], &(-2.0f32).to_le_bytes());
        assert_eq!(decode_flo(&b).unwrap(), f);
    }

    #[test]
    fn svpp_layout_and_errors() {
        let p = ProbMap::uniform(3, 2, 4).unwrap();
        let b = encode_probmap(&p);
        assert_eq!(&b[..4], b"SVPP");
        assert_eq!(b.len(), 16 + 3 * 2 * 4 * 4);
        assert_eq!(decode_probmap(&b).unwrap(), p);
        assert!(matches!(decode_probmap(&b[..b.len() - 1]), Err(Error::Format { .. })));
        let mut extra = b.clone();
        extra.push(0);
        assert!(decode_probmap(&extra).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(decode_probmap(&bad).is_err());
        // absurd header must not allocate
        let mut huge = b"SVPP".to_vec();
        for _ in 0..3 {
            huge.extend_from_slice(&u32::MAX.to_le_bytes());
        }
        assert!(decode_probmap(&huge).is_err());
    }

    #[test]
    fn svpw_round_trip() {
        let w = FusionWeights::gaussian(3, 4);
        let b = encode_fusion_weights(&w);
        assert_eq!(b.len(), 8 + (27 + 3) * 4);
        let back = decode_fusion_weights(&b).unwrap();
        assert_eq!(back, w);
        assert_eq!(encode_fusion_weights(&back), b);
    }

    #[test]
    fn svpm_round_trip() {
        let m = ParserModel::zeros(5);
        let b = encode_parser_model(&m);
        assert_eq!(&b[4..8], &5u32.to_le_bytes());
        assert_eq!(&b[8..12], &11u32.to_le_bytes());
        assert_eq!(decode_parser_model(&b).unwrap(), m);
    }

    #[test]
    fn pgm_round_trip_with_comment() {
        let l = LabelMap::new(3, 2, vec![0, 1, 2, 3, 4, 255]).unwrap();
        let b = encode_pgm(&l);
        assert_eq!(decode_pgm(&b).unwrap(), l);
        let mut commented = b"P5\n# made by hand\n3 2\n255\n".to_vec();
        commented.extend_from_slice(l.data());
        assert_eq!(decode_pgm(&commented).unwrap(), l);
        assert!(decode_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pgm(b"P5\n1 1\n65535\n\0\0").is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\0").is_err());
    }

    #[test]
    fn confidence_bytes_round() {
        let c = ConfidenceMap::new(3, 1, vec![1.0, 0.5, 0.001]).unwrap();
        assert_eq!(confidence_to_gray8(&c), vec![255, 128, 0]);
    }

    #[cfg(feature = "png")]
    #[test]
    fn png_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::from_fn(5, 3, |x, y| {
            [x as f32 / 4.0, y as f32 / 2.0, ((x * y) % 7) as f32 / 255.0]
        })
        .unwrap();
        let quantized = image_from_rgb8(5, 3, &image_to_rgb8(&img)).unwrap();
        let p = dir.path().join("a.png");
        write_image(&p, &quantized).unwrap();
        assert_eq!(read_image(&p).unwrap(), quantized);

        let l = LabelMap::new(2, 2, vec![0, 3, 1, 2]).unwrap();
        for name in ["l.png", "l.pgm"] {
            let p = dir.path().join(name);
            write_label_map(&p, &l).unwrap();
            assert_eq!(read_label_map(&p).unwrap(), l);
        }
        // RGB PNGs are not label maps
        assert!(read_label_map(&dir.path().join("a.png")).is_err());
    }
}
