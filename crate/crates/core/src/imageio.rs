//! Grayscale rasters (PGM read/write, PNG read) and a raw little-endian
//! field format for lossless exchange between runs.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::grid::{GridSpec, ScalarField};
use crate::{Error, Result};

/// Affine correspondence between 8-bit gray levels and field values:
/// `0 -> min`, `255 -> max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueMap {
    pub min: f64,
    pub max: f64,
}

impl Default for ValueMap {
    fn default() -> Self {
        Self { min: -50.0, max: 0.0 }
    }
}

impl ValueMap {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(Error::invalid("value_map", format!("need finite min < max, got [{min}, {max}]")));
        }
        Ok(Self { min, max })
    }

    pub fn to_value(&self, gray: u8) -> f64 {
        self.min + (self.max - self.min) * gray as f64 / 255.0
    }

    /// Rounds half up and clamps to `0..=255`.
    pub fn to_gray(&self, value: f64) -> u8 {
        let x = 255.0 * (value - self.min) / (self.max - self.min);
        (x + 0.5).floor().clamp(0.0, 255.0) as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmEncoding {
    /// `P2`
    Ascii,
    /// `P5`
    Binary,
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::ImageFormat {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// 8-bit gray levels, row-major, top row first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn from_field(u: &ScalarField, map: &ValueMap) -> Self {
        let n = u.grid().n();
        Self {
            width: n,
            height: n,
            pixels: u.values().iter().map(|&v| map.to_gray(v)).collect(),
        }
    }

    pub fn to_field(&self, map: &ValueMap) -> Result<ScalarField> {
        if self.width != self.height {
            return Err(Error::GridMismatch(format!(
                "fields live on square grids, image is {}x{}",
                self.width, self.height
            )));
        }
        let grid = GridSpec::pixel(self.width)?;
        let values = Array2::from_shape_vec(
            (self.height, self.width),
            self.pixels.iter().map(|&g| map.to_value(g)).collect(),
        )
        .expect("pixel count matches dimensions");
        ScalarField::new(grid, values)
    }
}

pub fn encode_pgm(image: &GrayImage, encoding: PgmEncoding) -> Vec<u8> {
    let mut out = Vec::with_capacity(image.pixels.len() * 4 + 32);
    match encoding {
        PgmEncoding::Binary => {
            out.extend_from_slice(format!("P5\n{} {}\n255\n", image.width, image.height).as_bytes());
            out.extend_from_slice(&image.pixels);
        }
        PgmEncoding::Ascii => {
            out.extend_from_slice(format!("P2\n{} {}\n255\n", image.width, image.height).as_bytes());
            for row in image.pixels.chunks(image.width) {
                let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
                out.extend_from_slice(line.join(" ").as_bytes());
                out.push(b'\n');
            }
        }
    }
    out
}

/// Header tokenizer honouring `#` comments.
struct Header<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    fn skip_space(&mut self) {
        while self.pos < self.data.len() {
            match self.data[self.pos] {
                b'#' => {
                    while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.data.len() && !self.data[self.pos].is_ascii_whitespace() && self.data[self.pos] != b'#' {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.data[start..self.pos])
    }

    fn number(&mut self) -> Option<usize> {
        std::str::from_utf8(self.token()?).ok()?.parse().ok()
    }
}

pub fn decode_pgm(data: &[u8], path: &Path) -> Result<GrayImage> {
    let mut h = Header { data, pos: 0 };
    let magic = h.token().ok_or_else(|| format_err(path, "empty file"))?;
    let encoding = match magic {
        b"P2" => PgmEncoding::Ascii,
        b"P5" => PgmEncoding::Binary,
        _ => return Err(format_err(path, "not a portable graymap (P2/P5)")),
    };
    let width = h.number().ok_or_else(|| format_err(path, "bad width"))?;
    let height = h.number().ok_or_else(|| format_err(path, "bad height"))?;
    let maxval = h.number().ok_or_else(|| format_err(path, "bad maxval"))?;
    if maxval != 255 {
        return Err(format_err(path, format!("only maxval 255 is supported, got {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(format_err(path, "zero-sized image"));
    }
    let count = width * height;
    let pixels = match encoding {
        PgmEncoding::Binary => {
            // exactly one whitespace byte separates the header from the raster
            let start = h.pos + 1;
            let raster = data
                .get(start..start + count)
                .ok_or_else(|| format_err(path, "truncated raster"))?;
            raster.to_vec()
        }
        PgmEncoding::Ascii => {
            let mut px = Vec::with_capacity(count);
            for _ in 0..count {
                let v = h.number().ok_or_else(|| format_err(path, "truncated or malformed raster"))?;
                if v > 255 {
                    return Err(format_err(path, format!("sample {v} exceeds maxval")));
                }
                px.push(v as u8);
            }
            px
        }
    };
    Ok(GrayImage { width, height, pixels })
}

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

fn decode_png(data: &[u8], path: &Path) -> Result<GrayImage> {
    let decoder = png::Decoder::new(std::io::Cursor::new(data));
    let mut reader = decoder.read_info().map_err(|e| format_err(path, e.to_string()))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(format_err(
            path,
            format!("expected 8-bit grayscale PNG, got {:?} {:?}", info.color_type, info.bit_depth),
        ));
    }
    let (width, height) = (info.width as usize, info.height as usize);
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| format_err(path, "image too large"))?];
    let frame = reader.next_frame(&mut buf).map_err(|e| format_err(path, e.to_string()))?;
    buf.truncate(frame.buffer_size());
    Ok(GrayImage {
        width,
        height,
        pixels: buf,
    })
}

pub fn read_gray(path: &Path) -> Result<GrayImage> {
    let data = fs::read(path)?;
    if data.starts_with(&PNG_SIGNATURE) {
        decode_png(&data, path)
    } else {
        decode_pgm(&data, path)
    }
}

/// Reads a PGM or grayscale PNG as a field on the pixel grid.
pub fn read_image(path: &Path, map: &ValueMap) -> Result<ScalarField> {
    read_gray(path)?.to_field(map)
}

pub fn write_image(u: &ScalarField, path: &Path, map: &ValueMap, encoding: PgmEncoding) -> Result<()> {
    let bytes = encode_pgm(&GrayImage::from_field(u, map), encoding);
    fs::write(path, bytes)?;
    Ok(())
}

/// Text describing the value map, written next to an image.
pub fn sidecar_text(map: &ValueMap, depth: f64) -> String {
    format!("min = {}\nmax = {}\nM = {}\n", map.min, map.max, depth)
}

pub fn write_sidecar(path: &Path, map: &ValueMap, depth: f64) -> Result<()> {
    fs::write(path, sidecar_text(map, depth))?;
    Ok(())
}

pub fn parse_sidecar(text: &str, path: &Path) -> Result<(ValueMap, f64)> {
    let mut min = None;
    let mut max = None;
    let mut depth = None;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format_err(path, format!("malformed sidecar line `{line}`")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| format_err(path, format!("non-numeric value in `{line}`")))?;
        match key.trim() {
            "min" => min = Some(value),
            "max" => max = Some(value),
            "M" => depth = Some(value),
            other => return Err(format_err(path, format!("unknown sidecar key `{other}`"))),
        }
    }
    match (min, max, depth) {
        (Some(a), Some(b), Some(m)) => Ok((ValueMap::new(a, b)?, m)),
        _ => Err(format_err(path, "sidecar needs min, max and M")),
    }
}

const FIELD_MAGIC: &[u8; 4] = b"ATVF";

/// `ATVF`, `u32` rows, `u32` cols, `f64` half-width, then the values, all
/// little-endian.
pub fn encode_field(u: &ScalarField) -> Vec<u8> {
    let n = u.grid().n();
    let mut out = Vec::with_capacity(20 + 8 * n * n);
    out.extend_from_slice(FIELD_MAGIC);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&u.grid().half_width().to_le_bytes());
    for v in u.values().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_field(data: &[u8], path: &Path) -> Result<ScalarField> {
    if data.len() < 20 || &data[..4] != FIELD_MAGIC {
        return Err(format_err(path, "not a raw field file"));
    }
    let rows = u32::from_le_bytes(data[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(data[8..12].try_into().unwrap()) as usize;
    let half_width = f64::from_le_bytes(data[12..20].try_into().unwrap());
    if rows != cols {
        return Err(format_err(path, format!("non-square field {rows}x{cols}")));
    }
    let body = &data[20..];
    if body.len() != 8 * rows * cols {
        return Err(format_err(path, "payload length does not match header"));
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let grid = GridSpec::new(rows, half_width)?;
    ScalarField::new(grid, Array2::from_shape_vec((rows, cols), values).unwrap())
}

pub fn write_field(u: &ScalarField, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&encode_field(u))?;
    w.flush()?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<ScalarField> {
    let mut data = Vec::new();
    fs::File::open(path)?.read_to_end(&mut data)?;
    decode_field(&data, path)
}
