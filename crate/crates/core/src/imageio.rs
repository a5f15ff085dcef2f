//! PNG reading and writing for RGB images, palette-indexed label maps and
//! 16-bit count grids.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{Error, Result};
use crate::labels::{LabelMap, ProbabilityMap};

/// 8-bit RGB image, row-major, 3 bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

fn image_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn encode(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    palette: Option<Vec<u8>>,
    data: &[u8],
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(depth);
    if let Some(p) = palette {
        enc.set_palette(p);
    }
    let mut writer = enc.write_header().map_err(|e| image_err(path, e))?;
    writer.write_image_data(data).map_err(|e| image_err(path, e))?;
    writer.finish().map_err(|e| image_err(path, e))?;
    Ok(())
}

struct Decoded {
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    data: Vec<u8>,
}

fn decode(path: &Path) -> Result<Decoded> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dec = png::Decoder::new(BufReader::new(file));
    dec.set_transformations(png::Transformations::IDENTITY);
    let mut reader = dec.read_info().map_err(|e| image_err(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| image_err(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| image_err(path, e))?;
    buf.truncate(info.buffer_size());
    Ok(Decoded {
        width: info.width as usize,
        height: info.height as usize,
        color: info.color_type,
        depth: info.bit_depth,
        data: buf,
    })
}

pub fn write_rgb(path: &Path, img: &RgbImage) -> Result<()> {
    encode(
        path,
        img.width,
        img.height,
        png::ColorType::Rgb,
        png::BitDepth::Eight,
        None,
        &img.data,
    )
}

/// Reads 8-bit RGB or RGBA (alpha dropped) PNGs.
pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    let d = decode(path)?;
    if d.depth != png::BitDepth::Eight {
        return Err(image_err(path, "expected 8-bit channels"));
    }
    let data = match d.color {
        png::ColorType::Rgb => d.data,
        png::ColorType::Rgba => d
            .data
            .chunks_exact(4)
            .flat_map(|px| [px[0], px[1], px[2]])
            .collect(),
        png::ColorType::Grayscale => d.data.iter().flat_map(|&g| [g, g, g]).collect(),
        other => return Err(image_err(path, format!("unsupported color type {other:?}"))),
    };
    Ok(RgbImage {
        width: d.width,
        height: d.height,
        data,
    })
}

/// Writes a label map as an 8-bit palette-indexed PNG (class id = palette index).
pub fn write_labels(path: &Path, labels: &LabelMap, palette: &[[u8; 3]]) -> Result<()> {
    if let Some(max) = labels.max_label() {
        if max as usize >= palette.len() {
            return Err(Error::Label(format!(
                "label {max} has no palette entry ({} colors)",
                palette.len()
            )));
        }
    }
    let flat: Vec<u8> = palette.iter().flatten().copied().collect();
    encode(
        path,
        labels.width(),
        labels.height(),
        png::ColorType::Indexed,
        png::BitDepth::Eight,
        Some(flat),
        labels.data(),
    )
}

/// Reads an 8-bit palette-indexed (or 8-bit grayscale) PNG as class ids.
pub fn read_labels(path: &Path) -> Result<LabelMap> {
    let d = decode(path)?;
    match (d.color, d.depth) {
        (png::ColorType::Indexed | png::ColorType::Grayscale, png::BitDepth::Eight) => {
            LabelMap::new(d.width, d.height, d.data)
        }
        (c, b) => Err(image_err(
            path,
            format!("expected 8-bit palette-indexed labels, found {c:?} {b:?}"),
        )),
    }
}

pub fn write_gray16(path: &Path, width: usize, height: usize, values: &[u16]) -> Result<()> {
    assert_eq!(values.len(), width * height);
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_be_bytes()).collect();
    encode(
        path,
        width,
        height,
        png::ColorType::Grayscale,
        png::BitDepth::Sixteen,
        None,
        &bytes,
    )
}

pub fn read_gray16(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let d = decode(path)?;
    if d.color != png::ColorType::Grayscale || d.depth != png::BitDepth::Sixteen {
        return Err(image_err(path, "expected 16-bit grayscale"));
    }
    let values = d
        .data
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]))
        .collect();
    Ok((d.width, d.height, values))
}

const PROB_MAGIC: &[u8; 8] = b"CAMPROB1";

/// Raw posteriors: magic, `u32` width, height and class count, then
/// little-endian `f64` values in pixel-major order.
pub fn write_probabilities(path: &Path, map: &ProbabilityMap) -> Result<()> {
    let mut out = Vec::with_capacity(20 + map.data().len() * 8);
    out.extend_from_slice(PROB_MAGIC);
    for v in [map.width(), map.height(), map.n_classes()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in map.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_probabilities(path: &Path) -> Result<ProbabilityMap> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if buf.len() < 20 || &buf[..8] != PROB_MAGIC {
        return Err(image_err(path, "not a probability map"));
    }
    let word = |i: usize| u32::from_le_bytes(buf[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
    let (w, h, n) = (word(0), word(1), word(2));
    if buf.len() != 20 + w * h * n * 8 {
        return Err(image_err(path, "probability map size does not match its header"));
    }
    let data = buf[20..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ProbabilityMap::new(w, h, n, data)
}
