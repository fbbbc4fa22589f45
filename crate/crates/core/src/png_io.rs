//! Thin PNG helpers over the `png` crate: grayscale 8/16-bit and RGBA8.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use png::{BitDepth, ColorType, Transformations};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Decoded grayscale PNG, widened to 16 bits. `bit_depth` is the stored depth.
pub struct GrayPng {
    pub grid: Grid<u16>,
    pub bit_depth: u8,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

pub fn read_gray(path: &Path) -> Result<GrayPng> {
    let mut decoder = png::Decoder::new(open(path)?);
    decoder.set_transformations(Transformations::IDENTITY);
    let mut reader = decoder.read_info()?;
    let info = reader.info();
    let (width, height) = (info.width as usize, info.height as usize);
    let (color, depth) = (info.color_type, info.bit_depth);
    if color != ColorType::Grayscale {
        return Err(Error::UnsupportedImage(format!(
            "{}: expected single-band grayscale, found {color:?}",
            path.display()
        )));
    }
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let frame = reader.next_frame(&mut buf)?;
    let bytes = &buf[..frame.buffer_size()];
    let stride = frame.line_size;
    let (data, bit_depth) = match depth {
        BitDepth::Eight => {
            let mut out = Vec::with_capacity(width * height);
            for row in bytes.chunks(stride).take(height) {
                out.extend(row[..width].iter().map(|&b| b as u16));
            }
            (out, 8)
        }
        BitDepth::Sixteen => {
            let mut out = Vec::with_capacity(width * height);
            for row in bytes.chunks(stride).take(height) {
                out.extend(
                    row[..2 * width]
                        .chunks_exact(2)
                        .map(|c| u16::from_be_bytes([c[0], c[1]])),
                );
            }
            (out, 16)
        }
        other => {
            return Err(Error::UnsupportedImage(format!(
                "{}: unsupported bit depth {other:?}",
                path.display()
            )))
        }
    };
    let grid = Grid::from_vec(width, height, data)
        .ok_or_else(|| Error::UnsupportedImage(format!("{}: truncated", path.display())))?;
    Ok(GrayPng { grid, bit_depth })
}

pub fn read_rgba8(path: &Path) -> Result<Grid<[u8; 4]>> {
    let mut decoder = png::Decoder::new(open(path)?);
    decoder.set_transformations(Transformations::IDENTITY);
    let mut reader = decoder.read_info()?;
    let info = reader.info();
    let (width, height) = (info.width as usize, info.height as usize);
    if info.color_type != ColorType::Rgba || info.bit_depth != BitDepth::Eight {
        return Err(Error::UnsupportedImage(format!(
            "{}: expected 8-bit RGBA label image",
            path.display()
        )));
    }
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let frame = reader.next_frame(&mut buf)?;
    let stride = frame.line_size;
    let mut out = Vec::with_capacity(width * height);
    for row in buf[..frame.buffer_size()].chunks(stride).take(height) {
        out.extend(
            row[..4 * width]
                .chunks_exact(4)
                .map(|c| [c[0], c[1], c[2], c[3]]),
        );
    }
    Grid::from_vec(width, height, out)
        .ok_or_else(|| Error::UnsupportedImage(format!("{}: truncated", path.display())))
}

fn encode<W: Write>(
    sink: W,
    width: usize,
    height: usize,
    color: ColorType,
    depth: BitDepth,
    text: Option<&str>,
    bytes: &[u8],
) -> Result<()> {
    let mut encoder = png::Encoder::new(sink, width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(depth);
    if let Some(text) = text {
        encoder.add_text_chunk("Comment".to_string(), text.to_string())?;
    }
    let mut writer = encoder.write_header()?;
    writer.write_image_data(bytes)?;
    writer.finish()?;
    Ok(())
}

pub fn encode_gray16<W: Write>(sink: W, grid: &Grid<u16>, text: Option<&str>) -> Result<()> {
    let bytes: Vec<u8> = grid
        .as_slice()
        .iter()
        .flat_map(|v| v.to_be_bytes())
        .collect();
    encode(
        sink,
        grid.width(),
        grid.height(),
        ColorType::Grayscale,
        BitDepth::Sixteen,
        text,
        &bytes,
    )
}

pub fn encode_gray8<W: Write>(sink: W, grid: &Grid<u8>, text: Option<&str>) -> Result<()> {
    encode(
        sink,
        grid.width(),
        grid.height(),
        ColorType::Grayscale,
        BitDepth::Eight,
        text,
        grid.as_slice(),
    )
}

pub fn encode_rgba8<W: Write>(sink: W, grid: &Grid<[u8; 4]>, text: Option<&str>) -> Result<()> {
    let bytes: Vec<u8> = grid.as_slice().iter().flatten().copied().collect();
    encode(
        sink,
        grid.width(),
        grid.height(),
        ColorType::Rgba,
        BitDepth::Eight,
        text,
        &bytes,
    )
}
