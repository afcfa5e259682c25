//! Image file IO.
//!
//! Reads binary Netpbm (`P6` RGB, `P5` gray, maxval 255) and 8-bit PNG
//! (RGB or gray), detected by magic bytes. Writes by extension: `.ppm`,
//! `.pgm` or `.png`. Samples map to `v / 255` on read and to
//! `round(255 v)` clamped to `0..=255` on write.

use std::cell::Cell;
use std::io::{BufRead, Cursor, Read, Seek, SeekFrom};
use std::path::Path;

use crate::error::{Error, ImageIoError, Result};
use crate::image::MultiChannelImage;

const PNG_MAGIC: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

fn parse_err(offset: usize, reason: impl Into<String>) -> ImageIoError {
    ImageIoError::Parse {
        offset: offset as u64,
        reason: reason.into(),
    }
}

pub fn read_image(path: impl AsRef<Path>) -> Result<MultiChannelImage> {
    let bytes = std::fs::read(path.as_ref()).map_err(ImageIoError::from)?;
    decode_image(&bytes)
}

pub fn decode_image(bytes: &[u8]) -> Result<MultiChannelImage> {
    if bytes.starts_with(b"P6") || bytes.starts_with(b"P5") {
        decode_netpbm(bytes)
    } else if bytes.starts_with(&PNG_MAGIC) {
        decode_png(bytes)
    } else {
        Err(parse_err(0, "unrecognised magic bytes (expected P5, P6 or PNG)").into())
    }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> std::result::Result<usize, ImageIoError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(parse_err(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(start, format!("{what} out of range")))
    }
}

fn decode_netpbm(bytes: &[u8]) -> Result<MultiChannelImage> {
    let channels = if bytes[1] == b'6' { 3 } else { 1 };
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(parse_err(maxval_at, "zero image dimension").into());
    }
    if maxval != 255 {
        return Err(ImageIoError::Unsupported(format!("maxval {maxval} (only 8-bit 255 is supported)")).into());
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(parse_err(cur.pos, "expected single whitespace after maxval").into()),
    }
    let needed = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| parse_err(maxval_at, "image dimensions overflow"))?;
    let data = &bytes[cur.pos..];
    if data.len() < needed {
        return Err(parse_err(
            bytes.len(),
            format!("truncated pixel data: expected {needed} bytes, found {}", data.len()),
        )
        .into());
    }
    let samples: Vec<f64> = data[..needed].iter().map(|&b| b as f64 / 255.0).collect();
    MultiChannelImage::from_interleaved(height, width, channels, &samples)
}

/// In-memory reader that remembers how far the decoder got.
struct Tracked<'a> {
    inner: Cursor<&'a [u8]>,
    high_water: &'a Cell<u64>,
}

impl Tracked<'_> {
    fn note(&self) {
        let p = self.inner.position();
        if p > self.high_water.get() {
            self.high_water.set(p);
        }
    }
}

impl Read for Tracked<'_> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.note();
        Ok(n)
    }
}

impl BufRead for Tracked<'_> {
    fn fill_buf(&mut self) -> std::io::Result<&[u8]> {
        self.inner.fill_buf()
    }

    fn consume(&mut self, amt: usize) {
        self.inner.consume(amt);
        self.note();
    }
}

impl Seek for Tracked<'_> {
    fn seek(&mut self, pos: SeekFrom) -> std::io::Result<u64> {
        self.inner.seek(pos)
    }
}

fn decode_png(bytes: &[u8]) -> Result<MultiChannelImage> {
    let high = Cell::new(0u64);
    let fail = |e: png::DecodingError, high: &Cell<u64>| -> Error {
        ImageIoError::Parse {
            offset: high.get(),
            reason: format!("png: {e}"),
        }
        .into()
    };
    let mut decoder = png::Decoder::new(Tracked {
        inner: Cursor::new(bytes),
        high_water: &high,
    });
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| fail(e, &high))?;
    let (color, depth) = reader.output_color_type();
    if depth != png::BitDepth::Eight {
        return Err(ImageIoError::Unsupported(format!("png bit depth {depth:?}")).into());
    }
    let channels = match color {
        png::ColorType::Rgb => 3,
        png::ColorType::Grayscale => 1,
        other => {
            return Err(ImageIoError::Unsupported(format!("png color type {other:?}")).into());
        }
    };
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| ImageIoError::Unsupported("png too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| fail(e, &high))?;
    reader.finish().map_err(|e| fail(e, &high))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let mut samples = Vec::with_capacity(w * h * channels);
    for row in buf.chunks(info.line_size).take(h) {
        samples.extend(row[..w * channels].iter().map(|&b| b as f64 / 255.0));
    }
    MultiChannelImage::from_interleaved(h, w, channels, &samples)
}

fn quantize(img: &MultiChannelImage) -> Vec<u8> {
    img.to_interleaved()
        .into_iter()
        .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect()
}

pub fn encode_netpbm(img: &MultiChannelImage) -> Vec<u8> {
    let magic = if img.channels() == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(quantize(img));
    out
}

pub fn encode_png(img: &MultiChannelImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
        enc.set_color(if img.channels() == 3 {
            png::ColorType::Rgb
        } else {
            png::ColorType::Grayscale
        });
        enc.set_depth(png::BitDepth::Eight);
        let encode_err = |e: png::EncodingError| ImageIoError::Unsupported(format!("png encode: {e}"));
        let mut writer = enc.write_header().map_err(encode_err)?;
        writer.write_image_data(&quantize(img)).map_err(encode_err)?;
    }
    Ok(out)
}

pub fn write_image(img: &MultiChannelImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let bytes = match ext.as_str() {
        "ppm" if img.channels() == 3 => encode_netpbm(img),
        "pgm" if img.channels() == 1 => encode_netpbm(img),
        "png" => encode_png(img)?,
        _ => {
            return Err(ImageIoError::Unsupported(format!(
                "cannot write {}-channel image to `{}` (use .ppm for RGB, .pgm for gray, or .png)",
                img.channels(),
                path.display()
            ))
            .into())
        }
    };
    std::fs::write(path, bytes).map_err(ImageIoError::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p6_known_bytes() {
        let mut bytes = b"P6\n# comment\n2 2\n255\n".to_vec();
        bytes.extend([0, 51, 255, 102, 153, 204, 255, 0, 0, 1, 2, 3]);
        let img = decode_image(&bytes).unwrap();
        assert_eq!(img.dims(), (2, 2, 3));
        assert_eq!(img.plane(0).get(0, 0), 0.0);
        assert_eq!(img.plane(1).get(0, 0), 0.2);
        assert_eq!(img.plane(2).get(0, 0), 1.0);
        assert_eq!(img.plane(0).get(0, 1), 0.4);
        assert_eq!(img.plane(2).get(1, 1), 3.0 / 255.0);
    }

    #[test]
    fn netpbm_round_trip_bytes() {
        let mut bytes = b"P6\n3 2\n255\n".to_vec();
        bytes.extend((0..18u8).map(|v| v * 13));
        let img = decode_image(&bytes).unwrap();
        assert_eq!(encode_netpbm(&img), bytes);

        let mut gray = b"P5\n2 3\n255\n".to_vec();
        gray.extend([0, 10, 20, 250, 128, 255]);
        let g = decode_image(&gray).unwrap();
        assert_eq!(g.channels(), 1);
        assert_eq!(encode_netpbm(&g), gray);
    }

    #[test]
    fn truncated_data_reports_offset() {
        let mut bytes = b"P6\n2 2\n255\n".to_vec();
        bytes.extend([1, 2, 3, 4, 5]);
        let len = bytes.len() as u64;
        match decode_image(&bytes) {
            Err(Error::Image(ImageIoError::Parse { offset, .. })) => assert_eq!(offset, len),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_header_reports_offset() {
        match decode_image(b"P6\n2 x\n255\n") {
            Err(Error::Image(ImageIoError::Parse { offset, .. })) => assert_eq!(offset, 5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            decode_image(b"P6 2 2 65535\n"),
            Err(Error::Image(ImageIoError::Unsupported(_)))
        ));
        assert!(matches!(
            decode_image(b"GIF89a"),
            Err(Error::Image(ImageIoError::Parse { offset: 0, .. }))
        ));
    }

    #[test]
    fn png_round_trip() {
        let mut bytes = b"P6\n4 3\n255\n".to_vec();
        bytes.extend((0..36u8).map(|v| v.wrapping_mul(37)));
        let img = decode_image(&bytes).unwrap();
        let png_bytes = encode_png(&img).unwrap();
        let back = decode_image(&png_bytes).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn corrupt_png_reports_offset() {
        let img = MultiChannelImage::zeros(8, 8, 3);
        let mut png_bytes = encode_png(&img).unwrap();
        let cut = png_bytes.len() / 2;
        png_bytes.truncate(cut);
        match decode_image(&png_bytes) {
            Err(Error::Image(ImageIoError::Parse { offset, .. })) => assert!(offset <= cut as u64),
            other => panic!("unexpected {other:?}"),
        }
    }
}
