//! Minimal binary PGM (P5) reading and writing.

use std::io::{self, Read, Write};

/// An 8-bit grayscale image, row 0 at the top.
#[derive(Debug, Clone)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.pixels[y * self.width + x] = value;
    }
}

/// Writes a binary P5 PGM with maxval 255.
pub fn write_pgm<W: Write>(writer: &mut W, image: &GrayImage) -> io::Result<()> {
    write!(writer, "P5\n{} {}\n255\n", image.width, image.height)?;
    writer.write_all(&image.pixels)
}

/// Reads a binary P5 PGM. Comments (`#` to end of line) in the header are
/// skipped; maxval must be ≤ 255.
pub fn read_pgm<R: Read>(reader: &mut R) -> io::Result<GrayImage> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let mut cursor = 0usize;

    let magic = read_token(&bytes, &mut cursor)?;
    if magic != b"P5" {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            "not a binary PGM (P5)",
        ));
    }
    let width = parse_usize(&read_token(&bytes, &mut cursor)?)?;
    let height = parse_usize(&read_token(&bytes, &mut cursor)?)?;
    let maxval = parse_usize(&read_token(&bytes, &mut cursor)?)?;
    if maxval == 0 || maxval > 255 {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("unsupported PGM maxval {maxval}"),
        ));
    }
    // Exactly one whitespace byte separates the header from pixel data.
    cursor += 1;
    let expected = width * height;
    if bytes.len() < cursor + expected {
        return Err(io::Error::new(
            io::ErrorKind::UnexpectedEof,
            "PGM pixel data truncated",
        ));
    }
    Ok(GrayImage {
        width,
        height,
        pixels: bytes[cursor..cursor + expected].to_vec(),
    })
}

fn read_token(bytes: &[u8], cursor: &mut usize) -> io::Result<Vec<u8>> {
    // Skip whitespace and comment lines.
    loop {
        while *cursor < bytes.len() && bytes[*cursor].is_ascii_whitespace() {
            *cursor += 1;
        }
        if *cursor < bytes.len() && bytes[*cursor] == b'#' {
            while *cursor < bytes.len() && bytes[*cursor] != b'\n' {
                *cursor += 1;
            }
        } else {
            break;
        }
    }
    let start = *cursor;
    while *cursor < bytes.len() && !bytes[*cursor].is_ascii_whitespace() {
        *cursor += 1;
    }
    if start == *cursor {
        return Err(io::Error::new(
            io::ErrorKind::UnexpectedEof,
            "PGM header truncated",
        ));
    }
    Ok(bytes[start..*cursor].to_vec())
}

fn parse_usize(token: &[u8]) -> io::Result<usize> {
    std::str::from_utf8(token)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "bad PGM header field"))
}
