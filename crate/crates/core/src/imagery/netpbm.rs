//! Minimal PGM (binary, 8-bit) and PFM (grayscale) readers and writers.

use super::{Field, ImageryError, Image, Result};

/// Splits off `count` whitespace-separated header tokens, skipping `#` comments.
/// Returns the tokens and the offset just past the single whitespace byte that
/// terminates the last token.
fn header_tokens(bytes: &[u8], count: usize) -> Result<(Vec<String>, usize)> {
    let mut tokens = Vec::with_capacity(count);
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(ImageryError::Header("unexpected end of header".into()));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    if i >= bytes.len() {
        return Err(ImageryError::TruncatedFile { needed: i + 1, found: bytes.len() });
    }
    Ok((tokens, i + 1))
}

fn parse_dim(s: &str) -> Result<usize> {
    s.parse().map_err(|_| ImageryError::Header(format!("bad dimension {s:?}")))
}

/// Encodes an image as binary PGM, rounding to the nearest of 256 levels.
pub fn write_pgm(img: &Image) -> Vec<u8> {
    let (h, w) = img.shape();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(img.data().iter().map(|&v| (v * 255.0).round() as u8));
    out
}

/// Encodes a boolean mask as PGM with 0 / 255 levels.
pub fn write_pgm_mask(mask: &[bool], height: usize, width: usize) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(mask.iter().map(|&m| if m { 255u8 } else { 0 }));
    out
}

pub fn read_pgm(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(ImageryError::BadMagic { expected: "P5" });
    }
    let (tokens, offset) = header_tokens(&bytes[2..], 3)?;
    let w = parse_dim(&tokens[0])?;
    let h = parse_dim(&tokens[1])?;
    let maxval: f64 = tokens[2]
        .parse()
        .map_err(|_| ImageryError::Header(format!("bad maxval {:?}", tokens[2])))?;
    if !(1.0..=255.0).contains(&maxval) {
        return Err(ImageryError::Header("only 8-bit PGM is supported".into()));
    }
    let body = &bytes[2 + offset..];
    if body.len() < h * w {
        return Err(ImageryError::TruncatedFile { needed: 2 + offset + h * w, found: bytes.len() });
    }
    let data = body[..h * w].iter().map(|&b| b as f64 / maxval).collect();
    Image::new(Field::new(h, w, data)?)
}

/// Grayscale little-endian PFM. Rows are stored bottom-to-top per the format.
pub fn write_pfm(field: &Field) -> Vec<u8> {
    let (h, w) = field.shape();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    for y in (0..h).rev() {
        for x in 0..w {
            out.extend_from_slice(&(field[(y, x)] as f32).to_le_bytes());
        }
    }
    out
}

pub fn read_pfm(bytes: &[u8]) -> Result<Field> {
    if bytes.len() < 2 || &bytes[..2] != b"Pf" {
        return Err(ImageryError::BadMagic { expected: "Pf" });
    }
    let (tokens, offset) = header_tokens(&bytes[2..], 3)?;
    let w = parse_dim(&tokens[0])?;
    let h = parse_dim(&tokens[1])?;
    let scale: f64 = tokens[2]
        .parse()
        .map_err(|_| ImageryError::Header(format!("bad scale {:?}", tokens[2])))?;
    let little = scale < 0.0;
    let body = &bytes[2 + offset..];
    if body.len() < 4 * h * w {
        return Err(ImageryError::TruncatedFile { needed: 2 + offset + 4 * h * w, found: bytes.len() });
    }
    let mut field = Field::zeros(h, w);
    for (i, c) in body[..4 * h * w].chunks_exact(4).enumerate() {
        let raw: [u8; 4] = c.try_into().expect("4-byte chunk");
        let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (row, x) = (i / w, i % w);
        field[(h - 1 - row, x)] = v as f64;
    }
    Ok(field)
}
