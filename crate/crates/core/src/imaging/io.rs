//! Image files: 8-bit binary PGM (`P5`) and the raw `LSK1` container
//! (magic, u32 width, u32 height, then row-major little-endian f64 pixels).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{LsedError, Result};
use crate::imaging::Image;

pub const LSK1_MAGIC: &[u8; 4] = b"LSK1";

/// Parses a binary PGM. Intensities are scaled by `1 / maxval`.
pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0usize;
    let token = |pos: &mut usize| -> Result<String> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(LsedError::format("PGM", "truncated header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    let magic = token(&mut pos)?;
    if magic != "P5" {
        return Err(LsedError::format("PGM", format!("expected P5, found {magic}")));
    }
    let number = |pos: &mut usize, what: &str| -> Result<usize> {
        token(pos)?
            .parse::<usize>()
            .map_err(|_| LsedError::format("PGM", format!("bad {what}")))
    };
    let width = number(&mut pos, "width")?;
    let height = number(&mut pos, "height")?;
    let maxval = number(&mut pos, "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(LsedError::format("PGM", format!("unsupported maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let n = width * height;
    if bytes.len() < pos + n {
        return Err(LsedError::format("PGM", "truncated raster"));
    }
    let scale = 1.0 / maxval as f64;
    let pixels = bytes[pos..pos + n].iter().map(|&b| b as f64 * scale).collect();
    Image::new(width, height, pixels)
}

/// Quantises to 8 bits (values clamped to `[0, 1]`).
pub fn encode_pgm(image: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(
        image
            .pixels()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

pub fn decode_lsk1(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 12 || &bytes[..4] != LSK1_MAGIC {
        return Err(LsedError::format("LSK1", "missing magic"));
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() != width * height * 8 {
        return Err(LsedError::format(
            "LSK1",
            format!("expected {} pixel bytes, found {}", width * height * 8, body.len()),
        ));
    }
    let pixels = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Image::new(width, height, pixels)
}

pub fn encode_lsk1(image: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + image.pixels().len() * 8);
    out.extend_from_slice(LSK1_MAGIC);
    out.extend_from_slice(&(image.width() as u32).to_le_bytes());
    out.extend_from_slice(&(image.height() as u32).to_le_bytes());
    for p in image.pixels() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

/// Reads either format, chosen by the file's leading bytes.
pub fn read_image(path: &Path) -> Result<Image> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.starts_with(LSK1_MAGIC) {
        decode_lsk1(&bytes)
    } else {
        decode_pgm(&bytes)
    }
}

pub fn write_pgm(path: &Path, image: &Image) -> Result<()> {
    fs::File::create(path)?.write_all(&encode_pgm(image))?;
    Ok(())
}

pub fn write_lsk1(path: &Path, image: &Image) -> Result<()> {
    fs::File::create(path)?.write_all(&encode_lsk1(image))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pgm_header_with_comment() {
        let mut bytes = b"P5\n# made by hand\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255, 51, 102]);
        let img = decode_pgm(&bytes).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.pixels(), &[0.0, 1.0, 0.2, 0.4]);
    }

    #[test]
    fn pgm_rejects_ascii_variant_and_truncation() {
        assert!(decode_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pgm(b"P5\n4 4\n255\n\x00\x01").is_err());
    }

    #[test]
    fn lsk1_rejects_wrong_length() {
        let mut bytes = encode_lsk1(&Image::filled(3, 2, 0.25).unwrap());
        bytes.pop();
        assert!(decode_lsk1(&bytes).is_err());
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::from_fn(5, 3, |x, y| (x + 5 * y) as f64 / 255.0).unwrap();
        let pgm = dir.path().join("a.pgm");
        write_pgm(&pgm, &img).unwrap();
        let back = read_image(&pgm).unwrap();
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            assert!((a - b).abs() < 1e-12);
        }
        let raw = dir.path().join("a.lsk1");
        write_lsk1(&raw, &img).unwrap();
        assert_eq!(read_image(&raw).unwrap(), img);
    }

    proptest! {
        #[test]
        fn lsk1_is_bit_exact(w in 1usize..9, h in 1usize..9, seed in any::<u64>()) {
            let img = Image::from_fn(w, h, |x, y| {
                f64::from_bits(crate::util::derive_seed(seed, (y * w + x) as u64) >> 12 | 0x3FF0_0000_0000_0000) - 1.0
            }).unwrap();
            let back = decode_lsk1(&encode_lsk1(&img)).unwrap();
            prop_assert!(img.pixels().iter().zip(back.pixels()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }

        #[test]
        fn pgm_round_trips_quantised_images(bytes in proptest::collection::vec(any::<u8>(), 12)) {
            let img = Image::new(4, 3, bytes.iter().map(|&b| b as f64 / 255.0).collect()).unwrap();
            prop_assert_eq!(encode_pgm(&decode_pgm(&encode_pgm(&img)).unwrap()), encode_pgm(&img));
        }
    }
}
