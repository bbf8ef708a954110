//! 8-bit PGM images. Written as plain (P2); both P2 and P5 are read.

use std::fmt::Write as _;

use crate::image::Image;
use crate::{Error, Result};

pub fn write_pgm(image: &Image<u8>) -> Vec<u8> {
    let mut out = format!("P2\n{} {}\n255\n", image.width, image.height);
    for row in image.data.chunks(image.width) {
        let line: Vec<String> = row.iter().map(u8::to_string).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out.into_bytes()
}

/// Header tokens, skipping `#` comments, and the offset after the last one.
fn header_tokens(bytes: &[u8], count: usize) -> Result<(Vec<String>, usize)> {
    let mut tokens = Vec::new();
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
            return Err(Error::parse("PGM header", "truncated"));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    Ok((tokens, i))
}

pub fn read_pgm(bytes: &[u8]) -> Result<Image<u8>> {
    let (tokens, end) = header_tokens(bytes, 4)?;
    let magic = tokens[0].as_str();
    let dim = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::parse("PGM header", format!("bad number '{s}'")))
    };
    let (width, height, maxval) = (dim(&tokens[1])?, dim(&tokens[2])?, dim(&tokens[3])?);
    if width == 0 || height == 0 {
        return Err(Error::parse("PGM header", "empty image"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::parse(
            "PGM header",
            "only 8-bit images are supported",
        ));
    }
    let n = width * height;
    let data = match magic {
        "P2" => {
            let text = std::str::from_utf8(&bytes[end..])
                .map_err(|_| Error::parse("PGM body", "not ASCII"))?;
            let values: Vec<u8> = text
                .split_whitespace()
                .take(n)
                .map(|t| {
                    t.parse::<u8>()
                        .map_err(|_| Error::parse("PGM body", format!("bad pixel '{t}'")))
                })
                .collect::<Result<_>>()?;
            values
        }
        "P5" => {
            // exactly one whitespace byte separates the header from the raster
            let start = end + 1;
            bytes
                .get(start..start + n)
                .map(<[u8]>::to_vec)
                .unwrap_or_default()
        }
        _ => {
            return Err(Error::parse(
                "PGM header",
                format!("unsupported magic '{magic}'"),
            ))
        }
    };
    if data.len() != n {
        return Err(Error::parse(
            "PGM body",
            format!("expected {n} pixels, got {}", data.len()),
        ));
    }
    Ok(Image {
        width,
        height,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_round_trip() {
        let img = Image::from_fn(5, 3, |x, y| (x * 50 + y) as u8);
        assert_eq!(read_pgm(&write_pgm(&img)).unwrap(), img);
    }

    #[test]
    fn reads_raw_with_comments() {
        let mut bytes = b"P5\n# made by hand\n3 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 10, 20, 30, 40, 255]);
        let img = read_pgm(&bytes).unwrap();
        assert_eq!(img.data, vec![0, 10, 20, 30, 40, 255]);
        assert!(read_pgm(b"P5\n3 2\n255\n\x01\x02").is_err());
        assert!(read_pgm(b"P6\n1 1\n255\n\x00\x00\x00").is_err());
    }
}
