//! Binary PGM (P5) images and float matrices as CSV.
//!
//! Pixel intensities are mapped to `[0, 1]` by dividing by `maxval`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::operators::ImageShape;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub shape: ImageShape,
    /// Row-major intensities in `[0, 1]`.
    pub data: Vec<f64>,
}

impl GrayImage {
    pub fn new(shape: ImageShape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::ShapeMismatch {
                expected: shape.len(),
                found: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    /// Top-left `rows x cols` window.
    pub fn crop(&self, rows: usize, cols: usize) -> Result<Self> {
        if rows > self.shape.rows || cols > self.shape.cols || rows == 0 || cols == 0 {
            return Err(Error::InvalidConfig(format!(
                "cannot crop {}x{} from a {}x{} image",
                rows, cols, self.shape.rows, self.shape.cols
            )));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            let start = i * self.shape.cols;
            data.extend_from_slice(&self.data[start..start + cols]);
        }
        Ok(Self {
            shape: ImageShape::new(rows, cols),
            data,
        })
    }
}

/// C-style `%.9e` (`1.000000000e+00`).
pub fn sci(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{v:.9e}");
    let (mant, exp) = s.split_once('e').expect("exponent");
    let (sign, digits) = match exp.strip_prefix('-') {
        Some(d) => ('-', d),
        None => ('+', exp),
    };
    format!("{mant}e{sign}{digits:0>2}")
}

fn header_tokens(bytes: &[u8]) -> Result<(Vec<String>, usize)> {
    let mut tokens = Vec::new();
    let mut i = 0;
    while tokens.len() < 4 {
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
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() && bytes[i] != b'#' {
            i += 1;
        }
        if start == i {
            return Err(Error::Format("truncated PGM header".into()));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    if i >= bytes.len() || !bytes[i].is_ascii_whitespace() {
        return Err(Error::Format("missing separator after PGM header".into()));
    }
    Ok((tokens, i + 1))
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let (tok, offset) = header_tokens(bytes)?;
    if tok[0] != "P5" {
        return Err(Error::Format(format!("expected P5 magic, found '{}'", tok[0])));
    }
    let parse = |s: &str, what: &str| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad PGM {what} '{s}'")))
    };
    let cols = parse(&tok[1], "width")?;
    let rows = parse(&tok[2], "height")?;
    let maxval = parse(&tok[3], "maxval")?;
    if !(1..=255).contains(&maxval) {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
    }
    if rows == 0 || cols == 0 {
        return Err(Error::Format("empty PGM image".into()));
    }
    let raster = &bytes[offset..];
    if raster.len() < rows * cols {
        return Err(Error::Format(format!(
            "PGM raster has {} bytes, need {}",
            raster.len(),
            rows * cols
        )));
    }
    let scale = 1.0 / maxval as f64;
    let data = raster[..rows * cols]
        .iter()
        .map(|&b| (b as f64 * scale).min(1.0))
        .collect();
    Ok(GrayImage {
        shape: ImageShape::new(rows, cols),
        data,
    })
}

/// Intensities outside `[0, 1]` are clipped.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.shape.cols, img.shape.rows).into_bytes();
    out.extend(img.data.iter().map(|&v| {
        let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        (v * 255.0).round() as u8
    }));
    out
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    decode_pgm(&fs::read(path)?)
}

pub fn write_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    fs::write(path, encode_pgm(img))?;
    Ok(())
}

/// One line per image row, comma separated, `%.9e` entries.
pub fn write_csv_matrix(path: impl AsRef<Path>, shape: ImageShape, data: &[f64]) -> Result<()> {
    if data.len() != shape.len() {
        return Err(Error::ShapeMismatch {
            expected: shape.len(),
            found: data.len(),
        });
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    for row in data.chunks(shape.cols) {
        let line: Vec<String> = row.iter().map(|&v| sci(v)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv_matrix(path: impl AsRef<Path>) -> Result<(ImageShape, Vec<f64>)> {
    let text = fs::read_to_string(path)?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (ln, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row: Vec<f64> = line
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("line {}: bad number '{}'", ln + 1, t.trim())))
            })
            .collect::<Result<_>>()?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(Error::Format(format!("line {}: ragged row", ln + 1)));
            }
            _ => {}
        }
        data.extend(row);
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Format("empty matrix".into()))?;
    Ok((ImageShape::new(rows, cols), data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sci_matches_printf() {
        assert_eq!(sci(1.0), "1.000000000e+00");
        assert_eq!(sci(-0.00123), "-1.230000000e-03");
        assert_eq!(sci(0.0), "0.000000000e+00");
        assert_eq!(sci(6.02214076e123), "6.022140760e+123");
        assert_eq!(sci(f64::NAN), "nan");
        assert_eq!("1.234567891e-05".parse::<f64>().unwrap(), 1.234567891e-5);
    }

    #[test]
    fn pgm_round_trip() {
        let shape = ImageShape::new(2, 3);
        let img = GrayImage::new(shape, vec![0.0, 1.0, 0.5, 0.2, 2.0, -1.0]).unwrap();
        let back = decode_pgm(&encode_pgm(&img)).unwrap();
        assert_eq!(back.shape, shape);
        let expect = [0.0, 1.0, 128.0 / 255.0, 51.0 / 255.0, 1.0, 0.0];
        for (a, b) in back.data.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pgm_header_comments_and_maxval() {
        let mut bytes = b"P5\n# made by hand\n2 1 # trailing\n100\n".to_vec();
        bytes.extend([50u8, 100]);
        let img = decode_pgm(&bytes).unwrap();
        assert_eq!(img.shape, ImageShape::new(1, 2));
        assert_eq!(img.data, vec![0.5, 1.0]);
    }

    #[test]
    fn pgm_rejects_bad_input() {
        assert!(decode_pgm(b"P2\n1 1\n255\n\x00").is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\x00").is_err());
        assert!(decode_pgm(b"P5\n1 1\n65535\n\x00\x00").is_err());
        assert!(decode_pgm(b"P5\n1").is_err());
    }

    #[test]
    fn crop_window() {
        let img = GrayImage::new(ImageShape::new(3, 3), (0..9).map(|v| v as f64).collect()).unwrap();
        let c = img.crop(2, 2).unwrap();
        assert_eq!(c.data, vec![0.0, 1.0, 3.0, 4.0]);
        assert!(img.crop(4, 1).is_err());
    }

    #[test]
    fn csv_matrix_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let shape = ImageShape::new(2, 2);
        let data = vec![1.0, -2.5e-7, 3.25, 1.0 / 3.0];
        write_csv_matrix(&path, shape, &data).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), "1.000000000e+00,-2.500000000e-07");
        let (s, back) = read_csv_matrix(&path).unwrap();
        assert_eq!(s, shape);
        for (a, b) in back.iter().zip(&data) {
            assert!((a - b).abs() <= 1e-9 * b.abs());
        }
    }
}
