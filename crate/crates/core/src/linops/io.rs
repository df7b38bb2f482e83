//! Plain CSV grids/matrices and binary PGM (P5) images.

use std::fs;
use std::path::Path;

use super::{Boundary, ImageGrid, LinearOperator};
use crate::error::{Error, Result};

fn parse_csv_rows(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {:?}: {e}", lineno + 1, tok.trim())))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("empty CSV".into()));
    }
    let width = rows[0].len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
        return Err(Error::Parse(format!(
            "non-rectangular CSV: row {} has {} fields, expected {width}",
            i + 1,
            r.len()
        )));
    }
    Ok(rows)
}

/// Dense matrix, one row per line.
pub fn read_csv_matrix(path: impl AsRef<Path>) -> Result<LinearOperator> {
    let rows = parse_csv_rows(&fs::read_to_string(path)?)?;
    LinearOperator::from_rows(&rows)
}

pub fn read_csv_grid(path: impl AsRef<Path>) -> Result<ImageGrid> {
    let rows = parse_csv_rows(&fs::read_to_string(path)?)?;
    let (r, c) = (rows.len(), rows[0].len());
    ImageGrid::new(r, c, rows.concat(), Boundary::default())
}

pub fn format_csv_grid(img: &ImageGrid) -> String {
    let mut s = String::new();
    for r in 0..img.rows() {
        let line: Vec<String> = (0..img.cols()).map(|c| format!("{}", img.get(r, c))).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

pub fn write_csv_grid(path: impl AsRef<Path>, img: &ImageGrid) -> Result<()> {
    fs::write(path, format_csv_grid(img))?;
    Ok(())
}

/// Reads a binary P5 PGM with maxval ≤ 255, scaling pixels to [0, 1].
pub fn read_pgm(path: impl AsRef<Path>) -> Result<ImageGrid> {
    let bytes = fs::read(path)?;
    parse_pgm(&bytes)
}

fn parse_pgm(bytes: &[u8]) -> Result<ImageGrid> {
    let mut pos = 0;
    let next_token = |pos: &mut usize| -> Result<String> {
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
            return Err(Error::Parse("truncated PGM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    let magic = next_token(&mut pos)?;
    if magic != "P5" {
        return Err(Error::Parse(format!("unsupported PGM magic {magic:?}")));
    }
    let num = |pos: &mut usize, what: &str| -> Result<usize> {
        next_token(pos)?
            .parse::<usize>()
            .map_err(|_| Error::Parse(format!("bad PGM {what}")))
    };
    let width = num(&mut pos, "width")?;
    let height = num(&mut pos, "height")?;
    let maxval = num(&mut pos, "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Parse(format!("unsupported PGM maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = width * height;
    if bytes.len() < pos + need {
        return Err(Error::Parse(format!(
            "truncated PGM raster: expected {need} bytes, found {}",
            bytes.len().saturating_sub(pos)
        )));
    }
    let pixels = bytes[pos..pos + need]
        .iter()
        .map(|&b| b as f64 / maxval as f64)
        .collect();
    ImageGrid::new(height, width, pixels, Boundary::default())
}

/// Writes a P5 PGM with maxval 255; values are clamped to [0, 1] and rounded.
pub fn write_pgm(path: impl AsRef<Path>, img: &ImageGrid) -> Result<()> {
    let mut out = format!("P5\n{} {}\n255\n", img.cols(), img.rows()).into_bytes();
    out.extend(img.pixels().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    fs::write(path, out)?;
    Ok(())
}

/// Dispatches on the file extension (`.pgm` or CSV otherwise).
pub fn read_image(path: impl AsRef<Path>) -> Result<ImageGrid> {
    let p = path.as_ref();
    match p.extension().and_then(|e| e.to_str()) {
        Some("pgm") => read_pgm(p),
        _ => read_csv_grid(p),
    }
}

pub fn write_image(path: impl AsRef<Path>, img: &ImageGrid) -> Result<()> {
    let p = path.as_ref();
    match p.extension().and_then(|e| e.to_str()) {
        Some("pgm") => write_pgm(p, img),
        _ => write_csv_grid(p, img),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::LinearMap;

    fn grid() -> ImageGrid {
        ImageGrid::new(2, 3, vec![0.0, 0.1, 1.0 / 3.0, 0.5, 0.999, 1.0], Boundary::Neumann).unwrap()
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.csv");
        write_csv_grid(&p, &grid()).unwrap();
        assert_eq!(read_csv_grid(&p).unwrap().pixels(), grid().pixels());
    }

    #[test]
    fn pgm_roundtrip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.pgm");
        write_pgm(&p, &grid()).unwrap();
        let back = read_pgm(&p).unwrap();
        assert_eq!((back.rows(), back.cols()), (2, 3));
        for (a, b) in back.pixels().iter().zip(grid().pixels()) {
            assert!((a - b).abs() <= 1.0 / 255.0);
        }
    }

    #[test]
    fn truncated_pgm_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.pgm");
        write_pgm(&p, &grid()).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 2]).unwrap();
        assert!(read_pgm(&p).is_err());
        fs::write(&p, b"P5\n3").unwrap();
        assert!(read_pgm(&p).is_err());
    }

    #[test]
    fn ragged_csv_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        fs::write(&p, "1,2,3\n4,5\n").unwrap();
        assert!(read_csv_grid(&p).is_err());
    }

    #[test]
    fn csv_matrix_loads() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        fs::write(&p, "1,2\n3,4\n5,6\n").unwrap();
        let m = read_csv_matrix(&p).unwrap();
        assert_eq!((m.out_dim(), m.in_dim()), (3, 2));
    }
}
