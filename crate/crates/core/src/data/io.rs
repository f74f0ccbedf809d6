//! Point-cloud files: whitespace text (`.xyz`) and a compact binary (`.bin`, magic `SPC1`).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{Point, PointCloud};
use crate::numerics::Matrix;

pub const BINARY_MAGIC: &[u8; 4] = b"SPC1";

/// Parses `x y z [f1 … fD]` lines. Blank lines and `#` comments are skipped;
/// every data line must have the same field count as the first.
pub fn parse_xyz(text: &str, path: &Path) -> Result<PointCloud> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut points = Vec::new();
    let mut feats: Vec<f64> = Vec::new();
    let mut width: Option<usize> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(err(line_no, format!("expected at least 3 fields, found {}", fields.len())));
        }
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(err(line_no, format!("expected {w} fields like the first point, found {}", fields.len())));
            }
            _ => {}
        }
        let mut values = Vec::with_capacity(fields.len());
        for f in &fields {
            let v: f64 = f.parse().map_err(|_| err(line_no, format!("`{f}` is not a number")))?;
            if !v.is_finite() {
                return Err(err(line_no, format!("`{f}` is not finite")));
            }
            values.push(v);
        }
        points.push([values[0], values[1], values[2]]);
        feats.extend_from_slice(&values[3..]);
    }
    let width = width.ok_or_else(|| Error::Format(format!("{} holds no points", path.display())))?;
    let cloud = PointCloud::new(points)?;
    if width > 3 {
        let n = cloud.len();
        return cloud.with_features(Matrix::from_vec(n, width - 3, feats)?);
    }
    Ok(cloud)
}

pub fn load_xyz(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    parse_xyz(&fs::read_to_string(path)?, path)
}

/// Text form with 17 significant digits per value, which round-trips exactly.
pub fn format_xyz(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(cloud.len() * 3 * 26);
    for (i, p) in cloud.points().iter().enumerate() {
        let mut first = true;
        let feats = cloud.features().map(|f| f.row(i)).unwrap_or(&[]);
        for v in p.iter().chain(feats) {
            if !first {
                out.push(' ');
            }
            first = false;
            out.push_str(&format!("{v:.16e}"));
        }
        out.push('\n');
    }
    out
}

pub fn save_xyz(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_xyz(cloud))?;
    Ok(())
}

pub fn encode_bin(cloud: &PointCloud) -> Vec<u8> {
    let d = cloud.feature_dim();
    let mut out = Vec::with_capacity(12 + cloud.len() * (3 + d) * 4);
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&(cloud.len() as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    for (i, p) in cloud.points().iter().enumerate() {
        let feats = cloud.features().map(|f| f.row(i)).unwrap_or(&[]);
        for &v in p.iter().chain(feats) {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_bin(bytes: &[u8]) -> Result<PointCloud> {
    if bytes.len() < 12 || &bytes[..4] != BINARY_MAGIC {
        return Err(Error::Format("missing SPC1 header".into()));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    let (n, d) = (word(4), word(8));
    let expected = (n as u128) * (3 + d as u128) * 4 + 12;
    if bytes.len() as u128 != expected {
        return Err(Error::Format(format!(
            "SPC1 body for {n} points of width {} needs {expected} bytes, file has {}",
            3 + d,
            bytes.len()
        )));
    }
    let mut values = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64);
    let mut points: Vec<Point> = Vec::with_capacity(n);
    let mut feats = Vec::with_capacity(n * d);
    for _ in 0..n {
        let mut p = [0.0; 3];
        for v in p.iter_mut() {
            *v = values.next().expect("length checked");
        }
        points.push(p);
        feats.extend(values.by_ref().take(d));
    }
    let cloud = PointCloud::new(points)?;
    if d > 0 {
        return cloud.with_features(Matrix::from_vec(n, d, feats)?);
    }
    Ok(cloud)
}

pub fn load_bin(path: impl AsRef<Path>) -> Result<PointCloud> {
    decode_bin(&fs::read(path)?)
}

pub fn save_bin(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_bin(cloud))?;
    Ok(())
}

/// Loads by extension: `.bin` as binary, anything else as text.
pub fn load_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("bin") => load_bin(path),
        _ => load_xyz(path),
    }
}

pub fn save_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("bin") => save_bin(cloud, path),
        _ => save_xyz(cloud, path),
    }
}

pub(crate) fn is_cloud_file(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("xyz" | "bin"))
}

/// Sorted cloud files directly inside `dir`.
pub(crate) fn cloud_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.is_file() && is_cloud_file(p));
    files.sort();
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let a = parse_xyz("# header\n\n1 2 3\n  4 5 6 # trailing\n", Path::new("a")).unwrap();
        let b = parse_xyz("1 2 3\n4 5 6\n", Path::new("b")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn short_line_cites_its_number() {
        match parse_xyz("1 2 3\n# c\n1 2\n", Path::new("x")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert!(matches!(parse_xyz("1 2 3 4\n1 2 3\n", Path::new("x")), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn truncated_binary_is_a_format_error() {
        let c = PointCloud::new(vec![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        let bytes = encode_bin(&c);
        assert_eq!(decode_bin(&bytes).unwrap(), c);
        assert!(matches!(decode_bin(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
        assert!(matches!(decode_bin(b"SPC2\0\0\0\0\0\0\0\0"), Err(Error::Format(_))));
    }
}
