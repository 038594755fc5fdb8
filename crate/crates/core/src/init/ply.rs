//! Binary little-endian PLY with float xyz and uchar rgb.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::real::Real;

use super::PointCloud;

pub fn write_ply<F: Real>(path: &Path, cloud: &PointCloud<F>) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        cloud.len()
    )?;
    for (p, c) in cloud.positions.iter().zip(&cloud.colors) {
        for v in p {
            w.write_all(&(v.as_f64() as f32).to_le_bytes())?;
        }
        for v in c {
            w.write_all(&[(v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads files produced by [`write_ply`].
pub fn read_ply(path: &Path) -> Result<PointCloud<f32>> {
    let bad = |detail: &str| Error::Scene { path: path.to_path_buf(), detail: detail.to_string() };
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut count = None;
    let mut line = String::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(bad("unterminated PLY header"));
        }
        let t = line.trim();
        if t == "end_header" {
            break;
        }
        if t.starts_with("format") && t != "format binary_little_endian 1.0" {
            return Err(bad("only binary little-endian PLY is supported"));
        }
        if let Some(n) = t.strip_prefix("element vertex ") {
            count = Some(n.parse::<usize>().map_err(|_| bad("bad vertex count"))?);
        }
    }
    let n = count.ok_or_else(|| bad("missing vertex element"))?;
    let mut cloud = PointCloud { positions: Vec::with_capacity(n), colors: Vec::with_capacity(n) };
    let mut rec = [0u8; 15];
    for _ in 0..n {
        r.read_exact(&mut rec).map_err(|_| bad("truncated vertex data"))?;
        let f = |o: usize| f32::from_le_bytes([rec[o], rec[o + 1], rec[o + 2], rec[o + 3]]);
        cloud.positions.push([f(0), f(4), f(8)]);
        cloud.colors.push([rec[12], rec[13], rec[14]].map(|b| b as f32 / 255.0));
    }
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.ply");
        let cloud = PointCloud { positions: vec![[1.5f64, -2.0, 3.25], [0.0, 0.0, 1.0]], colors: vec![[1.0, 0.0, 0.2], [0.5; 3]] };
        write_ply(&path, &cloud).unwrap();
        let back = read_ply(&path).unwrap();
        assert_eq!(back.positions, vec![[1.5, -2.0, 3.25], [0.0, 0.0, 1.0]]);
        assert_eq!(back.colors[0], [1.0, 0.0, 51.0 / 255.0]);
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(read_ply(&path).is_err());
    }
}
