//! Plain-text camera files.
//!
//! The first non-comment line holds the camera count. Each camera is then
//! five lines: `fx fy cx cy width height`, three rotation rows, and the
//! translation.

use std::fmt::Write as _;

use nalgebra::Matrix3;

use crate::camera::Camera;
use crate::{Error, Result, Vec3};

pub fn write_cameras(cameras: &[Camera]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", cameras.len());
    for c in cameras {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            c.fx, c.fy, c.cx, c.cy, c.width, c.height
        );
        for r in 0..3 {
            let _ = writeln!(
                out,
                "{} {} {}",
                c.rotation[(r, 0)],
                c.rotation[(r, 1)],
                c.rotation[(r, 2)]
            );
        }
        let t = &c.translation;
        let _ = writeln!(out, "{} {} {}", t.x, t.y, t.z);
    }
    out
}

fn floats(line: (usize, &str), expected: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = line
        .1
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::parse(format!("camera line {}", line.0), "expected numbers"))?;
    if values.len() != expected {
        return Err(Error::parse(
            format!("camera line {}", line.0),
            format!("expected {expected} values, got {}", values.len()),
        ));
    }
    Ok(values)
}

pub fn read_cameras(text: &str) -> Result<Vec<Camera>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (n, first) = lines
        .next()
        .ok_or_else(|| Error::parse("camera file", "empty"))?;
    let count: usize = first
        .parse()
        .map_err(|_| Error::parse(format!("camera line {n}"), "expected the camera count"))?;
    let mut next = || {
        lines
            .next()
            .ok_or_else(|| Error::parse("camera file", "truncated"))
    };
    let mut cameras = Vec::with_capacity(count);
    for _ in 0..count {
        let line = next()?;
        let intrinsics = floats(line, 6)?;
        let size = |v: f64| {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::parse(
                    format!("camera line {}", line.0),
                    "image size must be a positive integer",
                ))
            }
        };
        let (width, height) = (size(intrinsics[4])?, size(intrinsics[5])?);
        let mut rows = [[0.0; 3]; 3];
        for row in &mut rows {
            let v = floats(next()?, 3)?;
            row.copy_from_slice(&v);
        }
        let t = floats(next()?, 3)?;
        let rotation = Matrix3::new(
            rows[0][0], rows[0][1], rows[0][2], rows[1][0], rows[1][1], rows[1][2], rows[2][0],
            rows[2][1], rows[2][2],
        );
        cameras.push(Camera::new(
            intrinsics[0],
            intrinsics[1],
            intrinsics[2],
            intrinsics[3],
            rotation,
            Vec3::new(t[0], t[1], t[2]),
            width,
            height,
        )?);
    }
    Ok(cameras)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let cams = vec![
            Camera::look_at(
                Vec3::new(1.0, -2.0, 3.0),
                Vec3::zeros(),
                Vec3::z(),
                80.0,
                64,
                48,
            )
            .unwrap(),
            Camera::look_at(
                Vec3::new(-1.5, 0.2, 2.0),
                Vec3::zeros(),
                Vec3::z(),
                91.5,
                32,
                32,
            )
            .unwrap(),
        ];
        assert_eq!(read_cameras(&write_cameras(&cams)).unwrap(), cams);
    }

    #[test]
    fn rejects_truncated_files() {
        let text = write_cameras(&[Camera::look_at(
            Vec3::new(1.0, 1.0, 3.0),
            Vec3::zeros(),
            Vec3::z(),
            80.0,
            8,
            8,
        )
        .unwrap()]);
        let cut: String = text.lines().take(4).collect::<Vec<_>>().join("\n");
        assert!(read_cameras(&cut).is_err());
    }
}
