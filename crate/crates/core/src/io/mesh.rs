//! ASCII PLY with per-face labels, and OBJ import.

use std::fmt::Write as _;

use crate::geometry::LabeledMesh;
use crate::{Error, Result, Vec3};

pub fn write_ply(mesh: &LabeledMesh) -> String {
    let mut out = String::new();
    let _ = write!(
        out,
        "ply\nformat ascii 1.0\ncomment label_count {}\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nelement face {}\nproperty list uchar int vertex_indices\nproperty int label\nend_header\n",
        mesh.label_count,
        mesh.vertex_count(),
        mesh.facet_count()
    );
    for p in &mesh.vertices {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
    }
    for (f, l) in mesh.facets.iter().zip(&mesh.labels) {
        let _ = writeln!(out, "3 {} {} {} {}", f[0], f[1], f[2], l);
    }
    out
}

fn number<T: std::str::FromStr>(token: Option<&str>, what: &str, line: usize) -> Result<T> {
    let token =
        token.ok_or_else(|| Error::parse(format!("PLY line {line}"), format!("missing {what}")))?;
    token
        .parse()
        .map_err(|_| Error::parse(format!("PLY line {line}"), format!("bad {what} '{token}'")))
}

/// Reads the ASCII PLY layout written by [`write_ply`]. Faces without a
/// label property get label 0; the label count comes from the header
/// comment, or from the largest label otherwise.
pub fn read_ply(text: &str) -> Result<LabeledMesh> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    if lines.next().map(|l| l.1) != Some("ply") {
        return Err(Error::parse("PLY header", "missing 'ply' magic"));
    }
    let mut vertex_count = None;
    let mut face_count = None;
    let mut vertex_props = Vec::new();
    let mut face_has_label = false;
    let mut label_count = None;
    let mut current = "";
    for (n, line) in lines.by_ref() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["format", "ascii", _] => {}
            ["format", ..] => {
                return Err(Error::parse("PLY header", "only ASCII PLY is supported"))
            }
            ["comment", "label_count", c] => {
                label_count = Some(number::<usize>(Some(c), "label count", n)?)
            }
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", "vertex", c] => {
                vertex_count = Some(number::<usize>(Some(c), "vertex count", n)?);
                current = "vertex";
            }
            ["element", "face", c] => {
                face_count = Some(number::<usize>(Some(c), "face count", n)?);
                current = "face";
            }
            ["element", ..] => {
                return Err(Error::parse(format!("PLY line {n}"), "unsupported element"))
            }
            ["property", "list", ..] => {}
            ["property", _, name] if current == "vertex" => vertex_props.push(name.to_string()),
            ["property", _, "label"] if current == "face" => face_has_label = true,
            ["property", ..] => {}
            ["end_header"] => break,
            _ => {
                return Err(Error::parse(
                    format!("PLY line {n}"),
                    format!("unexpected header line '{line}'"),
                ))
            }
        }
    }
    let vertex_count =
        vertex_count.ok_or_else(|| Error::parse("PLY header", "no vertex element"))?;
    let face_count = face_count.unwrap_or(0);
    let axis = |name: &str| {
        vertex_props
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| Error::parse("PLY header", format!("vertex property '{name}' missing")))
    };
    let (ix, iy, iz) = (axis("x")?, axis("y")?, axis("z")?);
    let mut body = lines.filter(|(_, l)| !l.is_empty());
    let mut vertices = Vec::with_capacity(vertex_count);
    for _ in 0..vertex_count {
        let (n, line) = body
            .next()
            .ok_or_else(|| Error::parse("PLY body", "too few vertex lines"))?;
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|t| number::<f64>(Some(t), "coordinate", n))
            .collect::<Result<_>>()?;
        if values.len() < vertex_props.len() {
            return Err(Error::parse(
                format!("PLY line {n}"),
                "too few vertex properties",
            ));
        }
        vertices.push(Vec3::new(values[ix], values[iy], values[iz]));
    }
    let mut facets = Vec::with_capacity(face_count);
    let mut labels = Vec::with_capacity(face_count);
    for _ in 0..face_count {
        let (n, line) = body
            .next()
            .ok_or_else(|| Error::parse("PLY body", "too few face lines"))?;
        let mut tokens = line.split_whitespace();
        let count: usize = number(tokens.next(), "vertex count", n)?;
        if count != 3 {
            return Err(Error::parse(
                format!("PLY line {n}"),
                "only triangles are supported",
            ));
        }
        let f = [
            number(tokens.next(), "vertex index", n)?,
            number(tokens.next(), "vertex index", n)?,
            number(tokens.next(), "vertex index", n)?,
        ];
        facets.push(f);
        labels.push(if face_has_label {
            number(tokens.next(), "label", n)?
        } else {
            0
        });
    }
    let label_count = label_count.unwrap_or_else(|| labels.iter().max().map_or(1, |m| m + 1));
    LabeledMesh::new(vertices, facets, labels, label_count)
}

/// Reads `v` and `f` records; polygons are fan-triangulated and every facet
/// gets label 0.
pub fn read_obj(text: &str) -> Result<LabeledMesh> {
    let mut vertices = Vec::new();
    let mut facets = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let x = number(tokens.next(), "coordinate", n)?;
                let y = number(tokens.next(), "coordinate", n)?;
                let z = number(tokens.next(), "coordinate", n)?;
                vertices.push(Vec3::new(x, y, z));
            }
            Some("f") => {
                let ids: Vec<usize> = tokens
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or(t);
                        let k: i64 = number(Some(head), "face index", n)?;
                        let resolved = if k < 0 {
                            vertices.len() as i64 + k
                        } else {
                            k - 1
                        };
                        usize::try_from(resolved).map_err(|_| {
                            Error::parse(format!("OBJ line {n}"), "face index out of range")
                        })
                    })
                    .collect::<Result<_>>()?;
                if ids.len() < 3 {
                    return Err(Error::parse(
                        format!("OBJ line {n}"),
                        "face with fewer than 3 vertices",
                    ));
                }
                for k in 1..ids.len() - 1 {
                    facets.push([ids[0], ids[k], ids[k + 1]]);
                }
            }
            _ => {}
        }
    }
    let labels = vec![0; facets.len()];
    LabeledMesh::new(vertices, facets, labels, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn obj_import() {
        let text = "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 4/4\n";
        let mesh = read_obj(text).unwrap();
        assert_eq!(mesh.facets, vec![[0, 1, 2], [0, 2, 3]]);
        assert_eq!(mesh.labels, vec![0, 0]);
        assert!(read_obj("v 0 0 0\nf 1 2 3\n").is_err());
    }

    #[test]
    fn ply_rejects_garbage() {
        assert!(read_ply("not a ply").is_err());
        assert!(read_ply("ply\nformat binary_little_endian 1.0\nend_header\n").is_err());
    }

    proptest! {
        #[test]
        fn ply_round_trip(
            coords in prop::collection::vec(-1e3..1e3f64, 12),
            labels in prop::collection::vec(0usize..4, 2),
        ) {
            let vertices: Vec<Vec3> = coords.chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
            let mesh = LabeledMesh::new(vertices, vec![[0, 1, 2], [0, 2, 3]], labels, 4).unwrap();
            let back = read_ply(&write_ply(&mesh)).unwrap();
            prop_assert_eq!(back, mesh);
        }
    }
}
