//! Wavefront OBJ subset: `v`, `vn` and `f` records.
//!
//! Normals are resolved per position: every `v//vn` or `v/vt/vn` reference
//! adds its normal to the position, and the sum is renormalized. Positions
//! that no face gives a normal receive area-weighted face normals.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::math::Vec3;

const FORMAT: &str = "obj";

#[derive(Clone, Debug, PartialEq)]
pub struct ObjMesh {
    pub vertices: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

fn resolve(index: &str, count: usize, line: usize, what: &str) -> Result<usize> {
    let i: i64 = index
        .parse()
        .map_err(|_| Error::parse(FORMAT, line, format!("invalid {what} index `{index}`")))?;
    let resolved = if i > 0 {
        i - 1
    } else if i < 0 {
        count as i64 + i
    } else {
        -1
    };
    if resolved < 0 || resolved as usize >= count {
        return Err(Error::parse(
            FORMAT,
            line,
            format!("{what} index {i} out of range ({count} defined)"),
        ));
    }
    Ok(resolved as usize)
}

fn vec3(fields: &[&str], line: usize, what: &str) -> Result<Vec3> {
    if fields.len() < 3 {
        return Err(Error::parse(FORMAT, line, format!("`{what}` needs three coordinates")));
    }
    let mut c = [0.0; 3];
    for (slot, f) in c.iter_mut().zip(fields) {
        *slot = match f.parse::<f64>() {
            Ok(v) if v.is_finite() => v,
            _ => return Err(Error::parse(FORMAT, line, format!("invalid coordinate `{f}`"))),
        };
    }
    Ok(Vec3::from_array(c))
}

/// Area-weighted (unnormalized cross product) face normals summed per vertex.
pub fn face_normals(vertices: &[Vec3], faces: &[[usize; 3]]) -> Vec<Vec3> {
    let mut acc = vec![Vec3::ZERO; vertices.len()];
    for f in faces {
        let n = (vertices[f[1]] - vertices[f[0]]).cross(vertices[f[2]] - vertices[f[0]]);
        for &i in f {
            acc[i] += n;
        }
    }
    acc
}

pub fn parse_obj(text: &str) -> Result<ObjMesh> {
    let mut vertices = Vec::new();
    let mut file_normals = Vec::new();
    let mut faces = Vec::new();
    let mut normal_sum: Vec<Vec3> = Vec::new();
    let mut has_normal: Vec<bool> = Vec::new();
    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        last_line = line;
        let content = raw.split('#').next().unwrap_or("");
        let mut fields = content.split_whitespace();
        let Some(kind) = fields.next() else { continue };
        let rest: Vec<&str> = fields.collect();
        match kind {
            "v" => {
                vertices.push(vec3(&rest, line, "v")?);
                normal_sum.push(Vec3::ZERO);
                has_normal.push(false);
            }
            "vn" => file_normals.push(vec3(&rest, line, "vn")?),
            "f" => {
                if rest.len() < 3 {
                    return Err(Error::parse(FORMAT, line, "a face needs at least three vertices"));
                }
                let mut corners = Vec::with_capacity(rest.len());
                for r in &rest {
                    let parts: Vec<&str> = r.split('/').collect();
                    if parts.len() > 3 || parts[0].is_empty() {
                        return Err(Error::parse(FORMAT, line, format!("malformed face entry `{r}`")));
                    }
                    let v = resolve(parts[0], vertices.len(), line, "vertex")?;
                    if let Some(n) = parts.get(2).filter(|s| !s.is_empty()) {
                        let n = resolve(n, file_normals.len(), line, "normal")?;
                        normal_sum[v] += file_normals[n];
                        has_normal[v] = true;
                    }
                    corners.push(v);
                }
                for k in 1..corners.len() - 1 {
                    faces.push([corners[0], corners[k], corners[k + 1]]);
                }
            }
            "vt" | "o" | "g" | "s" | "usemtl" | "mtllib" | "l" | "p" => {}
            other => return Err(Error::parse(FORMAT, line, format!("unsupported record `{other}`"))),
        }
    }
    if vertices.is_empty() {
        return Err(Error::parse(FORMAT, last_line.max(1), "no vertices"));
    }
    let computed = face_normals(&vertices, &faces);
    let mut normals = Vec::with_capacity(vertices.len());
    for (i, v) in vertices.iter().enumerate() {
        let sum = if has_normal[i] { normal_sum[i] } else { computed[i] };
        let n = sum.norm();
        if !(n > 1e-12) {
            return Err(Error::parse(
                FORMAT,
                last_line.max(1),
                format!("vertex {} ({:?}) has no usable normal", i + 1, v.to_array()),
            ));
        }
        normals.push(sum / n);
    }
    Ok(ObjMesh {
        vertices,
        normals,
        faces,
    })
}

/// Serialize with one normal per vertex and `v//vn` faces.
pub fn write_obj(mesh: &ObjMesh) -> String {
    let mut s = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {:.6} {:.6} {:.6}", v.x, v.y, v.z);
    }
    for n in &mesh.normals {
        let _ = writeln!(s, "vn {:.6} {:.6} {:.6}", n.x, n.y, n.z);
    }
    for f in &mesh.faces {
        let _ = writeln!(s, "f {0}//{0} {1}//{1} {2}//{2}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}
