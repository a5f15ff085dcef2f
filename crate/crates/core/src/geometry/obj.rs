//! Wavefront OBJ subset: `v`, `vt`, and triangular `f` records whose corners
//! all carry texture indices. Other record types are skipped with a warning.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Point3;

use super::mesh::{AtlasSize, Mesh};
use crate::error::{Error, Result};

pub fn load_mesh(path: &Path, atlas: AtlasSize) -> Result<Mesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, atlas)
}

fn parse_floats<const N: usize>(fields: &[&str], line: usize, what: &str) -> Result<[f64; N]> {
    if fields.len() < N {
        return Err(Error::Parse {
            line,
            message: format!("`{what}` needs {N} numbers"),
        });
    }
    let mut out = [0.0; N];
    for (o, f) in out.iter_mut().zip(fields) {
        *o = f.parse().map_err(|_| Error::Parse {
            line,
            message: format!("bad number `{f}` in `{what}` record"),
        })?;
    }
    Ok(out)
}

fn resolve(index: &str, count: usize, line: usize, what: &str) -> Result<u32> {
    let i: i64 = index.parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad {what} index `{index}`"),
    })?;
    // 1-based; negative indices count back from the most recent record. Out
    // of range positives are left for the mesh invariants to report.
    let resolved = match i {
        0 => None,
        i if i > 0 => Some(i - 1),
        i => Some(count as i64 + i).filter(|&r| r >= 0),
    };
    resolved
        .and_then(|r| u32::try_from(r).ok())
        .ok_or_else(|| Error::Parse {
            line,
            message: format!("{what} index {i} does not resolve"),
        })
}

pub fn parse_obj(text: &str, atlas: AtlasSize) -> Result<Mesh> {
    let mut vertices = Vec::new();
    let mut texcoords: Vec<[f64; 2]> = Vec::new();
    let mut faces = Vec::new();
    let mut uvs = Vec::new();
    let mut ignored = BTreeSet::new();

    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut fields = content.split_whitespace();
        let Some(tag) = fields.next() else { continue };
        let rest: Vec<&str> = fields.collect();
        match tag {
            "v" => {
                let [x, y, z] = parse_floats::<3>(&rest, line, "v")?;
                vertices.push(Point3::new(x, y, z));
            }
            "vt" => {
                let [u, v] = parse_floats::<2>(&rest, line, "vt")?;
                texcoords.push([u, v]);
            }
            "f" => {
                if rest.len() != 3 {
                    return Err(Error::Parse {
                        line,
                        message: format!("face has {} corners; only triangles are supported", rest.len()),
                    });
                }
                let mut idx = [0u32; 3];
                let mut uv = [[0.0; 2]; 3];
                for (k, corner) in rest.iter().enumerate() {
                    let mut parts = corner.split('/');
                    let v = parts.next().unwrap_or("");
                    let vt = parts.next().unwrap_or("");
                    if vt.is_empty() {
                        return Err(Error::Parse {
                            line,
                            message: format!("face {} corner `{corner}` has no texture index", faces.len()),
                        });
                    }
                    idx[k] = resolve(v, vertices.len(), line, "vertex")?;
                    let t = resolve(vt, texcoords.len(), line, "texture")?;
                    uv[k] = *texcoords.get(t as usize).ok_or_else(|| Error::InvalidMesh {
                        face: faces.len(),
                        message: format!(
                            "texture index {} out of range ({} vt records)",
                            t + 1,
                            texcoords.len()
                        ),
                    })?;
                }
                faces.push(idx);
                uvs.push(uv);
            }
            other => {
                if ignored.insert(other.to_string()) {
                    log::warn!("line {line}: ignoring OBJ record type `{other}`");
                }
            }
        }
    }
    Mesh::new(vertices, faces, uvs, atlas)
}

/// Serializes a mesh; floats use shortest round-trip formatting so a reload
/// reproduces the arrays bit for bit. Each face corner gets its own `vt`.
pub fn write_obj(mesh: &Mesh, material: Option<(&str, &str)>) -> String {
    let mut out = String::new();
    let atlas = mesh.atlas();
    let _ = writeln!(out, "# {} faces, atlas {}x{}", mesh.face_count(), atlas.width, atlas.height);
    if let Some((lib, name)) = material {
        let _ = writeln!(out, "mtllib {lib}");
        let _ = writeln!(out, "usemtl {name}");
    }
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for uv in mesh.uvs() {
        for c in uv {
            let _ = writeln!(out, "vt {} {}", c[0], c[1]);
        }
    }
    for (f, idx) in mesh.faces().iter().enumerate() {
        let t = 3 * f + 1;
        let _ = writeln!(
            out,
            "f {}/{} {}/{} {}/{}",
            idx[0] + 1,
            t,
            idx[1] + 1,
            t + 1,
            idx[2] + 1,
            t + 2
        );
    }
    out
}

pub fn save_mesh(path: &Path, mesh: &Mesh) -> Result<()> {
    std::fs::write(path, write_obj(mesh, None)).map_err(|e| Error::io(path, e))
}
