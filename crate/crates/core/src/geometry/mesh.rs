use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::coverage::cover_triangle;
use crate::error::{Error, Result};

/// Faces below this 3D area (m²) are rejected as degenerate.
pub const MIN_FACE_AREA: f64 = 1e-12;

/// Marker for "no face" in per-texel and per-pixel face grids.
pub const NO_FACE: u32 = u32::MAX;

/// Texture atlas dimensions in texels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AtlasSize {
    pub width: u32,
    pub height: u32,
}

impl AtlasSize {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub fn square(side: u32) -> Self {
        Self::new(side, side)
    }

    pub fn texel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Continuous atlas position (texel units, row 0 at the top) of a UV
    /// coordinate; `v = 1` is the top row, as in OBJ texture space.
    pub fn uv_to_texel_space(&self, uv: [f64; 2]) -> [f64; 2] {
        [uv[0] * self.width as f64, (1.0 - uv[1]) * self.height as f64]
    }

    /// UV coordinate of a texel center.
    pub fn texel_center_uv(&self, s: u32, t: u32) -> [f64; 2] {
        [
            (s as f64 + 0.5) / self.width as f64,
            1.0 - (t as f64 + 0.5) / self.height as f64,
        ]
    }

    /// Texel containing a UV coordinate, if inside the atlas.
    pub fn texel_of_uv(&self, uv: [f64; 2]) -> Option<(u32, u32)> {
        let [x, y] = self.uv_to_texel_space(uv);
        if x >= 0.0 && y >= 0.0 && x < self.width as f64 && y < self.height as f64 {
            Some((x as u32, y as u32))
        } else {
            None
        }
    }
}

/// A triangle mesh with one UV triangle per face in a shared atlas.
///
/// Construction validates every invariant: face indices in range, UVs in
/// the unit square, non-degenerate faces in 3D and UV, and UV charts that do
/// not overlap at atlas resolution. The per-texel face ownership computed by
/// that last check is kept.
#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point3<f64>>,
    faces: Vec<[u32; 3]>,
    uvs: Vec<[[f64; 2]; 3]>,
    atlas: AtlasSize,
    texel_faces: Vec<u32>,
}

impl PartialEq for Mesh {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices
            && self.faces == other.faces
            && self.uvs == other.uvs
            && self.atlas == other.atlas
    }
}

impl Mesh {
    pub fn new(
        vertices: Vec<Point3<f64>>,
        faces: Vec<[u32; 3]>,
        uvs: Vec<[[f64; 2]; 3]>,
        atlas: AtlasSize,
    ) -> Result<Self> {
        if atlas.width == 0 || atlas.height == 0 {
            return Err(Error::Config("atlas resolution must be positive".into()));
        }
        if uvs.len() != faces.len() {
            return Err(Error::Shape(format!(
                "{} faces but {} UV triangles",
                faces.len(),
                uvs.len()
            )));
        }
        if let Some(i) = vertices.iter().position(|v| !v.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh {
                face: 0,
                message: format!("vertex {i} is not finite"),
            });
        }
        for (f, (idx, uv)) in faces.iter().zip(&uvs).enumerate() {
            for &i in idx {
                if i as usize >= vertices.len() {
                    return Err(Error::InvalidMesh {
                        face: f,
                        message: format!(
                            "vertex index {i} out of range ({} vertices)",
                            vertices.len()
                        ),
                    });
                }
            }
            for c in uv.iter().flatten() {
                if !(0.0..=1.0).contains(c) {
                    return Err(Error::InvalidMesh {
                        face: f,
                        message: format!("UV coordinate {c} outside [0, 1]"),
                    });
                }
            }
            let [a, b, c] = idx.map(|i| vertices[i as usize]);
            let area = 0.5 * (b - a).cross(&(c - a)).norm();
            if !(area > MIN_FACE_AREA) {
                return Err(Error::InvalidMesh {
                    face: f,
                    message: format!("degenerate face (area {area:e} m²)"),
                });
            }
            if !(uv_area(uv) > 0.0) {
                return Err(Error::InvalidMesh {
                    face: f,
                    message: "degenerate UV triangle".into(),
                });
            }
        }

        let mut texel_faces = vec![NO_FACE; atlas.texel_count()];
        for (f, uv) in uvs.iter().enumerate() {
            let tri = uv.map(|c| atlas.uv_to_texel_space(c));
            let mut clash = None;
            cover_triangle(tri, atlas.width, atlas.height, 0..atlas.height, |cov| {
                let slot = &mut texel_faces[(cov.y * atlas.width + cov.x) as usize];
                if *slot != NO_FACE && clash.is_none() {
                    clash = Some((*slot, cov.x, cov.y));
                }
                *slot = f as u32;
            });
            if let Some((other, s, t)) = clash {
                return Err(Error::InvalidMesh {
                    face: f,
                    message: format!("UV triangle overlaps face {other} at texel ({s}, {t})"),
                });
            }
        }

        Ok(Self {
            vertices,
            faces,
            uvs,
            atlas,
            texel_faces,
        })
    }

    pub fn empty(atlas: AtlasSize) -> Self {
        Self {
            vertices: Vec::new(),
            faces: Vec::new(),
            uvs: Vec::new(),
            atlas,
            texel_faces: vec![NO_FACE; atlas.texel_count()],
        }
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn uvs(&self) -> &[[[f64; 2]; 3]] {
        &self.uvs
    }

    pub fn atlas(&self) -> AtlasSize {
        self.atlas
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Face owning each texel (row-major), or [`NO_FACE`].
    pub fn texel_faces(&self) -> &[u32] {
        &self.texel_faces
    }

    pub fn face_corners(&self, face: usize) -> [Point3<f64>; 3] {
        self.faces[face].map(|i| self.vertices[i as usize])
    }

    /// Unnormalized normal following the face winding (counter-clockwise
    /// seen from outside).
    pub fn face_normal(&self, face: usize) -> Vector3<f64> {
        let [a, b, c] = self.face_corners(face);
        (b - a).cross(&(c - a))
    }

    pub fn face_area(&self, face: usize) -> f64 {
        0.5 * self.face_normal(face).norm()
    }

    /// Point on a face from barycentric weights.
    pub fn interpolate(&self, face: usize, bary: [f64; 3]) -> Point3<f64> {
        let [a, b, c] = self.face_corners(face);
        Point3::from(a.coords * bary[0] + b.coords * bary[1] + c.coords * bary[2])
    }

    /// Same mesh with every vertex mapped through `f`.
    pub fn map_vertices(&self, f: impl Fn(&Point3<f64>) -> Point3<f64>) -> Result<Self> {
        Self::new(
            self.vertices.iter().map(f).collect(),
            self.faces.clone(),
            self.uvs.clone(),
            self.atlas,
        )
    }
}

fn uv_area(uv: &[[f64; 2]; 3]) -> f64 {
    let [a, b, c] = uv;
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])).abs()
}
