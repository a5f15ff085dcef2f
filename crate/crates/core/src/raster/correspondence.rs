use rayon::prelude::*;

use super::zbuffer::ViewBuffers;
use crate::geometry::{cover_triangle, Camera, Mesh};

/// One atlas texel seen by a view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TexelEntry {
    /// Atlas (column, row).
    pub texel: (u32, u32),
    /// Image (column, row).
    pub pixel: (u32, u32),
    pub face: u32,
}

/// Visible texels of one view, sorted row-major by texel.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TexelCorrespondence {
    pub atlas_width: u32,
    pub atlas_height: u32,
    pub entries: Vec<TexelEntry>,
}

impl TexelCorrespondence {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Largest depth disagreement (meters) accepted between a texel's projected
/// depth and the z-buffer at its pixel.
pub fn depth_tolerance(buffer_depth: f64) -> f64 {
    (1e-3 * buffer_depth).max(1e-4)
}

/// Maps each texel center inside a face's UV triangle to the 3D surface,
/// projects it, and keeps it when its pixel is in frame, shows the same
/// face, and agrees with the z-buffer depth.
pub fn texel_view_correspondence(mesh: &Mesh, cam: &Camera, buffers: &ViewBuffers) -> TexelCorrespondence {
    let atlas = mesh.atlas();
    let (w, h) = (cam.width() as f64, cam.height() as f64);
    let per_face: Vec<Vec<TexelEntry>> = (0..mesh.face_count())
        .into_par_iter()
        .map(|f| {
            let mut out = Vec::new();
            let tri = mesh.uvs()[f].map(|uv| atlas.uv_to_texel_space(uv));
            cover_triangle(tri, atlas.width, atlas.height, 0..atlas.height, |c| {
                let p = mesh.interpolate(f, c.bary);
                let Some(proj) = cam.project_point(&p) else { return };
                if !(proj.u >= 0.0 && proj.v >= 0.0 && proj.u < w && proj.v < h) {
                    return;
                }
                let (px, py) = (proj.u as u32, proj.v as u32);
                if buffers.face_at(px, py) != Some(f as u32) {
                    return;
                }
                let d = buffers.depth_at(px, py);
                if (proj.depth - d).abs() <= depth_tolerance(d) {
                    out.push(TexelEntry {
                        texel: (c.x, c.y),
                        pixel: (px, py),
                        face: f as u32,
                    });
                }
            });
            out
        })
        .collect();
    let mut entries: Vec<TexelEntry> = per_face.into_iter().flatten().collect();
    entries.sort_unstable_by_key(|e| (e.texel.1, e.texel.0));
    TexelCorrespondence {
        atlas_width: atlas.width,
        atlas_height: atlas.height,
        entries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::AtlasSize;
    use crate::raster::rasterize_view;
    use nalgebra::{Matrix3, Point3, Vector3};

    fn camera() -> Camera {
        Camera::new(16.0, 16.0, 8.0, 8.0, 16, 16, Matrix3::identity(), Vector3::zeros()).unwrap()
    }

    fn full_frame() -> Mesh {
        let z = 2.0;
        let v = vec![
            Point3::new(-4.0, -4.0, z),
            Point3::new(-4.0, 12.0, z),
            Point3::new(12.0, -4.0, z),
        ];
        let uv = [[0.0, 1.0], [0.0, 0.0], [1.0, 1.0]];
        Mesh::new(v, vec![[0, 1, 2]], vec![uv], AtlasSize::square(8)).unwrap()
    }

    #[test]
    fn visible_texels_map_to_direct_projection() {
        let mesh = full_frame();
        let cam = camera();
        let b = rasterize_view(&mesh, &cam);
        let corr = texel_view_correspondence(&mesh, &cam, &b);
        assert!(!corr.is_empty());
        let atlas = mesh.atlas();
        for e in &corr.entries {
            assert_eq!(mesh.texel_faces()[(e.texel.1 * atlas.width + e.texel.0) as usize], 0);
            let mut hit = None;
            cover_triangle(
                mesh.uvs()[0].map(|uv| atlas.uv_to_texel_space(uv)),
                8,
                8,
                0..8,
                |c| {
                    if (c.x, c.y) == e.texel {
                        hit = Some(c.bary);
                    }
                },
            );
            let p = cam.project_point(&mesh.interpolate(0, hit.unwrap())).unwrap();
            assert_eq!(e.pixel, (p.u as u32, p.v as u32));
        }
        // Every covered texel of the triangle that lands inside the frame is visible.
        let in_frame = (0..64u32)
            .filter(|&i| mesh.texel_faces()[i as usize] == 0)
            .filter(|&i| {
                let uv = atlas.texel_center_uv(i % 8, i / 8);
                let p = mesh.vertices()[0].coords
                    + (mesh.vertices()[2].coords - mesh.vertices()[0].coords) * uv[0]
                    + (mesh.vertices()[1].coords - mesh.vertices()[0].coords) * (1.0 - uv[1]);
                let q = cam.project_point(&Point3::from(p)).unwrap();
                q.u >= 0.0 && q.u < 16.0 && q.v >= 0.0 && q.v < 16.0
            })
            .count();
        assert_eq!(corr.len(), in_frame);
    }

    #[test]
    fn back_facing_face_yields_no_entries() {
        let m = full_frame();
        let flipped = Mesh::new(
            m.vertices().to_vec(),
            vec![[0, 2, 1]],
            vec![[m.uvs()[0][0], m.uvs()[0][2], m.uvs()[0][1]]],
            m.atlas(),
        )
        .unwrap();
        let cam = camera();
        let b = rasterize_view(&flipped, &cam);
        assert!(texel_view_correspondence(&flipped, &cam, &b).is_empty());
    }

    #[test]
    fn tolerance_has_absolute_floor() {
        assert_eq!(depth_tolerance(0.01), 1e-4);
        assert_eq!(depth_tolerance(10.0), 1e-2);
    }
}
