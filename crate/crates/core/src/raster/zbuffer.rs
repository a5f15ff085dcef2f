use rayon::prelude::*;

use crate::geometry::{cover_triangle, Camera, Mesh, NO_FACE};

/// Rows per rasterization band. Bands own disjoint rows, so the result does
/// not depend on how many threads run them.
const BAND_ROWS: u32 = 16;

/// Front-most face and its depth at every pixel center of one view.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewBuffers {
    width: u32,
    height: u32,
    face_id: Vec<u32>,
    depth: Vec<f64>,
}

impl ViewBuffers {
    pub fn empty(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            face_id: vec![NO_FACE; n],
            depth: vec![f64::INFINITY; n],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Row-major face ids, [`NO_FACE`] where nothing is visible.
    pub fn face_ids(&self) -> &[u32] {
        &self.face_id
    }

    /// Row-major camera-frame depths, `+inf` where nothing is visible.
    pub fn depths(&self) -> &[f64] {
        &self.depth
    }

    pub fn face_at(&self, x: u32, y: u32) -> Option<u32> {
        let f = self.face_id[(y * self.width + x) as usize];
        (f != NO_FACE).then_some(f)
    }

    pub fn depth_at(&self, x: u32, y: u32) -> f64 {
        self.depth[(y * self.width + x) as usize]
    }

    pub fn covered_pixels(&self) -> usize {
        self.face_id.iter().filter(|&&f| f != NO_FACE).count()
    }
}

/// A face that survived culling and near-plane rejection, in pixel space.
#[derive(Debug, Clone, Copy)]
pub struct ScreenTriangle {
    pub face: u32,
    pub pixels: [[f64; 2]; 3],
    pub depths: [f64; 3],
}

/// Faces that can appear in `cam`'s image: front-facing and entirely in
/// front of the near plane.
pub fn screen_triangles(mesh: &Mesh, cam: &Camera) -> Vec<ScreenTriangle> {
    let center = cam.center();
    (0..mesh.face_count())
        .filter_map(|f| {
            let corners = mesh.face_corners(f);
            if mesh.face_normal(f).dot(&(corners[0] - center)) >= 0.0 {
                return None;
            }
            let mut pixels = [[0.0; 2]; 3];
            let mut depths = [0.0; 3];
            for (k, p) in corners.iter().enumerate() {
                let proj = cam.project_point(p)?;
                pixels[k] = [proj.u, proj.v];
                depths[k] = proj.depth;
            }
            Some(ScreenTriangle {
                face: f as u32,
                pixels,
                depths,
            })
        })
        .collect()
}

/// Z-buffers the mesh into `cam`'s image. Depth is interpolated
/// perspective-correctly (linear in 1/z). Equal depths keep the lower face id.
pub fn rasterize_view(mesh: &Mesh, cam: &Camera) -> ViewBuffers {
    let (width, height) = (cam.width(), cam.height());
    let tris = screen_triangles(mesh, cam);
    let mut buffers = ViewBuffers::empty(width, height);
    let band_len = (BAND_ROWS * width) as usize;

    buffers
        .face_id
        .par_chunks_mut(band_len)
        .zip(buffers.depth.par_chunks_mut(band_len))
        .enumerate()
        .for_each(|(band, (faces, depths))| {
            let y0 = band as u32 * BAND_ROWS;
            let y1 = (y0 + BAND_ROWS).min(height);
            for tri in &tris {
                let inv = tri.depths.map(|z| 1.0 / z);
                cover_triangle(tri.pixels, width, height, y0..y1, |c| {
                    let inv_z = c.bary[0] * inv[0] + c.bary[1] * inv[1] + c.bary[2] * inv[2];
                    let z = 1.0 / inv_z;
                    let i = ((c.y - y0) * width + c.x) as usize;
                    if z < depths[i] {
                        depths[i] = z;
                        faces[i] = tri.face;
                    }
                });
            }
        });
    buffers
}
