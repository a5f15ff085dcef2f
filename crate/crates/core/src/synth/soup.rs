use nalgebra::{Matrix3, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::geometry::{AtlasSize, Camera, Mesh};

/// Random triangles in front of an identity-pose camera, some of them
/// paired into quads that share an edge. Every face gets its own atlas cell.
pub fn random_soup(seed: u64, max_faces: usize, image: u32, atlas: u32) -> Result<(Mesh, Camera)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = image as f64;
    let cam = Camera::new(0.9 * size, 0.9 * size, size / 2.0, size / 2.0, image, image, Matrix3::identity(), Vector3::zeros())?;
    let n_faces = rng.random_range(1..=max_faces);
    let cells = (n_faces as f64).sqrt().ceil() as u32;
    let cell = atlas / cells;
    assert!(cell >= 4, "atlas too small for {n_faces} faces");

    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut uvs = Vec::new();
    let uv_of = |cell_id: u32, p: [f64; 2]| {
        let (cx, cy) = ((cell_id % cells) * cell, (cell_id / cells) * cell);
        let x = cx as f64 + 1.0 + p[0] * (cell as f64 - 2.0);
        let y = cy as f64 + 1.0 + p[1] * (cell as f64 - 2.0);
        [x / atlas as f64, 1.0 - y / atlas as f64]
    };
    let mut next_cell = 0u32;
    while faces.len() < n_faces {
        let center = Vector3::new(rng.random_range(-2.5..2.5), rng.random_range(-2.5..2.5), rng.random_range(3.0..9.0));
        let quad = faces.len() + 2 <= n_faces && rng.random_bool(0.3);
        let k = vertices.len() as u32;
        let pts: Vec<Vector3<f64>> = (0..if quad { 4 } else { 3 })
            .map(|_| center + Vector3::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)))
            .collect();
        let tris: Vec<[usize; 3]> = if quad { vec![[0, 1, 2], [0, 2, 3]] } else { vec![[0, 1, 2]] };
        if tris.iter().any(|t| (pts[t[1]] - pts[t[0]]).cross(&(pts[t[2]] - pts[t[0]])).norm() < 0.05) {
            continue;
        }
        vertices.extend(pts.iter().map(|p| Point3::from(*p)));
        let local: [[f64; 2]; 4] = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let order: Vec<[f64; 2]> = if quad {
            local.to_vec()
        } else {
            let mut jitter = || [rng.random_range(0.0..0.3), rng.random_range(0.0..0.3)];
            let (a, b, c) = (jitter(), jitter(), jitter());
            vec![[a[0], a[1]], [1.0 - b[0], b[1] * 0.5], [c[0] * 0.5 + 0.25, 1.0 - c[1]]]
        };
        for t in tris {
            faces.push(t.map(|i| k + i as u32));
            uvs.push(t.map(|i| uv_of(next_cell, order[i])));
        }
        next_cell += 1;
    }
    Ok((Mesh::new(vertices, faces, uvs, AtlasSize::square(atlas))?, cam))
}
