//! Z-buffers a random triangle soup and lists which atlas texels each
//! pixel sees.
//!
//! cargo run --release --example visibility -- [seed]

use condition_aware::raster::{rasterize_view, texel_view_correspondence};
use condition_aware::synth::random_soup;

fn main() -> condition_aware::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let (mesh, cam) = random_soup(seed, 200, 64, 256)?;
    let buffers = rasterize_view(&mesh, &cam);
    let corr = texel_view_correspondence(&mesh, &cam, &buffers);

    let visible_faces: std::collections::BTreeSet<u32> = corr.entries.iter().map(|e| e.face).collect();
    println!(
        "{} faces, {} of {} pixels covered, {} faces visible",
        mesh.face_count(),
        buffers.covered_pixels(),
        cam.width() * cam.height(),
        visible_faces.len()
    );
    println!("{} atlas texels map to a pixel; first few:", corr.len());
    for e in corr.entries.iter().take(5) {
        let (x, y) = e.pixel;
        println!(
            "  texel {:?} -> pixel {:?} on face {} at depth {:.3}",
            e.texel,
            e.pixel,
            e.face,
            buffers.depth_at(x, y)
        );
    }
    Ok(())
}
