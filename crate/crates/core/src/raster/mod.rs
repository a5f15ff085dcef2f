//! Per-view visibility: a z-buffer rasterizer over pixel centers and the
//! texel ↔ pixel correspondence built on top of it.

mod correspondence;
mod zbuffer;

pub use correspondence::{depth_tolerance, texel_view_correspondence, TexelCorrespondence, TexelEntry};
pub use zbuffer::{rasterize_view, screen_triangles, ScreenTriangle, ViewBuffers};
