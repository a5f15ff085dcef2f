//! Deterministic synthetic scenes with per-texel ground truth: a box
//! building with openings and painted damage, a ground plane, a sky dome,
//! billboards for the remaining context classes, and a camera ring.

mod bundle;
mod render;
mod scene;
mod soup;
mod spec;

pub use bundle::{view_stem, write_scene_bundle};
pub use render::{render_ground_truth, render_views, GroundTruthView};
pub use scene::{
    generate_scene, ground_half_size, openings, polyline_distance, ring_cameras, sky_radius, Billboard, Chart,
    ChartKind, DebrisDisc, Scene, GUTTER,
};
pub use soup::random_soup;
pub use spec::{Background, CameraRing, DamagePatch, Footprint, ImageSize, OpeningGrid, PatchShape, SceneSpec};
