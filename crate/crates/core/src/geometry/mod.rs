//! Triangle meshes with UV atlases, pinhole cameras, and their file formats.

mod camera;
mod coverage;
mod mesh;
mod obj;

pub use camera::{load_cameras, save_cameras, Camera, CameraView, Projection};
pub use coverage::{cover_triangle, Coverage};
pub use mesh::{AtlasSize, Mesh, NO_FACE, MIN_FACE_AREA};
pub use obj::{load_mesh, parse_obj, save_mesh, write_obj};
