use std::path::Path;

use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points closer than this to the image plane (camera-frame z, meters) are
/// treated as behind the camera.
pub const NEAR_DEPTH: f64 = 1e-6;

/// Pinhole camera. Camera frame: x right, y down, z forward.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

/// Pixel position and camera-frame depth of a projected point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl Camera {
    /// `rotation` maps world to camera coordinates: `p_cam = R p + t`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(Error::InvalidCamera(format!("focal lengths must be positive (fx {fx}, fy {fy})")));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidCamera("image size must be positive".into()));
        }
        if !(0.0..width as f64).contains(&cx) || !(0.0..height as f64).contains(&cy) {
            return Err(Error::InvalidCamera(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        if !translation.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidCamera("translation is not finite".into()));
        }
        let err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det = rotation.determinant();
        if !(err <= 1e-9 && (det - 1.0).abs() <= 1e-9) {
            return Err(Error::InvalidCamera(format!(
                "rotation is not a proper orthonormal matrix (orthogonality error {err:e}, det {det})"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            rotation,
            translation,
        })
    }

    /// Camera at `eye` looking at `target`, with world `up` mapped to image
    /// up. Focal length from a horizontal field of view in radians; the
    /// principal point is the image center.
    pub fn look_at(
        eye: Point3<f64>,
        target: Point3<f64>,
        up: Vector3<f64>,
        hfov: f64,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidCamera("eye and target coincide".into()))?;
        let right = forward
            .cross(&up)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidCamera("view direction parallel to up".into()))?;
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye.coords);
        let f = width as f64 / (2.0 * (hfov / 2.0).tan());
        Self::new(f, f, width as f64 / 2.0, height as f64 / 2.0, width, height, rotation, translation)
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }
    pub fn fy(&self) -> f64 {
        self.fy
    }
    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }
    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }
    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Optical center in world coordinates.
    pub fn center(&self) -> Point3<f64> {
        Point3::from(-(self.rotation.transpose() * self.translation))
    }

    pub fn to_camera(&self, p: &Point3<f64>) -> Vector3<f64> {
        self.rotation * p.coords + self.translation
    }

    /// `None` when the point is behind (or on) the near plane. No clipping
    /// against the image bounds is done.
    pub fn project_point(&self, p: &Point3<f64>) -> Option<Projection> {
        self.project_camera_point(&self.to_camera(p))
    }

    pub fn project_camera_point(&self, pc: &Vector3<f64>) -> Option<Projection> {
        if pc.z > NEAR_DEPTH {
            Some(Projection {
                u: self.fx * pc.x / pc.z + self.cx,
                v: self.fy * pc.y / pc.z + self.cy,
                depth: pc.z,
            })
        } else {
            None
        }
    }

    /// World point at camera-frame depth `depth` along pixel `(u, v)`.
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Point3<f64> {
        let pc = Vector3::new((u - self.cx) / self.fx * depth, (v - self.cy) / self.fy * depth, depth);
        Point3::from(self.rotation.transpose() * (pc - self.translation))
    }

    /// World-space ray through pixel position `(u, v)`; the direction has
    /// unit camera-frame z, so the ray parameter equals depth.
    pub fn ray(&self, u: f64, v: f64) -> (Point3<f64>, Vector3<f64>) {
        let dc = Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
        (self.center(), self.rotation.transpose() * dc)
    }

    /// Same camera after moving the world by `p ↦ R p + t`.
    pub fn transformed(&self, rotation: &Matrix3<f64>, translation: &Vector3<f64>) -> Result<Self> {
        let r = self.rotation * rotation.transpose();
        let t = self.translation - r * translation;
        Self::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height, r, t)
    }
}

/// A camera together with the stem of the image (and label map) it views.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    pub camera: Camera,
    pub image: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct CameraRecord {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    rotation: [f64; 9],
    translation: [f64; 3],
    image: String,
}

/// Reads the camera JSON array (`rotation` is row-major world-to-camera).
pub fn load_cameras(path: &Path) -> Result<Vec<CameraView>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records: Vec<CameraRecord> = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let camera = Camera::new(
                r.fx,
                r.fy,
                r.cx,
                r.cy,
                r.width,
                r.height,
                Matrix3::from_row_slice(&r.rotation),
                Vector3::from_column_slice(&r.translation),
            )
            .map_err(|e| Error::InvalidCamera(format!("camera {i} ({}): {e}", r.image)))?;
            Ok(CameraView { camera, image: r.image })
        })
        .collect()
}

pub fn save_cameras(path: &Path, views: &[CameraView]) -> Result<()> {
    let records: Vec<CameraRecord> = views
        .iter()
        .map(|v| {
            let c = &v.camera;
            let mut rotation = [0.0; 9];
            for r in 0..3 {
                for k in 0..3 {
                    rotation[r * 3 + k] = c.rotation[(r, k)];
                }
            }
            CameraRecord {
                fx: c.fx,
                fy: c.fy,
                cx: c.cx,
                cy: c.cy,
                width: c.width,
                height: c.height,
                rotation,
                translation: [c.translation.x, c.translation.y, c.translation.z],
                image: v.image.clone(),
            }
        })
        .collect();
    let text = serde_json::to_string_pretty(&records).expect("camera records serialize");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
