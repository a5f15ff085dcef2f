use serde::{Deserialize, Serialize};

use crate::classes::Damage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Footprint {
    pub width: f64,
    pub depth: f64,
    pub height: f64,
}

/// Opening bays on every facade. Each story holds `rows_per_story` rows of
/// `cols` openings centered in their cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpeningGrid {
    pub rows_per_story: u32,
    pub cols: u32,
    pub width_fraction: f64,
    pub height_fraction: f64,
    pub sill_fraction: f64,
}

/// Patch geometry in facade-local coordinates: `a` along the facade left to
/// right seen from outside, `b` bottom to top, both in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum PatchShape {
    /// `[a0, b0, a1, b1]`.
    Rect { rect: [f64; 4] },
    /// Texels within `width / 2` meters of the polyline.
    Polyline { points: Vec<[f64; 2]>, width: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DamagePatch {
    /// 0 faces −y, then counter-clockwise seen from above: +x, +y, −x.
    pub facade: u32,
    pub class: Damage,
    #[serde(flatten)]
    pub shape: PatchShape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Background {
    pub ground: bool,
    pub sky: bool,
    pub trees: u32,
    pub people: u32,
    pub vehicles: u32,
    /// Debris discs on the ground around the building.
    pub debris: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRing {
    pub count: u32,
    pub radius: f64,
    pub height: f64,
    pub look_at: [f64; 3],
    pub hfov_degrees: f64,
    /// Azimuth of the first camera, counter-clockwise from −y.
    pub phase_degrees: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

/// Scene description. The building stands on `z = 0` centered on the
/// origin with `z` up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub footprint: Footprint,
    pub stories: u32,
    pub openings: OpeningGrid,
    #[serde(default)]
    pub damage: Vec<DamagePatch>,
    pub background: Background,
    pub cameras: CameraRing,
    pub image: ImageSize,
    /// Square atlas side in texels.
    pub atlas: u32,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self::demo()
    }
}

impl SceneSpec {
    /// One-story building with a crack, a spalled area with exposed rebar,
    /// twelve cameras, 256×256 images and a 512×512 atlas.
    pub fn demo() -> Self {
        Self {
            footprint: Footprint {
                width: 10.0,
                depth: 8.0,
                height: 4.0,
            },
            stories: 1,
            openings: OpeningGrid {
                rows_per_story: 1,
                cols: 3,
                width_fraction: 0.4,
                height_fraction: 0.5,
                sill_fraction: 0.25,
            },
            damage: vec![
                DamagePatch {
                    facade: 0,
                    class: Damage::Crack,
                    shape: PatchShape::Polyline {
                        points: vec![[0.05, 0.1], [0.2, 0.45], [0.28, 0.6], [0.32, 0.95]],
                        width: 0.12,
                    },
                },
                DamagePatch {
                    facade: 1,
                    class: Damage::Spalling,
                    shape: PatchShape::Rect {
                        rect: [0.05, 0.05, 0.3, 0.4],
                    },
                },
                DamagePatch {
                    facade: 2,
                    class: Damage::Rebar,
                    shape: PatchShape::Rect {
                        rect: [0.7, 0.1, 0.95, 0.3],
                    },
                },
            ],
            background: Background {
                ground: true,
                sky: true,
                trees: 3,
                people: 2,
                vehicles: 2,
                debris: 3,
            },
            cameras: CameraRing {
                count: 12,
                radius: 20.0,
                height: 5.0,
                look_at: [0.0, 0.0, 2.0],
                hfov_degrees: 60.0,
                phase_degrees: 0.0,
            },
            image: ImageSize {
                width: 256,
                height: 256,
            },
            atlas: 512,
            seed: 7,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("scene spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn facade_width(&self, facade: u32) -> f64 {
        if facade.is_multiple_of(2) {
            self.footprint.width
        } else {
            self.footprint.depth
        }
    }

    pub fn opening_rows(&self) -> u32 {
        self.stories * self.openings.rows_per_story
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("scene spec: {m}")));
        let f = &self.footprint;
        for (name, v) in [("width", f.width), ("depth", f.depth), ("height", f.height)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("footprint {name} must be positive, got {v}"));
            }
        }
        if self.stories == 0 {
            return bad("stories must be at least 1".into());
        }
        let o = &self.openings;
        let frac = |v: f64| v > 0.0 && v < 1.0;
        if o.rows_per_story > 0 && o.cols > 0 {
            if !frac(o.width_fraction) || !frac(o.height_fraction) || !(0.0..1.0).contains(&o.sill_fraction) {
                return bad("opening fractions must lie in (0, 1)".into());
            }
            if o.sill_fraction + o.height_fraction >= 1.0 {
                return bad("opening sill plus height must stay below the cell top".into());
            }
        }
        for (i, p) in self.damage.iter().enumerate() {
            if p.facade > 3 {
                return bad(format!("damage patch {i}: facade {} does not exist (0-3)", p.facade));
            }
            if p.class == Damage::Background {
                return bad(format!("damage patch {i}: class must be crack, spalling or rebar"));
            }
            let inside = |v: f64| (0.0..=1.0).contains(&v);
            match &p.shape {
                PatchShape::Rect { rect: [a0, b0, a1, b1] } => {
                    if ![*a0, *b0, *a1, *b1].into_iter().all(inside) || a0 >= a1 || b0 >= b1 {
                        return bad(format!("damage patch {i}: rectangle must be non-empty and within the facade chart"));
                    }
                }
                PatchShape::Polyline { points, width } => {
                    if points.is_empty() || !points.iter().flatten().copied().all(inside) {
                        return bad(format!("damage patch {i}: polyline points must lie within the facade chart"));
                    }
                    if !(*width > 0.0 && width.is_finite()) {
                        return bad(format!("damage patch {i}: polyline width must be positive"));
                    }
                }
            }
        }
        let c = &self.cameras;
        let half_diagonal = 0.5 * f.width.hypot(f.depth);
        if !(c.radius > half_diagonal) {
            return bad(format!(
                "camera ring radius {} must exceed the building half-diagonal {half_diagonal:.3}",
                c.radius
            ));
        }
        if !(c.hfov_degrees > 0.0 && c.hfov_degrees < 180.0) {
            return bad("camera field of view must lie in (0, 180) degrees".into());
        }
        if !c.height.is_finite() || !c.look_at.iter().all(|v| v.is_finite()) || !c.phase_degrees.is_finite() {
            return bad("camera ring values must be finite".into());
        }
        if self.image.width == 0 || self.image.height == 0 {
            return bad("image size must be positive".into());
        }
        if self.atlas < 16 {
            return bad(format!("atlas side {} is below 16 texels", self.atlas));
        }
        if !self.background.ground && self.background.debris > 0 {
            return bad("debris requires the ground plane".into());
        }
        Ok(())
    }
}
