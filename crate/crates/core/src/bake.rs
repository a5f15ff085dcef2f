//! Multi-view label averaging onto the mesh atlas and export of the
//! resulting condition-aware model.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classes::{DT_CLASSES, DT_PALETTE, N_DT, N_SB, SB_CLASSES, SB_PALETTE};
use crate::error::{Error, Result};
use crate::fusion::FusedLabelMap;
use crate::geometry::{AtlasSize, Camera, Mesh, NO_FACE};
use crate::imageio::{read_gray16, read_labels, read_rgb, write_gray16, write_labels, write_rgb, RgbImage};
use crate::labels::{argmax, LabelMap, ProbabilityMap};
use crate::raster::TexelCorrespondence;

pub const SCHEMA_VERSION: u32 = 1;
/// Context-atlas palette index of texels no view observed.
pub const UNOBSERVED: u8 = N_SB as u8;

/// Labels of one view: hard fused labels, or soft context and damage-type
/// distributions.
#[derive(Debug, Clone, Copy)]
pub enum ViewLabels<'a> {
    Hard(&'a FusedLabelMap),
    Soft {
        context: &'a ProbabilityMap,
        damage: &'a ProbabilityMap,
    },
}

impl ViewLabels<'_> {
    fn dims(&self) -> (usize, usize) {
        match self {
            ViewLabels::Hard(m) => (m.width(), m.height()),
            ViewLabels::Soft { context, .. } => (context.width(), context.height()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BakeView<'a> {
    pub camera: &'a Camera,
    pub correspondence: &'a TexelCorrespondence,
    pub labels: ViewLabels<'a>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceSummary {
    /// Area-weighted mean damage distribution over observed texels.
    pub damage: [f64; N_DT],
    /// Observed share of the face's texel area.
    pub observed: f64,
}

/// Mesh plus per-texel mean label distributions and view support.
#[derive(Debug, Clone)]
pub struct ConditionAwareModel {
    mesh: Mesh,
    view_count: usize,
    damage: Vec<f64>,
    context: Vec<f64>,
    support: Vec<u32>,
    faces: Vec<FaceSummary>,
}

fn check_view(mesh: &Mesh, i: usize, v: &BakeView) -> Result<Vec<(u32, u32)>> {
    let atlas = mesh.atlas();
    let c = v.correspondence;
    if (c.atlas_width, c.atlas_height) != (atlas.width, atlas.height) {
        return Err(Error::Shape(format!(
            "view {i}: correspondence atlas {}x{} differs from mesh atlas {}x{}",
            c.atlas_width, c.atlas_height, atlas.width, atlas.height
        )));
    }
    let (w, h) = (v.camera.width() as usize, v.camera.height() as usize);
    if v.labels.dims() != (w, h) {
        let (lw, lh) = v.labels.dims();
        return Err(Error::Shape(format!("view {i}: labels are {lw}x{lh}, camera is {w}x{h}")));
    }
    if let ViewLabels::Soft { context, damage } = v.labels {
        if (damage.width(), damage.height()) != (w, h) || context.n_classes() != N_SB || damage.n_classes() != N_DT {
            return Err(Error::Shape(format!("view {i}: soft label maps have the wrong shape")));
        }
    }
    let mut out = Vec::with_capacity(c.entries.len());
    let mut last = None;
    for e in &c.entries {
        let (s, t) = e.texel;
        let (px, py) = e.pixel;
        if s >= atlas.width || t >= atlas.height || px as usize >= w || py as usize >= h {
            return Err(Error::Shape(format!("view {i}: correspondence entry out of range")));
        }
        let texel = t * atlas.width + s;
        if mesh.texel_faces()[texel as usize] != e.face {
            return Err(Error::Shape(format!(
                "view {i}: texel ({s}, {t}) is not owned by face {}; correspondence built for another mesh",
                e.face
            )));
        }
        if last.is_some_and(|l| l >= texel) {
            return Err(Error::Shape(format!("view {i}: correspondence is not sorted by texel")));
        }
        last = Some(texel);
        out.push((texel, py * w as u32 + px));
    }
    Ok(out)
}

/// Content hash of a soft view's contribution, used to fix summation order.
fn view_hash(samples: &[(u32, u32)], labels: &ViewLabels) -> [u8; 32] {
    let mut h = Sha256::new();
    if let ViewLabels::Soft { context, damage } = labels {
        for &(texel, pixel) in samples {
            h.update(texel.to_le_bytes());
            let p = pixel as usize;
            for v in &context.data()[p * N_SB..(p + 1) * N_SB] {
                h.update(v.to_bits().to_le_bytes());
            }
            for v in &damage.data()[p * N_DT..(p + 1) * N_DT] {
                h.update(v.to_bits().to_le_bytes());
            }
        }
    }
    h.finalize().into()
}

/// Averages every view's labels over the texels it sees. Hard labels are
/// tallied as integer counts and soft ones are summed in content-hash order,
/// so the result does not depend on view order.
pub fn bake_views(mesh: &Mesh, views: &[BakeView]) -> Result<ConditionAwareModel> {
    let n = mesh.atlas().texel_count();
    let samples: Vec<Vec<(u32, u32)>> = views
        .par_iter()
        .enumerate()
        .map(|(i, v)| check_view(mesh, i, v))
        .collect::<Result<_>>()?;

    let mut support = vec![0u32; n];
    let mut ctx_counts = vec![0u32; n * N_SB];
    let mut dmg_counts = vec![0u32; n * N_DT];
    let mut soft: Vec<(usize, [u8; 32])> = Vec::new();
    for (i, (v, s)) in views.iter().zip(&samples).enumerate() {
        for &(texel, _) in s {
            support[texel as usize] += 1;
        }
        match v.labels {
            ViewLabels::Hard(m) => {
                for &(texel, pixel) in s {
                    let (t, p) = (texel as usize, pixel as usize);
                    ctx_counts[t * N_SB + m.context()[p] as usize] += 1;
                    dmg_counts[t * N_DT + m.damage()[p] as usize] += 1;
                }
            }
            ViewLabels::Soft { .. } => soft.push((i, view_hash(s, &v.labels))),
        }
    }
    soft.sort_by_key(|&(i, h)| (h, i));

    let mut context: Vec<f64> = ctx_counts.iter().map(|&c| c as f64).collect();
    let mut damage: Vec<f64> = dmg_counts.iter().map(|&c| c as f64).collect();
    for &(i, _) in &soft {
        let ViewLabels::Soft { context: pc, damage: pd } = views[i].labels else { unreachable!() };
        for &(texel, pixel) in &samples[i] {
            let (t, p) = (texel as usize, pixel as usize);
            for k in 0..N_SB {
                context[t * N_SB + k] += pc.data()[p * N_SB + k];
            }
            for k in 0..N_DT {
                damage[t * N_DT + k] += pd.data()[p * N_DT + k];
            }
        }
    }
    context
        .par_chunks_mut(N_SB)
        .zip(damage.par_chunks_mut(N_DT))
        .zip(&support)
        .for_each(|((c, d), &s)| {
            if s > 0 {
                let inv = 1.0 / s as f64;
                c.iter_mut().for_each(|x| *x *= inv);
                d.iter_mut().for_each(|x| *x *= inv);
            }
        });

    let faces = face_summaries(mesh, &damage, &support);
    Ok(ConditionAwareModel {
        mesh: mesh.clone(),
        view_count: views.len(),
        damage,
        context,
        support,
        faces,
    })
}

/// Each texel's footprint is its face's area over the face's texel count.
fn face_summaries(mesh: &Mesh, damage: &[f64], support: &[u32]) -> Vec<FaceSummary> {
    let nf = mesh.face_count();
    let mut texels = vec![0usize; nf];
    for &f in mesh.texel_faces() {
        if f != NO_FACE {
            texels[f as usize] += 1;
        }
    }
    let mut sums = vec![[0.0; N_DT]; nf];
    let mut observed = vec![0.0; nf];
    for (t, &f) in mesh.texel_faces().iter().enumerate() {
        if f == NO_FACE || support[t] == 0 {
            continue;
        }
        let f = f as usize;
        let w = mesh.face_area(f) / texels[f] as f64;
        observed[f] += w;
        for k in 0..N_DT {
            sums[f][k] += w * damage[t * N_DT + k];
        }
    }
    (0..nf)
        .map(|f| {
            if observed[f] == 0.0 {
                return FaceSummary {
                    damage: [0.0; N_DT],
                    observed: 0.0,
                };
            }
            let total = mesh.face_area(f);
            FaceSummary {
                damage: sums[f].map(|s| s / observed[f]),
                observed: (observed[f] / total).min(1.0),
            }
        })
        .collect()
}

impl ConditionAwareModel {
    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn atlas(&self) -> AtlasSize {
        self.mesh.atlas()
    }

    pub fn view_count(&self) -> usize {
        self.view_count
    }

    pub fn support(&self) -> &[u32] {
        &self.support
    }

    pub fn max_support(&self) -> u32 {
        self.support.iter().copied().max().unwrap_or(0)
    }

    pub fn damage_distribution(&self, texel: usize) -> &[f64] {
        &self.damage[texel * N_DT..(texel + 1) * N_DT]
    }

    pub fn context_distribution(&self, texel: usize) -> &[f64] {
        &self.context[texel * N_SB..(texel + 1) * N_SB]
    }

    pub fn observed_texels(&self) -> usize {
        self.support.iter().filter(|&&s| s > 0).count()
    }

    /// Most frequent damage class per texel; `None` where unobserved.
    pub fn damage_argmax(&self) -> Vec<Option<u8>> {
        self.argmax_grid(&self.damage, N_DT)
    }

    pub fn context_argmax(&self) -> Vec<Option<u8>> {
        self.argmax_grid(&self.context, N_SB)
    }

    fn argmax_grid(&self, data: &[f64], n: usize) -> Vec<Option<u8>> {
        data.chunks(n)
            .zip(&self.support)
            .map(|(d, &s)| (s > 0).then(|| argmax(d) as u8))
            .collect()
    }

    /// Views that agree with the texel's argmax damage class; exact for
    /// hard labels, rounded for soft ones.
    pub fn agreeing_support(&self, texel: usize) -> u32 {
        let s = self.support[texel];
        if s == 0 {
            return 0;
        }
        let d = self.damage_distribution(texel);
        (d[argmax(d)] * s as f64).round() as u32
    }

    pub fn faces(&self) -> &[FaceSummary] {
        &self.faces
    }

    pub fn face_summary(&self, face: usize) -> Result<&FaceSummary> {
        self.faces.get(face).ok_or_else(|| Error::InvalidMesh {
            face,
            message: format!("unknown face; the mesh has {}", self.faces.len()),
        })
    }

    /// Observed-texel counts per argmax class.
    pub fn class_texel_counts(&self) -> ([u64; N_DT], [u64; N_SB]) {
        let mut d = [0u64; N_DT];
        let mut c = [0u64; N_SB];
        for v in self.damage_argmax().into_iter().flatten() {
            d[v as usize] += 1;
        }
        for v in self.context_argmax().into_iter().flatten() {
            c[v as usize] += 1;
        }
        (d, c)
    }
}

/// Hue of the argmax damage class scaled by agreeing support over the
/// model's maximum support. Nonzero channels stay at least 1 on observed
/// texels so the class remains decodable.
pub fn condition_color(class: u8, agreeing: u32, max_support: u32) -> [u8; 3] {
    let base = DT_PALETTE[class as usize];
    let k = if max_support == 0 { 0.0 } else { agreeing as f64 / max_support as f64 };
    base.map(|c| {
        if c == 0 {
            0
        } else {
            ((c as f64 * k).round() as u8).max(1)
        }
    })
}

/// Inverse of [`condition_color`]'s hue choice; `None` for black.
pub fn decode_condition_color(rgb: [u8; 3]) -> Option<u8> {
    match rgb {
        [0, 0, 0] => None,
        [_, 0, 0] => Some(1),
        [_, g, 0] if g > 0 => Some(2),
        [_, 0, _] => Some(3),
        _ => Some(0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceRecord {
    pub face: usize,
    pub observed_fraction: f64,
    pub damage: std::collections::BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub schema_version: u32,
    pub view_count: usize,
    pub atlas_width: u32,
    pub atlas_height: u32,
    pub face_count: usize,
    pub observed_texels: usize,
    pub max_support: u32,
    pub damage_texels: std::collections::BTreeMap<String, u64>,
    pub context_texels: std::collections::BTreeMap<String, u64>,
    pub faces: Vec<FaceRecord>,
    pub config: serde_json::Value,
}

impl ModelReport {
    pub fn from_model(model: &ConditionAwareModel, config: serde_json::Value) -> Self {
        let (d, c) = model.class_texel_counts();
        let atlas = model.atlas();
        Self {
            schema_version: SCHEMA_VERSION,
            view_count: model.view_count,
            atlas_width: atlas.width,
            atlas_height: atlas.height,
            face_count: model.faces.len(),
            observed_texels: model.observed_texels(),
            max_support: model.max_support(),
            damage_texels: DT_CLASSES.iter().zip(d).map(|(n, v)| (n.to_string(), v)).collect(),
            context_texels: SB_CLASSES.iter().zip(c).map(|(n, v)| (n.to_string(), v)).collect(),
            faces: model
                .faces
                .iter()
                .enumerate()
                .map(|(face, s)| FaceRecord {
                    face,
                    observed_fraction: s.observed,
                    damage: DT_CLASSES.iter().zip(s.damage).map(|(n, v)| (n.to_string(), v)).collect(),
                })
                .collect(),
            config,
        }
    }
}

/// File names inside an exported bundle.
pub struct BundlePaths {
    pub obj: PathBuf,
    pub mtl: PathBuf,
    pub condition_atlas: PathBuf,
    pub context_atlas: PathBuf,
    pub support_atlas: PathBuf,
    pub report: PathBuf,
}

impl BundlePaths {
    pub fn new(dir: &Path) -> Self {
        Self {
            obj: dir.join("model.obj"),
            mtl: dir.join("model.mtl"),
            condition_atlas: dir.join("condition_atlas.png"),
            context_atlas: dir.join("context_atlas.png"),
            support_atlas: dir.join("support_atlas.png"),
            report: dir.join("report.json"),
        }
    }
}

/// Writes the OBJ with its material, the condition, context and 16-bit
/// support atlases, and `report.json`. Output bytes depend only on the model
/// and `config`.
pub fn export_model(model: &ConditionAwareModel, out_dir: &Path, config: serde_json::Value) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let p = BundlePaths::new(out_dir);
    let atlas = model.atlas();
    let (w, h) = (atlas.width as usize, atlas.height as usize);
    if model.max_support() > u16::MAX as u32 {
        return Err(Error::Config(format!("support {} exceeds the 16-bit atlas", model.max_support())));
    }

    let obj = crate::geometry::write_obj(&model.mesh, Some(("model.mtl", "condition")));
    std::fs::write(&p.obj, obj).map_err(|e| Error::io(&p.obj, e))?;
    let mtl = "newmtl condition\nKa 1 1 1\nKd 1 1 1\nKs 0 0 0\nillum 1\nmap_Kd condition_atlas.png\n";
    std::fs::write(&p.mtl, mtl).map_err(|e| Error::io(&p.mtl, e))?;

    let max = model.max_support();
    let mut img = RgbImage::new(w, h);
    for (t, d) in model.damage_argmax().into_iter().enumerate() {
        if let Some(d) = d {
            img.put(t % w, t / w, condition_color(d, model.agreeing_support(t), max));
        }
    }
    write_rgb(&p.condition_atlas, &img)?;

    let ctx: Vec<u8> = model.context_argmax().into_iter().map(|c| c.unwrap_or(UNOBSERVED)).collect();
    let mut palette = SB_PALETTE.to_vec();
    palette.push([0, 0, 0]);
    write_labels(&p.context_atlas, &LabelMap::new(w, h, ctx)?, &palette)?;

    let support: Vec<u16> = model.support.iter().map(|&s| s as u16).collect();
    write_gray16(&p.support_atlas, w, h, &support)?;

    let report = ModelReport::from_model(model, config);
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    std::fs::write(&p.report, json).map_err(|e| Error::io(&p.report, e))
}

/// Per-texel argmax labels and support read back from an export.
#[derive(Debug, Clone, PartialEq)]
pub struct ExportedModel {
    pub width: usize,
    pub height: usize,
    pub damage: Vec<Option<u8>>,
    pub context: Vec<Option<u8>>,
    pub support: Vec<u32>,
    pub report: ModelReport,
}

pub fn load_export(dir: &Path) -> Result<ExportedModel> {
    let p = BundlePaths::new(dir);
    let img = read_rgb(&p.condition_atlas)?;
    let ctx = read_labels(&p.context_atlas)?;
    let (w, h, support) = read_gray16(&p.support_atlas)?;
    if (img.width, img.height) != (w, h) || (ctx.width(), ctx.height()) != (w, h) {
        return Err(Error::Shape("bundle atlases differ in size".into()));
    }
    let text = std::fs::read_to_string(&p.report).map_err(|e| Error::io(&p.report, e))?;
    let report: ModelReport = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: p.report.clone(),
        source: e,
    })?;
    let damage = (0..w * h).map(|t| decode_condition_color(img.get(t % w, t / w))).collect();
    let context = ctx.data().iter().map(|&c| (c != UNOBSERVED).then_some(c)).collect();
    Ok(ExportedModel {
        width: w,
        height: h,
        damage,
        context,
        support: support.into_iter().map(u32::from).collect(),
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colors_decode_at_every_intensity() {
        for class in 0..N_DT as u8 {
            for agree in 1..=12 {
                let rgb = condition_color(class, agree, 12);
                assert_eq!(decode_condition_color(rgb), Some(class), "{class} {agree} {rgb:?}");
            }
        }
        assert_eq!(condition_color(1, 12, 12), [255, 0, 0]);
        assert_eq!(decode_condition_color([0, 0, 0]), None);
    }
}
