//! Thresholded combination of context, damage-presence and damage-type
//! posteriors into one label per pixel.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classes::{fused_index, split_fused_index, Context, Damage, DT_CLASSES, N_DP, N_DT, N_SB, SB_CLASSES};
use crate::error::{Error, Result};
use crate::labels::{argmax, LabelMap, ProbabilityMap};

#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    /// Per damage-type threshold, indexed by class id. The background entry
    /// is unused.
    pub tau: [f64; N_DT],
    pub tau_dp: f64,
    /// `allowed[damage][context]`. Row 0 (background) is always all true.
    pub allowed: [[bool; N_SB]; N_DT],
}

impl Default for FusionConfig {
    /// Thresholds 0.5; damage permitted on buildings only.
    fn default() -> Self {
        let mut allowed = [[false; N_SB]; N_DT];
        allowed[0] = [true; N_SB];
        for row in allowed.iter_mut().skip(1) {
            row[Context::Building.id() as usize] = true;
        }
        Self {
            tau: [0.5; N_DT],
            tau_dp: 0.5,
            allowed,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        let open = |t: f64| t > 0.0 && t < 1.0;
        for (c, &t) in self.tau.iter().enumerate().skip(1) {
            if !open(t) {
                return Err(Error::Config(format!("fusion: tau for {} must lie in (0, 1), got {t}", DT_CLASSES[c])));
            }
        }
        if !open(self.tau_dp) {
            return Err(Error::Config(format!("fusion: tau_dp must lie in (0, 1), got {}", self.tau_dp)));
        }
        if self.allowed[0].iter().any(|&a| !a) {
            return Err(Error::Config("fusion: background must be allowed on every context".into()));
        }
        Ok(())
    }

    pub fn is_allowed(&self, damage: u8, context: u8) -> bool {
        self.allowed[damage as usize][context as usize]
    }
}

/// Config file form: thresholds and permitted contexts keyed by class name.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FusionConfigFile {
    #[serde(default)]
    tau: BTreeMap<String, f64>,
    #[serde(default)]
    tau_dp: Option<f64>,
    #[serde(default)]
    allowed: Option<BTreeMap<String, Vec<String>>>,
}

impl Serialize for FusionConfig {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let tau = (1..N_DT).map(|c| (DT_CLASSES[c].to_string(), self.tau[c])).collect();
        let allowed = (1..N_DT)
            .map(|d| {
                let ctx = (0..N_SB)
                    .filter(|&c| self.allowed[d][c])
                    .map(|c| SB_CLASSES[c].to_string())
                    .collect();
                (DT_CLASSES[d].to_string(), ctx)
            })
            .collect();
        FusionConfigFile {
            tau,
            tau_dp: Some(self.tau_dp),
            allowed: Some(allowed),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FusionConfig {
    /// Omitted keys keep their defaults. A damage class listed in `allowed`
    /// replaces that class's row; unlisted classes keep theirs.
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = FusionConfigFile::deserialize(d)?;
        let mut cfg = FusionConfig::default();
        let damage_id = |name: &str| {
            Damage::from_name(name)
                .map(|d| d.id() as usize)
                .ok_or_else(|| D::Error::custom(format!("unknown damage class `{name}`")))
        };
        for (name, t) in raw.tau {
            let id = damage_id(&name)?;
            if id != 0 {
                cfg.tau[id] = t;
            }
        }
        if let Some(t) = raw.tau_dp {
            cfg.tau_dp = t;
        }
        for (name, contexts) in raw.allowed.unwrap_or_default() {
            let id = damage_id(&name)?;
            if id == 0 {
                continue;
            }
            let mut row = [false; N_SB];
            for c in contexts {
                let c = Context::from_name(&c).ok_or_else(|| D::Error::custom(format!("unknown context class `{c}`")))?;
                row[c.id() as usize] = true;
            }
            cfg.allowed[id] = row;
        }
        cfg.validate().map_err(D::Error::custom)?;
        Ok(cfg)
    }
}

/// Per-pixel context and damage ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FusedLabelMap {
    width: usize,
    height: usize,
    context: Vec<u8>,
    damage: Vec<u8>,
}

impl FusedLabelMap {
    pub fn new(width: usize, height: usize, context: Vec<u8>, damage: Vec<u8>) -> Result<Self> {
        if context.len() != width * height || damage.len() != width * height {
            return Err(Error::Shape(format!("fused map data does not match {width}x{height}")));
        }
        if let Some(i) = context.iter().position(|&c| c as usize >= N_SB) {
            return Err(Error::Label(format!("context {} at pixel {i}", context[i])));
        }
        if let Some(i) = damage.iter().position(|&d| d as usize >= N_DT) {
            return Err(Error::Label(format!("damage {} at pixel {i}", damage[i])));
        }
        Ok(Self {
            width,
            height,
            context,
            damage,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn context(&self) -> &[u8] {
        &self.context
    }

    pub fn damage(&self) -> &[u8] {
        &self.damage
    }

    pub fn get(&self, x: usize, y: usize) -> (u8, u8) {
        let i = y * self.width + x;
        (self.context[i], self.damage[i])
    }

    pub fn context_map(&self) -> LabelMap {
        LabelMap::new(self.width, self.height, self.context.clone()).expect("sized")
    }

    pub fn damage_map(&self) -> LabelMap {
        LabelMap::new(self.width, self.height, self.damage.clone()).expect("sized")
    }

    /// Single-channel encoding with `context * 4 + damage` per pixel.
    pub fn to_indexed(&self) -> LabelMap {
        let data = self.context.iter().zip(&self.damage).map(|(&c, &d)| fused_index(c, d)).collect();
        LabelMap::new(self.width, self.height, data).expect("sized")
    }

    pub fn from_indexed(map: &LabelMap) -> Result<Self> {
        map.check_range(N_SB * N_DT)?;
        let (context, damage) = map.data().iter().map(|&i| split_fused_index(i)).unzip();
        Self::new(map.width(), map.height(), context, damage)
    }

    /// Ground-truth style map from separate context and damage maps.
    pub fn from_maps(context: &LabelMap, damage: &LabelMap) -> Result<Self> {
        if (context.width(), context.height()) != (damage.width(), damage.height()) {
            return Err(Error::Shape("context and damage maps differ in size".into()));
        }
        Self::new(context.width(), context.height(), context.data().to_vec(), damage.data().to_vec())
    }
}

/// Fusion rule for one pixel's three posteriors.
pub fn fuse_pixel(sb: &[f64], dp: &[f64], dt: &[f64], cfg: &FusionConfig) -> (u8, u8) {
    let context = argmax(sb) as u8;
    let c = 1 + argmax(&dt[1..]);
    let damaged = dp[1] >= cfg.tau_dp && dt[c] >= cfg.tau[c] && cfg.allowed[c][context as usize];
    (context, if damaged { c as u8 } else { 0 })
}

pub fn fuse(sb: &ProbabilityMap, dp: &ProbabilityMap, dt: &ProbabilityMap, cfg: &FusionConfig) -> Result<FusedLabelMap> {
    for (m, n, name) in [(sb, N_SB, "context"), (dp, N_DP, "damage presence"), (dt, N_DT, "damage type")] {
        if m.n_classes() != n {
            return Err(Error::Shape(format!("{name} map has {} classes, expected {n}", m.n_classes())));
        }
    }
    let dims = (sb.width(), sb.height());
    if (dp.width(), dp.height()) != dims || (dt.width(), dt.height()) != dims {
        return Err(Error::Shape(format!(
            "posterior resolutions differ: {}x{}, {}x{}, {}x{}",
            sb.width(),
            sb.height(),
            dp.width(),
            dp.height(),
            dt.width(),
            dt.height()
        )));
    }
    let (context, damage): (Vec<u8>, Vec<u8>) = sb
        .data()
        .par_chunks(N_SB)
        .zip(dp.data().par_chunks(N_DP))
        .zip(dt.data().par_chunks(N_DT))
        .map(|((s, p), t)| fuse_pixel(s, p, t, cfg))
        .unzip();
    FusedLabelMap::new(dims.0, dims.1, context, damage)
}
