use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classes::Task;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StemSpec {
    pub kernel: usize,
    pub stride: usize,
    pub width: usize,
}

/// A run of `convs` same-width convolutions at one resolution. Stages after
/// the first start with a 2×2 max pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpec {
    pub convs: usize,
    pub width: usize,
    pub kernel: usize,
}

/// Architecture of one segmentation network.
///
/// Layers are numbered from the stem (`Conv0`) through the stage
/// convolutions. Every even-numbered convolution `2m` receives a residual
/// from the output of `2m - 2`, projected by a strided 1×1 convolution when
/// the shapes differ. Each stage listed in `taps` feeds a 1×1 class head;
/// the head logits are bilinearly upsampled to the input size and summed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub in_channels: usize,
    pub n_classes: usize,
    pub stem: StemSpec,
    pub stages: Vec<StageSpec>,
    pub taps: Vec<usize>,
}

impl NetworkSpec {
    /// Conv0 7×7×64/2; Conv1–8 3×3×64; pool; Conv9–20 3×3×64; pool;
    /// Conv21–32 3×3×128; pool; Conv33–44 3×3×128; heads after Conv20,
    /// Conv32 and Conv44.
    pub fn full(n_classes: usize) -> Self {
        Self::with_widths(n_classes, 64, [(8, 64), (12, 64), (12, 128), (12, 128)])
    }

    /// Two convolutions per stage with widths 8/8/16/16.
    pub fn tiny(n_classes: usize) -> Self {
        Self::with_widths(n_classes, 8, [(2, 8), (2, 8), (2, 16), (2, 16)])
    }

    pub fn with_widths(n_classes: usize, stem_width: usize, stages: [(usize, usize); 4]) -> Self {
        Self {
            in_channels: 3,
            n_classes,
            stem: StemSpec {
                kernel: 7,
                stride: 2,
                width: stem_width,
            },
            stages: stages
                .iter()
                .map(|&(convs, width)| StageSpec { convs, width, kernel: 3 })
                .collect(),
            taps: vec![1, 2, 3],
        }
    }

    pub fn for_task(variant: &str, task: Task) -> Result<Self> {
        match variant {
            "full" => Ok(Self::full(task.n_classes())),
            "tiny" => Ok(Self::tiny(task.n_classes())),
            other => Err(Error::Config(format!(
                "unknown network variant `{other}` (expected `full` or `tiny`)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.in_channels == 0 || self.n_classes < 2 {
            return bad("need at least one input channel and two classes".into());
        }
        if self.stem.kernel == 0 || self.stem.stride == 0 || self.stem.width == 0 {
            return bad("stem kernel, stride and width must be positive".into());
        }
        if self.stages.is_empty() {
            return bad("at least one stage is required".into());
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.convs == 0 || s.convs % 2 != 0 || s.width == 0 || s.kernel == 0 {
                return bad(format!(
                    "stage {i}: convolution count must be even and positive, width and kernel positive"
                ));
            }
        }
        if self.taps.is_empty() || self.taps.iter().any(|&t| t >= self.stages.len()) {
            return bad("taps must name existing stages".into());
        }
        let mut sorted = self.taps.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.taps.len() {
            return bad("taps must be distinct".into());
        }
        Ok(())
    }

    /// Input sides must be multiples of this.
    pub fn input_multiple(&self) -> usize {
        self.stem.stride << (self.stages.len() - 1)
    }

    /// Downsampling factor of stage `s` relative to the input.
    pub fn stage_factor(&self, s: usize) -> usize {
        self.stem.stride << s
    }

    pub fn conv_count(&self) -> usize {
        1 + self.stages.iter().map(|s| s.convs).sum::<usize>()
    }

    /// SHA-256 over the canonical JSON encoding.
    pub fn hash(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("spec serializes");
        Sha256::digest(&json).into()
    }

    pub(crate) fn plan(&self) -> Plan {
        Plan::new(self)
    }
}

/// Shape of one parameterized convolution in canonical layer order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub k: usize,
    pub s: usize,
    pub c_in: usize,
    pub c_out: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct TrunkStep {
    pub layer: usize,
    pub pool_before: bool,
    /// Residual source (trunk index) and optional projection layer.
    pub residual: Option<(usize, Option<usize>)>,
}

#[derive(Debug, Clone)]
pub(crate) struct Head {
    pub after: usize,
    pub layer: usize,
    pub factor: usize,
}

/// Wiring derived from a spec. Canonical layer order: trunk convolutions
/// (Conv0 first), then residual projections in trunk order, then heads in
/// tap order.
#[derive(Debug, Clone)]
pub(crate) struct Plan {
    pub layers: Vec<ConvShape>,
    pub trunk: Vec<TrunkStep>,
    pub heads: Vec<Head>,
    /// Trunk index of the last convolution of each stage.
    pub stage_ends: Vec<usize>,
}

impl Plan {
    fn new(spec: &NetworkSpec) -> Self {
        let mut layers = vec![ConvShape {
            k: spec.stem.kernel,
            s: spec.stem.stride,
            c_in: spec.in_channels,
            c_out: spec.stem.width,
        }];
        // (channels, pools applied so far) of each trunk output.
        let mut outputs = vec![(spec.stem.width, 0usize)];
        let mut trunk = vec![TrunkStep {
            layer: 0,
            pool_before: false,
            residual: None,
        }];
        let mut stage_ends = Vec::new();
        let mut pending_proj = Vec::new();
        let mut pools = 0;
        let mut c_in = spec.stem.width;
        for (si, stage) in spec.stages.iter().enumerate() {
            if si > 0 {
                pools += 1;
            }
            for k in 0..stage.convs {
                let j = trunk.len();
                layers.push(ConvShape {
                    k: stage.kernel,
                    s: 1,
                    c_in,
                    c_out: stage.width,
                });
                let residual = (j % 2 == 0).then(|| {
                    let (src_c, src_pools) = outputs[j - 2];
                    let proj = (src_c != stage.width || src_pools != pools).then(|| {
                        pending_proj.push((
                            j,
                            ConvShape {
                                k: 1,
                                s: 1 << (pools - src_pools),
                                c_in: src_c,
                                c_out: stage.width,
                            },
                        ));
                        usize::MAX
                    });
                    (j - 2, proj)
                });
                trunk.push(TrunkStep {
                    layer: layers.len() - 1,
                    pool_before: si > 0 && k == 0,
                    residual,
                });
                outputs.push((stage.width, pools));
                c_in = stage.width;
            }
            stage_ends.push(trunk.len() - 1);
        }
        for (j, shape) in pending_proj {
            layers.push(shape);
            if let Some((_, proj)) = &mut trunk[j].residual {
                *proj = Some(layers.len() - 1);
            }
        }
        let heads = spec
            .taps
            .iter()
            .map(|&s| {
                layers.push(ConvShape {
                    k: 1,
                    s: 1,
                    c_in: spec.stages[s].width,
                    c_out: spec.n_classes,
                });
                Head {
                    after: stage_ends[s],
                    layer: layers.len() - 1,
                    factor: spec.stage_factor(s),
                }
            })
            .collect();
        Self {
            layers,
            trunk,
            heads,
            stage_ends,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_layer_table() {
        let spec = NetworkSpec::full(8);
        spec.validate().unwrap();
        assert_eq!(spec.conv_count(), 45);
        assert_eq!(spec.input_multiple(), 16);
        let plan = spec.plan();
        // Residual pairs Conv0→Conv2, Conv2→Conv4, ..., Conv42→Conv44.
        let pairs: Vec<_> = plan
            .trunk
            .iter()
            .enumerate()
            .filter_map(|(j, t)| t.residual.map(|(src, _)| (src, j)))
            .collect();
        assert_eq!(pairs.len(), 22);
        assert!(pairs.iter().all(|&(s, j)| j == s + 2 && j % 2 == 0));
        // Projections only where a pool or width change intervenes:
        // Conv8→10 (pool), Conv20→22 (pool + 64→128), Conv32→34 (pool).
        let projected: Vec<_> = plan
            .trunk
            .iter()
            .enumerate()
            .filter(|(_, t)| matches!(t.residual, Some((_, Some(_)))))
            .map(|(j, _)| j)
            .collect();
        assert_eq!(projected, vec![10, 22, 34]);
        let p22 = plan.layers[plan.trunk[22].residual.unwrap().1.unwrap()];
        assert_eq!(p22, ConvShape { k: 1, s: 2, c_in: 64, c_out: 128 });
        // Heads after Conv20, Conv32, Conv44 at 1/4, 1/8, 1/16.
        let heads: Vec<_> = plan.heads.iter().map(|h| (h.after, h.factor)).collect();
        assert_eq!(heads, vec![(20, 4), (32, 8), (44, 16)]);
        assert_eq!(plan.layers.len(), 45 + 3 + 3);
    }

    #[test]
    fn odd_stage_is_rejected() {
        let mut spec = NetworkSpec::tiny(2);
        spec.stages[1].convs = 3;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn hash_tracks_architecture() {
        assert_eq!(NetworkSpec::tiny(4).hash(), NetworkSpec::tiny(4).hash());
        assert_ne!(NetworkSpec::tiny(4).hash(), NetworkSpec::tiny(2).hash());
    }
}
