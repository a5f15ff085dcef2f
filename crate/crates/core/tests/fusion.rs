mod common;

use common::{random_probabilities, rng};
use condition_aware::classes::{Context, Damage, N_DP, N_DT, N_SB};
use condition_aware::fusion::{fuse, fuse_pixel, FusionConfig};
use condition_aware::labels::ProbabilityMap;
use proptest::prelude::*;
use rand::Rng;

/// One-pixel maps with the SB mass on `context`, DP damage `dp`, and the DT
/// mass split between `damage` (at `p`) and background.
fn pixel(context: Context, dp: f64, damage: Damage, p: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut sb = vec![0.02; N_SB];
    sb[context as usize] = 1.0 - 0.02 * (N_SB - 1) as f64;
    let mut dt = vec![0.0; N_DT];
    dt[0] = 1.0 - p;
    dt[damage as usize] += p;
    (sb, vec![1.0 - dp, dp], dt)
}

fn fuse_one(context: Context, damage: Damage) -> (u8, u8) {
    let (sb, dp, dt) = pixel(context, 0.9, damage, 0.8);
    fuse_pixel(&sb, &dp, &dt, &FusionConfig::default())
}

#[test]
fn spalling_on_trees_is_ignored() {
    assert_eq!(fuse_one(Context::Tree, Damage::Spalling), (Context::Tree as u8, 0));
}

#[test]
fn cracks_in_the_sky_are_ignored() {
    assert_eq!(fuse_one(Context::Sky, Damage::Crack), (Context::Sky as u8, 0));
}

#[test]
fn rebar_on_openings_is_ignored() {
    assert_eq!(fuse_one(Context::Opening, Damage::Rebar), (Context::Opening as u8, 0));
}

#[test]
fn the_same_damage_on_a_building_is_kept() {
    for d in [Damage::Crack, Damage::Spalling, Damage::Rebar] {
        assert_eq!(fuse_one(Context::Building, d), (0, d as u8));
    }
}

#[test]
fn random_triples_never_violate_compatibility() {
    let mut r = rng(2024);
    let mut damaged = 0;
    for trial in 0..1000 {
        let mut cfg = FusionConfig::default();
        // Alternate between the default matrix and random ones so both are exercised.
        if trial % 2 == 1 {
            for d in 1..N_DT {
                for c in 0..N_SB {
                    cfg.allowed[d][c] = r.random_bool(0.5);
                }
            }
            cfg.tau = [0.5, r.random_range(0.05..0.95), r.random_range(0.05..0.95), r.random_range(0.05..0.95)];
            cfg.tau_dp = r.random_range(0.05..0.95);
        }
        let sb = random_probabilities(&mut r, 16, 16, N_SB, 4.0);
        let dp = random_probabilities(&mut r, 16, 16, N_DP, 4.0);
        let dt = random_probabilities(&mut r, 16, 16, N_DT, 4.0);
        let fused = fuse(&sb, &dp, &dt, &cfg).unwrap();
        for (&c, &d) in fused.context().iter().zip(fused.damage()) {
            if d != 0 {
                damaged += 1;
                assert!(cfg.allowed[d as usize][c as usize], "damage {d} on context {c}");
            }
        }
    }
    assert!(damaged > 1000, "only {damaged} damage pixels were produced");
}

#[test]
fn resolution_mismatch_is_rejected() {
    let mut r = rng(1);
    let sb = random_probabilities(&mut r, 4, 4, N_SB, 1.0);
    let dp = random_probabilities(&mut r, 4, 4, N_DP, 1.0);
    let dt = random_probabilities(&mut r, 4, 5, N_DT, 1.0);
    assert!(fuse(&sb, &dp, &dt, &FusionConfig::default()).is_err());
}

fn damage_set(sb: &ProbabilityMap, dp: &ProbabilityMap, dt: &ProbabilityMap, cfg: &FusionConfig) -> Vec<bool> {
    fuse(sb, dp, dt, cfg).unwrap().damage().iter().map(|&d| d != 0).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn raising_thresholds_never_adds_damage(seed in 0u64..10_000, bump in 0.0f64..0.4, which in 0usize..4) {
        let mut r = rng(seed);
        let sb = random_probabilities(&mut r, 8, 8, N_SB, 3.0);
        let dp = random_probabilities(&mut r, 8, 8, N_DP, 3.0);
        let dt = random_probabilities(&mut r, 8, 8, N_DT, 3.0);
        let mut cfg = FusionConfig::default();
        cfg.allowed = [[true; N_SB]; N_DT];
        cfg.tau = [0.5, 0.3, 0.3, 0.3];
        cfg.tau_dp = 0.4;
        let before = damage_set(&sb, &dp, &dt, &cfg);
        if which == 0 { cfg.tau_dp += bump } else { cfg.tau[which] += bump }
        let after = damage_set(&sb, &dp, &dt, &cfg);
        for (b, a) in before.iter().zip(&after) {
            prop_assert!(!a || *b);
        }
    }

    #[test]
    fn scaling_context_logits_keeps_context(seed in 0u64..10_000, scale in 0.05f64..20.0) {
        let mut r = rng(seed);
        let logits: Vec<f64> = (0..8 * 8 * N_SB).map(|_| r.random_range(-3.0..3.0)).collect();
        let scaled: Vec<f64> = logits.iter().map(|v| v * scale).collect();
        let sb = ProbabilityMap::from_logits(8, 8, N_SB, &logits).unwrap();
        let sb2 = ProbabilityMap::from_logits(8, 8, N_SB, &scaled).unwrap();
        let dp = random_probabilities(&mut r, 8, 8, N_DP, 3.0);
        let dt = random_probabilities(&mut r, 8, 8, N_DT, 3.0);
        let cfg = FusionConfig::default();
        let (a, b) = (fuse(&sb, &dp, &dt, &cfg).unwrap(), fuse(&sb2, &dp, &dt, &cfg).unwrap());
        prop_assert_eq!(a.context(), b.context());
    }

    #[test]
    fn permuting_pixels_permutes_output(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let maps = [N_SB, N_DP, N_DT].map(|n| random_probabilities(&mut r, 6, 6, n, 3.0));
        let mut perm: Vec<usize> = (0..36).collect();
        for i in (1..36).rev() {
            perm.swap(i, r.random_range(0..=i));
        }
        let permuted = maps.clone().map(|m| {
            let n = m.n_classes();
            let data: Vec<f64> = perm.iter().flat_map(|&p| m.data()[p * n..(p + 1) * n].to_vec()).collect();
            ProbabilityMap::new(6, 6, n, data).unwrap()
        });
        let cfg = FusionConfig::default();
        let a = fuse(&maps[0], &maps[1], &maps[2], &cfg).unwrap();
        let b = fuse(&permuted[0], &permuted[1], &permuted[2], &cfg).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            prop_assert_eq!(b.context()[i], a.context()[p]);
            prop_assert_eq!(b.damage()[i], a.damage()[p]);
        }
    }
}
