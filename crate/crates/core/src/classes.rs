//! Class sets of the three networks and their display palettes.

use serde::{Deserialize, Serialize};

/// Scene-and-building context classes.
pub const SB_CLASSES: [&str; 8] = [
    "building", "opening", "pavement", "debris", "sky", "tree", "person", "vehicle",
];
/// Damage presence classes.
pub const DP_CLASSES: [&str; 2] = ["no_damage", "damage"];
/// Damage type classes.
pub const DT_CLASSES: [&str; 4] = ["background", "crack", "spalling", "rebar"];

pub const N_SB: usize = SB_CLASSES.len();
pub const N_DP: usize = DP_CLASSES.len();
pub const N_DT: usize = DT_CLASSES.len();

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Context {
    Building = 0,
    Opening = 1,
    Pavement = 2,
    Debris = 3,
    Sky = 4,
    Tree = 5,
    Person = 6,
    Vehicle = 7,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Damage {
    Background = 0,
    Crack = 1,
    Spalling = 2,
    Rebar = 3,
}

impl Context {
    pub const ALL: [Context; N_SB] = [
        Context::Building,
        Context::Opening,
        Context::Pavement,
        Context::Debris,
        Context::Sky,
        Context::Tree,
        Context::Person,
        Context::Vehicle,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        SB_CLASSES[self as usize]
    }

    pub fn from_name(name: &str) -> Option<Self> {
        SB_CLASSES.iter().position(|n| *n == name).map(|i| Self::ALL[i])
    }
}

impl Damage {
    pub const ALL: [Damage; N_DT] = [
        Damage::Background,
        Damage::Crack,
        Damage::Spalling,
        Damage::Rebar,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        DT_CLASSES[self as usize]
    }

    pub fn from_name(name: &str) -> Option<Self> {
        DT_CLASSES.iter().position(|n| *n == name).map(|i| Self::ALL[i])
    }
}

/// Which of the three networks a map or checkpoint belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Sb,
    Dp,
    Dt,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Sb, Task::Dp, Task::Dt];

    pub fn n_classes(self) -> usize {
        match self {
            Task::Sb => N_SB,
            Task::Dp => N_DP,
            Task::Dt => N_DT,
        }
    }

    pub fn class_names(self) -> &'static [&'static str] {
        match self {
            Task::Sb => &SB_CLASSES,
            Task::Dp => &DP_CLASSES,
            Task::Dt => &DT_CLASSES,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Sb => "sb",
            Task::Dp => "dp",
            Task::Dt => "dt",
        }
    }

    pub fn palette(self) -> &'static [[u8; 3]] {
        match self {
            Task::Sb => &SB_PALETTE,
            Task::Dp => &DP_PALETTE,
            Task::Dt => &DT_PALETTE,
        }
    }
}

pub const SB_PALETTE: [[u8; 3]; N_SB] = [
    [200, 180, 150],
    [40, 90, 200],
    [110, 110, 110],
    [120, 80, 40],
    [135, 205, 250],
    [30, 140, 40],
    [250, 220, 60],
    [170, 40, 170],
];

pub const DP_PALETTE: [[u8; 3]; N_DP] = [[0, 0, 0], [255, 255, 255]];

/// Damage hues used for label maps and the exported condition atlas.
pub const DT_PALETTE: [[u8; 3]; N_DT] = [[128, 128, 128], [255, 0, 0], [255, 165, 0], [255, 0, 255]];

/// Fused labels are stored as one palette index: `context * N_DT + damage`.
pub const N_FUSED: usize = N_SB * N_DT;

pub fn fused_index(context: u8, damage: u8) -> u8 {
    context * N_DT as u8 + damage
}

pub fn split_fused_index(index: u8) -> (u8, u8) {
    (index / N_DT as u8, index % N_DT as u8)
}

pub fn fused_palette() -> Vec<[u8; 3]> {
    (0..N_FUSED as u8)
        .map(|i| {
            let (c, d) = split_fused_index(i);
            if d == 0 {
                SB_PALETTE[c as usize]
            } else {
                DT_PALETTE[d as usize]
            }
        })
        .collect()
}
