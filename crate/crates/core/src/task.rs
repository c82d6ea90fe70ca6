//! Tissue-class and magnification vocabulary.
//!
//! The index order of both enums is part of the checkpoint format: it decides
//! which one-hot slot a tissue or scale occupies, so it is written into every
//! checkpoint and checked on load.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::OmniError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TissueClass {
    /// Glomerular unit.
    Cap,
    /// Glomerular tuft.
    Tuft,
    /// Proximal tubule.
    Pt,
    /// Distal tubule.
    Dt,
    /// Peritubular capillary.
    Ptc,
    /// Artery.
    Ves,
}

impl TissueClass {
    pub const COUNT: usize = 6;
    pub const ALL: [TissueClass; 6] = [
        TissueClass::Cap,
        TissueClass::Tuft,
        TissueClass::Pt,
        TissueClass::Dt,
        TissueClass::Ptc,
        TissueClass::Ves,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            TissueClass::Cap => "cap",
            TissueClass::Tuft => "tuft",
            TissueClass::Pt => "pt",
            TissueClass::Dt => "dt",
            TissueClass::Ptc => "ptc",
            TissueClass::Ves => "ves",
        }
    }

    /// Preferred magnification for segmenting this tissue.
    pub fn optimal_scale(self) -> Magnification {
        optimal_scale(self)
    }
}

impl fmt::Display for TissueClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TissueClass {
    type Err = OmniError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|t| t.name() == lower)
            .ok_or_else(|| OmniError::Parse(format!("unknown tissue class {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Magnification {
    #[serde(rename = "5x")]
    X5,
    #[serde(rename = "10x")]
    X10,
    #[serde(rename = "20x")]
    X20,
    #[serde(rename = "40x")]
    X40,
}

impl Magnification {
    pub const COUNT: usize = 4;
    pub const ALL: [Magnification; 4] = [
        Magnification::X5,
        Magnification::X10,
        Magnification::X20,
        Magnification::X40,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Magnification::X5 => "5x",
            Magnification::X10 => "10x",
            Magnification::X20 => "20x",
            Magnification::X40 => "40x",
        }
    }

    /// Microns per pixel; 0.25 at 40x, doubling with every halving.
    pub fn pixel_size_um(self) -> f64 {
        0.25 * self.ratio_to_40x() as f64
    }

    /// Number of 40x pixels along one side of a pixel at this magnification.
    pub fn ratio_to_40x(self) -> usize {
        match self {
            Magnification::X5 => 8,
            Magnification::X10 => 4,
            Magnification::X20 => 2,
            Magnification::X40 => 1,
        }
    }
}

impl fmt::Display for Magnification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Magnification {
    type Err = OmniError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|m| m.name() == lower || m.name().trim_end_matches('x') == lower)
            .ok_or_else(|| OmniError::Parse(format!("unknown magnification {s:?}")))
    }
}

/// A tissue paired with the magnification it is segmented at.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskSpec {
    pub tissue: TissueClass,
    pub optimal_scale: Magnification,
}

impl TaskSpec {
    pub fn for_tissue(tissue: TissueClass) -> Self {
        TaskSpec {
            tissue,
            optimal_scale: optimal_scale(tissue),
        }
    }

    pub fn all() -> [TaskSpec; 6] {
        TissueClass::ALL.map(TaskSpec::for_tissue)
    }
}

pub fn optimal_scale(tissue: TissueClass) -> Magnification {
    match tissue {
        TissueClass::Dt | TissueClass::Pt | TissueClass::Ves => Magnification::X10,
        TissueClass::Cap | TissueClass::Tuft => Magnification::X5,
        TissueClass::Ptc => Magnification::X40,
    }
}

pub fn encode_class(tissue: TissueClass) -> [f64; TissueClass::COUNT] {
    let mut v = [0.0; TissueClass::COUNT];
    v[tissue.index()] = 1.0;
    v
}

pub fn encode_scale(scale: Magnification) -> [f64; Magnification::COUNT] {
    let mut v = [0.0; Magnification::COUNT];
    v[scale.index()] = 1.0;
    v
}

/// Canonical orders as stored in checkpoints.
pub fn class_order() -> Vec<String> {
    TissueClass::ALL
        .iter()
        .map(|t| t.name().to_string())
        .collect()
}

pub fn scale_order() -> Vec<String> {
    Magnification::ALL
        .iter()
        .map(|m| m.name().to_string())
        .collect()
}

/// Overlap priority for the single-label composite: earlier entries win.
pub const COMPOSITE_PRIORITY: [TissueClass; 6] = [
    TissueClass::Ptc,
    TissueClass::Dt,
    TissueClass::Pt,
    TissueClass::Ves,
    TissueClass::Tuft,
    TissueClass::Cap,
];
