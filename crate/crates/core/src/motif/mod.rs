//! Daily mobility networks and their motif census.
//!
//! A user-day becomes a closed walk over visited locations starting and
//! ending at home. The location-based view (LBM) keeps one node per visited
//! location and ignores activity types; the activity-based view (ABM) merges
//! consecutive visits of the same activity label. Networks are bucketed by a
//! permutation-minimal signature with the home node pinned at position 0.

mod census;
mod graph;
mod matcher;
mod network;
mod signature;

pub use census::{motif_census, CensusConfig, CensusEntry, MotifCensus, SizeGroup};
pub use graph::{Digraph, MAX_GRAPH_NODES};
pub use matcher::is_isomorphic;
pub use network::{abm_reduce, build_daily_network, DailyNetwork, LocationKey, NetworkNode, Rejection};
pub use signature::{canonical_signature, CanonicalSignature, SignatureClass, MAX_SIGNATURE_NODES};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::parcel_index::ActivityCode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MotifKind {
    Lbm,
    Abm,
}

impl MotifKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MotifKind::Lbm => "LBM",
            MotifKind::Abm => "ABM",
        }
    }
}

impl fmt::Display for MotifKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Activity alphabet of the ABM view. `H` marks the user's own home parcel;
/// every other residential parcel is `R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActivityLabel {
    Home,
    Work,
    School,
    College,
    UrbanMix,
    Transportation,
    Residential,
    Shopping,
    Entertainment,
    CivicService,
    Hotel,
    Others,
}

impl ActivityLabel {
    pub const ALL: [ActivityLabel; 12] = [
        ActivityLabel::Home,
        ActivityLabel::Work,
        ActivityLabel::School,
        ActivityLabel::College,
        ActivityLabel::UrbanMix,
        ActivityLabel::Transportation,
        ActivityLabel::Residential,
        ActivityLabel::Shopping,
        ActivityLabel::Entertainment,
        ActivityLabel::CivicService,
        ActivityLabel::Hotel,
        ActivityLabel::Others,
    ];

    /// Label of a non-home location with the given activity code. Services
    /// (7) and civic/religious (8) share the civic-service label.
    pub fn from_code(code: ActivityCode) -> Self {
        match code.get() {
            1 => ActivityLabel::Residential,
            2 => ActivityLabel::Hotel,
            3 => ActivityLabel::UrbanMix,
            4 => ActivityLabel::School,
            5 => ActivityLabel::College,
            6 => ActivityLabel::Work,
            7 | 8 => ActivityLabel::CivicService,
            9 => ActivityLabel::Shopping,
            10 => ActivityLabel::Entertainment,
            11 => ActivityLabel::Transportation,
            _ => ActivityLabel::Others,
        }
    }

    /// A representative activity code for the label (used by the generator).
    pub fn code(self) -> ActivityCode {
        let c = match self {
            ActivityLabel::Home | ActivityLabel::Residential => 1,
            ActivityLabel::Hotel => 2,
            ActivityLabel::UrbanMix => 3,
            ActivityLabel::School => 4,
            ActivityLabel::College => 5,
            ActivityLabel::Work => 6,
            ActivityLabel::CivicService => 8,
            ActivityLabel::Shopping => 9,
            ActivityLabel::Entertainment => 10,
            ActivityLabel::Transportation => 11,
            ActivityLabel::Others => 12,
        };
        ActivityCode::new(c).expect("code in range")
    }

    pub fn short(self) -> &'static str {
        match self {
            ActivityLabel::Home => "H",
            ActivityLabel::Work => "W",
            ActivityLabel::School => "S",
            ActivityLabel::College => "C",
            ActivityLabel::UrbanMix => "U",
            ActivityLabel::Transportation => "T",
            ActivityLabel::Residential => "R",
            ActivityLabel::Shopping => "Sh",
            ActivityLabel::Entertainment => "E",
            ActivityLabel::CivicService => "Se",
            ActivityLabel::Hotel => "Ho",
            ActivityLabel::Others => "O",
        }
    }
}

impl fmt::Display for ActivityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl FromStr for ActivityLabel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        ActivityLabel::ALL
            .iter()
            .copied()
            .find(|l| l.short() == s)
            .ok_or_else(|| format!("unknown activity label {s:?}"))
    }
}
