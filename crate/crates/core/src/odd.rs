//! Operational design domain parameters, profiles and preference math.
//!
//! A lanelet carries a set of [`OddParameterKind`] tags. An [`OddProfile`]
//! states which kinds are drivable and how acceptable each one is. The
//! nominal profile only admits regular roads; the extended profile adds the
//! kinds an operator may temporarily approve.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::map::{Lanelet, LaneletId, LaneletMap};

/// The closed set of ODD parameters a lanelet can be tagged with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OddParameterKind {
    RegularRoad,
    BusDriveway,
    ParkingArea,
    Sidewalk,
    OffRoad,
    SolidLineCrossing,
}

impl OddParameterKind {
    pub const ALL: [OddParameterKind; 6] = [
        OddParameterKind::RegularRoad,
        OddParameterKind::BusDriveway,
        OddParameterKind::ParkingArea,
        OddParameterKind::Sidewalk,
        OddParameterKind::OffRoad,
        OddParameterKind::SolidLineCrossing,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OddParameterKind::RegularRoad => "regular_road",
            OddParameterKind::BusDriveway => "bus_driveway",
            OddParameterKind::ParkingArea => "parking_area",
            OddParameterKind::Sidewalk => "sidewalk",
            OddParameterKind::OffRoad => "off_road",
            OddParameterKind::SolidLineCrossing => "solid_line_crossing",
        }
    }

    /// Default preference coefficient. Only the ordering among the extended
    /// kinds is meaningful; the spread keeps preference differences visible
    /// next to distance terms at unit weights.
    pub fn default_preference(self) -> f64 {
        match self {
            OddParameterKind::RegularRoad => 8.0,
            OddParameterKind::BusDriveway => 5.0,
            OddParameterKind::ParkingArea => 4.0,
            OddParameterKind::Sidewalk => 3.0,
            OddParameterKind::OffRoad => 2.0,
            OddParameterKind::SolidLineCrossing => 1.0,
        }
    }
}

impl fmt::Display for OddParameterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How the coefficients of co-present tags combine into one lanelet preference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreferenceAggregation {
    /// Sum over present parameters (the reference cost model).
    #[default]
    Sum,
    Min,
    Max,
}

#[derive(Debug, Error, PartialEq)]
pub enum OddError {
    #[error("profile must permit regular_road")]
    MissingRegularRoad,
    #[error("permitted kind {0} has no preference coefficient")]
    MissingPreference(OddParameterKind),
    #[error("preference for {kind} must be finite and > 0, got {value}")]
    NonPositivePreference { kind: OddParameterKind, value: f64 },
    #[error("lanelet {0} is not drivable under profile")]
    NotDrivable(LaneletId),
    #[error("invalid cost weights w1={w1}, w2={w2}: both must be finite, >= 0 and not both zero")]
    InvalidWeights { w1: f64, w2: f64 },
    #[error("malformed profile document: {0}")]
    Document(String),
}

/// A permitted-parameter set with preference coefficients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OddProfile {
    permitted: BTreeSet<OddParameterKind>,
    preference: BTreeMap<OddParameterKind, f64>,
    #[serde(skip_serializing_if = "is_default_aggregation")]
    aggregation: PreferenceAggregation,
}

fn is_default_aggregation(a: &PreferenceAggregation) -> bool {
    *a == PreferenceAggregation::Sum
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileDocument {
    permitted: BTreeSet<OddParameterKind>,
    #[serde(default)]
    preference: BTreeMap<OddParameterKind, f64>,
    #[serde(default)]
    aggregation: PreferenceAggregation,
}

const NOMINAL_JSON: &str = include_str!("../profiles/nominal.json");
const EXTENDED_JSON: &str = include_str!("../profiles/extended.json");

impl OddProfile {
    pub fn new(
        permitted: BTreeSet<OddParameterKind>,
        preference: BTreeMap<OddParameterKind, f64>,
    ) -> Result<Self, OddError> {
        Self::with_aggregation(permitted, preference, PreferenceAggregation::Sum)
    }

    pub fn with_aggregation(
        permitted: BTreeSet<OddParameterKind>,
        preference: BTreeMap<OddParameterKind, f64>,
        aggregation: PreferenceAggregation,
    ) -> Result<Self, OddError> {
        if !permitted.contains(&OddParameterKind::RegularRoad) {
            return Err(OddError::MissingRegularRoad);
        }
        for (&kind, &value) in &preference {
            if !(value.is_finite() && value > 0.0) {
                return Err(OddError::NonPositivePreference { kind, value });
            }
        }
        if let Some(&kind) = permitted.iter().find(|k| !preference.contains_key(k)) {
            return Err(OddError::MissingPreference(kind));
        }
        Ok(Self {
            permitted,
            preference,
            aggregation,
        })
    }

    /// Parses a profile document `{"permitted": [...], "preference": {...}}`.
    pub fn from_json(text: &str) -> Result<Self, OddError> {
        let doc: ProfileDocument =
            serde_json::from_str(text).map_err(|e| OddError::Document(e.to_string()))?;
        Self::with_aggregation(doc.permitted, doc.preference, doc.aggregation)
    }

    /// Regular roads only, default preference table.
    pub fn nominal() -> Self {
        Self::from_json(NOMINAL_JSON).expect("bundled nominal profile is valid")
    }

    /// Every parameter kind, default preference table.
    pub fn extended() -> Self {
        Self::from_json(EXTENDED_JSON).expect("bundled extended profile is valid")
    }

    pub fn permitted(&self) -> &BTreeSet<OddParameterKind> {
        &self.permitted
    }

    pub fn permits(&self, kind: OddParameterKind) -> bool {
        self.permitted.contains(&kind)
    }

    pub fn preference_of(&self, kind: OddParameterKind) -> Option<f64> {
        self.preference.get(&kind).copied()
    }

    pub fn aggregation(&self) -> PreferenceAggregation {
        self.aggregation
    }

    /// A copy of this profile with `kind` no longer permitted.
    pub fn without(&self, kind: OddParameterKind) -> Result<Self, OddError> {
        let mut permitted = self.permitted.clone();
        permitted.remove(&kind);
        Self::with_aggregation(permitted, self.preference.clone(), self.aggregation)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    /// Whether a lanelet with these tags may be driven under this profile.
    ///
    /// Every tag must be permitted: a lanelet mixing a regular road with a
    /// rule violation is not nominally drivable.
    pub fn admits(&self, tags: &BTreeSet<OddParameterKind>) -> bool {
        !tags.is_empty() && tags.iter().all(|k| self.permitted.contains(k))
    }
}

/// Weights of the distance and inverse-preference terms of the edge cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    w1: f64,
    w2: f64,
}

impl CostWeights {
    pub fn new(w1: f64, w2: f64) -> Result<Self, OddError> {
        if !(w1.is_finite() && w2.is_finite() && w1 >= 0.0 && w2 >= 0.0 && w1 + w2 > 0.0) {
            return Err(OddError::InvalidWeights { w1, w2 });
        }
        Ok(Self { w1, w2 })
    }

    pub fn distance(&self) -> f64 {
        self.w1
    }

    pub fn preference(&self) -> f64 {
        self.w2
    }

    pub fn scaled(&self, lambda: f64) -> Result<Self, OddError> {
        Self::new(self.w1 * lambda, self.w2 * lambda)
    }
}

impl Default for CostWeights {
    fn default() -> Self {
        Self { w1: 1.0, w2: 1.0 }
    }
}

/// Preference `p(i)` of a lanelet: the indicator-weighted combination of the
/// coefficients of its tags that the profile permits.
pub fn lanelet_preference(lanelet: &Lanelet, profile: &OddProfile) -> Result<f64, OddError> {
    let coefficients = lanelet
        .odd_tags()
        .iter()
        .filter(|k| profile.permits(**k))
        .map(|k| {
            profile
                .preference_of(*k)
                .ok_or(OddError::MissingPreference(*k))
        })
        .collect::<Result<Vec<f64>, _>>()?;
    if coefficients.is_empty() {
        return Err(OddError::NotDrivable(lanelet.id()));
    }
    let p = match profile.aggregation {
        PreferenceAggregation::Sum => coefficients.iter().sum(),
        PreferenceAggregation::Min => coefficients.iter().copied().fold(f64::INFINITY, f64::min),
        PreferenceAggregation::Max => coefficients.iter().copied().fold(0.0, f64::max),
    };
    Ok(p)
}

/// Ids of the non-blocked lanelets the profile admits.
pub fn drivable_area(map: &LaneletMap, profile: &OddProfile) -> BTreeSet<LaneletId> {
    map.lanelets()
        .filter(|l| !l.is_blocked() && profile.admits(l.odd_tags()))
        .map(|l| l.id())
        .collect()
}

/// ODD modifications a path through `lanelet` entails: its tags permitted by
/// the extended profile but not by the nominal one.
pub fn modifications_for(
    lanelet: &Lanelet,
    nominal: &OddProfile,
    extended: &OddProfile,
) -> BTreeSet<OddParameterKind> {
    lanelet
        .odd_tags()
        .iter()
        .copied()
        .filter(|k| extended.permits(*k) && !nominal.permits(*k))
        .collect()
}
