//! Exact interval algebra over percentage probabilities.
//!
//! Probabilities are held in integer basis points (1 bp = 0.01%), so
//! `[100, 4900]` reads as 1%..49%. Nothing here touches floating point.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnl::Likelihood;

/// 100% in basis points.
pub const FULL_BP: u32 = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RangeError {
    #[error("invalid range [{lo}, {hi}]: need 0 <= lo <= hi <= 10000")]
    Invalid { lo: u32, hi: u32 },
    #[error("percentage {0:?} is not a number with at most two decimal places in 0..=100")]
    BadPercent(String),
    #[error("mapping has no entry for {0}")]
    MissingLikelihood(&'static str),
}

/// Closed probability interval `[lo, hi]` in basis points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawRange")]
pub struct ProbRange {
    lo: u32,
    hi: u32,
}

#[derive(Deserialize)]
struct RawRange {
    lo: u32,
    hi: u32,
}

impl TryFrom<RawRange> for ProbRange {
    type Error = RangeError;
    fn try_from(r: RawRange) -> Result<Self, Self::Error> {
        ProbRange::new(r.lo, r.hi)
    }
}

impl ProbRange {
    pub const FULL: ProbRange = ProbRange { lo: 0, hi: FULL_BP };
    pub const ZERO: ProbRange = ProbRange { lo: 0, hi: 0 };
    pub const CERTAIN: ProbRange = ProbRange { lo: FULL_BP, hi: FULL_BP };

    pub fn new(lo: u32, hi: u32) -> Result<Self, RangeError> {
        if lo <= hi && hi <= FULL_BP {
            Ok(ProbRange { lo, hi })
        } else {
            Err(RangeError::Invalid { lo, hi })
        }
    }

    pub fn lo(self) -> u32 {
        self.lo
    }

    pub fn hi(self) -> u32 {
        self.hi
    }

    pub fn width(self) -> u32 {
        self.hi - self.lo
    }

    /// Probability of the opposite event: `[10000 - hi, 10000 - lo]`.
    pub fn complement(self) -> ProbRange {
        ProbRange { lo: FULL_BP - self.hi, hi: FULL_BP - self.lo }
    }

    /// `None` when the ranges are disjoint.
    pub fn intersect(self, other: ProbRange) -> Option<ProbRange> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(ProbRange { lo, hi })
    }

    pub fn contains(self, other: ProbRange) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }
}

impl fmt::Display for ProbRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}%, {}%]", bp_to_percent(self.lo), bp_to_percent(self.hi))
    }
}

/// Formats basis points as a percentage string, e.g. `4900` -> `"49"`, `50` -> `"0.5"`.
pub fn bp_to_percent(bp: u32) -> String {
    Decimal::new(bp as i64, 2).normalize().to_string()
}

/// Parses a percentage with at most two decimals into basis points.
pub fn percent_to_bp(text: &str) -> Result<u32, RangeError> {
    let bad = || RangeError::BadPercent(text.to_string());
    let d = Decimal::from_str(text.trim()).map_err(|_| bad())?;
    if d.is_sign_negative() || d > Decimal::ONE_HUNDRED {
        return Err(bad());
    }
    let scaled = d * Decimal::ONE_HUNDRED;
    if !scaled.fract().is_zero() {
        return Err(bad());
    }
    scaled.to_u32().ok_or_else(bad)
}

/// Institution-owned total map from likelihood to probability range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LikelihoodMapping {
    ranges: [ProbRange; 5],
}

impl Default for LikelihoodMapping {
    fn default() -> Self {
        LikelihoodMapping {
            ranges: [
                ProbRange::FULL,
                ProbRange::ZERO,
                ProbRange { lo: 100, hi: 6400 },
                ProbRange { lo: 5100, hi: FULL_BP },
                ProbRange::CERTAIN,
            ],
        }
    }
}

fn slot(l: Likelihood) -> usize {
    Likelihood::ALL.iter().position(|x| *x == l).expect("closed enum")
}

impl LikelihoodMapping {
    pub fn get(&self, l: Likelihood) -> ProbRange {
        self.ranges[slot(l)]
    }

    pub fn with(mut self, l: Likelihood, r: ProbRange) -> Self {
        self.ranges[slot(l)] = r;
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (Likelihood, ProbRange)> + '_ {
        Likelihood::ALL.iter().map(|l| (*l, self.get(*l)))
    }
}

pub fn map_likelihood(l: Likelihood, mapping: &LikelihoodMapping) -> ProbRange {
    mapping.get(l)
}

/// One entry of the mapping file: percentages with up to two decimals.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct MappingEntry {
    lo_percent: serde_json::Number,
    hi_percent: serde_json::Number,
}

impl Serialize for LikelihoodMapping {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let doc: BTreeMap<&str, MappingEntry> = self
            .iter()
            .map(|(l, r)| {
                let num = |bp: u32| serde_json::Number::from_str(&bp_to_percent(bp)).expect("decimal literal");
                (l.id(), MappingEntry { lo_percent: num(r.lo), hi_percent: num(r.hi) })
            })
            .collect();
        doc.serialize(s)
    }
}

impl<'de> Deserialize<'de> for LikelihoodMapping {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let doc: BTreeMap<String, MappingEntry> = BTreeMap::deserialize(d)?;
        let mut ranges = [ProbRange::FULL; 5];
        for (i, l) in Likelihood::ALL.iter().enumerate() {
            let e = doc.get(l.id()).ok_or_else(|| D::Error::custom(RangeError::MissingLikelihood(l.id())))?;
            let lo = percent_to_bp(&e.lo_percent.to_string()).map_err(D::Error::custom)?;
            let hi = percent_to_bp(&e.hi_percent.to_string()).map_err(D::Error::custom)?;
            ranges[i] = ProbRange::new(lo, hi).map_err(D::Error::custom)?;
        }
        if let Some(extra) = doc.keys().find(|k| !Likelihood::ALL.iter().any(|l| l.id() == k.as_str())) {
            return Err(D::Error::custom(format!("unknown likelihood id {extra:?}")));
        }
        Ok(LikelihoodMapping { ranges })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(lo: u32, hi: u32) -> ProbRange {
        ProbRange::new(lo, hi).unwrap()
    }

    #[test]
    fn default_mapping_values() {
        let m = LikelihoodMapping::default();
        assert_eq!(map_likelihood(Likelihood::PossibleThat, &m), r(100, 6400));
        assert_eq!(map_likelihood(Likelihood::DefinitelyNotTheCaseThat, &m), r(0, 0));
        assert_eq!(map_likelihood(Likelihood::UnknownWhether, &m), r(0, 10_000));
        assert_eq!(map_likelihood(Likelihood::MoreLikelyThanNotThat, &m), r(5100, 10_000));
        assert_eq!(map_likelihood(Likelihood::DefinitelyTheCaseThat, &m), r(10_000, 10_000));
    }

    #[test]
    fn complement_examples() {
        assert_eq!(r(5100, 10_000).complement(), r(0, 4900));
        assert_eq!(ProbRange::FULL.complement(), ProbRange::FULL);
    }

    #[test]
    fn intersect_examples() {
        assert_eq!(r(100, 6400).intersect(r(0, 4900)), Some(r(100, 4900)));
        assert_eq!(r(300, 700).intersect(ProbRange::FULL), Some(r(300, 700)));
        assert_eq!(ProbRange::ZERO.intersect(ProbRange::CERTAIN), None);
    }

    #[test]
    fn rejects_invalid_ranges() {
        assert!(ProbRange::new(5, 4).is_err());
        assert!(ProbRange::new(0, 10_001).is_err());
        assert!(serde_json::from_str::<ProbRange>(r#"{"lo":9,"hi":3}"#).is_err());
    }

    #[test]
    fn percent_conversion_is_exact() {
        assert_eq!(percent_to_bp("64").unwrap(), 6400);
        assert_eq!(percent_to_bp("0.5").unwrap(), 50);
        assert_eq!(percent_to_bp("12.34").unwrap(), 1234);
        assert_eq!(percent_to_bp("100").unwrap(), 10_000);
        assert!(percent_to_bp("12.345").is_err());
        assert!(percent_to_bp("-1").is_err());
        assert!(percent_to_bp("100.01").is_err());
        assert_eq!(bp_to_percent(4900), "49");
        assert_eq!(bp_to_percent(50), "0.5");
    }

    #[test]
    fn mapping_file_round_trip() {
        let m = LikelihoodMapping::default().with(Likelihood::MoreLikelyThanNotThat, r(5001, 10_000));
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"possible-that\":{\"loPercent\":1,\"hiPercent\":64}"), "{json}");
        assert!(json.contains("\"loPercent\":50.01"), "{json}");
        let back: LikelihoodMapping = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn mapping_file_must_be_total() {
        let json = r#"{"possible-that":{"loPercent":1,"hiPercent":64}}"#;
        assert!(serde_json::from_str::<LikelihoodMapping>(json).is_err());
    }
}
