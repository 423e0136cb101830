//! Annual sector cost of reviewing netting opinions, in analyst days.
//!
//! For each bank-size level L:
//!
//! ```text
//! reviews_L = banks_L * opinions_L * reviewed_L
//! days_L    = reviews_L * (complex_L * cost_C + (1 - complex_L) * cost_S)
//! ```
//!
//! and the total is the sum of `days_L`. All arithmetic is exact decimal;
//! rounding only happens when a value is displayed.

use std::fmt::Write as _;

use rust_decimal::{Decimal, RoundingStrategy};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LevelParams {
    pub level: String,
    pub banks: u64,
    pub opinions: u64,
    /// Percent of the opinions each bank reviews per year.
    #[serde(with = "decimal_number")]
    pub reviewed_pct: Decimal,
    /// Percent of reviews that are complex.
    #[serde(with = "decimal_number")]
    pub complex_pct: Decimal,
    #[serde(with = "decimal_number")]
    pub cost_complex_days: Decimal,
    #[serde(with = "decimal_number")]
    pub cost_simple_days: Decimal,
}

/// Parameter file: the level table plus an optional caveat.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CostParams {
    pub levels: Vec<LevelParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caveat: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CostError {
    #[error("level {level}: {field} must be a percentage in 0..=100")]
    InvalidFraction { level: String, field: &'static str },
    #[error("level {level}: costs must satisfy costComplexDays >= costSimpleDays >= 0")]
    InvalidCost { level: String },
    #[error("at least one level is required")]
    NoLevels,
    #[error("arithmetic overflow")]
    Overflow,
}

impl CostError {
    pub fn reason_id(&self) -> &'static str {
        match self {
            CostError::InvalidFraction { .. } => "InvalidFraction",
            CostError::InvalidCost { .. } => "InvalidCost",
            CostError::NoLevels => "NoLevels",
            CostError::Overflow => "Overflow",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LevelCost {
    pub level: String,
    pub reviews: Decimal,
    pub days_per_review: Decimal,
    pub days: Decimal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CostReport {
    pub levels: Vec<LevelCost>,
    pub reviews_total: Decimal,
    pub total_days: Decimal,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub day_rate: Option<Decimal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_cost: Option<Decimal>,
}

/// Rounds half away from zero to two decimals for display.
pub fn display_2dp(d: Decimal) -> Decimal {
    d.round_dp_with_strategy(2, RoundingStrategy::MidpointAwayFromZero)
}

fn pct(level: &LevelParams, field: &'static str, value: Decimal) -> Result<Decimal, CostError> {
    if value < Decimal::ZERO || value > Decimal::ONE_HUNDRED {
        return Err(CostError::InvalidFraction { level: level.level.clone(), field });
    }
    Ok(value / Decimal::ONE_HUNDRED)
}

impl LevelParams {
    fn cost(&self) -> Result<LevelCost, CostError> {
        let reviewed = pct(self, "reviewedPct", self.reviewed_pct)?;
        let complex = pct(self, "complexPct", self.complex_pct)?;
        if self.cost_simple_days < Decimal::ZERO || self.cost_complex_days < self.cost_simple_days {
            return Err(CostError::InvalidCost { level: self.level.clone() });
        }
        let banks = Decimal::from(self.banks);
        let opinions = Decimal::from(self.opinions);
        let reviews = banks.checked_mul(opinions).and_then(|x| x.checked_mul(reviewed)).ok_or(CostError::Overflow)?;
        let days_per_review = complex * self.cost_complex_days + (Decimal::ONE - complex) * self.cost_simple_days;
        let days = reviews.checked_mul(days_per_review).ok_or(CostError::Overflow)?;
        Ok(LevelCost {
            level: self.level.clone(),
            reviews: reviews.normalize(),
            days_per_review: days_per_review.normalize(),
            days: days.normalize(),
        })
    }
}

pub fn total_cost(params: &[LevelParams], day_rate: Option<Decimal>) -> Result<CostReport, CostError> {
    if params.is_empty() {
        return Err(CostError::NoLevels);
    }
    let levels = params.iter().map(LevelParams::cost).collect::<Result<Vec<_>, _>>()?;
    let reviews_total: Decimal = levels.iter().map(|l| l.reviews).sum();
    let total_days: Decimal = levels.iter().map(|l| l.days).sum();
    let total_cost = match day_rate {
        Some(rate) => Some(total_days.checked_mul(rate).ok_or(CostError::Overflow)?.normalize()),
        None => None,
    };
    Ok(CostReport { levels, reviews_total: reviews_total.normalize(), total_days: total_days.normalize(), day_rate, total_cost })
}

impl CostReport {
    /// Share of total days arising at `level`, as a percentage.
    pub fn level_share_pct(&self, level: &str) -> Option<Decimal> {
        if self.total_days.is_zero() {
            return None;
        }
        let l = self.levels.iter().find(|l| l.level == level)?;
        Some(l.days * Decimal::ONE_HUNDRED / self.total_days)
    }

    /// Plain-text table, one row per level, closing with the total line.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>12} {:>14} {:>12} {:>7}", "LEVEL", "REVIEWS", "DAYS/REVIEW", "DAYS", "SHARE");
        for l in &self.levels {
            let share = self.level_share_pct(&l.level).map(|s| format!("{}%", s.round_dp(1))).unwrap_or_else(|| "-".into());
            let _ = writeln!(out, "{:<10} {:>12} {:>14} {:>12} {:>7}", l.level, l.reviews, l.days_per_review, display_2dp(l.days), share);
        }
        if let (Some(rate), Some(cost)) = (self.day_rate, self.total_cost) {
            let _ = writeln!(out, "COST at {rate}/day: {}", display_2dp(cost));
        }
        let _ = write!(out, "TOTAL {} reviews, {:.2} days", self.reviews_total, display_2dp(self.total_days));
        out
    }
}

/// Decimals as JSON numbers, read through their shortest text form so
/// `0.05` stays exactly `0.05`. Strings are accepted on input too.
pub mod decimal_number {
    use std::str::FromStr;

    use rust_decimal::Decimal;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum NumOrStr {
        Num(serde_json::Number),
        Str(String),
    }

    pub fn serialize<S: Serializer>(d: &Decimal, s: S) -> Result<S::Ok, S::Error> {
        let n = serde_json::Number::from_str(&d.normalize().to_string()).map_err(serde::ser::Error::custom)?;
        n.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Decimal, D::Error> {
        let text = match NumOrStr::deserialize(d)? {
            NumOrStr::Num(n) => n.to_string(),
            NumOrStr::Str(s) => s,
        };
        Decimal::from_str(&text).or_else(|_| Decimal::from_scientific(&text)).map_err(serde::de::Error::custom)
    }
}
