//! Gross versus net close-out exposure for a bilateral portfolio.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One transaction valued from party A's side, in minor currency units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Trade {
    pub id: String,
    pub mtm_minor_units: i64,
    pub currency: String,
}

impl Trade {
    pub fn new(id: &str, mtm_minor_units: i64, currency: &str) -> Self {
        Trade { id: id.to_string(), mtm_minor_units, currency: currency.to_string() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExposureReport {
    pub net_value_to_a: i64,
    pub net_exposure_a: i64,
    pub net_exposure_b: i64,
    pub gross_exposure_a: i64,
    pub gross_exposure_b: i64,
}

impl ExposureReport {
    /// Exposure removed by netting, per side.
    pub fn netting_benefit(&self) -> (i64, i64) {
        (self.gross_exposure_a - self.net_exposure_a, self.gross_exposure_b - self.net_exposure_b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExposureError {
    #[error("trade {trade} is in {found}, portfolio currency is {expected}")]
    CurrencyMismatch { trade: String, expected: String, found: String },
    #[error("amounts overflow 64-bit minor units")]
    Overflow,
}

impl ExposureError {
    pub fn reason_id(&self) -> &'static str {
        match self {
            ExposureError::CurrencyMismatch { .. } => "CurrencyMismatch",
            ExposureError::Overflow => "Overflow",
        }
    }
}

pub fn compute_exposures(portfolio: &[Trade]) -> Result<ExposureReport, ExposureError> {
    if let Some(first) = portfolio.first() {
        if let Some(bad) = portfolio.iter().find(|t| t.currency != first.currency) {
            return Err(ExposureError::CurrencyMismatch {
                trade: bad.id.clone(),
                expected: first.currency.clone(),
                found: bad.currency.clone(),
            });
        }
    }
    let mut gross_a: i64 = 0;
    let mut gross_b: i64 = 0;
    for t in portfolio {
        let v = t.mtm_minor_units;
        if v > 0 {
            gross_a = gross_a.checked_add(v).ok_or(ExposureError::Overflow)?;
        } else {
            gross_b = gross_b.checked_add(v.checked_neg().ok_or(ExposureError::Overflow)?).ok_or(ExposureError::Overflow)?;
        }
    }
    let net = gross_a.checked_sub(gross_b).ok_or(ExposureError::Overflow)?;
    Ok(ExposureReport {
        net_value_to_a: net,
        net_exposure_a: net.max(0),
        net_exposure_b: net.checked_neg().ok_or(ExposureError::Overflow)?.max(0),
        gross_exposure_a: gross_a,
        gross_exposure_b: gross_b,
    })
}
