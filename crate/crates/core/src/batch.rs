//! Batch evaluation: many determinations, threshold sweeps and portfolios.
//!
//! With the `parallel` feature (on by default) work is spread over rayon's
//! pool; without it every function here runs sequentially. Results come back
//! in input order either way, so the two paths are interchangeable.

use crate::cnl::VocabularyRegistry;
use crate::engine::{determine, DeterminationInput, EngineError, Flag, InstitutionRiskPolicy, NettingDetermination};
use crate::exposure::{compute_exposures, ExposureError, ExposureReport, Trade};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Sequential reference implementations.
pub mod sequential {
    use super::*;

    pub fn determine_all(
        inputs: &[DeterminationInput<'_>],
        registry: &VocabularyRegistry,
    ) -> Vec<Result<NettingDetermination, EngineError>> {
        inputs.iter().map(|i| determine(i, registry)).collect()
    }

    pub fn threshold_sweep(
        input: &DeterminationInput<'_>,
        thresholds_bp: &[u32],
        registry: &VocabularyRegistry,
    ) -> Result<Vec<(u32, Flag)>, EngineError> {
        thresholds_bp.iter().map(|t| sweep_point(input, *t, registry)).collect()
    }

    pub fn exposures_all(portfolios: &[Vec<Trade>]) -> Vec<Result<ExposureReport, ExposureError>> {
        portfolios.iter().map(|p| compute_exposures(p)).collect()
    }
}

#[cfg(feature = "parallel")]
pub mod parallel {
    use super::*;

    pub fn determine_all(
        inputs: &[DeterminationInput<'_>],
        registry: &VocabularyRegistry,
    ) -> Vec<Result<NettingDetermination, EngineError>> {
        inputs.par_iter().map(|i| determine(i, registry)).collect()
    }

    pub fn threshold_sweep(
        input: &DeterminationInput<'_>,
        thresholds_bp: &[u32],
        registry: &VocabularyRegistry,
    ) -> Result<Vec<(u32, Flag)>, EngineError> {
        thresholds_bp.par_iter().map(|t| sweep_point(input, *t, registry)).collect()
    }

    pub fn exposures_all(portfolios: &[Vec<Trade>]) -> Vec<Result<ExposureReport, ExposureError>> {
        portfolios.par_iter().map(|p| compute_exposures(p)).collect()
    }
}

fn sweep_point(input: &DeterminationInput<'_>, threshold_bp: u32, registry: &VocabularyRegistry) -> Result<(u32, Flag), EngineError> {
    let policy: InstitutionRiskPolicy = input.policy.with_threshold(threshold_bp);
    let shifted = DeterminationInput { policy: &policy, ..input.clone() };
    Ok((threshold_bp, determine(&shifted, registry)?.flag()))
}

#[cfg(feature = "parallel")]
pub use parallel::{determine_all, exposures_all, threshold_sweep};
#[cfg(not(feature = "parallel"))]
pub use sequential::{determine_all, exposures_all, threshold_sweep};

/// Smallest threshold in `thresholds_bp` (sorted ascending) that yields Yes.
pub fn minimal_passing_threshold(sweep: &[(u32, Flag)]) -> Option<u32> {
    sweep.iter().find(|(_, f)| *f == Flag::Yes).map(|(t, _)| *t)
}
