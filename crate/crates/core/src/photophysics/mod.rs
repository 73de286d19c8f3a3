//! Seven-level spin/charge rate-equation model of the NV center.
//!
//! Levels are ordered {ES₁, ES₀, A₁, GS₁, GS₀, ES_NV⁰, GS_NV⁰}; GS₁ and ES₁
//! lump the m_s = ±1 sublevels. Populations evolve under `dρ/dt = R_M ρ`
//! and the detected PL is `Γ_ES (ρ_ES₁ + ρ_ES₀) + Γ_ES,NV⁰ ρ_ES,NV⁰`.

mod params;
mod rate_matrix;
mod state;
mod trace;

pub use params::{Intrinsics, LifetimeParams, NvParams, PowerScaling, Units};
pub use rate_matrix::{RateMatrix, MHZ_NS};
pub use state::{Level, SpinInit, StateVector};
pub use trace::{block_mean_pl, pl_of, pl_trace, pl_trace_raw, pl_weights, ModelTrace};

use crate::error::{Error, Result};

/// Steady-state NV⁰ population under continuous illumination.
///
/// With ionization and recombination both off the two charge manifolds
/// decouple; the readout then starts entirely in NV⁻ and this returns 0.
pub fn charge_split(params: &NvParams) -> Result<f64> {
    let rm = RateMatrix::build(params)?;
    match rm.steady_state() {
        Ok(ss) => Ok(ss.p_nv0()),
        Err(Error::AmbiguousSteadyState { .. }) if !params.has_charge_conversion() => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// Readout initial state for `spin`, using the illuminated charge split.
pub fn readout_initial_state(params: &NvParams, spin: SpinInit) -> Result<StateVector> {
    let p_nv0 = charge_split(params)?;
    StateVector::initial(spin, 1.0 - p_nv0, p_nv0)
}
