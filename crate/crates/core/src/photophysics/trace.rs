use serde::Serialize;

use super::params::NvParams;
use super::rate_matrix::{check_times, RateMatrix};
use super::state::{Level, StateVector};
use crate::error::{Error, Result};
use crate::linalg::{self, Vector7};

/// PL weights: Γ_ES on both NV⁻ excited levels, Γ_ES,NV⁰ on ES_NV⁰.
pub fn pl_weights(p: &NvParams) -> Vector7 {
    let mut w = Vector7::zeros();
    w[Level::Es1.index()] = p.gamma_es;
    w[Level::Es0.index()] = p.gamma_es;
    w[Level::EsNv0.index()] = p.gamma_es_nv0;
    w
}

/// Unnormalized PL (MHz-weighted excited populations) of a state.
pub fn pl_of(p: &NvParams, s: &StateVector) -> f64 {
    pl_weights(p).dot(s.as_vector())
}

/// Model PL trace on an explicit time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelTrace {
    pub times_ns: Vec<f64>,
    /// Normalized so the long-time PL equals 1.
    pub values: Vec<f64>,
    pub raw: Vec<f64>,
    /// Long-time raw PL used for normalization.
    pub steady_state_raw: f64,
}

/// Unnormalized PL at each time.
pub fn pl_trace_raw(params: &NvParams, init: &StateVector, times_ns: &[f64]) -> Result<Vec<f64>> {
    let rm = RateMatrix::build(params)?;
    let w = pl_weights(params);
    Ok(rm.evolve(init, times_ns)?.iter().map(|s| w.dot(s.as_vector())).collect())
}

/// PL trace normalized to the long-time PL reached from `init`.
///
/// When the steady state is unique this is the analytic steady-state PL.
pub fn pl_trace(params: &NvParams, init: &StateVector, times_ns: &[f64]) -> Result<ModelTrace> {
    let rm = RateMatrix::build(params)?;
    let limit = rm.limit(init)?;
    let steady_state_raw = pl_of(params, &limit);
    if steady_state_raw <= 0.0 {
        return Err(Error::CannotNormalize);
    }
    let raw = pl_trace_raw(params, init, times_ns)?;
    let values = raw.iter().map(|v| v / steady_state_raw).collect();
    Ok(ModelTrace { times_ns: times_ns.to_vec(), values, raw, steady_state_raw })
}

/// Mean PL over consecutive blocks `[k h, (k+1) h)`, k = 0..n, starting
/// from `init` at t = 0. Exact: each block uses `(1/h)∫ e^{R s} ds`.
pub fn block_mean_pl(
    params: &NvParams,
    rm: &RateMatrix,
    init: &StateVector,
    block_ns: f64,
    n: usize,
) -> Result<Vec<f64>> {
    if !(block_ns.is_finite() && block_ns > 0.0) {
        return Err(Error::InvalidTimes("block width must be positive"));
    }
    check_times(&[block_ns])?;
    let (step, integral) =
        linalg::propagator_with_integral(&rm.per_ns(), block_ns).ok_or(Error::NonFinite("rate matrix"))?;
    let w_mean = (integral.transpose() * pl_weights(params)) / block_ns;
    let mut rho = *init.as_vector();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(w_mean.dot(&rho));
        rho = step * rho;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photophysics::params::LifetimeParams;
    use crate::photophysics::state::SpinInit;

    fn nv17() -> NvParams {
        NvParams::from_lifetimes(&LifetimeParams {
            gamma_532: 24.2,
            gamma_es: 75.0,
            es0_tau_ns: 12.0,
            es1_tau_ns: 8.0,
            a1_tau_ns: 104.0,
            p_a1_to_gs1: 0.25,
            gamma_ion: 4.2,
            gamma_rec: 45.2,
            gamma_es_nv0: 16.0,
            gamma_532_nv0: None,
        })
        .unwrap()
    }

    #[test]
    fn no_pumping_cannot_normalize() {
        let mut p = nv17();
        p.gamma_532 = 0.0;
        p.gamma_532_nv0 = 0.0;
        let init = StateVector::initial(SpinInit::Ms0, 0.9, 0.1).unwrap();
        let times = [0.0, 100.0, 500.0, 1000.0];
        assert!(matches!(pl_trace(&p, &init, &times), Err(Error::CannotNormalize)));
        let raw = pl_trace_raw(&p, &init, &times).unwrap();
        assert!(raw.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn steady_state_init_is_flat() {
        let p = nv17();
        let ss = RateMatrix::build(&p).unwrap().steady_state().unwrap();
        let times: Vec<f64> = (0..50).map(|k| k as f64 * 40.0).collect();
        let tr = pl_trace(&p, &ss, &times).unwrap();
        for v in tr.values {
            assert!((v - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn block_means_match_quadrature() {
        let p = nv17();
        let rm = RateMatrix::build(&p).unwrap();
        let init = StateVector::initial(SpinInit::Ms1, 0.89, 0.11).unwrap();
        let h = 12.8;
        let means = block_mean_pl(&p, &rm, &init, h, 6).unwrap();
        for (k, &m) in means.iter().enumerate() {
            let n = 400;
            let times: Vec<f64> = (0..=n).map(|i| k as f64 * h + i as f64 * h / n as f64).collect();
            let raw = pl_trace_raw(&p, &init, &times).unwrap();
            let simpson: f64 = raw
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let c = if i == 0 || i == n {
                        1.0
                    } else if i % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    c * v
                })
                .sum::<f64>()
                * (h / n as f64)
                / 3.0;
            assert!((m - simpson / h).abs() < 1e-9 * m.abs().max(1.0), "block {k}");
        }
    }
}
