//! Model curves sampled the way measured traces are preprocessed.
//!
//! The model is integrated exactly over smoothing blocks starting at light
//! onset, shifted by whole blocks to line up with the data's t = 0, and
//! normalized over the same tail samples.

use super::trace::{find_onset, mean, tail_start, PlTrace};
use super::{FitConfig, FreeParams};
use crate::error::{Error, Result};
use crate::linalg;
use crate::photophysics::{pl_weights, readout_initial_state, NvParams, RateMatrix, SpinInit};

/// Extra blocks computed ahead of the data so the model onset can be found.
const ONSET_MARGIN: usize = 48;

/// Block means for both spin initializations at one power.
pub(crate) struct PowerCurves {
    ms0: Vec<f64>,
    ms1: Vec<f64>,
}

impl PowerCurves {
    pub(crate) fn new(params: &NvParams, sample_ns: f64, n_blocks: usize) -> Result<Self> {
        let rm = RateMatrix::build(params)?;
        let (step, integral) =
            linalg::propagator_with_integral(&rm.per_ns(), sample_ns).ok_or(Error::NonFinite("rate matrix"))?;
        let w = integral.transpose() * pl_weights(params) / sample_ns;
        let run = |spin: SpinInit| -> Result<Vec<f64>> {
            let mut rho = *readout_initial_state(params, spin)?.as_vector();
            let mut out = Vec::with_capacity(n_blocks);
            for _ in 0..n_blocks {
                out.push(w.dot(&rho));
                rho = step * rho;
            }
            Ok(out)
        };
        Ok(PowerCurves { ms0: run(SpinInit::Ms0)?, ms1: run(SpinInit::Ms1)? })
    }

    /// The aligned, tail-normalized segment closest to `data`.
    ///
    /// The model onset comes from the same threshold-then-peak rule as the
    /// data. Noise can move the data's peak by a block where the peak is
    /// broad, so the neighbouring offsets are tried too and the one with the
    /// smallest squared residual wins. Without `neighbours` only the rule's
    /// own onset is used. A model with no peak in reach (a
    /// monotone rise) is aligned at light onset.
    pub(crate) fn aligned(&self, spin: SpinInit, data: &[f64], cfg: &FitConfig, neighbours: bool) -> Result<Vec<f64>> {
        let m = match spin {
            SpinInit::Ms0 => &self.ms0,
            SpinInit::Ms1 => &self.ms1,
        };
        let n = data.len();
        if n == 0 || n > m.len() {
            return Err(Error::InsufficientData { needed: n.max(1), got: m.len() });
        }
        let ts = tail_start(n, cfg.tail_fraction);
        let mut best: Option<(f64, usize, f64)> = None;
        let last = m.len() - n;
        let k0 = match find_onset(m, cfg.t0_threshold, cfg.tail_fraction) {
            Ok(k) => k.min(last),
            Err(Error::RiseNotFound) => 0,
            Err(e) => return Err(e),
        };
        let reach = usize::from(neighbours);
        for k in k0.saturating_sub(reach)..=(k0 + reach).min(last) {
            let seg = &m[k..k + n];
            let tail = mean(&seg[ts..]);
            if tail.is_nan() || tail <= 0.0 {
                continue;
            }
            let cost: f64 = seg.iter().zip(data).map(|(v, d)| (d - v / tail).powi(2)).sum();
            if best.is_none_or(|b| cost < b.0) {
                best = Some((cost, k, tail));
            }
        }
        let (_, k, tail) = best.ok_or(Error::CannotNormalize)?;
        Ok(m[k..k + n].iter().map(|v| v / tail).collect())
    }
}

/// Model curves matching each trace's power, spin, sampling, and length.
pub fn model_curves(params: &FreeParams, traces: &[&PlTrace], cfg: &FitConfig) -> Result<Vec<Vec<f64>>> {
    model_curves_aligned(params, traces, cfg, true)
}

pub(crate) fn model_curves_aligned(
    params: &FreeParams,
    traces: &[&PlTrace],
    cfg: &FitConfig,
    neighbours: bool,
) -> Result<Vec<Vec<f64>>> {
    let scaling = params.scaling();
    let intrinsics = params.intrinsics();
    let mut cache: Vec<(u64, u64, usize, PowerCurves)> = Vec::new();
    let mut out = Vec::with_capacity(traces.len());
    for t in traces {
        let key = (t.power_uw.to_bits(), t.sample_ns.to_bits());
        let needed = t.len() + ONSET_MARGIN;
        let pos = cache.iter().position(|c| (c.0, c.1) == key && c.2 >= needed);
        let idx = match pos {
            Some(i) => i,
            None => {
                let p = intrinsics.at_power(&scaling, t.power_uw)?;
                let n = traces
                    .iter()
                    .filter(|u| (u.power_uw.to_bits(), u.sample_ns.to_bits()) == key)
                    .map(|u| u.len())
                    .max()
                    .unwrap_or(0)
                    + ONSET_MARGIN;
                cache.push((key.0, key.1, n, PowerCurves::new(&p, t.sample_ns, n)?));
                cache.len() - 1
            }
        };
        out.push(cache[idx].3.aligned(t.spin_init, &t.values, cfg, neighbours)?);
    }
    Ok(out)
}
