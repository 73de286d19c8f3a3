use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::trace::{RawTrace, DEFAULT_BIN_WIDTH_PS};
use crate::error::{Error, Result};
use crate::linalg;
use crate::photophysics::{
    pl_of, pl_weights, readout_initial_state, Intrinsics, NvParams, PowerScaling, RateMatrix, SpinInit,
};

/// Where per-power model parameters come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TraceModel {
    /// Same rates at every power.
    Fixed(NvParams),
    /// Power-scaled optical rates on top of fixed intrinsic rates.
    Scaled { scaling: PowerScaling, intrinsics: Intrinsics },
}

impl TraceModel {
    pub fn params_at(&self, power_uw: f64) -> Result<NvParams> {
        match self {
            TraceModel::Fixed(p) => {
                p.validate()?;
                Ok(*p)
            }
            TraceModel::Scaled { scaling, intrinsics } => {
                scaling.validate(&[power_uw])?;
                intrinsics.at_power(scaling, power_uw)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Noise {
    /// Expected counts, unrounded.
    None,
    /// Independent Poisson counts per bin.
    #[default]
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthOptions {
    /// Illuminated duration after the onset.
    pub duration_ns: f64,
    /// Dark bins before the onset.
    pub dark_bins: usize,
    pub bin_width_ps: f64,
    /// Expected counts per ns at normalized PL = 1.
    pub photon_scale: f64,
    pub noise: Noise,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            duration_ns: 3000.0,
            dark_bins: 200,
            bin_width_ps: DEFAULT_BIN_WIDTH_PS,
            photon_scale: 1e7,
            noise: Noise::Poisson,
            seed: 0,
        }
    }
}

/// Synthetic photon-count histogram for one readout.
///
/// The expected count in each lit bin is `photon_scale × bin width × mean
/// normalized PL over the bin`, starting from the illuminated steady-state
/// charge split with the spin polarized into `spin`. `stream` selects an
/// independent random stream for the same seed.
pub fn synthesize(
    model: &TraceModel,
    power_uw: f64,
    spin: SpinInit,
    opts: &SynthOptions,
    stream: u64,
) -> Result<RawTrace> {
    if !(opts.photon_scale.is_finite() && opts.photon_scale > 0.0) {
        return Err(Error::InvalidParameter {
            name: "photon_scale",
            value: opts.photon_scale,
            reason: "must be positive",
        });
    }
    if !(opts.duration_ns.is_finite() && opts.duration_ns >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "duration_ns",
            value: opts.duration_ns,
            reason: "must be non-negative",
        });
    }
    if !(opts.bin_width_ps.is_finite() && opts.bin_width_ps > 0.0) {
        return Err(Error::InvalidParameter {
            name: "bin_width_ps",
            value: opts.bin_width_ps,
            reason: "must be positive",
        });
    }
    let params = model.params_at(power_uw)?;
    let rm = RateMatrix::build(&params)?;
    let init = readout_initial_state(&params, spin)?;
    let ss = pl_of(&params, &rm.limit(&init)?);
    if ss <= 0.0 {
        return Err(Error::CannotNormalize);
    }
    let bin_ns = opts.bin_width_ps * 1e-3;
    let lit = (opts.duration_ns / bin_ns).round() as usize;
    let (step, integral) =
        linalg::propagator_with_integral(&rm.per_ns(), bin_ns).ok_or(Error::NonFinite("rate matrix"))?;
    let w_bin = (integral.transpose() * pl_weights(&params)) * (opts.photon_scale / ss);

    let mut counts = vec![0.0; opts.dark_bins];
    counts.reserve(lit);
    let mut rho = *init.as_vector();
    for _ in 0..lit {
        counts.push(w_bin.dot(&rho).max(0.0));
        rho = step * rho;
    }
    if opts.noise == Noise::Poisson {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(stream);
        for c in counts.iter_mut().filter(|c| **c > 0.0) {
            let d = Poisson::new(*c).map_err(|_| Error::NonFinite("expected counts"))?;
            *c = d.sample(&mut rng);
        }
    }
    RawTrace::new(opts.bin_width_ps, counts, power_uw, spin)
}

/// Both spin initializations at every power, ordered by power then
/// m_s = 0 before m_s = ±1; each trace gets its own random stream.
pub fn synthesize_bundle(model: &TraceModel, powers_uw: &[f64], opts: &SynthOptions) -> Result<Vec<RawTrace>> {
    let mut out = Vec::with_capacity(2 * powers_uw.len());
    for (i, &p) in powers_uw.iter().enumerate() {
        for (j, &spin) in SpinInit::BOTH.iter().enumerate() {
            out.push(synthesize(model, p, spin, opts, (2 * i + j) as u64)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photophysics::pl_trace;
    use crate::reference;

    fn noiseless() -> SynthOptions {
        SynthOptions { noise: Noise::None, duration_ns: 600.0, dark_bins: 0, ..SynthOptions::default() }
    }

    #[test]
    fn noiseless_follows_model() {
        let p = reference::nv17();
        let opts = noiseless();
        let t = synthesize(&TraceModel::Fixed(p), 660.0, SpinInit::Ms1, &opts, 0).unwrap();
        let init = readout_initial_state(&p, SpinInit::Ms1).unwrap();
        let bin = 0.128;
        let mids: Vec<f64> = (0..t.counts.len()).map(|k| (k as f64 + 0.5) * bin).collect();
        let model = pl_trace(&p, &init, &mids).unwrap();
        for (c, m) in t.counts.iter().zip(&model.values) {
            // Midpoint-rule error on a 128 ps bin, in normalized PL units.
            let v = c / (opts.photon_scale * bin);
            assert!((v - m).abs() < 1e-4, "{v} vs {m}");
        }
    }

    #[test]
    fn seed_determinism() {
        let m = TraceModel::Fixed(reference::nv91());
        let opts = SynthOptions { duration_ns: 200.0, photon_scale: 50.0, seed: 42, ..SynthOptions::default() };
        let a = synthesize(&m, 450.0, SpinInit::Ms0, &opts, 3).unwrap();
        let b = synthesize(&m, 450.0, SpinInit::Ms0, &opts, 3).unwrap();
        assert_eq!(a, b);
        let c = synthesize(&m, 450.0, SpinInit::Ms0, &opts, 4).unwrap();
        assert_ne!(a, c);
        assert!(a.counts.iter().all(|v| v.fract() == 0.0));
        assert!(a.counts[..opts.dark_bins].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ms0_brighter_than_ms1() {
        let base = reference::nv17();
        let scaling = PowerScaling::linear_through(&base, 664.0);
        let m = TraceModel::Scaled { scaling, intrinsics: base.intrinsics() };
        let a0 = synthesize(&m, 664.0, SpinInit::Ms0, &noiseless(), 0).unwrap();
        let a1 = synthesize(&m, 664.0, SpinInit::Ms1, &noiseless(), 0).unwrap();
        let area: f64 = a0.counts.iter().zip(&a1.counts).map(|(x, y)| x - y).sum();
        assert!(area > 0.0);
    }

    #[test]
    fn rejects_bad_options() {
        let m = TraceModel::Fixed(reference::nv17());
        let bad = SynthOptions { photon_scale: 0.0, ..SynthOptions::default() };
        assert!(synthesize(&m, 100.0, SpinInit::Ms0, &bad, 0).is_err());
    }

    #[test]
    fn zero_duration_is_dark_only() {
        let m = TraceModel::Fixed(reference::nv17());
        let opts = SynthOptions { duration_ns: 0.0, ..noiseless() };
        assert!(synthesize(&m, 100.0, SpinInit::Ms0, &opts, 0).unwrap().counts.is_empty());
    }
}
