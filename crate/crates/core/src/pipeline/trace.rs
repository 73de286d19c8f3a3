use serde::{Deserialize, Serialize};

use super::FitConfig;
use crate::error::{Error, Result};
use crate::photophysics::SpinInit;

/// Default histogram resolution of the photon counter.
pub const DEFAULT_BIN_WIDTH_PS: f64 = 128.0;

/// Time-resolved photon counts from one readout pulse.
///
/// Counts are stored as `f64` so that noiseless synthetic traces can carry
/// exact expected values; measured and Poisson-sampled traces hold whole
/// numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTrace {
    pub bin_width_ps: f64,
    pub counts: Vec<f64>,
    pub power_uw: f64,
    pub spin_init: SpinInit,
}

impl RawTrace {
    pub fn new(bin_width_ps: f64, counts: Vec<f64>, power_uw: f64, spin_init: SpinInit) -> Result<Self> {
        let t = RawTrace { bin_width_ps, counts, power_uw, spin_init };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bin_width_ps.is_finite() && self.bin_width_ps > 0.0) {
            return Err(Error::InvalidParameter {
                name: "bin_width_ps",
                value: self.bin_width_ps,
                reason: "must be positive",
            });
        }
        if !(self.power_uw.is_finite() && self.power_uw >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "power_uW",
                value: self.power_uw,
                reason: "must be non-negative",
            });
        }
        if let Some(&c) = self.counts.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(Error::InvalidParameter {
                name: "count",
                value: c,
                reason: "counts must be finite and non-negative",
            });
        }
        Ok(())
    }

    pub fn bin_width_ns(&self) -> f64 {
        self.bin_width_ps * 1e-3
    }
}

/// Smoothed, onset-aligned, tail-normalized PL trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlTrace {
    pub times_ns: Vec<f64>,
    pub values: Vec<f64>,
    pub power_uw: f64,
    pub spin_init: SpinInit,
    /// Spacing of `times_ns`, i.e. the smoothing block duration.
    pub sample_ns: f64,
    /// Index into the smoothed series that became t = 0.
    pub onset_index: usize,
}

impl PlTrace {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Reinterprets the processed samples as counts at the sample spacing,
    /// so a trace can be run back through [`preprocess`] with unit blocks.
    pub fn to_raw(&self) -> RawTrace {
        RawTrace {
            bin_width_ps: self.sample_ns * 1e3,
            counts: self.values.clone(),
            power_uw: self.power_uw,
            spin_init: self.spin_init,
        }
    }
}

/// Index where the final `fraction` of `n` samples begins (at least one
/// sample).
pub fn tail_start(n: usize, fraction: f64) -> usize {
    let k = ((n as f64) * fraction).round().max(1.0) as usize;
    n.saturating_sub(k.min(n))
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Block averages of `counts` in groups of `block`; a partial final group
/// is dropped.
pub fn block_average(counts: &[f64], block: usize) -> Vec<f64> {
    counts.chunks_exact(block).map(mean).collect()
}

/// Onset index in a smoothed series: the first local maximum at or after
/// the first sample reaching `threshold × tail mean`.
pub fn find_onset(smoothed: &[f64], threshold: f64, tail_fraction: f64) -> Result<usize> {
    if smoothed.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: smoothed.len() });
    }
    let tail = mean(&smoothed[tail_start(smoothed.len(), tail_fraction)..]);
    let (lo, hi) = smoothed.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    // A flat trace never crosses anything.
    if tail <= 0.0 || hi - lo <= 1e-12 * hi.abs() {
        return Err(Error::NoThresholdCrossing);
    }
    let level = threshold * tail;
    let crossing = smoothed.iter().position(|&v| v >= level).ok_or(Error::NoThresholdCrossing)?;
    (crossing..smoothed.len() - 1).find(|&k| smoothed[k + 1] < smoothed[k]).ok_or(Error::RiseNotFound)
}

/// Smooths, aligns, and normalizes a raw trace.
///
/// 1. averages every `smoothing_block` bins,
/// 2. finds the first sample at or above `t0_threshold` times the tail
///    level and then the first subsequent local maximum, which becomes
///    t = 0,
/// 3. drops earlier samples,
/// 4. scales so the mean of the final `tail_fraction` of samples is 1.
pub fn preprocess(raw: &RawTrace, cfg: &FitConfig) -> Result<PlTrace> {
    raw.validate()?;
    cfg.validate_preprocessing()?;
    let smoothed = block_average(&raw.counts, cfg.smoothing_block);
    let onset = find_onset(&smoothed, cfg.t0_threshold, cfg.tail_fraction)?;
    let kept = &smoothed[onset..];
    if kept.len() < 2 {
        return Err(Error::InsufficientData { needed: onset + 2, got: smoothed.len() });
    }
    let tail = mean(&kept[tail_start(kept.len(), cfg.tail_fraction)..]);
    if tail <= 0.0 {
        return Err(Error::CannotNormalize);
    }
    let sample_ns = raw.bin_width_ns() * cfg.smoothing_block as f64;
    Ok(PlTrace {
        times_ns: (0..kept.len()).map(|k| k as f64 * sample_ns).collect(),
        values: kept.iter().map(|v| v / tail).collect(),
        power_uw: raw.power_uw,
        spin_init: raw.spin_init,
        sample_ns,
        onset_index: onset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(block: usize) -> FitConfig {
        FitConfig { smoothing_block: block, ..FitConfig::default() }
    }

    fn raw(counts: Vec<f64>) -> RawTrace {
        RawTrace::new(128.0, counts, 330.0, SpinInit::Ms0).unwrap()
    }

    #[test]
    fn constant_trace_has_no_crossing() {
        let r = raw(vec![5.0; 1000]);
        assert!(matches!(preprocess(&r, &cfg(10)), Err(Error::NoThresholdCrossing)));
        let z = raw(vec![0.0; 1000]);
        assert!(matches!(preprocess(&z, &cfg(10)), Err(Error::NoThresholdCrossing)));
    }

    #[test]
    fn monotone_rise_has_no_peak() {
        let r = raw((0..1000).map(|k| k as f64).collect());
        assert!(matches!(preprocess(&r, &cfg(10)), Err(Error::RiseNotFound)));
    }

    #[test]
    fn trace_starting_at_peak() {
        let counts: Vec<f64> = (0..50).map(|k| 1.0 + (-(k as f64) / 5.0).exp()).collect();
        let t = preprocess(&raw(counts), &cfg(1)).unwrap();
        assert_eq!(t.onset_index, 0);
        assert_eq!(t.len(), 50);
        let tail = mean(&t.values[tail_start(50, 0.2)..]);
        assert!((tail - 1.0).abs() < 1e-15);
        assert_eq!(t.times_ns[1], 0.128);
    }

    #[test]
    fn dark_prefix_is_dropped() {
        let mut counts = vec![0.0; 300];
        counts.extend((0..2000).map(|k| 10.0 + 5.0 * (-(k as f64) / 200.0).exp()));
        let t = preprocess(&raw(counts), &cfg(100)).unwrap();
        assert_eq!(t.onset_index, 3);
        assert_eq!(t.len(), 20);
        assert!((t.sample_ns - 12.8).abs() < 1e-12);
    }

    #[test]
    fn rejects_negative_counts() {
        assert!(RawTrace::new(128.0, vec![1.0, -1.0], 1.0, SpinInit::Ms0).is_err());
        assert!(RawTrace::new(0.0, vec![1.0], 1.0, SpinInit::Ms0).is_err());
    }

    #[test]
    fn tail_window() {
        assert_eq!(tail_start(100, 0.2), 80);
        assert_eq!(tail_start(3, 0.2), 2);
        assert_eq!(tail_start(1, 0.2), 0);
    }
}
