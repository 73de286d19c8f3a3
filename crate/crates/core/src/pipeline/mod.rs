//! Photon-count trace preprocessing, synthetic trace generation, and the
//! simultaneous fit of the model to m_s = 0 and m_s = ±1 traces at several
//! laser powers.

mod fit;
mod model;
mod synth;
mod trace;

pub use fit::{
    fit_global, fit_no_charge, fit_pair, ActiveBound, BoundSide, CurveFit, DerivedAtPower, FitModel, FitResult,
    StartLog,
};
pub use model::model_curves;
pub use synth::{synthesize, synthesize_bundle, Noise, SynthOptions, TraceModel};
pub use trace::{block_average, find_onset, preprocess, tail_start, PlTrace, RawTrace, DEFAULT_BIN_WIDTH_PS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::log_space;
use crate::photophysics::{Intrinsics, PowerScaling};

pub const N_FREE: usize = 11;

/// The eleven fitted quantities. Power coefficients in MHz/µW and MHz/µW²,
/// rates in MHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeParams {
    pub beta_532: f64,
    pub beta_ion: f64,
    pub beta_ion2: f64,
    pub beta_rec: f64,
    pub beta_rec2: f64,
    pub gamma_es: f64,
    pub gamma_es_nv0: f64,
    pub gamma_es1_to_a1: f64,
    pub gamma_es0_to_a1: f64,
    pub gamma_a1: f64,
    pub p_a1_to_gs1: f64,
}

impl FreeParams {
    pub const NAMES: [&'static str; N_FREE] = [
        "beta_532",
        "beta_ion",
        "beta_ion2",
        "beta_rec",
        "beta_rec2",
        "gamma_es",
        "gamma_es_nv0",
        "gamma_es1_to_a1",
        "gamma_es0_to_a1",
        "gamma_a1",
        "p_a1_to_gs1",
    ];

    pub fn to_array(&self) -> [f64; N_FREE] {
        [
            self.beta_532,
            self.beta_ion,
            self.beta_ion2,
            self.beta_rec,
            self.beta_rec2,
            self.gamma_es,
            self.gamma_es_nv0,
            self.gamma_es1_to_a1,
            self.gamma_es0_to_a1,
            self.gamma_a1,
            self.p_a1_to_gs1,
        ]
    }

    pub fn from_array(a: [f64; N_FREE]) -> Self {
        FreeParams {
            beta_532: a[0],
            beta_ion: a[1],
            beta_ion2: a[2],
            beta_rec: a[3],
            beta_rec2: a[4],
            gamma_es: a[5],
            gamma_es_nv0: a[6],
            gamma_es1_to_a1: a[7],
            gamma_es0_to_a1: a[8],
            gamma_a1: a[9],
            p_a1_to_gs1: a[10],
        }
    }

    pub fn from_model(scaling: &PowerScaling, intrinsics: &Intrinsics) -> Self {
        FreeParams {
            beta_532: scaling.beta_532,
            beta_ion: scaling.beta_ion,
            beta_ion2: scaling.beta_ion2,
            beta_rec: scaling.beta_rec,
            beta_rec2: scaling.beta_rec2,
            gamma_es: intrinsics.gamma_es,
            gamma_es_nv0: intrinsics.gamma_es_nv0,
            gamma_es1_to_a1: intrinsics.gamma_es1_to_a1,
            gamma_es0_to_a1: intrinsics.gamma_es0_to_a1,
            gamma_a1: intrinsics.gamma_a1,
            p_a1_to_gs1: intrinsics.p_a1_to_gs1,
        }
    }

    pub fn scaling(&self) -> PowerScaling {
        PowerScaling {
            beta_532: self.beta_532,
            beta_ion: self.beta_ion,
            beta_ion2: self.beta_ion2,
            beta_rec: self.beta_rec,
            beta_rec2: self.beta_rec2,
        }
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics {
            gamma_es: self.gamma_es,
            gamma_es_nv0: self.gamma_es_nv0,
            gamma_es1_to_a1: self.gamma_es1_to_a1,
            gamma_es0_to_a1: self.gamma_es0_to_a1,
            gamma_a1: self.gamma_a1,
            p_a1_to_gs1: self.p_a1_to_gs1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    /// Simplex stage budget per start.
    pub simplex_max_evaluations: usize,
    /// Initial simplex edge in scaled coordinates.
    pub simplex_step: f64,
    pub simplex_x_tol: f64,
    pub lm_max_iterations: usize,
    /// Forward-difference step in scaled coordinates.
    pub lm_fd_step: f64,
    pub lm_f_tol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            simplex_max_evaluations: 2500,
            simplex_step: 0.1,
            simplex_x_tol: 1e-6,
            lm_max_iterations: 150,
            lm_fd_step: 1e-7,
            lm_f_tol: 1e-10,
        }
    }
}

/// Settings for preprocessing and fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    /// Laser powers (µW); each needs an m_s = 0 and an m_s = ±1 trace.
    pub power_list: Vec<f64>,
    /// Raw bins averaged per smoothed sample.
    pub smoothing_block: usize,
    /// Onset threshold as a fraction of the tail level.
    pub t0_threshold: f64,
    /// Fraction of final samples defining the steady-state level.
    pub tail_fraction: f64,
    /// β_ion starting guesses (MHz/µW), one full local fit each.
    pub multistart_grid: Vec<f64>,
    pub lower: FreeParams,
    pub upper: FreeParams,
    /// Starting values for everything except β_ion.
    pub initial: FreeParams,
    /// Typical magnitudes; the optimizer works in units of these.
    pub scale: FreeParams,
    /// Also start the full model from the no-charge optimum.
    pub nested_start: bool,
    pub optimizer: OptimizerConfig,
}

/// Eight powers spanning the usual measurement range, including 330, 450
/// and 660 µW.
pub fn default_power_list() -> Vec<f64> {
    vec![110.0, 220.0, 330.0, 450.0, 550.0, 660.0, 770.0, 880.0]
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            power_list: default_power_list(),
            smoothing_block: 100,
            t0_threshold: 0.5,
            tail_fraction: 0.2,
            multistart_grid: log_space(1e-3, 1.0, 8),
            lower: FreeParams {
                beta_532: 1e-4,
                beta_ion: 0.0,
                beta_ion2: -1e-4,
                beta_rec: 0.0,
                beta_rec2: 0.0,
                gamma_es: 1.0,
                gamma_es_nv0: 1.0,
                gamma_es1_to_a1: 0.0,
                gamma_es0_to_a1: 0.0,
                gamma_a1: 0.5,
                p_a1_to_gs1: 0.0,
            },
            upper: FreeParams {
                beta_532: 1.0,
                beta_ion: 1.0,
                beta_ion2: 0.0,
                beta_rec: 2.0,
                beta_rec2: 1e-4,
                gamma_es: 75.0,
                gamma_es_nv0: 300.0,
                gamma_es1_to_a1: 500.0,
                gamma_es0_to_a1: 500.0,
                gamma_a1: 100.0,
                p_a1_to_gs1: 1.0,
            },
            initial: FreeParams {
                beta_532: 0.03,
                beta_ion: 0.03,
                beta_ion2: 0.0,
                beta_rec: 0.05,
                beta_rec2: 0.0,
                gamma_es: 70.0,
                gamma_es_nv0: 30.0,
                gamma_es1_to_a1: 50.0,
                gamma_es0_to_a1: 10.0,
                gamma_a1: 10.0,
                p_a1_to_gs1: 0.3,
            },
            scale: FreeParams {
                beta_532: 0.03,
                beta_ion: 0.03,
                beta_ion2: 1e-5,
                beta_rec: 0.05,
                beta_rec2: 1e-5,
                gamma_es: 70.0,
                gamma_es_nv0: 30.0,
                gamma_es1_to_a1: 50.0,
                gamma_es0_to_a1: 10.0,
                gamma_a1: 10.0,
                p_a1_to_gs1: 0.3,
            },
            nested_start: true,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl FitConfig {
    pub(crate) fn validate_preprocessing(&self) -> Result<()> {
        if self.smoothing_block == 0 {
            return Err(Error::Config("smoothing_block must be at least 1".into()));
        }
        if !(self.t0_threshold > 0.0 && self.t0_threshold < 1.0) {
            return Err(Error::Config("t0_threshold must lie in (0, 1)".into()));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return Err(Error::Config("tail_fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_preprocessing()?;
        if self.power_list.is_empty() {
            return Err(Error::Config("power_list is empty".into()));
        }
        if self.power_list.iter().any(|&p| !(p.is_finite() && p > 0.0)) {
            return Err(Error::Config("powers must be positive".into()));
        }
        let mut sorted = self.power_list.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("power_list has duplicates".into()));
        }
        if self.multistart_grid.is_empty() {
            return Err(Error::Config("multistart_grid is empty".into()));
        }
        let (lo, hi, init, scale) =
            (self.lower.to_array(), self.upper.to_array(), self.initial.to_array(), self.scale.to_array());
        for i in 0..N_FREE {
            let name = FreeParams::NAMES[i];
            if !(lo[i].is_finite() && hi[i].is_finite() && lo[i] <= hi[i]) {
                return Err(Error::Config(format!("bounds for {name} are inconsistent")));
            }
            if !(scale[i].is_finite() && scale[i] > 0.0) {
                return Err(Error::Config(format!("scale for {name} must be positive")));
            }
            if !init[i].is_finite() {
                return Err(Error::Config(format!("initial value for {name} is not finite")));
            }
        }
        if self.upper.beta_ion2 > 0.0 {
            return Err(Error::Config("beta_ion2 must be constrained to <= 0".into()));
        }
        if self.lower.beta_rec2 < 0.0 {
            return Err(Error::Config("beta_rec2 must be constrained to >= 0".into()));
        }
        if self.lower.p_a1_to_gs1 < 0.0 || self.upper.p_a1_to_gs1 > 1.0 {
            return Err(Error::Config("p_a1_to_gs1 bounds must lie in [0, 1]".into()));
        }
        for (i, &l) in lo.iter().enumerate() {
            if i != 2 && l < 0.0 {
                return Err(Error::Config(format!(
                    "lower bound for {} must be non-negative, got {l}",
                    FreeParams::NAMES[i]
                )));
            }
        }
        if self.multistart_grid.iter().any(|&g| !(g.is_finite() && g >= 0.0)) {
            return Err(Error::Config("multistart guesses must be non-negative".into()));
        }
        Ok(())
    }
}
