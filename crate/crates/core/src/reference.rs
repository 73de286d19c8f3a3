//! Published fit results for eight shallow NV centers in two samples
//! (A and F), with and without charge conversion in the model.
//!
//! Rates in MHz, lifetimes in ns. Charge rates, Γ₅₃₂ and contrast are the
//! values at the power that maximized contrast for each center.

use crate::error::Result;
use crate::photophysics::{LifetimeParams, NvParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullModelFit {
    pub sample: char,
    pub nv: u32,
    pub c_esr: f64,
    pub p_nv0: f64,
    pub gamma_532: f64,
    pub gamma_ion: f64,
    pub gamma_rec: f64,
    pub gamma_es: f64,
    pub gamma_es_nv0: f64,
    pub es0_tau_ns: f64,
    pub es1_tau_ns: f64,
    pub a1_tau_ns: f64,
    pub p_a1_to_gs1: f64,
    pub cost: f64,
}

impl FullModelFit {
    pub fn lifetimes(&self) -> LifetimeParams {
        LifetimeParams {
            gamma_532: self.gamma_532,
            gamma_es: self.gamma_es,
            es0_tau_ns: self.es0_tau_ns,
            es1_tau_ns: self.es1_tau_ns,
            a1_tau_ns: self.a1_tau_ns,
            p_a1_to_gs1: self.p_a1_to_gs1,
            gamma_ion: self.gamma_ion,
            gamma_rec: self.gamma_rec,
            gamma_es_nv0: self.gamma_es_nv0,
            gamma_532_nv0: None,
        }
    }

    pub fn params(&self) -> Result<NvParams> {
        NvParams::from_lifetimes(&self.lifetimes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoChargeFit {
    pub sample: char,
    pub nv: u32,
    pub c_esr: f64,
    pub gamma_532: f64,
    pub gamma_es: f64,
    pub es0_tau_ns: f64,
    pub es1_tau_ns: f64,
    pub a1_tau_ns: f64,
    pub p_a1_to_gs1: f64,
    pub cost: f64,
}

macro_rules! full {
    ($s:literal, $nv:literal, $c:literal, $p:literal, $g:literal, $ion:literal, $rec:literal,
     $es:literal, $esnv0:literal, $t0:literal, $t1:literal, $ta:literal, $pa:literal, $cost:literal) => {
        FullModelFit {
            sample: $s,
            nv: $nv,
            c_esr: $c,
            p_nv0: $p,
            gamma_532: $g,
            gamma_ion: $ion,
            gamma_rec: $rec,
            gamma_es: $es,
            gamma_es_nv0: $esnv0,
            es0_tau_ns: $t0,
            es1_tau_ns: $t1,
            a1_tau_ns: $ta,
            p_a1_to_gs1: $pa,
            cost: $cost,
        }
    };
}

pub const FULL_MODEL: [FullModelFit; 8] = [
    full!('A', 10, 0.21, 0.11, 19.6, 5.6, 390.3, 75.0, 36.0, 10.0, 8.0, 60.0, 0.25, 1.79e-5),
    full!('A', 16, 0.18, 0.32, 24.9, 21.2, 176.6, 75.0, 36.0, 12.0, 10.0, 104.0, 0.25, 3.34e-5),
    full!('A', 17, 0.38, 0.11, 24.2, 4.2, 45.2, 75.0, 16.0, 12.0, 8.0, 104.0, 0.25, 4.57e-5),
    full!('A', 11, 0.34, 0.08, 14.0, 2.8, 74.8, 75.0, 16.0, 12.0, 8.0, 88.0, 0.25, 8.53e-5),
    full!('F', 78, 0.15, 0.30, 18.3, 5.5, 8.3, 75.0, 36.0, 8.0, 6.0, 62.0, 0.37, 9.85e-6),
    full!('F', 91, 0.16, 0.49, 22.4, 20.7, 16.9, 70.0, 32.0, 11.0, 8.0, 124.0, 0.25, 1.02e-5),
    full!('F', 40, 0.21, 0.21, 11.1, 0.1, 0.2, 75.0, 20.0, 9.0, 7.0, 69.0, 0.25, 2.96e-5),
    full!('F', 24, 0.27, 0.25, 9.4, 3.8, 6.3, 75.0, 16.0, 10.0, 7.0, 86.0, 0.25, 3.97e-5),
];

macro_rules! nochg {
    ($s:literal, $nv:literal, $c:literal, $g:literal, $es:literal, $t0:literal, $t1:literal,
     $ta:literal, $pa:literal, $cost:literal) => {
        NoChargeFit {
            sample: $s,
            nv: $nv,
            c_esr: $c,
            gamma_532: $g,
            gamma_es: $es,
            es0_tau_ns: $t0,
            es1_tau_ns: $t1,
            a1_tau_ns: $ta,
            p_a1_to_gs1: $pa,
            cost: $cost,
        }
    };
}

pub const NO_CHARGE_MODEL: [NoChargeFit; 8] = [
    nochg!('A', 10, 0.21, 16.1, 68.0, 10.0, 8.0, 56.0, 0.25, 2.18e-5),
    nochg!('A', 17, 0.38, 20.5, 68.0, 12.0, 8.0, 93.0, 0.25, 7.71e-5),
    nochg!('A', 16, 0.18, 11.8, 45.0, 11.0, 9.0, 63.0, 0.35, 8.09e-5),
    nochg!('A', 11, 0.34, 11.5, 67.0, 12.0, 8.0, 81.0, 0.25, 1.20e-4),
    nochg!('F', 78, 0.15, 13.6, 44.0, 11.0, 10.0, 49.0, 0.40, 2.47e-5),
    nochg!('F', 91, 0.16, 9.4, 33.0, 11.0, 9.0, 62.0, 0.30, 4.29e-5),
    nochg!('F', 40, 0.21, 11.3, 63.0, 11.0, 9.0, 53.0, 0.25, 4.57e-5),
    nochg!('F', 24, 0.27, 8.7, 49.0, 13.0, 9.0, 66.0, 0.25, 9.44e-5),
];

/// Best contrast reported for the sample A, NV 17 center across powers.
pub const A17_PEAK_CONTRAST: f64 = 0.420;
/// Best contrast reported for the sample F, NV 91 center across powers.
pub const F91_PEAK_CONTRAST: f64 = 0.174;

pub fn full_model(sample: char, nv: u32) -> Option<&'static FullModelFit> {
    FULL_MODEL.iter().find(|r| r.sample == sample && r.nv == nv)
}

pub fn no_charge_model(sample: char, nv: u32) -> Option<&'static NoChargeFit> {
    NO_CHARGE_MODEL.iter().find(|r| r.sample == sample && r.nv == nv)
}

/// Sample A, NV 17.
pub fn nv17() -> NvParams {
    full_model('A', 17).unwrap().params().expect("tabulated row is valid")
}

/// Sample F, NV 91.
pub fn nv91() -> NvParams {
    full_model('F', 91).unwrap().params().expect("tabulated row is valid")
}
