use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector7;

/// The seven model levels, in state-vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    Es1 = 0,
    Es0 = 1,
    A1 = 2,
    Gs1 = 3,
    Gs0 = 4,
    EsNv0 = 5,
    GsNv0 = 6,
}

impl Level {
    pub const ALL: [Level; 7] = [Level::Es1, Level::Es0, Level::A1, Level::Gs1, Level::Gs0, Level::EsNv0, Level::GsNv0];

    pub const NV_MINUS: [Level; 5] = [Level::Es1, Level::Es0, Level::A1, Level::Gs1, Level::Gs0];
    pub const NV_ZERO: [Level; 2] = [Level::EsNv0, Level::GsNv0];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Level::Es1 => "ES1",
            Level::Es0 => "ES0",
            Level::A1 => "A1",
            Level::Gs1 => "GS1",
            Level::Gs0 => "GS0",
            Level::EsNv0 => "ES_NV0",
            Level::GsNv0 => "GS_NV0",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Spin state prepared before the readout pulse. `Ms1` stands for the
/// π-pulse-swapped m_s = ±1 preparation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpinInit {
    Ms0,
    Ms1,
}

impl SpinInit {
    pub const BOTH: [SpinInit; 2] = [SpinInit::Ms0, SpinInit::Ms1];

    pub fn label(self) -> &'static str {
        match self {
            SpinInit::Ms0 => "ms0",
            SpinInit::Ms1 => "ms1",
        }
    }
}

impl fmt::Display for SpinInit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

const SUM_TOL: f64 = 1e-9;

/// Population vector over {ES₁, ES₀, A₁, GS₁, GS₀, ES_NV⁰, GS_NV⁰}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVector(Vector7);

impl StateVector {
    /// Validates entries in [0, 1] summing to 1 within 1e-9.
    pub fn new(populations: [f64; 7]) -> Result<Self> {
        let v = Vector7::from(populations);
        Self::from_vector(v)
    }

    pub(crate) fn from_vector(v: Vector7) -> Result<Self> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("state vector"));
        }
        if let Some((i, x)) = v.iter().enumerate().find(|(_, &x)| !(-SUM_TOL..=1.0 + SUM_TOL).contains(&x)) {
            return Err(Error::InvalidState(format!("population of {} is {x}, outside [0, 1]", Level::ALL[i])));
        }
        let sum = v.sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidState(format!("populations sum to {sum}, expected 1")));
        }
        Ok(StateVector(v.map(|x| x.clamp(0.0, 1.0))))
    }

    /// Ground-state preparation right before readout: all NV⁻ weight in the
    /// prepared spin sublevel, all NV⁰ weight in GS_NV⁰.
    pub fn initial(spin: SpinInit, p_nv_minus: f64, p_nv0: f64) -> Result<Self> {
        for (name, p) in [("p_nv_minus", p_nv_minus), ("p_nv0", p_nv0)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter { name, value: p, reason: "probability must lie in [0, 1]" });
            }
        }
        if (p_nv_minus + p_nv0 - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidState(format!("charge populations {p_nv_minus} + {p_nv0} do not sum to 1")));
        }
        let mut v = [0.0; 7];
        let target = match spin {
            SpinInit::Ms0 => Level::Gs0,
            SpinInit::Ms1 => Level::Gs1,
        };
        v[target.index()] = p_nv_minus;
        v[Level::GsNv0.index()] = p_nv0;
        Self::new(v)
    }

    /// Everything in a single level.
    pub fn pure(level: Level) -> Self {
        let mut v = Vector7::zeros();
        v[level.index()] = 1.0;
        StateVector(v)
    }

    pub fn get(&self, level: Level) -> f64 {
        self.0[level.index()]
    }

    pub fn as_vector(&self) -> &Vector7 {
        &self.0
    }

    pub fn to_array(&self) -> [f64; 7] {
        self.0.into()
    }

    pub fn total(&self) -> f64 {
        self.0.sum()
    }

    /// P_NV⁰ = ρ(ES_NV⁰) + ρ(GS_NV⁰).
    pub fn p_nv0(&self) -> f64 {
        Level::NV_ZERO.iter().map(|&l| self.get(l)).sum()
    }

    pub fn p_nv_minus(&self) -> f64 {
        Level::NV_MINUS.iter().map(|&l| self.get(l)).sum()
    }
}
