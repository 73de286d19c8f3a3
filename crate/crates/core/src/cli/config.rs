use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::contrast::default_window_grid;
use crate::error::{Error, Result};
use crate::log_space;
use crate::photophysics::{Intrinsics, LifetimeParams, NvParams, PowerScaling, SpinInit};
use crate::pipeline::{default_power_list, FitConfig, SynthOptions, TraceModel};
use crate::reference;

/// One document drives every subcommand; each reads its own section.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub simulate: Option<SimulateConfig>,
    pub synth: Option<SynthConfig>,
    pub fit: Option<FitRunConfig>,
    pub sweep: Option<SweepConfig>,
    pub decompose: Option<DecomposeConfig>,
    pub kinetics: Option<KineticsConfig>,
}

impl RunConfig {
    /// Reads a config file and resolves relative paths against its folder.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = crate::io::read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(o) = cfg.out.as_mut() {
            fix(o);
        }
        if let Some(f) = cfg.fit.as_mut() {
            fix(&mut f.traces_dir);
        }
        if let Some(k) = cfg.kinetics.as_mut() {
            k.decays.iter_mut().for_each(fix);
            if let Some(p) = k.power_series.as_mut() {
                fix(p);
            }
        }
        Ok(cfg)
    }

    pub(crate) fn section<T: Clone>(s: &Option<T>, name: &str) -> Result<T> {
        s.clone().ok_or_else(|| Error::Config(format!("config has no `{name}` section")))
    }
}

/// Where the rate parameters come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Rates given directly; the same at every power.
    Params(NvParams),
    /// Rates given as lifetimes; the same at every power.
    Lifetimes(LifetimeParams),
    /// A tabulated fit row, e.g. `{"sample": "F", "nv": 91}`.
    Reference { sample: char, nv: u32 },
    /// Power-dependent optical rates.
    Scaled { scaling: PowerScaling, intrinsics: Intrinsics },
    /// Optical rates of `base` scaled linearly in power through `power_uW`.
    LinearFrom {
        base: Box<ModelSpec>,
        #[serde(rename = "power_uW")]
        power_uw: f64,
    },
}

impl ModelSpec {
    pub fn trace_model(&self) -> Result<TraceModel> {
        Ok(match self {
            ModelSpec::Scaled { scaling, intrinsics } => {
                TraceModel::Scaled { scaling: *scaling, intrinsics: *intrinsics }
            }
            ModelSpec::LinearFrom { base, power_uw } => {
                let p = base.params(None)?;
                TraceModel::Scaled { scaling: PowerScaling::linear_through(&p, *power_uw), intrinsics: p.intrinsics() }
            }
            other => TraceModel::Fixed(other.params(None)?),
        })
    }

    /// Parameters at `power_uw`. Power-scaled models need a power.
    pub fn params(&self, power_uw: Option<f64>) -> Result<NvParams> {
        match self {
            ModelSpec::Params(p) => {
                p.validate()?;
                Ok(*p)
            }
            ModelSpec::Lifetimes(l) => NvParams::from_lifetimes(l),
            ModelSpec::Reference { sample, nv } => reference::full_model(*sample, *nv)
                .ok_or_else(|| Error::Config(format!("no reference row for sample {sample}, NV {nv}")))?
                .params(),
            ModelSpec::Scaled { .. } | ModelSpec::LinearFrom { .. } => {
                let p = power_uw
                    .ok_or_else(|| Error::Config("a power-scaled model needs `power_uW` for this command".into()))?;
                self.trace_model()?.params_at(p)
            }
        }
    }
}

/// A grid given either as explicit values or log-spaced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    Values(Vec<f64>),
    Log { lo: f64, hi: f64, n: usize },
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            GridSpec::Values(v) => v.clone(),
            GridSpec::Log { lo, hi, n } => log_space(*lo, *hi, *n),
        }
    }

    pub fn rates() -> Self {
        GridSpec::Log { lo: 1e-3, hi: 1e2, n: 40 }
    }

    pub fn windows() -> Self {
        GridSpec::Values(default_window_grid())
    }
}

fn both_spins() -> Vec<SpinInit> {
    SpinInit::BOTH.to_vec()
}

fn simulate_powers() -> Vec<f64> {
    vec![330.0, 450.0, 660.0]
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub model: ModelSpec,
    #[serde(rename = "powers_uW", default = "simulate_powers")]
    pub powers_uw: Vec<f64>,
    #[serde(default = "both_spins")]
    pub spins: Vec<SpinInit>,
    #[serde(default = "SimulateConfig::default_duration")]
    pub duration_ns: f64,
    #[serde(default = "one")]
    pub step_ns: f64,
    #[serde(default = "GridSpec::windows")]
    pub window_grid: GridSpec,
    #[serde(default = "one")]
    pub collection: f64,
}

impl SimulateConfig {
    fn default_duration() -> f64 {
        3000.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub model: ModelSpec,
    #[serde(rename = "powers_uW", default = "default_power_list")]
    pub powers_uw: Vec<f64>,
    #[serde(default)]
    pub options: SynthOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitRunConfig {
    /// Folder of raw traces with sidecars.
    pub traces_dir: PathBuf,
    #[serde(default)]
    pub options: FitConfig,
    #[serde(default)]
    pub no_charge: bool,
    #[serde(default = "GridSpec::windows")]
    pub window_grid: GridSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub model: ModelSpec,
    /// Needed only for power-scaled models.
    #[serde(rename = "power_uW", default)]
    pub power_uw: Option<f64>,
    #[serde(default = "GridSpec::rates")]
    pub ion_grid: GridSpec,
    #[serde(default = "GridSpec::rates")]
    pub rec_grid: GridSpec,
    #[serde(default = "GridSpec::windows")]
    pub window_grid: GridSpec,
    #[serde(default = "one")]
    pub collection: f64,
}

/// Opposite shifts of the ES₀ and ES₁ lifetimes that hit a target contrast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub target_c_esr: f64,
    #[serde(default = "CalibrationConfig::default_shift")]
    pub max_shift_ns: f64,
}

impl CalibrationConfig {
    fn default_shift() -> f64 {
        0.5
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecomposeConfig {
    pub model: ModelSpec,
    #[serde(rename = "power_uW", default)]
    pub power_uw: Option<f64>,
    #[serde(default = "GridSpec::rates")]
    pub ion_grid: GridSpec,
    #[serde(default = "GridSpec::rates")]
    pub rec_grid: GridSpec,
    #[serde(default = "GridSpec::windows")]
    pub window_grid: GridSpec,
    #[serde(default = "one")]
    pub collection: f64,
    #[serde(default)]
    pub calibrate: Option<CalibrationConfig>,
}

impl DecomposeConfig {
    pub fn sweep(&self) -> SweepConfig {
        SweepConfig {
            model: self.model.clone(),
            power_uw: self.power_uw,
            ion_grid: self.ion_grid.clone(),
            rec_grid: self.rec_grid.clone(),
            window_grid: self.window_grid.clone(),
            collection: self.collection,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KineticsConfig {
    /// Dark-decay series, `time_s,normalized_pl`.
    #[serde(default)]
    pub decays: Vec<PathBuf>,
    /// Rate against power, `power_uW,rate_per_s`.
    #[serde(default)]
    pub power_series: Option<PathBuf>,
    /// Equilibrium NV⁻ fraction used to split each decay rate.
    #[serde(default)]
    pub rho_minus_equilibrium: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let doc = r#"{"sweep": {"model": {"reference": {"sample": "F", "nv": 91}}, "colection": 1}}"#;
        let e = serde_json::from_str::<RunConfig>(doc).unwrap_err().to_string();
        assert!(e.contains("colection"), "{e}");
        let e = serde_json::from_str::<RunConfig>(r#"{"sweeps": {}}"#).unwrap_err().to_string();
        assert!(e.contains("sweeps"), "{e}");
    }

    #[test]
    fn model_forms() {
        let r: ModelSpec = serde_json::from_str(r#"{"reference": {"sample": "A", "nv": 17}}"#).unwrap();
        assert_eq!(r.params(None).unwrap(), reference::nv17());
        let lf: ModelSpec = serde_json::from_str(
            r#"{"linear_from": {"base": {"reference": {"sample": "F", "nv": 91}}, "power_uW": 660}}"#,
        )
        .unwrap();
        assert!(lf.params(None).is_err());
        let at = lf.params(Some(660.0)).unwrap();
        assert!((at.gamma_532 - reference::nv91().gamma_532).abs() < 1e-12);
        let bad: ModelSpec = serde_json::from_str(r#"{"reference": {"sample": "Z", "nv": 1}}"#).unwrap();
        assert!(bad.params(None).is_err());
    }

    #[test]
    fn grid_forms() {
        let g: GridSpec = serde_json::from_str(r#"{"log": {"lo": 1, "hi": 100, "n": 3}}"#).unwrap();
        let v = g.values();
        assert_eq!(v.len(), 3);
        assert!((v[1] - 10.0).abs() < 1e-12 && v[2] == 100.0);
        let v: GridSpec = serde_json::from_str(r#"{"values": [2.5]}"#).unwrap();
        assert_eq!(v.values(), vec![2.5]);
    }
}
