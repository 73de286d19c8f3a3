//! Transition-rate parameter sets.
//!
//! Units are fixed throughout: rates in MHz, times in ns, optical powers in µW.

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, check_rate, Error, Result};

/// Unit stanza written alongside every serialized parameter document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Units {
    pub rate: String,
    pub time: String,
    pub power: String,
}

impl Default for Units {
    fn default() -> Self {
        Units { rate: "MHz".into(), time: "ns".into(), power: "uW".into() }
    }
}

impl Units {
    fn check(&self) -> Result<()> {
        if *self != Units::default() {
            return Err(Error::Config(format!(
                "unsupported units {{rate: {}, time: {}, power: {}}}; expected MHz/ns/uW",
                self.rate, self.time, self.power
            )));
        }
        Ok(())
    }
}

/// Intrinsic and photo-induced transition rates of the seven-level model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NvParamsDoc", into = "NvParamsDoc")]
pub struct NvParams {
    /// NV⁻ ground → excited optical pumping rate (both spin branches).
    pub gamma_532: f64,
    /// NV⁻ excited → ground radiative decay.
    pub gamma_es: f64,
    /// ES₁ → A₁ intersystem crossing.
    pub gamma_es1_to_a1: f64,
    /// ES₀ → A₁ intersystem crossing.
    pub gamma_es0_to_a1: f64,
    /// Singlet decay rate, 1/τ(A₁).
    pub gamma_a1: f64,
    /// Probability that singlet decay lands in GS₁.
    pub p_a1_to_gs1: f64,
    /// Ionization from each NV⁻ excited state into GS(NV⁰).
    pub gamma_ion: f64,
    /// Recombination from ES(NV⁰) into the NV⁻ ground manifold.
    pub gamma_rec: f64,
    /// NV⁰ excited → ground decay.
    pub gamma_es_nv0: f64,
    /// NV⁰ optical pumping rate.
    pub gamma_532_nv0: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NvParamsDoc {
    #[serde(default)]
    units: Units,
    gamma_532: f64,
    gamma_es: f64,
    gamma_es1_to_a1: f64,
    gamma_es0_to_a1: f64,
    gamma_a1: f64,
    p_a1_to_gs1: f64,
    gamma_ion: f64,
    gamma_rec: f64,
    gamma_es_nv0: f64,
    /// Defaults to `gamma_532 / 3` when omitted.
    #[serde(default)]
    gamma_532_nv0: Option<f64>,
}

impl TryFrom<NvParamsDoc> for NvParams {
    type Error = Error;

    fn try_from(d: NvParamsDoc) -> Result<Self> {
        d.units.check()?;
        let p = NvParams {
            gamma_532: d.gamma_532,
            gamma_es: d.gamma_es,
            gamma_es1_to_a1: d.gamma_es1_to_a1,
            gamma_es0_to_a1: d.gamma_es0_to_a1,
            gamma_a1: d.gamma_a1,
            p_a1_to_gs1: d.p_a1_to_gs1,
            gamma_ion: d.gamma_ion,
            gamma_rec: d.gamma_rec,
            gamma_es_nv0: d.gamma_es_nv0,
            gamma_532_nv0: d.gamma_532_nv0.unwrap_or(d.gamma_532 / 3.0),
        };
        p.validate()?;
        Ok(p)
    }
}

impl From<NvParams> for NvParamsDoc {
    fn from(p: NvParams) -> Self {
        NvParamsDoc {
            units: Units::default(),
            gamma_532: p.gamma_532,
            gamma_es: p.gamma_es,
            gamma_es1_to_a1: p.gamma_es1_to_a1,
            gamma_es0_to_a1: p.gamma_es0_to_a1,
            gamma_a1: p.gamma_a1,
            p_a1_to_gs1: p.p_a1_to_gs1,
            gamma_ion: p.gamma_ion,
            gamma_rec: p.gamma_rec,
            gamma_es_nv0: p.gamma_es_nv0,
            gamma_532_nv0: Some(p.gamma_532_nv0),
        }
    }
}

/// Parameters quoted as effective lifetimes, the form used in fit tables.
///
/// `es0_tau = 1/(Γ_ES + Γ_ES₀→A₁)`, `es1_tau = 1/(Γ_ES + Γ_ES₁→A₁)`,
/// `a1_tau = 1/Γ_A₁`. Ionization is deliberately left out of the lifetimes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LifetimeParams {
    pub gamma_532: f64,
    pub gamma_es: f64,
    pub es0_tau_ns: f64,
    pub es1_tau_ns: f64,
    pub a1_tau_ns: f64,
    pub p_a1_to_gs1: f64,
    pub gamma_ion: f64,
    pub gamma_rec: f64,
    pub gamma_es_nv0: f64,
    /// `None` ties the NV⁰ pumping rate to `gamma_532 / 3`.
    #[serde(default)]
    pub gamma_532_nv0: Option<f64>,
}

/// ns⁻¹ → MHz.
const PER_NS_IN_MHZ: f64 = 1e3;

fn isc_from_tau(name: &'static str, tau_ns: f64, gamma_es: f64) -> Result<f64> {
    if !(tau_ns.is_finite() && tau_ns > 0.0) {
        return Err(Error::InvalidParameter { name, value: tau_ns, reason: "lifetime must be positive" });
    }
    let total = PER_NS_IN_MHZ / tau_ns;
    let isc = total - gamma_es;
    if isc < 0.0 {
        // Tolerate round-off at the boundary tau = 1/gamma_es.
        if isc > -1e-9 * total {
            return Ok(0.0);
        }
        return Err(Error::InvalidLifetime { name, tau_ns, radiative_ns: PER_NS_IN_MHZ / gamma_es });
    }
    Ok(isc)
}

impl NvParams {
    pub fn validate(&self) -> Result<()> {
        check_rate("gamma_532", self.gamma_532)?;
        check_rate("gamma_es", self.gamma_es)?;
        check_rate("gamma_es1_to_a1", self.gamma_es1_to_a1)?;
        check_rate("gamma_es0_to_a1", self.gamma_es0_to_a1)?;
        check_rate("gamma_a1", self.gamma_a1)?;
        check_probability("p_a1_to_gs1", self.p_a1_to_gs1)?;
        check_rate("gamma_ion", self.gamma_ion)?;
        check_rate("gamma_rec", self.gamma_rec)?;
        check_rate("gamma_es_nv0", self.gamma_es_nv0)?;
        check_rate("gamma_532_nv0", self.gamma_532_nv0)?;
        Ok(())
    }

    /// Converts effective lifetimes into intersystem-crossing and singlet rates.
    pub fn from_lifetimes(l: &LifetimeParams) -> Result<Self> {
        check_rate("gamma_es", l.gamma_es)?;
        let gamma_es0_to_a1 = isc_from_tau("es0_tau_ns", l.es0_tau_ns, l.gamma_es)?;
        let gamma_es1_to_a1 = isc_from_tau("es1_tau_ns", l.es1_tau_ns, l.gamma_es)?;
        if !(l.a1_tau_ns.is_finite() && l.a1_tau_ns > 0.0) {
            return Err(Error::InvalidParameter {
                name: "a1_tau_ns",
                value: l.a1_tau_ns,
                reason: "lifetime must be positive",
            });
        }
        let p = NvParams {
            gamma_532: l.gamma_532,
            gamma_es: l.gamma_es,
            gamma_es1_to_a1,
            gamma_es0_to_a1,
            gamma_a1: PER_NS_IN_MHZ / l.a1_tau_ns,
            p_a1_to_gs1: l.p_a1_to_gs1,
            gamma_ion: l.gamma_ion,
            gamma_rec: l.gamma_rec,
            gamma_es_nv0: l.gamma_es_nv0,
            gamma_532_nv0: l.gamma_532_nv0.unwrap_or(l.gamma_532 / 3.0),
        };
        p.validate()?;
        Ok(p)
    }

    /// Inverse of [`NvParams::from_lifetimes`].
    pub fn to_lifetimes(&self) -> LifetimeParams {
        LifetimeParams {
            gamma_532: self.gamma_532,
            gamma_es: self.gamma_es,
            es0_tau_ns: PER_NS_IN_MHZ / (self.gamma_es + self.gamma_es0_to_a1),
            es1_tau_ns: PER_NS_IN_MHZ / (self.gamma_es + self.gamma_es1_to_a1),
            a1_tau_ns: PER_NS_IN_MHZ / self.gamma_a1,
            p_a1_to_gs1: self.p_a1_to_gs1,
            gamma_ion: self.gamma_ion,
            gamma_rec: self.gamma_rec,
            gamma_es_nv0: self.gamma_es_nv0,
            gamma_532_nv0: Some(self.gamma_532_nv0),
        }
    }

    pub fn with_charge_rates(mut self, gamma_ion: f64, gamma_rec: f64) -> Self {
        self.gamma_ion = gamma_ion;
        self.gamma_rec = gamma_rec;
        self
    }

    /// Same NV with ionization and recombination switched off.
    pub fn without_charge_conversion(self) -> Self {
        self.with_charge_rates(0.0, 0.0)
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

    pub fn has_charge_conversion(&self) -> bool {
        self.gamma_ion > 0.0 || self.gamma_rec > 0.0
    }
}

/// Power-independent rates shared by every trace of one NV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intrinsics {
    pub gamma_es: f64,
    pub gamma_es_nv0: f64,
    pub gamma_es1_to_a1: f64,
    pub gamma_es0_to_a1: f64,
    pub gamma_a1: f64,
    pub p_a1_to_gs1: f64,
}

impl Intrinsics {
    pub fn validate(&self) -> Result<()> {
        check_rate("gamma_es", self.gamma_es)?;
        check_rate("gamma_es_nv0", self.gamma_es_nv0)?;
        check_rate("gamma_es1_to_a1", self.gamma_es1_to_a1)?;
        check_rate("gamma_es0_to_a1", self.gamma_es0_to_a1)?;
        check_rate("gamma_a1", self.gamma_a1)?;
        check_probability("p_a1_to_gs1", self.p_a1_to_gs1)
    }

    /// Full parameter set at laser power `power_uw`, with Γ_532,NV⁰ = Γ_532/3.
    pub fn at_power(&self, scaling: &PowerScaling, power_uw: f64) -> Result<NvParams> {
        let (gamma_532, gamma_ion, gamma_rec) = scaling.rates_at(power_uw);
        let p = NvParams {
            gamma_532,
            gamma_es: self.gamma_es,
            gamma_es1_to_a1: self.gamma_es1_to_a1,
            gamma_es0_to_a1: self.gamma_es0_to_a1,
            gamma_a1: self.gamma_a1,
            p_a1_to_gs1: self.p_a1_to_gs1,
            gamma_ion,
            gamma_rec,
            gamma_es_nv0: self.gamma_es_nv0,
            gamma_532_nv0: gamma_532 / 3.0,
        };
        p.validate()?;
        Ok(p)
    }
}

/// Linear-plus-quadratic dependence of the photo-induced rates on laser power.
///
/// `Γ_532 = β_532 p`, `Γ_ion = β_ion p + β_ion2 p²`, `Γ_rec = β_rec p + β_rec2 p²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PowerScalingDoc", into = "PowerScalingDoc")]
pub struct PowerScaling {
    /// MHz/µW
    pub beta_532: f64,
    /// MHz/µW
    pub beta_ion: f64,
    /// MHz/µW², non-positive
    pub beta_ion2: f64,
    /// MHz/µW
    pub beta_rec: f64,
    /// MHz/µW², non-negative
    pub beta_rec2: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PowerScalingDoc {
    #[serde(default)]
    units: Units,
    beta_532: f64,
    beta_ion: f64,
    #[serde(default)]
    beta_ion2: f64,
    beta_rec: f64,
    #[serde(default)]
    beta_rec2: f64,
}

impl TryFrom<PowerScalingDoc> for PowerScaling {
    type Error = Error;

    fn try_from(d: PowerScalingDoc) -> Result<Self> {
        d.units.check()?;
        let s = PowerScaling {
            beta_532: d.beta_532,
            beta_ion: d.beta_ion,
            beta_ion2: d.beta_ion2,
            beta_rec: d.beta_rec,
            beta_rec2: d.beta_rec2,
        };
        s.validate_signs()?;
        Ok(s)
    }
}

impl From<PowerScaling> for PowerScalingDoc {
    fn from(s: PowerScaling) -> Self {
        PowerScalingDoc {
            units: Units::default(),
            beta_532: s.beta_532,
            beta_ion: s.beta_ion,
            beta_ion2: s.beta_ion2,
            beta_rec: s.beta_rec,
            beta_rec2: s.beta_rec2,
        }
    }
}

impl PowerScaling {
    /// Purely linear scaling that reproduces `params` at `power_uw`.
    pub fn linear_through(params: &NvParams, power_uw: f64) -> Self {
        PowerScaling {
            beta_532: params.gamma_532 / power_uw,
            beta_ion: params.gamma_ion / power_uw,
            beta_ion2: 0.0,
            beta_rec: params.gamma_rec / power_uw,
            beta_rec2: 0.0,
        }
    }

    /// `(Γ_532, Γ_ion, Γ_rec)` at `power_uw`.
    pub fn rates_at(&self, power_uw: f64) -> (f64, f64, f64) {
        let p = power_uw;
        (self.beta_532 * p, self.beta_ion * p + self.beta_ion2 * p * p, self.beta_rec * p + self.beta_rec2 * p * p)
    }

    fn validate_signs(&self) -> Result<()> {
        for (name, v) in [("beta_532", self.beta_532), ("beta_ion", self.beta_ion), ("beta_rec", self.beta_rec)] {
            check_rate(name, v)?;
        }
        if !(self.beta_ion2.is_finite() && self.beta_ion2 <= 0.0) {
            return Err(Error::InvalidParameter { name: "beta_ion2", value: self.beta_ion2, reason: "must be <= 0" });
        }
        if !(self.beta_rec2.is_finite() && self.beta_rec2 >= 0.0) {
            return Err(Error::InvalidParameter { name: "beta_rec2", value: self.beta_rec2, reason: "must be >= 0" });
        }
        Ok(())
    }

    /// Checks the sign constraints and that Γ_ion(p), Γ_rec(p) stay
    /// non-negative for every power in `powers_uw`.
    pub fn validate(&self, powers_uw: &[f64]) -> Result<()> {
        self.validate_signs()?;
        for &p in powers_uw {
            let (_, ion, rec) = self.rates_at(p);
            check_rate("gamma_ion(p)", ion)?;
            check_rate("gamma_rec(p)", rec)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn nv17_lifetimes() -> LifetimeParams {
        LifetimeParams {
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
        }
    }

    #[test]
    fn isc_rate_from_es0_lifetime() {
        let p = NvParams::from_lifetimes(&nv17_lifetimes()).unwrap();
        assert_relative_eq!(p.gamma_es0_to_a1, 1000.0 / 12.0 - 75.0, epsilon = 1e-12);
        assert_relative_eq!(p.gamma_es0_to_a1, 8.333333333, epsilon = 1e-8);
        assert_relative_eq!(p.gamma_es1_to_a1, 50.0, epsilon = 1e-12);
        assert_relative_eq!(p.gamma_a1, 1000.0 / 104.0, epsilon = 1e-12);
        assert_eq!(p.gamma_532_nv0, 24.2 / 3.0);
    }

    #[test]
    fn radiative_limited_lifetime_gives_zero_isc() {
        let mut l = nv17_lifetimes();
        l.es0_tau_ns = 1000.0 / 75.0;
        let p = NvParams::from_lifetimes(&l).unwrap();
        assert_eq!(p.gamma_es0_to_a1, 0.0);
    }

    #[test]
    fn lifetime_shorter_than_radiative_is_rejected() {
        let mut l = nv17_lifetimes();
        l.es1_tau_ns = 20.0;
        assert!(matches!(NvParams::from_lifetimes(&l), Err(Error::InvalidLifetime { name: "es1_tau_ns", .. })));
    }

    #[test]
    fn rejects_negative_rate_and_bad_probability() {
        let mut p = NvParams::from_lifetimes(&nv17_lifetimes()).unwrap();
        p.gamma_rec = -1.0;
        assert!(p.validate().is_err());
        p.gamma_rec = 1.0;
        p.p_a1_to_gs1 = 1.2;
        assert!(p.validate().is_err());
    }

    #[test]
    fn json_roundtrip_carries_units() {
        let p = NvParams::from_lifetimes(&nv17_lifetimes()).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"units\":{\"rate\":\"MHz\",\"time\":\"ns\",\"power\":\"uW\"}"));
        let back: NvParams = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn json_rejects_unknown_keys_and_units() {
        let p = NvParams::from_lifetimes(&nv17_lifetimes()).unwrap();
        let mut v = serde_json::to_value(p).unwrap();
        v["bogus"] = 1.0.into();
        assert!(serde_json::from_value::<NvParams>(v.clone()).is_err());
        v.as_object_mut().unwrap().remove("bogus");
        v["units"]["rate"] = "GHz".into();
        assert!(serde_json::from_value::<NvParams>(v).is_err());
    }

    #[test]
    fn missing_nv0_pump_defaults_to_a_third() {
        let doc = r#"{"gamma_532": 9.0, "gamma_es": 70, "gamma_es1_to_a1": 50,
            "gamma_es0_to_a1": 10, "gamma_a1": 8, "p_a1_to_gs1": 0.25,
            "gamma_ion": 1, "gamma_rec": 2, "gamma_es_nv0": 30}"#;
        let p: NvParams = serde_json::from_str(doc).unwrap();
        assert_eq!(p.gamma_532_nv0, 3.0);
    }

    #[test]
    fn power_scaling_rates_and_constraints() {
        let s = PowerScaling { beta_532: 0.04, beta_ion: 0.01, beta_ion2: -1e-6, beta_rec: 0.02, beta_rec2: 2e-6 };
        let (g, ion, rec) = s.rates_at(500.0);
        assert_relative_eq!(g, 20.0);
        assert_relative_eq!(ion, 5.0 - 0.25);
        assert_relative_eq!(rec, 10.0 + 0.5);
        assert!(s.validate(&[100.0, 900.0]).is_ok());
        assert!(s.validate(&[20_000.0]).is_err());
        let bad = PowerScaling { beta_ion2: 1e-6, ..s };
        assert!(bad.validate(&[100.0]).is_err());
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<PowerScaling>(&json).unwrap(), s);
    }

    #[test]
    fn intrinsics_at_power_ties_nv0_pump() {
        let p = NvParams::from_lifetimes(&nv17_lifetimes()).unwrap();
        let s = PowerScaling::linear_through(&p, 664.0);
        let q = p.intrinsics().at_power(&s, 664.0).unwrap();
        assert_relative_eq!(q.gamma_532, p.gamma_532, epsilon = 1e-12);
        assert_relative_eq!(q.gamma_ion, p.gamma_ion, epsilon = 1e-12);
        assert_relative_eq!(q.gamma_532_nv0, q.gamma_532 / 3.0);
    }

    proptest::proptest! {
        #[test]
        fn lifetime_roundtrip(
            gamma_es in 10.0..100.0f64,
            isc0 in 0.0..200.0f64,
            isc1 in 0.0..200.0f64,
            gamma_a1 in 1.0..50.0f64,
        ) {
            let p = NvParams {
                gamma_532: 10.0, gamma_es, gamma_es1_to_a1: isc1, gamma_es0_to_a1: isc0,
                gamma_a1, p_a1_to_gs1: 0.3, gamma_ion: 1.0, gamma_rec: 2.0,
                gamma_es_nv0: 20.0, gamma_532_nv0: 3.0,
            };
            let back = NvParams::from_lifetimes(&p.to_lifetimes()).unwrap();
            proptest::prop_assert!((back.gamma_es0_to_a1 - isc0).abs() <= 1e-12 * (gamma_es + isc0));
            proptest::prop_assert!((back.gamma_es1_to_a1 - isc1).abs() <= 1e-12 * (gamma_es + isc1));
            proptest::prop_assert!((back.gamma_a1 - gamma_a1).abs() <= 1e-12 * gamma_a1);
        }
    }
}
