//! Two-level charge-state kinetics in the dark or under weak illumination.
//!
//! `dρ₋/dt = −r_ion ρ₋ + r_rec ρ₀`, with `ρ₋ + ρ₀ = 1`. Rates are in s⁻¹ and
//! times in seconds, except for the four-level model which uses MHz.

use nalgebra::{Matrix2, Matrix4, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{check_probability, check_rate, Error, Result};
use crate::optimize::brent;

const SUM_TOL: f64 = 1e-12;

/// Populations of the NV⁻ and NV⁰ charge states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargeState {
    rho_minus: f64,
    rho_zero: f64,
}

impl ChargeState {
    pub fn new(rho_minus: f64, rho_zero: f64) -> Result<Self> {
        check_probability("rho_minus", rho_minus)?;
        check_probability("rho_zero", rho_zero)?;
        if (rho_minus + rho_zero - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidState(format!(
                "charge populations sum to {} instead of 1",
                rho_minus + rho_zero
            )));
        }
        Ok(ChargeState { rho_minus, rho_zero })
    }

    pub fn from_minus(rho_minus: f64) -> Result<Self> {
        check_probability("rho_minus", rho_minus)?;
        Ok(ChargeState { rho_minus, rho_zero: 1.0 - rho_minus })
    }

    pub fn rho_minus(&self) -> f64 {
        self.rho_minus
    }

    pub fn rho_zero(&self) -> f64 {
        self.rho_zero
    }
}

/// Ionization and recombination rates (s⁻¹).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChargeRates {
    pub r_ion: f64,
    pub r_rec: f64,
}

impl ChargeRates {
    pub fn new(r_ion: f64, r_rec: f64) -> Result<Self> {
        check_rate("r_ion", r_ion)?;
        check_rate("r_rec", r_rec)?;
        Ok(ChargeRates { r_ion, r_rec })
    }

    /// Equilibrium NV⁻ fraction, or `None` when both rates vanish.
    pub fn equilibrium_minus(&self) -> Option<f64> {
        let tot = total_rate(self);
        (tot > 0.0).then(|| self.r_rec / tot)
    }
}

/// Charge populations after time `t_s`, exact.
pub fn evolve_charge(rates: &ChargeRates, init: &ChargeState, t_s: f64) -> Result<ChargeState> {
    check_rate("r_ion", rates.r_ion)?;
    check_rate("r_rec", rates.r_rec)?;
    if !(t_s.is_finite() && t_s >= 0.0) {
        return Err(Error::InvalidTimes("time must be finite and non-negative"));
    }
    let Some(eq) = rates.equilibrium_minus() else {
        return Ok(*init);
    };
    let decay = (-total_rate(rates) * t_s).exp();
    let rho_minus = (eq + (init.rho_minus - eq) * decay).clamp(0.0, 1.0);
    Ok(ChargeState { rho_minus, rho_zero: 1.0 - rho_minus })
}

/// Total conversion rate `r_ion + r_rec`, the relaxation rate of ρ₋.
pub fn total_rate(rates: &ChargeRates) -> f64 {
    rates.r_ion + rates.r_rec
}

/// Splits a relaxation rate into ionization and recombination given the
/// equilibrium NV⁻ fraction.
pub fn split_rates(r_tot: f64, rho_minus_equilibrium: f64) -> Result<ChargeRates> {
    check_rate("r_tot", r_tot)?;
    check_probability("rho_minus_equilibrium", rho_minus_equilibrium)?;
    let r_rec = r_tot * rho_minus_equilibrium;
    Ok(ChargeRates { r_ion: r_tot - r_rec, r_rec })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayModel {
    /// `A e^{−r t} + C`
    #[default]
    DecayToOffset,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialFit {
    pub amplitude: f64,
    /// Decay rate in inverse units of the sample times.
    pub rate: f64,
    pub offset: f64,
    /// Euclidean norm of the residual vector.
    pub residual: f64,
}

fn check_samples(samples: &[(f64, f64)], needed: usize) -> Result<()> {
    if samples.len() < needed {
        return Err(Error::InsufficientData { needed, got: samples.len() });
    }
    if samples.iter().any(|(t, y)| !t.is_finite() || !y.is_finite()) {
        return Err(Error::NonFinite("samples"));
    }
    Ok(())
}

/// Linear least squares for amplitude and offset at a fixed rate.
/// Returns `(A, C, Σ residual²)`.
fn project_rate(samples: &[(f64, f64)], rate: f64) -> (f64, f64, f64) {
    let mut ata = Matrix2::zeros();
    let mut aty = Vector2::zeros();
    for &(t, y) in samples {
        let e = (-rate * t).exp();
        ata += Matrix2::new(e * e, e, e, 1.0);
        aty += Vector2::new(e * y, y);
    }
    let (a, c) = match ata.try_inverse() {
        Some(inv) if rate > 0.0 => {
            let s = inv * aty;
            (s[0], s[1])
        }
        _ => {
            let mean = samples.iter().map(|p| p.1).sum::<f64>() / samples.len() as f64;
            (0.0, mean)
        }
    };
    let ss = samples.iter().map(|&(t, y)| (y - a * (-rate * t).exp() - c).powi(2)).sum();
    (a, c, ss)
}

/// Least-squares fit of `A e^{−r t} + C` with `r ≥ 0`.
///
/// Variable projection: amplitude and offset are solved linearly for each
/// trial rate, and the rate is found by a log-grid scan refined with
/// Brent's method.
pub fn fit_exponential_decay(samples: &[(f64, f64)], model: DecayModel) -> Result<ExponentialFit> {
    let DecayModel::DecayToOffset = model;
    check_samples(samples, 4)?;
    if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InvalidTimes("sample times must be strictly ascending"));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().map(|p| p.1).sum::<f64>() / n;
    let scale = samples.iter().map(|p| p.1.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let flat = samples.iter().all(|p| (p.1 - mean).abs() <= 1e-12 * scale);
    let constant_fit = ExponentialFit {
        amplitude: 0.0,
        rate: 0.0,
        offset: mean,
        residual: samples.iter().map(|p| (p.1 - mean).powi(2)).sum::<f64>().sqrt(),
    };
    if flat {
        return Ok(constant_fit);
    }

    let t0 = samples[0].0;
    // Shifting time keeps the amplitude well scaled; undone below.
    let shifted: Vec<(f64, f64)> = samples.iter().map(|&(t, y)| (t - t0, y)).collect();
    let span = shifted.last().unwrap().0;
    let dt_min = shifted.windows(2).map(|w| w[1].0 - w[0].0).fold(f64::INFINITY, f64::min);
    let (lo, hi) = ((1e-3 / span).ln(), (50.0 / dt_min).ln());
    let grid = 240;
    let cost = |u: f64| project_rate(&shifted, u.exp()).2;
    let (mut best_k, mut best) = (0, f64::INFINITY);
    for k in 0..=grid {
        let u = lo + (hi - lo) * k as f64 / grid as f64;
        let c = cost(u);
        if c < best {
            best = c;
            best_k = k;
        }
    }
    let step = (hi - lo) / grid as f64;
    let a = lo + step * (best_k as f64 - 1.0);
    let b = lo + step * (best_k as f64 + 1.0);
    let (u, _) = brent(cost, a.max(lo - step), b.min(hi), 1e-13, 500);
    let rate = u.exp();
    let (amp, offset, ss) = project_rate(&shifted, rate);
    if ss >= constant_fit.residual.powi(2) {
        return Ok(constant_fit);
    }
    Ok(ExponentialFit { amplitude: amp * (rate * t0).exp(), rate, offset, residual: ss.sqrt() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    /// Quadratic coefficient, rate units per µW².
    pub a: f64,
    /// Linear coefficient, rate units per µW.
    pub b: f64,
    pub residual: f64,
}

impl PowerLawFit {
    pub fn eval(&self, p: f64) -> f64 {
        self.a * p * p + self.b * p
    }

    /// Local log-log slope `d ln r / d ln p`.
    pub fn log_slope(&self, p: f64) -> f64 {
        (2.0 * self.a * p * p + self.b * p) / self.eval(p)
    }
}

/// Non-negative least squares fit of `rate = a p² + b p`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    check_samples(points, 3)?;
    for &(p, _) in points {
        if p <= 0.0 {
            return Err(Error::InvalidParameter { name: "power", value: p, reason: "must be positive" });
        }
    }
    let p0 = points[0].0;
    if points.iter().all(|&(p, _)| (p - p0).abs() <= 1e-12 * p0) {
        return Err(Error::RankDeficient("all powers are equal"));
    }
    // Columns scaled by a reference power to keep the normal equations tame.
    let pref = points.iter().map(|q| q.0).fold(0.0, f64::max);
    let mut ata = Matrix2::zeros();
    let mut aty = Vector2::zeros();
    for &(p, r) in points {
        let x = Vector2::new((p / pref).powi(2), p / pref);
        ata += x * x.transpose();
        aty += x * r;
    }
    let sse = |qa: f64, qb: f64| -> f64 {
        points
            .iter()
            .map(|&(p, r)| {
                let x = p / pref;
                (r - qa * x * x - qb * x).powi(2)
            })
            .sum()
    };
    let mut candidates = vec![(0.0, 0.0)];
    if let Some(s) = ata.try_inverse().map(|inv| inv * aty) {
        if s[0] >= 0.0 && s[1] >= 0.0 {
            candidates.push((s[0], s[1]));
        }
    }
    candidates.push(((aty[0] / ata[(0, 0)]).max(0.0), 0.0));
    candidates.push((0.0, (aty[1] / ata[(1, 1)]).max(0.0)));
    let (qa, qb) = candidates.into_iter().min_by(|x, y| sse(x.0, x.1).total_cmp(&sse(y.0, y.1))).unwrap();
    Ok(PowerLawFit { a: qa / (pref * pref), b: qb / pref, residual: sse(qa, qb).sqrt() })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Result<f64> {
    check_samples(points, 2)?;
    if points.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return Err(Error::InvalidParameter {
            name: "log-log point",
            value: f64::NAN,
            reason: "coordinates must be positive",
        });
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::RankDeficient("all abscissae are equal"));
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Ok(sxy / sxx)
}

/// Reduced model: 1 = GS NV⁻, 2 = ES NV⁻, 3 = GS NV⁰, 4 = ES NV⁰.
/// `gij` is the rate from level i to level j, in MHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourLevelParams {
    pub g12: f64,
    pub g21: f64,
    pub g23: f64,
    pub g34: f64,
    pub g43: f64,
    pub g41: f64,
}

impl FourLevelParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("g12", self.g12),
            ("g21", self.g21),
            ("g23", self.g23),
            ("g34", self.g34),
            ("g43", self.g43),
            ("g41", self.g41),
        ] {
            check_rate(name, v)?;
        }
        Ok(())
    }

    /// Column-convention generator in MHz.
    pub fn generator(&self) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        let mut link = |from: usize, to: usize, g: f64| {
            m[(to, from)] += g;
            m[(from, from)] -= g;
        };
        link(0, 1, self.g12);
        link(1, 0, self.g21);
        link(1, 2, self.g23);
        link(2, 3, self.g34);
        link(3, 2, self.g43);
        link(3, 0, self.g41);
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FourLevelReduction {
    /// Effective rates in s⁻¹.
    pub rates: ChargeRates,
    /// Whether conversion is much slower than the optical cycling in both
    /// charge manifolds.
    pub valid: bool,
}

/// Adiabatic elimination of the optical cycles: `r_ion = Γ₂₃ Γ₁₂/(Γ₁₂+Γ₂₁)`,
/// `r_rec = Γ₄₁ Γ₃₄/(Γ₃₄+Γ₄₃)`.
pub fn reduce_four_level(p: &FourLevelParams) -> Result<FourLevelReduction> {
    p.validate()?;
    let minus = p.g12 + p.g21;
    let zero = p.g34 + p.g43;
    if minus <= 0.0 {
        return Err(Error::InvalidParameter { name: "g12 + g21", value: minus, reason: "must be positive" });
    }
    if zero <= 0.0 {
        return Err(Error::InvalidParameter { name: "g34 + g43", value: zero, reason: "must be positive" });
    }
    let r_ion = p.g23 * p.g12 / minus;
    let r_rec = p.g41 * p.g34 / zero;
    let valid = p.g23.max(p.g41) < 0.01 * minus.min(zero);
    Ok(FourLevelReduction { rates: ChargeRates { r_ion: r_ion * 1e6, r_rec: r_rec * 1e6 }, valid })
}
