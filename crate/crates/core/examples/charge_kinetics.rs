//! Dark charge relaxation: exact two-state decays, recovery of the rate by
//! an exponential fit, and the quadratic power law that follows from the
//! four-level reduction.
//!
//! ```text
//! cargo run --example charge_kinetics
//! ```

use nvpd::kinetics::{
    evolve_charge, fit_exponential_decay, fit_power_law, reduce_four_level, split_rates, ChargeState, DecayModel,
    FourLevelParams,
};
use nvpd::log_space;

fn main() -> nvpd::error::Result<()> {
    let rates = split_rates(40.0, 0.6)?;
    println!("r_tot = 40 s⁻¹ split at ρ₋ = 0.6: r_ion = {:.1}, r_rec = {:.1}", rates.r_ion, rates.r_rec);
    let start = ChargeState::from_minus(1.0)?;
    let samples: Vec<(f64, f64)> = log_space(1e-3, 0.3, 40)
        .into_iter()
        .map(|t| evolve_charge(&rates, &start, t).map(|s| (t, s.rho_minus())))
        .collect::<Result<_, _>>()?;
    let fit = fit_exponential_decay(&samples, DecayModel::DecayToOffset)?;
    println!("fit: {:.3} e^(-{:.4} t) + {:.4}\n", fit.amplitude, fit.rate, fit.offset);

    println!("  power (µW)   r_ion (s⁻¹)");
    let mut series = Vec::new();
    for p in log_space(1.0, 1000.0, 7) {
        let r = reduce_four_level(&FourLevelParams {
            g12: 0.03 * p,
            g21: 83.0,
            g23: 1e-5 * p,
            g34: 0.01 * p,
            g43: 50.0,
            g41: 1e-5 * p,
        })?;
        println!("  {p:>10.1}   {:.4e}", r.rates.r_ion);
        series.push((p, r.rates.r_ion));
    }
    let law = fit_power_law(&series[..4])?;
    println!(
        "\nlow-power fit r = a p² + b p: a = {:.3e}, b = {:.3e}, slope at 10 µW = {:.3}",
        law.a,
        law.b,
        law.log_slope(10.0)
    );
    Ok(())
}
