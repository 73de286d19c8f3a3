//! Steady-state populations under green illumination for the tabulated
//! fits, and how the NV⁰ share moves with the charge-conversion rates.
//!
//! ```text
//! cargo run --example steady_state
//! ```

use nvpd::photophysics::{charge_split, Level, RateMatrix};
use nvpd::{log_space, reference};

fn main() -> nvpd::error::Result<()> {
    for (label, p) in [("NV 17", reference::nv17()), ("NV 91", reference::nv91())] {
        let ss = RateMatrix::build(&p)?.steady_state()?;
        println!("{label}: Γ_532 = {} MHz, Γ_ion = {} MHz, Γ_rec = {} MHz", p.gamma_532, p.gamma_ion, p.gamma_rec);
        for level in Level::ALL {
            println!("  {:>7}  {:.5}", level.label(), ss.get(level));
        }
        println!("  P_NV0 = {:.4}\n", ss.p_nv0());
    }

    let base = reference::nv91();
    println!("NV 91 with Γ_rec fixed at {} MHz:", base.gamma_rec);
    println!("  Γ_ion (MHz)   P_NV0");
    for ion in log_space(0.1, 100.0, 7) {
        let p = charge_split(&base.with_charge_rates(ion, base.gamma_rec))?;
        println!("  {ion:>10.3}   {p:.4}");
    }
    Ok(())
}
