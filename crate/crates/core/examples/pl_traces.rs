//! Normalized PL after the readout pulse switches on, for both spin
//! preparations at three powers, with the NV 17 optical rates scaled
//! linearly in power.
//!
//! ```text
//! cargo run --example pl_traces
//! ```

use nvpd::photophysics::{pl_trace, readout_initial_state, PowerScaling, SpinInit};
use nvpd::reference;

fn main() -> nvpd::error::Result<()> {
    let base = reference::nv17();
    let scaling = PowerScaling::linear_through(&base, 660.0);
    let intrinsics = base.intrinsics();
    let times: Vec<f64> = (0..=40).map(|k| k as f64 * 25.0).collect();

    for power in [330.0, 450.0, 660.0] {
        let p = intrinsics.at_power(&scaling, power)?;
        let ms0 = pl_trace(&p, &readout_initial_state(&p, SpinInit::Ms0)?, &times)?;
        let ms1 = pl_trace(&p, &readout_initial_state(&p, SpinInit::Ms1)?, &times)?;
        let area: f64 = ms0.values.iter().zip(&ms1.values).map(|(a, b)| (a - b) * 25.0).sum();
        println!("{power} µW  (Γ_532 = {:.1} MHz, area between curves ≈ {area:.1} ns)", p.gamma_532);
        println!("   t (ns)   m_s=0   m_s=±1");
        for k in (0..times.len()).step_by(4) {
            println!("  {:>7.0}  {:.4}  {:.4}", times[k], ms0.values[k], ms1.values[k]);
        }
        println!();
    }
    Ok(())
}
