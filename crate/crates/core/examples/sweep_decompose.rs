//! Contrast over a Γ_ion × Γ_rec grid, the contrast-versus-P_NV⁰ envelope,
//! and the split of the contrast loss into static and dynamic parts for an
//! NV 91-like point.
//!
//! ```text
//! cargo run --release --example sweep_decompose
//! ```

use nvpd::contrast::{calibrate_lifetime_split, contrast_vs_pnv0, decompose, default_sweep, default_window_grid};
use nvpd::reference;

fn main() -> nvpd::error::Result<()> {
    let row = reference::full_model('F', 91).expect("tabulated row");
    // Tabulated lifetimes are rounded; nudge them to the reported contrast.
    let cal = calibrate_lifetime_split(&row.lifetimes(), 0.174, 0.5, &default_window_grid(), 1.0)?;
    println!("ES0/ES1 lifetimes {:.3}/{:.3} ns give C_ESR {:.4}", cal.es0_tau_ns, cal.es1_tau_ns, cal.report.c_esr);

    let grid = default_sweep(&cal.params, 1.0)?;
    let d = decompose(&cal.params, &grid)?;
    println!("P_NV0             {:.3}", d.p_nv0);
    println!("C_ESR actual      {:.4}", d.c_esr_actual);
    println!("C_ESR no charge   {:.4}", d.c_esr_no_charge);
    println!("best at same P    {:.4}  ({} grid points in band)", d.c_esr_best_at_same_pnv0, d.points_in_band);
    println!("Δ static          {:.4}", d.delta_static);
    println!("Δ dynamic         {:.4}", d.delta_dynamic);

    println!("\nupper envelope of C_ESR against P_NV0:");
    let s = contrast_vs_pnv0(&grid);
    for b in s.bins.iter().step_by(10) {
        println!("  P_NV0 {:.2}-{:.2}  envelope {:.4}", b.p_lo, b.p_hi, b.envelope);
    }
    Ok(())
}
