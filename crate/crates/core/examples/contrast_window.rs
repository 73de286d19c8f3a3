//! Readout contrast and SNR against the integration window, and the
//! window that maximizes contrast.
//!
//! ```text
//! cargo run --example contrast_window
//! ```

use nvpd::contrast::{compute_contrast, default_window_grid, optimize_window, ReadoutWindow};
use nvpd::reference;

fn main() -> nvpd::error::Result<()> {
    let collection = 0.02;
    for (label, p) in [("NV 17", reference::nv17()), ("NV 91", reference::nv91())] {
        println!("{label}");
        println!("  window (ns)   C_ESR    SNR");
        for end in [50.0, 100.0, 200.0, 300.0, 500.0, 1000.0, 3000.0] {
            let r = compute_contrast(&p, ReadoutWindow::new(end)?, collection)?;
            println!("  {end:>10.0}   {:.4}  {:.3}", r.c_esr, r.snr);
        }
        let best = optimize_window(&p, &default_window_grid(), collection)?;
        println!(
            "  best: C_ESR {:.4} with a {:.1} ns window (P_NV0 {:.3})\n",
            best.c_esr, best.window.end_ns, best.p_nv0
        );
    }
    Ok(())
}
