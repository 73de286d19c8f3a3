//! Global fit of synthetic m_s = 0 and m_s = ±1 traces at several powers,
//! with and without charge conversion in the model.
//!
//! ```text
//! cargo run --release --example global_fit [seed]
//! ```
//!
//! Uses four powers to keep the run short; `FitConfig::default()` fits the
//! full eight-power set.

use nvpd::contrast::default_window_grid;
use nvpd::photophysics::PowerScaling;
use nvpd::pipeline::{
    fit_pair, preprocess, synthesize_bundle, FitConfig, FreeParams, PlTrace, SynthOptions, TraceModel,
};
use nvpd::reference;

fn main() -> nvpd::error::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let base = reference::nv91();
    let scaling = PowerScaling::linear_through(&base, 660.0);
    let model = TraceModel::Scaled { scaling, intrinsics: base.intrinsics() };
    let cfg = FitConfig {
        power_list: vec![220.0, 440.0, 660.0, 880.0],
        multistart_grid: vec![0.003, 0.03, 0.3],
        ..FitConfig::default()
    };
    let opts = SynthOptions { seed, ..SynthOptions::default() };
    let traces: Vec<PlTrace> = synthesize_bundle(&model, &cfg.power_list, &opts)?
        .iter()
        .map(|r| preprocess(r, &cfg))
        .collect::<Result<_, _>>()?;

    let (full, nc) = fit_pair(&traces, &cfg)?;
    println!("cost with charge conversion {:.3e}, without {:.3e}", full.cost, nc.cost);
    for s in &full.starts {
        println!("  start {:<22} cost {:.3e}  {} evaluations", s.label, s.cost, s.evaluations);
    }

    let truth = FreeParams::from_model(&scaling, &base.intrinsics()).to_array();
    println!("\n  parameter          fitted        true");
    for (i, name) in FreeParams::NAMES.iter().enumerate() {
        println!("  {name:<16} {:>11.4e} {:>11.4e}", full.params.to_array()[i], truth[i]);
    }
    for b in &full.active_bounds {
        println!("  at {:?} bound: {} = {}", b.side, b.parameter, b.value);
    }

    println!("\n  power   Γ_ion   Γ_rec   P_NV0   C_ESR");
    for d in full.derived(&default_window_grid())? {
        println!("  {:>5.0}  {:>6.2}  {:>6.2}  {:.3}  {:.4}", d.power_uw, d.gamma_ion, d.gamma_rec, d.p_nv0, d.c_esr);
    }
    Ok(())
}
