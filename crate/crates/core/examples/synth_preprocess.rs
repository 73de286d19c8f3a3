//! A synthetic photon-count histogram and the preprocessing that turns it
//! into an onset-aligned, tail-normalized PL trace.
//!
//! ```text
//! cargo run --example synth_preprocess [seed]
//! ```

use nvpd::photophysics::{PowerScaling, SpinInit};
use nvpd::pipeline::{preprocess, synthesize, FitConfig, SynthOptions, TraceModel};
use nvpd::reference;

fn main() -> nvpd::error::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let base = reference::nv91();
    let model =
        TraceModel::Scaled { scaling: PowerScaling::linear_through(&base, 660.0), intrinsics: base.intrinsics() };
    let opts = SynthOptions { seed, ..SynthOptions::default() };
    let cfg = FitConfig::default();

    for spin in SpinInit::BOTH {
        let raw = synthesize(&model, 660.0, spin, &opts, 0)?;
        let total: f64 = raw.counts.iter().sum();
        let t = preprocess(&raw, &cfg)?;
        println!(
            "{}: {} bins of {} ps, {total:.3e} counts; onset at block {}, {} samples of {} ns",
            spin.label(),
            raw.counts.len(),
            raw.bin_width_ps,
            t.onset_index,
            t.len(),
            t.sample_ns
        );
        let line: Vec<String> = t.values.iter().step_by(20).map(|v| format!("{v:.3}")).collect();
        println!("  every 20th sample: {}", line.join(" "));
    }
    Ok(())
}
