use proptest::prelude::*;

use nvpd::photophysics::{NvParams, PowerScaling, SpinInit};
use nvpd::pipeline::{
    fit_global, fit_no_charge, fit_pair, preprocess, synthesize, synthesize_bundle, FitConfig, Noise, PlTrace,
    RawTrace, SynthOptions, TraceModel,
};
use nvpd::reference;

const POWERS: [f64; 2] = [330.0, 660.0];

fn cfg() -> FitConfig {
    FitConfig { power_list: POWERS.to_vec(), multistart_grid: vec![0.01, 0.1], ..FitConfig::default() }
}

fn linear_model(base: &NvParams) -> TraceModel {
    TraceModel::Scaled { scaling: PowerScaling::linear_through(base, 660.0), intrinsics: base.intrinsics() }
}

fn raws(base: &NvParams, noise: Noise, seed: u64) -> Vec<RawTrace> {
    let opts = SynthOptions { noise, seed, ..SynthOptions::default() };
    synthesize_bundle(&linear_model(base), &POWERS, &opts).unwrap()
}

fn processed(raws: &[RawTrace], cfg: &FitConfig) -> Vec<PlTrace> {
    raws.iter().map(|r| preprocess(r, cfg).unwrap()).collect()
}

fn scaled(r: &RawTrace, c: f64) -> RawTrace {
    RawTrace { counts: r.counts.iter().map(|v| v * c).collect(), ..r.clone() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn preprocessing_is_idempotent(seed in 0u64..1000, power in 100.0f64..900.0, ms1 in any::<bool>()) {
        let spin = if ms1 { SpinInit::Ms1 } else { SpinInit::Ms0 };
        let opts = SynthOptions { seed, ..SynthOptions::default() };
        let raw = synthesize(&linear_model(&reference::nv91()), power, spin, &opts, 0).unwrap();
        let once = preprocess(&raw, &FitConfig::default()).unwrap();
        let again_cfg = FitConfig { smoothing_block: 1, ..FitConfig::default() };
        let twice = preprocess(&once.to_raw(), &again_cfg).unwrap();
        prop_assert_eq!(twice.onset_index, 0);
        prop_assert_eq!(twice.len(), once.len());
        prop_assert_eq!(&twice.times_ns, &once.times_ns);
        for (a, b) in twice.values.iter().zip(&once.values) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn preprocessing_ignores_count_scale(seed in 0u64..1000, c in prop::sample::select(vec![1e-3, 0.5, 7.0, 1e3])) {
        let opts = SynthOptions { seed, ..SynthOptions::default() };
        let raw = synthesize(&linear_model(&reference::nv17()), 450.0, SpinInit::Ms0, &opts, 0).unwrap();
        let a = preprocess(&raw, &FitConfig::default()).unwrap();
        let b = preprocess(&scaled(&raw, c), &FitConfig::default()).unwrap();
        prop_assert_eq!(a.onset_index, b.onset_index);
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn noisy_onset_within_one_block(seed in 0u64..1000, dark in 150usize..400, ms1 in any::<bool>()) {
        let spin = if ms1 { SpinInit::Ms1 } else { SpinInit::Ms0 };
        let model = linear_model(&reference::nv91());
        let clean = SynthOptions { dark_bins: dark, noise: Noise::None, ..SynthOptions::default() };
        let noisy = SynthOptions { noise: Noise::Poisson, seed, ..clean };
        let cfg = FitConfig::default();
        let truth = preprocess(&synthesize(&model, 660.0, spin, &clean, 0).unwrap(), &cfg).unwrap();
        let got = preprocess(&synthesize(&model, 660.0, spin, &noisy, 0).unwrap(), &cfg).unwrap();
        prop_assert!(truth.onset_index.abs_diff(got.onset_index) <= 1);
        let dark_blocks = dark / cfg.smoothing_block;
        prop_assert!(truth.onset_index >= dark_blocks);
    }
}

#[test]
fn onset_follows_the_dark_prefix() {
    let cfg = FitConfig::default();
    let model = linear_model(&reference::nv91());
    for spin in SpinInit::BOTH {
        let onset = |dark: usize| {
            let opts = SynthOptions { dark_bins: dark, noise: Noise::None, ..SynthOptions::default() };
            preprocess(&synthesize(&model, 660.0, spin, &opts, 0).unwrap(), &cfg).unwrap().onset_index
        };
        let first = onset(200);
        for extra in 1..4 {
            assert_eq!(onset(200 + extra * cfg.smoothing_block), first + extra);
        }
        // The peak follows the optical pumping time, a few blocks after light-on.
        assert!((2..=6).contains(&first), "{spin:?}: onset block {first}");
    }
}

#[test]
fn fit_ignores_count_scale() {
    let cfg = cfg();
    let r = raws(&reference::nv91(), Noise::None, 0);
    let a = fit_no_charge(&processed(&r, &cfg), &cfg).unwrap();
    let big: Vec<RawTrace> = r.iter().map(|t| scaled(t, 1e3)).collect();
    let b = fit_no_charge(&processed(&big, &cfg), &cfg).unwrap();
    for (x, y) in a.params.to_array().iter().zip(b.params.to_array()) {
        assert!((x - y).abs() <= 1e-6 * x.abs().max(1e-9), "{x} vs {y}");
    }
    assert!((a.cost - b.cost).abs() <= 1e-9 * a.cost.max(1e-12));
}

#[test]
fn fits_are_reproducible_across_thread_counts() {
    let cfg = cfg();
    let traces = processed(&raws(&reference::nv91(), Noise::Poisson, 5), &cfg);
    let run = |n: usize| {
        rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(|| fit_global(&traces, &cfg).unwrap())
    };
    let a = run(1);
    let b = run(3);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a, fit_global(&traces, &cfg).unwrap());
}

#[test]
fn history_never_rises() {
    let cfg = cfg();
    let traces = processed(&raws(&reference::nv17(), Noise::Poisson, 2), &cfg);
    let (full, nc) = fit_pair(&traces, &cfg).unwrap();
    for f in [&full, &nc] {
        assert!(!f.history.is_empty());
        assert!(f.history.windows(2).all(|w| w[1] <= w[0]), "{:?}", f.history);
        assert!((f.history.last().unwrap() - f.cost).abs() <= 1e-12 * f.cost);
    }
    assert!(full.cost <= nc.cost + 1e-12);
    assert_eq!(full.starts.len(), cfg.multistart_grid.len() + 1);
}

#[test]
fn charge_free_data_gives_matching_costs() {
    let cfg = cfg();
    let base = reference::nv91().without_charge_conversion();
    let traces = processed(&raws(&base, Noise::Poisson, 9), &cfg);
    let (full, nc) = fit_pair(&traces, &cfg).unwrap();
    assert!(full.cost <= nc.cost + 1e-12);
    assert!(nc.cost - full.cost <= 0.1 * nc.cost, "full {} vs no-charge {}", full.cost, nc.cost);
}

#[test]
fn ionization_improves_nv91_like_fits() {
    let cfg = cfg();
    let traces = processed(&raws(&reference::nv91(), Noise::None, 0), &cfg);
    let (full, nc) = fit_pair(&traces, &cfg).unwrap();
    assert!(nc.cost > 10.0 * full.cost, "full {} vs no-charge {}", full.cost, nc.cost);
}

#[test]
fn nv10_like_reduced_model_converges() {
    let cfg = cfg();
    let base = reference::full_model('A', 10).unwrap().params().unwrap();
    let traces = processed(&raws(&base, Noise::Poisson, 4), &cfg);
    let nc = fit_no_charge(&traces, &cfg).unwrap();
    assert!(nc.cost.is_finite() && nc.cost < 1e-3, "cost {}", nc.cost);
    assert!(nc.starts[0].converged);
}
