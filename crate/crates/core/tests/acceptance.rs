//! Acceptance criteria. Each test prints one PASS/FAIL line, then asserts.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nvpd::contrast::{calibrate_lifetime_split, decompose, default_sweep, default_window_grid, optimize_window};
use nvpd::kinetics::{
    evolve_charge, fit_exponential_decay, log_log_slope, reduce_four_level, split_rates, total_rate, ChargeState,
    DecayModel, FourLevelParams,
};
use nvpd::linalg::{Matrix7, Vector7};
use nvpd::photophysics::{charge_split, NvParams, PowerScaling, RateMatrix, StateVector};
use nvpd::pipeline::{
    fit_pair, preprocess, synthesize_bundle, FitConfig, FreeParams, Noise, PlTrace, SynthOptions, TraceModel,
};
use nvpd::{log_space, reference};

/// Written straight to stdout so the line shows even when output is captured.
fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let line = format!("ACCEPTANCE {id} {name}: {} | {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

#[test]
fn criterion_1_steady_state_nv91() {
    let t = Instant::now();
    let p = reference::nv91();
    let p_nv0 = charge_split(&p).unwrap();
    let el = t.elapsed();
    let pass = within(p_nv0, 0.49, 0.05) && el < Duration::from_secs(1);
    report(1, "steady-state P_NV0 (NV 91)", pass, &format!("P_NV0 = {p_nv0:.4} (target 0.49 +/- 0.05), {el:.2?}"));
    assert!(pass);
}

#[test]
fn criterion_2_window_optimized_contrast() {
    let t = Instant::now();
    let grid = default_window_grid();
    let c17 = optimize_window(&reference::nv17(), &grid, 1.0).unwrap();
    let c91 = optimize_window(&reference::nv91(), &grid, 1.0).unwrap();
    let el = t.elapsed();
    let pass = within(c17.c_esr, 0.38, 0.04) && within(c91.c_esr, 0.16, 0.03) && el < Duration::from_secs(10);
    report(
        2,
        "window-optimized contrast",
        pass,
        &format!(
            "NV17 C = {:.4} (0.38 +/- 0.04, window {:.0} ns); NV91 C = {:.4} (0.16 +/- 0.03, window {:.0} ns); {el:.2?}",
            c17.c_esr, c17.window.end_ns, c91.c_esr, c91.window.end_ns
        ),
    );
    assert!(pass);
}

struct DecompCase {
    label: &'static str,
    sample: char,
    nv: u32,
    peak: f64,
    no_charge: (f64, f64),
    d_static: (f64, f64),
    d_dynamic: (f64, f64),
}

#[test]
fn criterion_3_decomposition() {
    let cases = [
        DecompCase {
            label: "NV91",
            sample: 'F',
            nv: 91,
            peak: reference::F91_PEAK_CONTRAST,
            no_charge: (0.317, 0.03),
            d_static: (0.100, 0.02),
            d_dynamic: (0.042, 0.02),
        },
        DecompCase {
            label: "NV17",
            sample: 'A',
            nv: 17,
            peak: reference::A17_PEAK_CONTRAST,
            no_charge: (0.453, 0.02),
            d_static: (0.018, 0.01),
            d_dynamic: (0.015, 0.01),
        },
    ];
    let grid = default_window_grid();
    let mut pass = true;
    let mut detail = Vec::new();
    for c in &cases {
        let row = reference::full_model(c.sample, c.nv).unwrap();
        // Table lifetimes are rounded to 1 ns; shift ES0/ES1 oppositely by at
        // most 0.5 ns to land on the separately reported peak contrast.
        let cal = calibrate_lifetime_split(&row.lifetimes(), c.peak, 0.5, &grid, 1.0).unwrap();
        let t = Instant::now();
        let sweep = default_sweep(&cal.params, 1.0).unwrap();
        let sweep_time = t.elapsed();
        let d = decompose(&cal.params, &sweep).unwrap();
        let ok = within(d.c_esr_no_charge, c.no_charge.0, c.no_charge.1)
            && within(d.delta_static, c.d_static.0, c.d_static.1)
            && within(d.delta_dynamic, c.d_dynamic.0, c.d_dynamic.1)
            && sweep_time < Duration::from_secs(300);
        pass &= ok;
        detail.push(format!(
            "{} (lifetime shift {:+.3} ns, C = {:.3}): no-charge {:.4} ({} +/- {}), static {:.4} ({} +/- {}), dynamic {:.4} ({} +/- {}), 40x40 sweep {sweep_time:.2?}",
            c.label,
            cal.shift_ns,
            d.c_esr_actual,
            d.c_esr_no_charge,
            c.no_charge.0,
            c.no_charge.1,
            d.delta_static,
            c.d_static.0,
            c.d_static.1,
            d.delta_dynamic,
            c.d_dynamic.0,
            c.d_dynamic.1
        ));
    }
    report(3, "contrast-loss decomposition", pass, &detail.join("; "));
    assert!(pass);
}

#[test]
fn criterion_4_quadratic_power_law() {
    let t = Instant::now();
    // Linear-in-power pumping and conversion; intrinsic decays fixed.
    let at =
        |p: f64| FourLevelParams { g12: 0.03 * p, g21: 83.0, g23: 1e-5 * p, g34: 0.01 * p, g43: 50.0, g41: 1e-5 * p };
    let curve = |lo: f64, hi: f64| -> Vec<(f64, f64)> {
        log_space(lo, hi, 11).into_iter().map(|p| (p, total_rate(&reduce_four_level(&at(p)).unwrap().rates))).collect()
    };
    let low = log_log_slope(&curve(1.0, 10.0)).unwrap();
    let high = log_log_slope(&curve(1e5, 1e6)).unwrap();
    let el = t.elapsed();
    let pass = (1.9..=2.1).contains(&low) && (0.9..=1.1).contains(&high) && el < Duration::from_secs(1);
    report(
        4,
        "quadratic power law",
        pass,
        &format!("sub-saturation slope {low:.4} (1.9..2.1), saturated slope {high:.4} (0.9..1.1), {el:.2?}"),
    );
    assert!(pass);
}

fn truth_scaling() -> PowerScaling {
    let base = reference::nv91();
    let p = 660.0f64;
    PowerScaling {
        beta_532: base.gamma_532 / p,
        beta_ion: (base.gamma_ion + 5e-6 * p * p) / p,
        beta_ion2: -5e-6,
        beta_rec: (base.gamma_rec - 5e-6 * p * p) / p,
        beta_rec2: 5e-6,
    }
}

fn bundle(noise: Noise, seed: u64, cfg: &FitConfig) -> Vec<PlTrace> {
    let model = TraceModel::Scaled { scaling: truth_scaling(), intrinsics: reference::nv91().intrinsics() };
    let opts = SynthOptions { noise, seed, ..SynthOptions::default() };
    synthesize_bundle(&model, &cfg.power_list, &opts).unwrap().iter().map(|r| preprocess(r, cfg).unwrap()).collect()
}

#[test]
fn criterion_5_fit_closure() {
    let cfg = FitConfig::default();
    let scaling = truth_scaling();
    let truth = FreeParams::from_model(&scaling, &reference::nv91().intrinsics()).to_array();
    let mut pass = true;
    let mut detail = Vec::new();

    let t = Instant::now();
    let (full, nc) = fit_pair(&bundle(Noise::None, 0, &cfg), &cfg).unwrap();
    let el = t.elapsed();
    let worst = full.params.to_array().iter().zip(&truth).map(|(a, b)| ((a - b) / b).abs()).fold(0.0, f64::max);
    let ok = worst < 0.01 && full.cost < 1e-8 && full.cost <= nc.cost && el < Duration::from_secs(600);
    pass &= ok;
    detail.push(format!(
        "noiseless: worst parameter error {worst:.2e}, cost {:.2e} <= no-charge {:.2e}, {el:.1?}",
        full.cost, nc.cost
    ));

    for seed in [1, 2, 3] {
        let t = Instant::now();
        let (full, nc) = fit_pair(&bundle(Noise::Poisson, seed, &cfg), &cfg).unwrap();
        let el = t.elapsed();
        let fitted = full.scaling();
        let mut worst: f64 = 0.0;
        for &p in &cfg.power_list {
            let (_, ion, rec) = fitted.rates_at(p);
            let (_, ion0, rec0) = scaling.rates_at(p);
            worst = worst.max(((ion - ion0) / ion0).abs()).max(((rec - rec0) / rec0).abs());
        }
        let ok =
            worst < 0.2 && (1e-5..=1e-4).contains(&full.cost) && full.cost <= nc.cost && el < Duration::from_secs(600);
        pass &= ok;
        detail.push(format!(
            "Poisson seed {seed}: worst Gamma_ion/Gamma_rec error {worst:.3}, cost {:.2e} <= no-charge {:.2e}, {el:.1?}",
            full.cost, nc.cost
        ));
    }
    report(5, "fit closure", pass, &detail.join("; "));
    assert!(pass);
}

fn random_params(rng: &mut ChaCha8Rng) -> NvParams {
    let p_a1_to_gs1 = rng.random_range(0.0..1.0);
    let mut log_u = |lo: f64, hi: f64| (rng.random_range(lo.ln()..hi.ln())).exp();
    let gamma_532 = log_u(1.0, 100.0);
    NvParams {
        gamma_532,
        gamma_es: log_u(10.0, 100.0),
        gamma_es1_to_a1: log_u(1.0, 100.0),
        gamma_es0_to_a1: log_u(1.0, 100.0),
        gamma_a1: log_u(1.0, 50.0),
        p_a1_to_gs1,
        gamma_ion: log_u(0.1, 100.0),
        gamma_rec: log_u(0.1, 100.0),
        gamma_es_nv0: log_u(10.0, 300.0),
        gamma_532_nv0: gamma_532 / 3.0,
    }
}

fn random_state(rng: &mut ChaCha8Rng) -> StateVector {
    let mut v = [0.0; 7];
    for x in v.iter_mut() {
        *x = rng.random_range(0.0..1.0);
    }
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    StateVector::new(v).unwrap()
}

/// Classical fourth-order Runge-Kutta for dρ/dt = Rρ.
fn rk4(r: &Matrix7, init: &Vector7, t: f64, steps: usize) -> Vector7 {
    let h = t / steps as f64;
    let mut y = *init;
    for _ in 0..steps {
        let k1 = r * y;
        let k2 = r * (y + k1 * (h / 2.0));
        let k3 = r * (y + k2 * (h / 2.0));
        let k4 = r * (y + k3 * h);
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    y
}

#[test]
fn criterion_6_oracles() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20240611);
    let (mut e_int, mut e_ss, mut e_cons) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let p = random_params(&mut rng);
        let init = random_state(&mut rng);
        let rm = RateMatrix::build(&p).unwrap();
        let r = rm.per_ns();
        let horizon = rng.random_range(1.0..50.0);
        let fastest = (0..7).map(|i| -r[(i, i)]).fold(0.0, f64::max);
        let steps = ((horizon * fastest / 0.02).ceil() as usize).max(100);
        let explicit = rk4(&r, init.as_vector(), horizon, steps);
        let times = [horizon * 0.25, horizon, 1e9];
        let ev = rm.evolve(&init, &times).unwrap();
        e_int = e_int.max((ev[1].as_vector() - explicit).amax());
        let ss = rm.steady_state().unwrap();
        e_ss = e_ss.max((ev[2].as_vector() - ss.as_vector()).amax());
        for s in &ev {
            e_cons = e_cons.max((s.as_vector().sum() - 1.0).abs());
        }
    }
    let el = t.elapsed();
    let pass = e_int <= 1e-6 && e_ss <= 1e-6 && e_cons <= 1e-9 && el < Duration::from_secs(60);
    report(
        6,
        "oracle suites (1000 draws)",
        pass,
        &format!(
            "expm vs RK4 {e_int:.2e} (<= 1e-6), steady state vs t = 1e9 ns {e_ss:.2e} (<= 1e-6), conservation {e_cons:.2e} (<= 1e-9), {el:.2?}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_7_dark_decay_fits() {
    let mut worst: f64 = 0.0;
    for r_tot in log_space(3.3, 91.0, 12) {
        let rates = split_rates(r_tot, 0.6).unwrap();
        let init = ChargeState::from_minus(1.0).unwrap();
        let samples: Vec<(f64, f64)> = log_space(1e-3, 1.0, 60)
            .into_iter()
            .map(|t| (t, evolve_charge(&rates, &init, t).unwrap().rho_minus()))
            .collect();
        let fit = fit_exponential_decay(&samples, DecayModel::DecayToOffset).unwrap();
        worst = worst.max(((fit.rate - r_tot) / r_tot).abs());
    }
    let pass = worst <= 0.005;
    report(
        7,
        "dark-decay fitting",
        pass,
        &format!("worst relative r_tot error {worst:.2e} over 3.3..91 1/s (<= 5e-3)"),
    );
    assert!(pass);
}
