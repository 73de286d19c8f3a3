use proptest::prelude::*;

use nvpd::contrast::{
    compute_contrast, contrast_vs_pnv0, decompose, default_window_grid, optimize_window, rec_for_pnv0, sweep_grid,
    ReadoutWindow,
};
use nvpd::photophysics::{charge_split, NvParams};
use nvpd::{log_space, reference};

fn nv91_with(gamma_ion: f64, gamma_rec: f64) -> NvParams {
    reference::nv91().with_charge_rates(gamma_ion, gamma_rec)
}

#[test]
fn contrast_falls_along_fixed_population_contours() {
    let grid = default_window_grid();
    for target in [0.2, 0.45, 0.7] {
        let mut last = f64::INFINITY;
        let mut last_total = 0.0;
        for ion in log_space(0.5, 14.0, 12) {
            let rec = rec_for_pnv0(&reference::nv91(), ion, target).unwrap();
            let p = nv91_with(ion, rec);
            assert!((charge_split(&p).unwrap() - target).abs() < 1e-9);
            assert!(ion + rec > last_total);
            last_total = ion + rec;
            let c = optimize_window(&p, &grid, 1.0).unwrap().c_esr;
            assert!(c <= last + 1e-9, "P_NV0 {target}: C {c} after {last} at ion {ion}");
            last = c;
        }
    }
}

#[test]
fn nv91_envelope_vanishes_toward_full_nv0() {
    let rates = log_space(1e-3, 1e2, 25);
    let r = sweep_grid(&reference::nv91(), &rates, &rates, &default_window_grid(), 1.0).unwrap();
    let s = contrast_vs_pnv0(&r);
    let last = s.bins.last().unwrap();
    assert!(last.p_lo >= 0.9, "highest populated bin starts at {}", last.p_lo);
    assert!(last.envelope < 0.05, "envelope {} near full NV0", last.envelope);
    let first = s.bins.first().unwrap();
    assert!(first.envelope > 0.25);
    assert!(s.bins.windows(2).all(|w| w[1].envelope <= w[0].envelope));
}

#[test]
fn nv91_window_in_sanity_band() {
    let p = reference::nv91();
    let coarse = optimize_window(&p, &default_window_grid(), 1.0).unwrap().window.end_ns;
    let fine: Vec<f64> = (0..=400).map(|k| coarse * (0.9 + 0.0005 * k as f64)).collect();
    let best = optimize_window(&p, &fine, 1.0).unwrap().window.end_ns;
    assert!(best > fine[0] && best < fine[400], "optimum {best} at the refinement edge");
    assert!((100.0..=2000.0).contains(&best), "{best}");
}

#[test]
fn nv17_optimum_beats_fixed_300ns_window() {
    let p = reference::nv17();
    let best = optimize_window(&p, &default_window_grid(), 1.0).unwrap();
    let fixed = compute_contrast(&p, ReadoutWindow::new(300.0).unwrap(), 1.0).unwrap();
    assert!(best.c_esr >= fixed.c_esr);
}

#[test]
fn fitted_point_of_sweep_matches_direct_contrast() {
    let base = reference::nv91();
    let grid = default_window_grid();
    let r = sweep_grid(&base, &[base.gamma_ion], &[base.gamma_rec], &grid, 1.0).unwrap();
    let direct = optimize_window(&base, &grid, 1.0).unwrap();
    assert!((r.c_esr[0][0] - direct.c_esr).abs() < 1e-9);
    assert!((r.p_nv0[0][0] - direct.p_nv0).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn contrast_ignores_collection(ion in 0.0f64..50.0, rec in 0.0f64..50.0, end in 50.0f64..5000.0) {
        let p = nv91_with(ion, rec);
        let w = ReadoutWindow::new(end).unwrap();
        let one = compute_contrast(&p, w, 1.0).unwrap();
        prop_assert!(one.c_esr > -1.0 && one.c_esr < 1.0);
        prop_assert!((0.0..=1.0).contains(&one.p_nv0));
        for eta in [1e-3, 1e3] {
            let r = compute_contrast(&p, w, eta).unwrap();
            prop_assert!((r.c_esr - one.c_esr).abs() < 1e-12);
            prop_assert!((r.snr / one.snr - eta.sqrt()).abs() < 1e-9 * eta.sqrt());
        }
    }

    #[test]
    fn optimum_dominates_grid(ion in 0.0f64..50.0, rec in 0.01f64..50.0) {
        let p = nv91_with(ion, rec);
        let grid = log_space(50.0, 5000.0, 12);
        let best = optimize_window(&p, &grid, 1.0).unwrap();
        for &t in &grid {
            let c = compute_contrast(&p, ReadoutWindow::new(t).unwrap(), 1.0).unwrap().c_esr;
            prop_assert!(best.c_esr >= c);
        }
    }

    #[test]
    fn decomposition_adds_up(ion in 0.5f64..50.0, rec in 0.5f64..50.0) {
        let base = nv91_with(ion, rec);
        let rates = log_space(1e-2, 1e2, 8);
        let windows = log_space(50.0, 5000.0, 10);
        let g = sweep_grid(&base, &rates, &rates, &windows, 1.0).unwrap();
        if let Ok(d) = decompose(&base, &g) {
            prop_assert!(d.delta_static >= -1e-9 && d.delta_dynamic >= -1e-9);
            let lost = d.c_esr_no_charge - d.c_esr_actual;
            prop_assert!((lost - d.delta_static - d.delta_dynamic).abs() < 1e-9);
        }
    }

    #[test]
    fn envelope_never_rises(ion_hi in 1.0f64..100.0, rec_hi in 1.0f64..100.0) {
        let g = sweep_grid(
            &reference::nv91(),
            &log_space(1e-2, ion_hi, 6),
            &log_space(1e-2, rec_hi, 6),
            &log_space(50.0, 5000.0, 8),
            1.0,
        )
        .unwrap();
        let s = contrast_vs_pnv0(&g);
        prop_assert!(s.bins.windows(2).all(|w| w[1].envelope <= w[0].envelope));
        for b in &s.bins {
            let k = (b.p_lo / 0.01).round();
            let brute = s
                .points
                .iter()
                .filter(|p| (p.p_nv0 / 0.01).floor().min(99.0) >= k)
                .map(|p| p.c_esr)
                .fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(b.envelope, brute);
        }
    }
}
