//! OD-ESR contrast and shot-noise SNR from the seven-level model, readout
//! window optimization, and charge-rate sweeps.
//!
//! `α_i` is the expected number of detected photons during the readout
//! window for spin initialization `i`:
//! `α_i = η ∫₀^T PL_i(t) dt`, with PL in photons per µs and `η` the photon
//! collection efficiency. `C = (α₀ − α₁)/α₀` does not depend on `η`; the SNR
//! `(α₀ − α₁)/√(α₀ + α₁)` scales as `√η`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::log_space;
use crate::photophysics::{
    charge_split, pl_weights, readout_initial_state, LifetimeParams, NvParams, RateMatrix, SpinInit, StateVector,
    MHZ_NS,
};

/// Width of the P_NV⁰ matching band and of the scatter bins.
pub const PNV0_BAND: f64 = 0.01;

/// Readout interval `[start, end]`; the start is the pulse onset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutWindow {
    pub start_ns: f64,
    pub end_ns: f64,
}

impl ReadoutWindow {
    pub fn new(end_ns: f64) -> Result<Self> {
        if !(end_ns.is_finite() && end_ns > 0.0) {
            return Err(Error::InvalidParameter {
                name: "window end",
                value: end_ns,
                reason: "must be positive and finite",
            });
        }
        Ok(ReadoutWindow { start_ns: 0.0, end_ns })
    }
}

/// 50 window ends, log-spaced from 50 ns to 5 µs.
pub fn default_window_grid() -> Vec<f64> {
    log_space(50.0, 5000.0, 50)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContrastReport {
    pub alpha_0: f64,
    pub alpha_1: f64,
    pub c_esr: f64,
    pub snr: f64,
    pub window: ReadoutWindow,
    pub p_nv0: f64,
}

/// Precomputed pieces shared by every window of one parameter set.
struct Readout {
    r_ns: linalg::Matrix7,
    w: linalg::Vector7,
    init0: StateVector,
    init1: StateVector,
    collection: f64,
}

impl Readout {
    fn new(params: &NvParams, init0: StateVector, init1: StateVector, collection: f64) -> Result<Self> {
        if !(collection.is_finite() && collection > 0.0) {
            return Err(Error::InvalidParameter {
                name: "collection efficiency",
                value: collection,
                reason: "must be positive",
            });
        }
        let rm = RateMatrix::build(params)?;
        Ok(Readout { r_ns: rm.per_ns(), w: pl_weights(params), init0, init1, collection })
    }

    fn for_params(params: &NvParams, collection: f64) -> Result<Self> {
        let init0 = readout_initial_state(params, SpinInit::Ms0)?;
        let init1 = readout_initial_state(params, SpinInit::Ms1)?;
        Self::new(params, init0, init1, collection)
    }

    fn report(&self, window: ReadoutWindow) -> Result<ContrastReport> {
        let (_, integral) =
            linalg::propagator_with_integral(&self.r_ns, window.end_ns).ok_or(Error::NonFinite("rate matrix"))?;
        let row = integral.transpose() * self.w;
        let alpha_0 = self.collection * MHZ_NS * row.dot(self.init0.as_vector());
        let alpha_1 = self.collection * MHZ_NS * row.dot(self.init1.as_vector());
        if alpha_0 <= 0.0 {
            return Err(Error::CannotNormalize);
        }
        Ok(ContrastReport {
            alpha_0,
            alpha_1,
            c_esr: (alpha_0 - alpha_1) / alpha_0,
            snr: (alpha_0 - alpha_1) / (alpha_0 + alpha_1).sqrt(),
            window,
            p_nv0: self.init0.p_nv0(),
        })
    }

    fn best_window(&self, end_grid: &[f64]) -> Result<ContrastReport> {
        check_window_grid(end_grid)?;
        let mut best: Option<ContrastReport> = None;
        for &end in end_grid {
            let r = self.report(ReadoutWindow::new(end)?)?;
            if best.is_none_or(|b| r.c_esr > b.c_esr) {
                best = Some(r);
            }
        }
        Ok(best.expect("grid is nonempty"))
    }
}

fn check_window_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidTimes("window grid is empty"));
    }
    if grid.iter().any(|&t| !(t.is_finite() && t > 0.0)) {
        return Err(Error::InvalidTimes("window ends must be positive"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidTimes("window grid must be strictly ascending"));
    }
    Ok(())
}

fn check_rate_grid(name: &'static str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config(format!("{name} grid is empty")));
    }
    if grid.iter().any(|&g| !(g.is_finite() && g >= 0.0)) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(format!("{name} grid must be non-negative and strictly ascending")));
    }
    Ok(())
}

/// Contrast for the standard readout states (charge split from the
/// illuminated steady state, spin polarized into m_s = 0 or ±1).
pub fn compute_contrast(params: &NvParams, window: ReadoutWindow, collection: f64) -> Result<ContrastReport> {
    Readout::for_params(params, collection)?.report(window)
}

/// Contrast for explicit initial states.
pub fn contrast_from_states(
    params: &NvParams,
    init0: &StateVector,
    init1: &StateVector,
    window: ReadoutWindow,
    collection: f64,
) -> Result<ContrastReport> {
    Readout::new(params, *init0, *init1, collection)?.report(window)
}

/// Report at the window end maximizing contrast; ties go to the shorter
/// window.
pub fn optimize_window(params: &NvParams, end_grid: &[f64], collection: f64) -> Result<ContrastReport> {
    Readout::for_params(params, collection)?.best_window(end_grid)
}

/// Window-optimized contrast over a Γ_ion × Γ_rec grid. Matrices are
/// row-major with rows following `ion_grid` and columns `rec_grid`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub base: NvParams,
    pub ion_grid: Vec<f64>,
    pub rec_grid: Vec<f64>,
    pub window_grid: Vec<f64>,
    pub collection: f64,
    pub c_esr: Vec<Vec<f64>>,
    pub snr: Vec<Vec<f64>>,
    pub p_nv0: Vec<Vec<f64>>,
    pub window_end_ns: Vec<Vec<f64>>,
}

impl SweepResult {
    /// `(Γ_ion, Γ_rec, report)` for every grid point, row-major.
    pub fn cells(&self) -> impl Iterator<Item = (f64, f64, f64, f64)> + '_ {
        self.ion_grid.iter().enumerate().flat_map(move |(i, &ion)| {
            self.rec_grid.iter().enumerate().map(move |(j, &rec)| (ion, rec, self.p_nv0[i][j], self.c_esr[i][j]))
        })
    }
}

pub fn sweep_grid(
    base: &NvParams,
    ion_grid: &[f64],
    rec_grid: &[f64],
    window_grid: &[f64],
    collection: f64,
) -> Result<SweepResult> {
    base.validate()?;
    check_rate_grid("gamma_ion", ion_grid)?;
    check_rate_grid("gamma_rec", rec_grid)?;
    check_window_grid(window_grid)?;
    let nr = rec_grid.len();
    let reports: Vec<ContrastReport> = (0..ion_grid.len() * nr)
        .into_par_iter()
        .map(|k| {
            let p = base.with_charge_rates(ion_grid[k / nr], rec_grid[k % nr]);
            optimize_window(&p, window_grid, collection)
        })
        .collect::<Result<_>>()?;
    let matrix = |f: fn(&ContrastReport) -> f64| -> Vec<Vec<f64>> {
        reports.chunks(nr).map(|row| row.iter().map(f).collect()).collect()
    };
    Ok(SweepResult {
        base: *base,
        ion_grid: ion_grid.to_vec(),
        rec_grid: rec_grid.to_vec(),
        window_grid: window_grid.to_vec(),
        collection,
        c_esr: matrix(|r| r.c_esr),
        snr: matrix(|r| r.snr),
        p_nv0: matrix(|r| r.p_nv0),
        window_end_ns: matrix(|r| r.window.end_ns),
    })
}

/// 40 × 40 log-spaced sweep over 1e-3..1e2 MHz with the default windows.
pub fn default_sweep(base: &NvParams, collection: f64) -> Result<SweepResult> {
    let g = log_space(1e-3, 1e2, 40);
    sweep_grid(base, &g, &g, &default_window_grid(), collection)
}

/// Split of the contrast loss into a part set by the NV⁰ population and a
/// part set by how fast the charge state converts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Decomposition {
    pub p_nv0: f64,
    pub c_esr_actual: f64,
    pub c_esr_no_charge: f64,
    pub c_esr_best_at_same_pnv0: f64,
    pub delta_static: f64,
    pub delta_dynamic: f64,
    /// Grid point attaining the best contrast, or `None` if the base point
    /// itself is best.
    pub best_point: Option<(f64, f64)>,
    pub points_in_band: usize,
}

/// The base point competes with the grid points inside the band, so
/// `delta_dynamic ≥ 0` always holds.
pub fn decompose(base: &NvParams, grid: &SweepResult) -> Result<Decomposition> {
    let actual = optimize_window(base, &grid.window_grid, grid.collection)?;
    let no_charge = optimize_window(&base.without_charge_conversion(), &grid.window_grid, grid.collection)?;
    let p = actual.p_nv0;
    let (lo, hi) = (p - PNV0_BAND, p + PNV0_BAND);
    let mut best = actual.c_esr;
    let mut best_point = None;
    let mut in_band = 0;
    for (ion, rec, pg, cg) in grid.cells() {
        if (pg - p).abs() <= PNV0_BAND {
            in_band += 1;
            if cg > best {
                best = cg;
                best_point = Some((ion, rec));
            }
        }
    }
    if in_band == 0 {
        return Err(Error::EmptyBand { lo, hi });
    }
    Ok(Decomposition {
        p_nv0: p,
        c_esr_actual: actual.c_esr,
        c_esr_no_charge: no_charge.c_esr,
        c_esr_best_at_same_pnv0: best,
        delta_static: no_charge.c_esr - best,
        delta_dynamic: best - actual.c_esr,
        best_point,
        points_in_band: in_band,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScatterPoint {
    pub gamma_ion: f64,
    pub gamma_rec: f64,
    pub p_nv0: f64,
    pub c_esr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeBin {
    pub p_lo: f64,
    pub p_hi: f64,
    /// Largest contrast among points in this bin.
    pub bin_max: f64,
    /// Largest contrast among points in this or any higher-P_NV⁰ bin.
    pub envelope: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContrastScatter {
    pub points: Vec<ScatterPoint>,
    /// Nonempty bins only, ascending in P_NV⁰.
    pub bins: Vec<EnvelopeBin>,
}

fn bin_index(p: f64) -> usize {
    let nbins = (1.0 / PNV0_BAND).round() as usize;
    ((p / PNV0_BAND).floor().max(0.0) as usize).min(nbins - 1)
}

/// Contrast against NV⁰ population with the non-increasing upper envelope.
pub fn contrast_vs_pnv0(grid: &SweepResult) -> ContrastScatter {
    let points: Vec<ScatterPoint> = grid
        .cells()
        .map(|(gamma_ion, gamma_rec, p_nv0, c_esr)| ScatterPoint { gamma_ion, gamma_rec, p_nv0, c_esr })
        .collect();
    let nbins = (1.0 / PNV0_BAND).round() as usize;
    let mut max = vec![f64::NEG_INFINITY; nbins];
    let mut count = vec![0usize; nbins];
    for pt in &points {
        let b = bin_index(pt.p_nv0);
        max[b] = max[b].max(pt.c_esr);
        count[b] += 1;
    }
    let mut bins = Vec::new();
    let mut running = f64::NEG_INFINITY;
    for b in (0..nbins).rev() {
        if count[b] == 0 {
            continue;
        }
        running = running.max(max[b]);
        bins.push(EnvelopeBin {
            p_lo: b as f64 * PNV0_BAND,
            p_hi: (b + 1) as f64 * PNV0_BAND,
            bin_max: max[b],
            envelope: running,
            count: count[b],
        });
    }
    bins.reverse();
    ContrastScatter { points, bins }
}

/// Γ_rec giving steady-state NV⁰ population `target` at fixed Γ_ion.
pub fn rec_for_pnv0(base: &NvParams, gamma_ion: f64, target: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidParameter {
            name: "target P_NV0",
            value: target,
            reason: "must lie strictly inside (0, 1)",
        });
    }
    let p_at = |rec: f64| charge_split(&base.with_charge_rates(gamma_ion, rec));
    // P_NV0 falls monotonically with Γ_rec.
    let (mut lo, mut hi) = (-12.0f64, 12.0f64);
    if p_at(lo.exp())? < target || p_at(hi.exp())? > target {
        return Err(Error::InvalidParameter {
            name: "target P_NV0",
            value: target,
            reason: "not reachable at this ionization rate",
        });
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if p_at(mid.exp())? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LifetimeCalibration {
    pub params: NvParams,
    pub es0_tau_ns: f64,
    pub es1_tau_ns: f64,
    /// `τ₀ − τ₀,tab`; the ES₁ lifetime moves by the opposite amount.
    pub shift_ns: f64,
    pub report: ContrastReport,
}

/// Moves the ES₀ and ES₁ lifetimes in opposite directions by up to
/// `max_shift_ns` so that the window-optimized contrast equals `target`.
///
/// Tabulated lifetimes are rounded to the nanosecond and contrast is
/// steep in them; this recovers a parameter point consistent with a
/// separately reported contrast without touching any other rate.
pub fn calibrate_lifetime_split(
    lifetimes: &LifetimeParams,
    target: f64,
    max_shift_ns: f64,
    window_grid: &[f64],
    collection: f64,
) -> Result<LifetimeCalibration> {
    let at = |d: f64| -> Result<(NvParams, ContrastReport)> {
        let l =
            LifetimeParams { es0_tau_ns: lifetimes.es0_tau_ns + d, es1_tau_ns: lifetimes.es1_tau_ns - d, ..*lifetimes };
        let p = NvParams::from_lifetimes(&l)?;
        let r = optimize_window(&p, window_grid, collection)?;
        Ok((p, r))
    };
    let (mut lo, mut hi) = (-max_shift_ns, max_shift_ns);
    let c_lo = at(lo)?.1.c_esr;
    let c_hi = at(hi)?.1.c_esr;
    if !(c_lo <= target && target <= c_hi) {
        return Err(Error::InvalidParameter {
            name: "target contrast",
            value: target,
            reason: "outside the range reachable by the lifetime shift",
        });
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if at(mid)?.1.c_esr < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let shift = 0.5 * (lo + hi);
    let (params, report) = at(shift)?;
    Ok(LifetimeCalibration {
        params,
        es0_tau_ns: lifetimes.es0_tau_ns + shift,
        es1_tau_ns: lifetimes.es1_tau_ns - shift,
        shift_ns: shift,
        report,
    })
}
