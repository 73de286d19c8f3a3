use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::model_curves_aligned;
use super::trace::PlTrace;
use super::{FitConfig, FreeParams, N_FREE};
use crate::contrast::optimize_window;
use crate::error::{Error, Result};
use crate::optimize::{levenberg_marquardt, nelder_mead, Bounds, LmOptions, NelderMeadOptions};
use crate::photophysics::{charge_split, Intrinsics, PowerScaling, SpinInit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// Eleven free parameters including charge conversion.
    Full,
    /// Ionization and recombination frozen at zero; NV⁰ levels inert.
    NoCharge,
}

/// Indices of β_ion, β_ion2, β_rec, β_rec2, Γ_ES,NV⁰.
const CHARGE_PARAMS: [usize; 5] = [1, 2, 3, 4, 6];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveFit {
    pub power_uw: f64,
    pub spin_init: SpinInit,
    pub cost: f64,
    /// Data minus model.
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundSide {
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveBound {
    pub parameter: String,
    pub side: BoundSide,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartLog {
    pub label: String,
    pub beta_ion_guess: Option<f64>,
    pub cost: f64,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedAtPower {
    pub power_uw: f64,
    pub gamma_532: f64,
    pub gamma_ion: f64,
    pub gamma_rec: f64,
    pub p_nv0: f64,
    pub c_esr: f64,
    pub window_end_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    pub params: FreeParams,
    /// Sum of squared residuals over every curve.
    pub cost: f64,
    pub curves: Vec<CurveFit>,
    pub active_bounds: Vec<ActiveBound>,
    /// Every local fit, in start order.
    pub starts: Vec<StartLog>,
    /// Best cost per iteration of the winning start.
    pub history: Vec<f64>,
    pub powers_uw: Vec<f64>,
}

impl FitResult {
    pub fn scaling(&self) -> PowerScaling {
        self.params.scaling()
    }

    pub fn intrinsics(&self) -> Intrinsics {
        self.params.intrinsics()
    }

    /// Per-power rates, charge split, and window-optimized contrast,
    /// computed from the fitted parameters.
    pub fn derived(&self, window_grid: &[f64]) -> Result<Vec<DerivedAtPower>> {
        let scaling = self.scaling();
        let intrinsics = self.intrinsics();
        self.powers_uw
            .iter()
            .map(|&p| {
                let params = intrinsics.at_power(&scaling, p)?;
                let report = optimize_window(&params, window_grid, 1.0)?;
                Ok(DerivedAtPower {
                    power_uw: p,
                    gamma_532: params.gamma_532,
                    gamma_ion: params.gamma_ion,
                    gamma_rec: params.gamma_rec,
                    p_nv0: charge_split(&params)?,
                    c_esr: report.c_esr,
                    window_end_ns: report.window.end_ns,
                })
            })
            .collect()
    }

    /// Derived values at the power with the highest contrast.
    pub fn at_max_contrast(&self, window_grid: &[f64]) -> Result<DerivedAtPower> {
        let d = self.derived(window_grid)?;
        d.into_iter()
            .reduce(|a, b| if b.c_esr > a.c_esr { b } else { a })
            .ok_or_else(|| Error::FitFailed("no powers".into()))
    }
}

/// Orders traces as (power, m_s = 0), (power, m_s = ±1) following the
/// configured power list.
fn order_traces<'a>(traces: &'a [PlTrace], cfg: &FitConfig) -> Result<Vec<&'a PlTrace>> {
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs());
    let mut ordered = Vec::with_capacity(2 * cfg.power_list.len());
    let mut missing = Vec::new();
    for &p in &cfg.power_list {
        for spin in SpinInit::BOTH {
            let hits: Vec<&PlTrace> = traces.iter().filter(|t| t.spin_init == spin && same(t.power_uw, p)).collect();
            match hits.len() {
                0 => missing.push(format!("{p} uW {}", spin.label())),
                1 => ordered.push(hits[0]),
                _ => return Err(Error::Config(format!("duplicate traces for {p} uW {}", spin.label()))),
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::Config(format!("missing traces: {}", missing.join(", "))));
    }
    if let Some(t) = traces.iter().find(|t| !cfg.power_list.iter().any(|&p| same(p, t.power_uw))) {
        return Err(Error::Config(format!("trace at {} uW is not in power_list", t.power_uw)));
    }
    for t in &ordered {
        if t.len() < 2 {
            return Err(Error::InsufficientData { needed: 2, got: t.len() });
        }
    }
    Ok(ordered)
}

#[derive(Clone)]
struct Problem<'a> {
    /// Allow the model onset to move one block to meet the data.
    neighbours: bool,
    traces: Vec<&'a PlTrace>,
    cfg: &'a FitConfig,
    free: Vec<usize>,
    fixed: [f64; N_FREE],
    scale: [f64; N_FREE],
    lo: [f64; N_FREE],
    hi: [f64; N_FREE],
}

impl<'a> Problem<'a> {
    fn new(traces: Vec<&'a PlTrace>, cfg: &'a FitConfig, model: FitModel) -> Self {
        let mut fixed = cfg.initial.to_array();
        let free = match model {
            FitModel::Full => (0..N_FREE).collect(),
            FitModel::NoCharge => {
                for &i in &CHARGE_PARAMS {
                    if i != 6 {
                        fixed[i] = 0.0;
                    }
                }
                (0..N_FREE).filter(|i| !CHARGE_PARAMS.contains(i)).collect()
            }
        };
        Problem {
            neighbours: true,
            traces,
            cfg,
            free,
            fixed,
            scale: cfg.scale.to_array(),
            lo: cfg.lower.to_array(),
            hi: cfg.upper.to_array(),
        }
    }

    fn theta(&self, u: &[f64]) -> [f64; N_FREE] {
        let mut t = self.fixed;
        for (k, &i) in self.free.iter().enumerate() {
            t[i] = u[k] * self.scale[i];
        }
        t
    }

    fn coords(&self, theta: &[f64; N_FREE]) -> Vec<f64> {
        self.free.iter().map(|&i| theta[i].clamp(self.lo[i], self.hi[i]) / self.scale[i]).collect()
    }

    fn bounds(&self) -> Bounds {
        Bounds::new(
            self.free.iter().map(|&i| self.lo[i] / self.scale[i]).collect(),
            self.free.iter().map(|&i| self.hi[i] / self.scale[i]).collect(),
        )
    }

    fn curves(&self, theta: &[f64; N_FREE]) -> Result<Vec<Vec<f64>>> {
        let fp = FreeParams::from_array(*theta);
        fp.scaling().validate(&self.cfg.power_list)?;
        fp.intrinsics().validate()?;
        model_curves_aligned(&fp, &self.traces, self.cfg, self.neighbours)
    }

    fn residuals(&self, u: &[f64]) -> Option<Vec<f64>> {
        let curves = self.curves(&self.theta(u)).ok()?;
        let mut r = Vec::with_capacity(curves.iter().map(Vec::len).sum());
        for (t, m) in self.traces.iter().zip(&curves) {
            r.extend(t.values.iter().zip(m).map(|(d, m)| d - m));
        }
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    fn cost(&self, u: &[f64]) -> f64 {
        self.residuals(u).map(|r| r.iter().map(|v| v * v).sum()).unwrap_or(f64::INFINITY)
    }
}

struct LocalFit {
    theta: [f64; N_FREE],
    cost: f64,
    evaluations: usize,
    converged: bool,
    history: Vec<f64>,
}

/// Simplex descent followed by Levenberg–Marquardt from where it stopped.
fn descend(problem: &Problem, u0: &[f64]) -> (Vec<f64>, f64, usize, bool, Vec<f64>) {
    let opt = &problem.cfg.optimizer;
    let bounds = problem.bounds();
    let n = u0.len();
    let nm_opts = NelderMeadOptions {
        max_evaluations: opt.simplex_max_evaluations,
        x_tol: opt.simplex_x_tol,
        f_tol_abs: 1e-30,
        f_tol_rel: 1e-12,
        initial_step: vec![opt.simplex_step; n],
    };
    let nm = nelder_mead(|u| problem.cost(u), u0, &bounds, &nm_opts);
    let mut history = nm.history.clone();
    let mut best = (nm.x.clone(), nm.cost);
    let mut evaluations = nm.evaluations;
    let mut converged = nm.converged;
    if nm.cost.is_finite() {
        let lm_opts = LmOptions {
            max_iterations: opt.lm_max_iterations,
            f_tol: opt.lm_f_tol,
            cost_floor: 1e-30,
            x_tol: 1e-14,
            fd_step: opt.lm_fd_step,
        };
        if let Some(lm) = levenberg_marquardt(|u| problem.residuals(u), &nm.x, &bounds, &lm_opts) {
            evaluations += lm.evaluations;
            history.extend(lm.history.iter().skip(1).copied());
            converged = lm.converged;
            if lm.cost <= best.1 {
                best = (lm.x, lm.cost);
            }
        }
    }
    (best.0, best.1, evaluations, converged, history)
}

/// Local fit in two stages: first with the model onset pinned to the
/// threshold-then-peak rule, then polished with the one-block onset
/// freedom. Allowing the neighbours never raises the cost at a given point,
/// so the polish only improves on the first stage. `polish_only` skips the
/// first stage.
fn local_fit(problem: &Problem, theta0: &[f64; N_FREE], polish_only: bool) -> LocalFit {
    let mut u = problem.coords(theta0);
    let mut history = Vec::new();
    let mut evaluations = 0;
    if !polish_only {
        let pinned = Problem { neighbours: false, ..problem.clone() };
        let (x, cost, evals, _, hist) = descend(&pinned, &u);
        evaluations += evals;
        history = hist;
        if cost.is_finite() {
            u = x;
        }
    }
    let (x, cost, evals, converged, hist) = descend(problem, &u);
    evaluations += evals;
    // The polish starts no higher than the pinned stage ended.
    let skip = usize::from(!history.is_empty() && hist.first().is_some_and(|&c| c <= *history.last().unwrap()));
    history.extend(hist.into_iter().skip(skip));
    LocalFit { theta: problem.theta(&x), cost, evaluations, converged, history }
}

fn finish(problem: &Problem, model: FitModel, winner: &LocalFit, starts: Vec<StartLog>) -> Result<FitResult> {
    if !winner.cost.is_finite() {
        return Err(Error::FitFailed("no start produced a finite cost".into()));
    }
    let curves_model = problem.curves(&winner.theta)?;
    let curves: Vec<CurveFit> = problem
        .traces
        .iter()
        .zip(&curves_model)
        .map(|(t, m)| {
            let residuals: Vec<f64> = t.values.iter().zip(m).map(|(d, m)| d - m).collect();
            CurveFit {
                power_uw: t.power_uw,
                spin_init: t.spin_init,
                cost: residuals.iter().map(|v| v * v).sum(),
                residuals,
            }
        })
        .collect();
    let mut active_bounds = Vec::new();
    for &i in &problem.free {
        let v = winner.theta[i];
        let tol = 1e-9 * problem.scale[i];
        let side = if v - problem.lo[i] <= tol {
            Some(BoundSide::Lower)
        } else if problem.hi[i] - v <= tol {
            Some(BoundSide::Upper)
        } else {
            None
        };
        if let Some(side) = side {
            active_bounds.push(ActiveBound { parameter: FreeParams::NAMES[i].to_string(), side, value: v });
        }
    }
    Ok(FitResult {
        model,
        params: FreeParams::from_array(winner.theta),
        cost: curves.iter().map(|c| c.cost).sum(),
        curves,
        active_bounds,
        starts,
        history: winner.history.clone(),
        powers_uw: problem.cfg.power_list.clone(),
    })
}

fn log_entry(label: String, guess: Option<f64>, f: &LocalFit) -> StartLog {
    StartLog { label, beta_ion_guess: guess, cost: f.cost, evaluations: f.evaluations, converged: f.converged }
}

/// First minimum-cost entry, so ties go to the earliest start.
fn pick(fits: &[LocalFit]) -> usize {
    let mut best = 0;
    for (i, f) in fits.iter().enumerate() {
        if f.cost < fits[best].cost || (!fits[best].cost.is_finite() && f.cost.is_finite()) {
            best = i;
        }
    }
    best
}

/// Fit with ionization and recombination switched off.
pub fn fit_no_charge(traces: &[PlTrace], cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let problem = Problem::new(order_traces(traces, cfg)?, cfg, FitModel::NoCharge);
    let fit = local_fit(&problem, &problem.fixed, false);
    let log = vec![log_entry("no_charge".into(), None, &fit)];
    finish(&problem, FitModel::NoCharge, &fit, log)
}

fn fit_full(traces: &[PlTrace], cfg: &FitConfig, nested: Option<&FitResult>) -> Result<FitResult> {
    let problem = Problem::new(order_traces(traces, cfg)?, cfg, FitModel::Full);
    let mut seeds: Vec<(String, Option<f64>, [f64; N_FREE], bool)> = cfg
        .multistart_grid
        .iter()
        .map(|&g| {
            let mut t = cfg.initial.to_array();
            t[1] = g;
            (format!("beta_ion={g:e}"), Some(g), t, false)
        })
        .collect();
    if let Some(nc) = nested {
        seeds.push(("nested_no_charge".into(), None, nc.params.to_array(), true));
    }
    let fits: Vec<LocalFit> = seeds.par_iter().map(|(_, _, t, polish)| local_fit(&problem, t, *polish)).collect();
    let starts = seeds.iter().zip(&fits).map(|((label, guess, _, _), f)| log_entry(label.clone(), *guess, f)).collect();
    let best = pick(&fits);
    finish(&problem, FitModel::Full, &fits[best], starts)
}

/// Full-model fit over all β_ion starting guesses.
///
/// With `nested_start` the no-charge optimum is used as one more start, so
/// the result never costs more than [`fit_no_charge`].
pub fn fit_global(traces: &[PlTrace], cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    if cfg.nested_start {
        Ok(fit_pair(traces, cfg)?.0)
    } else {
        fit_full(traces, cfg, None)
    }
}

/// Full and no-charge fits sharing the no-charge optimum as a start.
pub fn fit_pair(traces: &[PlTrace], cfg: &FitConfig) -> Result<(FitResult, FitResult)> {
    cfg.validate()?;
    let nc = fit_no_charge(traces, cfg)?;
    let full = fit_full(traces, cfg, cfg.nested_start.then_some(&nc))?;
    Ok((full, nc))
}
