use serde::Serialize;
use serde_json::json;

use super::config::{DecomposeConfig, FitRunConfig, KineticsConfig, SimulateConfig, SweepConfig, SynthConfig};
use super::{Command, Context};
use crate::contrast::{
    calibrate_lifetime_split, contrast_vs_pnv0, decompose as decompose_grid, optimize_window, sweep_grid,
    Decomposition, LifetimeCalibration, SweepResult,
};
use crate::error::{Error, Result};
use crate::io;
use crate::kinetics::{fit_exponential_decay, fit_power_law, split_rates, DecayModel, ExponentialFit, PowerLawFit};
use crate::photophysics::{pl_trace, readout_initial_state, NvParams};
use crate::pipeline::{
    fit_global, fit_no_charge, model_curves, preprocess, synthesize_bundle, FitModel, FitResult, PlTrace,
};

fn write_string_table(path: &std::path::Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut text = header.join(",");
    text.push('\n');
    for r in rows {
        text.push_str(&r.join(","));
        text.push('\n');
    }
    io::write_text(path, &text)
}

pub(crate) fn simulate(ctx: &Context, cfg: &SimulateConfig) -> Result<()> {
    if !(cfg.step_ns.is_finite() && cfg.step_ns > 0.0) {
        return Err(Error::InvalidParameter { name: "step_ns", value: cfg.step_ns, reason: "must be positive" });
    }
    if !(cfg.duration_ns.is_finite() && cfg.duration_ns >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "duration_ns",
            value: cfg.duration_ns,
            reason: "must be non-negative",
        });
    }
    let model = cfg.model.trace_model()?;
    let n = (cfg.duration_ns / cfg.step_ns).round() as usize;
    let times: Vec<f64> = (0..n).map(|k| k as f64 * cfg.step_ns).collect();
    let windows = cfg.window_grid.values();
    let mut outputs = Vec::new();
    let mut summary = Vec::new();
    for &p in &cfg.powers_uw {
        let params = model.params_at(p)?;
        for &spin in &cfg.spins {
            let init = readout_initial_state(&params, spin)?;
            let rows: Vec<Vec<f64>> = if times.is_empty() {
                Vec::new()
            } else {
                let tr = pl_trace(&params, &init, &times)?;
                (0..n).map(|k| vec![tr.times_ns[k], tr.values[k], tr.raw[k]]).collect()
            };
            let name = format!("trace_{}.csv", io::trace_stem(p, spin));
            io::write_table(&ctx.path(&name), &["time_ns", "pl", "pl_raw"], &rows)?;
            outputs.push(name);
        }
        let r = optimize_window(&params, &windows, cfg.collection)?;
        summary.push(vec![p, r.p_nv0, r.c_esr, r.snr, r.window.end_ns]);
    }
    io::write_table(&ctx.path("summary.csv"), &["power_uW", "p_nv0", "c_esr", "snr", "window_end_ns"], &summary)?;
    outputs.push("summary.csv".into());
    ctx.manifest(Command::Simulate, cfg, outputs, json!({ "model": model }))
}

pub(crate) fn synth(ctx: &Context, cfg: &SynthConfig) -> Result<()> {
    let mut cfg = cfg.clone();
    if let Some(s) = ctx.seed {
        cfg.options.seed = s;
    }
    let model = cfg.model.trace_model()?;
    let traces = synthesize_bundle(&model, &cfg.powers_uw, &cfg.options)?;
    let dir = ctx.path("traces");
    io::create_dir(&dir)?;
    let mut outputs = Vec::new();
    for t in &traces {
        let stem = io::trace_stem(t.power_uw, t.spin_init);
        io::write_raw_trace(&dir, &stem, t)?;
        outputs.push(format!("traces/{stem}.csv"));
        outputs.push(format!("traces/{stem}.json"));
    }
    ctx.manifest(Command::Synth, &cfg, outputs, json!({ "model": model }))
}

/// One row in the layout of the published fit tables, taken at the power
/// of maximum contrast.
#[derive(Debug, Clone, Serialize)]
struct SummaryRow {
    power_uw: f64,
    c_esr: f64,
    p_nv0: f64,
    gamma_532: f64,
    gamma_ion: f64,
    gamma_rec: f64,
    gamma_es: f64,
    gamma_es_nv0: f64,
    es0_tau_ns: f64,
    es1_tau_ns: f64,
    a1_tau_ns: f64,
    p_a1_to_gs1: f64,
    cost: f64,
}

const FULL_SUMMARY: [&str; 13] = [
    "power_uW",
    "c_esr",
    "p_nv0",
    "gamma_532",
    "gamma_ion",
    "gamma_rec",
    "gamma_es",
    "gamma_es_nv0",
    "es0_tau_ns",
    "es1_tau_ns",
    "a1_tau_ns",
    "p_a1_to_gs1",
    "cost",
];

const NO_CHARGE_SUMMARY: [&str; 9] =
    ["power_uW", "c_esr", "gamma_532", "gamma_es", "es0_tau_ns", "es1_tau_ns", "a1_tau_ns", "p_a1_to_gs1", "cost"];

fn summary_row(fit: &FitResult, windows: &[f64]) -> Result<SummaryRow> {
    let d = fit.at_max_contrast(windows)?;
    let params: NvParams = fit.intrinsics().at_power(&fit.scaling(), d.power_uw)?;
    let l = params.to_lifetimes();
    Ok(SummaryRow {
        power_uw: d.power_uw,
        c_esr: d.c_esr,
        p_nv0: d.p_nv0,
        gamma_532: d.gamma_532,
        gamma_ion: d.gamma_ion,
        gamma_rec: d.gamma_rec,
        gamma_es: params.gamma_es,
        gamma_es_nv0: params.gamma_es_nv0,
        es0_tau_ns: l.es0_tau_ns,
        es1_tau_ns: l.es1_tau_ns,
        a1_tau_ns: l.a1_tau_ns,
        p_a1_to_gs1: l.p_a1_to_gs1,
        cost: fit.cost,
    })
}

pub(crate) fn fit(ctx: &Context, cfg: &FitRunConfig) -> Result<()> {
    let raws = io::read_trace_dir(&cfg.traces_dir)?;
    if raws.is_empty() {
        return Err(Error::Config(format!(
            "{}: no traces (need `.csv` files with `.json` sidecars)",
            cfg.traces_dir.display()
        )));
    }
    let opts = &cfg.options;
    let traces: Vec<PlTrace> = raws.iter().map(|r| preprocess(r, opts)).collect::<Result<_>>()?;
    let result = if cfg.no_charge { fit_no_charge(&traces, opts)? } else { fit_global(&traces, opts)? };
    let windows = cfg.window_grid.values();
    let mut outputs = vec!["fit.json".to_string()];
    io::write_json(&ctx.path("fit.json"), &result)?;

    let starts: Vec<Vec<String>> = result
        .starts
        .iter()
        .map(|s| {
            vec![
                s.label.clone(),
                s.beta_ion_guess.map_or(String::new(), io::fmt_f64),
                io::fmt_f64(s.cost),
                s.evaluations.to_string(),
                s.converged.to_string(),
            ]
        })
        .collect();
    write_string_table(
        &ctx.path("starts.csv"),
        &["label", "beta_ion_guess", "cost", "evaluations", "converged"],
        &starts,
    )?;
    outputs.push("starts.csv".into());

    let derived = result.derived(&windows)?;
    let rows: Vec<Vec<f64>> = derived
        .iter()
        .map(|d| vec![d.power_uw, d.gamma_532, d.gamma_ion, d.gamma_rec, d.p_nv0, d.c_esr, d.window_end_ns])
        .collect();
    io::write_table(
        &ctx.path("derived.csv"),
        &["power_uW", "gamma_532", "gamma_ion", "gamma_rec", "p_nv0", "c_esr", "window_end_ns"],
        &rows,
    )?;
    outputs.push("derived.csv".into());

    let s = summary_row(&result, &windows)?;
    let (header, row): (&[&str], Vec<f64>) = match result.model {
        FitModel::Full => (
            &FULL_SUMMARY,
            vec![
                s.power_uw,
                s.c_esr,
                s.p_nv0,
                s.gamma_532,
                s.gamma_ion,
                s.gamma_rec,
                s.gamma_es,
                s.gamma_es_nv0,
                s.es0_tau_ns,
                s.es1_tau_ns,
                s.a1_tau_ns,
                s.p_a1_to_gs1,
                s.cost,
            ],
        ),
        FitModel::NoCharge => (
            &NO_CHARGE_SUMMARY,
            vec![
                s.power_uw,
                s.c_esr,
                s.gamma_532,
                s.gamma_es,
                s.es0_tau_ns,
                s.es1_tau_ns,
                s.a1_tau_ns,
                s.p_a1_to_gs1,
                s.cost,
            ],
        ),
    };
    io::write_table(&ctx.path("summary.csv"), header, &[row])?;
    outputs.push("summary.csv".into());

    let refs: Vec<&PlTrace> = traces.iter().collect();
    let curves = model_curves(&result.params, &refs, opts)?;
    io::create_dir(&ctx.path("curves"))?;
    for (t, m) in traces.iter().zip(&curves) {
        let name = format!("curves/{}.csv", io::trace_stem(t.power_uw, t.spin_init));
        io::write_model_vs_data(&ctx.path(&name), t, m)?;
        outputs.push(name);
    }
    ctx.manifest(
        Command::Fit { no_charge: cfg.no_charge },
        cfg,
        outputs,
        json!({ "summary": s, "model": result.model }),
    )
}

fn run_sweep(cfg: &SweepConfig) -> Result<(NvParams, SweepResult)> {
    let base = cfg.model.params(cfg.power_uw)?;
    let r =
        sweep_grid(&base, &cfg.ion_grid.values(), &cfg.rec_grid.values(), &cfg.window_grid.values(), cfg.collection)?;
    Ok((base, r))
}

fn write_sweep(ctx: &Context, r: &SweepResult) -> Result<Vec<String>> {
    let mut outputs = Vec::new();
    for (name, m) in
        [("c_esr.csv", &r.c_esr), ("snr.csv", &r.snr), ("p_nv0.csv", &r.p_nv0), ("window_end_ns.csv", &r.window_end_ns)]
    {
        io::write_matrix_csv(&ctx.path(name), &r.ion_grid, &r.rec_grid, m)?;
        outputs.push(name.to_string());
    }
    let scatter = contrast_vs_pnv0(r);
    let pts: Vec<Vec<f64>> = scatter.points.iter().map(|p| vec![p.gamma_ion, p.gamma_rec, p.p_nv0, p.c_esr]).collect();
    io::write_table(&ctx.path("scatter.csv"), &["gamma_ion_MHz", "gamma_rec_MHz", "p_nv0", "c_esr"], &pts)?;
    let bins: Vec<Vec<f64>> =
        scatter.bins.iter().map(|b| vec![b.p_lo, b.p_hi, b.bin_max, b.envelope, b.count as f64]).collect();
    io::write_table(&ctx.path("envelope.csv"), &["p_nv0_lo", "p_nv0_hi", "bin_max", "envelope", "count"], &bins)?;
    outputs.push("scatter.csv".into());
    outputs.push("envelope.csv".into());
    Ok(outputs)
}

pub(crate) fn sweep(ctx: &Context, cfg: &SweepConfig) -> Result<()> {
    let (base, r) = run_sweep(cfg)?;
    let outputs = write_sweep(ctx, &r)?;
    ctx.manifest(
        Command::Sweep,
        cfg,
        outputs,
        json!({
            "base": base,
            "ion_grid": r.ion_grid,
            "rec_grid": r.rec_grid,
            "window_grid": r.window_grid,
            "collection": r.collection,
        }),
    )
}

#[derive(Serialize)]
struct DecompositionReport {
    base: NvParams,
    calibration: Option<LifetimeCalibration>,
    decomposition: Decomposition,
}

pub(crate) fn decompose(ctx: &Context, cfg: &DecomposeConfig) -> Result<()> {
    let mut sweep_cfg = cfg.sweep();
    let windows = cfg.window_grid.values();
    let calibration = match &cfg.calibrate {
        Some(c) => {
            let l = cfg.model.params(cfg.power_uw)?.to_lifetimes();
            let cal = calibrate_lifetime_split(&l, c.target_c_esr, c.max_shift_ns, &windows, cfg.collection)?;
            sweep_cfg.model = super::ModelSpec::Params(cal.params);
            sweep_cfg.power_uw = None;
            Some(cal)
        }
        None => None,
    };
    let (base, r) = run_sweep(&sweep_cfg)?;
    let d = decompose_grid(&base, &r)?;
    let report = DecompositionReport { base, calibration, decomposition: d };
    io::write_json(&ctx.path("decomposition.json"), &report)?;
    let mut outputs = vec!["decomposition.json".to_string()];
    outputs.extend(write_sweep(ctx, &r)?);
    ctx.manifest(Command::Decompose, cfg, outputs, json!({ "base": base }))
}

#[derive(Serialize)]
struct DecayReport {
    file: String,
    fit: ExponentialFit,
    time_constant_s: f64,
    r_ion_per_s: Option<f64>,
    r_rec_per_s: Option<f64>,
}

#[derive(Serialize)]
struct PowerReport {
    file: String,
    fit: PowerLawFit,
}

#[derive(Serialize)]
struct KineticsReport {
    decays: Vec<DecayReport>,
    power_law: Option<PowerReport>,
}

pub(crate) fn kinetics(ctx: &Context, cfg: &KineticsConfig) -> Result<()> {
    if cfg.decays.is_empty() && cfg.power_series.is_none() {
        return Err(Error::Config("kinetics needs `decays` or `power_series`".into()));
    }
    let mut decays = Vec::new();
    for path in &cfg.decays {
        let samples = io::read_decay_csv(path)?;
        let f = fit_exponential_decay(&samples, DecayModel::DecayToOffset)?;
        let split = cfg.rho_minus_equilibrium.map(|rho| split_rates(f.rate, rho)).transpose()?;
        decays.push(DecayReport {
            file: path.display().to_string(),
            fit: f,
            time_constant_s: 1.0 / f.rate,
            r_ion_per_s: split.map(|s| s.r_ion),
            r_rec_per_s: split.map(|s| s.r_rec),
        });
    }
    let power_law = match &cfg.power_series {
        Some(path) => {
            Some(PowerReport { file: path.display().to_string(), fit: fit_power_law(&io::read_power_csv(path)?)? })
        }
        None => None,
    };
    let report = KineticsReport { decays, power_law };
    io::write_json(&ctx.path("kinetics.json"), &report)?;
    ctx.manifest(Command::Kinetics, cfg, vec!["kinetics.json".into()], json!({}))
}
