use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use serde::Serialize;

use homodyne_core::analysis::{fit_decay_rate, DecayFit};
use homodyne_core::diffusion::{
    decay_contributions, diffusion_constant, fluctuation_direction, mean_drift,
};
use homodyne_core::feedback::{
    constant_drive, drift_only_trajectory, effective_diffusion_constant,
    effective_diffusion_step, feedback_drift, feedback_kick, linearized_stability, sy_relaxation,
};
use homodyne_core::measurement::MeasurementSample;
use homodyne_core::{
    run_ensemble, run_trajectory, BlochVector, FeedbackPolicy, Mode, Vec3,
};

use crate::config::RunSpec;
use crate::error::CliError;
use crate::output::{num, OutputContext};

pub fn cmd_trajectory(spec: &RunSpec, out: &OutputContext) -> Result<Vec<String>, CliError> {
    let rec = run_trajectory(&spec.cfg, &spec.policy, spec.s0.into(), spec.cfg.seed)?;

    let paired = spec.cfg.mode == Mode::Both;
    let header: Vec<&str> = if paired {
        vec!["t", "s_x", "s_y", "s_z", "sv_s_x", "sv_s_y", "sv_s_z", "dn", "f"]
    } else {
        vec!["t", "s_x", "s_y", "s_z", "dn", "f"]
    };
    let mut rows = Vec::with_capacity(rec.times.len());
    for i in 0..rec.times.len() {
        let s = rec.states[i];
        let mut row = vec![num(rec.times[i]), num(s.sx), num(s.sy), num(s.sz)];
        if let Some(sv) = &rec.statevec_states {
            row.extend([num(sv[i].sx), num(sv[i].sy), num(sv[i].sz)]);
        }
        // dn and f describe the window ending at this record; the first row
        // has no window yet
        let (dn, f) = if i == 0 {
            (0.0, 0.0)
        } else {
            (rec.samples[i - 1], rec.fields[i - 1])
        };
        row.extend([num(dn), num(f)]);
        rows.push(row);
    }
    let csv = out.file_name(".csv");
    out.write_csv(&csv, &header, &rows)?;
    Ok(vec![csv])
}

#[derive(Serialize)]
struct FitEntry {
    rate_gamma_units: f64,
    rate_per_time: f64,
    std_error_gamma_units: f64,
}

impl From<(DecayFit, f64)> for FitEntry {
    fn from((fit, gamma): (DecayFit, f64)) -> Self {
        FitEntry {
            rate_gamma_units: fit.rate,
            rate_per_time: fit.rate * gamma,
            std_error_gamma_units: fit.std_error,
        }
    }
}

#[derive(Serialize)]
struct FitsReport {
    n_traj: u64,
    gamma: f64,
    tau: f64,
    fits: BTreeMap<String, FitEntry>,
    skipped: BTreeMap<String, String>,
}

pub fn cmd_ensemble(spec: &RunSpec, out: &OutputContext) -> Result<Vec<String>, CliError> {
    match spec.preset.as_deref() {
        Some("fig7") => return fig7_curves(spec, out),
        Some("contributions") => return contributions_table(spec, out),
        _ => {}
    }

    let stats = run_ensemble(
        &spec.cfg,
        &spec.policy,
        spec.s0.into(),
        spec.traj,
        spec.cfg.seed,
    )?;

    let header = [
        "t", "mean_sx", "mean_sy", "mean_sz", "var_sx", "var_sy", "var_sz",
    ];
    let mut rows = Vec::with_capacity(stats.times().len());
    for (i, t) in stats.times().iter().enumerate() {
        let m = stats.mean_at(i);
        let v = stats.variance_at(i);
        rows.push(vec![
            num(*t),
            num(m.x),
            num(m.y),
            num(m.z),
            num(v.x),
            num(v.y),
            num(v.z),
        ]);
    }
    let csv = out.file_name("_stats.csv");
    out.write_csv(&csv, &header, &rows)?;

    // decay-rate fits on the offset-removed series that stay positive
    let mut fits = BTreeMap::new();
    let mut skipped = BTreeMap::new();
    let series: [(&str, Vec<f64>); 3] = [
        (
            "sz_plus_one",
            (0..stats.times().len())
                .map(|i| stats.mean_at(i).z + 1.0)
                .collect(),
        ),
        (
            "sx",
            (0..stats.times().len()).map(|i| stats.mean_at(i).x).collect(),
        ),
        (
            "sy",
            (0..stats.times().len()).map(|i| stats.mean_at(i).y).collect(),
        ),
    ];
    for (name, values) in series {
        match fit_decay_rate(stats.times(), &values) {
            Ok(fit) => {
                fits.insert(name.to_string(), FitEntry::from((fit, spec.cfg.gamma)));
            }
            Err(e) => {
                skipped.insert(name.to_string(), e.to_string());
            }
        }
    }
    let report = FitsReport {
        n_traj: stats.n_traj(),
        gamma: spec.cfg.gamma,
        tau: spec.cfg.tau,
        fits,
        skipped,
    };
    let json = out.file_name("_fits.json");
    out.write_json(&json, &report)?;
    Ok(vec![csv, json])
}

/// Drift-only comparison of the fast exponential in-plane relaxation with
/// the slow algebraic out-of-plane relaxation under equatorial feedback.
fn fig7_curves(spec: &RunSpec, out: &OutputContext) -> Result<Vec<String>, CliError> {
    let cfg = &spec.cfg;
    let gt = cfg.gamma_tau();
    let dev = 0.1_f64;
    let policy = FeedbackPolicy::stabilizing(FRAC_PI_2);
    let c = (1.0 - dev * dev).sqrt();
    let sz_run = drift_only_trajectory(BlochVector::new(c, 0.0, dev), &policy, cfg, cfg.n_steps);
    let sy_run = drift_only_trajectory(BlochVector::new(c, dev, 0.0), &policy, cfg, cfg.n_steps);

    let header = ["t", "sz_drift", "sz_exponential", "sy_drift", "sy_closed_form"];
    let mut rows = Vec::with_capacity(sz_run.len());
    for k in 0..sz_run.len() {
        let t = k as f64 * gt;
        rows.push(vec![
            num(t),
            num(sz_run[k].sz),
            num(dev * (-t / 2.0).exp()),
            num(sy_run[k].sy),
            num(sy_relaxation(dev, t, 1.0)),
        ]);
    }
    let csv = out.file_name(".csv");
    out.write_csv(&csv, &header, &rows)?;
    Ok(vec![csv])
}

/// Relative contributions of diffusion, dipole emission and the mixed term
/// to the exponential decay, tabulated against s_z.
fn contributions_table(spec: &RunSpec, out: &OutputContext) -> Result<Vec<String>, CliError> {
    let n = spec.grid.unwrap_or(201).max(2);
    let header = ["s_z", "q_diffusion", "q_dipole", "q_mixed"];
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let sz = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
        let q = decay_contributions(sz);
        rows.push(vec![
            num(sz),
            num(q.q_diffusion),
            num(q.q_dipole),
            num(q.q_mixed),
        ]);
    }
    let csv = out.file_name(".csv");
    out.write_csv(&csv, &header, &rows)?;
    Ok(vec![csv])
}

/// Diffusion line field and drift vector field on a Bloch-sphere grid, for
/// the free atom and for feedback stabilizing the excited state and the
/// dipole eigenstates.
pub fn cmd_fields(spec: &RunSpec, out: &OutputContext) -> Result<Vec<String>, CliError> {
    let cfg = &spec.cfg;
    let gt = cfg.gamma_tau();
    let n = spec.grid.unwrap_or(12).max(2);

    let mut grid = Vec::new();
    for i in 0..=n {
        let polar = PI * i as f64 / n as f64;
        if i == 0 || i == n {
            grid.push(BlochVector::new(0.0, 0.0, polar.cos()));
            continue;
        }
        for j in 0..2 * n {
            let azim = PI * j as f64 / n as f64;
            grid.push(BlochVector::new(
                polar.sin() * azim.cos(),
                polar.sin() * azim.sin(),
                polar.cos(),
            ));
        }
    }

    let policies: [(&str, Option<f64>); 3] =
        [("none", None), ("theta_0", Some(0.0)), ("theta_pi2", Some(FRAC_PI_2))];
    let header = [
        "policy", "s_x", "s_y", "s_z", "dir_x", "dir_y", "dir_z", "std", "drift_x", "drift_y",
        "drift_z",
    ];
    let mut rows = Vec::with_capacity(grid.len() * policies.len());
    for (label, theta) in policies {
        for s in &grid {
            let (direction, variance_rate, drift) = match theta {
                None => (
                    fluctuation_direction(*s),
                    diffusion_constant(*s, cfg),
                    mean_drift(*s, cfg),
                ),
                Some(th) => {
                    let policy = FeedbackPolicy::stabilizing(th);
                    // a unit normalized outcome recovers the bare direction
                    let probe = MeasurementSample::from_dn(cfg.alpha_abs / gt.sqrt(), cfg.alpha_abs);
                    let dir = effective_diffusion_step(*s, probe, &policy, cfg);
                    let mut drift = feedback_drift(*s, th, cfg);
                    drift += feedback_kick(*s, constant_drive(th, cfg), cfg);
                    (dir, effective_diffusion_constant(*s, th, cfg), drift)
                }
            };
            let dir_unit = if direction.norm() > 1e-12 {
                direction * (1.0 / direction.norm())
            } else {
                Vec3::ZERO
            };
            // standard deviation of one window's step, and drift per 1/gamma
            let std = (cfg.tau * variance_rate).sqrt();
            let drift_rate = drift * (1.0 / gt);
            rows.push(vec![
                label.to_string(),
                num(s.sx),
                num(s.sy),
                num(s.sz),
                num(dir_unit.x),
                num(dir_unit.y),
                num(dir_unit.z),
                num(std),
                num(drift_rate.x),
                num(drift_rate.y),
                num(drift_rate.z),
            ]);
        }
    }
    let csv = out.file_name(".csv");
    out.write_csv(&csv, &header, &rows)?;
    Ok(vec![csv])
}

#[derive(Serialize)]
struct StabilitySummary {
    theta_grid_points: usize,
    eps_exponent_gamma_units: f64,
    boundary_cos_theta: f64,
    /// Adjacent grid angles bracketing the stability sign flip.
    boundary_between_theta: Option<(f64, f64)>,
    /// Grid angles where the out-of-plane exponent vanishes (marginal).
    marginal_theta: Vec<f64>,
}

/// Sweep target angles: linearized exponents plus exponents measured from
/// drift-only integration of small deviations.
pub fn cmd_stability(spec: &RunSpec, out: &OutputContext) -> Result<Vec<String>, CliError> {
    let cfg = &spec.cfg;
    let gt = cfg.gamma_tau();
    let n = spec.grid.unwrap_or(25).max(3);
    let n_steps = (2.0 / gt).round() as usize; // two lifetimes
    let dev = 1e-3;

    let header = [
        "theta",
        "cos_theta",
        "eps_exponent",
        "sy_exponent",
        "eps_rate_measured",
        "sy_rate_measured",
        "stable_in_plane",
        "stable_out_of_plane",
    ];
    let mut rows = Vec::with_capacity(n);
    let mut formula_exponents = Vec::with_capacity(n);
    let mut thetas = Vec::with_capacity(n);

    for i in 0..n {
        let theta = PI * i as f64 / (n - 1) as f64;
        let report = linearized_stability(theta, cfg.gamma);
        let policy = FeedbackPolicy::stabilizing(theta);

        let s0 = BlochVector::new((theta + dev).sin(), 0.0, (theta + dev).cos());
        let eps: Vec<f64> = drift_only_trajectory(s0, &policy, cfg, n_steps)
            .iter()
            .map(|s| {
                let mut e = s.sx.atan2(s.sz) - theta;
                if e > PI {
                    e -= 2.0 * PI;
                } else if e < -PI {
                    e += 2.0 * PI;
                }
                e.abs()
            })
            .collect();
        let times: Vec<f64> = (0..eps.len()).map(|k| k as f64 * gt).collect();
        let eps_measured = -fit_decay_rate(&times, &eps)
            .map_err(CliError::from)?
            .rate;

        let c = (1.0 - dev * dev).sqrt();
        let s0 = BlochVector::new(theta.sin() * c, dev, theta.cos() * c);
        let sy: Vec<f64> = drift_only_trajectory(s0, &policy, cfg, n_steps)
            .iter()
            .map(|s| s.sy.abs())
            .collect();
        let sy_measured = -fit_decay_rate(&times, &sy)
            .map_err(CliError::from)?
            .rate;

        rows.push(vec![
            num(theta),
            num(theta.cos()),
            num(report.eps_exponent),
            num(report.sy_exponent),
            num(eps_measured * cfg.gamma),
            num(sy_measured * cfg.gamma),
            (report.stable_in_plane as u8).to_string(),
            (report.stable_out_of_plane as u8).to_string(),
        ]);
        formula_exponents.push(report.sy_exponent);
        thetas.push(theta);
    }

    let mut boundary = None;
    let mut marginal = Vec::new();
    for i in 0..n {
        if formula_exponents[i].abs() < 1e-12 {
            marginal.push(thetas[i]);
        }
        if i + 1 < n && formula_exponents[i] > 0.0 && formula_exponents[i + 1] < 0.0 {
            boundary = Some((thetas[i], thetas[i + 1]));
        }
    }
    let summary = StabilitySummary {
        theta_grid_points: n,
        eps_exponent_gamma_units: -0.5,
        boundary_cos_theta: 0.0,
        boundary_between_theta: boundary,
        marginal_theta: marginal,
    };

    let csv = out.file_name(".csv");
    out.write_csv(&csv, &header, &rows)?;
    let json = out.file_name("_summary.json");
    out.write_json(&json, &summary)?;
    Ok(vec![csv, json])
}

/// Configure a run-wide rayon pool when `--workers` asks for one.
pub fn configure_workers(workers: usize) {
    if workers > 0 {
        // ignore the error if a pool already exists (tests, repeated calls)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
}

/// Shared driver: resolve output location, run, write the manifest.
pub fn dispatch(
    command: &str,
    spec: &RunSpec,
    out: &OutputContext,
) -> Result<Vec<String>, CliError> {
    let outputs = match command {
        "trajectory" => cmd_trajectory(spec, out)?,
        "ensemble" => cmd_ensemble(spec, out)?,
        "fields" => cmd_fields(spec, out)?,
        "stability" => cmd_stability(spec, out)?,
        other => return Err(CliError::Config(format!("unknown command {other:?}"))),
    };
    out.write_manifest(command, &spec.params, spec.cfg.seed, &outputs)?;
    Ok(outputs)
}
