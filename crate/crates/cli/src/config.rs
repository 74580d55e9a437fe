//! Parameter resolution: defaults <- preset overlay <- config file <- flags.
//!
//! The config file is flat `key = value` text (`#` comments); a previous
//! run's manifest (.json) is accepted in its place, which re-runs that run
//! exactly. The manifest stores the fully resolved parameter map, so the
//! same map resolves to the same run regardless of how it was first built.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use homodyne_core::{BlochVector, DnSampling, FeedbackPolicy, Mode, SimConfig};

use crate::error::CliError;
use crate::opts::RunArgs;
use crate::output::RunManifest;

const KNOWN_KEYS: &[&str] = &[
    "gamma",
    "tau",
    "alpha",
    "steps",
    "seed",
    "mode",
    "renormalize",
    "dn_sampling",
    "stride",
    "theta",
    "delay",
    "feedback",
    "constant_drive",
    "signal_correction",
    "s0",
    "traj",
    "grid",
    "preset",
    "workers",
];

/// Fully resolved run description.
pub struct RunSpec {
    pub cfg: SimConfig,
    pub policy: FeedbackPolicy,
    pub s0: BlochVector,
    pub traj: u64,
    pub grid: Option<usize>,
    pub preset: Option<String>,
    pub workers: usize,
    /// Canonical parameter echo, written into the manifest.
    pub params: BTreeMap<String, String>,
}

fn defaults() -> BTreeMap<String, String> {
    let cfg = SimConfig::default();
    let mut m = BTreeMap::new();
    m.insert("gamma".into(), cfg.gamma.to_string());
    m.insert("tau".into(), cfg.tau.to_string());
    m.insert("alpha".into(), cfg.alpha_abs.to_string());
    m.insert("steps".into(), cfg.n_steps.to_string());
    m.insert("seed".into(), cfg.seed.to_string());
    m.insert("mode".into(), cfg.mode.to_string());
    m.insert("renormalize".into(), "true".into());
    m.insert("dn_sampling".into(), cfg.dn_sampling.to_string());
    m.insert("stride".into(), "0".into());
    m.insert("delay".into(), "0".into());
    m.insert("constant_drive".into(), "true".into());
    m.insert("signal_correction".into(), "true".into());
    m.insert("s0".into(), "excited".into());
    m.insert("traj".into(), "1000".into());
    m.insert("workers".into(), "0".into());
    m
}

fn preset_overlay(command: &str, name: &str) -> Result<BTreeMap<String, String>, CliError> {
    if command != "ensemble" {
        return Err(CliError::Config(format!(
            "preset: {name:?} is not available for `{command}` (presets exist for `ensemble`)"
        )));
    }
    let mut m = BTreeMap::new();
    match name {
        // spontaneous decay of the excited state; fits gamma
        "decay" => {
            m.insert("s0".into(), "excited".into());
            m.insert("steps".into(), "3000".into());
            m.insert("traj".into(), "2000".into());
            m.insert("feedback".into(), "false".into());
        }
        // drift-only comparison of the exponential s_z relaxation with the
        // slow algebraic s_y relaxation under equatorial stabilization
        "fig7" => {
            m.insert("theta".into(), FRAC_PI_2.to_string());
            m.insert("feedback".into(), "true".into());
            m.insert("steps".into(), "10000".into());
        }
        // relative decay contributions vs s_z
        "contributions" => {}
        other => {
            return Err(CliError::Config(format!(
                "preset: unknown preset {other:?} (expected decay, fig7 or contributions)"
            )))
        }
    }
    Ok(m)
}

fn parse_kv(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut m = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Config(format!(
                "line {}: expected `key = value`, got {line:?}",
                lineno + 1
            )));
        };
        let key = k.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(CliError::Config(format!("unknown config key {key:?}")));
        }
        m.insert(key, v.trim().to_string());
    }
    Ok(m)
}

fn load_config_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        let manifest: RunManifest = serde_json::from_str(&text)?;
        for key in manifest.params.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Config(format!(
                    "manifest parameter {key:?} is not recognized"
                )));
            }
        }
        Ok(manifest.params)
    } else {
        parse_kv(&text)
    }
}

fn flags_to_map(args: &RunArgs) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            m.insert(k.to_string(), v);
        }
    };
    put("gamma", args.gamma.map(|v| v.to_string()));
    put("tau", args.tau.map(|v| v.to_string()));
    put("alpha", args.alpha.map(|v| v.to_string()));
    put("steps", args.steps.map(|v| v.to_string()));
    put("seed", args.seed.map(|v| v.to_string()));
    put("mode", args.mode.clone());
    put("theta", args.theta.map(|v| v.to_string()));
    put("delay", args.delay.map(|v| v.to_string()));
    put("traj", args.traj.map(|v| v.to_string()));
    put("workers", args.workers.map(|v| v.to_string()));
    put("preset", args.preset.clone());
    put("grid", args.grid.map(|v| v.to_string()));
    if args.theta.is_some() {
        m.insert("feedback".into(), "true".into());
    }
    if args.no_correction {
        m.insert("signal_correction".into(), "false".into());
    }
    if args.no_drive {
        m.insert("constant_drive".into(), "false".into());
    }
    m
}

fn field<T: FromStr>(map: &BTreeMap<String, String>, key: &'static str) -> Result<T, CliError> {
    let raw = map
        .get(key)
        .ok_or_else(|| CliError::Config(format!("{key}: missing value")))?;
    raw.parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse {raw:?}")))
}

fn bool_field(map: &BTreeMap<String, String>, key: &'static str) -> Result<bool, CliError> {
    let raw = map
        .get(key)
        .ok_or_else(|| CliError::Config(format!("{key}: missing value")))?;
    match raw.as_str() {
        "true" | "1" | "on" | "yes" => Ok(true),
        "false" | "0" | "off" | "no" => Ok(false),
        other => Err(CliError::Config(format!("{key}: not a boolean: {other:?}"))),
    }
}

fn parse_s0(raw: &str) -> Result<BlochVector, CliError> {
    match raw {
        "excited" => return Ok(BlochVector::EXCITED),
        "ground" => return Ok(BlochVector::GROUND),
        "dipole+" => return Ok(BlochVector::new(1.0, 0.0, 0.0)),
        "dipole-" => return Ok(BlochVector::new(-1.0, 0.0, 0.0)),
        _ => {}
    }
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(CliError::Config(format!(
            "s0: expected excited|ground|dipole+|dipole-|sx,sy,sz, got {raw:?}"
        )));
    }
    let mut v = [0.0; 3];
    for (slot, p) in v.iter_mut().zip(&parts) {
        *slot = p
            .parse()
            .map_err(|_| CliError::Config(format!("s0: cannot parse component {p:?}")))?;
    }
    Ok(BlochVector::new(v[0], v[1], v[2]))
}

/// Merge all layers and produce the typed run description plus its
/// canonical parameter echo.
pub fn resolve(command: &str, args: &RunArgs) -> Result<RunSpec, CliError> {
    let file = match &args.config {
        Some(p) => load_config_file(p)?,
        None => BTreeMap::new(),
    };
    let flags = flags_to_map(args);

    let preset = flags
        .get("preset")
        .or_else(|| file.get("preset"))
        .cloned()
        .filter(|p| !p.is_empty());

    let mut merged = defaults();
    if let Some(name) = &preset {
        merged.extend(preset_overlay(command, name)?);
    }
    merged.extend(file);
    merged.extend(flags);

    let cfg = SimConfig {
        gamma: field(&merged, "gamma")?,
        tau: field(&merged, "tau")?,
        alpha_abs: field(&merged, "alpha")?,
        n_steps: field(&merged, "steps")?,
        seed: field(&merged, "seed")?,
        mode: merged["mode"]
            .parse::<Mode>()
            .map_err(|e| CliError::Config(e.to_string()))?,
        renormalize: bool_field(&merged, "renormalize")?,
        dn_sampling: merged["dn_sampling"]
            .parse::<DnSampling>()
            .map_err(|e| CliError::Config(e.to_string()))?,
        record_stride: field(&merged, "stride")?,
    };
    cfg.validate().map_err(CliError::from)?;

    let theta: f64 = match merged.get("theta") {
        Some(raw) => raw
            .parse()
            .map_err(|_| CliError::Config(format!("theta: cannot parse {raw:?}")))?,
        None => 0.0,
    };
    let enabled = match merged.get("feedback") {
        Some(_) => bool_field(&merged, "feedback")?,
        None => merged.contains_key("theta"),
    };
    let policy = FeedbackPolicy {
        theta,
        delay_steps: field(&merged, "delay")?,
        constant_drive: bool_field(&merged, "constant_drive")?,
        signal_correction: bool_field(&merged, "signal_correction")?,
        enabled,
    };
    policy.validate().map_err(CliError::from)?;
    if policy.enabled && policy.delay_outside_regime(&cfg) {
        eprintln!(
            "warning: feedback delay is {:.3}/gamma; stabilization needs delays well below the lifetime",
            policy.delay_gamma_tau(&cfg)
        );
    }

    let s0 = parse_s0(&merged["s0"])?;
    let traj: u64 = field(&merged, "traj")?;
    if traj == 0 {
        return Err(CliError::Config("traj: must be at least 1".into()));
    }
    let grid: Option<usize> = match merged.get("grid") {
        Some(raw) => Some(
            raw.parse()
                .map_err(|_| CliError::Config(format!("grid: cannot parse {raw:?}")))?,
        ),
        None => None,
    };
    let workers: usize = field(&merged, "workers")?;

    // canonical echo: every value re-stated from the typed form, so a
    // manifest re-run resolves identically
    let mut params = BTreeMap::new();
    params.insert("gamma".into(), cfg.gamma.to_string());
    params.insert("tau".into(), cfg.tau.to_string());
    params.insert("alpha".into(), cfg.alpha_abs.to_string());
    params.insert("steps".into(), cfg.n_steps.to_string());
    params.insert("seed".into(), cfg.seed.to_string());
    params.insert("mode".into(), cfg.mode.to_string());
    params.insert("renormalize".into(), cfg.renormalize.to_string());
    params.insert("dn_sampling".into(), cfg.dn_sampling.to_string());
    params.insert("stride".into(), cfg.record_stride.to_string());
    params.insert("theta".into(), policy.theta.to_string());
    params.insert("delay".into(), policy.delay_steps.to_string());
    params.insert("feedback".into(), policy.enabled.to_string());
    params.insert("constant_drive".into(), policy.constant_drive.to_string());
    params.insert(
        "signal_correction".into(),
        policy.signal_correction.to_string(),
    );
    params.insert(
        "s0".into(),
        format!("{},{},{}", s0.sx, s0.sy, s0.sz),
    );
    params.insert("traj".into(), traj.to_string());
    params.insert("workers".into(), workers.to_string());
    if let Some(g) = grid {
        params.insert("grid".into(), g.to_string());
    }
    if let Some(p) = &preset {
        params.insert("preset".into(), p.clone());
    }

    Ok(RunSpec {
        cfg,
        policy,
        s0,
        traj,
        grid,
        preset,
        workers,
        params,
    })
}
