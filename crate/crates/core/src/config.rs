//! Simulation parameters and their validity constraints.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which state representation a trajectory evolves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Exact amplitude update (reference path).
    Statevec,
    /// Bloch-vector fast path.
    Bloch,
    /// Both representations driven by the same measurement stream.
    Both,
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "statevec" => Ok(Mode::Statevec),
            "bloch" => Ok(Mode::Bloch),
            "both" => Ok(Mode::Both),
            other => Err(Error::invalid(
                "mode",
                format!("{other:?} (expected statevec, bloch or both)"),
            )),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Statevec => "statevec",
            Mode::Bloch => "bloch",
            Mode::Both => "both",
        })
    }
}

/// How the photon-number difference is drawn each window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DnSampling {
    /// Real-valued Gaussian (strong local-oscillator limit). Default.
    Continuous,
    /// Lattice Gaussian over the integers; needs `alpha_abs^2 >= 100`.
    Integer,
}

impl FromStr for DnSampling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "continuous" => Ok(DnSampling::Continuous),
            "integer" => Ok(DnSampling::Integer),
            other => Err(Error::invalid(
                "dn_sampling",
                format!("{other:?} (expected continuous or integer)"),
            )),
        }
    }
}

impl fmt::Display for DnSampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DnSampling::Continuous => "continuous",
            DnSampling::Integer => "integer",
        })
    }
}

/// Physical and numerical parameters of a run.
///
/// Time is handled in units of `1/gamma` everywhere outside this struct;
/// `gamma` and `tau` only ever enter through the product `gamma * tau`
/// (per-window emission probability) and through output time axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Spontaneous emission rate (1/time).
    pub gamma: f64,
    /// Measurement window length (time).
    pub tau: f64,
    /// Local-oscillator amplitude |alpha| per window (real positive).
    pub alpha_abs: f64,
    /// Number of measurement windows.
    pub n_steps: usize,
    /// Base RNG seed.
    pub seed: u64,
    /// State representation to evolve.
    pub mode: Mode,
    /// Rescale the Bloch vector to unit length after each window (pure-state
    /// runs should leave this on; off exists to measure the norm drift).
    pub renormalize: bool,
    /// Measurement-outcome sampling scheme.
    pub dn_sampling: DnSampling,
    /// Recording stride in windows; 0 selects the automatic rule (every step
    /// for `n_steps <= 10_000`, otherwise about 10_000 evenly spaced records).
    pub record_stride: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            gamma: 1.0,
            tau: 1e-3,
            alpha_abs: 100.0,
            n_steps: 5000,
            seed: 1,
            mode: Mode::Bloch,
            renormalize: true,
            dn_sampling: DnSampling::Continuous,
            record_stride: 0,
        }
    }
}

impl SimConfig {
    /// Per-window emission probability `gamma * tau`.
    pub fn gamma_tau(&self) -> f64 {
        self.gamma * self.tau
    }

    /// Resolved recording stride.
    pub fn effective_stride(&self) -> usize {
        if self.record_stride > 0 {
            self.record_stride
        } else if self.n_steps <= 10_000 {
            1
        } else {
            self.n_steps.div_ceil(10_000)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma <= 0.0 || !self.gamma.is_finite() {
            return Err(Error::invalid("gamma", format!("{} (must be > 0)", self.gamma)));
        }
        if self.tau <= 0.0 || !self.tau.is_finite() {
            return Err(Error::invalid("tau", format!("{} (must be > 0)", self.tau)));
        }
        let gt = self.gamma_tau();
        if gt >= 0.1 {
            return Err(Error::invalid(
                "gamma_tau",
                format!("gamma*tau = {gt} (the short-window expansion needs gamma*tau < 0.1)"),
            ));
        }
        if self.alpha_abs <= 0.0 || !self.alpha_abs.is_finite() {
            return Err(Error::invalid(
                "alpha",
                format!("{} (must be > 0)", self.alpha_abs),
            ));
        }
        if self.dn_sampling == DnSampling::Integer && self.alpha_abs * self.alpha_abs < 100.0 {
            return Err(Error::invalid(
                "alpha",
                format!(
                    "alpha^2 = {} (integer sampling needs alpha^2 >= 100 for the Gaussian limit)",
                    self.alpha_abs * self.alpha_abs
                ),
            ));
        }
        if self.n_steps == 0 {
            return Err(Error::invalid("steps", "0 (must run at least one window)"));
        }
        Ok(())
    }
}
