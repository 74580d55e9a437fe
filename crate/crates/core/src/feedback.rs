//! Measurement-conditioned coherent feedback.
//!
//! Each window's outcome `dn` is fed back as a resonant drive inducing a
//! Rabi rotation about `s_y`, with gain chosen to cancel the fluctuation
//! step at a target state `(sin theta, 0, cos theta)`. The applied field is
//! reflected into the detector and shows up in the *next* window's reading;
//! that known contribution must be subtracted from the signal before further
//! feedback (signal correction), since the feedback's own effect is not to
//! be compensated.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::diffusion::{drift_direction, fluctuation_direction, mean_drift};
use crate::error::{Error, Result};
use crate::measurement::MeasurementSample;
use crate::state::{BlochVector, Vec3};

/// Feedback loop parameters. The gain law itself is fixed:
/// `f(dn) = -(1 + cos theta) dn / (2 alpha)`, independent of the current
/// atomic state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackPolicy {
    /// Target polar angle; the stabilized state is `(sin theta, 0, cos theta)`.
    pub theta: f64,
    /// Feedback delay in whole windows.
    pub delay_steps: usize,
    /// Apply the constant bias field that makes the target stationary.
    pub constant_drive: bool,
    /// Subtract the reflected control field from the signal driving the gain.
    pub signal_correction: bool,
    pub enabled: bool,
}

impl FeedbackPolicy {
    pub fn disabled() -> Self {
        FeedbackPolicy {
            theta: 0.0,
            delay_steps: 0,
            constant_drive: false,
            signal_correction: true,
            enabled: false,
        }
    }

    /// Immediate feedback stabilizing angle `theta`, with drive and signal
    /// correction on.
    pub fn stabilizing(theta: f64) -> Self {
        FeedbackPolicy {
            theta,
            delay_steps: 0,
            constant_drive: true,
            signal_correction: true,
            enabled: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.theta.is_finite() || !(0.0..=std::f64::consts::PI).contains(&self.theta) {
            return Err(Error::invalid(
                "theta",
                format!("{} (must lie in [0, pi])", self.theta),
            ));
        }
        Ok(())
    }

    /// The stabilized state.
    pub fn target(&self) -> BlochVector {
        BlochVector::new(self.theta.sin(), 0.0, self.theta.cos())
    }

    /// Delay expressed in units of `1/gamma`.
    pub fn delay_gamma_tau(&self, cfg: &SimConfig) -> f64 {
        self.delay_steps as f64 * cfg.gamma_tau()
    }

    /// True when the delay leaves the regime where stabilization is reliable
    /// (the delay must stay well below the lifetime). Callers should warn.
    pub fn delay_outside_regime(&self, cfg: &SimConfig) -> bool {
        self.delay_gamma_tau(cfg) > 0.1
    }
}

impl Default for FeedbackPolicy {
    fn default() -> Self {
        FeedbackPolicy::disabled()
    }
}

/// Feedback field responding to one outcome:
/// `f = -(1 + cos theta) dn / (2 alpha) = -(1 + cos theta) x / 2`.
pub fn feedback_gain(policy: &FeedbackPolicy, sample: MeasurementSample) -> f64 {
    -(1.0 + policy.theta.cos()) / 2.0 * sample.x
}

/// Bloch change produced by a field `f` during one window: a small Rabi
/// rotation about `s_y`, `2 sqrt(gamma tau) f (s_z, 0, -s_x)`.
pub fn feedback_kick(s: BlochVector, f: f64, cfg: &SimConfig) -> Vec3 {
    Vec3::new(s.sz, 0.0, -s.sx) * (2.0 * cfg.gamma_tau().sqrt() * f)
}

/// Shift of the *next* window's reading caused by the reflected control
/// field: `delta_next = 2 alpha f`. Subtracting it from the raw reading
/// recovers the fluctuation signal.
pub fn next_signal_shift(f: f64, alpha_abs: f64) -> f64 {
    2.0 * alpha_abs * f
}

/// Constant bias field per window, `f0 = (sqrt(gamma tau)/4) sin theta cos
/// theta`, which cancels the residual drift rotation at the target state.
pub fn constant_drive(theta: f64, cfg: &SimConfig) -> f64 {
    cfg.gamma_tau().sqrt() / 4.0 * theta.sin() * theta.cos()
}

/// Stochastic part of one window under feedback: fluctuation step plus the
/// gain kick computed from the same outcome. On the unit sphere this equals
/// `sqrt(gamma tau) x [s_y (s_y, -s_x, 0) + (s_z - cos theta)(s_z, 0, -s_x)]`.
pub fn effective_diffusion_step(
    s: BlochVector,
    sample: MeasurementSample,
    policy: &FeedbackPolicy,
    cfg: &SimConfig,
) -> Vec3 {
    let fluct = fluctuation_direction(s) * (cfg.gamma_tau().sqrt() * sample.x);
    fluct + feedback_kick(s, feedback_gain(policy, sample), cfg)
}

/// Effective diffusion constant under feedback toward angle `theta`:
/// `gamma (1 - s_x^2 - 2 cos theta s_z + cos^2 theta (s_x^2 + s_z^2))`.
/// Vanishes exactly at the stabilized state.
pub fn effective_diffusion_constant(s: BlochVector, theta: f64, cfg: &SimConfig) -> f64 {
    let c = theta.cos();
    cfg.gamma * (1.0 - s.sx * s.sx - 2.0 * c * s.sz + c * c * (s.sx * s.sx + s.sz * s.sz))
}

/// Linearized drift exponents near the target state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    /// Rate of in-plane angular deviations: `-gamma/2`, stable for every
    /// target.
    pub eps_exponent: f64,
    /// Rate of out-of-plane deviations: `(gamma/2)(2 + cos theta) cos theta`;
    /// positive (unstable) for every target above the equator.
    pub sy_exponent: f64,
    pub stable_in_plane: bool,
    /// Strictly negative exponent; the equator itself is only marginally
    /// stable (the residual relaxation is algebraic, see [`sy_relaxation`]).
    pub stable_out_of_plane: bool,
}

pub fn linearized_stability(theta: f64, gamma: f64) -> StabilityReport {
    let c = theta.cos();
    let sy_exponent = gamma / 2.0 * (2.0 + c) * c;
    StabilityReport {
        eps_exponent: -gamma / 2.0,
        sy_exponent,
        stable_in_plane: true,
        stable_out_of_plane: sy_exponent < 0.0,
    }
}

/// Mean drift per window under feedback (on the unit sphere): a rotation
/// about `s_x` plus a rotation about `s_y`,
/// `(gamma tau/2)(2+s_z) s_y (0, s_z, -s_y) + (gamma tau/2)(s_z - 2 cos
/// theta) s_x (s_z, 0, -s_x)`.
pub fn feedback_drift(s: BlochVector, theta: f64, cfg: &SimConfig) -> Vec3 {
    let gt2 = cfg.gamma_tau() / 2.0;
    let t1 = Vec3::new(0.0, s.sz, -s.sy) * (gt2 * (2.0 + s.sz) * s.sy);
    let t2 = Vec3::new(s.sz, 0.0, -s.sx) * (gt2 * (s.sz - 2.0 * theta.cos()) * s.sx);
    t1 + t2
}

/// Mean drift per window for the equatorial (`theta = pi/2`) stabilization:
/// `(gamma tau/2)(s_x s_z^2, s_y s_z (2+s_z), -s_y^2 (2+s_z) - s_x^2 s_z)`.
/// The dipole grows monotonically (`sign(<ds_x>) = sign(s_x)` off `s_z = 0`)
/// until one of the eigenstates `s_x = +-1` is reached.
pub fn dipole_stabilized_drift(s: BlochVector, cfg: &SimConfig) -> Vec3 {
    Vec3::new(
        s.sx * s.sz * s.sz,
        s.sy * s.sz * (2.0 + s.sz),
        -s.sy * s.sy * (2.0 + s.sz) - s.sx * s.sx * s.sz,
    ) * (cfg.gamma_tau() / 2.0)
}

/// Expected one-window Bloch change, including feedback and drive, computed
/// from the exact Gaussian outcome moments `<x> = sqrt(gamma tau) s_x`,
/// `<x^2> = 1 + gamma tau s_x^2`. At the target state with the constant
/// drive on, this cancels to O((gamma tau)^2).
pub fn mean_effective_step(s: BlochVector, policy: &FeedbackPolicy, cfg: &SimConfig) -> Vec3 {
    let gt = cfg.gamma_tau();
    let ex = gt.sqrt() * s.sx;
    let ex2 = 1.0 + gt * s.sx * s.sx;
    let d = fluctuation_direction(s);
    let p = drift_direction(s);
    let mut mean = d * (gt.sqrt() * ex) + d * (-gt * ex2 * s.sx)
        + p * (gt / 2.0 * ex2 * (1.0 + s.sz))
        + p * (gt / 2.0);
    if policy.enabled {
        let mean_gain = -(1.0 + policy.theta.cos()) / 2.0 * ex;
        let mut field = mean_gain;
        if policy.constant_drive {
            field += constant_drive(policy.theta, cfg);
        }
        mean += feedback_kick(s, field, cfg);
    }
    mean
}

/// One step of the deterministic drift-only map (no measurement noise):
/// the mean drift for the active policy plus the constant drive, followed by
/// rescaling to the sphere.
pub fn drift_only_step(s: BlochVector, policy: &FeedbackPolicy, cfg: &SimConfig) -> BlochVector {
    let mut delta = if policy.enabled {
        feedback_drift(s, policy.theta, cfg)
    } else {
        mean_drift(s, cfg)
    };
    if policy.enabled && policy.constant_drive {
        delta += feedback_kick(s, constant_drive(policy.theta, cfg), cfg);
    }
    s.displaced(delta).normalized()
}

/// Iterate [`drift_only_step`], recording every state including the start.
pub fn drift_only_trajectory(
    s0: BlochVector,
    policy: &FeedbackPolicy,
    cfg: &SimConfig,
    n_steps: usize,
) -> Vec<BlochVector> {
    let mut out = Vec::with_capacity(n_steps + 1);
    let mut s = s0;
    out.push(s);
    for _ in 0..n_steps {
        s = drift_only_step(s, policy, cfg);
        out.push(s);
    }
    out
}

/// Drift of small out-of-plane deviations under equatorial stabilization:
/// `ds_y/dt = -2 gamma s_y^3`.
pub fn sy_drift_rhs(sy: f64, gamma: f64) -> f64 {
    -2.0 * gamma * sy * sy * sy
}

/// Closed-form slow relaxation `s_y(t) = sign(s_y(0)) / sqrt(4 gamma t +
/// s_y(0)^-2)`; algebraic, much slower than the exponential in-plane
/// relaxation. Valid as a drift-only statement: along stochastic
/// trajectories the comparable diffusion masks it.
pub fn sy_relaxation(sy0: f64, t: f64, gamma: f64) -> f64 {
    if sy0 == 0.0 {
        return 0.0;
    }
    sy0.signum() / (4.0 * gamma * t + sy0.powi(-2)).sqrt()
}

/// Fixed-step RK4 integration of the `s_y` drift ODE; returns the sampled
/// `(t, s_y)` series including the initial point.
pub fn integrate_sy_drift(sy0: f64, t_end: f64, dt: f64, gamma: f64) -> Vec<(f64, f64)> {
    let n = (t_end / dt).round() as usize;
    let mut out = Vec::with_capacity(n + 1);
    let mut y = sy0;
    out.push((0.0, y));
    for k in 0..n {
        let k1 = sy_drift_rhs(y, gamma);
        let k2 = sy_drift_rhs(y + dt / 2.0 * k1, gamma);
        let k3 = sy_drift_rhs(y + dt / 2.0 * k2, gamma);
        let k4 = sy_drift_rhs(y + dt * k3, gamma);
        y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out.push(((k + 1) as f64 * dt, y));
    }
    out
}

/// Per-window result of the feedback controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowOutcome {
    /// Detector reading for this window: fluctuation outcome plus the
    /// reflected control field applied in the previous window.
    pub raw_dn: f64,
    /// Total control field applied this window (gain plus drive).
    pub field: f64,
}

/// Per-trajectory feedback state: the delay ring of signals and the
/// previously applied field (whose reflection contaminates the next
/// reading). Confined to a single trajectory; never shared.
#[derive(Debug, Clone)]
pub struct FeedbackController {
    policy: FeedbackPolicy,
    gain_coeff: f64,
    drive: f64,
    /// Signal history feeding the gain, oldest first, pre-filled with
    /// `delay_steps` zeros so the first windows apply no feedback.
    ring: VecDeque<f64>,
    prev_field: f64,
    alpha_abs: f64,
}

impl FeedbackController {
    pub fn new(policy: &FeedbackPolicy, cfg: &SimConfig) -> Self {
        let drive = if policy.enabled && policy.constant_drive {
            constant_drive(policy.theta, cfg)
        } else {
            0.0
        };
        let mut ring = VecDeque::from(vec![0.0; policy.delay_steps]);
        FeedbackController {
            policy: *policy,
            gain_coeff: -(1.0 + policy.theta.cos()) / 2.0,
            drive,
            ring,
            prev_field: 0.0,
            alpha_abs: cfg.alpha_abs,
        }
    }

    /// Process one window: given the fluctuation outcome, produce the raw
    /// detector reading and the field to apply this window (responding to
    /// the signal from `delay_steps` windows ago).
    pub fn apply_window(&mut self, fluct: MeasurementSample) -> WindowOutcome {
        let raw_dn = fluct.dn + next_signal_shift(self.prev_field, self.alpha_abs);
        let gain_signal = if self.policy.signal_correction {
            fluct.x
        } else {
            raw_dn / self.alpha_abs
        };
        self.ring.push_back(gain_signal);
        let delayed = self.ring.pop_front().expect("ring is never empty after push");
        let field = if self.policy.enabled {
            self.gain_coeff * delayed + self.drive
        } else {
            0.0
        };
        self.prev_field = field;
        WindowOutcome { raw_dn, field }
    }
}
