//! Stochastic Bloch-vector step per measurement window and its analytics.
//!
//! One window changes the Bloch vector by four terms: a fluctuation term
//! linear in the outcome (`sqrt(gamma tau) dn/alpha`, the random walk), a
//! compensation term quadratic in the outcome that cancels the walk's mean,
//! and two drift terms (dipole emission and a mixed fluctuation-dipole
//! effect) acting on the `1/gamma` timescale. On the unit sphere all four
//! are tangent, so the norm defect per window is second order and a final
//! rescaling keeps trajectories pure.

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::measurement::MeasurementSample;
use crate::state::{BlochVector, Vec3};

/// Largest admissible single-window change; beyond this the truncation that
/// derives the step is not trustworthy. At valid window lengths
/// (`gamma tau <= 1e-2`) reaching it takes a > 7.9 sigma outcome, while at
/// `gamma tau ~ 0.1` ordinary outcomes trip it within a few windows.
pub const MAX_STEP_NORM: f64 = 0.5;

/// Largest admissible one-window norm inflation factor (relative, so the
/// renormalize-off diagnostic can accumulate its slow norm drift).
pub const MAX_NORM_GROWTH: f64 = 1.15;

/// Direction of the fluctuation (and compensation) terms:
/// `(1 + s_z - s_x^2, -s_x s_y, -s_x (1 + s_z))`.
pub fn fluctuation_direction(s: BlochVector) -> Vec3 {
    Vec3::new(
        1.0 + s.sz - s.sx * s.sx,
        -s.sx * s.sy,
        -s.sx * (1.0 + s.sz),
    )
}

/// Direction of the dipole (and mixed) drift terms:
/// `(s_x s_z, s_y s_z, s_z^2 - 1)`.
pub fn drift_direction(s: BlochVector) -> Vec3 {
    Vec3::new(s.sx * s.sz, s.sy * s.sz, s.sz * s.sz - 1.0)
}

/// The four contributions to one window's Bloch change, kept separate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochStep {
    /// `sqrt(gamma tau) (dn/alpha)` times the fluctuation direction.
    pub fluctuation: Vec3,
    /// `-gamma tau (dn/alpha)^2 s_x` times the fluctuation direction.
    pub compensation: Vec3,
    /// `(gamma tau / 2) (dn/alpha)^2 (1 + s_z)` times the drift direction.
    pub mixed: Vec3,
    /// `(gamma tau / 2)` times the drift direction.
    pub dipole: Vec3,
}

impl BlochStep {
    pub fn total(&self) -> Vec3 {
        self.fluctuation + self.compensation + self.mixed + self.dipole
    }
}

/// The conditional Bloch change for outcome `dn`, term by term.
pub fn diffusion_step(s: BlochVector, sample: MeasurementSample, cfg: &SimConfig) -> BlochStep {
    let gt = cfg.gamma_tau();
    let x = sample.x;
    let d = fluctuation_direction(s);
    let p = drift_direction(s);
    BlochStep {
        fluctuation: d * (gt.sqrt() * x),
        compensation: d * (-gt * x * x * s.sx),
        mixed: p * (gt / 2.0 * x * x * (1.0 + s.sz)),
        dipole: p * (gt / 2.0),
    }
}

/// Apply a precomputed increment to the state. Rejects changes outside the
/// short-step regime; rescales back to unit length when `renormalize` is set
/// and the input was pure.
pub fn apply_increment(s: BlochVector, delta: Vec3, renormalize: bool) -> Result<BlochVector> {
    let magnitude = delta.norm();
    if magnitude > MAX_STEP_NORM {
        return Err(Error::StepViolation { magnitude });
    }
    let moved = s.displaced(delta);
    let n = moved.norm();
    if n > MAX_NORM_GROWTH * s.norm().max(1.0) {
        return Err(Error::StepViolation { magnitude: n });
    }
    if renormalize && s.is_unit() {
        Ok(moved.normalized())
    } else {
        Ok(moved)
    }
}

pub fn apply_step(s: BlochVector, step: &BlochStep, renormalize: bool) -> Result<BlochVector> {
    apply_increment(s, step.total(), renormalize)
}

/// Diffusion constant `<ds^2>/tau = gamma (1 + s_z)^2`: maximal for the
/// excited state, zero for the ground state, phase independent.
pub fn diffusion_constant(s: BlochVector, cfg: &SimConfig) -> f64 {
    cfg.gamma * (1.0 + s.sz) * (1.0 + s.sz)
}

/// Orthonormal frame of the fluctuation step on the unit sphere.
#[derive(Debug, Clone, Copy)]
pub struct StepDirection {
    /// Perpendicular to both `s` and the z axis (pure phase diffusion).
    pub e_perp: Vec3,
    /// Perpendicular to `s` and to `e_perp` (excitation diffusion).
    pub e_par: Vec3,
    /// Weights `(s_y, s_x) / sqrt(s_x^2 + s_y^2)`; the normalized
    /// fluctuation direction is `w_perp e_perp + w_par e_par`.
    pub w_perp: f64,
    pub w_par: f64,
}

/// Decompose the fluctuation direction at `s` (unit, off the poles) into
/// phase diffusion and excitation diffusion.
pub fn step_direction(s: BlochVector) -> Result<StepDirection> {
    let r2 = s.sx * s.sx + s.sy * s.sy;
    if r2 < 1e-24 {
        return Err(Error::UndefinedDirection);
    }
    let r = r2.sqrt();
    Ok(StepDirection {
        e_perp: Vec3::new(s.sy / r, -s.sx / r, 0.0),
        e_par: Vec3::new(s.sx * s.sz / r, s.sy * s.sz / r, -r2 / r),
        w_perp: s.sy / r,
        w_par: s.sx / r,
    })
}

/// Expected Bloch change per window, using the outcome moments
/// `<dn/alpha> = sqrt(gamma tau) s_x` and `<(dn/alpha)^2> = 1`: the
/// fluctuation mean cancels against the compensation term, leaving
/// `(gamma tau / 2)(2 + s_z)` times the drift direction.
pub fn mean_drift(s: BlochVector, cfg: &SimConfig) -> Vec3 {
    drift_direction(s) * (cfg.gamma_tau() / 2.0 * (2.0 + s.sz))
}

/// Ensemble Bloch equation right-hand side:
/// `d<s>/dt = -gamma (<s_x>/2, <s_y>/2, <s_z> + 1)`.
pub fn ensemble_bloch_rhs(s_mean: Vec3, gamma: f64) -> Vec3 {
    Vec3::new(
        -gamma * s_mean.x / 2.0,
        -gamma * s_mean.y / 2.0,
        -gamma * (s_mean.z + 1.0),
    )
}

/// Closed-form solution of the ensemble equation from `s0` after time `t`.
pub fn master_equation_reference(s0: Vec3, t: f64, gamma: f64) -> Vec3 {
    let half = (-gamma * t / 2.0).exp();
    Vec3::new(
        s0.x * half,
        s0.y * half,
        (s0.z + 1.0) * (-gamma * t).exp() - 1.0,
    )
}

/// Relative contributions to the exponential decay of `<s_z>` for a pure
/// ensemble (`|<s>| = 1`); the three always sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayContributions {
    pub q_diffusion: f64,
    pub q_dipole: f64,
    pub q_mixed: f64,
}

pub fn decay_contributions(s_z: f64) -> DecayContributions {
    DecayContributions {
        q_diffusion: 0.5 * (1.0 + s_z) * s_z,
        q_dipole: 0.5 * (1.0 - s_z),
        q_mixed: 0.5 * (1.0 - s_z * s_z),
    }
}

/// Split the ensemble time derivative into a rotation orthogonal to `<s>`
/// and a shrinkage parallel to it. On the unit sphere the two parts sum to
/// [`ensemble_bloch_rhs`] exactly, the shrink rate being half the diffusion
/// constant.
pub fn bloch_decay_decomposition(s_mean: Vec3, gamma: f64) -> Result<(Vec3, Vec3)> {
    let r2 = s_mean.norm_sq();
    if r2 < 1e-24 {
        return Err(Error::UndefinedDecomposition);
    }
    let r = r2.sqrt();
    let rotation = Vec3::new(
        s_mean.z * s_mean.x,
        s_mean.z * s_mean.y,
        s_mean.z * s_mean.z - r2,
    ) * (gamma / 2.0 * (2.0 + s_mean.z) / r2);
    let shrink = s_mean * (-gamma / 2.0 * (r + s_mean.z).powi(2) / r2);
    Ok((rotation, shrink))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimConfig;
    use crate::measurement::{atom_dn_distribution, sample_dn, MeasurementSample};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn cfg_gt(gt: f64) -> SimConfig {
        SimConfig {
            gamma: 1.0,
            tau: gt,
            ..SimConfig::default()
        }
    }

    fn sample(x: f64, alpha: f64) -> MeasurementSample {
        MeasurementSample::from_dn(x * alpha, alpha)
    }

    fn random_unit(rng: &mut ChaCha8Rng) -> BlochVector {
        loop {
            let v = Vec3::new(
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            );
            if v.norm() > 1e-3 {
                return BlochVector::from_vec(v * (1.0 / v.norm()));
            }
        }
    }

    #[test]
    fn ground_state_does_not_move() {
        let cfg = cfg_gt(1e-3);
        for x in [-4.0, 0.0, 2.5] {
            let step = diffusion_step(BlochVector::GROUND, sample(x, cfg.alpha_abs), &cfg);
            assert_eq!(step.total(), Vec3::ZERO);
        }
    }

    #[test]
    fn excited_state_step_is_pure_fluctuation() {
        let cfg = cfg_gt(1e-3);
        let x = 1.7;
        let step = diffusion_step(BlochVector::EXCITED, sample(x, cfg.alpha_abs), &cfg);
        let want = 2.0 * cfg.gamma_tau().sqrt() * x;
        assert!((step.total().x - want).abs() < 1e-15);
        assert_eq!(step.total().y, 0.0);
        assert_eq!(step.total().z, 0.0);
    }

    #[test]
    fn dipole_eigenstate_with_zero_outcome_decays() {
        let cfg = cfg_gt(1e-3);
        let step = diffusion_step(
            BlochVector::new(1.0, 0.0, 0.0),
            sample(0.0, cfg.alpha_abs),
            &cfg,
        );
        // only the dipole term survives: (gt/2)(0, 0, -1)
        assert_eq!(step.fluctuation, Vec3::ZERO);
        assert_eq!(step.compensation, Vec3::ZERO);
        assert_eq!(step.mixed, Vec3::ZERO);
        assert!((step.total().z + 5e-4).abs() < 1e-18);
        assert_eq!((step.total().x, step.total().y), (0.0, 0.0));
    }

    #[test]
    fn term_alignment_invariants() {
        // fluctuation || compensation, mixed || dipole; on the sphere the
        // fluctuation and dipole terms are exactly tangent
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let cfg = cfg_gt(1e-3);
        for _ in 0..10_000 {
            let s = random_unit(&mut rng);
            let x: f64 = rng.sample(StandardNormal);
            let step = diffusion_step(s, sample(x, cfg.alpha_abs), &cfg);
            let cross_norm = |a: Vec3, b: Vec3| {
                (a.y * b.z - a.z * b.y).abs()
                    + (a.z * b.x - a.x * b.z).abs()
                    + (a.x * b.y - a.y * b.x).abs()
            };
            assert!(cross_norm(step.fluctuation, step.compensation) < 1e-12);
            assert!(cross_norm(step.mixed, step.dipole) < 1e-12);
            assert!(step.fluctuation.dot(s.as_vec()).abs() < 1e-12);
            assert!(step.dipole.dot(s.as_vec()).abs() < 1e-12);
        }
    }

    #[test]
    fn apply_step_identity_and_guards() {
        let s = BlochVector::new(0.6, 0.0, 0.8);
        let zero = BlochStep {
            fluctuation: Vec3::ZERO,
            compensation: Vec3::ZERO,
            mixed: Vec3::ZERO,
            dipole: Vec3::ZERO,
        };
        assert_eq!(apply_step(s, &zero, true).unwrap(), s);
        assert!(matches!(
            apply_increment(s, Vec3::new(0.6, 0.0, 0.0), true),
            Err(Error::StepViolation { .. })
        ));
        // non-tangent abuse that inflates the norm past the growth guard
        assert!(apply_increment(s, Vec3::new(0.24, 0.0, 0.32), false).is_err());
    }

    #[test]
    fn renormalized_step_matches_the_posterior_image() {
        // excited state, dn/alpha = 1: the step tilts the vector by about
        // 2 sqrt(gamma tau) toward +x, staying unit
        let cfg = cfg_gt(1e-3);
        let step = diffusion_step(BlochVector::EXCITED, sample(1.0, cfg.alpha_abs), &cfg);
        let s1 = apply_step(BlochVector::EXCITED, &step, true).unwrap();
        assert!((s1.norm() - 1.0).abs() < 1e-15);
        let tilt = s1.sx.atan2(s1.sz);
        assert!((tilt - 2.0 * cfg.gamma_tau().sqrt()).abs() < 2e-4, "tilt {tilt}");
    }

    #[test]
    fn unrenormalized_norm_drifts_at_first_order() {
        // each window inflates the squared norm by ~ gamma tau x^2 (1+s_z)^2,
        // so the defect accumulates at first order in gamma tau; the
        // renormalized path stays exactly unit on the same outcome stream
        let cfg = cfg_gt(1e-4);
        let n = 1000;
        let mut raw = BlochVector::EXCITED;
        let mut kept = BlochVector::EXCITED;
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..n {
            let d = atom_dn_distribution(kept, &cfg);
            let m = sample_dn(&d, crate::config::DnSampling::Continuous, &mut rng);
            raw = apply_step(raw, &diffusion_step(raw, m, &cfg), false).unwrap();
            kept = apply_step(kept, &diffusion_step(kept, m, &cfg), true).unwrap();
        }
        let defect = (raw.norm() - 1.0).abs();
        let expected = cfg.gamma_tau() * n as f64; // order of magnitude
        assert!(
            defect > 0.2 * expected && defect < 50.0 * expected,
            "norm defect {defect} should be first order (scale {expected})"
        );
        assert!((kept.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diffusion_constant_examples() {
        let cfg = cfg_gt(1e-3);
        assert_eq!(diffusion_constant(BlochVector::EXCITED, &cfg), 4.0);
        assert_eq!(diffusion_constant(BlochVector::GROUND, &cfg), 0.0);
        assert_eq!(
            diffusion_constant(BlochVector::new(1.0, 0.0, 0.0), &cfg),
            1.0
        );
    }

    #[test]
    fn step_direction_examples() {
        let d = step_direction(BlochVector::new(0.0, 1.0, 0.0)).unwrap();
        assert!((d.w_perp - 1.0).abs() < 1e-15 && d.w_par.abs() < 1e-15);

        let d = step_direction(BlochVector::new(1.0, 0.0, 0.0)).unwrap();
        assert!((d.w_par - 1.0).abs() < 1e-15 && d.w_perp.abs() < 1e-15);
        assert_eq!(d.e_par.y, 0.0);

        let r = 1.0 / 2.0_f64.sqrt();
        let d = step_direction(BlochVector::new(r, r, 0.0)).unwrap();
        assert!((d.w_perp / d.w_par - 1.0).abs() < 1e-12); // tan^2(pi/4) = 1

        assert!(matches!(
            step_direction(BlochVector::EXCITED),
            Err(Error::UndefinedDirection)
        ));
    }

    #[test]
    fn direction_frame_reconstructs_the_fluctuation() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..10_000 {
            let s = random_unit(&mut rng);
            if s.sx * s.sx + s.sy * s.sy < 1e-6 {
                continue;
            }
            let f = fluctuation_direction(s);
            if f.norm() < 1e-8 {
                continue; // ground pole: direction degenerate
            }
            let d = step_direction(s).unwrap();
            assert!((d.e_perp.norm() - 1.0).abs() < 1e-12);
            assert!((d.e_par.norm() - 1.0).abs() < 1e-12);
            assert!(d.e_perp.dot(d.e_par).abs() < 1e-12);
            let rebuilt = d.e_perp * d.w_perp + d.e_par * d.w_par;
            let err = (rebuilt - f * (1.0 / f.norm())).norm();
            assert!(err < 1e-9, "frame error {err} at {s:?}");
        }
    }

    #[test]
    fn mean_drift_examples() {
        let cfg = cfg_gt(1e-3);
        assert_eq!(mean_drift(BlochVector::EXCITED, &cfg), Vec3::ZERO);
        let d = mean_drift(BlochVector::new(1.0, 0.0, 0.0), &cfg);
        assert!((d.z + cfg.gamma_tau()).abs() < 1e-18);
        assert_eq!((d.x, d.y), (0.0, 0.0));
    }

    #[test]
    fn mean_drift_matches_monte_carlo() {
        let cfg = cfg_gt(1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for s in [
            BlochVector::new(0.48, 0.6, 0.64),
            BlochVector::new(-0.6, 0.0, 0.8),
        ] {
            let dist = atom_dn_distribution(s, &cfg);
            let n = 1_000_000;
            let mut acc = Vec3::ZERO;
            for _ in 0..n {
                let m = sample_dn(&dist, crate::config::DnSampling::Continuous, &mut rng);
                acc += diffusion_step(s, m, &cfg).total();
            }
            let mc = acc * (1.0 / n as f64);
            let want = mean_drift(s, &cfg);
            // dominant noise: fluctuation term, sd ~ sqrt(gt)*|D|/sqrt(n)
            let se = cfg.gamma_tau().sqrt() * fluctuation_direction(s).norm()
                / (n as f64).sqrt();
            let err = (mc - want).norm();
            assert!(err < 4.0 * se + 1e-9, "err {err} vs se {se} at {s:?}");
        }
    }

    #[test]
    fn fluctuation_variance_matches_the_diffusion_constant() {
        // <(ds_fluct)^2>/tau = gamma (1+s_z)^2 within 2% at 1e6 samples
        let cfg = cfg_gt(1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for sz in [-0.9f64, 0.0, 0.5, 1.0] {
            let sx = (1.0 - sz * sz).max(0.0).sqrt();
            let s = BlochVector::new(sx, 0.0, sz).normalized();
            let dist = atom_dn_distribution(s, &cfg);
            let n = 1_000_000;
            let mut acc = 0.0;
            for _ in 0..n {
                let m = sample_dn(&dist, crate::config::DnSampling::Continuous, &mut rng);
                acc += diffusion_step(s, m, &cfg).fluctuation.norm_sq();
            }
            let rate = acc / n as f64 / cfg.tau;
            let want = diffusion_constant(s, &cfg);
            if want == 0.0 {
                assert!(rate < 1e-12);
            } else {
                assert!((rate / want - 1.0).abs() < 0.02, "rate {rate} want {want}");
            }
        }
    }

    #[test]
    fn ensemble_rhs_and_reference() {
        assert_eq!(
            ensemble_bloch_rhs(Vec3::new(0.0, 0.0, -1.0), 1.0),
            Vec3::ZERO
        );
        assert_eq!(
            ensemble_bloch_rhs(Vec3::new(0.0, 0.0, 1.0), 1.0),
            Vec3::new(0.0, 0.0, -2.0)
        );
        assert_eq!(
            ensemble_bloch_rhs(Vec3::new(1.0, 0.0, 0.0), 1.0),
            Vec3::new(-0.5, 0.0, -1.0)
        );

        let s0 = Vec3::new(0.3, -0.2, 0.5);
        assert_eq!(master_equation_reference(s0, 0.0, 1.0), s0);
        let s = master_equation_reference(Vec3::new(0.0, 0.0, 1.0), 1.0, 1.0);
        assert!((s.z - (2.0 * (-1.0_f64).exp() - 1.0)).abs() < 1e-15);
        let s = master_equation_reference(s0, 200.0, 1.0);
        assert!((s.z + 1.0).abs() < 1e-12 && s.x.abs() < 1e-12);
    }

    #[test]
    fn decay_contribution_examples_and_sum() {
        let q = decay_contributions(1.0);
        assert_eq!((q.q_diffusion, q.q_dipole, q.q_mixed), (1.0, 0.0, 0.0));
        let q = decay_contributions(0.0);
        assert_eq!((q.q_diffusion, q.q_dipole, q.q_mixed), (0.0, 0.5, 0.5));
        let q = decay_contributions(-1.0);
        assert_eq!((q.q_diffusion, q.q_dipole, q.q_mixed), (0.0, 1.0, 0.0));
        let mut sz = -1.0;
        while sz <= 1.0 {
            let q = decay_contributions(sz);
            assert!((q.q_diffusion + q.q_dipole + q.q_mixed - 1.0).abs() < 1e-15);
            sz += 0.01;
        }
    }

    #[test]
    fn decay_decomposition() {
        // shrink rate at the excited pole is 2 gamma, half the diffusion constant
        let (_, shrink) = bloch_decay_decomposition(Vec3::new(0.0, 0.0, 1.0), 1.0).unwrap();
        assert!((shrink.z + 2.0).abs() < 1e-15);
        // no shrinkage at the ground state
        let (_, shrink) = bloch_decay_decomposition(Vec3::new(0.0, 0.0, -1.0), 1.0).unwrap();
        assert_eq!(shrink, Vec3::ZERO);
        assert!(bloch_decay_decomposition(Vec3::ZERO, 1.0).is_err());

        // the two parts sum to the ensemble equation on the unit sphere
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..10_000 {
            let s = random_unit(&mut rng).as_vec();
            let (rot, shrink) = bloch_decay_decomposition(s, 1.0).unwrap();
            assert!(rot.dot(s).abs() < 1e-12);
            let err = (rot + shrink - ensemble_bloch_rhs(s, 1.0)).norm();
            assert!(err < 1e-12, "decomposition mismatch {err}");
        }
    }
}
