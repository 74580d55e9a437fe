//! Homodyne projection amplitudes and measurement-outcome statistics.
//!
//! A balanced homodyne detector interferes the field scattered by the atom
//! with a strong local oscillator of amplitude `alpha` (taken real positive;
//! all phase information lives in the rotating frame) and counts photons
//! `(n_+, n_-)` per window. Only the difference `dn = n_+ - n_-` matters for
//! the atomic state: it measures the field quadrature in phase with the local
//! oscillator, with value `dn / (2 alpha)` and vacuum variance 1/4.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::{DnSampling, SimConfig};
use crate::error::{Error, Result};
use crate::state::BlochVector;

/// One photon-number-difference outcome, carrying both the raw value and the
/// normalized quadrature variable `x = dn / alpha_abs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementSample {
    pub dn: f64,
    pub x: f64,
}

impl MeasurementSample {
    pub fn from_dn(dn: f64, alpha_abs: f64) -> Self {
        MeasurementSample {
            dn,
            x: dn / alpha_abs,
        }
    }
}

/// Gaussian distribution of the photon-number difference per window.
/// The variance is `alpha_abs^2` exactly; only the mean carries state
/// information (it is linear in `sqrt(gamma tau) * s_x`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DnDistribution {
    mean: f64,
    alpha_abs: f64,
}

impl DnDistribution {
    pub fn new(mean: f64, alpha_abs: f64) -> Self {
        DnDistribution { mean, alpha_abs }
    }

    /// Vacuum-input statistics: zero mean.
    pub fn vacuum(alpha_abs: f64) -> Self {
        DnDistribution::new(0.0, alpha_abs)
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.alpha_abs * self.alpha_abs
    }

    pub fn alpha_abs(&self) -> f64 {
        self.alpha_abs
    }

    /// Probability density at `dn`.
    pub fn density(&self, dn: f64) -> f64 {
        let var = self.variance();
        let d = dn - self.mean;
        (-d * d / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    }
}

fn require_positive_alpha(alpha_abs: f64) -> Result<()> {
    if alpha_abs <= 0.0 || !alpha_abs.is_finite() {
        return Err(Error::invalid(
            "alpha",
            format!("{alpha_abs} (must be > 0)"),
        ));
    }
    Ok(())
}

fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Joint probability of counting `(n_+, n_-)` photons with vacuum input:
/// `exp(-|alpha|^2) / (n_+! n_-!) * (|alpha|^2 / 2)^(n_+ + n_-)`.
///
/// For fixed total `N = n_+ + n_-` this is the binomial law of photons
/// scattered randomly at the beam splitter.
pub fn vacuum_joint_distribution(n_plus: u64, n_minus: u64, alpha_abs: f64) -> Result<f64> {
    require_positive_alpha(alpha_abs)?;
    let a2 = alpha_abs * alpha_abs;
    let n = n_plus + n_minus;
    let ln_p =
        -a2 + n as f64 * (a2 / 2.0).ln() - ln_factorial(n_plus) - ln_factorial(n_minus);
    Ok(ln_p.exp())
}

/// Gaussian density of the vacuum photon-number difference,
/// `(2 pi alpha^2)^(-1/2) exp(-dn^2 / (2 alpha^2))`.
pub fn vacuum_dn_distribution(dn: f64, alpha_abs: f64) -> Result<f64> {
    require_positive_alpha(alpha_abs)?;
    Ok(DnDistribution::vacuum(alpha_abs).density(dn))
}

/// Amplitudes of the simplified projection state for outcome `dn`:
/// the Gaussian envelope `(2 pi alpha^2)^(-1/4) exp(-dn^2/(4 alpha^2))` on
/// the vacuum component, and the coefficient `dn / alpha_abs` on the
/// one-photon component (real, since alpha is real by convention).
pub fn projection_amplitudes(dn: f64, alpha_abs: f64) -> Result<(f64, f64)> {
    require_positive_alpha(alpha_abs)?;
    let a2 = alpha_abs * alpha_abs;
    let envelope =
        (2.0 * std::f64::consts::PI * a2).powf(-0.25) * (-dn * dn / (4.0 * a2)).exp();
    Ok((envelope, dn / alpha_abs))
}

/// Outcome distribution for a weak coherent input `beta` (|beta| << 1):
/// Gaussian with mean `alpha* beta + beta* alpha = 2 alpha Re(beta)` and
/// unchanged variance `alpha^2`.
pub fn weak_field_dn_distribution(beta: Complex64, alpha_abs: f64) -> Result<DnDistribution> {
    require_positive_alpha(alpha_abs)?;
    if beta.norm() >= 0.2 {
        return Err(Error::invalid(
            "beta",
            format!("|beta| = {} (weak-field expansion needs |beta| < 0.2)", beta.norm()),
        ));
    }
    Ok(DnDistribution::new(2.0 * alpha_abs * beta.re, alpha_abs))
}

/// Outcome distribution conditioned on the atomic state: mean
/// `alpha_abs * sqrt(gamma tau) * s_x`, variance `alpha^2`.
///
/// Only the in-phase dipole `s_x` shifts the in-phase quadrature; `s_y` and
/// `s_z` are invisible to a single window.
pub fn atom_dn_distribution(s: BlochVector, cfg: &SimConfig) -> DnDistribution {
    DnDistribution::new(
        cfg.alpha_abs * cfg.gamma_tau().sqrt() * s.sx,
        cfg.alpha_abs,
    )
}

/// Draw one outcome. Continuous mode samples the Gaussian directly; integer
/// mode samples the lattice Gaussian renormalized over all integers (the
/// parity constraint tying `dn` to the total photon number is dropped, since
/// the total is marginalized out).
///
/// Deterministic given the RNG state.
pub fn sample_dn<R: Rng + ?Sized>(
    dist: &DnDistribution,
    sampling: DnSampling,
    rng: &mut R,
) -> MeasurementSample {
    let dn = match sampling {
        DnSampling::Continuous => {
            let z: f64 = rng.sample(StandardNormal);
            dist.mean() + dist.alpha_abs() * z
        }
        DnSampling::Integer => sample_lattice_gaussian(dist.mean(), dist.alpha_abs(), rng),
    };
    MeasurementSample::from_dn(dn, dist.alpha_abs())
}

/// Inverse-CDF sample of the lattice Gaussian, walking outward from the
/// rounded mean in order of decreasing weight. For sigma^2 >= 100 the lattice
/// normalizer equals sqrt(2 pi sigma^2) to machine precision (the Poisson
/// summation correction is ~exp(-2 pi^2 sigma^2)), which the config
/// validation guarantees.
fn sample_lattice_gaussian<R: Rng + ?Sized>(mean: f64, sigma: f64, rng: &mut R) -> f64 {
    let z = (2.0 * std::f64::consts::PI).sqrt() * sigma;
    let mut u: f64 = rng.random::<f64>() * z;
    let k0 = mean.round();
    let weight = |k: f64| {
        let d = (k - mean) / sigma;
        (-d * d / 2.0).exp()
    };
    let w0 = weight(k0);
    if u <= w0 {
        return k0;
    }
    u -= w0;
    let reach = (20.0 * sigma).ceil() as i64 + 2;
    for j in 1..=reach {
        for k in [k0 + j as f64, k0 - j as f64] {
            let w = weight(k);
            if u <= w {
                return k;
            }
            u -= w;
        }
    }
    // Leftover mass beyond 20 sigma is below f64 resolution.
    k0
}

/// Lattice-Gaussian pmf with the exact normalizer summed over a wide window;
/// used by tests to compare integer sampling against the continuous density.
pub fn lattice_gaussian_pmf(k: i64, mean: f64, sigma: f64) -> f64 {
    let reach = (20.0 * sigma).ceil() as i64 + 2;
    let k0 = mean.round() as i64;
    let weight = |k: i64| {
        let d = (k as f64 - mean) / sigma;
        (-d * d / 2.0).exp()
    };
    let z: f64 = (k0 - reach..=k0 + reach).map(weight).sum();
    weight(k) / z
}
