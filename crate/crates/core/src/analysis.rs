//! Rate fitting and empirical diffusion-law estimation on recorded
//! trajectories.

use crate::ensemble::TrajectoryRecord;
use crate::error::{Error, Result};

/// Log-linear decay fit result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// Decay rate (positive for decaying series) in the units of the time
    /// axis; negative values mean growth.
    pub rate: f64,
    /// Standard error of the rate from the fit residuals.
    pub std_error: f64,
}

/// Least-squares fit of `ln v = a - rate * t`. The series must be strictly
/// positive (fit `s_z + 1` or `|s_x|`, removing offsets first).
pub fn fit_decay_rate(times: &[f64], values: &[f64]) -> Result<DecayFit> {
    if times.len() != values.len() {
        return Err(Error::FitDomain(format!(
            "length mismatch: {} times vs {} values",
            times.len(),
            values.len()
        )));
    }
    if times.len() < 3 {
        return Err(Error::FitDomain("need at least 3 points".into()));
    }
    let mut logs = Vec::with_capacity(values.len());
    for (i, v) in values.iter().enumerate() {
        if *v <= 0.0 || v.is_nan() {
            return Err(Error::FitDomain(format!(
                "non-positive value {v} at index {i} (remove the offset first)"
            )));
        }
        logs.push(v.ln());
    }
    let n = times.len() as f64;
    let t_mean = times.iter().sum::<f64>() / n;
    let l_mean = logs.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (t, l) in times.iter().zip(&logs) {
        sxx += (t - t_mean) * (t - t_mean);
        sxy += (t - t_mean) * (l - l_mean);
    }
    if sxx == 0.0 {
        return Err(Error::FitDomain("degenerate time axis".into()));
    }
    let slope = sxy / sxx;
    let intercept = l_mean - slope * t_mean;
    let mut sse = 0.0;
    for (t, l) in times.iter().zip(&logs) {
        let r = l - (intercept + slope * t);
        sse += r * r;
    }
    let se = (sse / (n - 2.0) / sxx).sqrt();
    Ok(DecayFit {
        rate: -slope,
        std_error: se,
    })
}

/// Which diffusion law a record set is binned against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffusionLaw {
    /// No feedback: bin by pre-step `s_z`, reference `gamma (1 + s_z)^2`.
    SpontaneousSz,
    /// Equatorial stabilization: bin by pre-step `s_x`, reference
    /// `gamma (1 - s_x^2)`.
    DipoleStabilizedSx,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionBin {
    pub center: f64,
    pub n_samples: u64,
    /// Empirical `<|ds|^2> / tau` in units of gamma.
    pub mean_rate: f64,
    /// The law evaluated sample-by-sample over the bin, same units.
    pub reference_rate: f64,
}

/// Bin per-window squared displacements by the pre-step coordinate and
/// compare against the analytic diffusion constant. Needs stride-1 records
/// (consecutive windows). Empty bins are dropped.
pub fn estimate_diffusion_constant(
    records: &[TrajectoryRecord],
    law: DiffusionLaw,
    centers: &[f64],
    half_width: f64,
) -> Result<Vec<DiffusionBin>> {
    if half_width <= 0.0 || half_width.is_nan() {
        return Err(Error::invalid("half_width", "must be > 0"));
    }
    let mut count = vec![0u64; centers.len()];
    let mut rate_sum = vec![0.0; centers.len()];
    let mut ref_sum = vec![0.0; centers.len()];
    for rec in records {
        if rec.stride != 1 {
            return Err(Error::invalid(
                "stride",
                format!("{} (diffusion estimation needs stride-1 records)", rec.stride),
            ));
        }
        for j in 0..rec.states.len() - 1 {
            let pre = rec.states[j];
            let dt = rec.times[j + 1] - rec.times[j];
            let (coord, reference) = match law {
                DiffusionLaw::SpontaneousSz => (pre.sz, (1.0 + pre.sz) * (1.0 + pre.sz)),
                DiffusionLaw::DipoleStabilizedSx => (pre.sx, 1.0 - pre.sx * pre.sx),
            };
            for (b, center) in centers.iter().enumerate() {
                if (coord - center).abs() <= half_width {
                    let ds = (rec.states[j + 1].as_vec() - pre.as_vec()).norm_sq();
                    count[b] += 1;
                    rate_sum[b] += ds / dt;
                    ref_sum[b] += reference;
                }
            }
        }
    }
    Ok(centers
        .iter()
        .enumerate()
        .filter(|(b, _)| count[*b] > 0)
        .map(|(b, center)| DiffusionBin {
            center: *center,
            n_samples: count[b],
            mean_rate: rate_sum[b] / count[b] as f64,
            reference_rate: ref_sum[b] / count[b] as f64,
        })
        .collect())
}
