//! Seeded trajectory runner and parallel ensemble statistics.
//!
//! A trajectory advances one state window by window: sample the outcome from
//! the current state's distribution, update the representation (exact
//! amplitudes, Bloch fast path, or both on the same outcome stream), apply
//! the feedback kick, record. Per-trajectory randomness comes from a
//! counter-based stream split — trajectory `i` of a run seeded with `seed`
//! uses `ChaCha8Rng::seed_from_u64(seed)` on stream `i` — so results do not
//! depend on scheduling or worker count.
//!
//! Ensembles accumulate fixed-size trajectory blocks in index order and fold
//! the blocks in index order, which makes the statistics bit-identical for
//! any degree of parallelism (and for the sequential fallback).

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::config::{Mode, SimConfig};
use crate::diffusion::{apply_increment, diffusion_step};
use crate::error::{Error, Result};
use crate::feedback::{feedback_kick, FeedbackController, FeedbackPolicy};
use crate::measurement::{atom_dn_distribution, sample_dn};
use crate::state::{bloch_from_state, state_from_bloch, AtomState, BlochVector, Vec3};
use crate::statevec::{posterior_state, rotate_about_sy};

/// Trajectories processed per scheduling unit; fixed so that the summation
/// order never depends on the worker count.
const TRAJ_BLOCK: u64 = 32;

/// Starting state, in either representation.
#[derive(Debug, Clone, Copy)]
pub enum InitialState {
    Bloch(BlochVector),
    Atom(AtomState),
}

impl InitialState {
    pub fn bloch(&self) -> BlochVector {
        match self {
            InitialState::Bloch(s) => *s,
            InitialState::Atom(a) => bloch_from_state(*a),
        }
    }

    pub fn atom(&self) -> Result<AtomState> {
        match self {
            InitialState::Atom(a) => Ok(*a),
            InitialState::Bloch(s) => state_from_bloch(*s),
        }
    }
}

impl From<BlochVector> for InitialState {
    fn from(s: BlochVector) -> Self {
        InitialState::Bloch(s)
    }
}

impl From<AtomState> for InitialState {
    fn from(a: AtomState) -> Self {
        InitialState::Atom(a)
    }
}

/// Recorded time series of one trajectory. At stride 1 there are
/// `n_steps + 1` states and `n_steps` samples/fields; larger strides record
/// every stride-th window plus the final one.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    /// Times in units of `1/gamma`.
    pub times: Vec<f64>,
    /// Bloch states (the Bloch path in `both` mode).
    pub states: Vec<BlochVector>,
    /// Bloch image of the exact amplitude path; only in `both` mode.
    pub statevec_states: Option<Vec<BlochVector>>,
    /// Raw detector readings (including the reflected control field).
    pub samples: Vec<f64>,
    /// Control field applied per recorded window.
    pub fields: Vec<f64>,
    pub seed: u64,
    pub stream: u64,
    pub stride: usize,
}

/// The RNG for trajectory `stream` of a run seeded with `seed`.
pub fn trajectory_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Run a single trajectory on stream 0.
pub fn run_trajectory(
    cfg: &SimConfig,
    policy: &FeedbackPolicy,
    s0: InitialState,
    seed: u64,
) -> Result<TrajectoryRecord> {
    run_trajectory_stream(cfg, policy, s0, seed, 0)
}

/// Run the trajectory with the given stream index (used by ensembles).
pub fn run_trajectory_stream(
    cfg: &SimConfig,
    policy: &FeedbackPolicy,
    s0: InitialState,
    seed: u64,
    stream: u64,
) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    policy.validate()?;
    let mut rng = trajectory_rng(seed, stream);
    let stride = cfg.effective_stride();
    let gt = cfg.gamma_tau();
    let kick_scale = 2.0 * gt.sqrt();
    let mut controller = FeedbackController::new(policy, cfg);

    let mut atom = match cfg.mode {
        Mode::Statevec | Mode::Both => Some(s0.atom()?),
        Mode::Bloch => None,
    };
    let mut bloch = match cfg.mode {
        Mode::Bloch | Mode::Both => Some(s0.bloch()),
        Mode::Statevec => None,
    };

    let n_records = cfg.n_steps / stride + 2;
    let mut times = Vec::with_capacity(n_records);
    let mut states = Vec::with_capacity(n_records);
    let mut sv_states = if cfg.mode == Mode::Both {
        Some(Vec::with_capacity(n_records))
    } else {
        None
    };
    let mut samples = Vec::with_capacity(n_records);
    let mut fields = Vec::with_capacity(n_records);

    let primary = |atom: &Option<AtomState>, bloch: &Option<BlochVector>| match cfg.mode {
        Mode::Statevec => bloch_from_state(atom.expect("statevec mode carries amplitudes")),
        Mode::Bloch | Mode::Both => bloch.expect("bloch path present"),
    };

    times.push(0.0);
    states.push(primary(&atom, &bloch));
    if let (Some(sv), Some(a)) = (sv_states.as_mut(), atom.as_ref()) {
        sv.push(bloch_from_state(*a));
    }

    for k in 0..cfg.n_steps {
        // the exact path, when present, drives the outcome statistics
        let s_ref = match (&atom, &bloch) {
            (Some(a), _) => bloch_from_state(*a),
            (None, Some(s)) => *s,
            (None, None) => unreachable!(),
        };
        let dist = atom_dn_distribution(s_ref, cfg);
        let fluct = sample_dn(&dist, cfg.dn_sampling, &mut rng);
        let out = controller.apply_window(fluct);

        if let Some(a) = atom.as_mut() {
            let mut next = posterior_state(*a, fluct, cfg)?;
            if out.field != 0.0 {
                next = rotate_about_sy(next, kick_scale * out.field);
            }
            *a = next;
        }
        if let Some(s) = bloch.as_mut() {
            let mut delta = diffusion_step(*s, fluct, cfg).total();
            if out.field != 0.0 {
                delta += feedback_kick(*s, out.field, cfg);
            }
            *s = apply_increment(*s, delta, cfg.renormalize)?;
        }

        if (k + 1) % stride == 0 || k + 1 == cfg.n_steps {
            times.push((k + 1) as f64 * gt);
            states.push(primary(&atom, &bloch));
            if let (Some(sv), Some(a)) = (sv_states.as_mut(), atom.as_ref()) {
                sv.push(bloch_from_state(*a));
            }
            samples.push(out.raw_dn);
            fields.push(out.field);
        }
    }

    Ok(TrajectoryRecord {
        times,
        states,
        statevec_states: sv_states,
        samples,
        fields,
        seed,
        stream,
        stride,
    })
}

/// Second moments of the Bloch components (symmetric 3x3, six entries).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SecondMoments {
    pub xx: f64,
    pub xy: f64,
    pub xz: f64,
    pub yy: f64,
    pub yz: f64,
    pub zz: f64,
}

impl SecondMoments {
    fn add_outer(&mut self, s: BlochVector) {
        self.xx += s.sx * s.sx;
        self.xy += s.sx * s.sy;
        self.xz += s.sx * s.sz;
        self.yy += s.sy * s.sy;
        self.yz += s.sy * s.sz;
        self.zz += s.sz * s.sz;
    }

    fn add(&mut self, o: &SecondMoments) {
        self.xx += o.xx;
        self.xy += o.xy;
        self.xz += o.xz;
        self.yy += o.yy;
        self.yz += o.yz;
        self.zz += o.zz;
    }

    fn scaled(&self, k: f64) -> SecondMoments {
        SecondMoments {
            xx: self.xx * k,
            xy: self.xy * k,
            xz: self.xz * k,
            yy: self.yy * k,
            yz: self.yz * k,
            zz: self.zz * k,
        }
    }
}

/// Mergeable ensemble aggregates: per-time sums of the Bloch components and
/// their outer products. Merging adds sums, so it is associative and
/// commutative up to floating-point reordering.
#[derive(Debug, Clone)]
pub struct EnsembleStats {
    times: Vec<f64>,
    sum_s: Vec<Vec3>,
    sum_outer: Vec<SecondMoments>,
    n_traj: u64,
}

impl EnsembleStats {
    fn empty(times: Vec<f64>) -> Self {
        let n = times.len();
        EnsembleStats {
            times,
            sum_s: vec![Vec3::ZERO; n],
            sum_outer: vec![SecondMoments::default(); n],
            n_traj: 0,
        }
    }

    fn accumulate(&mut self, rec: &TrajectoryRecord) {
        debug_assert_eq!(rec.times.len(), self.times.len());
        for (i, s) in rec.states.iter().enumerate() {
            self.sum_s[i] += s.as_vec();
            self.sum_outer[i].add_outer(*s);
        }
        self.n_traj += 1;
    }

    pub fn merge(mut self, other: &EnsembleStats) -> Result<EnsembleStats> {
        if self.times != other.times {
            return Err(Error::MergeMismatch(format!(
                "time grids differ ({} vs {} records)",
                self.times.len(),
                other.times.len()
            )));
        }
        for (a, b) in self.sum_s.iter_mut().zip(&other.sum_s) {
            *a += *b;
        }
        for (a, b) in self.sum_outer.iter_mut().zip(&other.sum_outer) {
            a.add(b);
        }
        self.n_traj += other.n_traj;
        Ok(self)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_traj(&self) -> u64 {
        self.n_traj
    }

    pub fn mean_at(&self, i: usize) -> Vec3 {
        self.sum_s[i] * (1.0 / self.n_traj as f64)
    }

    pub fn mean_series(&self) -> Vec<Vec3> {
        (0..self.times.len()).map(|i| self.mean_at(i)).collect()
    }

    pub fn second_moment_at(&self, i: usize) -> SecondMoments {
        self.sum_outer[i].scaled(1.0 / self.n_traj as f64)
    }

    /// Per-component variance across trajectories at record `i`.
    pub fn variance_at(&self, i: usize) -> Vec3 {
        let m = self.mean_at(i);
        let q = self.second_moment_at(i);
        Vec3::new(q.xx - m.x * m.x, q.yy - m.y * m.y, q.zz - m.z * m.z)
    }

    /// Raw component sums (exposed for exact determinism checks).
    pub fn sums(&self) -> (&[Vec3], &[SecondMoments]) {
        (&self.sum_s, &self.sum_outer)
    }
}

fn block_ranges(streams: std::ops::Range<u64>) -> Vec<std::ops::Range<u64>> {
    let mut blocks = Vec::new();
    let mut lo = streams.start;
    while lo < streams.end {
        let hi = (lo + TRAJ_BLOCK).min(streams.end);
        blocks.push(lo..hi);
        lo = hi;
    }
    blocks
}

fn block_stats(
    cfg: &SimConfig,
    policy: &FeedbackPolicy,
    s0: InitialState,
    seed: u64,
    block: std::ops::Range<u64>,
) -> Result<EnsembleStats> {
    let mut stats: Option<EnsembleStats> = None;
    for i in block {
        let rec = run_trajectory_stream(cfg, policy, s0, seed, i)?;
        stats
            .get_or_insert_with(|| EnsembleStats::empty(rec.times.clone()))
            .accumulate(&rec);
    }
    stats.ok_or_else(|| Error::invalid("traj", "empty trajectory range"))
}

fn fold_blocks(partials: Vec<EnsembleStats>) -> Result<EnsembleStats> {
    let mut iter = partials.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::invalid("traj", "0 (need at least one trajectory)"))?;
    iter.try_fold(first, |acc, part| acc.merge(&part))
}

/// Ensemble statistics over the trajectory streams in `streams`
/// (`run_ensemble` uses `0..n_traj`). Parallel when the `parallel` feature
/// is on; bit-identical to the sequential path either way.
pub fn run_ensemble_partial(
    cfg: &SimConfig,
    policy: &FeedbackPolicy,
    s0: InitialState,
    base_seed: u64,
    streams: std::ops::Range<u64>,
) -> Result<EnsembleStats> {
    let blocks = block_ranges(streams);

    #[cfg(feature = "parallel")]
    let partials: Result<Vec<EnsembleStats>> = blocks
        .into_par_iter()
        .map(|b| block_stats(cfg, policy, s0, base_seed, b))
        .collect();

    #[cfg(not(feature = "parallel"))]
    let partials: Result<Vec<EnsembleStats>> = blocks
        .into_iter()
        .map(|b| block_stats(cfg, policy, s0, base_seed, b))
        .collect();

    fold_blocks(partials?)
}

pub fn run_ensemble(
    cfg: &SimConfig,
    policy: &FeedbackPolicy,
    s0: InitialState,
    n_traj: u64,
    base_seed: u64,
) -> Result<EnsembleStats> {
    run_ensemble_partial(cfg, policy, s0, base_seed, 0..n_traj)
}

/// Sequential ensemble runner, available regardless of features; used by the
/// benchmarks as the comparison baseline.
pub fn run_ensemble_seq(
    cfg: &SimConfig,
    policy: &FeedbackPolicy,
    s0: InitialState,
    n_traj: u64,
    base_seed: u64,
) -> Result<EnsembleStats> {
    let partials: Result<Vec<EnsembleStats>> = block_ranges(0..n_traj)
        .into_iter()
        .map(|b| block_stats(cfg, policy, s0, base_seed, b))
        .collect();
    fold_blocks(partials?)
}

/// Map a reducing function over trajectory records in stream order, without
/// keeping the records. Parallel under the `parallel` feature; the output
/// is ordered and worker-count independent either way.
pub fn map_trajectories<T, F>(
    cfg: &SimConfig,
    policy: &FeedbackPolicy,
    s0: InitialState,
    n_traj: u64,
    base_seed: u64,
    f: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&TrajectoryRecord) -> T + Sync,
{
    let n = n_traj as usize;

    #[cfg(feature = "parallel")]
    {
        (0..n)
            .into_par_iter()
            .map(|i| run_trajectory_stream(cfg, policy, s0, base_seed, i as u64).map(|r| f(&r)))
            .collect()
    }

    #[cfg(not(feature = "parallel"))]
    {
        (0..n)
            .map(|i| run_trajectory_stream(cfg, policy, s0, base_seed, i as u64).map(|r| f(&r)))
            .collect()
    }
}

/// Materialize whole records (memory scales with `n_traj * n_steps`).
pub fn collect_trajectories(
    cfg: &SimConfig,
    policy: &FeedbackPolicy,
    s0: InitialState,
    n_traj: u64,
    base_seed: u64,
) -> Result<Vec<TrajectoryRecord>> {
    map_trajectories(cfg, policy, s0, n_traj, base_seed, |r| r.clone())
}
