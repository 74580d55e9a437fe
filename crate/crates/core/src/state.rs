//! Atomic state representations and the maps between them.
//!
//! Two equivalent descriptions of the two-level atom are used throughout:
//! the exact pair of complex amplitudes ([`AtomState`], the reference
//! representation) and the real Bloch vector ([`BlochVector`], the fast
//! path). Amplitudes are written in the frame co-rotating with the local
//! oscillator, so `s_x` is the dipole component in phase with it.
//!
//! Sign convention: `s_y = 2 Im(c_E* c_G)`, so the state
//! `(c_E, c_G) = (1, i)/sqrt(2)` maps to `(0, +1, 0)`. Only this sign is
//! convention-bound; `s_x = 2 Re(c_E* c_G)` and `s_z = |c_E|^2 - |c_G|^2`
//! are fixed.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Tolerance for "is a unit vector / unit norm" validation.
pub const UNIT_TOL: f64 = 1e-9;

/// Plain 3-vector in Bloch space, used for steps, drifts and directions.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        self * -1.0
    }
}

/// Bloch vector `(s_x, s_y, s_z)`: inversion `s_z`, in-phase dipole `s_x`,
/// out-of-phase dipole `s_y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochVector {
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
}

impl BlochVector {
    pub const EXCITED: BlochVector = BlochVector {
        sx: 0.0,
        sy: 0.0,
        sz: 1.0,
    };
    pub const GROUND: BlochVector = BlochVector {
        sx: 0.0,
        sy: 0.0,
        sz: -1.0,
    };

    pub fn new(sx: f64, sy: f64, sz: f64) -> Self {
        BlochVector { sx, sy, sz }
    }

    pub fn as_vec(self) -> Vec3 {
        Vec3::new(self.sx, self.sy, self.sz)
    }

    pub fn from_vec(v: Vec3) -> Self {
        BlochVector::new(v.x, v.y, v.z)
    }

    pub fn norm(self) -> f64 {
        self.as_vec().norm()
    }

    pub fn is_unit(self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_TOL
    }

    /// `self + delta`, without renormalization.
    pub fn displaced(self, delta: Vec3) -> BlochVector {
        BlochVector::from_vec(self.as_vec() + delta)
    }

    pub fn normalized(self) -> BlochVector {
        let n = self.norm();
        BlochVector::new(self.sx / n, self.sy / n, self.sz / n)
    }
}

/// Pure state of the atom: amplitudes `(c_E, c_G)` on the excited and ground
/// levels, in the rotating frame. Normalized by construction; the fields are
/// private so no unnormalized value can exist.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomState {
    c_e: Complex64,
    c_g: Complex64,
}

impl AtomState {
    /// Build from amplitudes that are already normalized (within [`UNIT_TOL`]).
    /// The stored pair is renormalized exactly, so `norm_sq()` is 1 to within
    /// 1e-12 afterwards.
    pub fn new(c_e: Complex64, c_g: Complex64) -> Result<Self> {
        let n2 = c_e.norm_sqr() + c_g.norm_sqr();
        if !n2.is_finite() || (n2.sqrt() - 1.0).abs() > UNIT_TOL {
            return Err(Error::invalid(
                "atom state",
                format!("amplitudes not normalized: |c_E|^2 + |c_G|^2 = {n2}"),
            ));
        }
        Self::renormalized(c_e, c_g)
    }

    /// Exact renormalization of an arbitrary nonzero amplitude pair.
    pub fn renormalized(c_e: Complex64, c_g: Complex64) -> Result<Self> {
        let n = (c_e.norm_sqr() + c_g.norm_sqr()).sqrt();
        if n <= 1e-150 || !n.is_finite() {
            return Err(Error::ZeroNormPosterior);
        }
        Ok(AtomState {
            c_e: c_e / n,
            c_g: c_g / n,
        })
    }

    pub fn excited() -> Self {
        AtomState {
            c_e: Complex64::new(1.0, 0.0),
            c_g: Complex64::new(0.0, 0.0),
        }
    }

    pub fn ground() -> Self {
        AtomState {
            c_e: Complex64::new(0.0, 0.0),
            c_g: Complex64::new(1.0, 0.0),
        }
    }

    pub fn c_e(self) -> Complex64 {
        self.c_e
    }

    pub fn c_g(self) -> Complex64 {
        self.c_g
    }

    pub fn norm_sq(self) -> f64 {
        self.c_e.norm_sqr() + self.c_g.norm_sqr()
    }

    /// Rotate the global phase so the dominant amplitude is real non-negative
    /// (c_E where possible). States differing only by global phase are
    /// physically identical; this picks the canonical representative.
    pub fn phase_canonical(self) -> AtomState {
        let reference = if self.c_e.norm() > 1e-8 {
            self.c_e
        } else {
            self.c_g
        };
        let phase = Complex64::from_polar(1.0, -reference.arg());
        AtomState {
            c_e: self.c_e * phase,
            c_g: self.c_g * phase,
        }
    }
}

/// Bloch image of a pure state.
///
/// `s_x = 2 Re(c_E* c_G)`, `s_y = 2 Im(c_E* c_G)`, `s_z = |c_E|^2 - |c_G|^2`.
/// The result is a unit vector to within 1e-12 (it is one algebraically for a
/// normalized input, which [`AtomState`] guarantees by construction).
pub fn bloch_from_state(a: AtomState) -> BlochVector {
    let q = a.c_e.conj() * a.c_g;
    BlochVector::new(
        2.0 * q.re,
        2.0 * q.im,
        a.c_e.norm_sqr() - a.c_g.norm_sqr(),
    )
}

/// Inverse of [`bloch_from_state`] on the unit sphere, with the global phase
/// fixed so that `c_E` is real and non-negative (for the ground state, where
/// `c_E = 0`, the phase lands on `c_G` instead).
///
/// Mixed states (`|s| != 1`) have no pure-state preimage and are rejected.
pub fn state_from_bloch(s: BlochVector) -> Result<AtomState> {
    let n = s.norm();
    if !n.is_finite() || (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::invalid(
            "bloch vector",
            format!("|s| = {n}, not a unit (pure-state) vector"),
        ));
    }
    let c_e = ((1.0 + s.sz).max(0.0) / 2.0).sqrt();
    if c_e < 1e-12 {
        return Ok(AtomState::ground());
    }
    let c_g = Complex64::new(s.sx, s.sy) / (2.0 * c_e);
    AtomState::renormalized(Complex64::new(c_e, 0.0), c_g)
}
