//! Dempster-Shafer algebra over the frame {D, S, F}.
//!
//! Only five subsets of the frame ever carry mass: `{D}`, `{S}`, `{F}`,
//! `{D,S}` and the whole frame. Combination therefore runs over a fixed 5x5
//! intersection table rather than a general power-set representation.

use std::fmt;
use std::ops::{Add, Mul};

use num_traits::Zero;
use thiserror::Error;

/// Tolerance on the sum of masses of a valid [`Bba`].
pub const MASS_SUM_TOLERANCE: f64 = 1e-9;

/// Combination fails when the conflict reaches `1 - TOTAL_CONFLICT_EPS`.
pub const TOTAL_CONFLICT_EPS: f64 = 1e-12;

const RENORMALIZE_THRESHOLD: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DstError {
    #[error("total conflict between combined masses (K = {conflict})")]
    TotalConflict { conflict: f64 },
    #[error("invalid mass assignment: {0}")]
    InvalidBba(String),
    #[error("invalid evidence: {0}")]
    InvalidEvidence(String),
}

/// The focal elements of a cell belief.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FocalElement {
    /// `{D}`
    Dyn = 0,
    /// `{S}`
    Stat = 1,
    /// `{F}`
    Free = 2,
    /// `{D,S}`
    Occ = 3,
    /// `{D,S,F}`
    Unknown = 4,
}

impl FocalElement {
    pub const ALL: [FocalElement; 5] = [
        FocalElement::Dyn,
        FocalElement::Stat,
        FocalElement::Free,
        FocalElement::Occ,
        FocalElement::Unknown,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    /// Number of hypotheses in the subset.
    pub fn cardinality(self) -> usize {
        match self {
            FocalElement::Dyn | FocalElement::Stat | FocalElement::Free => 1,
            FocalElement::Occ => 2,
            FocalElement::Unknown => 3,
        }
    }
}

use FocalElement::{Dyn, Free, Occ, Stat, Unknown};

/// `INTERSECTION[a][b]` is `a ∩ b`, `None` for the empty set.
const INTERSECTION: [[Option<FocalElement>; 5]; 5] = [
    // Dyn
    [Some(Dyn), None, None, Some(Dyn), Some(Dyn)],
    // Stat
    [None, Some(Stat), None, Some(Stat), Some(Stat)],
    // Free
    [None, None, Some(Free), None, Some(Free)],
    // Occ
    [Some(Dyn), Some(Stat), None, Some(Occ), Some(Occ)],
    // Unknown
    [Some(Dyn), Some(Stat), Some(Free), Some(Occ), Some(Unknown)],
];

/// Intersection of two focal elements, `None` when empty.
pub fn intersect(a: FocalElement, b: FocalElement) -> Option<FocalElement> {
    INTERSECTION[a.index()][b.index()]
}

/// Unnormalized Dempster products: the mass landing on each focal element and
/// the conflict `K` landing on the empty set.
///
/// Generic so the same table drives both the `f64` path and exact rational
/// checks.
pub fn combine_products<T>(a: &[T; 5], b: &[T; 5]) -> ([T; 5], T)
where
    T: Copy + Zero + Add<Output = T> + Mul<Output = T>,
{
    let mut out = [T::zero(); 5];
    let mut conflict = T::zero();
    for (i, &ma) in a.iter().enumerate() {
        for (j, &mb) in b.iter().enumerate() {
            let p = ma * mb;
            match INTERSECTION[i][j] {
                Some(x) => out[x.index()] = out[x.index()] + p,
                None => conflict = conflict + p,
            }
        }
    }
    (out, conflict)
}

/// A basic belief assignment over the five focal elements.
#[derive(Clone, Copy, PartialEq)]
pub struct Bba {
    masses: [f64; 5],
}

impl fmt::Debug for Bba {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Bba")
            .field("dyn", &self.masses[0])
            .field("stat", &self.masses[1])
            .field("free", &self.masses[2])
            .field("occ", &self.masses[3])
            .field("unknown", &self.masses[4])
            .finish()
    }
}

impl Default for Bba {
    fn default() -> Self {
        Self::vacuous()
    }
}

impl Bba {
    /// All mass on the whole frame.
    pub const fn vacuous() -> Self {
        Bba {
            masses: [0.0, 0.0, 0.0, 0.0, 1.0],
        }
    }

    /// Checked constructor, masses in `FocalElement::ALL` order.
    pub fn new(masses: [f64; 5]) -> Result<Self, DstError> {
        for (i, &m) in masses.iter().enumerate() {
            if !m.is_finite() || !(0.0..=1.0).contains(&m) {
                return Err(DstError::InvalidBba(format!(
                    "mass of {:?} is {m}",
                    FocalElement::ALL[i]
                )));
            }
        }
        let sum: f64 = masses.iter().sum();
        if (sum - 1.0).abs() > MASS_SUM_TOLERANCE {
            return Err(DstError::InvalidBba(format!("masses sum to {sum}")));
        }
        Ok(Bba { masses })
    }

    /// Builds a BBA from the four non-Unknown masses; Unknown takes the rest.
    pub fn from_parts(dyn_: f64, stat: f64, free: f64, occ: f64) -> Result<Self, DstError> {
        Self::new([dyn_, stat, free, occ, 1.0 - dyn_ - stat - free - occ])
    }

    /// Single focal element carrying all mass.
    pub fn certain(x: FocalElement) -> Self {
        let mut masses = [0.0; 5];
        masses[x.index()] = 1.0;
        Bba { masses }
    }

    /// Unchecked constructor for masses the caller already guarantees.
    pub(crate) fn from_raw(masses: [f64; 5]) -> Self {
        debug_assert!(
            (masses.iter().sum::<f64>() - 1.0).abs() <= 1e-6,
            "{masses:?}"
        );
        Bba { masses }
    }

    #[inline]
    pub fn mass(&self, x: FocalElement) -> f64 {
        self.masses[x.index()]
    }

    #[inline]
    pub fn masses(&self) -> &[f64; 5] {
        &self.masses
    }

    pub fn is_vacuous(&self) -> bool {
        self.masses[Unknown.index()] == 1.0
    }

    /// `bel({D,S}) = m(D) + m(S) + m(D,S)`.
    pub fn belief_occupied(&self) -> f64 {
        self.masses[Dyn.index()] + self.masses[Stat.index()] + self.masses[Occ.index()]
    }

    /// Pignistic transform: each set's mass is split evenly over its members.
    pub fn pignistic(&self) -> CellProbabilities {
        let m = &self.masses;
        let half_occ = m[Occ.index()] / 2.0;
        let third_unknown = m[Unknown.index()] / 3.0;
        CellProbabilities {
            p_dyn: m[Dyn.index()] + half_occ + third_unknown,
            p_stat: m[Stat.index()] + half_occ + third_unknown,
            p_free: m[Free.index()] + third_unknown,
        }
    }

    /// Dempster's rule of combination.
    pub fn combine(&self, other: &Bba) -> Result<Bba, DstError> {
        let (products, conflict) = combine_products(&self.masses, &other.masses);
        if conflict >= 1.0 - TOTAL_CONFLICT_EPS {
            return Err(DstError::TotalConflict { conflict });
        }
        let norm = 1.0 - conflict;
        let mut masses = products.map(|p| (p / norm).max(0.0));
        // absorb rounding drift; left alone when already exact so that the
        // vacuous BBA stays a bit-exact identity
        let sum: f64 = masses.iter().sum();
        if (sum - 1.0).abs() > RENORMALIZE_THRESHOLD {
            for m in masses.iter_mut() {
                *m /= sum;
            }
        }
        Ok(Bba { masses })
    }
}

/// Free-function alias for [`Bba::combine`].
pub fn combine(a: &Bba, b: &Bba) -> Result<Bba, DstError> {
    a.combine(b)
}

/// Pignistic probabilities of the three singleton hypotheses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellProbabilities {
    pub p_dyn: f64,
    pub p_stat: f64,
    pub p_free: f64,
}

impl CellProbabilities {
    pub fn p_occupied(&self) -> f64 {
        self.p_dyn + self.p_stat
    }
}

/// Kernel evidence for one cell, plus the Dirichlet prior total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvidenceVector {
    pub occupied: f64,
    pub free: f64,
    pub prior: f64,
}

impl EvidenceVector {
    pub fn new(occupied: f64, free: f64, prior: f64) -> Result<Self, DstError> {
        if !(occupied >= 0.0 && occupied.is_finite()) || !(free >= 0.0 && free.is_finite()) {
            return Err(DstError::InvalidEvidence(format!(
                "occupied={occupied}, free={free}"
            )));
        }
        if !(prior > 0.0 && prior.is_finite()) {
            return Err(DstError::InvalidEvidence(format!("prior={prior}")));
        }
        Ok(EvidenceVector {
            occupied,
            free,
            prior,
        })
    }

    /// Dirichlet BBA: evidence over the total Dirichlet strength.
    ///
    /// Range sensors cannot tell dynamic from static, so `{D}` and `{S}`
    /// stay at zero.
    pub fn to_bba(&self) -> Bba {
        let total = self.prior + self.occupied + self.free;
        let occ = self.occupied / total;
        let free = self.free / total;
        let unknown = self.prior / total;
        Bba::from_raw([0.0, 0.0, free, occ, unknown])
    }
}

/// See [`EvidenceVector::to_bba`].
pub fn dirichlet_bba(ev: &EvidenceVector) -> Bba {
    ev.to_bba()
}
