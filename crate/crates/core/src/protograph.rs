//! Protograph base matrices with puncturing.
//!
//! A base matrix has one row per check node and one column per variable
//! node; entry `(j, k)` is the number of parallel edges between check `j`
//! and variable `k`. Punctured variable nodes are part of the graph but are
//! never transmitted.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_rational::Ratio;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact rational used for code rates.
pub type Rate = Ratio<i64>;

/// Protograph base matrix plus puncture mask.
///
/// Serializes to the protograph JSON document
/// `{"name": ..., "base": [[...]], "punctured": [...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseMatrix {
    pub name: String,
    /// Row-major entries; row = check node, column = variable node.
    pub base: Vec<Vec<i64>>,
    #[serde(default)]
    pub punctured: BTreeSet<usize>,
}

/// A single invariant violation found by [`BaseMatrix::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Empty,
    Ragged { row: usize, len: usize, expected: usize },
    NegativeEntry { row: usize, col: usize, value: i64 },
    ZeroRow(usize),
    ZeroColumn(usize),
    PuncturedOutOfRange(usize),
    NoTransmittedNodes,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "empty matrix"),
            Violation::Ragged { row, len, expected } => {
                write!(f, "ragged row {row}: length {len}, expected {expected}")
            }
            Violation::NegativeEntry { row, col, value } => {
                write!(f, "negative entry {value} at ({row}, {col})")
            }
            Violation::ZeroRow(j) => write!(f, "zero row {j}"),
            Violation::ZeroColumn(k) => write!(f, "zero column {k}"),
            Violation::PuncturedOutOfRange(k) => write!(f, "punctured index {k} out of range"),
            Violation::NoTransmittedNodes => write!(f, "no transmitted variable nodes"),
        }
    }
}

/// Row and column sums of a base matrix, counted with multiplicity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DegreeProfile {
    pub check_degrees: Vec<u32>,
    pub variable_degrees: Vec<u32>,
}

impl DegreeProfile {
    pub fn edge_count(&self) -> u64 {
        self.check_degrees.iter().map(|&d| d as u64).sum()
    }

    /// Degree -> number of check nodes with that degree.
    pub fn check_census(&self) -> BTreeMap<u32, usize> {
        census(&self.check_degrees)
    }

    /// Degree -> number of variable nodes with that degree.
    pub fn variable_census(&self) -> BTreeMap<u32, usize> {
        census(&self.variable_degrees)
    }
}

fn census(degrees: &[u32]) -> BTreeMap<u32, usize> {
    let mut out = BTreeMap::new();
    for &d in degrees {
        *out.entry(d).or_insert(0) += 1;
    }
    out
}

impl BaseMatrix {
    /// Builds and validates a base matrix.
    pub fn new(
        name: impl Into<String>,
        base: Vec<Vec<i64>>,
        punctured: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        let b = Self::unchecked(name, base, punctured);
        b.ensure_valid()?;
        Ok(b)
    }

    /// Builds a base matrix without checking invariants. Use
    /// [`BaseMatrix::validate`] to inspect it afterwards.
    pub fn unchecked(
        name: impl Into<String>,
        base: Vec<Vec<i64>>,
        punctured: impl IntoIterator<Item = usize>,
    ) -> Self {
        BaseMatrix {
            name: name.into(),
            base,
            punctured: punctured.into_iter().collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let b: BaseMatrix = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        b.ensure_valid()?;
        Ok(b)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("base matrix serializes")
    }

    /// Number of check nodes (rows).
    pub fn n_c(&self) -> usize {
        self.base.len()
    }

    /// Number of variable nodes (columns).
    pub fn n_v(&self) -> usize {
        self.base.first().map_or(0, Vec::len)
    }

    /// Number of transmitted variable nodes.
    pub fn transmitted(&self) -> usize {
        self.n_v() - self.punctured.len()
    }

    pub fn is_punctured(&self, k: usize) -> bool {
        self.punctured.contains(&k)
    }

    /// Edge multiplicity between check `j` and variable `k`.
    pub fn multiplicity(&self, j: usize, k: usize) -> u32 {
        self.base[j][k].max(0) as u32
    }

    pub fn max_entry(&self) -> u32 {
        self.base
            .iter()
            .flatten()
            .copied()
            .max()
            .unwrap_or(0)
            .max(0) as u32
    }

    /// Lists every violated invariant; an empty list means the matrix is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n_c = self.n_c();
        let n_v = self.n_v();
        if n_c == 0 || n_v == 0 {
            out.push(Violation::Empty);
            return out;
        }
        let mut ragged = false;
        for (j, row) in self.base.iter().enumerate() {
            if row.len() != n_v {
                out.push(Violation::Ragged { row: j, len: row.len(), expected: n_v });
                ragged = true;
            }
            for (k, &v) in row.iter().enumerate() {
                if v < 0 {
                    out.push(Violation::NegativeEntry { row: j, col: k, value: v });
                }
            }
        }
        if !ragged {
            for (j, row) in self.base.iter().enumerate() {
                if row.iter().all(|&v| v <= 0) {
                    out.push(Violation::ZeroRow(j));
                }
            }
            for k in 0..n_v {
                if self.base.iter().all(|row| row[k] <= 0) {
                    out.push(Violation::ZeroColumn(k));
                }
            }
        }
        for &k in &self.punctured {
            if k >= n_v {
                out.push(Violation::PuncturedOutOfRange(k));
            }
        }
        if self.punctured.iter().filter(|&&k| k < n_v).count() >= n_v {
            out.push(Violation::NoTransmittedNodes);
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            let msg: Vec<String> = v.iter().map(ToString::to_string).collect();
            Err(Error::InvalidBase(msg.join("; ")))
        }
    }

    pub fn degree_profile(&self) -> Result<DegreeProfile> {
        self.ensure_valid()?;
        let check_degrees = self.base.iter().map(|row| row.iter().sum::<i64>() as u32).collect();
        let variable_degrees = (0..self.n_v())
            .map(|k| self.base.iter().map(|row| row[k]).sum::<i64>() as u32)
            .collect();
        Ok(DegreeProfile { check_degrees, variable_degrees })
    }

    /// Exact design rate `(n_v - n_c) / u`.
    pub fn design_rate(&self) -> Result<Rate> {
        self.ensure_valid()?;
        let (n_v, n_c) = (self.n_v(), self.n_c());
        if n_v <= n_c {
            return Err(Error::NonpositiveRate { n_v, n_c });
        }
        Ok(Rate::new((n_v - n_c) as i64, self.transmitted() as i64))
    }
}

/// BEC capacity limit `1 - R`.
pub fn shannon_limit(rate: Rate) -> Result<f64> {
    check_rate(rate)?;
    Ok(rate_to_f64(Rate::one() - rate))
}

fn check_rate(rate: Rate) -> Result<()> {
    if rate < Rate::zero() || rate > Rate::one() {
        return Err(Error::RateOutOfRange(rate.to_string()));
    }
    Ok(())
}

pub fn rate_to_f64(r: Rate) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Binary entropy in bits.
pub fn binary_entropy_bits(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// Gilbert-Varshamov relative distance: the `δ ∈ [0, 1/2]` with
/// `H₂(δ) = 1 - R`.
pub fn gv_bound(rate: Rate) -> Result<f64> {
    check_rate(rate)?;
    let target = 1.0 - rate_to_f64(rate);
    if target <= 0.0 {
        return Ok(0.0);
    }
    if target >= 1.0 {
        return Ok(0.5);
    }
    let (mut lo, mut hi) = (0.0f64, 0.5f64);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if binary_entropy_bits(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
