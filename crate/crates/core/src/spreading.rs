//! Edge spreading and termination of protograph convolutional codes.
//!
//! An [`EdgeSpreading`] splits a block base matrix `B` into components
//! `B_0, ..., B_ms` with `Σ B_i = B`. The convolutional protograph places
//! `B_i` at block row `t + i` of block column `t`, so the edges of the
//! variable nodes at time `t` reach the checks at times `t ..= t + ms`.
//! Termination keeps `L` block columns and drops any all-zero check rows.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protograph::{shannon_limit, BaseMatrix, Rate};

/// Ordered component matrices of an edge spreading.
///
/// Serializes to the spreading JSON document
/// `{"name", "memory", "components", "punctured_columns"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSpreading {
    pub name: String,
    pub memory: usize,
    pub components: Vec<Vec<Vec<i64>>>,
    #[serde(default)]
    pub punctured_columns: BTreeSet<usize>,
}

/// Problems found by [`check_spreading`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpreadingViolation {
    NegativeEntry { component: usize, row: usize, col: usize },
    ComponentExceedsBase { component: usize, row: usize, col: usize },
    SumMismatch { row: usize, col: usize, sum: i64, expected: i64 },
    /// An all-zero row of `B_0` becomes a zero check row at the start of
    /// every terminated matrix.
    ZeroLeadingRow(usize),
}

impl fmt::Display for SpreadingViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpreadingViolation::NegativeEntry { component, row, col } => {
                write!(f, "negative entry in component {component} at ({row}, {col})")
            }
            SpreadingViolation::ComponentExceedsBase { component, row, col } => {
                write!(f, "component exceeds base: component {component} at ({row}, {col})")
            }
            SpreadingViolation::SumMismatch { row, col, sum, expected } => {
                write!(f, "component sum {sum} != base {expected} at ({row}, {col})")
            }
            SpreadingViolation::ZeroLeadingRow(j) => write!(f, "zero row {j} in leading component"),
        }
    }
}

/// A block ensemble produced by terminating a convolutional protograph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TerminatedProtograph {
    pub base: BaseMatrix,
    /// AR4JA extension parameter, when the spreading came from that family.
    pub extension: Option<usize>,
    pub termination_factor: usize,
    /// Row indices of the full block-band matrix that were all-zero.
    pub dropped_rows: Vec<usize>,
}

impl EdgeSpreading {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: EdgeSpreading = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        s.shape()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("spreading serializes")
    }

    /// Common `(b_c, b_v)` of all components.
    pub fn shape(&self) -> Result<(usize, usize)> {
        if self.components.len() != self.memory + 1 {
            return Err(Error::InvalidSpreading(format!(
                "memory {} needs {} components, got {}",
                self.memory,
                self.memory + 1,
                self.components.len()
            )));
        }
        if self.memory == 0 {
            return Err(Error::InvalidSpreading("memory must be at least 1".into()));
        }
        let b_c = self.components[0].len();
        let b_v = self.components[0].first().map_or(0, Vec::len);
        if b_c == 0 || b_v == 0 {
            return Err(Error::InvalidSpreading("empty component".into()));
        }
        for (i, c) in self.components.iter().enumerate() {
            if c.len() != b_c || c.iter().any(|row| row.len() != b_v) {
                return Err(Error::InvalidSpreading(format!(
                    "component {i} is not {b_c}x{b_v}"
                )));
            }
        }
        if let Some(&k) = self.punctured_columns.iter().find(|&&k| k >= b_v) {
            return Err(Error::InvalidSpreading(format!("punctured column {k} out of range")));
        }
        Ok((b_c, b_v))
    }

    /// Entrywise sum of the components.
    pub fn component_sum(&self) -> Result<Vec<Vec<i64>>> {
        let (b_c, b_v) = self.shape()?;
        let mut sum = vec![vec![0i64; b_v]; b_c];
        for c in &self.components {
            for (j, row) in c.iter().enumerate() {
                for (k, &v) in row.iter().enumerate() {
                    sum[j][k] += v;
                }
            }
        }
        Ok(sum)
    }
}

/// Checks that the components of `s` sum to `b` entrywise.
pub fn check_spreading(s: &EdgeSpreading, b: &BaseMatrix) -> Result<Vec<SpreadingViolation>> {
    let (b_c, b_v) = s.shape()?;
    if b.n_c() != b_c || b.n_v() != b_v || b.base.iter().any(|r| r.len() != b_v) {
        return Err(Error::InvalidSpreading(format!(
            "shape mismatch: components are {b_c}x{b_v}, base is {}x{}",
            b.n_c(),
            b.n_v()
        )));
    }
    let mut out = Vec::new();
    for (i, c) in s.components.iter().enumerate() {
        for j in 0..b_c {
            for k in 0..b_v {
                if c[j][k] < 0 {
                    out.push(SpreadingViolation::NegativeEntry { component: i, row: j, col: k });
                } else if c[j][k] > b.base[j][k] {
                    out.push(SpreadingViolation::ComponentExceedsBase { component: i, row: j, col: k });
                }
            }
        }
    }
    let sum = s.component_sum()?;
    for j in 0..b_c {
        for k in 0..b_v {
            if sum[j][k] != b.base[j][k] {
                out.push(SpreadingViolation::SumMismatch {
                    row: j,
                    col: k,
                    sum: sum[j][k],
                    expected: b.base[j][k],
                });
            }
        }
    }
    for (j, row) in s.components[0].iter().enumerate() {
        if row.iter().all(|&v| v == 0) {
            out.push(SpreadingViolation::ZeroLeadingRow(j));
        }
    }
    Ok(out)
}

/// Builds the terminated base matrix `B_[0, L-1]`.
pub fn terminate(s: &EdgeSpreading, l: usize) -> Result<TerminatedProtograph> {
    if l < 2 {
        return Err(Error::TerminationTooShort(l));
    }
    let (b_c, b_v) = s.shape()?;
    if s.components.iter().flatten().flatten().any(|&v| v < 0) {
        return Err(Error::InvalidSpreading("negative component entry".into()));
    }
    let rows = (l + s.memory) * b_c;
    let cols = l * b_v;
    let mut full = vec![vec![0i64; cols]; rows];
    for t in 0..l {
        for (i, comp) in s.components.iter().enumerate() {
            for j in 0..b_c {
                for k in 0..b_v {
                    full[(t + i) * b_c + j][t * b_v + k] = comp[j][k];
                }
            }
        }
    }
    let mut dropped_rows = Vec::new();
    let mut kept = Vec::with_capacity(rows);
    for (j, row) in full.into_iter().enumerate() {
        if row.iter().all(|&v| v == 0) {
            dropped_rows.push(j);
        } else {
            kept.push(row);
        }
    }
    if let Some(k) = (0..cols).find(|&k| kept.iter().all(|row| row[k] == 0)) {
        return Err(Error::InvalidSpreading(format!("terminated matrix has zero column {k}")));
    }
    let punctured = (0..l).flat_map(|t| s.punctured_columns.iter().map(move |&c| t * b_v + c));
    let base = BaseMatrix::new(format!("{}-L{}", s.name, l), kept, punctured)?;
    Ok(TerminatedProtograph { base, extension: None, termination_factor: l, dropped_rows })
}

const AR4JA_BLOCK: [[i64; 5]; 3] = [[1, 2, 0, 0, 0], [0, 3, 1, 1, 1], [0, 1, 2, 1, 2]];
const AR4JA_B0: [[i64; 5]; 3] = [[1, 2, 0, 0, 0], [0, 1, 1, 1, 0], [0, 0, 1, 0, 2]];
const AR4JA_B1: [[i64; 5]; 3] = [[0, 0, 0, 0, 0], [0, 2, 0, 0, 1], [0, 1, 1, 1, 0]];

// Columns added per extension step, as (first, second) column of the pair.
const EXT_BLOCK: ([i64; 3], [i64; 3]) = ([0, 3, 1], [0, 1, 3]);
const EXT_B0: ([i64; 3], [i64; 3]) = ([0, 2, 0], [0, 1, 1]);
const EXT_B1: ([i64; 3], [i64; 3]) = ([0, 1, 1], [0, 0, 2]);

fn with_extension(head: &[[i64; 5]; 3], pair: ([i64; 3], [i64; 3]), e: usize) -> Vec<Vec<i64>> {
    (0..3)
        .map(|j| {
            let mut row = head[j].to_vec();
            for _ in 0..e {
                row.push(pair.0[j]);
                row.push(pair.1[j]);
            }
            row
        })
        .collect()
}

/// The 3 x (5 + 2e) AR4JA block protograph with extension parameter `e`.
pub fn ar4ja_family(e: usize) -> BaseMatrix {
    BaseMatrix::new(format!("ar4ja-e{e}"), with_extension(&AR4JA_BLOCK, EXT_BLOCK, e), [1])
        .expect("AR4JA family is valid")
}

/// The memory-one spreading of the AR4JA protograph with extension `e`.
pub fn ar4ja_spreading(e: usize) -> EdgeSpreading {
    EdgeSpreading {
        name: format!("tar4ja-e{e}"),
        memory: 1,
        components: vec![
            with_extension(&AR4JA_B0, EXT_B0, e),
            with_extension(&AR4JA_B1, EXT_B1, e),
        ],
        punctured_columns: [1].into_iter().collect(),
    }
}

/// Terminated AR4JA ensemble `B_[0, L-1]` for extension `e`.
pub fn terminated_ar4ja(e: usize, l: usize) -> Result<TerminatedProtograph> {
    let mut t = terminate(&ar4ja_spreading(e), l)?;
    t.extension = Some(e);
    Ok(t)
}

/// Exact design rate of the terminated AR4JA ensemble.
pub fn terminated_ar4ja_rate(e: usize, l: usize) -> Rate {
    let (e, l) = (e as i64, l as i64);
    Rate::new((1 + e) * l - 1, (2 + e) * l)
}

/// Fractional gap to capacity `(ε_sh - ε*) / ε_sh`.
pub fn fractional_gap(threshold: f64, rate: Rate) -> Result<f64> {
    let capacity = shannon_limit(rate)?;
    if threshold > capacity {
        return Err(Error::ThresholdAboveCapacity { threshold, capacity });
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidParameter(format!("threshold {threshold}")));
    }
    if capacity == 0.0 {
        return Ok(0.0);
    }
    Ok((capacity - threshold) / capacity)
}
