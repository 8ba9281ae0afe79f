//! Protograph density evolution on the binary erasure channel.
//!
//! Messages are erasure probabilities on directed edges of the protograph,
//! with parallel edges expanded into distinct edges. One iteration updates
//! every variable-to-check message from the previous check-to-variable
//! messages, then every check-to-variable message from the new
//! variable-to-check messages.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::protograph::BaseMatrix;

/// Solver settings for [`decodes`] and [`threshold`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeParams {
    pub epsilon: f64,
    pub residual_target: f64,
    pub max_iterations: usize,
    pub bisection_tolerance: f64,
    /// Require punctured nodes to be resolved as well.
    pub include_punctured: bool,
}

impl Default for DeParams {
    fn default() -> Self {
        DeParams {
            epsilon: 0.0,
            residual_target: 1e-10,
            max_iterations: 200_000,
            bisection_tolerance: 1e-5,
            include_punctured: true,
        }
    }
}

impl DeParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidParameter(format!("epsilon {}", self.epsilon)));
        }
        if !(self.residual_target > 0.0) {
            return Err(Error::InvalidParameter("residual target must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max iterations must be at least 1".into()));
        }
        if !(self.bisection_tolerance > 0.0) {
            return Err(Error::InvalidParameter("bisection tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Edge list of a protograph with parallel edges expanded.
#[derive(Debug, Clone)]
pub struct EdgeGraph {
    /// `(check, variable)` per edge, check-major order.
    pub edges: Vec<(usize, usize)>,
    pub check_edges: Vec<Vec<usize>>,
    pub variable_edges: Vec<Vec<usize>>,
    /// Channel erasure scale: 1 for punctured nodes.
    pub punctured: Vec<bool>,
}

impl EdgeGraph {
    pub fn new(b: &BaseMatrix) -> Result<Self> {
        b.ensure_valid()?;
        let mut edges = Vec::new();
        let mut check_edges = vec![Vec::new(); b.n_c()];
        let mut variable_edges = vec![Vec::new(); b.n_v()];
        for j in 0..b.n_c() {
            for k in 0..b.n_v() {
                for _ in 0..b.multiplicity(j, k) {
                    check_edges[j].push(edges.len());
                    variable_edges[k].push(edges.len());
                    edges.push((j, k));
                }
            }
        }
        let punctured = (0..b.n_v()).map(|k| b.is_punctured(k)).collect();
        Ok(EdgeGraph { edges, check_edges, variable_edges, punctured })
    }

    fn channel(&self, v: usize, eps: f64) -> f64 {
        if self.punctured[v] {
            1.0
        } else {
            eps
        }
    }
}

/// Per-edge message erasure probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct DeState {
    pub v2c: Vec<f64>,
    pub c2v: Vec<f64>,
    pub iteration: usize,
}

impl DeState {
    /// Initial state: every check-to-variable message fully erased.
    pub fn new(g: &EdgeGraph) -> Self {
        DeState {
            v2c: vec![1.0; g.edges.len()],
            c2v: vec![1.0; g.edges.len()],
            iteration: 0,
        }
    }
}

// out[i] = Π_{j != i} values[j], computed with prefix/suffix products so
// that zeros are handled exactly.
fn exclusive_products(values: &[f64], out: &mut [f64]) {
    let mut acc = 1.0;
    for (o, &v) in out.iter_mut().zip(values) {
        *o = acc;
        acc *= v;
    }
    let mut acc = 1.0;
    for (o, &v) in out.iter_mut().zip(values).rev() {
        *o *= acc;
        acc *= v;
    }
}

/// Scratch buffers for [`de_step`].
#[derive(Debug, Default)]
pub struct Scratch {
    vals: Vec<f64>,
    prods: Vec<f64>,
}

/// One flooding iteration.
pub fn de_step(state: &mut DeState, g: &EdgeGraph, eps: f64, scratch: &mut Scratch) -> Result<()> {
    if state.v2c.len() != g.edges.len() || state.c2v.len() != g.edges.len() {
        return Err(Error::InvalidParameter("state inconsistent with base matrix".into()));
    }
    for (v, es) in g.variable_edges.iter().enumerate() {
        let ch = g.channel(v, eps);
        scratch.vals.clear();
        scratch.vals.extend(es.iter().map(|&e| state.c2v[e]));
        scratch.prods.resize(es.len(), 0.0);
        exclusive_products(&scratch.vals, &mut scratch.prods);
        for (&e, &p) in es.iter().zip(&scratch.prods) {
            state.v2c[e] = ch * p;
        }
    }
    for es in &g.check_edges {
        scratch.vals.clear();
        scratch.vals.extend(es.iter().map(|&e| 1.0 - state.v2c[e]));
        scratch.prods.resize(es.len(), 0.0);
        exclusive_products(&scratch.vals, &mut scratch.prods);
        for (&e, &p) in es.iter().zip(&scratch.prods) {
            state.c2v[e] = 1.0 - p;
        }
    }
    state.iteration += 1;
    Ok(())
}

/// Largest a-posteriori erasure probability over the variable nodes.
pub fn max_residual(state: &DeState, g: &EdgeGraph, eps: f64, include_punctured: bool) -> f64 {
    g.variable_edges
        .iter()
        .enumerate()
        .filter(|&(v, _)| include_punctured || !g.punctured[v])
        .map(|(v, es)| g.channel(v, eps) * es.iter().map(|&e| state.c2v[e]).product::<f64>())
        .fold(0.0, f64::max)
}

/// Runs density evolution at `params.epsilon`. Returns whether the residual
/// fell below the target, and the number of iterations performed.
pub fn decodes(b: &BaseMatrix, params: &DeParams) -> Result<(bool, usize)> {
    let g = EdgeGraph::new(b)?;
    params.validate()?;
    Ok(decodes_graph(&g, params))
}

pub(crate) fn decodes_graph(g: &EdgeGraph, params: &DeParams) -> (bool, usize) {
    let eps = params.epsilon;
    let mut state = DeState::new(g);
    let mut scratch = Scratch::default();
    let mut previous = state.c2v.clone();
    for _ in 0..params.max_iterations {
        de_step(&mut state, g, eps, &mut scratch).expect("state built from graph");
        if max_residual(&state, g, eps, params.include_punctured) < params.residual_target {
            return (true, state.iteration);
        }
        // Messages are monotone; an unchanged state is a fixed point.
        if state.c2v == previous {
            return (false, state.iteration);
        }
        previous.copy_from_slice(&state.c2v);
    }
    (false, state.iteration)
}

/// One bisection probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Probe {
    pub epsilon: f64,
    pub decoded: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdResult {
    pub threshold: f64,
    pub bracket: (f64, f64),
    pub probes: Vec<Probe>,
    /// Set when decoding succeeds even at `ε = 1`.
    pub saturated: bool,
    pub params: DeParams,
}

/// BEC iterative decoding threshold by bisection on the channel erasure
/// probability.
pub fn threshold(b: &BaseMatrix, params: &DeParams) -> Result<ThresholdResult> {
    let g = EdgeGraph::new(b)?;
    params.validate()?;
    let mut probes = Vec::new();
    let mut probe = |eps: f64| {
        let (decoded, iterations) = decodes_graph(&g, &DeParams { epsilon: eps, ..*params });
        probes.push(Probe { epsilon: eps, decoded, iterations });
        decoded
    };
    if !probe(0.0) {
        return Err(Error::UndecodableAtZero);
    }
    if probe(1.0) {
        return Ok(ThresholdResult {
            threshold: 1.0,
            bracket: (1.0, 1.0),
            probes,
            saturated: true,
            params: *params,
        });
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > params.bisection_tolerance {
        let mid = 0.5 * (lo + hi);
        if probe(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(ThresholdResult { threshold: lo, bracket: (lo, hi), probes, saturated: false, params: *params })
}
