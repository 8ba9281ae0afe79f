//! Asymptotic weight enumerators of protograph ensembles.
//!
//! For an `N`-fold lifted protograph, the ensemble-average number of
//! codewords whose variable node `i` carries `δ_i N` ones grows like
//! `exp(N · F(δ))` with
//!
//! ```text
//! F(δ) = Σ_checks a_c(δ restricted to the check's edges) - Σ_i (q_i - 1) H(δ_i)
//! ```
//!
//! where `a_c` is the exponent of the number of even-parity configurations
//! of `N` copies of the check (see [`check_exponent`]), `q_i` the degree of
//! node `i`, and `H` the natural-log binary entropy. The spectral shape is
//! `r(δ) = max F / u` over node weights whose transmitted part sums to `u δ`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::protograph::BaseMatrix;

/// Values of the Legendre minimization below this are treated as divergent.
const DIVERGENCE: f64 = -50.0;
const GRAD_TOL: f64 = 1e-12;
const MAX_NEWTON: usize = 200;

/// Natural-log binary entropy.
pub fn entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.ln() - (1.0 - p) * (1.0 - p).ln()
}

/// Largest violation of the parity-polytope inequalities
/// `Σ_S δ - Σ_{S^c} δ ≤ |S| - 1` over odd sets `S` (for odd parity, over
/// even sets). Positive means no configuration has these edge fractions.
fn parity_violation(fractions: &[f64], odd: bool) -> f64 {
    let mut cost = 0.0;
    let mut count = 0usize;
    let mut slack = f64::INFINITY;
    for &d in fractions {
        if d > 0.5 {
            cost += 1.0 - d;
            count += 1;
        } else {
            cost += d;
        }
        slack = slack.min((2.0 * d - 1.0).abs());
    }
    let want_odd_set = !odd;
    if (count % 2 == 1) != want_odd_set {
        cost += slack;
    }
    1.0 - cost
}

/// Newton minimizer of `ln g(e^s) - δ·s` for one check, where `g` is the
/// even (or odd) parity generating function.
#[derive(Debug, Default, Clone)]
struct TiltSolver {
    sigma: Vec<f64>,
    /// `σ(1 - σ)` per edge.
    var: Vec<f64>,
    rho: Vec<f64>,
    /// `ln |ρ|` per edge, and the exclusive sums of it.
    log_rho: Vec<f64>,
    excl: Vec<f64>,
    /// `1 - Q_e` and `1 + Q_e`.
    one_minus_q: Vec<f64>,
    one_plus_q: Vec<f64>,
    mean: Vec<f64>,
}

// 1 + sign·exp(t) for t <= 0, accurate near cancellation.
fn one_plus_signed(sign: f64, t: f64) -> f64 {
    if sign > 0.0 {
        1.0 + t.exp()
    } else {
        -t.exp_m1()
    }
}

impl TiltSolver {
    /// `ln g` at `s`; fills the per-edge buffers and returns `1 + P`.
    ///
    /// `|ρ| = 1 - 2μ` with `μ = min(σ, 1 - σ)`, so the products of `ρ` are
    /// carried as a sign and a sum of `ln(1 - 2μ)`, which keeps `1 + P` and
    /// `1 ± Q_e` accurate when they nearly cancel.
    fn log_g(&mut self, s: &[f64], odd: bool) -> (f64, f64) {
        let d = s.len();
        self.sigma.clear();
        self.var.clear();
        self.rho.clear();
        self.log_rho.clear();
        let mut soft = 0.0;
        let mut sign = if odd { -1.0 } else { 1.0 };
        for &si in s {
            let e = (-si.abs()).exp();
            let r = 1.0 / (1.0 + e);
            let mu = e * r;
            let sg = if si >= 0.0 { r } else { mu };
            self.sigma.push(sg);
            self.var.push(mu * r);
            let lr = (-2.0 * mu).ln_1p();
            self.log_rho.push(lr);
            let rs = if si > 0.0 { -1.0 } else { 1.0 };
            sign *= rs;
            self.rho.push(rs * lr.exp());
            soft += si.max(0.0) + e.ln_1p();
        }
        self.excl.resize(d, 0.0);
        let mut acc = 0.0;
        for i in 0..d {
            self.excl[i] = acc;
            acc += self.log_rho[i];
        }
        let onep = one_plus_signed(sign, acc);
        let mut acc = 0.0;
        for i in (0..d).rev() {
            self.excl[i] += acc;
            acc += self.log_rho[i];
        }
        self.one_minus_q.resize(d, 0.0);
        self.one_plus_q.resize(d, 0.0);
        for i in 0..d {
            let sq = if self.rho[i] < 0.0 { -sign } else { sign };
            self.one_minus_q[i] = one_plus_signed(-sq, self.excl[i]);
            self.one_plus_q[i] = one_plus_signed(sq, self.excl[i]);
        }
        (soft + (0.5 * onep).ln(), onep)
    }

    fn objective(&mut self, s: &[f64], fractions: &[f64], odd: bool) -> f64 {
        let (lg, _) = self.log_g(s, odd);
        lg - s.iter().zip(fractions).map(|(a, b)| a * b).sum::<f64>()
    }

    fn gradient_hessian(&mut self, s: &[f64], fractions: &[f64], odd: bool) -> (f64, DVector<f64>, DMatrix<f64>) {
        let d = s.len();
        let (lg, onep) = self.log_g(s, odd);
        let sign = if odd { -1.0 } else { 1.0 };
        let phi = lg - s.iter().zip(fractions).map(|(a, b)| a * b).sum::<f64>();
        self.mean.resize(d, 0.0);
        let mut grad = DVector::zeros(d);
        let mut hess = DMatrix::zeros(d, d);
        // 1 + P may be tiny near the boundary; divide by it once per factor.
        for e in 0..d {
            self.mean[e] = self.sigma[e] * self.one_minus_q[e] / onep;
            grad[e] = self.mean[e] - fractions[e];
            hess[(e, e)] = (self.var[e] / onep) * (self.one_minus_q[e] * self.one_plus_q[e] / onep);
        }
        for e in 0..d {
            let we = self.var[e] / onep;
            for f in e + 1..d {
                let mut q = sign;
                for g in 0..d {
                    if g != e && g != f {
                        q *= self.rho[g];
                    }
                }
                let wf = self.var[f] / onep;
                let h = 4.0 * we * wf * q;
                hess[(e, f)] = h;
                hess[(f, e)] = h;
            }
        }
        (phi, grad, hess)
    }

    /// Minimizes over `s` in place (warm start from the given `s`).
    /// Returns the infimum or `-inf` when it diverges.
    fn minimize(&mut self, fractions: &[f64], s: &mut [f64], odd: bool) -> f64 {
        let d = fractions.len();
        let mut trial = vec![0.0; d];
        let mut phi = f64::NAN;
        for _ in 0..MAX_NEWTON {
            let (value, grad, hess) = self.gradient_hessian(s, fractions, odd);
            phi = value;
            if !phi.is_finite() || phi < DIVERGENCE {
                return f64::NEG_INFINITY;
            }
            if grad.amax() < GRAD_TOL {
                break;
            }
            let step = damped_newton_step(&hess, &grad);
            let slope = grad.dot(&step);
            if -slope <= 1e-10 * phi.abs() + 1e-300 {
                // Tiny Newton decrement: the line search would only see
                // rounding noise in phi, so take the plain step.
                for i in 0..d {
                    s[i] += step[i];
                }
                continue;
            }
            let mut t = 1.0;
            let mut accepted = false;
            while t > 1e-14 {
                for i in 0..d {
                    trial[i] = s[i] + t * step[i];
                }
                let v = self.objective(&trial, fractions, odd);
                if v.is_finite() && v <= phi + 1e-4 * t * slope {
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
            s.copy_from_slice(&trial);
        }
        phi.min(self.objective(s, fractions, odd))
    }

    /// Inverse of the tilted covariance at `s`, i.e. the Hessian of the
    /// check exponent with respect to the edge fractions, negated.
    fn curvature(&mut self, s: &[f64], fractions: &[f64], odd: bool) -> Option<DMatrix<f64>> {
        let (_, _, hess) = self.gradient_hessian(s, fractions, odd);
        hess.cholesky().map(|c| c.inverse())
    }
}

fn damped_newton_step(hess: &DMatrix<f64>, grad: &DVector<f64>) -> DVector<f64> {
    let scale = hess.diagonal().amax().max(1e-300);
    if !scale.is_finite() || hess.iter().any(|h| !h.is_finite()) {
        return -grad.clone();
    }
    let mut damping = 1e-12 * scale;
    for _ in 0..20 {
        let mut h = hess.clone();
        for i in 0..h.nrows() {
            h[(i, i)] += damping;
        }
        if let Some(ch) = h.cholesky() {
            return -ch.solve(grad);
        }
        damping *= 10.0;
    }
    -grad.clone()
}

/// Result of minimizing over tilts for a single check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckSolution {
    pub value: f64,
    /// Optimal log-tilts per edge; `-inf`/`+inf` for edges pinned at 0/1.
    pub log_tilts: Vec<f64>,
    /// `-∂²value/∂δ²` over the edges, when every edge is free and the
    /// check has degree at least 3.
    pub curvature: Option<DMatrix<f64>>,
}

fn solve_check(
    solver: &mut TiltSolver,
    fractions: &[f64],
    warm: Option<&[f64]>,
    want_curvature: bool,
) -> Result<CheckSolution> {
    if fractions.is_empty() {
        return Err(Error::InvalidParameter("check has no edges".into()));
    }
    if let Some(&bad) = fractions.iter().find(|d| !(0.0..=1.0).contains(*d)) {
        return Err(Error::FractionOutOfRange(bad));
    }
    // Edges pinned at 0 or 1 are fixed; ones pinned at 1 flip the parity
    // required of the remaining edges.
    let mut odd = false;
    let mut free = Vec::new();
    let mut log_tilts = vec![0.0; fractions.len()];
    for (e, &d) in fractions.iter().enumerate() {
        if d == 0.0 {
            log_tilts[e] = f64::NEG_INFINITY;
        } else if d == 1.0 {
            odd = !odd;
            log_tilts[e] = f64::INFINITY;
        } else {
            free.push(e);
        }
    }
    let infeasible = |log_tilts| Ok(CheckSolution { value: f64::NEG_INFINITY, log_tilts, curvature: None });
    match free.len() {
        0 => {
            let value = if odd { f64::NEG_INFINITY } else { 0.0 };
            return Ok(CheckSolution { value, log_tilts, curvature: None });
        }
        1 => return infeasible(log_tilts),
        2 => {
            let (a, b) = (fractions[free[0]], fractions[free[1]]);
            // Two free edges: bits are equal (even) or complementary (odd).
            let matched = if odd { (a + b - 1.0).abs() } else { (a - b).abs() };
            if matched > 1e-12 {
                return infeasible(log_tilts);
            }
            // Only the sum (even) or difference (odd) of the two tilts is
            // determined; report the symmetric split.
            let t = 0.5 * (a / (1.0 - a)).ln();
            log_tilts[free[0]] = t;
            log_tilts[free[1]] = if odd { -t } else { t };
            return Ok(CheckSolution { value: entropy(a), log_tilts, curvature: None });
        }
        _ => {}
    }
    let sub: Vec<f64> = free.iter().map(|&e| fractions[e]).collect();
    if parity_violation(&sub, odd) > 1e-12 {
        return infeasible(log_tilts);
    }
    let mut s: Vec<f64> = match warm {
        Some(w) if w.len() == fractions.len() && free.iter().all(|&e| w[e].is_finite()) => {
            free.iter().map(|&e| w[e]).collect()
        }
        _ => sub.iter().map(|&d| (d / (1.0 - d)).ln()).collect(),
    };
    let value = solver.minimize(&sub, &mut s, odd);
    for (i, &e) in free.iter().enumerate() {
        log_tilts[e] = s[i];
    }
    let curvature = if want_curvature && value.is_finite() && free.len() == fractions.len() {
        solver.curvature(&s, &sub, odd)
    } else {
        None
    };
    Ok(CheckSolution { value, log_tilts, curvature })
}

/// Exponent (nats per lifted copy) of the number of even-parity
/// configurations of a check whose edge `e` carries a fraction `δ_e` of
/// ones: `inf_{x > 0} ln g(x) - Σ δ_e ln x_e` with
/// `g(x) = (Π(1 + x_e) + Π(1 - x_e)) / 2`.
///
/// Returns `-inf` when no configuration has these fractions.
pub fn check_exponent(edge_fractions: &[f64]) -> Result<f64> {
    Ok(solve_check(&mut TiltSolver::default(), edge_fractions, None, false)?.value)
}

/// Like [`check_exponent`] but also returns the optimal log-tilts.
pub fn check_exponent_with_tilts(edge_fractions: &[f64]) -> Result<CheckSolution> {
    solve_check(&mut TiltSolver::default(), edge_fractions, None, true)
}

/// Settings of the outer maximization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnumeratorParams {
    /// Random starts in addition to the all-equal start.
    pub starts: usize,
    pub seed: u64,
    /// Stop once an accepted step improves the objective by less than this.
    pub improvement_tol: f64,
    pub max_iterations: usize,
    /// Node fractions are kept in `[clamp, 1 - clamp]`.
    pub clamp: f64,
}

impl Default for EnumeratorParams {
    fn default() -> Self {
        EnumeratorParams {
            starts: 16,
            seed: 0,
            improvement_tol: 1e-10,
            max_iterations: 20_000,
            clamp: 1e-9,
        }
    }
}

/// One sample of the spectral shape.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeSample {
    pub delta: f64,
    /// Exponent in nats per transmitted bit.
    pub r: f64,
    /// Optimal fraction per variable node (punctured nodes included).
    pub maximizer: Vec<f64>,
    pub converged: bool,
}

/// Sampled spectral shape `r(δ)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralShape {
    pub samples: Vec<ShapeSample>,
    pub delta_min: Option<f64>,
}

impl SpectralShape {
    pub fn converged(&self) -> bool {
        self.samples.iter().all(|s| s.converged)
    }
}

/// Weight-enumerator evaluator for a fixed protograph.
#[derive(Debug, Clone)]
pub struct Enumerator {
    /// Per check, the variable node at the end of each (expanded) edge.
    checks: Vec<Vec<usize>>,
    degrees: Vec<u32>,
    transmitted: Vec<bool>,
    u: usize,
    ensemble_id: u64,
    params: EnumeratorParams,
    /// Second-order steps need every check to be smooth in the node
    /// fractions, which fails for degree-2 checks joining distinct nodes.
    smooth: bool,
}

/// Evaluation point of the outer objective with warm-start tilts.
#[derive(Debug, Clone)]
struct Point {
    z: Vec<f64>,
    value: f64,
    grad: Vec<f64>,
    hess: Option<DMatrix<f64>>,
    tilts: Vec<Vec<f64>>,
}

impl Enumerator {
    pub fn new(b: &BaseMatrix, params: EnumeratorParams) -> Result<Self> {
        b.ensure_valid()?;
        let mut checks = Vec::with_capacity(b.n_c());
        for j in 0..b.n_c() {
            let mut vars = Vec::new();
            for k in 0..b.n_v() {
                for _ in 0..b.multiplicity(j, k) {
                    vars.push(k);
                }
            }
            checks.push(vars);
        }
        let smooth = checks.iter().all(|v| v.len() != 2 || v[0] == v[1]);
        let degrees = b.degree_profile()?.variable_degrees;
        let transmitted = (0..b.n_v()).map(|k| !b.is_punctured(k)).collect();
        Ok(Enumerator {
            checks,
            degrees,
            transmitted,
            u: b.transmitted(),
            ensemble_id: ensemble_id(b),
            params,
            smooth,
        })
    }

    pub fn params(&self) -> &EnumeratorParams {
        &self.params
    }

    pub fn n_v(&self) -> usize {
        self.degrees.len()
    }

    pub fn transmitted(&self) -> usize {
        self.u
    }

    /// Unnormalized exponent `F(δ)` at the given node fractions, or `-inf`.
    pub fn objective(&self, fractions: &[f64]) -> Result<f64> {
        if fractions.len() != self.n_v() {
            return Err(Error::InvalidParameter("fraction vector length".into()));
        }
        let mut solver = TiltSolver::default();
        let mut tilts = vec![Vec::new(); self.checks.len()];
        let mut total = 0.0;
        for (c, vars) in self.checks.iter().enumerate() {
            let fr: Vec<f64> = vars.iter().map(|&k| fractions[k]).collect();
            let sol = solve_check(&mut solver, &fr, None, false)?;
            total += sol.value;
            tilts[c] = sol.log_tilts;
        }
        for (k, &q) in self.degrees.iter().enumerate() {
            total -= (q as f64 - 1.0) * entropy(fractions[k]);
        }
        Ok(total)
    }

    fn point(&self, solver: &mut TiltSolver, z: Vec<f64>, warm: Option<&[Vec<f64>]>, second_order: bool) -> Option<Point> {
        let n = z.len();
        let mut tilts = match warm {
            Some(w) => w.to_vec(),
            None => vec![Vec::new(); self.checks.len()],
        };
        let mut value = 0.0;
        let mut grad = vec![0.0; n];
        let mut hess = second_order.then(|| DMatrix::zeros(n, n));
        let mut fr = Vec::new();
        for (c, vars) in self.checks.iter().enumerate() {
            fr.clear();
            fr.extend(vars.iter().map(|&k| z[k]));
            let warm = if tilts[c].is_empty() { None } else { Some(tilts[c].as_slice()) };
            let sol = solve_check(solver, &fr, warm, hess.is_some()).ok()?;
            if sol.value == f64::NEG_INFINITY {
                return None;
            }
            value += sol.value;
            for (&k, &t) in vars.iter().zip(&sol.log_tilts) {
                grad[k] -= t;
            }
            if let Some(h) = hess.as_mut() {
                match (&sol.curvature, vars.len()) {
                    (Some(cv), _) => {
                        for (a, &ka) in vars.iter().enumerate() {
                            for (b, &kb) in vars.iter().enumerate() {
                                h[(ka, kb)] -= cv[(a, b)];
                            }
                        }
                    }
                    // Degree-2 check on a single node contributes H(z).
                    (None, 2) => {
                        let k = vars[0];
                        h[(k, k)] -= 1.0 / (z[k] * (1.0 - z[k]));
                    }
                    _ => return None,
                }
            }
            tilts[c] = sol.log_tilts;
        }
        for (k, &q) in self.degrees.iter().enumerate() {
            let m = q as f64 - 1.0;
            value -= m * entropy(z[k]);
            grad[k] -= m * ((1.0 - z[k]) / z[k]).ln();
            if let Some(h) = hess.as_mut() {
                h[(k, k)] += m / (z[k] * (1.0 - z[k]));
            }
        }
        value.is_finite().then_some(Point { z, value, grad, hess, tilts })
    }

    /// Scaled Euclidean projection onto `{Σ_T z = target, z ∈ [lo, hi]}`:
    /// `z_i = clamp(y_i - λ w_i)` for transmitted nodes.
    fn project(&self, y: &[f64], w: &[f64], target: f64) -> Vec<f64> {
        let (lo, hi) = (self.params.clamp, 1.0 - self.params.clamp);
        let at = |lambda: f64| -> (Vec<f64>, f64) {
            let mut sum = 0.0;
            let z: Vec<f64> = y
                .iter()
                .zip(w)
                .zip(&self.transmitted)
                .map(|((&yi, &wi), &t)| {
                    if t {
                        let v = (yi - lambda * wi).clamp(lo, hi);
                        sum += v;
                        v
                    } else {
                        yi.clamp(lo, hi)
                    }
                })
                .collect();
            (z, sum)
        };
        let (z, sum) = at(0.0);
        if (sum - target).abs() <= 1e-15 * target.max(1.0) {
            return z;
        }
        let (mut a, mut b) = (-1.0f64, 1.0f64);
        while at(a).1 < target && a > -1e300 {
            a *= 2.0;
        }
        while at(b).1 > target && b < 1e300 {
            b *= 2.0;
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if at(m).1 > target {
                a = m;
            } else {
                b = m;
            }
            if b - a <= 1e-16 * (1.0 + a.abs()) {
                break;
            }
        }
        at(0.5 * (a + b)).0
    }

    /// Newton direction on the nodes away from their bounds, restricted to
    /// steps that keep the transmitted weight fixed. The negated Hessian is
    /// shifted until positive definite.
    fn newton_direction(&self, p: &Point) -> Option<Vec<f64>> {
        let hess = p.hess.as_ref()?;
        let n = p.z.len();
        let (lo, hi) = (self.params.clamp, 1.0 - self.params.clamp);
        let interior: Vec<usize> = (0..n).filter(|&k| p.z[k] > lo * 1.5 && p.z[k] < hi - lo * 0.5).collect();
        let t_count = interior.iter().filter(|&&k| self.transmitted[k]).count();
        let lambda = if t_count > 0 {
            interior.iter().filter(|&&k| self.transmitted[k]).map(|&k| p.grad[k]).sum::<f64>() / t_count as f64
        } else {
            0.0
        };
        // Nodes at a bound stay there only while the gradient pushes outward.
        let mut free: Vec<usize> = (0..n)
            .filter(|&k| {
                let g = p.grad[k] - if self.transmitted[k] { lambda } else { 0.0 };
                interior.contains(&k) || (p.z[k] <= lo * 1.5 && g > 0.0) || (p.z[k] >= hi - lo * 0.5 && g < 0.0)
            })
            .collect();
        // A bound node whose Newton component points outward is fixed too.
        loop {
            let d = self.reduced_newton(p, hess, &free)?;
            let before = free.len();
            free.retain(|&k| !((p.z[k] <= lo * 1.5 && d[k] < 0.0) || (p.z[k] >= hi - lo * 0.5 && d[k] > 0.0)));
            if free.len() == before {
                return Some(d);
            }
        }
    }

    fn reduced_newton(&self, p: &Point, hess: &DMatrix<f64>, free: &[usize]) -> Option<Vec<f64>> {
        let n = p.z.len();
        let m = free.len();
        if m == 0 {
            return None;
        }
        // Null-space basis of the weight constraint: eliminate the
        // transmitted free node with the largest fraction.
        let pivot = free
            .iter()
            .copied()
            .filter(|&k| self.transmitted[k])
            .max_by(|&a, &b| p.z[a].total_cmp(&p.z[b]));
        let reduced: Vec<usize> = free.iter().copied().filter(|&k| Some(k) != pivot).collect();
        let r = reduced.len();
        if r == 0 {
            return None;
        }
        let tie = |k: usize| if pivot.is_some() && self.transmitted[k] { 1.0 } else { 0.0 };
        let neg = |a: usize, b: usize| -hess[(a, b)];
        let mut mat = DMatrix::zeros(r, r);
        let mut rhs = DVector::zeros(r);
        for (i, &ka) in reduced.iter().enumerate() {
            let ta = tie(ka);
            rhs[i] = p.grad[ka] - pivot.map_or(0.0, |q| ta * p.grad[q]);
            for (j, &kb) in reduced.iter().enumerate() {
                let tb = tie(kb);
                let mut v = neg(ka, kb);
                if let Some(q) = pivot {
                    v += -ta * neg(q, kb) - tb * neg(ka, q) + ta * tb * neg(q, q);
                }
                mat[(i, j)] = v;
            }
        }
        let diag: Vec<f64> = (0..r).map(|i| mat[(i, i)].abs().max(1e-300)).collect();
        let mut shift = 0.0;
        let y = loop {
            let mut shifted = mat.clone();
            for i in 0..r {
                shifted[(i, i)] += shift * diag[i];
            }
            if let Some(c) = shifted.cholesky() {
                break c.solve(&rhs);
            }
            shift = if shift == 0.0 { 1e-8 } else { shift * 10.0 };
            if shift > 1e8 {
                return None;
            }
        };
        let mut d = vec![0.0; n];
        for (i, &k) in reduced.iter().enumerate() {
            d[k] = y[i];
            if let Some(q) = pivot {
                d[q] -= tie(k) * y[i];
            }
        }
        Some(d)
    }

    /// Ascent from `start`: projected Newton steps, falling back to scaled
    /// projected gradient steps when Newton makes no progress.
    fn ascend(&self, solver: &mut TiltSolver, start: Vec<f64>, target: f64) -> Option<(Point, bool)> {
        let second_order = self.smooth;
        let ones = vec![1.0; start.len()];
        let even = target / self.u as f64;
        // Infeasible starts are blended toward the all-equal point.
        let mut cur = [0.0, 0.5, 0.9, 1.0].iter().find_map(|&a| {
            let y: Vec<f64> = start.iter().map(|&z| (1.0 - a) * z + a * even).collect();
            self.point(solver, self.project(&y, &ones, target), None, second_order)
        })?;
        let mut grad_step = 1.0;
        let mut small = 0;
        for _ in 0..self.params.max_iterations {
            let w: Vec<f64> = cur.z.iter().map(|&z| z * (1.0 - z)).collect();
            let mut next = None;
            if let Some(dir) = self.newton_direction(&cur) {
                let mut t = 1.0;
                // Keep the full step inside the box up to a fraction.
                for (k, &d) in dir.iter().enumerate() {
                    if d < 0.0 {
                        t = f64::min(t, 0.9 * (cur.z[k] - self.params.clamp).max(0.0) / -d);
                    } else if d > 0.0 {
                        t = f64::min(t, 0.9 * (1.0 - self.params.clamp - cur.z[k]).max(0.0) / d);
                    }
                }
                let t0 = t;
                while t > 1e-10 * t0.max(1e-300) && t > 0.0 {
                    let y: Vec<f64> = cur.z.iter().zip(&dir).map(|(&z, &d)| z + t * d).collect();
                    let z = self.project(&y, &w, target);
                    let ascent: f64 = z.iter().zip(&cur.z).zip(&cur.grad).map(|((a, b), g)| (a - b) * g).sum();
                    if ascent <= 0.0 {
                        break;
                    }
                    if let Some(p) = self.point(solver, z, Some(&cur.tilts), second_order) {
                        if p.value >= cur.value + 1e-4 * ascent {
                            next = Some(p);
                            break;
                        }
                    }
                    t *= 0.5;
                }
            }
            if next.is_none() {
                while grad_step > 1e-14 {
                    let y: Vec<f64> = cur.z.iter().zip(&cur.grad).zip(&w).map(|((&z, &g), &wi)| z + grad_step * wi * g).collect();
                    let z = self.project(&y, &w, target);
                    let ascent: f64 = z.iter().zip(&cur.z).zip(&cur.grad).map(|((a, b), g)| (a - b) * g).sum();
                    if ascent <= 0.0 {
                        return Some((cur, true));
                    }
                    if let Some(p) = self.point(solver, z, Some(&cur.tilts), second_order) {
                        if p.value >= cur.value + 1e-4 * ascent {
                            next = Some(p);
                            break;
                        }
                    }
                    grad_step *= 0.25;
                }
                grad_step = (grad_step * 2.0).min(1e6);
            }
            let Some(next) = next else {
                return Some((cur, true));
            };
            let gain = next.value - cur.value;
            cur = next;
            if gain < self.params.improvement_tol {
                small += 1;
                if small >= 2 {
                    return Some((cur, true));
                }
            } else {
                small = 0;
            }
        }
        Some((cur, false))
    }

    /// The all-equal start followed by `starts` random ones.
    fn start_points(&self, delta: f64) -> Vec<Vec<f64>> {
        let n = self.n_v();
        let mut out = vec![vec![delta; n]];
        for start in 0..self.params.starts {
            let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(
                self.ensemble_id ^ self.params.seed,
                delta,
                start as u64,
            ));
            let z = (0..n)
                .map(|k| {
                    if self.transmitted[k] {
                        rng.gen::<f64>() * 2.0 * delta
                    } else {
                        rng.gen::<f64>() * (4.0 * delta).min(1.0)
                    }
                })
                .collect();
            out.push(z);
        }
        out
    }

    /// Evaluates `r(δ)` with multi-start ascent.
    pub fn sample(&self, delta: f64) -> Result<ShapeSample> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::InvalidParameter(format!("delta {delta} outside (0, 1]")));
        }
        let u = self.u as f64;
        let target = (u * delta).clamp(self.params.clamp * u, (1.0 - self.params.clamp) * u);
        let mut solver = TiltSolver::default();
        let mut best: Option<(Point, bool)> = None;
        for start in self.start_points(delta) {
            if let Some((p, conv)) = self.ascend(&mut solver, start, target) {
                if best.as_ref().map_or(true, |(b, _)| p.value > b.value) {
                    best = Some((p, conv));
                }
            }
        }
        Ok(match best {
            Some((p, converged)) => ShapeSample { delta, r: p.value / u, maximizer: p.z, converged },
            None => ShapeSample {
                delta,
                r: f64::NEG_INFINITY,
                maximizer: Vec::new(),
                converged: false,
            },
        })
    }

    /// Samples `r(δ)` on a grid; samples are evaluated in parallel.
    pub fn spectral_shape(&self, grid: &[f64]) -> Result<SpectralShape> {
        for w in grid.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidParameter("grid must be strictly increasing".into()));
            }
        }
        let samples = grid.par_iter().map(|&d| self.sample(d)).collect::<Result<Vec<_>>>()?;
        let mut shape = SpectralShape { samples, delta_min: None };
        shape.delta_min = self.delta_min(&shape).ok();
        Ok(shape)
    }

    /// First positive zero of `r`, refined by bisection to `1e-6`.
    ///
    /// Returns 0 when `r` is already nonnegative at the first sample.
    pub fn delta_min(&self, shape: &SpectralShape) -> Result<f64> {
        let first = shape.samples.iter().position(|s| s.r >= 0.0).ok_or(Error::NoCrossing)?;
        if first == 0 {
            return Ok(0.0);
        }
        let (mut lo, mut hi) = (shape.samples[first - 1].delta, shape.samples[first].delta);
        while hi - lo > 1e-6 {
            let mid = 0.5 * (lo + hi);
            if self.sample(mid)?.r >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Grid `start, start + step, ...` up to and including `stop`.
pub fn uniform_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| start + i as f64 * step).collect()
}

/// Result of a growth-rate computation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthRate {
    pub delta_min: f64,
    /// Samples evaluated up to and including the first crossing.
    pub shape: SpectralShape,
    pub converged: bool,
}

/// Computes `δ_min` by scanning the grid until `r` first becomes
/// nonnegative and bisecting the bracketing interval.
///
/// Grid points are evaluated in parallel batches; because every sample is
/// independent, the result does not depend on the batch size.
pub fn growth_rate(b: &BaseMatrix, params: EnumeratorParams, grid: &[f64]) -> Result<GrowthRate> {
    let en = Enumerator::new(b, params)?;
    let batch = rayon::current_num_threads().max(1);
    let mut samples: Vec<ShapeSample> = Vec::new();
    for chunk in grid.chunks(batch) {
        let got = chunk.par_iter().map(|&d| en.sample(d)).collect::<Result<Vec<_>>>()?;
        let mut done = false;
        for s in got {
            let hit = s.r >= 0.0;
            samples.push(s);
            if hit {
                done = true;
                break;
            }
        }
        if done {
            break;
        }
    }
    let mut shape = SpectralShape { samples, delta_min: None };
    let delta_min = en.delta_min(&shape)?;
    shape.delta_min = Some(delta_min);
    let converged = shape.converged();
    Ok(GrowthRate { delta_min, shape, converged })
}

/// `u δ` with `u = (4 + 2e) L` transmitted nodes.
pub fn scaled_growth(delta: f64, e: usize, l: usize) -> f64 {
    ((4 + 2 * e) * l) as f64 * delta
}

/// Estimates `δ_min` at termination `L` from a converged scaled value.
pub fn estimate_delta_large_l(converged_scaled: f64, e: usize, l: usize) -> f64 {
    converged_scaled / ((4 + 2 * e) * l) as f64
}

fn fnv1a(hash: u64, bytes: &[u8]) -> u64 {
    bytes.iter().fold(hash, |h, &b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

/// Content hash of a base matrix, used to derive multi-start seeds.
pub fn ensemble_id(b: &BaseMatrix) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325;
    h = fnv1a(h, &(b.n_c() as u64).to_le_bytes());
    h = fnv1a(h, &(b.n_v() as u64).to_le_bytes());
    for &v in b.base.iter().flatten() {
        h = fnv1a(h, &v.to_le_bytes());
    }
    for &k in &b.punctured {
        h = fnv1a(h, &(k as u64).to_le_bytes());
    }
    h
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn sample_seed(id: u64, delta: f64, start: u64) -> u64 {
    splitmix(splitmix(splitmix(id) ^ delta.to_bits()) ^ start)
}
