//! Constellation design by smoothed minimum-distance optimization.
//!
//! Three procedures share one surrogate, `log Σ_{i<j} exp(−d_ij/ε)`:
//!
//! * [`design_mcd_manopt`]: `d_ij = ‖XᵢXᵢᴴ − XⱼXⱼᴴ‖_F`, Riemannian descent on 𝒢(T,M)^|𝒳|.
//! * [`design_mcpd_manopt`]: `d_ij = det(I − XᵢᴴXⱼXⱼᴴXᵢ)`, same optimizer.
//! * [`design_sparse`]: `d_ij` as for MCPD, but over the angle/phase parameters of
//!   codewords pinned to Schubert-cell sparsity patterns.
//!
//! Restarts are independent (one rng stream per restart index) and the best
//! restart is picked by the exact minimum distance, not the surrogate value.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::baselines::haar_random_point;
use crate::error::{Error, Result};
use crate::grassmann::{min_pairwise, Constellation, DistanceMetric, GrassmannPoint};
use crate::linalg::{self, CMatrix, C64};
use crate::rng;
use crate::schubert::{self, ParamSet, SparsityPattern};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignConfig {
    /// Smoothing constant ε of the log-sum-exp surrogate.
    pub epsilon: f64,
    pub max_iterations: usize,
    pub restarts: usize,
    /// Initial Armijo trial step.
    pub step_size: f64,
    /// Stop once one accepted step lowers the surrogate by less than this.
    pub tolerance: f64,
    pub seed: u64,
    /// Central finite-difference step for the sparse parametric gradient.
    pub fd_step: f64,
    /// Sparse design only: permit more codewords than there are distinct
    /// patterns (the extra codewords reuse rank-safe patterns).
    pub allow_pattern_reuse: bool,
    /// Sparse design only: how codewords are mapped to sparsity patterns.
    pub allocation: PatternAllocation,
}

/// Pattern-to-codeword mapping for the sparse design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatternAllocation {
    /// [`schubert::allocate_patterns_with`]: distinct patterns first.
    Distinct,
    /// Round-robin over the rank-safe patterns only.
    RankSafeCycle,
    /// Every codeword on one rank-safe pattern; the column-size profile is
    /// chosen by a short screening run.
    SinglePattern,
    /// Screen every candidate above and keep the best.
    #[default]
    Auto,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-2,
            max_iterations: 1000,
            restarts: 10,
            step_size: 1e-2,
            tolerance: 1e-12,
            seed: 0,
            fd_step: 1e-6,
            allow_pattern_reuse: true,
            allocation: PatternAllocation::Auto,
        }
    }
}

impl DesignConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        if self.max_iterations == 0 || self.restarts == 0 {
            return Err(Error::invalid("max_iterations and restarts must be positive"));
        }
        if !(self.step_size > 0.0) || !(self.fd_step > 0.0) || !(self.tolerance >= 0.0) {
            return Err(Error::invalid("step sizes must be positive and tolerance non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub method: String,
    /// Surrogate value of the returned constellation.
    pub final_objective: f64,
    pub mcd: f64,
    pub mcd_pair: (usize, usize),
    pub mcpd: f64,
    pub mcpd_pair: (usize, usize),
    /// Iterations used by the selected restart.
    pub iterations: usize,
    /// False when the selected restart hit `max_iterations`.
    pub converged: bool,
    /// Exact selection criterion (MCD or MCPD) reached by each restart.
    pub restart_best: Vec<f64>,
    /// Surrogate after every accepted step of the selected restart.
    pub objective_trace: Vec<f64>,
    /// Pairs where `I − XᵢᴴXⱼXⱼᴴXᵢ` is numerically singular.
    pub rank_deficient_pairs: Vec<(usize, usize)>,
    /// Pattern allocation used by the sparse design.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allocation: Option<String>,
}

/// Rank tolerance (relative to the largest eigenvalue) for the post-hoc check.
pub const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Surrogate {
    /// `‖Pᵢ − Pⱼ‖_F`.
    Projector,
    /// `det(I − CCᴴ)`.
    Determinant,
}

impl Surrogate {
    fn exact_metric(self) -> DistanceMetric {
        match self {
            Surrogate::Projector => DistanceMetric::Chordal,
            Surrogate::Determinant => DistanceMetric::ChordalProduct,
        }
    }
}

/// `log Σ exp(−v/ε)` with a max shift.
pub fn smoothed_objective(values: &[f64], epsilon: f64) -> f64 {
    let top = values.iter().map(|v| -v / epsilon).fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return top;
    }
    top + values.iter().map(|v| (-v / epsilon - top).exp()).sum::<f64>().ln()
}

fn softmax_weights(values: &[f64], epsilon: f64) -> Vec<f64> {
    let top = values.iter().map(|v| -v / epsilon).fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = values.iter().map(|v| (-v / epsilon - top).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Determinant and adjugate of a Hermitian matrix via its eigendecomposition.
fn hermitian_det_adjugate(g: &CMatrix) -> (f64, CMatrix) {
    let m = g.nrows();
    let sym = (g + g.adjoint()).scale(0.5);
    let eig = sym.symmetric_eigen();
    let lam: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let det: f64 = lam.iter().product();
    let mut adj = CMatrix::zeros(m, m);
    for k in 0..m {
        let cof: f64 = lam.iter().enumerate().filter(|&(l, _)| l != k).map(|(_, v)| v).product();
        let u = eig.eigenvectors.column(k);
        adj += (&u * u.adjoint()).scale(cof);
    }
    (det, adj)
}

fn pair_value(s: Surrogate, xi: &CMatrix, xj: &CMatrix) -> f64 {
    let c = xi.ad_mul(xj);
    match s {
        Surrogate::Projector => (2.0 * (xi.ncols() as f64 - c.norm_squared())).max(0.0).sqrt(),
        Surrogate::Determinant => {
            let m = c.nrows();
            let g = CMatrix::identity(m, m) - &c * c.adjoint();
            let mut buf: Vec<C64> = (0..m * m).map(|k| g[(k / m, k % m)]).collect();
            linalg::det_in_place(&mut buf, m).re
        }
    }
}

/// Pair value and its Euclidean gradients w.r.t. `Xᵢ` and `Xⱼ`
/// (real inner product `Re tr(AᴴB)`).
fn pair_value_grads(s: Surrogate, xi: &CMatrix, xj: &CMatrix) -> (f64, CMatrix, CMatrix) {
    let c = xi.ad_mul(xj);
    match s {
        Surrogate::Projector => {
            let d = (2.0 * (xi.ncols() as f64 - c.norm_squared())).max(0.0).sqrt();
            let inv = -2.0 / d.max(1e-12);
            let gi = (xj * c.adjoint()).scale(inv);
            let gj = (xi * &c).scale(inv);
            (d, gi, gj)
        }
        Surrogate::Determinant => {
            let m = c.nrows();
            let (det_i, adj_i) = hermitian_det_adjugate(&(CMatrix::identity(m, m) - &c * c.adjoint()));
            let (_, adj_j) = hermitian_det_adjugate(&(CMatrix::identity(m, m) - c.adjoint() * &c));
            let gi = (xj * c.adjoint() * adj_i).scale(-2.0);
            let gj = (xi * &c * adj_j).scale(-2.0);
            (det_i, gi, gj)
        }
    }
}

fn pair_values(s: Surrogate, pts: &[CMatrix]) -> Vec<f64> {
    let n = pts.len();
    let mut v = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            v.push(pair_value(s, &pts[i], &pts[j]));
        }
    }
    v
}

fn surrogate_value(s: Surrogate, pts: &[CMatrix], eps: f64) -> f64 {
    smoothed_objective(&pair_values(s, pts), eps)
}

fn euclidean_gradient(s: Surrogate, pts: &[CMatrix], eps: f64) -> (f64, Vec<CMatrix>) {
    let n = pts.len();
    let mut vals = Vec::new();
    let mut grads = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let (v, gi, gj) = pair_value_grads(s, &pts[i], &pts[j]);
            vals.push(v);
            grads.push((i, j, gi, gj));
        }
    }
    let f = smoothed_objective(&vals, eps);
    let w = softmax_weights(&vals, eps);
    let mut out: Vec<CMatrix> = pts.iter().map(|x| CMatrix::zeros(x.nrows(), x.ncols())).collect();
    for (wk, (i, j, gi, gj)) in w.iter().zip(grads) {
        let coef = -wk / eps;
        out[i] += gi.scale(coef);
        out[j] += gj.scale(coef);
    }
    (f, out)
}

struct RunOutcome<P> {
    state: P,
    objective: f64,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

/// First trial step: `2Δf/‖g‖²` from the previous decrease, at most four
/// times the previously accepted step.
fn initial_step(prev: f64, last_decrease: Option<f64>, gnorm2: f64) -> f64 {
    match last_decrease {
        Some(df) if df > 0.0 => (2.02 * df / gnorm2).clamp(prev * 1e-3, prev * 4.0),
        _ => prev,
    }
}

/// Riemannian gradient descent with QR retraction and Armijo backtracking.
fn riemannian_descent(mut pts: Vec<CMatrix>, s: Surrogate, cfg: &DesignConfig) -> RunOutcome<Vec<CMatrix>> {
    let eps = cfg.epsilon;
    let mut step = cfg.step_size;
    let mut f = surrogate_value(s, &pts, eps);
    let mut trace = vec![f];
    let mut last_decrease = None;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let (_, egrad) = euclidean_gradient(s, &pts, eps);
        // horizontal projection: G − X XᴴG
        let rgrad: Vec<CMatrix> = pts.iter().zip(&egrad).map(|(x, g)| g - x * x.ad_mul(g)).collect();
        let gnorm2: f64 = rgrad.iter().map(|g| g.norm_squared()).sum();
        if gnorm2 < 1e-28 {
            converged = true;
            break;
        }
        step = initial_step(step, last_decrease, gnorm2);
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial: Vec<CMatrix> = pts.iter().zip(&rgrad).map(|(x, g)| linalg::qr_positive(&(x - g.scale(step)))).collect();
            let ft = surrogate_value(s, &trial, eps);
            if ft <= f - ARMIJO_C * step * gnorm2 {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, ft)) = accepted else {
            converged = true;
            break;
        };
        let decrease = f - ft;
        pts = trial;
        f = ft;
        trace.push(f);
        last_decrease = Some(decrease);
        if decrease < cfg.tolerance {
            converged = true;
            break;
        }
    }
    RunOutcome {
        state: pts,
        objective: f,
        trace,
        iterations,
        converged,
    }
}

fn rank_deficient_pairs(c: &Constellation) -> Vec<(usize, usize)> {
    let m = c.m_antennas();
    c.pairs()
        .filter(|&(i, j)| {
            let x = c.points()[i].entries();
            let y = c.points()[j].entries();
            let cc = x.ad_mul(y);
            let g = CMatrix::identity(m, m) - &cc * cc.adjoint();
            let ev = linalg::hermitian_eigenvalues(&g);
            let top = ev.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
            ev[0] <= RANK_TOL * top
        })
        .collect()
}

fn finish_report<P>(method: &str, c: &Constellation, best: &RunOutcome<P>, restart_best: Vec<f64>) -> Result<DesignReport> {
    let (mcd, mcd_pair) = min_pairwise(c, DistanceMetric::Chordal)?;
    let (mcpd, mcpd_pair) = min_pairwise(c, DistanceMetric::ChordalProduct)?;
    Ok(DesignReport {
        method: method.to_string(),
        final_objective: best.objective,
        mcd,
        mcd_pair,
        mcpd,
        mcpd_pair,
        iterations: best.iterations,
        converged: best.converged,
        restart_best,
        objective_trace: best.trace.clone(),
        rank_deficient_pairs: rank_deficient_pairs(c),
        allocation: None,
    })
}

fn check_design_inputs(t: usize, m: usize, cardinality: usize, cfg: &DesignConfig) -> Result<()> {
    cfg.validate()?;
    if m == 0 || t <= m {
        return Err(Error::invalid(format!("need T > M >= 1, got T={t}, M={m}")));
    }
    if cardinality < 2 {
        return Err(Error::invalid("cardinality must be at least 2"));
    }
    Ok(())
}

/// Picks the restart with the largest exact criterion; ties go to the lowest index.
fn select_best<P>(runs: Vec<(f64, RunOutcome<P>, Constellation)>) -> (Vec<f64>, RunOutcome<P>, Constellation) {
    let scores: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let mut best_idx = 0;
    for (k, s) in scores.iter().enumerate() {
        if *s > scores[best_idx] {
            best_idx = k;
        }
    }
    let (_, run, c) = runs.into_iter().nth(best_idx).expect("at least one restart");
    (scores, run, c)
}

fn manifold_design(t: usize, m: usize, cardinality: usize, cfg: &DesignConfig, s: Surrogate, method: &str) -> Result<(Constellation, DesignReport)> {
    check_design_inputs(t, m, cardinality, cfg)?;
    let runs: Vec<(f64, RunOutcome<Vec<CMatrix>>, Constellation)> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut stream = rng::stream(cfg.seed, &[r as u64]);
            let init = (0..cardinality)
                .map(|_| haar_random_point(t, m, &mut stream).map(GrassmannPoint::into_entries))
                .collect::<Result<Vec<_>>>()?;
            let run = riemannian_descent(init, s, cfg);
            let points = run.state.iter().map(|x| GrassmannPoint::new(x.clone())).collect::<Result<Vec<_>>>()?;
            let c = Constellation::new(points)?;
            let score = min_pairwise(&c, s.exact_metric())?.0;
            Ok((score, run, c))
        })
        .collect::<Result<Vec<_>>>()?;
    let (scores, best, mut c) = select_best(runs);
    c.provenance = json!({
        "method": method,
        "T": t, "M": m, "cardinality": cardinality,
        "config": cfg,
    });
    let report = finish_report(method, &c, &best, scores)?;
    Ok((c, report))
}

/// MCD-Manopt: maximizes the minimum chordal distance.
pub fn design_mcd_manopt(t: usize, m: usize, cardinality: usize, cfg: &DesignConfig) -> Result<(Constellation, DesignReport)> {
    manifold_design(t, m, cardinality, cfg, Surrogate::Projector, "mcd")
}

/// MCPD-Manopt: maximizes the minimum chordal product distance.
pub fn design_mcpd_manopt(t: usize, m: usize, cardinality: usize, cfg: &DesignConfig) -> Result<(Constellation, DesignReport)> {
    manifold_design(t, m, cardinality, cfg, Surrogate::Determinant, "mcpd")
}

/// Codewords pinned to sparsity patterns, stored row-wise.
struct SparseFamily {
    patterns: Vec<SparsityPattern>,
    params: Vec<Vec<f64>>,
    cols: Vec<Vec<Option<usize>>>,
    vals: Vec<Vec<C64>>,
    m: usize,
}

impl SparseFamily {
    fn new(patterns: Vec<SparsityPattern>, params: Vec<Vec<f64>>) -> Self {
        let t = patterns[0].t_slots();
        let m = patterns[0].m_antennas();
        let n = patterns.len();
        let mut fam = Self {
            patterns,
            params,
            cols: vec![vec![None; t]; n],
            vals: vec![vec![C64::new(0.0, 0.0); t]; n],
            m,
        };
        for i in 0..n {
            fam.refresh(i);
        }
        fam
    }

    fn refresh(&mut self, i: usize) {
        let p = ParamSet::from_flat(&self.patterns[i], &self.params[i]).expect("parameter length fixed by pattern");
        schubert::fill_rows(&self.patterns[i], &p, &mut self.cols[i], &mut self.vals[i]);
    }

    fn len(&self) -> usize {
        self.patterns.len()
    }

    /// Pair value computed from the row form: `C[a][b] = Σ_t conj(xᵢ[t]) xⱼ[t]`.
    fn pair(&self, s: Surrogate, i: usize, j: usize) -> f64 {
        let m = self.m;
        let mut c = [C64::new(0.0, 0.0); 64];
        let c = &mut c[..m * m];
        for t in 0..self.cols[i].len() {
            if let (Some(a), Some(b)) = (self.cols[i][t], self.cols[j][t]) {
                c[a * m + b] += self.vals[i][t].conj() * self.vals[j][t];
            }
        }
        match s {
            Surrogate::Projector => {
                let fro: f64 = c.iter().map(|z| z.norm_sqr()).sum();
                (2.0 * (m as f64 - fro)).max(0.0).sqrt()
            }
            Surrogate::Determinant => {
                let mut g = [C64::new(0.0, 0.0); 64];
                let g = &mut g[..m * m];
                for a in 0..m {
                    for b in 0..m {
                        let mut acc = C64::new(if a == b { 1.0 } else { 0.0 }, 0.0);
                        for k in 0..m {
                            acc -= c[a * m + k] * c[b * m + k].conj();
                        }
                        g[a * m + b] = acc;
                    }
                }
                linalg::det_in_place(g, m).re
            }
        }
    }

    fn all_pairs(&self, s: Surrogate) -> Vec<f64> {
        let n = self.len();
        let mut v = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                v.push(self.pair(s, i, j));
            }
        }
        v
    }

    fn to_constellation(&self) -> Result<Constellation> {
        let points = self
            .patterns
            .iter()
            .zip(&self.params)
            .map(|(p, flat)| schubert::materialize(p, &ParamSet::from_flat(p, flat)?))
            .collect::<Result<Vec<_>>>()?;
        Constellation::new(points)
    }
}

/// Central-difference gradient of the surrogate. Perturbing codeword `i` only
/// touches pairs `(i, ·)`, so the untouched part of the sum is computed once.
fn sparse_gradient(fam: &mut SparseFamily, s: Surrogate, eps: f64, h: f64) -> Vec<Vec<f64>> {
    let n = fam.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = fam.pair(s, i, j);
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    let mut grad = Vec::with_capacity(n);
    for i in 0..n {
        let rest: Vec<f64> = (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .filter(|&(a, b)| a != i && b != i)
            .map(|(a, b)| d[a][b])
            .collect();
        let mut gi = vec![0.0; fam.params[i].len()];
        for k in 0..gi.len() {
            let orig = fam.params[i][k];
            let eval = |delta: f64, fam: &mut SparseFamily| {
                fam.params[i][k] = orig + delta;
                fam.refresh(i);
                let mut vals = rest.clone();
                vals.extend((0..n).filter(|&j| j != i).map(|j| fam.pair(s, i, j)));
                smoothed_objective(&vals, eps)
            };
            let fp = eval(h, fam);
            let fm = eval(-h, fam);
            gi[k] = (fp - fm) / (2.0 * h);
            fam.params[i][k] = orig;
        }
        fam.refresh(i);
        grad.push(gi);
    }
    grad
}

fn parametric_descent(mut fam: SparseFamily, s: Surrogate, cfg: &DesignConfig) -> RunOutcome<SparseFamily> {
    let eps = cfg.epsilon;
    let mut step = cfg.step_size;
    let mut f = smoothed_objective(&fam.all_pairs(s), eps);
    let mut trace = vec![f];
    let mut last_decrease = None;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let grad = sparse_gradient(&mut fam, s, eps, cfg.fd_step);
        let gnorm2: f64 = grad.iter().flatten().map(|g| g * g).sum();
        if gnorm2 < 1e-28 {
            converged = true;
            break;
        }
        step = initial_step(step, last_decrease, gnorm2);
        let base = fam.params.clone();
        let mut accepted = false;
        let mut ft = f;
        for _ in 0..MAX_BACKTRACKS {
            for i in 0..fam.len() {
                for (p, (b, g)) in fam.params[i].iter_mut().zip(base[i].iter().zip(&grad[i])) {
                    *p = b - step * g;
                }
                fam.refresh(i);
            }
            ft = smoothed_objective(&fam.all_pairs(s), eps);
            if ft <= f - ARMIJO_C * step * gnorm2 {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            fam.params = base;
            for i in 0..fam.len() {
                fam.refresh(i);
            }
            converged = true;
            break;
        }
        let decrease = f - ft;
        f = ft;
        trace.push(f);
        last_decrease = Some(decrease);
        if decrease < cfg.tolerance {
            converged = true;
            break;
        }
    }
    RunOutcome {
        state: fam,
        objective: f,
        trace,
        iterations,
        converged,
    }
}

fn sparse_family_design(
    patterns: Vec<SparsityPattern>,
    cfg: &DesignConfig,
    s: Surrogate,
    method: &str,
    extra: serde_json::Value,
) -> Result<(Constellation, DesignReport)> {
    let runs = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut stream = rng::stream(cfg.seed, &[r as u64]);
            let params = patterns.iter().map(|p| ParamSet::random(p, &mut stream).to_flat()).collect();
            let run = parametric_descent(SparseFamily::new(patterns.clone(), params), s, cfg);
            let c = run.state.to_constellation()?;
            let score = min_pairwise(&c, s.exact_metric())?.0;
            Ok((score, run, c))
        })
        .collect::<Result<Vec<_>>>()?;
    let (scores, best, mut c) = select_best(runs);
    let params: Vec<ParamSet> = best
        .state
        .patterns
        .iter()
        .zip(&best.state.params)
        .map(|(p, f)| ParamSet::from_flat(p, f))
        .collect::<Result<_>>()?;
    c.provenance = json!({
        "method": method,
        "T": patterns[0].t_slots(), "M": patterns[0].m_antennas(),
        "cardinality": patterns.len(),
        "patterns": patterns.iter().map(SparsityPattern::record).collect::<Vec<_>>(),
        "params": params,
        "config": cfg,
        "extra": extra,
    });
    let report = finish_report(method, &c, &best, scores)?;
    Ok((c, report))
}

/// Candidate pattern allocations, labelled.
pub fn candidate_allocations(t: usize, m: usize, s: usize, cardinality: usize, cfg: &DesignConfig) -> Result<Vec<(String, Vec<SparsityPattern>)>> {
    let distinct = || schubert::allocate_patterns_with(t, m, s, cardinality, cfg.allow_pattern_reuse);
    let total = schubert::count_patterns(t, m, s)?;
    if cardinality as u64 > total && !cfg.allow_pattern_reuse {
        return Err(Error::Infeasible(format!(
            "{cardinality} codewords requested but (T,M,s)=({t},{m},{s}) has only {total} patterns"
        )));
    }
    let safe: Vec<SparsityPattern> = schubert::enumerate_patterns(t, m, s)?.into_iter().filter(SparsityPattern::is_rank_safe_for_reuse).collect();
    let mut singles: Vec<(String, Vec<SparsityPattern>)> = Vec::new();
    for p in &safe {
        let mut profile: Vec<usize> = p.supports().iter().map(Vec::len).collect();
        profile.sort_unstable_by(|a, b| b.cmp(a));
        let label = format!("single-pattern:{}", profile.iter().map(usize::to_string).collect::<Vec<_>>().join("-"));
        if singles.iter().all(|(l, _)| *l != label) {
            singles.push((label, vec![p.clone(); cardinality]));
        }
    }
    let cycle = || -> Vec<(String, Vec<SparsityPattern>)> {
        if safe.is_empty() {
            Vec::new()
        } else {
            vec![("rank-safe-cycle".to_string(), safe.iter().cycle().take(cardinality).cloned().collect())]
        }
    };
    let mut out = Vec::new();
    match cfg.allocation {
        PatternAllocation::Distinct => out.push(("distinct".to_string(), distinct()?)),
        PatternAllocation::RankSafeCycle => out.extend(cycle()),
        PatternAllocation::SinglePattern => out.extend(singles),
        PatternAllocation::Auto => {
            if let Ok(d) = distinct() {
                out.push(("distinct".to_string(), d));
            }
            out.extend(cycle());
            out.extend(singles);
        }
    }
    if out.is_empty() {
        return Err(Error::Infeasible(format!("no rank-safe pattern for (T,M,s)=({t},{m},{s})")));
    }
    Ok(out)
}

/// Sparse design: allocate sparsity patterns, then optimize the per-codeword
/// angles and phases against the MCPD surrogate.
///
/// With several candidate allocations, each is screened with at most two
/// restarts and 300 iterations; the full run uses the one with the largest
/// exact MCPD.
pub fn design_sparse(t: usize, m: usize, s: usize, cardinality: usize, cfg: &DesignConfig) -> Result<(Constellation, DesignReport)> {
    check_design_inputs(t, m, cardinality, cfg)?;
    let mut candidates = candidate_allocations(t, m, s, cardinality, cfg)?;
    let pick = if candidates.len() == 1 {
        0
    } else {
        let screen = DesignConfig {
            restarts: cfg.restarts.min(2),
            max_iterations: cfg.max_iterations.min(300),
            ..cfg.clone()
        };
        let mut best = (0, f64::NEG_INFINITY);
        for (k, (_, pats)) in candidates.iter().enumerate() {
            let (_, rep) = sparse_family_design(pats.clone(), &screen, Surrogate::Determinant, "sparse", json!({}))?;
            if rep.mcpd > best.1 {
                best = (k, rep.mcpd);
            }
        }
        best.0
    };
    let (label, patterns) = candidates.swap_remove(pick);
    let (c, mut rep) = sparse_family_design(patterns, cfg, Surrogate::Determinant, "sparse", json!({ "s": s, "allocation": label }))?;
    rep.allocation = Some(label);
    Ok((c, rep))
}

/// Sparse design over an explicit pattern per codeword.
pub fn design_sparse_with_patterns(patterns: Vec<SparsityPattern>, cfg: &DesignConfig) -> Result<(Constellation, DesignReport)> {
    cfg.validate()?;
    if patterns.len() < 2 {
        return Err(Error::invalid("cardinality must be at least 2"));
    }
    let (t, m) = (patterns[0].t_slots(), patterns[0].m_antennas());
    if patterns.iter().any(|p| p.t_slots() != t || p.m_antennas() != m) {
        return Err(Error::invalid("patterns must share (T, M)"));
    }
    let s = patterns[0].sparsity();
    sparse_family_design(patterns, cfg, Surrogate::Determinant, "sparse", json!({ "s": s }))
}

/// The non-rank-safe pattern `{1}, {2}, …, {M−1}, {M, …, T}` (1-based): the
/// first `M − 1` columns are fixed unit vectors.
pub fn rank_deficient_pattern(t: usize, m: usize) -> Result<SparsityPattern> {
    if m < 2 || t <= m {
        return Err(Error::Infeasible(format!("no non-rank-safe pattern with a free column for T={t}, M={m}")));
    }
    let mut supports: Vec<Vec<usize>> = (0..m - 1).map(|c| vec![c]).collect();
    supports.push((m - 1..t).collect());
    SparsityPattern::new(t, supports)
}

/// Rank-deficient benchmark: every codeword reuses [`rank_deficient_pattern`], so
/// all pairs share `M − 1` directions. The free column is spread out with the
/// chordal surrogate (the determinant surrogate is identically zero here).
pub fn design_rank_deficient_reference(t: usize, m: usize, cardinality: usize, cfg: &DesignConfig) -> Result<(Constellation, DesignReport)> {
    check_design_inputs(t, m, cardinality, cfg)?;
    let pattern = rank_deficient_pattern(t, m)?;
    sparse_family_design(vec![pattern; cardinality], cfg, Surrogate::Projector, "rank-deficient", json!({ "s": t }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grassmann::{chordal_distance_projector, chordal_product_distance};

    fn fast_cfg() -> DesignConfig {
        DesignConfig {
            restarts: 2,
            max_iterations: 300,
            ..DesignConfig::default()
        }
    }

    #[test]
    fn smoothed_objective_bounds_min() {
        let v = [0.3, 0.5, 0.31, 0.9];
        let eps = 0.01;
        let f = smoothed_objective(&v, eps);
        let dmin = 0.3;
        assert!(-eps * f <= dmin + 1e-12);
        assert!(-eps * f >= dmin - eps * (v.len() as f64).ln() - 1e-12);
        assert!(smoothed_objective(&[1e4, 2e4], 1e-3).is_finite());
    }

    fn fd_check(s: Surrogate) {
        let mut r = rng::stream(3, &[]);
        let pts: Vec<CMatrix> = (0..3).map(|_| haar_random_point(5, 2, &mut r).unwrap().into_entries()).collect();
        let eps = 0.3;
        let (_, g) = euclidean_gradient(s, &pts, eps);
        let h = 1e-6;
        for (i, x) in pts.iter().enumerate() {
            for idx in 0..x.len() {
                for dir in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)] {
                    let mut p = pts.clone();
                    p[i][idx] += dir * h;
                    let fp = surrogate_value(s, &p, eps);
                    p[i][idx] -= dir * (2.0 * h);
                    let fm = surrogate_value(s, &p, eps);
                    let fd = (fp - fm) / (2.0 * h);
                    let an = (g[i][idx].conj() * dir).re;
                    assert!((fd - an).abs() < 1e-6 * (1.0 + an.abs()), "{s:?} fd {fd} analytic {an}");
                }
            }
        }
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        fd_check(Surrogate::Projector);
        fd_check(Surrogate::Determinant);
    }

    #[test]
    fn row_form_matches_dense_pairs() {
        let pats = schubert::allocate_patterns(6, 3, 6, 5).unwrap();
        let mut r = rng::stream(4, &[]);
        let params = pats.iter().map(|p| ParamSet::random(p, &mut r).to_flat()).collect();
        let fam = SparseFamily::new(pats, params);
        let c = fam.to_constellation().unwrap();
        for (i, j) in c.pairs() {
            let (a, b) = (&c.points()[i], &c.points()[j]);
            assert!((fam.pair(Surrogate::Determinant, i, j) - chordal_product_distance(a, b).unwrap()).abs() < 1e-12);
            let proj = std::f64::consts::SQRT_2 * chordal_distance_projector(a, b).unwrap();
            assert!((fam.pair(Surrogate::Projector, i, j) - proj).abs() < 1e-9);
        }
    }

    #[test]
    fn two_point_designs_reach_orthogonality() {
        let cfg = fast_cfg();
        for &(t, m) in &[(4, 2), (6, 3), (5, 2)] {
            let (_, rep) = design_mcd_manopt(t, m, 2, &cfg).unwrap();
            assert!(rep.mcd >= (m as f64).sqrt() - 1e-3, "mcd {} for ({t},{m}) {:?}", rep.mcd, (rep.iterations, rep.converged, rep.objective_trace.len()));
            let (_, rep) = design_mcpd_manopt(t, m, 2, &cfg).unwrap();
            assert!(rep.mcpd >= 1.0 - 1e-3, "mcpd {} for ({t},{m})", rep.mcpd);
        }
    }

    #[test]
    fn descent_is_monotone_and_stays_on_manifold() {
        let (c, rep) = design_mcpd_manopt(4, 2, 4, &fast_cfg()).unwrap();
        assert!(rep.objective_trace.windows(2).all(|w| w[1] <= w[0]));
        for p in c.points() {
            assert!(linalg::orthonormality_deviation(p.entries()) <= 1e-10);
        }
        let (_, rep) = design_mcd_manopt(4, 2, 4, &fast_cfg()).unwrap();
        assert!(rep.objective_trace.windows(2).all(|w| w[1] <= w[0]));
        let (_, rep) = design_sparse(4, 2, 4, 4, &fast_cfg()).unwrap();
        assert!(rep.objective_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn report_matches_constellation() {
        let (c, rep) = design_sparse(4, 2, 4, 4, &fast_cfg()).unwrap();
        let (mcd, _) = min_pairwise(&c, DistanceMetric::Chordal).unwrap();
        let (mcpd, _) = min_pairwise(&c, DistanceMetric::ChordalProduct).unwrap();
        assert!((rep.mcd - mcd).abs() < 1e-9 && (rep.mcpd - mcpd).abs() < 1e-9);
        assert_eq!(rep.restart_best.len(), 2);
        assert!(rep.rank_deficient_pairs.is_empty());
    }

    #[test]
    fn sparse_codewords_keep_their_supports() {
        let cfg = DesignConfig {
            allocation: PatternAllocation::Distinct,
            ..fast_cfg()
        };
        let (c, _) = design_sparse(4, 2, 4, 4, &cfg).unwrap();
        let pats = schubert::allocate_patterns(4, 2, 4, 4).unwrap();
        for (x, p) in c.points().iter().zip(&pats) {
            assert!(linalg::orthonormality_deviation(x.entries()) <= 1e-10);
            for row in 0..4 {
                let nz: Vec<usize> = (0..2).filter(|&k| x.entries()[(row, k)].norm() > 0.0).collect();
                assert!(nz.len() <= 1);
                if let Some(&k) = nz.first() {
                    assert!(p.supports()[k].contains(&row));
                }
            }
        }
    }

    #[test]
    fn determinism() {
        let cfg = fast_cfg();
        let a = design_sparse(4, 2, 4, 4, &cfg).unwrap();
        let b = design_sparse(4, 2, 4, 4, &cfg).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let a = design_mcd_manopt(4, 2, 3, &cfg).unwrap();
        let b = design_mcd_manopt(4, 2, 3, &cfg).unwrap();
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn rank_deficient_reference() {
        let (c, rep) = design_rank_deficient_reference(4, 2, 4, &fast_cfg()).unwrap();
        assert_eq!(c.cardinality(), 4);
        assert_eq!(rep.rank_deficient_pairs.len(), 6);
        assert!(rep.mcpd.abs() < 1e-12);
        assert!(rep.mcd > 0.5);
        for (i, j) in c.pairs() {
            let (x, y) = (c.points()[i].entries(), c.points()[j].entries());
            let cc = x.ad_mul(y);
            let g = CMatrix::identity(2, 2) - &cc * cc.adjoint();
            let ev = linalg::hermitian_eigenvalues(&g);
            assert!(ev[0].abs() < 1e-9 && ev[1] > 1e-3, "pair ({i},{j}) eigenvalues {ev:?}");
            assert!(chordal_product_distance(&c.points()[i], &c.points()[j]).unwrap() < 1e-12);
        }
        assert!(design_rank_deficient_reference(4, 1, 4, &fast_cfg()).is_err());
    }

    #[test]
    fn allocation_candidates() {
        let cfg = fast_cfg();
        let c = candidate_allocations(4, 2, 4, 4, &cfg).unwrap();
        let labels: Vec<&str> = c.iter().map(|(l, _)| l.as_str()).collect();
        assert_eq!(labels, ["distinct", "rank-safe-cycle", "single-pattern:2-2"]);
        assert_eq!(c[0].1, schubert::allocate_patterns(4, 2, 4, 4).unwrap());
        assert!(c[1].1.iter().chain(&c[2].1).all(SparsityPattern::is_rank_safe_for_reuse));
        let only = DesignConfig {
            allocation: PatternAllocation::Distinct,
            ..cfg.clone()
        };
        assert_eq!(candidate_allocations(4, 2, 4, 4, &only).unwrap().len(), 1);
        let (_, rep) = design_sparse(4, 2, 4, 4, &only).unwrap();
        assert_eq!(rep.allocation.as_deref(), Some("distinct"));
    }

    #[test]
    fn auto_allocation_approaches_mcpd_manopt() {
        let cfg = DesignConfig::default();
        let (_, sparse) = design_sparse(4, 2, 4, 4, &cfg).unwrap();
        let (_, dense) = design_mcpd_manopt(4, 2, 4, &cfg).unwrap();
        assert!(sparse.mcpd >= 0.85 * dense.mcpd, "{} vs {}", sparse.mcpd, dense.mcpd);
        assert!(sparse.rank_deficient_pairs.is_empty());
    }

    #[test]
    fn infeasible_allocation_propagates() {
        let cfg = DesignConfig {
            allow_pattern_reuse: false,
            ..fast_cfg()
        };
        assert!(matches!(design_sparse(4, 2, 4, 9, &cfg), Err(Error::Infeasible(_))));
        assert!(design_sparse(4, 2, 4, 1, &cfg).is_err());
        let bad = DesignConfig { epsilon: 0.0, ..fast_cfg() };
        assert!(design_mcd_manopt(4, 2, 4, &bad).is_err());
    }
}
