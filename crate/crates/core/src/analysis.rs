//! Closed-form performance metrics: pairwise error bounds, the union bound,
//! the κ(λ) / λ★ machinery and the AMI lower bound built on
//! `𝓔ᵢⱼ = [Π(1 + κ sin²θ_m)]^{−N}`.
//!
//! The determinant identities behind `𝓔ᵢⱼ` are also exposed in brute-force
//! form ([`block_determinant`], [`d1_dense`]) so they can be checked directly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grassmann::{inner, principal_angles, Constellation, GrassmannPoint};
use crate::linalg::{self, CMatrix, C64};

/// Relative eigenvalue tolerance for the rank of `I − XᵢᴴXⱼXⱼᴴXᵢ`.
pub const RANK_TOL: f64 = 1e-9;

/// Largest `MN` for which `C(2MN − 1, MN)` is evaluated.
pub const MAX_MN: usize = 31;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    sigma_v_sq: f64,
}

impl NoiseModel {
    pub fn new(sigma_v_sq: f64) -> Result<Self> {
        if !(sigma_v_sq > 0.0 && sigma_v_sq.is_finite()) {
            return Err(Error::invalid(format!("noise variance must be positive and finite, got {sigma_v_sq}")));
        }
        Ok(Self { sigma_v_sq })
    }

    /// `SNR = 10 log₁₀(1/σ_v²)`.
    pub fn from_snr_db(snr_db: f64) -> Result<Self> {
        Self::new(10f64.powf(-snr_db / 10.0))
    }

    pub fn sigma_v_sq(&self) -> f64 {
        self.sigma_v_sq
    }

    pub fn snr_db(&self) -> f64 {
        -10.0 * self.sigma_v_sq.log10()
    }
}

/// One pairwise term of the revised bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PepTerm {
    /// Number of eigenvalues above tolerance, `m′`.
    pub rank: usize,
    /// The nonzero eigenvalues `μ₁ … μ_{m′}`, ascending.
    pub eigenvalues: Vec<f64>,
    pub bound: f64,
}

fn check_receivers(m: usize, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("need at least one receive antenna"));
    }
    if m * n > MAX_MN {
        return Err(Error::invalid(format!("MN = {} exceeds {MAX_MN}", m * n)));
    }
    Ok(())
}

/// `σ_v^{2rN} C(2rN − 1, rN)`.
fn pep_numerator(noise: &NoiseModel, r: usize, n: usize) -> Result<f64> {
    let k = (r * n) as u64;
    let c = linalg::binomial(2 * k - 1, k)? as f64;
    Ok(noise.sigma_v_sq.powi(k as i32) * c)
}

fn gram_complement_eigenvalues(a: &GrassmannPoint, b: &GrassmannPoint) -> Result<Vec<f64>> {
    let c = inner(a, b)?;
    let m = c.nrows();
    let g = CMatrix::identity(m, m) - &c * c.adjoint();
    Ok(linalg::hermitian_eigenvalues(&g))
}

/// Eigenvalues counted by the rank rule, or `None` when every eigenvalue is
/// below tolerance.
fn nonzero_eigenvalues(ev: &[f64], rank_tol: f64) -> Option<Vec<f64>> {
    let top = ev.iter().copied().fold(0.0, f64::max);
    if top <= rank_tol {
        return None;
    }
    Some(ev.iter().copied().filter(|&v| v > rank_tol * top).collect())
}

/// Conventional bound `σ_v^{2MN} C(2MN−1, MN) / Re det(I − aᴴbbᴴa)^N`.
///
/// Returns `+∞` when the pair is rank deficient.
pub fn pep_pair_conventional(a: &GrassmannPoint, b: &GrassmannPoint, noise: &NoiseModel, n: usize) -> Result<f64> {
    let m = a.m_antennas();
    check_receivers(m, n)?;
    let ev = gram_complement_eigenvalues(a, b)?;
    match nonzero_eigenvalues(&ev, RANK_TOL) {
        Some(nz) if nz.len() == m => {}
        _ => return Ok(f64::INFINITY),
    }
    let c = inner(a, b)?;
    let g = CMatrix::identity(m, m) - &c * c.adjoint();
    let det = linalg::det(&g).re;
    if det <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(pep_numerator(noise, m, n)? / det.powi(n as i32))
}

/// Revised bound `σ_v^{2m′N} C(2m′N−1, m′N) / Π|μ_m|^N` over the nonzero
/// eigenvalues of `I − aᴴbbᴴa`.
///
/// A pair spanning the same subspace is a [`Error::DegeneratePair`] with
/// indices `(0, 1)` standing for `(a, b)`.
pub fn pep_pair_proposed(a: &GrassmannPoint, b: &GrassmannPoint, noise: &NoiseModel, n: usize, rank_tol: f64) -> Result<PepTerm> {
    check_receivers(a.m_antennas(), n)?;
    let ev = gram_complement_eigenvalues(a, b)?;
    let nz = nonzero_eigenvalues(&ev, rank_tol).ok_or(Error::DegeneratePair(0, 1))?;
    let prod: f64 = nz.iter().map(|v| v.abs()).product();
    let bound = pep_numerator(noise, nz.len(), n)? / prod.powi(n as i32);
    Ok(PepTerm {
        rank: nz.len(),
        eigenvalues: nz,
        bound,
    })
}

/// `(2/|𝒳|) Σ_{i<j}` of the revised pairwise bound.
pub fn union_bound(c: &Constellation, noise: &NoiseModel, n: usize) -> Result<f64> {
    check_cardinality(c)?;
    let mut sum = 0.0;
    for (i, j) in c.pairs() {
        let term = pep_pair_proposed(&c.points()[i], &c.points()[j], noise, n, RANK_TOL).map_err(|e| relabel(e, i, j))?;
        sum += term.bound;
    }
    Ok(2.0 * sum / c.cardinality() as f64)
}

/// Union bound over the conventional pairwise terms; `+∞` as soon as one pair
/// is rank deficient.
pub fn union_bound_conventional(c: &Constellation, noise: &NoiseModel, n: usize) -> Result<f64> {
    check_cardinality(c)?;
    let mut sum = 0.0;
    for (i, j) in c.pairs() {
        sum += pep_pair_conventional(&c.points()[i], &c.points()[j], noise, n)?;
    }
    Ok(2.0 * sum / c.cardinality() as f64)
}

/// Union bound that skips degenerate pairs and lists them instead of failing.
pub fn union_bound_lenient(c: &Constellation, noise: &NoiseModel, n: usize) -> Result<(f64, Vec<(usize, usize)>)> {
    check_cardinality(c)?;
    let mut sum = 0.0;
    let mut degenerate = Vec::new();
    for (i, j) in c.pairs() {
        match pep_pair_proposed(&c.points()[i], &c.points()[j], noise, n, RANK_TOL) {
            Ok(term) => sum += term.bound,
            Err(Error::DegeneratePair(..)) => degenerate.push((i, j)),
            Err(e) => return Err(e),
        }
    }
    Ok((2.0 * sum / c.cardinality() as f64, degenerate))
}

fn check_cardinality(c: &Constellation) -> Result<()> {
    if c.cardinality() < 2 {
        return Err(Error::invalid("union bound needs at least two codewords"));
    }
    Ok(())
}

fn relabel(e: Error, i: usize, j: usize) -> Error {
    match e {
        Error::DegeneratePair(..) => Error::DegeneratePair(i, j),
        other => other,
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::invalid(format!("lambda must lie in (0, 1], got {lambda}")));
    }
    Ok(())
}

fn check_dims(t: usize, m: usize) -> Result<()> {
    if m == 0 || t <= m {
        return Err(Error::invalid(format!("need T > M >= 1, got T={t}, M={m}")));
    }
    Ok(())
}

/// `α = λ / (σ_v²(1 + σ_v²M/T))`.
pub fn alpha(lambda: f64, noise: &NoiseModel, t: usize, m: usize) -> Result<f64> {
    check_lambda(lambda)?;
    check_dims(t, m)?;
    let s = noise.sigma_v_sq;
    Ok(lambda / (s * (1.0 + s * m as f64 / t as f64)))
}

/// `κ(λ) = α − α²σ_v² − α²σ_v⁴`.
pub fn kappa(lambda: f64, noise: &NoiseModel, t: usize, m: usize) -> Result<f64> {
    let a = alpha(lambda, noise, t, m)?;
    let s = noise.sigma_v_sq;
    Ok(a - a * a * s - a * a * s * s)
}

/// Maximizer of κ over `(0, 1]`: `min{1, (1 + σ_v²M/T) / (2(1 + σ_v²))}`.
pub fn lambda_star(noise: &NoiseModel, t: usize, m: usize) -> f64 {
    let s = noise.sigma_v_sq;
    ((1.0 + s * m as f64 / t as f64) / (2.0 * (1.0 + s))).min(1.0)
}

/// κ(λ★) at the given noise level.
pub fn kappa_star(noise: &NoiseModel, t: usize, m: usize) -> Result<f64> {
    kappa(lambda_star(noise, t, m), noise, t, m)
}

/// SNR (dB) at which κ(λ★) = 1, found by bisection on σ_v² for the given
/// dimensions.
pub fn snr_crossover_for(t: usize, m: usize) -> Result<f64> {
    check_dims(t, m)?;
    // κ(λ★) decreases in σ_v²
    let f = |s: f64| -> Result<f64> { Ok(kappa_star(&NoiseModel::new(s)?, t, m)? - 1.0) };
    let (mut lo, mut hi) = (1e-6, 1e3);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * hi {
            break;
        }
    }
    Ok(NoiseModel::new(0.5 * (lo + hi))?.snr_db())
}

/// κ(λ★) = 1 crossover. It does not depend on `(T, M)`; computed at `(2, 1)`.
pub fn snr_crossover() -> f64 {
    snr_crossover_for(2, 1).expect("valid dimensions")
}

/// `[Π(1 + κ sin²θ_m)]^{−N}` for one ordered pair.
pub fn expectation_eij_closed(a: &GrassmannPoint, b: &GrassmannPoint, noise: &NoiseModel, n: usize, lambda: f64) -> Result<f64> {
    let k = kappa(lambda, noise, a.t_slots(), a.m_antennas())?;
    let ang = principal_angles(a, b)?;
    let prod: f64 = ang.sin_squared().iter().map(|s2| 1.0 + k * s2).product();
    Ok(prod.powi(-(n as i32)))
}

/// `D₁ = [Π(1 − α²σ_v⁴ sin²θ_m)]^N` and
/// `D₂ = [Π((1 + κ sin²θ_m) / (1 − α²σ_v⁴ sin²θ_m))]^N`.
pub fn determinant_factors(a: &GrassmannPoint, b: &GrassmannPoint, noise: &NoiseModel, n: usize, lambda: f64) -> Result<(f64, f64)> {
    let (t, m) = a.shape();
    let al = alpha(lambda, noise, t, m)?;
    let k = kappa(lambda, noise, t, m)?;
    let s = noise.sigma_v_sq;
    let mut d1 = 1.0;
    let mut d2 = 1.0;
    for s2 in principal_angles(a, b)?.sin_squared() {
        let f1 = 1.0 - al * al * s * s * s2;
        if f1 == 0.0 {
            return Err(Error::Pole);
        }
        d1 *= f1;
        d2 *= (1.0 + k * s2) / f1;
    }
    Ok((d1.powi(n as i32), d2.powi(n as i32)))
}

/// `Δ = aaᴴ − bbᴴ`.
pub fn delta_matrix(a: &GrassmannPoint, b: &GrassmannPoint) -> Result<CMatrix> {
    inner(a, b)?;
    Ok(a.projector() - b.projector())
}

/// `D₁` evaluated densely as `det(I_T + ασ_v²Δ)^N`.
pub fn d1_dense(a: &GrassmannPoint, b: &GrassmannPoint, noise: &NoiseModel, n: usize, lambda: f64) -> Result<f64> {
    let (t, m) = a.shape();
    let al = alpha(lambda, noise, t, m)?;
    let g = CMatrix::identity(t, t) + delta_matrix(a, b)?.scale(al * noise.sigma_v_sq);
    Ok(linalg::det(&g).re.powi(n as i32))
}

/// Explicit `B = [I_N ⊗ a, I_{TN}]`, `A = Bᴴ(I_N ⊗ Δ)B` and
/// `Σ = diag(I_{MN}, σ_v² I_{TN})`, for `tr(YYᴴΔ) = zᴴAz` with
/// `z = [vec H; vec V]` and `Y = aH + V`.
pub fn quadratic_form_matrices(a: &GrassmannPoint, b: &GrassmannPoint, noise: &NoiseModel, n: usize) -> Result<(CMatrix, CMatrix)> {
    let (t, m) = a.shape();
    let delta = delta_matrix(a, b)?;
    let eye_n = CMatrix::identity(n, n);
    let mut bmat = CMatrix::zeros(t * n, m * n + t * n);
    bmat.view_mut((0, 0), (t * n, m * n)).copy_from(&eye_n.kronecker(a.entries()));
    bmat.view_mut((0, m * n), (t * n, t * n)).fill_with_identity();
    let amat = bmat.adjoint() * eye_n.kronecker(&delta) * &bmat;
    let mut sigma = CMatrix::identity(m * n + t * n, m * n + t * n);
    for k in m * n..m * n + t * n {
        sigma[(k, k)] = C64::new(noise.sigma_v_sq, 0.0);
    }
    Ok((amat, sigma))
}

/// `det(I + αΣA)` assembled from [`quadratic_form_matrices`].
pub fn block_determinant(a: &GrassmannPoint, b: &GrassmannPoint, noise: &NoiseModel, n: usize, lambda: f64) -> Result<f64> {
    let (t, m) = a.shape();
    let al = alpha(lambda, noise, t, m)?;
    let (amat, sigma) = quadratic_form_matrices(a, b, noise, n)?;
    let dim = amat.nrows();
    let g = CMatrix::identity(dim, dim) + (sigma * amat).scale(al);
    Ok(linalg::det(&g).re)
}

/// `𝓔ᵢⱼ = det(I + αΣA)^{−1}` from the explicit block matrices.
pub fn expectation_eij_brute_force(a: &GrassmannPoint, b: &GrassmannPoint, noise: &NoiseModel, n: usize, lambda: f64) -> Result<f64> {
    Ok(1.0 / block_determinant(a, b, noise, n, lambda)?)
}

/// Terms of `Π(1 + κ sin²θ_m) = Σ_k κ^k e_k(sin²θ)`: entry `k` is `κ^k e_k`.
/// Entry 1 is `κ d_c²` and entry `M` is `κ^M d_cp`.
pub fn joint_distance_terms(sin_squared: &[f64], kappa: f64) -> Vec<f64> {
    // elementary symmetric polynomials by the usual recurrence
    let mut e = vec![0.0; sin_squared.len() + 1];
    e[0] = 1.0;
    for (idx, &s) in sin_squared.iter().enumerate() {
        for k in (1..=idx + 1).rev() {
            e[k] += e[k - 1] * s;
        }
    }
    e.iter().enumerate().map(|(k, v)| kappa.powi(k as i32) * v).collect()
}

/// `log₂|𝒳|/T − (1/(T|𝒳|λ ln 2)) Σᵢ ln Σⱼ 𝓔ᵢⱼ`.
pub fn ami_lower_bound(c: &Constellation, noise: &NoiseModel, n: usize, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if n == 0 {
        return Err(Error::invalid("need at least one receive antenna"));
    }
    let card = c.cardinality();
    let t = c.t_slots() as f64;
    let mut e = vec![vec![1.0; card]; card];
    for (i, j) in c.pairs() {
        let v = expectation_eij_closed(&c.points()[i], &c.points()[j], noise, n, lambda)?;
        e[i][j] = v;
        e[j][i] = v;
    }
    let total: f64 = e.iter().map(|row| row.iter().sum::<f64>().ln()).sum();
    Ok((card as f64).log2() / t - total / (t * card as f64 * lambda * std::f64::consts::LN_2))
}
