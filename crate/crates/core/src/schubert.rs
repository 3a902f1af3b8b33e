//! Schubert cells of 𝒢(T, M) and the column-orthogonal sparsity patterns inside them.
//!
//! A sparsity pattern assigns to every column a nonempty set of rows, with the
//! sets pairwise disjoint. Any matrix whose columns are unit vectors on those
//! supports is automatically orthonormal. Rows are 0-based in memory and
//! 1-based in every exported record.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grassmann::GrassmannPoint;
use crate::linalg::{self, CMatrix, C64};

/// A Schubert cell, identified by its strictly increasing pivot rows.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SchubertCell {
    pivots: Vec<usize>,
}

impl SchubertCell {
    pub fn new(t: usize, pivots: Vec<usize>) -> Result<Self> {
        if pivots.is_empty() || pivots.windows(2).any(|w| w[0] >= w[1]) || pivots.iter().any(|&p| p >= t) {
            return Err(Error::invalid(format!("pivots {pivots:?} are not strictly increasing in 0..{t}")));
        }
        Ok(Self { pivots })
    }

    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    /// Column-echelon skeleton: `'1'` at pivots, `'0'` above a pivot or left of it in
    /// the same row, `'*'` elsewhere.
    pub fn skeleton(&self, t: usize) -> Vec<Vec<char>> {
        let m = self.pivots.len();
        let mut sk = vec![vec!['*'; m]; t];
        for (c, &p) in self.pivots.iter().enumerate() {
            for row in sk.iter_mut().take(p) {
                row[c] = '0';
            }
            sk[p][c] = '1';
            for left in 0..c {
                sk[p][left] = '0';
            }
        }
        sk
    }
}

fn check_tm(t: usize, m: usize) -> Result<()> {
    if m == 0 || t <= m {
        return Err(Error::invalid(format!("need T > M >= 1, got T={t}, M={m}")));
    }
    Ok(())
}

fn check_tms(t: usize, m: usize, s: usize) -> Result<()> {
    check_tm(t, m)?;
    if s < m || s > t {
        return Err(Error::invalid(format!("need M <= s <= T, got s={s} for T={t}, M={m}")));
    }
    Ok(())
}

/// Lexicographic `k`-subsets of `0..n`.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// All `C(T, M)` cells in lexicographic pivot order.
pub fn enumerate_cells(t: usize, m: usize) -> Result<Vec<SchubertCell>> {
    check_tm(t, m)?;
    Ok(combinations(t, m).into_iter().map(|pivots| SchubertCell { pivots }).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SparsityPattern {
    t: usize,
    supports: Vec<Vec<usize>>,
}

impl SparsityPattern {
    /// Builds a pattern from 0-based column supports.
    ///
    /// Supports must be nonempty, pairwise disjoint, and ordered so that the
    /// topmost row of each column increases with the column index.
    pub fn new(t: usize, mut supports: Vec<Vec<usize>>) -> Result<Self> {
        let m = supports.len();
        check_tm(t, m)?;
        let mut seen = vec![false; t];
        for sup in supports.iter_mut() {
            if sup.is_empty() {
                return Err(Error::invalid("empty column support"));
            }
            sup.sort_unstable();
            for &r in sup.iter() {
                if r >= t {
                    return Err(Error::invalid(format!("row {r} out of range for T={t}")));
                }
                if std::mem::replace(&mut seen[r], true) {
                    return Err(Error::invalid(format!("row {r} shared between columns")));
                }
            }
        }
        if supports.windows(2).any(|w| w[0][0] >= w[1][0]) {
            return Err(Error::invalid("column supports are not in echelon order"));
        }
        Ok(Self { t, supports })
    }

    /// Same as [`SparsityPattern::new`] with 1-based rows.
    pub fn from_one_based(t: usize, supports: &[&[usize]]) -> Result<Self> {
        let zero: Result<Vec<Vec<usize>>> = supports
            .iter()
            .map(|s| {
                s.iter()
                    .map(|&r| r.checked_sub(1).ok_or_else(|| Error::invalid("row index 0 in 1-based input")))
                    .collect()
            })
            .collect();
        Self::new(t, zero?)
    }

    pub fn t_slots(&self) -> usize {
        self.t
    }

    pub fn m_antennas(&self) -> usize {
        self.supports.len()
    }

    pub fn supports(&self) -> &[Vec<usize>] {
        &self.supports
    }

    /// Number of nonzero entries `s`.
    pub fn sparsity(&self) -> usize {
        self.supports.iter().map(Vec::len).sum()
    }

    pub fn pivots(&self) -> Vec<usize> {
        self.supports.iter().map(|s| s[0]).collect()
    }

    pub fn cell(&self) -> SchubertCell {
        SchubertCell { pivots: self.pivots() }
    }

    /// Real parameters needed to materialize one codeword: `2(s − M)`.
    pub fn param_count(&self) -> usize {
        2 * (self.sparsity() - self.m_antennas())
    }

    /// True iff every column has at least two support rows.
    ///
    /// A single-row column is the same unit vector in every codeword drawn from
    /// the pattern, so two such codewords share a direction and
    /// `I − XᵢᴴXⱼXⱼᴴXᵢ` loses rank.
    pub fn is_rank_safe_for_reuse(&self) -> bool {
        self.supports.iter().all(|s| s.len() >= 2)
    }

    /// `'1'` at pivots, `'*'` on the rest of each support, `'0'` elsewhere.
    pub fn skeleton(&self) -> Vec<Vec<char>> {
        let mut sk = vec![vec!['0'; self.m_antennas()]; self.t];
        for (c, sup) in self.supports.iter().enumerate() {
            sk[sup[0]][c] = '1';
            for &r in &sup[1..] {
                sk[r][c] = '*';
            }
        }
        sk
    }

    /// Column index owning each row, if any.
    pub fn row_owner(&self) -> Vec<Option<usize>> {
        let mut owner = vec![None; self.t];
        for (c, sup) in self.supports.iter().enumerate() {
            for &r in sup {
                owner[r] = Some(c);
            }
        }
        owner
    }

    pub fn record(&self) -> PatternRecord {
        PatternRecord {
            pivots: self.pivots().iter().map(|p| p + 1).collect(),
            supports: self.supports.iter().map(|s| s.iter().map(|r| r + 1).collect()).collect(),
            s: self.sparsity(),
            rank_safe: self.is_rank_safe_for_reuse(),
        }
    }
}

/// JSON export of a pattern (1-based rows).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternRecord {
    pub pivots: Vec<usize>,
    pub supports: Vec<Vec<usize>>,
    pub s: usize,
    pub rank_safe: bool,
}

/// Every admissible pattern for `(T, M, s)`.
///
/// Order: chosen row set (lexicographic), then pivot positions (lexicographic),
/// then the column assigned to each remaining row, scanned top to bottom.
pub fn enumerate_patterns(t: usize, m: usize, s: usize) -> Result<Vec<SparsityPattern>> {
    check_tms(t, m, s)?;
    let mut out = Vec::new();
    for rows in combinations(t, s) {
        // the first chosen row always starts column 0
        for rest in combinations(s - 1, m - 1) {
            let pivot_pos: Vec<usize> = std::iter::once(0).chain(rest.iter().map(|p| p + 1)).collect();
            let free: Vec<usize> = (0..s).filter(|q| !pivot_pos.contains(q)).collect();
            // columns available to a free position: those whose pivot lies above it
            let choices: Vec<usize> = free.iter().map(|&q| pivot_pos.iter().filter(|&&p| p < q).count()).collect();
            let mut digits = vec![0usize; free.len()];
            loop {
                let mut supports: Vec<Vec<usize>> = pivot_pos.iter().map(|&p| vec![rows[p]]).collect();
                for (k, &q) in free.iter().enumerate() {
                    supports[digits[k]].push(rows[q]);
                }
                for sup in &mut supports {
                    sup.sort_unstable();
                }
                out.push(SparsityPattern { t, supports });
                // odometer, last position fastest
                let mut k = free.len();
                let advanced = loop {
                    if k == 0 {
                        break false;
                    }
                    k -= 1;
                    digits[k] += 1;
                    if digits[k] < choices[k] {
                        break true;
                    }
                    digits[k] = 0;
                };
                if !advanced {
                    break;
                }
            }
        }
    }
    Ok(out)
}

/// `n(T, M, s) = C(T, s) · S(s, M)` with `S` the Stirling number of the second kind,
/// evaluated through the inclusion–exclusion sum in exact integer arithmetic.
pub fn count_patterns(t: usize, m: usize, s: usize) -> Result<u64> {
    check_tms(t, m, s)?;
    let (m64, s32) = (m as u64, u32::try_from(s).map_err(|_| Error::Overflow("pattern count"))?);
    let mut sum: i128 = 0;
    for k in 0..=m64 {
        let term = i128::from(linalg::binomial(m64, k)?)
            .checked_mul(i128::from(m64 - k).checked_pow(s32).ok_or(Error::Overflow("pattern count"))?)
            .ok_or(Error::Overflow("pattern count"))?;
        sum = if k % 2 == 0 { sum.checked_add(term) } else { sum.checked_sub(term) }.ok_or(Error::Overflow("pattern count"))?;
    }
    let mut fact: i128 = 1;
    for k in 2..=m as i128 {
        fact *= k;
    }
    debug_assert_eq!(sum % fact, 0);
    let stirling = sum / fact;
    let total = stirling
        .checked_mul(i128::from(linalg::binomial(t as u64, s as u64)?))
        .ok_or(Error::Overflow("pattern count"))?;
    u64::try_from(total).map_err(|_| Error::Overflow("pattern count"))
}

/// Pattern per codeword.
///
/// Rank-safe patterns come first (enumeration order), then the others. Once all
/// patterns are used, further codewords cycle over the rank-safe ones. Without
/// `allow_reuse`, asking for more codewords than patterns is infeasible.
pub fn allocate_patterns_with(t: usize, m: usize, s: usize, cardinality: usize, allow_reuse: bool) -> Result<Vec<SparsityPattern>> {
    if cardinality == 0 {
        return Err(Error::invalid("cardinality must be positive"));
    }
    let all = enumerate_patterns(t, m, s)?;
    let (safe, unsafe_): (Vec<_>, Vec<_>) = all.into_iter().partition(SparsityPattern::is_rank_safe_for_reuse);
    let total = safe.len() + unsafe_.len();
    let mut out: Vec<SparsityPattern> = safe.iter().chain(unsafe_.iter()).take(cardinality).cloned().collect();
    if cardinality > total {
        if !allow_reuse {
            return Err(Error::Infeasible(format!(
                "{cardinality} codewords requested but (T,M,s)=({t},{m},{s}) has only {total} patterns"
            )));
        }
        if safe.is_empty() {
            return Err(Error::Infeasible(format!(
                "{cardinality} codewords requested, only {total} patterns and none is rank-safe for reuse"
            )));
        }
        out.extend(safe.iter().cycle().take(cardinality - total).cloned());
    }
    Ok(out)
}

/// [`allocate_patterns_with`] with reuse of rank-safe patterns enabled.
pub fn allocate_patterns(t: usize, m: usize, s: usize, cardinality: usize) -> Result<Vec<SparsityPattern>> {
    allocate_patterns_with(t, m, s, cardinality, true)
}

/// Amplitude angles and phases of one sparse codeword.
///
/// Column `c` with support size `k` carries `k − 1` amplitude angles and
/// `k − 1` phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub alphas: Vec<Vec<f64>>,
    pub phases: Vec<Vec<f64>>,
}

impl ParamSet {
    pub fn zeros(pattern: &SparsityPattern) -> Self {
        let dims: Vec<usize> = pattern.supports().iter().map(|s| s.len() - 1).collect();
        Self {
            alphas: dims.iter().map(|&d| vec![0.0; d]).collect(),
            phases: dims.iter().map(|&d| vec![0.0; d]).collect(),
        }
    }

    /// Uniform draw in `[−π, π]` for every angle.
    pub fn random<R: Rng + ?Sized>(pattern: &SparsityPattern, rng: &mut R) -> Self {
        let mut p = Self::zeros(pattern);
        for (a, f) in p.alphas.iter_mut().zip(p.phases.iter_mut()) {
            for (x, y) in a.iter_mut().zip(f.iter_mut()) {
                *x = rng.random_range(-PI..=PI);
                *y = rng.random_range(-PI..=PI);
            }
        }
        p
    }

    pub fn len(&self) -> usize {
        self.alphas.iter().chain(self.phases.iter()).map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flattened as `α₁, φ₁, α₂, φ₂, …`, column by column.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        for (a, f) in self.alphas.iter().zip(&self.phases) {
            for (x, y) in a.iter().zip(f) {
                v.push(*x);
                v.push(*y);
            }
        }
        v
    }

    pub fn from_flat(pattern: &SparsityPattern, flat: &[f64]) -> Result<Self> {
        if flat.len() != pattern.param_count() {
            return Err(Error::invalid(format!(
                "pattern needs {} parameters, got {}",
                pattern.param_count(),
                flat.len()
            )));
        }
        let mut p = Self::zeros(pattern);
        let mut it = flat.chunks_exact(2);
        for (a, f) in p.alphas.iter_mut().zip(p.phases.iter_mut()) {
            for (x, y) in a.iter_mut().zip(f.iter_mut()) {
                let pair = it.next().expect("length checked");
                *x = pair[0];
                *y = pair[1];
            }
        }
        Ok(p)
    }

    fn matches(&self, pattern: &SparsityPattern) -> bool {
        self.alphas.len() == pattern.m_antennas()
            && self.phases.len() == pattern.m_antennas()
            && pattern
                .supports()
                .iter()
                .zip(self.alphas.iter().zip(&self.phases))
                .all(|(s, (a, f))| a.len() + 1 == s.len() && f.len() + 1 == s.len())
    }
}

/// Writes the unit-norm column values for one support in hyperspherical coordinates.
///
/// Entry 0 is `sin α₁` (real); entry `i ≥ 1` is `e^{jφ_i} cos α₁ ⋯ cos α_i sin α_{i+1}`,
/// with the last entry dropping the trailing sine.
fn column_values(alphas: &[f64], phases: &[f64], out: &mut [C64]) {
    let k = out.len();
    debug_assert_eq!(alphas.len() + 1, k);
    if k == 1 {
        out[0] = C64::new(1.0, 0.0);
        return;
    }
    let mut prefix = 1.0;
    for i in 0..k {
        let amp = if i + 1 < k { prefix * alphas[i].sin() } else { prefix };
        out[i] = if i == 0 {
            C64::new(amp, 0.0)
        } else {
            C64::from_polar(amp, phases[i - 1])
        };
        if i + 1 < k {
            prefix *= alphas[i].cos();
        }
    }
}

/// Row-wise representation of a sparse codeword: for every row, the owning
/// column (if any) and the value. Valid because supports are disjoint.
pub(crate) fn fill_rows(pattern: &SparsityPattern, params: &ParamSet, cols: &mut [Option<usize>], vals: &mut [C64]) {
    let mut buf = [C64::new(0.0, 0.0); 64];
    cols.iter_mut().for_each(|c| *c = None);
    vals.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
    for (c, sup) in pattern.supports().iter().enumerate() {
        let k = sup.len();
        let mut heap;
        let col_vals: &mut [C64] = if k <= buf.len() {
            &mut buf[..k]
        } else {
            heap = vec![C64::new(0.0, 0.0); k];
            &mut heap[..]
        };
        column_values(&params.alphas[c], &params.phases[c], col_vals);
        for (&r, &v) in sup.iter().zip(col_vals.iter()) {
            cols[r] = Some(c);
            vals[r] = v;
        }
    }
}

/// Builds the codeword for `pattern` from its parameters.
pub fn materialize(pattern: &SparsityPattern, params: &ParamSet) -> Result<GrassmannPoint> {
    if !params.matches(pattern) {
        return Err(Error::invalid("parameter counts do not match the pattern supports"));
    }
    let t = pattern.t_slots();
    let mut cols = vec![None; t];
    let mut vals = vec![C64::new(0.0, 0.0); t];
    fill_rows(pattern, params, &mut cols, &mut vals);
    let mut x = CMatrix::zeros(t, pattern.m_antennas());
    for r in 0..t {
        if let Some(c) = cols[r] {
            x[(r, c)] = vals[r];
        }
    }
    GrassmannPoint::new(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grassmann::{self, validate};
    use crate::rng;
    use std::collections::HashSet;
    use std::f64::consts::FRAC_PI_4;

    fn one_based(p: &SparsityPattern) -> Vec<Vec<usize>> {
        p.record().supports
    }

    /// Independent oracle: every map rows → {unused, col 1..M}, kept when it uses
    /// exactly `s` rows, covers all columns, and columns are ordered by topmost row.
    fn brute_force(t: usize, m: usize, s: usize) -> HashSet<Vec<Vec<usize>>> {
        let mut out = HashSet::new();
        let total = (m + 1).pow(t as u32);
        for code in 0..total {
            let mut x = code;
            let mut sup = vec![Vec::new(); m];
            for r in 0..t {
                let d = x % (m + 1);
                x /= m + 1;
                if d > 0 {
                    sup[d - 1].push(r);
                }
            }
            if sup.iter().any(Vec::is_empty) || sup.iter().map(Vec::len).sum::<usize>() != s {
                continue;
            }
            if sup.windows(2).all(|w| w[0][0] < w[1][0]) {
                out.insert(sup);
            }
        }
        out
    }

    #[test]
    fn cells() {
        assert_eq!(enumerate_cells(4, 2).unwrap().len(), 6);
        assert_eq!(enumerate_cells(2, 1).unwrap().len(), 2);
        assert_eq!(enumerate_cells(6, 3).unwrap().len(), 20);
        assert!(enumerate_cells(2, 2).is_err());
        let first = &enumerate_cells(4, 2).unwrap()[0];
        assert_eq!(first.pivots(), &[0, 1]);
        let sk = first.skeleton(4);
        assert_eq!(sk, vec![vec!['1', '0'], vec!['0', '1'], vec!['*', '*'], vec!['*', '*']]);
        let last = &enumerate_cells(4, 2).unwrap()[5];
        assert_eq!(last.skeleton(4), vec![vec!['0', '0'], vec!['0', '0'], vec!['1', '0'], vec!['0', '1']]);
    }

    #[test]
    fn table_one_patterns() {
        let pats = enumerate_patterns(4, 2, 4).unwrap();
        let got: HashSet<_> = pats.iter().map(one_based).collect();
        let table: HashSet<Vec<Vec<usize>>> = [
            vec![vec![1, 3], vec![2, 4]],
            vec![vec![1, 4], vec![2, 3]],
            vec![vec![1], vec![2, 3, 4]],
            vec![vec![1, 3, 4], vec![2]],
            vec![vec![1, 2, 4], vec![3]],
            vec![vec![1, 2], vec![3, 4]],
            vec![vec![1, 2, 3], vec![4]],
        ]
        .into_iter()
        .collect();
        assert_eq!(pats.len(), 7);
        assert_eq!(got, table);
        let safe: Vec<_> = pats.iter().filter(|p| p.is_rank_safe_for_reuse()).map(one_based).collect();
        assert_eq!(safe, vec![vec![vec![1, 3], vec![2, 4]], vec![vec![1, 4], vec![2, 3]], vec![vec![1, 2], vec![3, 4]]]);
        // grouped by cell
        let pivots: Vec<_> = pats.iter().map(|p| p.record().pivots).collect();
        assert_eq!(pivots, vec![vec![1, 2], vec![1, 2], vec![1, 2], vec![1, 2], vec![1, 3], vec![1, 3], vec![1, 4]]);
    }

    #[test]
    fn small_cases_and_errors() {
        let p = enumerate_patterns(2, 1, 2).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(one_based(&p[0]), vec![vec![1, 2]]);
        assert!(enumerate_patterns(4, 2, 1).is_err());
        assert!(enumerate_patterns(4, 2, 5).is_err());
        assert!(count_patterns(2, 3, 2).is_err());
    }

    #[test]
    fn enumeration_matches_brute_force_and_formula() {
        for t in 2..=7 {
            for m in 1..t.min(4) {
                for s in m..=t {
                    let pats = enumerate_patterns(t, m, s).unwrap();
                    let n = count_patterns(t, m, s).unwrap();
                    assert_eq!(pats.len() as u64, n, "(T,M,s)=({t},{m},{s})");
                    let set: HashSet<_> = pats.iter().map(|p| p.supports().to_vec()).collect();
                    assert_eq!(set.len(), pats.len());
                    assert_eq!(set, brute_force(t, m, s));
                }
            }
        }
        assert_eq!(count_patterns(4, 2, 4).unwrap(), 7);
        for t in 2..12 {
            for s in 1..=t {
                assert_eq!(count_patterns(t, 1, s).unwrap(), linalg::binomial(t as u64, s as u64).unwrap());
            }
        }
    }

    #[test]
    fn count_overflow_is_explicit() {
        assert!(matches!(count_patterns(200, 20, 150), Err(Error::Overflow(_))));
    }

    #[test]
    fn skeleton_is_column_echelon() {
        for p in enumerate_patterns(6, 3, 5).unwrap() {
            let sk = p.skeleton();
            for (c, &piv) in p.pivots().iter().enumerate() {
                assert_eq!(sk[piv][c], '1');
                assert!((0..piv).all(|r| sk[r][c] == '0'));
                assert!((0..c).all(|l| sk[piv][l] == '0'));
            }
        }
    }

    #[test]
    fn rank_safety_examples() {
        let idx1 = SparsityPattern::from_one_based(4, &[&[1, 3], &[2, 4]]).unwrap();
        let idx3 = SparsityPattern::from_one_based(4, &[&[1], &[2, 3, 4]]).unwrap();
        assert!(idx1.is_rank_safe_for_reuse());
        assert!(!idx3.is_rank_safe_for_reuse());
        for p in enumerate_patterns(5, 2, 2).unwrap() {
            assert!(!p.is_rank_safe_for_reuse());
        }
    }

    #[test]
    fn pattern_validation() {
        assert!(SparsityPattern::from_one_based(4, &[&[1, 2], &[2, 3]]).is_err());
        assert!(SparsityPattern::from_one_based(4, &[&[2, 3], &[1, 4]]).is_err());
        assert!(SparsityPattern::from_one_based(4, &[&[1, 5], &[2]]).is_err());
    }

    #[test]
    fn materialize_closed_forms() {
        let idx1 = SparsityPattern::from_one_based(4, &[&[1, 3], &[2, 4]]).unwrap();
        let half_pi = ParamSet::from_flat(&idx1, &[std::f64::consts::FRAC_PI_2, 0.3, std::f64::consts::FRAC_PI_2, -1.0]).unwrap();
        let x = materialize(&idx1, &half_pi).unwrap();
        let e = x.entries();
        assert!((e[(0, 0)].re - 1.0).abs() < 1e-15 && (e[(1, 1)].re - 1.0).abs() < 1e-15);
        assert!(e[(2, 0)].norm() < 1e-15 && e[(3, 1)].norm() < 1e-15);

        let quarter = ParamSet::from_flat(&idx1, &[FRAC_PI_4, 0.0, FRAC_PI_4, 0.0]).unwrap();
        let x = materialize(&idx1, &quarter).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for (r, c) in [(0, 0), (2, 0), (1, 1), (3, 1)] {
            assert!((x.entries()[(r, c)] - C64::new(h, 0.0)).norm() < 1e-15);
        }

        // two-row column reduces to (sin α, e^{jφ} cos α)
        let (a, f) = (0.4, 1.1);
        let p = ParamSet::from_flat(&idx1, &[a, f, 0.0, 0.0]).unwrap();
        let x = materialize(&idx1, &p).unwrap();
        assert!((x.entries()[(0, 0)] - C64::new(a.sin(), 0.0)).norm() < 1e-15);
        assert!((x.entries()[(2, 0)] - C64::from_polar(a.cos(), f)).norm() < 1e-15);
    }

    #[test]
    fn materialize_rejects_count_mismatch() {
        let idx3 = SparsityPattern::from_one_based(4, &[&[1], &[2, 3, 4]]).unwrap();
        assert_eq!(idx3.param_count(), 4);
        assert!(ParamSet::from_flat(&idx3, &[0.0; 3]).is_err());
        let idx1 = SparsityPattern::from_one_based(4, &[&[1, 3], &[2, 4]]).unwrap();
        assert!(materialize(&idx3, &ParamSet::zeros(&idx1)).is_err());
    }

    #[test]
    fn random_materializations_are_valid_and_sparse() {
        let mut r = rng::stream(5, &[]);
        let pats = enumerate_patterns(6, 3, 6).unwrap();
        for k in 0..1000 {
            let p = &pats[k % pats.len()];
            let params = ParamSet::random(p, &mut r);
            assert_eq!(params.len(), p.param_count());
            let x = materialize(p, &params).unwrap();
            assert!(validate(x.entries()).unwrap().is_ok());
            for row in 0..6 {
                let nz = (0..3).filter(|&c| x.entries()[(row, c)].norm() > 0.0).count();
                assert!(nz <= 1);
            }
            for (c, sup) in p.supports().iter().enumerate() {
                for row in 0..6 {
                    if !sup.contains(&row) {
                        assert_eq!(x.entries()[(row, c)].norm(), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn flat_roundtrip() {
        let p = SparsityPattern::from_one_based(6, &[&[1, 4, 5], &[2, 6], &[3]]).unwrap();
        let flat: Vec<f64> = (0..p.param_count()).map(|i| i as f64 * 0.1).collect();
        assert_eq!(ParamSet::from_flat(&p, &flat).unwrap().to_flat(), flat);
    }

    #[test]
    fn reuse_of_unsafe_pattern_is_rank_deficient() {
        let idx3 = SparsityPattern::from_one_based(4, &[&[1], &[2, 3, 4]]).unwrap();
        let mut r = rng::stream(6, &[]);
        for _ in 0..100 {
            let a = materialize(&idx3, &ParamSet::random(&idx3, &mut r)).unwrap();
            let b = materialize(&idx3, &ParamSet::random(&idx3, &mut r)).unwrap();
            let c = grassmann::inner(&a, &b).unwrap();
            let g = CMatrix::identity(2, 2) - &c * c.adjoint();
            let ev = linalg::hermitian_eigenvalues(&g);
            assert!(ev[0].abs() < 1e-9);
        }
    }

    #[test]
    fn distinct_safe_patterns_are_full_rank() {
        let pats: Vec<_> = enumerate_patterns(4, 2, 4).unwrap().into_iter().filter(|p| p.is_rank_safe_for_reuse()).collect();
        let mut r = rng::stream(7, &[]);
        let mut full = 0;
        for k in 0..1000 {
            let (p, q) = (&pats[k % 3], &pats[(k + 1) % 3]);
            let a = materialize(p, &ParamSet::random(p, &mut r)).unwrap();
            let b = materialize(q, &ParamSet::random(q, &mut r)).unwrap();
            let c = grassmann::inner(&a, &b).unwrap();
            let g = CMatrix::identity(2, 2) - &c * c.adjoint();
            if linalg::hermitian_eigenvalues(&g)[0] > 1e-9 {
                full += 1;
            }
        }
        assert!(full >= 999, "{full}");
    }

    #[test]
    fn allocation_rules() {
        let four = allocate_patterns(4, 2, 4, 4).unwrap();
        assert_eq!(four.len(), 4);
        assert!(four[..3].iter().all(SparsityPattern::is_rank_safe_for_reuse));
        assert_eq!(four.iter().collect::<HashSet<_>>().len(), 4);

        let seven = allocate_patterns(4, 2, 4, 7).unwrap();
        assert_eq!(seven.iter().collect::<HashSet<_>>().len(), 7);

        let nine = allocate_patterns(4, 2, 4, 9).unwrap();
        assert_eq!(nine[..7].iter().collect::<HashSet<_>>().len(), 7);
        assert!(nine[7..].iter().all(SparsityPattern::is_rank_safe_for_reuse));
        assert_eq!(nine[7], nine[0]);
        assert_eq!(nine[8], nine[1]);

        assert!(matches!(allocate_patterns_with(4, 2, 4, 9, false), Err(Error::Infeasible(_))));
        // s = M: no rank-safe pattern at all
        assert_eq!(count_patterns(4, 2, 2).unwrap(), 6);
        assert!(matches!(allocate_patterns(4, 2, 2, 7), Err(Error::Infeasible(_))));
        assert_eq!(allocate_patterns(4, 2, 2, 6).unwrap().len(), 6);
    }

    #[test]
    fn record_is_one_based() {
        let p = SparsityPattern::from_one_based(4, &[&[1, 3], &[2, 4]]).unwrap();
        let rec = p.record();
        assert_eq!(rec.pivots, vec![1, 2]);
        assert_eq!(rec.s, 4);
        assert!(rec.rank_safe);
        let json = serde_json::to_string(&rec).unwrap();
        assert_eq!(json, r#"{"pivots":[1,2],"supports":[[1,3],[2,4]],"s":4,"rank_safe":true}"#);
    }
}
