//! Points on the complex Grassmann manifold 𝒢(T, M) and the distances between them.
//!
//! A point is stored through one orthonormal representative `X` (`T × M`,
//! `XᴴX = I_M`); every quantity here depends only on the column span, i.e. it is
//! invariant under `X → XU` for unitary `U`.

use serde_json::Value;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};

/// Maximum tolerated entry of `|XᴴX − I_M|`.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GrassmannPoint {
    entries: CMatrix,
}

/// Outcome of an orthonormality check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationReport {
    pub max_deviation: f64,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.max_deviation <= ORTHONORMAL_TOL
    }
}

/// Checks the Stiefel condition on a raw matrix.
///
/// Non-finite entries are an error; otherwise the report carries the largest
/// deviation of `XᴴX` from the identity.
pub fn validate(entries: &CMatrix) -> Result<ValidationReport> {
    if !linalg::is_finite(entries) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    Ok(ValidationReport {
        max_deviation: linalg::orthonormality_deviation(entries),
    })
}

impl GrassmannPoint {
    /// Wraps an orthonormal `T × M` matrix with `T > M ≥ 1`.
    pub fn new(entries: CMatrix) -> Result<Self> {
        let (t, m) = entries.shape();
        if m == 0 || t <= m {
            return Err(Error::invalid(format!("need T > M >= 1, got T={t}, M={m}")));
        }
        let report = validate(&entries)?;
        if !report.is_ok() {
            return Err(Error::NotOrthonormal {
                deviation: report.max_deviation,
            });
        }
        Ok(Self { entries })
    }

    /// Orthonormalizes an arbitrary full-column-rank matrix (QR, positive R diagonal).
    pub fn orthonormalize(raw: &CMatrix) -> Result<Self> {
        if !linalg::is_finite(raw) {
            return Err(Error::invalid("matrix has non-finite entries"));
        }
        Self::new(linalg::qr_positive(raw))
    }

    /// The point spanned by the first `M` standard basis vectors.
    pub fn identity(t: usize, m: usize) -> Result<Self> {
        Self::new(linalg::identity_columns(t, m))
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    pub fn t_slots(&self) -> usize {
        self.entries.nrows()
    }

    pub fn m_antennas(&self) -> usize {
        self.entries.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.entries.shape()
    }

    /// `P = XXᴴ`.
    pub fn projector(&self) -> CMatrix {
        &self.entries * self.entries.adjoint()
    }

    /// Another representative of the same point, `XU` for unitary `U`.
    pub fn right_multiply(&self, u: &CMatrix) -> Result<Self> {
        let m = self.m_antennas();
        if u.shape() != (m, m) {
            return Err(Error::ShapeMismatch {
                expected: (m, m),
                got: u.shape(),
            });
        }
        Self::new(&self.entries * u)
    }
}

fn check_pair(a: &GrassmannPoint, b: &GrassmannPoint) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            expected: a.shape(),
            got: b.shape(),
        });
    }
    Ok(())
}

/// `aᴴb`.
pub fn inner(a: &GrassmannPoint, b: &GrassmannPoint) -> Result<CMatrix> {
    check_pair(a, b)?;
    Ok(a.entries.adjoint() * &b.entries)
}

/// Principal angles `θ₁ ≤ … ≤ θ_M` and the matching singular values `σ₁ ≥ … ≥ σ_M`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalAngles {
    pub angles: Vec<f64>,
    pub singular_values: Vec<f64>,
}

impl PrincipalAngles {
    /// `sin²θ_m = 1 − σ_m²`, in the same (ascending-angle) order.
    pub fn sin_squared(&self) -> Vec<f64> {
        self.singular_values.iter().map(|s| (1.0 - s * s).max(0.0)).collect()
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }
}

pub fn principal_angles(a: &GrassmannPoint, b: &GrassmannPoint) -> Result<PrincipalAngles> {
    let c = inner(a, b)?;
    let mut singular_values: Vec<f64> = c.singular_values().iter().map(|s| s.clamp(0.0, 1.0)).collect();
    singular_values.sort_by(|x, y| y.total_cmp(x));
    let angles = singular_values.iter().map(|s| s.acos()).collect();
    Ok(PrincipalAngles {
        angles,
        singular_values,
    })
}

/// `d_c = √(M − ‖aᴴb‖_F²)`.
pub fn chordal_distance(a: &GrassmannPoint, b: &GrassmannPoint) -> Result<f64> {
    let c = inner(a, b)?;
    let m = a.m_antennas() as f64;
    Ok((m - c.norm_squared()).max(0.0).sqrt())
}

/// `‖aaᴴ − bbᴴ‖_F / √2`; the projector form of the chordal distance.
pub fn chordal_distance_projector(a: &GrassmannPoint, b: &GrassmannPoint) -> Result<f64> {
    check_pair(a, b)?;
    Ok((a.projector() - b.projector()).norm() / std::f64::consts::SQRT_2)
}

/// `d_cp = det(I_M − aᴴb bᴴa)`, clamped to `[0, 1]`.
pub fn chordal_product_distance(a: &GrassmannPoint, b: &GrassmannPoint) -> Result<f64> {
    let c = inner(a, b)?;
    Ok(gram_complement_det(&c))
}

/// `det(I − CCᴴ)` for an `M × M` cross-Gram matrix `C`.
pub(crate) fn gram_complement_det(c: &CMatrix) -> f64 {
    let m = c.nrows();
    let g = CMatrix::identity(m, m) - c * c.adjoint();
    let mut buf: Vec<_> = (0..m * m).map(|k| g[(k / m, k % m)]).collect();
    linalg::det_in_place(&mut buf, m).re.clamp(0.0, 1.0)
}

pub fn chordal_distance_from_angles(angles: &PrincipalAngles) -> f64 {
    angles.angles.iter().map(|t| t.sin().powi(2)).sum::<f64>().sqrt()
}

pub fn chordal_product_from_angles(angles: &PrincipalAngles) -> f64 {
    angles.angles.iter().map(|t| t.sin().powi(2)).product()
}

/// `Π_m (1 + κ sin²θ_m)`.
pub fn joint_distance(a: &GrassmannPoint, b: &GrassmannPoint, kappa: f64) -> Result<f64> {
    if !(kappa >= 0.0) {
        return Err(Error::invalid(format!("kappa must be >= 0, got {kappa}")));
    }
    let pa = principal_angles(a, b)?;
    Ok(pa.sin_squared().iter().map(|s| 1.0 + kappa * s).product())
}

/// An ordered codebook of Grassmann points sharing `(T, M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    points: Vec<GrassmannPoint>,
    /// Free-form design record (method, parameters, seeds, ...).
    pub provenance: Value,
}

impl Constellation {
    pub fn new(points: Vec<GrassmannPoint>) -> Result<Self> {
        Self::with_provenance(points, Value::Null)
    }

    pub fn with_provenance(points: Vec<GrassmannPoint>, provenance: Value) -> Result<Self> {
        let first = points.first().ok_or_else(|| Error::invalid("empty constellation"))?;
        let shape = first.shape();
        if let Some(bad) = points.iter().find(|p| p.shape() != shape) {
            return Err(Error::ShapeMismatch {
                expected: shape,
                got: bad.shape(),
            });
        }
        Ok(Self { points, provenance })
    }

    pub fn points(&self) -> &[GrassmannPoint] {
        &self.points
    }

    pub fn get(&self, index: usize) -> Option<&GrassmannPoint> {
        self.points.get(index)
    }

    pub fn cardinality(&self) -> usize {
        self.points.len()
    }

    pub fn t_slots(&self) -> usize {
        self.points[0].t_slots()
    }

    pub fn m_antennas(&self) -> usize {
        self.points[0].m_antennas()
    }

    /// Iterates over all pairs `i < j`, lexicographically.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.points.len();
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    Chordal,
    ChordalProduct,
}

impl DistanceMetric {
    pub fn eval(self, a: &GrassmannPoint, b: &GrassmannPoint) -> Result<f64> {
        match self {
            DistanceMetric::Chordal => chordal_distance(a, b),
            DistanceMetric::ChordalProduct => chordal_product_distance(a, b),
        }
    }
}

/// Minimum pairwise distance and the lexicographically smallest pair attaining it.
pub fn min_pairwise(c: &Constellation, metric: DistanceMetric) -> Result<(f64, (usize, usize))> {
    if c.cardinality() < 2 {
        return Err(Error::invalid("need at least two points"));
    }
    let mut best = (f64::INFINITY, (0, 1));
    for (i, j) in c.pairs() {
        let d = metric.eval(&c.points[i], &c.points[j])?;
        if d < best.0 {
            best = (d, (i, j));
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{C64, ONE, ZERO};
    use crate::rng;
    use std::f64::consts::FRAC_PI_2;

    fn haar(t: usize, m: usize, rng: &mut rng::SimRng) -> GrassmannPoint {
        GrassmannPoint::orthonormalize(&rng::complex_normal_matrix(rng, t, m, 1.0)).unwrap()
    }

    fn column_point(t: usize, rows: &[usize]) -> GrassmannPoint {
        let mut x = CMatrix::zeros(t, rows.len());
        for (c, &r) in rows.iter().enumerate() {
            x[(r, c)] = ONE;
        }
        GrassmannPoint::new(x).unwrap()
    }

    #[test]
    fn validate_identity_and_scaled() {
        let x = linalg::identity_columns(4, 2);
        assert!(validate(&x).unwrap().is_ok());
        let r = validate(&x.scale(2.0)).unwrap();
        assert!(!r.is_ok());
        assert!((r.max_deviation - 3.0).abs() < 1e-15);
    }

    #[test]
    fn validate_rejects_nan_and_gaussian() {
        let mut x = linalg::identity_columns(3, 1);
        x[(1, 0)] = C64::new(f64::NAN, 0.0);
        assert!(matches!(validate(&x), Err(Error::InvalidInput(_))));
        let mut r = rng::stream(3, &[]);
        let g = rng::complex_normal_matrix(&mut r, 5, 2, 1.0);
        assert!(validate(&g).unwrap().max_deviation > 1e-10);
    }

    #[test]
    fn constructor_rejects_bad_shapes() {
        assert!(GrassmannPoint::new(linalg::identity_columns(2, 2)).is_err());
        assert!(GrassmannPoint::new(CMatrix::zeros(3, 0)).is_err());
    }

    #[test]
    fn identical_and_disjoint_angles() {
        let a = column_point(4, &[0, 1]);
        let b = column_point(4, &[2, 3]);
        let same = principal_angles(&a, &a).unwrap();
        assert!(same.angles.iter().all(|t| t.abs() < 1e-12));
        let dis = principal_angles(&a, &b).unwrap();
        assert!(dis.angles.iter().all(|t| (t - FRAC_PI_2).abs() < 1e-12));
        assert_eq!(chordal_distance(&a, &a).unwrap(), 0.0);
        assert!((chordal_distance(&a, &b).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(chordal_product_distance(&a, &a).unwrap(), 0.0);
        assert!((chordal_product_distance(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        assert!((joint_distance(&a, &b, 1.0).unwrap() - 4.0).abs() < 1e-12);
        assert!((joint_distance(&a, &a, 7.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_angle_in_the_plane() {
        let a = column_point(2, &[0]);
        for k in 0..=8 {
            let t = FRAC_PI_2 * k as f64 / 8.0;
            let b = GrassmannPoint::new(CMatrix::from_column_slice(2, 1, &[C64::new(t.cos(), 0.0), C64::new(t.sin(), 0.0)]))
                .unwrap();
            let pa = principal_angles(&a, &b).unwrap();
            assert!((pa.angles[0] - t).abs() < 1e-7, "t={t} got {}", pa.angles[0]);
        }
    }

    #[test]
    fn shared_column_kills_product_distance() {
        let a = column_point(4, &[0, 1]);
        let b = column_point(4, &[0, 2]);
        assert!(chordal_product_distance(&a, &b).unwrap().abs() < 1e-15);
        assert!((chordal_distance(&a, &b).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let a = column_point(4, &[0, 1]);
        let b = column_point(5, &[0, 1]);
        assert!(matches!(chordal_distance(&a, &b), Err(Error::ShapeMismatch { .. })));
        assert!(joint_distance(&a, &a, -1.0).is_err());
    }

    #[test]
    fn random_pairs_agree_across_forms() {
        let mut r = rng::stream(11, &[]);
        for &(t, m) in &[(4, 2), (6, 3), (5, 1), (7, 2)] {
            for _ in 0..50 {
                let a = haar(t, m, &mut r);
                let b = haar(t, m, &mut r);
                let pa = principal_angles(&a, &b).unwrap();
                let dc = chordal_distance(&a, &b).unwrap();
                assert!((dc - chordal_distance_projector(&a, &b).unwrap()).abs() < 1e-9);
                assert!((dc - chordal_distance_from_angles(&pa)).abs() < 1e-9);
                let dcp = chordal_product_distance(&a, &b).unwrap();
                assert!((dcp - chordal_product_from_angles(&pa)).abs() < 1e-9);
                assert!((0.0..=1.0).contains(&dcp));
                assert!(dc <= (m as f64).sqrt() + 1e-12);
                if m == 2 {
                    let k = 1.7;
                    let expect = 1.0 + k * dc * dc + k * k * dcp;
                    assert!((joint_distance(&a, &b, k).unwrap() - expect).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn right_unitary_invariance() {
        let mut r = rng::stream(12, &[]);
        for _ in 0..20 {
            let a = haar(6, 3, &mut r);
            let b = haar(6, 3, &mut r);
            let u = linalg::qr_positive(&rng::complex_normal_matrix(&mut r, 3, 3, 1.0));
            let au = a.right_multiply(&u).unwrap();
            let p1 = principal_angles(&a, &b).unwrap();
            let p2 = principal_angles(&au, &b).unwrap();
            for (x, y) in p1.sin_squared().iter().zip(p2.sin_squared()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn min_pairwise_matches_double_loop() {
        let mut r = rng::stream(13, &[]);
        let pts: Vec<_> = (0..4).map(|_| haar(4, 2, &mut r)).collect();
        let c = Constellation::new(pts.clone()).unwrap();
        for metric in [DistanceMetric::Chordal, DistanceMetric::ChordalProduct] {
            let mut best = (f64::INFINITY, (0, 0));
            for i in 0..4 {
                for j in i + 1..4 {
                    let d = metric.eval(&pts[i], &pts[j]).unwrap();
                    if d < best.0 {
                        best = (d, (i, j));
                    }
                }
            }
            assert_eq!(min_pairwise(&c, metric).unwrap(), best);
        }
        let dup = Constellation::new(vec![pts[0].clone(), pts[0].clone()]).unwrap();
        let (d, pair) = min_pairwise(&dup, DistanceMetric::Chordal).unwrap();
        assert!(d < 1e-7);
        assert_eq!(pair, (0, 1));
        let single = Constellation::new(vec![pts[0].clone()]).unwrap();
        assert!(min_pairwise(&single, DistanceMetric::Chordal).is_err());
        let _ = ZERO;
    }
}
