//! Conventional constellations used as baselines: the exponential map over
//! QAM-built tangent matrices and Haar-random points.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::grassmann::{Constellation, GrassmannPoint};
use crate::linalg::{self, CMatrix, C64};
use crate::rng;

/// Unit-average-energy QAM grid indexed by its bit label.
#[derive(Debug, Clone, PartialEq)]
pub struct QamSymbolGrid {
    pub order: usize,
    pub symbols: Vec<C64>,
}

impl QamSymbolGrid {
    /// 4-QAM with Gray labeling: bit 0 picks the real sign, bit 1 the imaginary sign.
    pub fn gray4() -> Self {
        let symbols = (0..4)
            .map(|b| {
                let re = if b & 1 == 0 { 1.0 } else { -1.0 };
                let im = if b & 2 == 0 { 1.0 } else { -1.0 };
                C64::new(re, im) * FRAC_1_SQRT_2
            })
            .collect();
        Self { order: 4, symbols }
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.order.trailing_zeros() as usize
    }
}

/// `X = exp([[0, Θ], [−Θᴴ, 0]]) · I_{T,M}` for `Θ ∈ ℂ^{M×(T−M)}`.
pub fn exp_map(theta: &CMatrix) -> Result<GrassmannPoint> {
    let (m, rest) = theta.shape();
    if m == 0 || rest == 0 {
        return Err(Error::invalid(format!("Θ must be M×(T−M) with both positive, got {m}×{rest}")));
    }
    if !linalg::is_finite(theta) {
        return Err(Error::invalid("Θ has non-finite entries"));
    }
    let t = m + rest;
    let mut gen = CMatrix::zeros(t, t);
    gen.view_mut((0, m), (m, rest)).copy_from(theta);
    gen.view_mut((m, 0), (rest, m)).copy_from(&(-theta.adjoint()));
    // skew-Hermitian generator, so the exponential is unitary
    let u = gen.exp();
    GrassmannPoint::new(u.columns(0, m).into_owned())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpMapConfig {
    /// Homothetic factor applied to Θ before exponentiation.
    pub scale: f64,
}

impl Default for ExpMapConfig {
    fn default() -> Self {
        Self { scale: FRAC_1_SQRT_2 }
    }
}

fn bits_needed(cardinality: usize) -> usize {
    cardinality.next_power_of_two().trailing_zeros() as usize
}

/// QAM symbols for codeword `index`: symbol `k` is labeled by bits `2k, 2k+1`.
/// Symbols that carry none of the `nbits` information bits are zero.
fn symbols_for(index: usize, nbits: usize, count: usize, grid: &QamSymbolGrid) -> Vec<C64> {
    let bps = grid.bits_per_symbol();
    (0..count)
        .map(|k| {
            if k * bps >= nbits {
                C64::new(0.0, 0.0)
            } else {
                grid.symbols[(index >> (k * bps)) & (grid.order - 1)]
            }
        })
        .collect()
}

/// Tangent matrix Θ for codeword `index` of an Exp-Map constellation.
pub fn expmap_theta(t: usize, m: usize, cardinality: usize, index: usize, cfg: &ExpMapConfig) -> Result<CMatrix> {
    let grid = QamSymbolGrid::gray4();
    let nbits = bits_needed(cardinality);
    let theta = match (t, m) {
        (4, 2) => {
            if cardinality > 256 {
                return Err(Error::Unsupported(format!("(T,M)=(4,2) carries at most 256 codewords, got {cardinality}")));
            }
            let s = symbols_for(index, nbits, 4, &grid);
            let th = C64::from_polar(1.0, PI / 4.0);
            let ph = C64::from_polar(1.0, PI / 8.0);
            CMatrix::from_row_slice(2, 2, &[s[0] + th * s[1], ph * (s[2] + th * s[3]), ph * (s[2] - th * s[3]), s[0] - th * s[1]])
        }
        (t, 1) if t >= 2 => {
            let max_bits = 2 * (t - 1);
            if nbits > max_bits || cardinality > 1usize.checked_shl(max_bits as u32).unwrap_or(usize::MAX) {
                return Err(Error::Unsupported(format!("T={t}, M=1 carries at most 4^{} codewords", t - 1)));
            }
            CMatrix::from_row_slice(1, t - 1, &symbols_for(index, nbits, t - 1, &grid))
        }
        _ => {
            return Err(Error::Unsupported(format!(
                "Exp-Map constellation is defined for (T,M)=(4,2) and M=1, got ({t},{m})"
            )))
        }
    };
    Ok(theta.scale(cfg.scale))
}

pub fn expmap_constellation(t: usize, m: usize, cardinality: usize, cfg: &ExpMapConfig) -> Result<Constellation> {
    if cardinality == 0 {
        return Err(Error::invalid("cardinality must be positive"));
    }
    let points = (0..cardinality)
        .map(|i| expmap_theta(t, m, cardinality, i, cfg).and_then(|th| exp_map(&th)))
        .collect::<Result<Vec<_>>>()?;
    Constellation::with_provenance(points, json!({ "method": "expmap", "scale": cfg.scale }))
}

/// Uniform (Haar) point: QR of an i.i.d. 𝒞𝒩(0,1) matrix with positive R diagonal.
pub fn haar_random_point<R: Rng + ?Sized>(t: usize, m: usize, rng: &mut R) -> Result<GrassmannPoint> {
    if m == 0 || t <= m {
        return Err(Error::invalid(format!("need T > M >= 1, got T={t}, M={m}")));
    }
    GrassmannPoint::orthonormalize(&rng::complex_normal_matrix(rng, t, m, 1.0))
}
