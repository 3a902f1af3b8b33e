//! Monte Carlo evaluation over i.i.d. Rayleigh block fading.
//!
//! Transmission follows `Y = √(T/M) X H + V` with `H ~ 𝒞𝒩(0, 1)` (`M × N`) and
//! `V ~ 𝒞𝒩(0, σ_v²)` (`T × N`). Detection is the noncoherent GLRT
//! `argmaxᵢ ‖YᴴXᵢ‖_F²`, lowest index on ties.
//!
//! Each SNR point runs `workers` independent rng streams keyed by
//! `(seed, snr index, worker)`, in rounds of fixed size, so results depend on
//! the seed and worker count only.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{alpha, NoiseModel};
use crate::error::{Error, Result};
use crate::grassmann::{Constellation, GrassmannPoint};
use crate::io::{ResultRow, SparseConstellationStore, EMPTY_SLOT};
use crate::linalg::{CMatrix, C64};
use crate::rng::{self, SimRng};

const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub snr_db: Vec<f64>,
    pub max_frames: u64,
    /// SER runs stop once this many symbol errors are collected.
    pub target_error_count: u64,
    pub mc_samples: u64,
    pub seed: u64,
    pub workers: usize,
    pub receive_antennas: usize,
    /// Frames per worker per round.
    pub batch_frames: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            max_frames: 1_000_000,
            target_error_count: 200,
            mc_samples: 10_000,
            seed: 0,
            workers: 1,
            receive_antennas: 2,
            batch_frames: 4096,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_frames == 0 || self.target_error_count == 0 || self.mc_samples == 0 || self.batch_frames == 0 {
            return Err(Error::invalid("frame, error and sample counts must be positive"));
        }
        if self.workers == 0 || self.receive_antennas == 0 {
            return Err(Error::invalid("workers and receive antennas must be positive"));
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("SNR values must be finite"));
        }
        Ok(())
    }
}

/// One Monte Carlo estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub snr_db: f64,
    pub value: f64,
    /// 95% half-width: Wilson for error rates, normal for sample means.
    pub half_width: f64,
    pub std_error: f64,
    pub frames: u64,
    /// Error count for rates, sample count for means.
    pub events: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Ser,
    Ami,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Ser => "ser",
            Metric::Ami => "ami",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub metric: Metric,
    pub points: Vec<Estimate>,
}

impl SimResult {
    pub fn rows(&self) -> Vec<ResultRow> {
        self.points
            .iter()
            .map(|p| ResultRow {
                snr_db: p.snr_db,
                metric: self.metric.name().to_string(),
                value: p.value,
                half_width: p.half_width,
                frames: p.frames,
            })
            .collect()
    }
}

/// Wilson 95% interval half-width for `k` events in `n` trials.
pub fn wilson_half_width(k: u64, n: u64) -> f64 {
    if n == 0 {
        return f64::INFINITY;
    }
    let (k, n) = (k as f64, n as f64);
    let p = k / n;
    let z2 = Z95 * Z95;
    Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n)
}

fn rate_estimate(snr_db: f64, errors: u64, frames: u64) -> Estimate {
    let p = errors as f64 / frames as f64;
    Estimate {
        snr_db,
        value: p,
        half_width: wilson_half_width(errors, frames),
        std_error: (p * (1.0 - p) / frames as f64).sqrt(),
        frames,
        events: errors,
    }
}

/// Running sums for a sample mean.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: u64,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.sum_sq += v * v;
    }

    fn merge(&mut self, o: &Moments) {
        self.n += o.n;
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
    }

    fn estimate(&self, snr_db: f64) -> Estimate {
        let n = self.n as f64;
        let mean = self.sum / n;
        let var = if self.n > 1 { ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
        let se = (var / n).sqrt();
        Estimate {
            snr_db,
            value: mean,
            half_width: Z95 * se,
            std_error: se,
            frames: self.n,
            events: self.n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: CMatrix,
    pub v: CMatrix,
}

impl ChannelRealization {
    pub fn sample<R: Rng + ?Sized>(t: usize, m: usize, n: usize, noise: &NoiseModel, rng: &mut R) -> Self {
        let h = rng::complex_normal_matrix(rng, m, n, 1.0);
        let v = rng::complex_normal_matrix(rng, t, n, noise.sigma_v_sq());
        Self { h, v }
    }
}

/// `Y = √(T/M) X H + V`.
pub fn transmit(x: &GrassmannPoint, ch: &ChannelRealization) -> Result<CMatrix> {
    let (t, m) = x.shape();
    if ch.h.nrows() != m || ch.v.nrows() != t || ch.h.ncols() != ch.v.ncols() {
        return Err(Error::ShapeMismatch {
            expected: (m, ch.v.ncols()),
            got: ch.h.shape(),
        });
    }
    let scale = (t as f64 / m as f64).sqrt();
    Ok(x.entries() * &ch.h * C64::new(scale, 0.0) + &ch.v)
}

/// Instrumented operation counts of the GLRT metric.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCount {
    /// Complex multiply-accumulates.
    pub macs: u64,
    /// `|z|²` evaluations.
    pub squarings: u64,
}

/// Column-major copy of every codeword for the dense GLRT loop.
#[derive(Debug, Clone)]
pub struct DenseDetector {
    t: usize,
    m: usize,
    card: usize,
    data: Vec<C64>,
}

impl DenseDetector {
    pub fn new(c: &Constellation) -> Self {
        let (t, m) = (c.t_slots(), c.m_antennas());
        let mut data = Vec::with_capacity(c.cardinality() * t * m);
        for p in c.points() {
            data.extend(p.entries().iter().copied());
        }
        Self {
            t,
            m,
            card: c.cardinality(),
            data,
        }
    }

    pub fn cardinality(&self) -> usize {
        self.card
    }

    #[inline]
    fn metric<const COUNT: bool>(&self, i: usize, y: &[C64], n: usize, ops: &mut OpCount) -> f64 {
        let (t, m) = (self.t, self.m);
        let x = &self.data[i * t * m..(i + 1) * t * m];
        let mut total = 0.0;
        for yc in y.chunks_exact(t).take(n) {
            for xk in x.chunks_exact(t) {
                let mut acc = C64::new(0.0, 0.0);
                for (a, b) in yc.iter().zip(xk) {
                    acc += a.conj() * b;
                }
                total += acc.norm_sqr();
            }
        }
        if COUNT {
            ops.macs += (t * m * n) as u64;
            ops.squarings += (m * n) as u64;
        }
        total
    }

    /// `‖YᴴXᵢ‖_F²` for every codeword; `y` is `T × N` column-major.
    pub fn metrics(&self, y: &[C64], n: usize, out: &mut [f64]) {
        let mut ops = OpCount::default();
        for (i, o) in out.iter_mut().enumerate().take(self.card) {
            *o = self.metric::<false>(i, y, n, &mut ops);
        }
    }

    pub fn detect(&self, y: &[C64], n: usize) -> usize {
        let mut ops = OpCount::default();
        self.argmax::<false>(y, n, &mut ops)
    }

    pub fn detect_counted(&self, y: &[C64], n: usize, ops: &mut OpCount) -> usize {
        self.argmax::<true>(y, n, ops)
    }

    fn argmax<const COUNT: bool>(&self, y: &[C64], n: usize, ops: &mut OpCount) -> usize {
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for i in 0..self.card {
            let v = self.metric::<COUNT>(i, y, n, ops);
            if v > best_v {
                best_v = v;
                best = i;
            }
        }
        best
    }
}

/// GLRT over the one-slot-per-row store: `s·N` MACs per codeword.
#[derive(Debug, Clone)]
pub struct SparseDetector<'a> {
    store: &'a SparseConstellationStore,
}

impl<'a> SparseDetector<'a> {
    pub fn new(store: &'a SparseConstellationStore) -> Self {
        Self { store }
    }

    #[inline]
    fn metric<const COUNT: bool>(&self, i: usize, y: &[C64], n: usize, acc: &mut [C64], ops: &mut OpCount) -> f64 {
        let t = self.store.t_slots();
        let (cols, vals) = self.store.codeword(i);
        let mut total = 0.0;
        for yc in y.chunks_exact(t).take(n) {
            acc.fill(C64::new(0.0, 0.0));
            for ((a, &k), v) in yc.iter().zip(cols).zip(vals) {
                if k != EMPTY_SLOT {
                    acc[k as usize] += a.conj() * v;
                    if COUNT {
                        ops.macs += 1;
                    }
                }
            }
            for a in acc.iter() {
                total += a.norm_sqr();
            }
            if COUNT {
                ops.squarings += acc.len() as u64;
            }
        }
        total
    }

    pub fn metrics(&self, y: &[C64], n: usize, out: &mut [f64]) {
        let mut acc = vec![C64::new(0.0, 0.0); self.store.m_antennas()];
        let mut ops = OpCount::default();
        for (i, o) in out.iter_mut().enumerate().take(self.store.cardinality()) {
            *o = self.metric::<false>(i, y, n, &mut acc, &mut ops);
        }
    }

    pub fn detect(&self, y: &[C64], n: usize) -> usize {
        let mut ops = OpCount::default();
        self.argmax::<false>(y, n, &mut ops)
    }

    pub fn detect_counted(&self, y: &[C64], n: usize, ops: &mut OpCount) -> usize {
        self.argmax::<true>(y, n, ops)
    }

    fn argmax<const COUNT: bool>(&self, y: &[C64], n: usize, ops: &mut OpCount) -> usize {
        let mut acc = vec![C64::new(0.0, 0.0); self.store.m_antennas()];
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for i in 0..self.store.cardinality() {
            let v = self.metric::<COUNT>(i, y, n, &mut acc, ops);
            if v > best_v {
                best_v = v;
                best = i;
            }
        }
        best
    }
}

fn flatten(y: &CMatrix) -> Vec<C64> {
    y.iter().copied().collect()
}

/// Dense GLRT decision for a received `T × N` block.
pub fn glrt_detect_dense(y: &CMatrix, c: &Constellation) -> Result<usize> {
    if y.nrows() != c.t_slots() || y.ncols() == 0 {
        return Err(Error::invalid(format!("received block has {} rows, constellation T = {}", y.nrows(), c.t_slots())));
    }
    Ok(DenseDetector::new(c).detect(&flatten(y), y.ncols()))
}

/// Sparse GLRT decision; agrees with [`glrt_detect_dense`] on the densified store.
pub fn glrt_detect_sparse(y: &CMatrix, store: &SparseConstellationStore) -> Result<usize> {
    if y.nrows() != store.t_slots() || y.ncols() == 0 {
        return Err(Error::invalid(format!("received block has {} rows, store T = {}", y.nrows(), store.t_slots())));
    }
    Ok(SparseDetector::new(store).detect(&flatten(y), y.ncols()))
}

/// Scratch buffers for one simulated block.
struct Frame {
    t: usize,
    m: usize,
    n: usize,
    h: Vec<C64>,
    y: Vec<C64>,
}

impl Frame {
    fn new(t: usize, m: usize, n: usize) -> Self {
        Self {
            t,
            m,
            n,
            h: vec![C64::new(0.0, 0.0); m * n],
            y: vec![C64::new(0.0, 0.0); t * n],
        }
    }

    fn draw_channel(&mut self, rng: &mut SimRng) {
        for z in self.h.iter_mut() {
            *z = rng::complex_normal(rng, 1.0);
        }
    }

    /// `y = scale·x·h + v` with fresh noise.
    fn receive(&mut self, x: &[C64], scale: f64, sigma_sq: f64, rng: &mut SimRng) {
        let (t, m) = (self.t, self.m);
        for col in 0..self.n {
            for r in 0..t {
                let mut s = C64::new(0.0, 0.0);
                for k in 0..m {
                    s += x[k * t + r] * self.h[k + m * col];
                }
                self.y[col * t + r] = s * scale + rng::complex_normal(rng, sigma_sq);
            }
        }
    }

    fn receive_with_noise(&mut self, x: &[C64], scale: f64, v: &[C64]) {
        let (t, m) = (self.t, self.m);
        for col in 0..self.n {
            for r in 0..t {
                let mut s = C64::new(0.0, 0.0);
                for k in 0..m {
                    s += x[k * t + r] * self.h[k + m * col];
                }
                self.y[col * t + r] = s * scale + v[col * t + r];
            }
        }
    }
}

fn split(total: u64, workers: usize, w: usize) -> u64 {
    let base = total / workers as u64;
    base + u64::from((w as u64) < total % workers as u64)
}

const TAG_SER: u64 = 1;
const TAG_AMI: u64 = 2;
const TAG_PAIR: u64 = 3;
const TAG_EIJ: u64 = 4;

fn ser_batch(det: &DenseDetector, cfg: &SimConfig, noise: &NoiseModel, frames: u64, rng: &mut SimRng) -> u64 {
    let (t, m, n) = (det.t, det.m, cfg.receive_antennas);
    let scale = (t as f64 / m as f64).sqrt();
    let mut fr = Frame::new(t, m, n);
    let mut errors = 0;
    for _ in 0..frames {
        let k = rng.random_range(0..det.card);
        fr.draw_channel(rng);
        fr.receive(&det.data[k * t * m..(k + 1) * t * m], scale, noise.sigma_v_sq(), rng);
        if det.detect(&fr.y, n) != k {
            errors += 1;
        }
    }
    errors
}

/// Symbol error rate under uniform codeword selection and GLRT detection.
pub fn estimate_ser(c: &Constellation, cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let det = DenseDetector::new(c);
    let mut points = Vec::with_capacity(cfg.snr_db.len());
    for (si, &snr) in cfg.snr_db.iter().enumerate() {
        let noise = NoiseModel::from_snr_db(snr)?;
        let mut streams: Vec<SimRng> = (0..cfg.workers).map(|w| rng::stream(cfg.seed, &[TAG_SER, si as u64, w as u64])).collect();
        let (mut frames, mut errors) = (0u64, 0u64);
        while frames < cfg.max_frames && errors < cfg.target_error_count {
            let remaining = cfg.max_frames - frames;
            let shares: Vec<u64> = (0..cfg.workers).map(|w| split(remaining, cfg.workers, w).min(cfg.batch_frames)).collect();
            let errs: Vec<u64> = streams
                .par_iter_mut()
                .zip(shares.par_iter())
                .map(|(r, &f)| ser_batch(&det, cfg, &noise, f, r))
                .collect();
            frames += shares.iter().sum::<u64>();
            errors += errs.iter().sum::<u64>();
        }
        points.push(rate_estimate(snr, errors, frames));
    }
    Ok(SimResult { metric: Metric::Ser, points })
}

/// `log Σ exp(v)` with a max shift.
fn log_sum_exp(v: &[f64]) -> f64 {
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    top + v.iter().map(|x| (x - top).exp()).sum::<f64>().ln()
}

fn ami_batch(det: &DenseDetector, cfg: &SimConfig, noise: &NoiseModel, samples: u64, rng: &mut SimRng) -> Moments {
    let (t, m, n, card) = (det.t, det.m, cfg.receive_antennas, det.card);
    let scale = (t as f64 / m as f64).sqrt();
    let s = noise.sigma_v_sq();
    let norm = s * (1.0 + s * m as f64 / t as f64);
    let base = (card as f64).log2() / t as f64;
    let mut fr = Frame::new(t, m, n);
    let mut v = vec![C64::new(0.0, 0.0); t * n];
    let mut metrics = vec![0.0; card];
    let mut eta = vec![0.0; card];
    let mut out = Moments::default();
    for _ in 0..samples {
        fr.draw_channel(rng);
        for z in v.iter_mut() {
            *z = rng::complex_normal(rng, s);
        }
        let mut acc = 0.0;
        for i in 0..card {
            fr.receive_with_noise(&det.data[i * t * m..(i + 1) * t * m], scale, &v);
            det.metrics(&fr.y, n, &mut metrics);
            for j in 0..card {
                eta[j] = if j == i { 0.0 } else { (metrics[j] - metrics[i]) / norm };
            }
            acc += log_sum_exp(&eta);
        }
        out.push(base - acc / (t as f64 * card as f64 * std::f64::consts::LN_2));
    }
    out
}

/// Noncoherent AMI in bits per channel use.
pub fn estimate_ami(c: &Constellation, cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let det = DenseDetector::new(c);
    let mut points = Vec::with_capacity(cfg.snr_db.len());
    for (si, &snr) in cfg.snr_db.iter().enumerate() {
        let noise = NoiseModel::from_snr_db(snr)?;
        let parts: Vec<Moments> = (0..cfg.workers)
            .into_par_iter()
            .map(|w| {
                let mut r = rng::stream(cfg.seed, &[TAG_AMI, si as u64, w as u64]);
                ami_batch(&det, cfg, &noise, split(cfg.mc_samples, cfg.workers, w), &mut r)
            })
            .collect();
        let mut total = Moments::default();
        for p in &parts {
            total.merge(p);
        }
        points.push(total.estimate(snr));
    }
    Ok(SimResult { metric: Metric::Ami, points })
}

fn pair_detector(a: &GrassmannPoint, b: &GrassmannPoint) -> Result<DenseDetector> {
    Ok(DenseDetector::new(&Constellation::new(vec![a.clone(), b.clone()])?))
}

/// Rate at which the GLRT prefers `b` (strictly) when `a` was sent.
pub fn estimate_pairwise_error(a: &GrassmannPoint, b: &GrassmannPoint, noise: &NoiseModel, n: usize, frames: u64, seed: u64) -> Result<Estimate> {
    if n == 0 || frames == 0 {
        return Err(Error::invalid("need N >= 1 and frames >= 1"));
    }
    let det = pair_detector(a, b)?;
    let (t, m) = a.shape();
    let scale = (t as f64 / m as f64).sqrt();
    let mut r = rng::stream(seed, &[TAG_PAIR]);
    let mut fr = Frame::new(t, m, n);
    let mut met = [0.0; 2];
    let mut errors = 0;
    for _ in 0..frames {
        fr.draw_channel(&mut r);
        fr.receive(&det.data[..t * m], scale, noise.sigma_v_sq(), &mut r);
        det.metrics(&fr.y, n, &mut met);
        if met[1] > met[0] {
            errors += 1;
        }
    }
    Ok(rate_estimate(noise.snr_db(), errors, frames))
}

/// Sample mean of `exp(−α tr(YYᴴΔ))` with `Δ = aaᴴ − bbᴴ` and the unscaled
/// observation `Y = aH + V`.
pub fn estimate_eij(a: &GrassmannPoint, b: &GrassmannPoint, noise: &NoiseModel, n: usize, lambda: f64, samples: u64, seed: u64) -> Result<Estimate> {
    if n == 0 || samples == 0 {
        return Err(Error::invalid("need N >= 1 and samples >= 1"));
    }
    let (t, m) = a.shape();
    let al = alpha(lambda, noise, t, m)?;
    let det = pair_detector(a, b)?;
    let mut r = rng::stream(seed, &[TAG_EIJ]);
    let mut fr = Frame::new(t, m, n);
    let mut met = [0.0; 2];
    let mut mom = Moments::default();
    for _ in 0..samples {
        fr.draw_channel(&mut r);
        fr.receive(&det.data[..t * m], 1.0, noise.sigma_v_sq(), &mut r);
        det.metrics(&fr.y, n, &mut met);
        mom.push((-al * (met[0] - met[1])).exp());
    }
    Ok(mom.estimate(noise.snr_db()))
}
