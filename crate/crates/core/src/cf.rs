//! Characteristic functions: closed forms, empirical estimates on symmetric
//! t-grids, and distances between them.
//!
//! Empirical CFs are accumulated in blocks of [`CHUNK`] samples. Each block
//! reduces into eight fixed lanes, and the block sums are combined with a
//! pairwise tree, so the result is bitwise independent of how the blocks were
//! distributed over threads.

use std::io::Write;

use num_complex::Complex64;
use serde::Serialize;

use crate::ensembles::{format_f64, SampleSet};
use crate::error::{invalid, Error, Result};
use crate::par::{chunk_count, map_indices, map_indices_seq, CHUNK};
use crate::symcore::SymMatrix;

const LANES: usize = 8;

/// Ordered frequencies: strictly increasing, contains 0, symmetric about 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TGrid {
    points: Vec<f64>,
}

impl TGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(invalid("t-grid is empty"));
        }
        if points.iter().any(|t| !t.is_finite()) {
            return Err(invalid("t-grid has non-finite points"));
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("t-grid must be strictly increasing"));
        }
        let g = points.len();
        if (0..g).any(|i| points[i] != -points[g - 1 - i]) {
            return Err(invalid("t-grid must be symmetric about 0"));
        }
        if g.is_multiple_of(2) {
            return Err(invalid("t-grid must contain 0"));
        }
        Ok(Self { points })
    }

    /// `count` equispaced points on `[-t_max, t_max]`; `count` must be odd.
    pub fn uniform(t_max: f64, count: usize) -> Result<Self> {
        if count.is_multiple_of(2) || count < 3 {
            return Err(invalid(format!(
                "grid size must be odd and >= 3, got {count}"
            )));
        }
        if !(t_max > 0.0) || !t_max.is_finite() {
            return Err(invalid(format!("t_max must be positive, got {t_max}")));
        }
        let half = count / 2;
        let positive: Vec<f64> = (0..=half).map(|k| t_max * k as f64 / half as f64).collect();
        let mut points: Vec<f64> = positive[1..].iter().rev().map(|t| -t).collect();
        points.extend(positive);
        Self::new(points)
    }

    #[inline]
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the `t = 0` point.
    #[inline]
    pub fn zero_index(&self) -> usize {
        self.points.len() / 2
    }

    /// The non-negative half, starting at 0.
    pub fn nonneg(&self) -> &[f64] {
        &self.points[self.zero_index()..]
    }

    pub fn t_max(&self) -> f64 {
        *self.points.last().expect("non-empty grid")
    }

    /// Common spacing if the grid is equispaced (relative tolerance 1e-12).
    pub fn spacing(&self) -> Option<f64> {
        let half = self.nonneg();
        if half.len() < 2 {
            return None;
        }
        let h = half[1];
        half.windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-12 * h.max(w[1].abs()))
            .then_some(h)
    }

    /// Index of a grid point equal to `t` up to `1e-9` relative.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * t.abs().max(1.0);
        self.points.iter().position(|p| (p - t).abs() <= tol)
    }
}

impl Default for TGrid {
    /// 41 equispaced points on `[-4, 4]`.
    fn default() -> Self {
        Self::uniform(4.0, 41).expect("valid default grid")
    }
}

/// Simultaneous Hoeffding radius for real and imaginary parts over a grid of
/// `grid_len` points: `sqrt(2 ln(4 G / delta) / n)`.
pub fn hoeffding_radius(n: usize, grid_len: usize, delta: f64) -> f64 {
    (2.0 * (4.0 * grid_len as f64 / delta).ln() / n as f64).sqrt()
}

/// `exp(i mu t - sigma2 t^2 / 2)`.
pub fn normal_cf(mu: f64, sigma2: f64, t: f64) -> Result<Complex64> {
    if !(sigma2 >= 0.0) {
        return Err(invalid(format!("variance must be >= 0, got {sigma2}")));
    }
    Ok(Complex64::from_polar((-0.5 * sigma2 * t * t).exp(), mu * t))
}

/// Characteristic function of `U(-w, w)`: `sin(w t) / (w t)`.
pub fn uniform_cf(half_width: f64, t: f64) -> Complex64 {
    let x = half_width * t;
    if x == 0.0 {
        Complex64::new(1.0, 0.0)
    } else {
        Complex64::new(x.sin() / x, 0.0)
    }
}

#[derive(Debug, Clone)]
struct BlockSum {
    n: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl BlockSum {
    fn add(&self, other: &BlockSum) -> BlockSum {
        BlockSum {
            n: self.n + other.n,
            re: self.re.iter().zip(&other.re).map(|(a, b)| a + b).collect(),
            im: self.im.iter().zip(&other.im).map(|(a, b)| a + b).collect(),
        }
    }
}

fn lane_total(lanes: &[f64; LANES]) -> f64 {
    ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3]))
        + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]))
}

fn block_sum(half: &[f64], step: Option<f64>, values: &[f64]) -> BlockSum {
    debug_assert!(values.len() <= CHUNK);
    let g = half.len();
    let len = values.len();
    let mut re = vec![0.0; g];
    let mut im = vec![0.0; g];
    re[0] = len as f64;

    match step {
        Some(h) => {
            // cis(k h x) by repeated multiplication with cis(h x); each group
            // of LANES samples walks all frequencies in registers
            let mut acc_r = vec![[0.0; LANES]; g];
            let mut acc_i = vec![[0.0; LANES]; g];
            let mut groups = values.chunks_exact(LANES);
            for group in groups.by_ref() {
                let mut wr = [0.0; LANES];
                let mut wi = [0.0; LANES];
                for l in 0..LANES {
                    let (s, c) = (h * group[l]).sin_cos();
                    wr[l] = c;
                    wi[l] = s;
                }
                let (mut cr, mut ci) = (wr, wi);
                for k in 1..g {
                    if k > 1 {
                        for l in 0..LANES {
                            let nr = cr[l] * wr[l] - ci[l] * wi[l];
                            ci[l] = cr[l] * wi[l] + ci[l] * wr[l];
                            cr[l] = nr;
                        }
                    }
                    for l in 0..LANES {
                        acc_r[k][l] += cr[l];
                        acc_i[k][l] += ci[l];
                    }
                }
            }
            for (l, &x) in groups.remainder().iter().enumerate() {
                let (s, c) = (h * x).sin_cos();
                let (mut cr, mut ci) = (c, s);
                for k in 1..g {
                    if k > 1 {
                        let nr = cr * c - ci * s;
                        ci = cr * s + ci * c;
                        cr = nr;
                    }
                    acc_r[k][l] += cr;
                    acc_i[k][l] += ci;
                }
            }
            for k in 1..g {
                re[k] = lane_total(&acc_r[k]);
                im[k] = lane_total(&acc_i[k]);
            }
        }
        None => {
            for k in 1..g {
                let t = half[k];
                let mut acc_r = [0.0; LANES];
                let mut acc_i = [0.0; LANES];
                for (i, &x) in values.iter().enumerate() {
                    let (s, c) = (t * x).sin_cos();
                    acc_r[i % LANES] += c;
                    acc_i[i % LANES] += s;
                }
                re[k] = lane_total(&acc_r);
                im[k] = lane_total(&acc_i);
            }
        }
    }
    BlockSum { n: len, re, im }
}

fn tree_reduce(blocks: &[BlockSum]) -> BlockSum {
    match blocks.len() {
        1 => blocks[0].clone(),
        len => {
            let mid = len / 2;
            tree_reduce(&blocks[..mid]).add(&tree_reduce(&blocks[mid..]))
        }
    }
}

/// Running ECF sums, one entry per block of up to [`CHUNK`] samples.
///
/// Feeding the same samples through one accumulator, or through several
/// accumulators split on block boundaries and merged in order, gives
/// bitwise-identical estimates.
#[derive(Debug, Clone)]
pub struct EcfAccumulator {
    grid: TGrid,
    step: Option<f64>,
    blocks: Vec<BlockSum>,
}

impl EcfAccumulator {
    pub fn new(grid: &TGrid) -> Self {
        Self {
            grid: grid.clone(),
            step: grid.spacing(),
            blocks: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.blocks.iter().map(|b| b.n).sum()
    }

    /// Adds `values` as consecutive blocks of [`CHUNK`] (the last may be
    /// short). Calls should start on a block boundary of the overall sample.
    pub fn extend(&mut self, values: &[f64]) {
        let half = self.grid.nonneg();
        self.blocks
            .extend(values.chunks(CHUNK).map(|c| block_sum(half, self.step, c)));
    }

    /// Parallel [`extend`](Self::extend).
    pub fn extend_par(&mut self, values: &[f64]) {
        let half = self.grid.nonneg();
        let step = self.step;
        let blocks = map_indices(chunk_count(values.len()), |c| {
            let end = (c * CHUNK + CHUNK).min(values.len());
            block_sum(half, step, &values[c * CHUNK..end])
        });
        self.blocks.extend(blocks);
    }

    /// Appends `other`'s blocks after this accumulator's.
    pub fn merge(mut self, other: EcfAccumulator) -> Result<Self> {
        if self.grid != other.grid {
            return Err(invalid("cannot merge ECF accumulators on different grids"));
        }
        self.blocks.extend(other.blocks);
        Ok(self)
    }

    pub fn finish(&self, delta: f64) -> Result<EcfEstimate> {
        check_delta(delta)?;
        if self.blocks.is_empty() {
            return Err(invalid("ECF of an empty sample"));
        }
        let total = tree_reduce(&self.blocks);
        let n = total.n;
        if n < 2 {
            return Err(invalid("ECF needs at least 2 samples"));
        }
        let nf = n as f64;
        let zero = self.grid.zero_index();
        let g = self.grid.len();
        let mut re = vec![0.0; g];
        let mut im = vec![0.0; g];
        for (k, idx) in (zero..g).enumerate() {
            re[idx] = total.re[k] / nf;
            im[idx] = total.im[k] / nf;
            re[g - 1 - idx] = re[idx];
            im[g - 1 - idx] = -im[idx];
        }
        re[zero] = 1.0;
        im[zero] = 0.0;
        Ok(EcfEstimate {
            radius: hoeffding_radius(n, g, delta),
            grid: self.grid.clone(),
            re,
            im,
            n,
            delta,
        })
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("delta must lie in (0, 1), got {delta}")))
    }
}

/// Empirical (or closed-form, with zero radius) characteristic function on a
/// grid, with a uniform confidence radius at level `1 - delta`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EcfEstimate {
    grid: TGrid,
    re: Vec<f64>,
    im: Vec<f64>,
    n: usize,
    radius: f64,
    delta: f64,
}

impl EcfEstimate {
    /// Tabulates a known CF on the grid; radius 0, `n = 0`.
    pub fn from_cf<F: Fn(f64) -> Complex64>(grid: &TGrid, cf: F) -> Self {
        let (re, im) = grid
            .points()
            .iter()
            .map(|&t| {
                let z = cf(t);
                (z.re, z.im)
            })
            .unzip();
        Self {
            grid: grid.clone(),
            re,
            im,
            n: 0,
            radius: 0.0,
            delta: 0.0,
        }
    }

    pub fn grid(&self) -> &TGrid {
        &self.grid
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn value(&self, idx: usize) -> Complex64 {
        Complex64::new(self.re[idx], self.im[idx])
    }

    pub fn modulus(&self, idx: usize) -> f64 {
        self.value(idx).norm()
    }

    /// Pooled-sample estimate: count-weighted mean of the two.
    pub fn merge(&self, other: &EcfEstimate) -> Result<EcfEstimate> {
        if self.grid != other.grid {
            return Err(invalid("cannot merge ECF estimates on different grids"));
        }
        if self.delta != other.delta {
            return Err(invalid(
                "cannot merge ECF estimates at different confidence levels",
            ));
        }
        let n = self.n + other.n;
        let (w1, w2) = (self.n as f64 / n as f64, other.n as f64 / n as f64);
        let mix = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| w1 * x + w2 * y).collect();
        let mut out = EcfEstimate {
            re: mix(&self.re, &other.re),
            im: mix(&self.im, &other.im),
            radius: hoeffding_radius(n, self.grid.len(), self.delta),
            grid: self.grid.clone(),
            n,
            delta: self.delta,
        };
        let zero = out.grid.zero_index();
        out.re[zero] = 1.0;
        out.im[zero] = 0.0;
        Ok(out)
    }

    /// CSV with columns `t,re,im,radius,n`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,re,im,radius,n")?;
        for (i, t) in self.grid.points().iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{}",
                format_f64(*t),
                format_f64(self.re[i]),
                format_f64(self.im[i]),
                format_f64(self.radius),
                self.n
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// ECF of scalar samples, blocks accumulated in parallel when enabled.
pub fn ecf_scalar(samples: &[f64], grid: &TGrid, delta: f64) -> Result<EcfEstimate> {
    check_delta(delta)?;
    if samples.is_empty() {
        return Err(invalid("ECF of an empty sample"));
    }
    let mut acc = EcfAccumulator::new(grid);
    acc.extend_par(samples);
    acc.finish(delta)
}

/// Single-threaded [`ecf_scalar`]; bitwise-identical output.
pub fn ecf_scalar_seq(samples: &[f64], grid: &TGrid, delta: f64) -> Result<EcfEstimate> {
    check_delta(delta)?;
    if samples.is_empty() {
        return Err(invalid("ECF of an empty sample"));
    }
    let mut acc = EcfAccumulator::new(grid);
    let half = grid.nonneg();
    let step = acc.step;
    acc.blocks = map_indices_seq(chunk_count(samples.len()), |c| {
        let end = (c * CHUNK + CHUNK).min(samples.len());
        block_sum(half, step, &samples[c * CHUNK..end])
    });
    acc.finish(delta)
}

/// Estimates `t -> C_X(t P) = E exp(i t Tr(P X))` on the grid.
pub fn ecf_trace(
    samples: &SampleSet,
    probe: &SymMatrix,
    grid: &TGrid,
    delta: f64,
) -> Result<EcfEstimate> {
    ecf_scalar(&samples.project(probe)?, grid, delta)
}

/// Mean of `exp(i s x)` over the samples, at a single frequency.
pub fn ecf_point(samples: &[f64], s: f64) -> Complex64 {
    let mut acc = [Complex64::new(0.0, 0.0); LANES];
    for (i, &x) in samples.iter().enumerate() {
        let (sn, cs) = (s * x).sin_cos();
        acc[i % LANES] += Complex64::new(cs, sn);
    }
    let total = acc.iter().fold(Complex64::new(0.0, 0.0), |a, b| a + b);
    total / samples.len() as f64
}

/// `prod_j diag_cf(M_jj) * prod_{j<k} offdiag_cf(2 M_jk)`: the matrix CF at
/// `M` of a symmetric matrix with independent entries.
pub fn product_form_cf<F, G>(diag_cf: F, offdiag_cf: G, m: &SymMatrix) -> Complex64
where
    F: Fn(f64) -> Complex64,
    G: Fn(f64) -> Complex64,
{
    let d = m.dim();
    let mut acc = Complex64::new(1.0, 0.0);
    for j in 0..d {
        acc *= diag_cf(m.get(j, j));
        for k in (j + 1)..d {
            acc *= offdiag_cf(2.0 * m.get(j, k));
        }
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CfDistance {
    pub sup_dist: f64,
    pub threshold: f64,
    pub pass: bool,
    /// Grid point where the supremum is attained.
    pub t_at_sup: f64,
}

/// Sup-norm distance between two estimates on the same grid, tested against
/// the sum of their radii.
pub fn cf_distance(e1: &EcfEstimate, e2: &EcfEstimate) -> Result<CfDistance> {
    if e1.grid != e2.grid {
        return Err(invalid("cf_distance needs estimates on the same grid"));
    }
    let mut sup = 0.0;
    let mut at = 0.0;
    for (i, t) in e1.grid.points().iter().enumerate() {
        let d = (e1.value(i) - e2.value(i)).norm();
        if d > sup || d.is_nan() {
            sup = if d.is_nan() { f64::INFINITY } else { d };
            at = *t;
        }
    }
    let threshold = e1.radius + e2.radius;
    Ok(CfDistance {
        sup_dist: sup,
        threshold,
        pass: sup <= threshold,
        t_at_sup: at,
    })
}

/// Minimum `|phi|` at the three stencil points of the log-derivative.
pub const RELIABILITY_FLOOR: f64 = 0.2;

/// Central-difference estimate of `(1/t) phi'(2t) / phi(2t)`, with the
/// stencil `2t - h, 2t, 2t + h` taken from the grid. For symmetric variables
/// `phi` is real and only real parts are used; otherwise the real part of the
/// complex ratio is returned.
pub fn log_cf_derivative_ratio(e: &EcfEstimate, t: f64, symmetric: bool) -> Result<f64> {
    if t == 0.0 || !t.is_finite() {
        return Err(invalid("log-derivative ratio needs finite t != 0"));
    }
    let pts = e.grid.points();
    let i = e
        .grid
        .index_of(2.0 * t)
        .ok_or_else(|| invalid(format!("2t = {} is not a grid point", 2.0 * t)))?;
    if i == 0 || i + 1 >= pts.len() {
        return Err(Error::UnreliableRegion(format!(
            "2t = {} is at the grid edge",
            2.0 * t
        )));
    }
    let h = pts[i + 1] - pts[i];
    let h_left = pts[i] - pts[i - 1];
    if (h - h_left).abs() > 1e-9 * h {
        return Err(invalid("grid is not equispaced around 2t"));
    }
    let ratio = if symmetric {
        let (lo, mid, hi) = (e.re[i - 1], e.re[i], e.re[i + 1]);
        if lo.abs().min(mid.abs()).min(hi.abs()) < RELIABILITY_FLOOR {
            return Err(Error::UnreliableRegion(format!(
                "|phi| < {RELIABILITY_FLOOR} near 2t = {}",
                2.0 * t
            )));
        }
        (hi - lo) / (2.0 * h) / mid
    } else {
        let (lo, mid, hi) = (e.value(i - 1), e.value(i), e.value(i + 1));
        if lo.norm().min(mid.norm()).min(hi.norm()) < RELIABILITY_FLOOR {
            return Err(Error::UnreliableRegion(format!(
                "|phi| < {RELIABILITY_FLOOR} near 2t = {}",
                2.0 * t
            )));
        }
        ((hi - lo) / (2.0 * h) / mid).re
    };
    Ok(ratio / t)
}
