//! Exact symmetric-matrix algebra.
//!
//! Matrices are indexed 0-based in code. Reports, labels and CSV headers use
//! 1-based positions, so entry `(j, k)` here is entry `(j + 1, k + 1)` there.

use serde::Serialize;

use crate::error::{check_dim, invalid, Error, Result};

pub mod identities;

/// Max-abs tolerance on `O^T O - I` accepted by [`OrthogonalMatrix::new`].
pub const ORTHOGONALITY_TOL: f64 = 1e-10;

/// Max-abs asymmetry tolerated in `O X O^T` before re-symmetrizing,
/// relative to `max(1, max |X_jk|)`.
pub const CONJUGATION_ASYMMETRY_TOL: f64 = 1e-10;

/// Number of stored entries of a packed symmetric matrix of dimension `d`.
#[inline]
pub const fn packed_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Packed offset of entry `(j, k)`, `j <= k`, in row-major upper-triangle order.
#[inline]
pub const fn packed_index(d: usize, j: usize, k: usize) -> usize {
    j * (2 * d - j + 1) / 2 + (k - j)
}

/// Weight of each packed slot in the trace pairing: 1 on the diagonal, 2 off it.
pub fn pairing_weights(d: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(packed_len(d));
    for j in 0..d {
        for k in j..d {
            w.push(if j == k { 1.0 } else { 2.0 });
        }
    }
    w
}

/// Real symmetric `d x d` matrix stored as its upper triangle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "SymMatrix dimension must be >= 1");
        Self {
            dim,
            entries: vec![0.0; packed_len(dim)],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for j in 0..dim {
            m.set(j, j, 1.0);
        }
        m
    }

    /// Builds a matrix from packed upper-triangle entries.
    pub fn from_packed(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be >= 1"));
        }
        check_dim(packed_len(dim), entries.len())?;
        Ok(Self { dim, entries })
    }

    /// Builds a matrix from its full rows, reading only the upper triangle.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let d = rows.len();
        if d == 0 {
            return Err(invalid("dimension must be >= 1"));
        }
        let mut m = Self::zeros(d);
        for (j, row) in rows.iter().enumerate() {
            check_dim(d, row.len())?;
            for k in j..d {
                m.set(j, k, row[k]);
            }
        }
        Ok(m)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn packed(&self) -> &[f64] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> f64 {
        let (lo, hi) = if j <= k { (j, k) } else { (k, j) };
        self.entries[packed_index(self.dim, lo, hi)]
    }

    #[inline]
    pub fn set(&mut self, j: usize, k: usize, value: f64) {
        let (lo, hi) = if j <= k { (j, k) } else { (k, j) };
        self.entries[packed_index(self.dim, lo, hi)] = value;
    }

    /// Dense row-major copy.
    pub fn to_full(&self) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        for j in 0..d {
            for k in 0..d {
                out[j * d + k] = self.get(j, k);
            }
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|x| x * factor).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&x| x == 0.0)
    }
}

/// Element of `O(d)`, validated at construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrthogonalMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl OrthogonalMatrix {
    /// Wraps a row-major `d x d` matrix, rejecting it if `O^T O` deviates
    /// from the identity by more than [`ORTHOGONALITY_TOL`].
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be >= 1"));
        }
        check_dim(dim * dim, entries.len())?;
        let m = Self { dim, entries };
        let dev = m.orthogonality_defect();
        if dev.is_finite() && dev <= ORTHOGONALITY_TOL {
            Ok(m)
        } else {
            Err(Error::NotOrthogonal(dev))
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0.0; dim * dim];
        for j in 0..dim {
            entries[j * dim + j] = 1.0;
        }
        Self { dim, entries }
    }

    /// Permutation matrix exchanging coordinates `i` and `j` (0-based).
    pub fn transposition(dim: usize, i: usize, j: usize) -> Result<Self> {
        if i >= dim || j >= dim {
            return Err(invalid(format!(
                "transposition ({i}, {j}) out of range for d = {dim}"
            )));
        }
        let mut m = Self::identity(dim);
        m.entries[i * dim + i] = 0.0;
        m.entries[j * dim + j] = 0.0;
        m.entries[i * dim + j] = 1.0;
        m.entries[j * dim + i] = 1.0;
        Ok(m)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.dim + col]
    }

    pub fn as_row_major(&self) -> &[f64] {
        &self.entries
    }

    pub fn transpose(&self) -> Self {
        let d = self.dim;
        let mut entries = vec![0.0; d * d];
        for r in 0..d {
            for c in 0..d {
                entries[c * d + r] = self.entries[r * d + c];
            }
        }
        Self { dim: d, entries }
    }

    /// Matrix product `self * other`; closed under `O(d)`.
    pub fn mul(&self, other: &OrthogonalMatrix) -> Result<Self> {
        check_dim(self.dim, other.dim)?;
        Ok(Self {
            dim: self.dim,
            entries: matmul(self.dim, &self.entries, &other.entries),
        })
    }

    /// `max |(O^T O - I)_{jk}|`.
    pub fn orthogonality_defect(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for j in 0..d {
            for k in 0..d {
                let mut s = 0.0;
                for r in 0..d {
                    s += self.entries[r * d + j] * self.entries[r * d + k];
                }
                let target = if j == k { 1.0 } else { 0.0 };
                worst = worst.max((s - target).abs());
            }
        }
        worst
    }
}

pub(crate) fn matmul(d: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; d * d];
    for r in 0..d {
        for k in 0..d {
            let arc = a[r * d + k];
            if arc == 0.0 {
                continue;
            }
            for c in 0..d {
                out[r * d + c] += arc * b[k * d + c];
            }
        }
    }
    out
}

/// `Tr(A^T B) = sum_j A_jj B_jj + 2 sum_{j<k} A_jk B_jk`.
pub fn trace_pairing(a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    check_dim(a.dim, b.dim)?;
    Ok(packed_pairing(a.dim, &a.entries, &b.entries))
}

#[inline]
pub(crate) fn packed_pairing(d: usize, a: &[f64], b: &[f64]) -> f64 {
    let mut diag = 0.0;
    let mut off = 0.0;
    let mut idx = 0;
    for j in 0..d {
        diag += a[idx] * b[idx];
        idx += 1;
        for _ in (j + 1)..d {
            off += a[idx] * b[idx];
            idx += 1;
        }
    }
    diag + 2.0 * off
}

/// Off-diagonal probe: value `t` at positions `(k, j)` and `(j, k)`, zero
/// elsewhere. Indices are 1-based with `1 <= k < j <= d`.
pub fn probe_offdiag(d: usize, k: usize, j: usize, t: f64) -> Result<SymMatrix> {
    if d == 0 || k == 0 || k >= j || j > d {
        return Err(invalid(format!(
            "off-diagonal probe needs 1 <= k < j <= d, got k = {k}, j = {j}, d = {d}"
        )));
    }
    let mut m = SymMatrix::zeros(d);
    m.set(k - 1, j - 1, t);
    Ok(m)
}

/// Diagonal probe: single entry `t` at `(j, j)`, 1-based.
pub fn probe_diag(d: usize, j: usize, t: f64) -> Result<SymMatrix> {
    if d == 0 || j == 0 || j > d {
        return Err(invalid(format!(
            "diagonal probe needs 1 <= j <= d, got j = {j}, d = {d}"
        )));
    }
    let mut m = SymMatrix::zeros(d);
    m.set(j - 1, j - 1, t);
    Ok(m)
}

/// Places a 2x2 block in the top-left corner of a `d x d` zero matrix.
pub fn embed2(m2: &SymMatrix, d: usize) -> Result<SymMatrix> {
    check_dim(2, m2.dim)?;
    if d < 2 {
        return Err(invalid(format!("embedding needs d >= 2, got {d}")));
    }
    let mut m = SymMatrix::zeros(d);
    m.set(0, 0, m2.get(0, 0));
    m.set(0, 1, m2.get(0, 1));
    m.set(1, 1, m2.get(1, 1));
    Ok(m)
}

/// `diag(Q_theta, I_{d-2})` with `Q_theta = [[cos, -sin], [sin, cos]]`.
pub fn rotation_embed(theta: f64, d: usize) -> Result<OrthogonalMatrix> {
    if d < 2 {
        return Err(invalid(format!("rotation embedding needs d >= 2, got {d}")));
    }
    let (s, c) = theta.sin_cos();
    let mut o = OrthogonalMatrix::identity(d);
    o.entries[0] = c;
    o.entries[1] = -s;
    o.entries[d] = s;
    o.entries[d + 1] = c;
    OrthogonalMatrix::new(d, o.entries)
}

/// `O X O^T`, re-symmetrized by averaging with its transpose.
pub fn conjugate(o: &OrthogonalMatrix, x: &SymMatrix) -> Result<SymMatrix> {
    check_dim(o.dim, x.dim)?;
    let d = o.dim;
    let ox = matmul(d, &o.entries, &x.to_full());
    let ot = o.transpose();
    let full = matmul(d, &ox, &ot.entries);
    let scale = x.max_abs().max(1.0);
    let mut out = SymMatrix::zeros(d);
    let mut asym: f64 = 0.0;
    for j in 0..d {
        for k in j..d {
            let upper = full[j * d + k];
            let lower = full[k * d + j];
            asym = asym.max((upper - lower).abs());
            out.set(j, k, if j == k { upper } else { 0.5 * (upper + lower) });
        }
    }
    debug_assert!(
        asym <= CONJUGATION_ASYMMETRY_TOL * scale,
        "conjugation asymmetry {asym:e} exceeds tolerance"
    );
    Ok(out)
}

/// Entries `(a, b, d)` of a 2x2 symmetric matrix and a rotation angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rot2State {
    pub a: f64,
    pub b: f64,
    pub d: f64,
    pub theta: f64,
}

impl Rot2State {
    pub fn new(a: f64, b: f64, d: f64, theta: f64) -> Self {
        Self { a, b, d, theta }
    }

    pub fn as_matrix(&self) -> SymMatrix {
        SymMatrix {
            dim: 2,
            entries: vec![self.a, self.b, self.d],
        }
    }
}

/// Entries `(A, B, D)` of `Q_theta M Q_theta^T` for `M = [[a, b], [b, d]]`.
pub fn rotate2_closed_form(s: Rot2State) -> (f64, f64, f64) {
    let (sin2, cos2) = (2.0 * s.theta).sin_cos();
    let half_sum = 0.5 * (s.a + s.d);
    let half_diff = 0.5 * (s.a - s.d);
    let big_a = half_sum + half_diff * cos2 - s.b * sin2;
    let big_b = half_diff * sin2 + s.b * cos2;
    let big_d = half_sum - half_diff * cos2 + s.b * sin2;
    (big_a, big_b, big_d)
}

/// Angular derivatives `(dA, dB, dD) = (-2B, A - D, 2B)`.
pub fn rotate2_derivatives(a: f64, b: f64, d: f64) -> (f64, f64, f64) {
    (-2.0 * b, a - d, 2.0 * b)
}

/// 32 equispaced angles on `[0, 2 pi)`.
pub fn identity_theta_grid() -> Vec<f64> {
    (0..32)
        .map(|i| std::f64::consts::TAU * i as f64 / 32.0)
        .collect()
}
