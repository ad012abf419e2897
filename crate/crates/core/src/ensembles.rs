//! Seeded samplers for the matrix distributions used by the experiments.
//!
//! Normal variates come from `rand_distr::StandardNormal` (ziggurat) driven by
//! the ChaCha8 streams of [`crate::rng`]. Changing either changes every pinned
//! baseline.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::par::{chunk_count, map_indices, map_indices_seq, CHUNK};
use crate::rng::SeedSpec;
use crate::symcore::{packed_index, packed_len, packed_pairing, OrthogonalMatrix, SymMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnsembleKind {
    Goe,
    /// `mu * I + scale * Y` with `Y` drawn from the GOE.
    AffineGoe {
        mu: f64,
        scale: f64,
    },
    /// Independent uniform entries with GOE variances.
    UniformSym,
    /// `(O + O^T) / 2` with `O` Haar on `O(d)`.
    SymHaar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    #[serde(flatten)]
    pub kind: EnsembleKind,
    pub dim: usize,
}

impl EnsembleSpec {
    pub fn new(kind: EnsembleKind, dim: usize) -> Result<Self> {
        let spec = Self { kind, dim };
        spec.validate()?;
        Ok(spec)
    }

    pub fn goe(dim: usize) -> Self {
        Self {
            kind: EnsembleKind::Goe,
            dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(invalid("ensemble dimension must be >= 1"));
        }
        match self.kind {
            EnsembleKind::AffineGoe { mu, scale } => {
                if !(scale >= 0.0) || !scale.is_finite() {
                    return Err(invalid(format!(
                        "scale must be finite and >= 0, got {scale}"
                    )));
                }
                if !mu.is_finite() {
                    return Err(invalid(format!("mu must be finite, got {mu}")));
                }
            }
            EnsembleKind::SymHaar if self.dim < 2 => {
                return Err(invalid("symmetrized Haar ensemble needs d >= 2"));
            }
            _ => {}
        }
        Ok(())
    }
}

/// `n` symmetric matrices of one dimension, stored packed and contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    dim: usize,
    data: Vec<f64>,
}

impl SampleSet {
    pub fn from_packed(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be >= 1"));
        }
        if !data.len().is_multiple_of(packed_len(dim)) {
            return Err(invalid(
                "packed sample data is not a whole number of matrices",
            ));
        }
        Ok(Self { dim, data })
    }

    pub fn from_matrices(matrices: &[SymMatrix]) -> Result<Self> {
        let dim = matrices
            .first()
            .map(SymMatrix::dim)
            .ok_or_else(|| invalid("empty sample list"))?;
        let mut data = Vec::with_capacity(matrices.len() * packed_len(dim));
        for m in matrices {
            check_dim(dim, m.dim())?;
            data.extend_from_slice(m.packed());
        }
        Ok(Self { dim, data })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len() / packed_len(self.dim)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn packed_data(&self) -> &[f64] {
        &self.data
    }

    pub fn packed_row(&self, i: usize) -> &[f64] {
        let m = packed_len(self.dim);
        &self.data[i * m..(i + 1) * m]
    }

    pub fn matrix(&self, i: usize) -> SymMatrix {
        SymMatrix::from_packed(self.dim, self.packed_row(i).to_vec()).expect("row length")
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(packed_len(self.dim))
    }

    /// Samples of entry `(j, k)` (0-based, either order).
    pub fn entry(&self, j: usize, k: usize) -> Vec<f64> {
        let (lo, hi) = if j <= k { (j, k) } else { (k, j) };
        let idx = packed_index(self.dim, lo, hi);
        self.rows().map(|r| r[idx]).collect()
    }

    /// Scalar projections `Tr(P X_i)` for every sample.
    pub fn project(&self, probe: &SymMatrix) -> Result<Vec<f64>> {
        check_dim(self.dim, probe.dim())?;
        let p = probe.packed();
        Ok(self
            .rows()
            .map(|r| packed_pairing(self.dim, p, r))
            .collect())
    }

    /// First `len / 2` samples and the rest, as independent halves.
    pub fn split_halves(&self) -> (SampleSet, SampleSet) {
        let cut = (self.len() / 2) * packed_len(self.dim);
        (
            SampleSet {
                dim: self.dim,
                data: self.data[..cut].to_vec(),
            },
            SampleSet {
                dim: self.dim,
                data: self.data[cut..].to_vec(),
            },
        )
    }
}

/// `d * d` independent standard normals, row-major.
pub fn sample_gaussian_full<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    (0..d * d).map(|_| rng.sample(StandardNormal)).collect()
}

fn fill_goe<R: Rng + ?Sized>(d: usize, rng: &mut R, z: &mut Vec<f64>, out: &mut [f64]) {
    z.clear();
    z.extend((0..d * d).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let mut idx = 0;
    for j in 0..d {
        for k in j..d {
            out[idx] = (z[j * d + k] + z[k * d + j]) * inv_sqrt2;
            idx += 1;
        }
    }
}

/// `(Z + Z^T) / sqrt(2)`: diagonal `N(0, 2)`, off-diagonal `N(0, 1)`.
pub fn sample_goe<R: Rng + ?Sized>(d: usize, rng: &mut R) -> SymMatrix {
    let mut out = vec![0.0; packed_len(d)];
    fill_goe(d, rng, &mut Vec::with_capacity(d * d), &mut out);
    SymMatrix::from_packed(d, out).expect("packed length")
}

fn affine_in_place(d: usize, mu: f64, scale: f64, packed: &mut [f64]) {
    let mut idx = 0;
    for j in 0..d {
        for k in j..d {
            let v = scale * packed[idx];
            packed[idx] = if j == k { v + mu } else { v };
            idx += 1;
        }
    }
}

/// `mu * I + scale * Y` with `Y` from [`sample_goe`].
pub fn sample_affine_goe<R: Rng + ?Sized>(
    d: usize,
    mu: f64,
    scale: f64,
    rng: &mut R,
) -> Result<SymMatrix> {
    EnsembleSpec::new(EnsembleKind::AffineGoe { mu, scale }, d)?;
    let y = sample_goe(d, rng);
    let mut packed = y.packed().to_vec();
    affine_in_place(d, mu, scale, &mut packed);
    SymMatrix::from_packed(d, packed)
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with column
/// `i` of `Q` multiplied by `sign(R_ii)`, taking `sign(0) = +1`.
pub fn sample_haar_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> OrthogonalMatrix {
    let z = DMatrix::from_row_slice(d, d, &sample_gaussian_full(d, rng));
    let qr = z.qr();
    let r = qr.r();
    let mut q = qr.q();
    for i in 0..d {
        if r[(i, i)] < 0.0 {
            q.column_mut(i).neg_mut();
        }
    }
    let mut entries = Vec::with_capacity(d * d);
    for row in 0..d {
        for col in 0..d {
            entries.push(q[(row, col)]);
        }
    }
    OrthogonalMatrix::new(d, entries).expect("Householder QR yields an orthogonal factor")
}

/// Off-diagonal `U(-sqrt 3, sqrt 3)`, diagonal `U(-sqrt 6, sqrt 6)`.
pub fn sample_uniform_sym<R: Rng + ?Sized>(d: usize, rng: &mut R) -> SymMatrix {
    let mut out = vec![0.0; packed_len(d)];
    fill_uniform_sym(d, rng, &mut out);
    SymMatrix::from_packed(d, out).expect("packed length")
}

fn fill_uniform_sym<R: Rng + ?Sized>(d: usize, rng: &mut R, out: &mut [f64]) {
    let off = 3f64.sqrt();
    let diag = 6f64.sqrt();
    let mut idx = 0;
    for j in 0..d {
        for k in j..d {
            let half_width = if j == k { diag } else { off };
            out[idx] = rng.random_range(-half_width..half_width);
            idx += 1;
        }
    }
}

/// `(O + O^T) / 2` with `O` Haar: conjugation invariant, dependent entries.
pub fn sample_symmetrized_haar<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<SymMatrix> {
    if d < 2 {
        return Err(invalid("symmetrized Haar ensemble needs d >= 2"));
    }
    let mut out = vec![0.0; packed_len(d)];
    fill_sym_haar(d, rng, &mut out);
    SymMatrix::from_packed(d, out)
}

fn fill_sym_haar<R: Rng + ?Sized>(d: usize, rng: &mut R, out: &mut [f64]) {
    let o = sample_haar_orthogonal(d, rng);
    let mut idx = 0;
    for j in 0..d {
        for k in j..d {
            out[idx] = 0.5 * (o.get(j, k) + o.get(k, j));
            idx += 1;
        }
    }
}

/// Draws one matrix of `spec` into `out` (packed).
pub fn sample_into<R: Rng + ?Sized>(spec: &EnsembleSpec, rng: &mut R, out: &mut [f64]) {
    let d = spec.dim;
    match spec.kind {
        EnsembleKind::Goe => fill_goe(d, rng, &mut Vec::with_capacity(d * d), out),
        EnsembleKind::AffineGoe { mu, scale } => {
            fill_goe(d, rng, &mut Vec::with_capacity(d * d), out);
            affine_in_place(d, mu, scale, out);
        }
        EnsembleKind::UniformSym => fill_uniform_sym(d, rng, out),
        EnsembleKind::SymHaar => fill_sym_haar(d, rng, out),
    }
}

fn sample_chunk(spec: &EnsembleSpec, n: usize, seed: SeedSpec, chunk: usize) -> Vec<f64> {
    let m = packed_len(spec.dim);
    let count = CHUNK.min(n - chunk * CHUNK);
    let mut rng = seed.chunk_rng(chunk as u64);
    let mut out = vec![0.0; count * m];
    let d = spec.dim;
    let mut z = Vec::with_capacity(d * d);
    for row in out.chunks_exact_mut(m) {
        match spec.kind {
            EnsembleKind::Goe => fill_goe(d, &mut rng, &mut z, row),
            EnsembleKind::AffineGoe { mu, scale } => {
                fill_goe(d, &mut rng, &mut z, row);
                affine_in_place(d, mu, scale, row);
            }
            _ => sample_into(spec, &mut rng, row),
        }
    }
    out
}

/// `n` draws of `spec`. Draw `i` depends only on `(spec, seed, i)`: chunk
/// `i / CHUNK` has its own counter offset, and chunks are generated in
/// parallel when the feature is enabled.
pub fn sample_batch(spec: &EnsembleSpec, n: usize, seed: SeedSpec) -> Result<SampleSet> {
    spec.validate()?;
    let parts = map_indices(chunk_count(n), |c| sample_chunk(spec, n, seed, c));
    SampleSet::from_packed(spec.dim, parts.concat())
}

/// Single-threaded [`sample_batch`]; produces identical output.
pub fn sample_batch_seq(spec: &EnsembleSpec, n: usize, seed: SeedSpec) -> Result<SampleSet> {
    spec.validate()?;
    let parts = map_indices_seq(chunk_count(n), |c| sample_chunk(spec, n, seed, c));
    SampleSet::from_packed(spec.dim, parts.concat())
}

/// `n` independent standard normal scalars.
pub fn sample_standard_normals(n: usize, seed: SeedSpec) -> Vec<f64> {
    map_indices(chunk_count(n), |c| {
        let count = CHUNK.min(n - c * CHUNK);
        let mut rng = seed.chunk_rng(c as u64);
        (0..count)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect::<Vec<_>>()
    })
    .concat()
}

/// Header names `x1_1, x1_2, ..., xd_d` in packed order (1-based).
pub fn csv_header(d: usize) -> Vec<String> {
    let mut h = Vec::with_capacity(packed_len(d));
    for j in 1..=d {
        for k in j..=d {
            h.push(format!("x{j}_{k}"));
        }
    }
    h
}

/// 17-significant-digit scientific notation; parses back to the same `f64`.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// One matrix per row, upper-triangle entries in packed order.
pub fn write_samples_csv<W: Write>(samples: &SampleSet, mut w: W) -> Result<()> {
    writeln!(w, "{}", csv_header(samples.dim).join(","))?;
    let mut line = String::new();
    for row in samples.rows() {
        line.clear();
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&format_f64(*v));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a sample CSV. Row numbers in errors count the header as row 1.
pub fn read_samples_csv<R: BufRead>(reader: R) -> Result<SampleSet> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => {
            return Err(Error::Input {
                row: 1,
                message: "empty file".into(),
            })
        }
    };
    let names: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    let d = (1..=64)
        .find(|&d| packed_len(d) == names.len())
        .ok_or_else(|| Error::Input {
            row: 1,
            message: format!("{} columns is not d(d+1)/2 for any d", names.len()),
        })?;
    if names
        .iter()
        .zip(csv_header(d))
        .any(|(got, want)| *got != want)
    {
        return Err(Error::Input {
            row: 1,
            message: format!("header does not match {}", csv_header(d).join(",")),
        });
    }
    let m = packed_len(d);
    let mut data = Vec::new();
    for (idx, line) in lines.enumerate() {
        let row = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| Error::Input {
                row,
                message: format!("cannot parse {field:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Input {
                    row,
                    message: format!("non-finite value {field:?}"),
                });
            }
            data.push(v);
        }
        if data.len() - before != m {
            return Err(Error::Input {
                row,
                message: format!("expected {m} fields, found {}", data.len() - before),
            });
        }
    }
    if data.is_empty() {
        return Err(Error::Input {
            row: 2,
            message: "no sample rows".into(),
        });
    }
    SampleSet::from_packed(d, data)
}
