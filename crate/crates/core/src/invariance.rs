//! Statistical tests of equality in law under orthogonal conjugation.
//!
//! For a probe `M` and orthogonal `O`, the CF of `O X O^T` at `t M` equals the
//! CF of `X` at `t O^T M O`, so each comparison is between two trace
//! projections of samples of `X`.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::cf::{cf_distance, ecf_scalar, ecf_trace, CfDistance, EcfEstimate, TGrid};
use crate::ensembles::{sample_batch, sample_haar_orthogonal, EnsembleSpec, SampleSet};
use crate::error::{check_dim, invalid, Result};
use crate::par::map_indices;
use crate::rng::SeedSpec;
use crate::stats::{ks_two_sample, KsResult};
use crate::symcore::{
    conjugate, packed_len, probe_diag, probe_offdiag, rotation_embed, OrthogonalMatrix, SymMatrix,
};

/// Smallest batch accepted by the invariance and characterization tests.
pub const MIN_SAMPLES: usize = 10_000;

const PRIMARY_BATCH: u64 = 1;
const INDEPENDENT_BATCH: u64 = 2;
const FAMILY_STREAM: u64 = 3;
const PROBE_STREAM: u64 = 4;

/// A value with a human-readable label used in reports (1-based indices).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Labeled<T> {
    pub label: String,
    #[serde(skip)]
    pub value: T,
}

impl<T> Labeled<T> {
    pub fn new(label: impl Into<String>, value: T) -> Self {
        Self {
            label: label.into(),
            value,
        }
    }
}

/// All transpositions, rotations of the first two coordinates by
/// pi/6, pi/4, pi/3, pi/2, then `count` Haar draws.
pub fn default_orthogonal_family(
    d: usize,
    count: usize,
    seed: SeedSpec,
) -> Result<Vec<Labeled<OrthogonalMatrix>>> {
    if d < 2 {
        return Err(invalid(format!("orthogonal family needs d >= 2, got {d}")));
    }
    let mut family = Vec::new();
    for i in 0..d {
        for j in (i + 1)..d {
            family.push(Labeled::new(
                format!("swap({},{})", i + 1, j + 1),
                OrthogonalMatrix::transposition(d, i, j)?,
            ));
        }
    }
    use std::f64::consts::PI;
    for (name, theta) in [
        ("pi/6", PI / 6.0),
        ("pi/4", PI / 4.0),
        ("pi/3", PI / 3.0),
        ("pi/2", PI / 2.0),
    ] {
        family.push(Labeled::new(
            format!("rot({name})"),
            rotation_embed(theta, d)?,
        ));
    }
    let mut rng = seed.child(FAMILY_STREAM).rng();
    for h in 0..count {
        family.push(Labeled::new(
            format!("haar#{}", h + 1),
            sample_haar_orthogonal(d, &mut rng),
        ));
    }
    Ok(family)
}

/// Every off-diagonal probe `A^1_(k,j)`, every diagonal probe `A^1_j`, then
/// `random_count` Gaussian symmetric probes scaled to unit Frobenius norm.
pub fn default_probes(
    d: usize,
    random_count: usize,
    seed: SeedSpec,
) -> Result<Vec<Labeled<SymMatrix>>> {
    let mut probes = Vec::new();
    for k in 1..=d {
        for j in (k + 1)..=d {
            probes.push(Labeled::new(
                format!("offdiag({k},{j})"),
                probe_offdiag(d, k, j, 1.0)?,
            ));
        }
    }
    for j in 1..=d {
        probes.push(Labeled::new(format!("diag({j})"), probe_diag(d, j, 1.0)?));
    }
    let mut rng = seed.child(PROBE_STREAM).rng();
    for r in 0..random_count {
        let raw: Vec<f64> = (0..packed_len(d))
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let m = SymMatrix::from_packed(d, raw)?;
        let frob = crate::symcore::trace_pairing(&m, &m)?.sqrt();
        probes.push(Labeled::new(
            format!("random#{}", r + 1),
            m.scaled(1.0 / frob),
        ));
    }
    Ok(probes)
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceRecord {
    pub probe: String,
    pub orthogonal: String,
    /// `X` vs `O X O^T` on one batch.
    pub same_batch: CfDistance,
    /// `X` vs `O X O^T` on independent batches.
    pub independent: CfDistance,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceReport {
    pub dim: usize,
    pub n: usize,
    pub delta: f64,
    pub seed: Option<SeedSpec>,
    pub probes_tested: usize,
    pub orthogonals_tested: usize,
    pub records: Vec<InvarianceRecord>,
    /// Union bound on the false-rejection probability: comparisons times delta.
    pub familywise_bound: f64,
    pub overall_pass: bool,
}

impl InvarianceReport {
    pub fn failures(&self) -> impl Iterator<Item = &InvarianceRecord> {
        self.records.iter().filter(|r| !r.pass)
    }

    /// Record with the largest sup distance relative to its threshold.
    pub fn worst(&self) -> Option<&InvarianceRecord> {
        let score = |r: &InvarianceRecord| {
            (r.same_batch.sup_dist / r.same_batch.threshold)
                .max(r.independent.sup_dist / r.independent.threshold)
        };
        self.records
            .iter()
            .max_by(|a, b| score(a).total_cmp(&score(b)))
    }
}

fn validate_inputs(
    d: usize,
    n: usize,
    family: &[Labeled<OrthogonalMatrix>],
    probes: &[Labeled<SymMatrix>],
) -> Result<()> {
    if d < 2 {
        return Err(invalid(format!("invariance tests need d >= 2, got {d}")));
    }
    if n < MIN_SAMPLES {
        return Err(invalid(format!(
            "invariance tests need n >= {MIN_SAMPLES}, got {n}"
        )));
    }
    if family.is_empty() || probes.is_empty() {
        return Err(invalid("orthogonal family and probe set must be non-empty"));
    }
    for o in family {
        check_dim(d, o.value.dim())?;
    }
    for p in probes {
        check_dim(d, p.value.dim())?;
        if p.value.is_zero() {
            return Err(invalid(format!("probe {} is zero", p.label)));
        }
    }
    Ok(())
}

/// Draws a primary and an independent batch of `n` samples from `spec` and
/// compares `X` against `O X O^T` for every probe and orthogonal matrix.
pub fn test_conjugation_invariance(
    spec: &EnsembleSpec,
    n: usize,
    family: &[Labeled<OrthogonalMatrix>],
    probes: &[Labeled<SymMatrix>],
    grid: &TGrid,
    delta: f64,
    seed: SeedSpec,
) -> Result<InvarianceReport> {
    spec.validate()?;
    validate_inputs(spec.dim, n, family, probes)?;
    let primary = sample_batch(spec, n, seed.child(PRIMARY_BATCH))?;
    let independent = sample_batch(spec, n, seed.child(INDEPENDENT_BATCH))?;
    let records = run_records(&primary, None, &independent, family, probes, grid, delta)?;
    Ok(assemble(
        spec.dim,
        n,
        delta,
        Some(seed),
        family,
        probes,
        records,
    ))
}

/// Same test on a fixed sample: the same-batch comparison uses all samples,
/// the independent comparison pits the first half against the second.
pub fn test_conjugation_invariance_on_samples(
    samples: &SampleSet,
    family: &[Labeled<OrthogonalMatrix>],
    probes: &[Labeled<SymMatrix>],
    grid: &TGrid,
    delta: f64,
) -> Result<InvarianceReport> {
    validate_inputs(samples.dim(), samples.len(), family, probes)?;
    let (first, second) = samples.split_halves();
    let records = run_records(samples, Some(&first), &second, family, probes, grid, delta)?;
    Ok(assemble(
        samples.dim(),
        samples.len(),
        delta,
        None,
        family,
        probes,
        records,
    ))
}

fn assemble(
    dim: usize,
    n: usize,
    delta: f64,
    seed: Option<SeedSpec>,
    family: &[Labeled<OrthogonalMatrix>],
    probes: &[Labeled<SymMatrix>],
    records: Vec<InvarianceRecord>,
) -> InvarianceReport {
    let overall_pass = records.iter().all(|r| r.pass);
    InvarianceReport {
        dim,
        n,
        delta,
        seed,
        probes_tested: probes.len(),
        orthogonals_tested: family.len(),
        familywise_bound: 2.0 * records.len() as f64 * delta,
        records,
        overall_pass,
    }
}

fn run_records(
    primary: &SampleSet,
    independent_base: Option<&SampleSet>,
    independent: &SampleSet,
    family: &[Labeled<OrthogonalMatrix>],
    probes: &[Labeled<SymMatrix>],
    grid: &TGrid,
    delta: f64,
) -> Result<Vec<InvarianceRecord>> {
    // Conjugated probes often coincide bit for bit (a transposition maps
    // single-entry probes onto each other), so each distinct probe is estimated once.
    let mut unique: Vec<SymMatrix> = Vec::new();
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut intern = |m: SymMatrix| -> usize {
        let key: Vec<u64> = m.packed().iter().map(|v| v.to_bits()).collect();
        *index.entry(key).or_insert_with(|| {
            unique.push(m);
            unique.len() - 1
        })
    };
    let base_ids: Vec<usize> = probes.iter().map(|p| intern(p.value.clone())).collect();
    let mut conj_ids = Vec::with_capacity(family.len() * probes.len());
    for o in family {
        let ot = o.value.transpose();
        for p in probes {
            conj_ids.push(intern(conjugate(&ot, &p.value)?));
        }
    }

    let estimate = |set: &SampleSet| -> Result<Vec<EcfEstimate>> {
        map_indices(unique.len(), |u| ecf_trace(set, &unique[u], grid, delta))
            .into_iter()
            .collect()
    };
    let same = estimate(primary)?;
    let ind = estimate(independent)?;
    let base_ind: Option<Vec<EcfEstimate>> = independent_base
        .map(|s| {
            probes
                .iter()
                .map(|p| ecf_trace(s, &p.value, grid, delta))
                .collect::<Result<_>>()
        })
        .transpose()?;

    let mut records = Vec::with_capacity(conj_ids.len());
    for (r, &cid) in conj_ids.iter().enumerate() {
        let (oi, pi) = (r / probes.len(), r % probes.len());
        let same_batch = cf_distance(&same[base_ids[pi]], &same[cid])?;
        let ind_ref = base_ind.as_ref().map_or(&same[base_ids[pi]], |b| &b[pi]);
        let independent = cf_distance(ind_ref, &ind[cid])?;
        records.push(InvarianceRecord {
            probe: probes[pi].label.clone(),
            orthogonal: family[oi].label.clone(),
            pass: same_batch.pass && independent.pass,
            same_batch,
            independent,
        });
    }
    Ok(records)
}

#[derive(Debug, Clone, Serialize)]
pub struct SymmetryCheck {
    pub max_abs_im: f64,
    pub radius: f64,
    pub ks: KsResult,
    pub pass: bool,
}

/// `X_kj ~ -X_kj` check on one off-diagonal entry (1-based, `k < j`): the
/// imaginary part of its ECF must stay within the radius of 0, and a KS test
/// of the first half of the entry samples against the negated second half
/// must give `p >= delta`.
pub fn test_entry_symmetry(
    samples: &SampleSet,
    k: usize,
    j: usize,
    grid: &TGrid,
    delta: f64,
) -> Result<SymmetryCheck> {
    let d = samples.dim();
    if k == j {
        return Err(invalid("symmetry is only tested on off-diagonal entries"));
    }
    if k == 0 || k > j || j > d {
        return Err(invalid(format!("entry ({k},{j}) needs 1 <= k < j <= {d}")));
    }
    entry_symmetry(&samples.entry(k - 1, j - 1), grid, delta)
}

pub(crate) fn entry_symmetry(values: &[f64], grid: &TGrid, delta: f64) -> Result<SymmetryCheck> {
    if values.len() < 4 {
        return Err(invalid("symmetry check needs at least 4 samples"));
    }
    let e = ecf_scalar(values, grid, delta)?;
    let max_abs_im = e.im().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let half = values.len() / 2;
    let negated: Vec<f64> = values[half..].iter().map(|v| -v).collect();
    let ks = ks_two_sample(&values[..half], &negated)?;
    Ok(SymmetryCheck {
        pass: max_abs_im <= e.radius() && ks.p_value >= delta,
        max_abs_im,
        radius: e.radius(),
        ks,
    })
}
