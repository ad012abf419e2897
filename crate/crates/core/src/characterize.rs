//! Decides whether a symmetric ensemble with independent entries is, in law,
//! `mu I + sigma Y` with `Y` from the GOE, and fits `(mu, sigma^2)`.
//!
//! The pipeline runs a conjugation-invariance pre-check and then three stages:
//!
//! 1. entry homogeneity: off-diagonal entries share one symmetric, zero-mean
//!    law; diagonal entries share another; entries look uncorrelated;
//! 2. the 2x2 reduction: projections of `(X_11, X_12, X_22)` are unchanged by
//!    rotating the probe, and the product of single-entry CFs satisfies the
//!    same identity;
//! 3. the off-diagonal log-CF derivative profile `-(1/t) phi'(2t)/phi(2t)` is
//!    flat (its constant is `k = 2 sigma^2`), and both marginals match the
//!    fitted normal CFs.

use num_complex::Complex64;
use serde::Serialize;

use crate::cf::{
    cf_distance, ecf_point, ecf_scalar, log_cf_derivative_ratio, normal_cf, CfDistance,
    EcfEstimate, TGrid,
};
use crate::ensembles::{sample_batch, EnsembleSpec, SampleSet};
use crate::error::{invalid, Result};
use crate::invariance::{
    default_orthogonal_family, default_probes, entry_symmetry,
    test_conjugation_invariance_on_samples, InvarianceReport, SymmetryCheck, MIN_SAMPLES,
};
use crate::par::map_indices;
use crate::rng::SeedSpec;
use crate::stats::{
    correlation, ks_two_sample_sorted, mean, sorted, variance, variance_std_error, KsResult,
};
use crate::symcore::{rotate2_closed_form, Rot2State};

/// Width of the CLT bands used for means, correlations and the variance ratio.
pub const CLT_SIGMAS: f64 = 4.0;

#[derive(Debug, Clone, Serialize)]
pub struct CharacterizeConfig {
    pub grid: TGrid,
    pub delta: f64,
    /// Haar draws added to the transposition/rotation family of the pre-check.
    pub haar_count: usize,
    pub random_probes: usize,
    pub k_t_points: Vec<f64>,
    pub flatness_tol: f64,
    pub theta_grid: Vec<f64>,
    /// 2x2 probes `(a, b, d)`.
    pub m2_grid: Vec<(f64, f64, f64)>,
    /// Seeds the Haar draws and random probes of the pre-check.
    pub seed: SeedSpec,
}

impl Default for CharacterizeConfig {
    fn default() -> Self {
        use std::f64::consts::PI;
        Self {
            grid: TGrid::default(),
            delta: 0.01,
            haar_count: 10,
            random_probes: 5,
            k_t_points: vec![0.2, 0.4, 0.6],
            flatness_tol: 0.3,
            theta_grid: vec![0.0, PI / 6.0, PI / 4.0, PI / 3.0, PI / 2.0],
            m2_grid: vec![
                (1.0, 0.0, 0.0),
                (0.0, 1.0, 0.0),
                (1.0, 1.0, 0.0),
                (1.0, 0.5, -1.0),
                (0.5, 0.5, 0.5),
            ],
            seed: SeedSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PairEvidence {
    pub a: String,
    pub b: String,
    pub cf: CfDistance,
    pub ks: KsResult,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SymmetryEvidence {
    pub entry: String,
    #[serde(flatten)]
    pub check: SymmetryCheck,
}

#[derive(Debug, Clone, Serialize)]
pub struct MeanEvidence {
    pub entry: String,
    pub mean: f64,
    pub band: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrelationEvidence {
    pub a: String,
    pub b: String,
    /// Correlation of the entries; `None` if either is constant.
    pub linear: Option<f64>,
    /// Correlation of the squared entries.
    pub squared: Option<f64>,
    pub band: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Step1Record {
    pub offdiag_homogeneous: bool,
    pub offdiag_symmetric: bool,
    pub offdiag_zero_mean: bool,
    pub diag_homogeneous: bool,
    /// Set when some pair of entries is correlated beyond the CLT band.
    pub independence_violated: bool,
    /// Per-test KS level (delta split over all KS tests of this step).
    pub ks_alpha: f64,
    pub offdiag_pairs: Vec<PairEvidence>,
    pub diag_pairs: Vec<PairEvidence>,
    pub symmetry: Vec<SymmetryEvidence>,
    pub means: Vec<MeanEvidence>,
    pub correlations: Vec<CorrelationEvidence>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RotationRecord {
    pub a: f64,
    pub b: f64,
    pub d: f64,
    pub theta: f64,
    /// `(A, B, D)` of the rotated probe.
    pub rotated: (f64, f64, f64),
    /// ECF of `a X11 + 2b X12 + d X22` against the rotated projection.
    pub projection: CfDistance,
    /// `|phi1(a) phi2(2b) phi1(d) - phi1(A) phi2(2B) phi1(D)|` from
    /// single-entry ECFs (`phi1` of `X11` and `X22` in the first and third
    /// slots).
    pub residual: f64,
    /// Delta-method standard error of the residual.
    pub residual_se: f64,
    pub residual_threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Step2Record {
    pub rotation_invariant_2x2: bool,
    pub records: Vec<RotationRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct KPoint {
    pub t: f64,
    pub estimate: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Step3Record {
    pub k_profile: Vec<KPoint>,
    pub k_flat: bool,
    pub k_spread: Option<f64>,
    pub k_mean: Option<f64>,
    pub mu_hat: f64,
    pub sigma2_hat: f64,
    pub diag_variance: f64,
    /// Pooled diagonal variance over `sigma2_hat`; absent when the
    /// off-diagonal variance is degenerate.
    pub diag_var_ratio: Option<f64>,
    pub diag_var_band: Option<f64>,
    pub diag_var_ok: bool,
    pub degenerate_threshold: f64,
    pub degenerate: bool,
    pub gaussian_fit_offdiag: bool,
    pub gaussian_fit_diag: bool,
    pub offdiag_fit: CfDistance,
    pub diag_fit: CfDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Verdict {
    AffineGoe { mu: f64, sigma2: f64 },
    DegenerateDiagonal { mu: f64 },
    NotInvariant,
    Inconclusive { failing_gates: Vec<String> },
}

#[derive(Debug, Clone, Serialize)]
pub struct CharacterizationReport {
    pub dim: usize,
    pub n: usize,
    pub delta: f64,
    pub seed: SeedSpec,
    pub invariance: InvarianceReport,
    pub step1: Step1Record,
    pub step2: Step2Record,
    pub step3: Step3Record,
    pub verdict: Verdict,
}

fn entry_label(j: usize, k: usize) -> String {
    format!("X{}_{}", j + 1, k + 1)
}

fn offdiag_positions(d: usize) -> Vec<(usize, usize)> {
    (0..d)
        .flat_map(|j| ((j + 1)..d).map(move |k| (j, k)))
        .collect()
}

fn check_shape(samples: &SampleSet) -> Result<()> {
    if samples.dim() < 2 {
        return Err(invalid(format!(
            "characterization needs d >= 2, got {}",
            samples.dim()
        )));
    }
    if samples.len() < MIN_SAMPLES {
        return Err(invalid(format!(
            "characterization needs n >= {MIN_SAMPLES}, got {}",
            samples.len()
        )));
    }
    Ok(())
}

fn pair_evidence(
    labels: &[String],
    columns: &[Vec<f64>],
    sorted_cols: &[Vec<f64>],
    ecfs: &[EcfEstimate],
    alpha: f64,
) -> Result<Vec<PairEvidence>> {
    let mut out = Vec::new();
    for i in 0..columns.len() {
        for j in (i + 1)..columns.len() {
            let cf = cf_distance(&ecfs[i], &ecfs[j])?;
            let ks = ks_two_sample_sorted(&sorted_cols[i], &sorted_cols[j])?;
            out.push(PairEvidence {
                a: labels[i].clone(),
                b: labels[j].clone(),
                pass: cf.pass && ks.p_value >= alpha,
                cf,
                ks,
            });
        }
    }
    Ok(out)
}

/// Homogeneity, symmetry, zero mean and an independence sanity check.
pub fn step1_homogeneity(samples: &SampleSet, grid: &TGrid, delta: f64) -> Result<Step1Record> {
    let d = samples.dim();
    if d < 2 {
        return Err(invalid(format!("step 1 needs d >= 2, got {d}")));
    }
    let n = samples.len();
    let off_pos = offdiag_positions(d);
    let off_labels: Vec<String> = off_pos.iter().map(|&(j, k)| entry_label(j, k)).collect();
    let diag_labels: Vec<String> = (0..d).map(|j| entry_label(j, j)).collect();
    let off_cols: Vec<Vec<f64>> = off_pos.iter().map(|&(j, k)| samples.entry(j, k)).collect();
    let diag_cols: Vec<Vec<f64>> = (0..d).map(|j| samples.entry(j, j)).collect();

    let off_pairs = off_cols.len() * off_cols.len().saturating_sub(1) / 2;
    let diag_pairs = d * (d - 1) / 2;
    let ks_tests = off_pairs + diag_pairs + off_cols.len();
    let ks_alpha = delta / ks_tests as f64;

    let off_sorted: Vec<Vec<f64>> = map_indices(off_cols.len(), |i| sorted(&off_cols[i]));
    let diag_sorted: Vec<Vec<f64>> = map_indices(diag_cols.len(), |i| sorted(&diag_cols[i]));
    let off_ecf: Vec<EcfEstimate> = off_cols
        .iter()
        .map(|c| ecf_scalar(c, grid, delta))
        .collect::<Result<_>>()?;
    let diag_ecf: Vec<EcfEstimate> = diag_cols
        .iter()
        .map(|c| ecf_scalar(c, grid, delta))
        .collect::<Result<_>>()?;

    let offdiag_pairs = pair_evidence(&off_labels, &off_cols, &off_sorted, &off_ecf, ks_alpha)?;
    let diag_pair_ev = pair_evidence(&diag_labels, &diag_cols, &diag_sorted, &diag_ecf, ks_alpha)?;

    let symmetry: Vec<SymmetryEvidence> = off_cols
        .iter()
        .zip(&off_labels)
        .map(|(c, label)| {
            // The ECF part keeps the per-record delta; the KS part is split.
            let mut check = entry_symmetry(c, grid, delta)?;
            check.pass = check.max_abs_im <= check.radius && check.ks.p_value >= ks_alpha;
            Ok(SymmetryEvidence {
                entry: label.clone(),
                check,
            })
        })
        .collect::<Result<_>>()?;

    let sqrt_n = (n as f64).sqrt();
    let means: Vec<MeanEvidence> = off_cols
        .iter()
        .zip(&off_labels)
        .map(|(c, label)| {
            let m = mean(c);
            let band = CLT_SIGMAS * variance(c).sqrt() / sqrt_n;
            MeanEvidence {
                entry: label.clone(),
                mean: m,
                band,
                pass: m.abs() <= band,
            }
        })
        .collect();

    let mut all_pos: Vec<(usize, usize)> = Vec::new();
    for j in 0..d {
        for k in j..d {
            all_pos.push((j, k));
        }
    }
    let cols: Vec<Vec<f64>> = all_pos.iter().map(|&(j, k)| samples.entry(j, k)).collect();
    let squares: Vec<Vec<f64>> = cols
        .iter()
        .map(|c| c.iter().map(|v| v * v).collect())
        .collect();
    let band = CLT_SIGMAS / sqrt_n;
    let mut correlations = Vec::new();
    for a in 0..cols.len() {
        for b in (a + 1)..cols.len() {
            let linear = correlation(&cols[a], &cols[b]);
            let squared = correlation(&squares[a], &squares[b]);
            let ok = |r: Option<f64>| r.is_none_or(|r| r.abs() <= band);
            correlations.push(CorrelationEvidence {
                a: entry_label(all_pos[a].0, all_pos[a].1),
                b: entry_label(all_pos[b].0, all_pos[b].1),
                pass: ok(linear) && ok(squared),
                linear,
                squared,
                band,
            });
        }
    }

    Ok(Step1Record {
        offdiag_homogeneous: offdiag_pairs.iter().all(|p| p.pass),
        offdiag_symmetric: symmetry.iter().all(|s| s.check.pass),
        offdiag_zero_mean: means.iter().all(|m| m.pass),
        diag_homogeneous: diag_pair_ev.iter().all(|p| p.pass),
        independence_violated: correlations.iter().any(|c| !c.pass),
        ks_alpha,
        offdiag_pairs,
        diag_pairs: diag_pair_ev,
        symmetry,
        means,
        correlations,
    })
}

/// `(|L - R|, se)` for `L = phi1(a) phi2(2b) phi1(d)` and the rotated `R`,
/// with `phi1` estimated from `x11` in the first slot and `x22` in the third.
fn eq2_residual(
    x11: &[f64],
    x12: &[f64],
    x22: &[f64],
    m: (f64, f64, f64),
    r: (f64, f64, f64),
) -> (f64, f64) {
    let freqs = [
        (x11, m.0),
        (x12, 2.0 * m.1),
        (x22, m.2),
        (x11, r.0),
        (x12, 2.0 * r.1),
        (x22, r.2),
    ];
    let c: Vec<Complex64> = freqs.iter().map(|(xs, s)| ecf_point(xs, *s)).collect();
    let lhs = c[0] * c[1] * c[2];
    let rhs = c[3] * c[4] * c[5];
    let n = x11.len();
    let cis = |x: f64, s: f64| Complex64::from_polar(1.0, s * x);
    let mut sq = 0.0;
    for i in 0..n {
        let z: Vec<Complex64> = freqs
            .iter()
            .enumerate()
            .map(|(q, (xs, s))| cis(xs[i], *s) - c[q])
            .collect();
        let infl_l = z[0] * c[1] * c[2] + c[0] * z[1] * c[2] + c[0] * c[1] * z[2];
        let infl_r = z[3] * c[4] * c[5] + c[3] * z[4] * c[5] + c[3] * c[4] * z[5];
        sq += (infl_l - infl_r).norm_sqr();
    }
    ((lhs - rhs).norm(), (sq / n as f64 / n as f64).sqrt())
}

/// Rotation invariance of the top-left 2x2 block.
pub fn step2_reduce(
    samples: &SampleSet,
    theta_grid: &[f64],
    m2_grid: &[(f64, f64, f64)],
    grid: &TGrid,
    delta: f64,
) -> Result<Step2Record> {
    if samples.dim() < 2 {
        return Err(invalid("step 2 needs d >= 2"));
    }
    if theta_grid.is_empty() || m2_grid.is_empty() {
        return Err(invalid("step 2 needs non-empty theta and probe grids"));
    }
    let x11 = samples.entry(0, 0);
    let x12 = samples.entry(0, 1);
    let x22 = samples.entry(1, 1);
    let project = |(a, b, d): (f64, f64, f64)| -> Vec<f64> {
        x11.iter()
            .zip(&x12)
            .zip(&x22)
            .map(|((p, q), r)| a * p + 2.0 * b * q + d * r)
            .collect()
    };
    let cases: Vec<((f64, f64, f64), f64)> = m2_grid
        .iter()
        .flat_map(|&m| theta_grid.iter().map(move |&th| (m, th)))
        .collect();
    // complex-Gaussian tail bound, split over records
    let z = (2.0 * (2.0 * cases.len() as f64 / delta).ln()).sqrt();

    let records = cases
        .iter()
        .map(|&(m, theta)| {
            let rotated = rotate2_closed_form(Rot2State::new(m.0, m.1, m.2, theta));
            let e0 = ecf_scalar(&project(m), grid, delta)?;
            let e1 = ecf_scalar(&project(rotated), grid, delta)?;
            let projection = cf_distance(&e0, &e1)?;
            let (residual, residual_se) = eq2_residual(&x11, &x12, &x22, m, rotated);
            let residual_threshold = z * residual_se + 1e-12;
            Ok(RotationRecord {
                a: m.0,
                b: m.1,
                d: m.2,
                theta,
                rotated,
                pass: projection.pass && residual <= residual_threshold,
                projection,
                residual,
                residual_se,
                residual_threshold,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Step2Record {
        rotation_invariant_2x2: records.iter().all(|r| r.pass),
        records,
    })
}

fn pooled_offdiag(samples: &SampleSet) -> Vec<f64> {
    offdiag_positions(samples.dim())
        .into_iter()
        .flat_map(|(j, k)| samples.entry(j, k))
        .collect()
}

fn pooled_diag(samples: &SampleSet) -> Vec<f64> {
    (0..samples.dim())
        .flat_map(|j| samples.entry(j, j))
        .collect()
}

/// `k(t) = -(1/t) phi2'(2t) / phi2(2t)` from the pooled off-diagonal ECF on an
/// equispaced grid of spacing `h`; every `2t` must be a multiple of `h`.
pub fn step3_k_profile(
    samples: &SampleSet,
    t_points: &[f64],
    h: f64,
    delta: f64,
) -> Result<Vec<(f64, f64)>> {
    let grid = k_profile_grid(t_points, h)?;
    let e = ecf_scalar(&pooled_offdiag(samples), &grid, delta)?;
    t_points
        .iter()
        .map(|&t| Ok((t, -log_cf_derivative_ratio(&e, t, true)?)))
        .collect()
}

fn k_profile_grid(t_points: &[f64], h: f64) -> Result<TGrid> {
    if !(h > 0.0) {
        return Err(invalid("finite-difference step must be positive"));
    }
    for &t in t_points {
        let ratio = 2.0 * t / h;
        if !(t > 0.0) || (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(invalid(format!(
                "2t = {} is not a positive multiple of h = {h}",
                2.0 * t
            )));
        }
    }
    let max_t = t_points.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    let steps = (2.0 * max_t / h).round() as usize + 1;
    TGrid::uniform(steps as f64 * h, 2 * steps + 1)
}

/// `max - min` of the profile estimates.
pub fn k_spread(profile: &[(f64, f64)]) -> f64 {
    let (lo, hi) = profile
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, k)| {
            (lo.min(*k), hi.max(*k))
        });
    hi - lo
}

/// Pooled estimates and normal-CF fits of both marginals.
pub fn step3_fit(samples: &SampleSet, grid: &TGrid, delta: f64) -> Result<Step3Record> {
    let n = samples.len();
    let off = pooled_offdiag(samples);
    let diag = pooled_diag(samples);
    if off.is_empty() {
        return Err(invalid("step 3 needs d >= 2"));
    }
    let mu_hat = mean(&diag);
    let sigma2_hat = variance(&off);
    let diag_variance = variance(&diag);
    let degenerate_threshold = 4.0 / (n as f64).sqrt();
    let degenerate = sigma2_hat <= degenerate_threshold;

    let (diag_var_ratio, diag_var_band, diag_var_ok) = if degenerate {
        (None, None, diag_variance <= degenerate_threshold)
    } else {
        let ratio = diag_variance / sigma2_hat;
        let rel_d = variance_std_error(&diag) / diag_variance;
        let rel_o = variance_std_error(&off) / sigma2_hat;
        let band = CLT_SIGMAS * ratio * (rel_d * rel_d + rel_o * rel_o).sqrt();
        (Some(ratio), Some(band), (ratio - 2.0).abs() <= band)
    };

    let off_ecf = ecf_scalar(&off, grid, delta)?;
    let diag_ecf = ecf_scalar(&diag, grid, delta)?;
    let off_model = EcfEstimate::from_cf(grid, |t| {
        normal_cf(0.0, sigma2_hat, t).expect("variance >= 0")
    });
    let diag_model = EcfEstimate::from_cf(grid, |t| {
        normal_cf(mu_hat, 2.0 * sigma2_hat, t).expect("variance >= 0")
    });
    let offdiag_fit = cf_distance(&off_ecf, &off_model)?;
    let diag_fit = cf_distance(&diag_ecf, &diag_model)?;

    Ok(Step3Record {
        k_profile: Vec::new(),
        k_flat: false,
        k_spread: None,
        k_mean: None,
        mu_hat,
        sigma2_hat,
        diag_variance,
        diag_var_ratio,
        diag_var_band,
        diag_var_ok,
        degenerate_threshold,
        degenerate,
        gaussian_fit_offdiag: offdiag_fit.pass,
        gaussian_fit_diag: diag_fit.pass,
        offdiag_fit,
        diag_fit,
    })
}

/// Runs the whole pipeline on a fixed sample.
pub fn characterize_samples(
    samples: &SampleSet,
    config: &CharacterizeConfig,
) -> Result<CharacterizationReport> {
    check_shape(samples)?;
    let d = samples.dim();
    let grid = &config.grid;
    let delta = config.delta;

    let family = default_orthogonal_family(d, config.haar_count, config.seed)?;
    let probes = default_probes(d, config.random_probes, config.seed)?;
    let invariance =
        test_conjugation_invariance_on_samples(samples, &family, &probes, grid, delta)?;

    let step1 = step1_homogeneity(samples, grid, delta)?;
    let step2 = step2_reduce(samples, &config.theta_grid, &config.m2_grid, grid, delta)?;
    let mut step3 = step3_fit(samples, grid, delta)?;

    let h = grid
        .spacing()
        .ok_or_else(|| invalid("characterization needs an equispaced t-grid"))?;
    match step3_k_profile(samples, &config.k_t_points, h, delta) {
        Ok(profile) => {
            let spread = k_spread(&profile);
            step3.k_flat = spread <= config.flatness_tol;
            step3.k_spread = Some(spread);
            step3.k_mean = Some(profile.iter().map(|p| p.1).sum::<f64>() / profile.len() as f64);
            step3.k_profile = profile
                .into_iter()
                .map(|(t, k)| KPoint {
                    t,
                    estimate: Some(k),
                    error: None,
                })
                .collect();
        }
        Err(err) => {
            step3.k_flat = false;
            step3.k_profile = config
                .k_t_points
                .iter()
                .map(|&t| KPoint {
                    t,
                    estimate: None,
                    error: Some(err.to_string()),
                })
                .collect();
        }
    }

    let verdict = decide(&invariance, &step1, &step2, &step3);
    Ok(CharacterizationReport {
        dim: d,
        n: samples.len(),
        delta,
        seed: config.seed,
        invariance,
        step1,
        step2,
        step3,
        verdict,
    })
}

/// Samples `n` draws of `spec` with `seed` and characterizes them.
pub fn characterize(
    spec: &EnsembleSpec,
    n: usize,
    seed: SeedSpec,
    config: &CharacterizeConfig,
) -> Result<CharacterizationReport> {
    let samples = sample_batch(spec, n, seed)?;
    characterize_samples(&samples, config)
}

fn decide(
    invariance: &InvarianceReport,
    s1: &Step1Record,
    s2: &Step2Record,
    s3: &Step3Record,
) -> Verdict {
    if !invariance.overall_pass {
        return Verdict::NotInvariant;
    }
    let gates = [
        ("offdiag_homogeneous", s1.offdiag_homogeneous),
        ("offdiag_symmetric", s1.offdiag_symmetric),
        ("offdiag_zero_mean", s1.offdiag_zero_mean),
        ("diag_homogeneous", s1.diag_homogeneous),
        ("independence", !s1.independence_violated),
        ("rotation_invariant_2x2", s2.rotation_invariant_2x2),
        ("k_flat", s3.k_flat),
        ("diag_var_ratio", s3.diag_var_ok),
        ("gaussian_fit_offdiag", s3.gaussian_fit_offdiag),
        ("gaussian_fit_diag", s3.gaussian_fit_diag),
    ];
    let failing: Vec<String> = gates
        .iter()
        .filter(|g| !g.1)
        .map(|g| g.0.to_string())
        .collect();
    if !failing.is_empty() {
        return Verdict::Inconclusive {
            failing_gates: failing,
        };
    }
    if s3.degenerate {
        Verdict::DegenerateDiagonal { mu: s3.mu_hat }
    } else {
        Verdict::AffineGoe {
            mu: s3.mu_hat,
            sigma2: s3.sigma2_hat,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{sample_standard_normals, EnsembleKind};

    fn affine(mu: f64, scale: f64, d: usize) -> EnsembleSpec {
        EnsembleSpec::new(EnsembleKind::AffineGoe { mu, scale }, d).unwrap()
    }

    #[test]
    fn step1_on_affine_goe_passes_all_gates() {
        let samples = sample_batch(&affine(1.5, 0.5, 3), 200_000, SeedSpec::new(31, 0)).unwrap();
        let s1 = step1_homogeneity(&samples, &TGrid::default(), 0.01).unwrap();
        assert!(
            s1.offdiag_homogeneous
                && s1.offdiag_symmetric
                && s1.offdiag_zero_mean
                && s1.diag_homogeneous
        );
        assert!(!s1.independence_violated);
        assert_eq!(s1.offdiag_pairs.len(), 3);
        assert_eq!(s1.diag_pairs.len(), 3);
    }

    #[test]
    fn step1_detects_heterogeneous_offdiagonal_scales() {
        // X12 ~ N(0, 1) but X13 ~ N(0, 4)
        let mut samples =
            sample_batch(&EnsembleSpec::goe(3), 50_000, SeedSpec::new(32, 0)).unwrap();
        let d = 3;
        let idx = crate::symcore::packed_index(d, 0, 2);
        let mut data = samples.packed_data().to_vec();
        for row in data.chunks_exact_mut(crate::symcore::packed_len(d)) {
            row[idx] *= 2.0;
        }
        samples = SampleSet::from_packed(d, data).unwrap();
        let s1 = step1_homogeneity(&samples, &TGrid::default(), 0.01).unwrap();
        assert!(!s1.offdiag_homogeneous);
        // closed-form CF gap at t = 1
        let gap = (-0.5f64).exp() - (-2.0f64).exp();
        assert!((gap - 0.47).abs() < 0.01);
        let worst = s1
            .offdiag_pairs
            .iter()
            .map(|p| p.cf.sup_dist)
            .fold(0.0, f64::max);
        assert!(worst > 0.3);
    }

    #[test]
    fn step1_d2_is_vacuous_for_offdiag_pairs() {
        let samples = sample_batch(&EnsembleSpec::goe(2), 20_000, SeedSpec::new(33, 0)).unwrap();
        let s1 = step1_homogeneity(&samples, &TGrid::default(), 0.01).unwrap();
        assert!(s1.offdiag_pairs.is_empty());
        assert!(s1.offdiag_homogeneous);
        assert_eq!(s1.symmetry.len(), 1);
        assert!(step1_homogeneity(
            &SampleSet::from_packed(1, vec![1.0; 10]).unwrap(),
            &TGrid::default(),
            0.01
        )
        .is_err());
    }

    #[test]
    fn step2_goe_and_uniform() {
        let cfg = CharacterizeConfig::default();
        let g = TGrid::default();
        let goe = sample_batch(&EnsembleSpec::goe(2), 200_000, SeedSpec::new(34, 0)).unwrap();
        let s2 = step2_reduce(&goe, &cfg.theta_grid, &cfg.m2_grid, &g, 0.01).unwrap();
        assert!(
            s2.rotation_invariant_2x2,
            "{:?}",
            s2.records.iter().filter(|r| !r.pass).collect::<Vec<_>>()
        );
        for r in s2.records.iter().filter(|r| r.theta == 0.0) {
            assert_eq!(r.residual, 0.0);
            assert_eq!(r.projection.sup_dist, 0.0);
        }

        let uni = sample_batch(
            &EnsembleSpec {
                kind: EnsembleKind::UniformSym,
                dim: 2,
            },
            200_000,
            SeedSpec::new(34, 1),
        )
        .unwrap();
        let s2 = step2_reduce(
            &uni,
            &[std::f64::consts::FRAC_PI_4],
            &[(1.0, 1.0, 0.0)],
            &g,
            0.01,
        )
        .unwrap();
        let r = &s2.records[0];
        assert!(r.residual > r.residual_threshold, "{r:?}");
        assert!(!s2.rotation_invariant_2x2);
    }

    #[test]
    fn eq2_residual_uniform_matches_closed_form() {
        // Independent oracle: closed-form uniform CFs.
        let phi1 = |x: f64| crate::cf::uniform_cf(6f64.sqrt(), x).re;
        let phi2 = |x: f64| crate::cf::uniform_cf(3f64.sqrt(), x).re;
        let (a, b, d) = (1.0, 1.0, 0.0);
        let (ra, rb, rd) =
            rotate2_closed_form(Rot2State::new(a, b, d, std::f64::consts::FRAC_PI_4));
        let exact =
            (phi1(a) * phi2(2.0 * b) * phi1(d) - phi1(ra) * phi2(2.0 * rb) * phi1(rd)).abs();
        let uni = sample_batch(
            &EnsembleSpec {
                kind: EnsembleKind::UniformSym,
                dim: 2,
            },
            200_000,
            SeedSpec::new(35, 0),
        )
        .unwrap();
        let (res, se) = eq2_residual(
            &uni.entry(0, 0),
            &uni.entry(0, 1),
            &uni.entry(1, 1),
            (a, b, d),
            (ra, rb, rd),
        );
        assert!(
            (res - exact).abs() < 5.0 * se,
            "res {res} exact {exact} se {se}"
        );
    }

    #[test]
    fn k_profile_goe_affine_and_degenerate() {
        let goe = sample_batch(&EnsembleSpec::goe(3), 200_000, SeedSpec::new(36, 0)).unwrap();
        let prof = step3_k_profile(&goe, &[0.2, 0.4, 0.6], 0.2, 0.01).unwrap();
        for (t, k) in &prof {
            assert!((k - 2.0).abs() <= 0.15, "t={t} k={k}");
        }
        assert!(k_spread(&prof) <= 0.3);

        let aff = sample_batch(&affine(0.7, 0.5, 3), 200_000, SeedSpec::new(36, 1)).unwrap();
        for (t, k) in step3_k_profile(&aff, &[0.2, 0.4, 0.6], 0.2, 0.01).unwrap() {
            assert!((k - 0.5).abs() <= 0.15, "t={t} k={k}");
        }

        let zero = sample_batch(&affine(2.0, 0.0, 3), 20_000, SeedSpec::new(36, 2)).unwrap();
        for (_, k) in step3_k_profile(&zero, &[0.2, 0.4, 0.6], 0.2, 0.01).unwrap() {
            assert!(k.abs() <= 0.4);
        }
        assert!(step3_k_profile(&goe, &[0.25], 0.2, 0.01).is_err());
        assert!(step3_k_profile(&goe, &[0.0], 0.2, 0.01).is_err());
    }

    #[test]
    fn k_profile_rejects_region_where_cf_vanishes() {
        // off-diagonal variance 9: phi2(1.2) = exp(-6.5) is below the floor
        let wide = sample_batch(&affine(0.0, 3.0, 2), 20_000, SeedSpec::new(37, 0)).unwrap();
        let err = step3_k_profile(&wide, &[0.6], 0.2, 0.01).unwrap_err();
        assert!(matches!(err, crate::Error::UnreliableRegion(_)));
    }

    #[test]
    fn step3_fit_uniform_fails_gaussian_gate() {
        let uni = sample_batch(
            &EnsembleSpec {
                kind: EnsembleKind::UniformSym,
                dim: 3,
            },
            100_000,
            SeedSpec::new(38, 0),
        )
        .unwrap();
        let s3 = step3_fit(&uni, &TGrid::default(), 0.01).unwrap();
        assert!(!s3.gaussian_fit_offdiag);
        assert!(s3.offdiag_fit.t_at_sup.abs() >= 1.5, "{:?}", s3.offdiag_fit);
    }

    #[test]
    fn zero_offdiag_with_diag_spread_is_inconclusive() {
        // diagonal N(0, 1), off-diagonal exactly 0
        let n = 20_000;
        let diag = sample_standard_normals(3 * n, SeedSpec::new(39, 0));
        let mut data = Vec::with_capacity(n * 6);
        for i in 0..n {
            data.extend_from_slice(&[diag[3 * i], 0.0, 0.0, diag[3 * i + 1], 0.0, diag[3 * i + 2]]);
        }
        let samples = SampleSet::from_packed(3, data).unwrap();
        let report = characterize_samples(
            &samples,
            &CharacterizeConfig {
                haar_count: 0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(report.step3.degenerate);
        assert!(!report.step3.diag_var_ok);
        assert!(!matches!(
            report.verdict,
            Verdict::AffineGoe { .. } | Verdict::DegenerateDiagonal { .. }
        ));
    }

    #[test]
    fn pipeline_rejects_small_inputs() {
        let small = sample_batch(&EnsembleSpec::goe(3), 100, SeedSpec::new(1, 0)).unwrap();
        assert!(characterize_samples(&small, &CharacterizeConfig::default()).is_err());
        let one = SampleSet::from_packed(1, vec![0.0; 20_000]).unwrap();
        assert!(characterize_samples(&one, &CharacterizeConfig::default()).is_err());
    }
}
