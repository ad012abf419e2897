use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use num_complex::Complex64;
use serde::Serialize;

use rmt_core::cf::{ecf_scalar, ecf_trace, normal_cf, product_form_cf, uniform_cf, TGrid};
use rmt_core::characterize::{characterize_samples, CharacterizeConfig, Verdict};
use rmt_core::ensembles::{
    read_samples_csv, sample_batch, write_samples_csv, EnsembleKind, EnsembleSpec, SampleSet,
};
use rmt_core::invariance::{
    default_orthogonal_family, default_probes, test_conjugation_invariance,
};
use rmt_core::plot::modulus_svg;
use rmt_core::report::write_envelope;
use rmt_core::rng::SeedSpec;
use rmt_core::symcore::identities::{run_identity_suite, IdentityReport};
use rmt_core::symcore::{probe_diag, probe_offdiag, SymMatrix};

use crate::{Command, EnsembleArgs, EnsembleName, GridArgs, SourceArgs, TestArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    fn from_pass(pass: bool) -> Self {
        if pass {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }
}

/// Applies `RMT_THREADS` (0 or unset = one thread per core).
pub fn configure_threads() -> Result<()> {
    match std::env::var("RMT_THREADS") {
        Ok(raw) => {
            let threads: usize = raw.trim().parse().with_context(|| {
                format!("RMT_THREADS must be a non-negative integer, got {raw:?}")
            })?;
            rmt_core::par::init_threads(threads).map_err(anyhow::Error::msg)
        }
        Err(_) => Ok(()),
    }
}

pub fn run(command: Command) -> Result<Outcome> {
    match command {
        Command::Sample { ensemble, output } => cmd_sample(&ensemble, output.as_deref()),
        Command::VerifyForward { ensemble, test } => cmd_verify_forward(&ensemble, &test),
        Command::Characterize { source, test, plot } => {
            cmd_characterize(&source, &test, plot.as_deref())
        }
        Command::ProbeCf {
            source,
            probe,
            grid,
            delta,
            output,
            plot,
        } => cmd_probe_cf(
            &source,
            &probe,
            &grid,
            delta,
            output.as_deref(),
            plot.as_deref(),
        ),
        Command::Identities { fd_step, output } => cmd_identities(fd_step, output.as_deref()),
    }
}

#[derive(Debug, Serialize)]
struct GridConfig {
    t_max: f64,
    points: usize,
}

#[derive(Debug, Serialize)]
struct RunConfig<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    ensemble: Option<EnsembleSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<&'a Path>,
    n: usize,
    seed: SeedSpec,
    grid: GridConfig,
    delta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    haar_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    random_probes: Option<usize>,
}

fn ensemble_spec(args: &EnsembleArgs) -> Result<EnsembleSpec> {
    let kind = match args.ensemble {
        EnsembleName::Goe => EnsembleKind::Goe,
        EnsembleName::AffineGoe => {
            if !(args.scale2 >= 0.0) || !args.scale2.is_finite() {
                bail!("--scale2 must be finite and >= 0, got {}", args.scale2);
            }
            EnsembleKind::AffineGoe {
                mu: args.mu,
                scale: args.scale2.sqrt(),
            }
        }
        EnsembleName::UniformSym => EnsembleKind::UniformSym,
        EnsembleName::SymHaar => EnsembleKind::SymHaar,
    };
    Ok(EnsembleSpec::new(kind, args.dim)?)
}

fn seed_of(args: &EnsembleArgs) -> SeedSpec {
    SeedSpec::new(args.seed, args.stream)
}

fn grid_of(args: &GridArgs) -> Result<TGrid> {
    Ok(TGrid::uniform(args.t_max, args.points)?)
}

fn grid_config(args: &GridArgs) -> GridConfig {
    GridConfig {
        t_max: args.t_max,
        points: args.points,
    }
}

/// Samples from the ensemble flags, or reads `--input`.
fn load_samples(source: &SourceArgs) -> Result<(SampleSet, Option<EnsembleSpec>)> {
    match &source.input {
        Some(path) => {
            let file =
                File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
            let samples = read_samples_csv(BufReader::new(file))
                .with_context(|| format!("cannot read {}", path.display()))?;
            Ok((samples, None))
        }
        None => {
            let spec = ensemble_spec(&source.ensemble)?;
            Ok((
                sample_batch(&spec, source.ensemble.n, seed_of(&source.ensemble))?,
                Some(spec),
            ))
        }
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_report<C: Serialize, R: Serialize>(
    path: Option<&Path>,
    command: &str,
    config: &C,
    report: &R,
    started: Instant,
) -> Result<()> {
    let timing_ms = started.elapsed().as_secs_f64() * 1e3;
    let mut out = open_output(path)?;
    write_envelope(&mut out, command, config, report, timing_ms)?;
    out.flush()?;
    Ok(())
}

fn write_svg(path: &Path, svg: &str) -> Result<()> {
    std::fs::write(path, svg).with_context(|| format!("cannot write {}", path.display()))
}

fn cmd_sample(args: &EnsembleArgs, output: Option<&Path>) -> Result<Outcome> {
    if args.n < 2 {
        bail!("--n must be at least 2, got {}", args.n);
    }
    let spec = ensemble_spec(args)?;
    let samples = sample_batch(&spec, args.n, seed_of(args))?;
    let mut out = open_output(output)?;
    write_samples_csv(&samples, &mut out)?;
    out.flush()?;
    Ok(Outcome::Pass)
}

fn cmd_verify_forward(args: &EnsembleArgs, test: &TestArgs) -> Result<Outcome> {
    let started = Instant::now();
    let spec = ensemble_spec(args)?;
    if spec.dim < 2 {
        bail!("invariance tests need --dim >= 2, got {}", spec.dim);
    }
    let grid = grid_of(&test.grid)?;
    let seed = seed_of(args);
    let family = default_orthogonal_family(spec.dim, test.haar_count, seed)?;
    let probes = default_probes(spec.dim, test.random_probes, seed)?;
    let report =
        test_conjugation_invariance(&spec, args.n, &family, &probes, &grid, test.delta, seed)?;

    let config = RunConfig {
        ensemble: Some(spec),
        input: None,
        n: args.n,
        seed,
        grid: grid_config(&test.grid),
        delta: test.delta,
        haar_count: Some(test.haar_count),
        random_probes: Some(test.random_probes),
    };
    write_report(
        test.output.as_deref(),
        "verify-forward",
        &config,
        &report,
        started,
    )?;

    let failures: Vec<_> = report.failures().collect();
    if failures.is_empty() {
        eprintln!("invariance: pass ({} records)", report.records.len());
    } else {
        eprintln!(
            "invariance: FAIL ({} of {} records)",
            failures.len(),
            report.records.len()
        );
        for rec in failures.iter().take(10) {
            eprintln!(
                "  probe {} under {}: same-batch {:.4} / {:.4}, independent {:.4} / {:.4}",
                rec.probe,
                rec.orthogonal,
                rec.same_batch.sup_dist,
                rec.same_batch.threshold,
                rec.independent.sup_dist,
                rec.independent.threshold
            );
        }
    }
    Ok(Outcome::from_pass(report.overall_pass))
}

fn cmd_characterize(source: &SourceArgs, test: &TestArgs, plot: Option<&Path>) -> Result<Outcome> {
    let started = Instant::now();
    let (samples, spec) = load_samples(source)?;
    let seed = seed_of(&source.ensemble);
    let config = CharacterizeConfig {
        grid: grid_of(&test.grid)?,
        delta: test.delta,
        haar_count: test.haar_count,
        random_probes: test.random_probes,
        seed,
        ..CharacterizeConfig::default()
    };
    let report = characterize_samples(&samples, &config)?;

    let run_config = RunConfig {
        ensemble: spec,
        input: source.input.as_deref(),
        n: samples.len(),
        seed,
        grid: grid_config(&test.grid),
        delta: test.delta,
        haar_count: Some(test.haar_count),
        random_probes: Some(test.random_probes),
    };
    write_report(
        test.output.as_deref(),
        "characterize",
        &run_config,
        &report,
        started,
    )?;

    if let Some(path) = plot {
        let d = samples.dim();
        let pooled: Vec<f64> = (0..d)
            .flat_map(|j| ((j + 1)..d).map(move |k| (j, k)))
            .flat_map(|(j, k)| samples.entry(j, k))
            .collect();
        let e = ecf_scalar(&pooled, &config.grid, config.delta)?;
        let s2 = report.step3.sigma2_hat;
        let fitted: Vec<f64> = config
            .grid
            .points()
            .iter()
            .map(|t| (-0.5 * s2 * t * t).exp())
            .collect();
        write_svg(
            path,
            &modulus_svg(
                &e,
                Some(&fitted),
                "pooled off-diagonal |ECF| and fitted normal CF",
            ),
        )?;
    }

    eprintln!("verdict: {}", describe(&report.verdict));
    if report.step1.independence_violated {
        eprintln!("independence sanity check: violated");
    }
    Ok(Outcome::from_pass(matches!(
        report.verdict,
        Verdict::AffineGoe { .. } | Verdict::DegenerateDiagonal { .. }
    )))
}

fn describe(v: &Verdict) -> String {
    match v {
        Verdict::AffineGoe { mu, sigma2 } => {
            format!("affine GOE, mu = {mu:.6}, sigma^2 = {sigma2:.6}")
        }
        Verdict::DegenerateDiagonal { mu } => format!("degenerate, X = {mu} I"),
        Verdict::NotInvariant => "not conjugation invariant".into(),
        Verdict::Inconclusive { failing_gates } => {
            format!("inconclusive, failing: {}", failing_gates.join(", "))
        }
    }
}

/// Parses `offdiag:K,J` or `diag:J` into a unit-scale probe.
fn parse_probe(text: &str, d: usize) -> Result<SymMatrix> {
    let (kind, rest) = text
        .split_once(':')
        .with_context(|| format!("probe {text:?} must be offdiag:K,J or diag:J"))?;
    let nums: Vec<usize> = rest
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("bad probe indices in {text:?}"))?;
    Ok(match (kind, nums.as_slice()) {
        ("offdiag", [k, j]) => probe_offdiag(d, *k, *j, 1.0)?,
        ("diag", [j]) => probe_diag(d, *j, 1.0)?,
        _ => bail!("probe {text:?} must be offdiag:K,J or diag:J"),
    })
}

/// Closed-form CF of `t -> Tr(probe X)` where the ensemble has independent entries.
fn model_cf(spec: &EnsembleSpec, probe: &SymMatrix, t: f64) -> Option<Complex64> {
    let m = probe.scaled(t);
    match spec.kind {
        EnsembleKind::Goe | EnsembleKind::AffineGoe { .. } => {
            let (mu, s2) = match spec.kind {
                EnsembleKind::AffineGoe { mu, scale } => (mu, scale * scale),
                _ => (0.0, 1.0),
            };
            let diag = |s| normal_cf(mu, 2.0 * s2, s).expect("variance >= 0");
            let off = |s| normal_cf(0.0, s2, s).expect("variance >= 0");
            Some(product_form_cf(diag, off, &m))
        }
        EnsembleKind::UniformSym => Some(product_form_cf(
            |s| uniform_cf(6f64.sqrt(), s),
            |s| uniform_cf(3f64.sqrt(), s),
            &m,
        )),
        EnsembleKind::SymHaar => None,
    }
}

fn cmd_probe_cf(
    source: &SourceArgs,
    probe: &str,
    grid: &GridArgs,
    delta: f64,
    output: Option<&Path>,
    plot: Option<&Path>,
) -> Result<Outcome> {
    let (samples, spec) = load_samples(source)?;
    let p = parse_probe(probe, samples.dim())?;
    let grid = grid_of(grid)?;
    let e = ecf_trace(&samples, &p, &grid, delta)?;
    let mut out = open_output(output)?;
    e.write_csv(&mut out)?;
    out.flush()?;
    if let Some(path) = plot {
        let reference: Option<Vec<f64>> = spec.and_then(|s| {
            grid.points()
                .iter()
                .map(|&t| model_cf(&s, &p, t).map(|z| z.norm()))
                .collect()
        });
        write_svg(
            path,
            &modulus_svg(&e, reference.as_deref(), &format!("|ECF| of probe {probe}")),
        )?;
    }
    Ok(Outcome::Pass)
}

fn identities_outcome(report: &IdentityReport) -> Outcome {
    Outcome::from_pass(report.all_pass)
}

fn print_identities(report: &IdentityReport) {
    println!(
        "{:<28} {:>6} {:>12} {:>10}  result",
        "check", "cases", "max_resid", "tol"
    );
    for c in &report.checks {
        println!(
            "{:<28} {:>6} {:>12.3e} {:>10.0e}  {}",
            c.name,
            c.cases,
            c.max_residual,
            c.tolerance,
            if c.pass { "pass" } else { "FAIL" }
        );
    }
}

fn cmd_identities(fd_step: f64, output: Option<&Path>) -> Result<Outcome> {
    let started = Instant::now();
    if !(fd_step > 0.0) || !fd_step.is_finite() {
        bail!("--fd-step must be positive, got {fd_step}");
    }
    let report = run_identity_suite(fd_step);
    print_identities(&report);
    if let Some(path) = output {
        #[derive(Serialize)]
        struct Config {
            fd_step: f64,
        }
        write_report(
            Some(path),
            "identities",
            &Config { fd_step },
            &report,
            started,
        )?;
    }
    Ok(identities_outcome(&report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rmt_core::symcore::identities::run_identity_suite_with;
    use rmt_core::symcore::{rotate2_closed_form, Rot2State};

    fn sign_flipped(s: Rot2State) -> (f64, f64, f64) {
        let (a, b, d) = rotate2_closed_form(s);
        (a, -b, d)
    }

    #[test]
    fn corrupted_closed_form_fails_the_identities_command() {
        let report = run_identity_suite_with(1e-4, sign_flipped);
        assert_eq!(identities_outcome(&report), Outcome::Fail);
        assert_eq!(identities_outcome(&run_identity_suite(1e-4)), Outcome::Pass);
    }

    #[test]
    fn probe_parsing() {
        assert_eq!(
            parse_probe("offdiag:1,3", 3).unwrap(),
            probe_offdiag(3, 1, 3, 1.0).unwrap()
        );
        assert_eq!(
            parse_probe("diag:2", 3).unwrap(),
            probe_diag(3, 2, 1.0).unwrap()
        );
        for bad in [
            "offdiag:2,1",
            "diag:4",
            "offdiag:1",
            "foo:1",
            "diag",
            "diag:x",
        ] {
            assert!(parse_probe(bad, 3).is_err(), "{bad}");
        }
    }

    #[test]
    fn model_cf_matches_known_values() {
        let p = probe_offdiag(3, 1, 2, 1.0).unwrap();
        let goe = EnsembleSpec::goe(3);
        let z = model_cf(&goe, &p, 0.5).unwrap();
        assert!((z.re - (-0.5f64).exp()).abs() < 1e-15);
        let haar = EnsembleSpec {
            kind: EnsembleKind::SymHaar,
            dim: 3,
        };
        assert!(model_cf(&haar, &p, 0.5).is_none());
    }
}
