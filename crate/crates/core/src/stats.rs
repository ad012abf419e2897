//! Small descriptive statistics and the two-sample Kolmogorov-Smirnov test.

use serde::Serialize;

use crate::error::{invalid, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; 0 for fewer than two samples.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Standard error of the sample variance, `sqrt((m4 - s^4) / n)`, from the
/// empirical fourth central moment.
pub fn variance_std_error(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = mean(xs);
    let (m2, m4) = xs.iter().fold((0.0, 0.0), |(a, b), x| {
        let c = (x - m) * (x - m);
        (a + c, b + c * c)
    });
    let (m2, m4) = (m2 / n, m4 / n);
    ((m4 - m2 * m2).max(0.0) / n).sqrt()
}

/// Pearson correlation; `None` when either sample has zero variance.
pub fn correlation(xs: &[f64], ys: &[f64]) -> Option<f64> {
    debug_assert_eq!(xs.len(), ys.len());
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        None
    } else {
        Some(sxy / (sxx * syy).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let p = if lambda < 1.18 {
        // Jacobi-theta form converges fast for small lambda.
        let c = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let sum: f64 = (1..=20)
            .map(|k| {
                let odd = (2 * k - 1) as f64;
                (-odd * odd * c).exp()
            })
            .sum();
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * sum
    } else {
        let sum: f64 = (1..=100)
            .map(|k| {
                let kf = k as f64;
                let term = (-2.0 * kf * kf * lambda * lambda).exp();
                if k % 2 == 1 {
                    term
                } else {
                    -term
                }
            })
            .sum();
        2.0 * sum
    };
    p.clamp(0.0, 1.0)
}

/// `sup |F_x - F_y|` for sorted samples.
pub fn ks_statistic_sorted(xs: &[f64], ys: &[f64]) -> f64 {
    let (n, m) = (xs.len(), ys.len());
    let (nf, mf) = (n as f64, m as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = xs[i].min(ys[j]);
        while i < n && xs[i] <= v {
            i += 1;
        }
        while j < m && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / nf - j as f64 / mf).abs());
    }
    d
}

/// Two-sample KS test on pre-sorted samples; asymptotic p-value with
/// effective size `n m / (n + m)`.
pub fn ks_two_sample_sorted(xs: &[f64], ys: &[f64]) -> Result<KsResult> {
    if xs.is_empty() || ys.is_empty() {
        return Err(invalid("KS test needs two non-empty samples"));
    }
    let statistic = ks_statistic_sorted(xs, ys);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let effective = n * m / (n + m);
    Ok(KsResult {
        statistic,
        p_value: kolmogorov_survival(effective.sqrt() * statistic),
    })
}

pub fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    v
}

/// Two-sample Kolmogorov-Smirnov test.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> Result<KsResult> {
    if xs.iter().chain(ys).any(|v| v.is_nan()) {
        return Err(invalid("KS test input contains NaN"));
    }
    ks_two_sample_sorted(&sorted(xs), &sorted(ys))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::sample_standard_normals;
    use crate::rng::SeedSpec;

    #[test]
    fn ks_identical_samples() {
        let xs = sample_standard_normals(500, SeedSpec::new(1, 0));
        let r = ks_two_sample(&xs, &xs).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn ks_disjoint_point_masses() {
        let r = ks_two_sample(&[0.0; 1000], &[1.0; 1000]).unwrap();
        assert_eq!(r.statistic, 1.0);
        assert!(r.p_value < 1e-100);
    }

    #[test]
    fn ks_signed_zero_ties() {
        let r = ks_two_sample(&[0.0; 10], &[-0.0; 10]).unwrap();
        assert_eq!(r.statistic, 0.0);
    }

    #[test]
    fn ks_detects_mean_shift() {
        let xs = sample_standard_normals(10_000, SeedSpec::new(2, 0));
        let ys: Vec<f64> = sample_standard_normals(10_000, SeedSpec::new(2, 1))
            .into_iter()
            .map(|y| y + 0.5)
            .collect();
        let r = ks_two_sample(&xs, &ys).unwrap();
        assert!(r.p_value < 1e-6, "{r:?}");
    }

    #[test]
    fn ks_errors() {
        assert!(ks_two_sample(&[], &[1.0]).is_err());
        assert!(ks_two_sample(&[1.0], &[]).is_err());
        assert!(ks_two_sample(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn kolmogorov_survival_reference_values() {
        // Standard critical values of the Kolmogorov distribution.
        assert!((kolmogorov_survival(1.3581) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_survival(1.6276) - 0.01).abs() < 1e-3);
        assert!((kolmogorov_survival(1.2238) - 0.10).abs() < 1e-3);
        // both series agree at the switch point
        let below = kolmogorov_survival(1.18 - 1e-12);
        let above = kolmogorov_survival(1.18);
        assert!((below - above).abs() < 1e-9);
        assert_eq!(kolmogorov_survival(0.0), 1.0);
    }

    #[test]
    fn moments_and_correlation() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((variance(&xs) - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(correlation(&xs, &[2.0, 4.0, 6.0, 8.0]), Some(1.0));
        assert_eq!(correlation(&xs, &[1.0; 4]), None);
        let normals = sample_standard_normals(200_000, SeedSpec::new(3, 0));
        // Var(s^2) = 2 sigma^4 / n for normals
        let se = variance_std_error(&normals);
        assert!((se - (2.0f64 / 200_000.0).sqrt()).abs() < 2e-4, "{se}");
    }
}
