//! Deterministic identity suite for the 2x2 rotation formulas and the trace
//! pairing. Everything here is exact algebra checked at floating-point
//! tolerance; no statistics involved.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    conjugate, identity_theta_grid, matmul, rotate2_closed_form, rotate2_derivatives,
    rotation_embed, trace_pairing, Rot2State, SymMatrix,
};

pub const EXACT_TOL: f64 = 1e-12;
pub const DERIVATIVE_TOL: f64 = 1e-6;
pub const DEFAULT_FD_STEP: f64 = 1e-4;

const SUITE_SEED: u64 = 0x005E_ED0F_1DE7;

pub type ClosedForm = fn(Rot2State) -> (f64, f64, f64);

#[derive(Debug, Clone, Serialize)]
pub struct IdentityCheck {
    pub name: &'static str,
    pub cases: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub fd_step: f64,
    pub checks: Vec<IdentityCheck>,
    pub all_pass: bool,
}

impl IdentityReport {
    pub fn check(&self, name: &str) -> Option<&IdentityCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Tracker {
    name: &'static str,
    tolerance: f64,
    cases: usize,
    worst: f64,
}

impl Tracker {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            cases: 0,
            worst: 0.0,
        }
    }

    fn record(&mut self, residual: f64) {
        self.cases += 1;
        // NaN must poison the check rather than vanish in `max`.
        if residual.is_nan() || residual > self.worst {
            self.worst = if residual.is_nan() {
                f64::INFINITY
            } else {
                residual
            };
        }
    }

    fn finish(self) -> IdentityCheck {
        IdentityCheck {
            name: self.name,
            cases: self.cases,
            max_residual: self.worst,
            tolerance: self.tolerance,
            pass: self.worst <= self.tolerance,
        }
    }
}

fn random_state(rng: &mut ChaCha8Rng) -> Rot2State {
    Rot2State::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(0.0..std::f64::consts::TAU),
    )
}

fn random_sym(rng: &mut ChaCha8Rng, d: usize) -> SymMatrix {
    let entries = (0..super::packed_len(d))
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    SymMatrix::from_packed(d, entries).expect("packed length")
}

fn max3(x: (f64, f64, f64), y: (f64, f64, f64)) -> f64 {
    (x.0 - y.0)
        .abs()
        .max((x.1 - y.1).abs())
        .max((x.2 - y.2).abs())
}

/// Runs the suite against the production closed form.
pub fn run_identity_suite(fd_step: f64) -> IdentityReport {
    run_identity_suite_with(fd_step, rotate2_closed_form)
}

/// Runs the suite against an arbitrary closed form, so the harness itself can
/// be checked against a deliberately wrong formula.
pub fn run_identity_suite_with(fd_step: f64, closed_form: ClosedForm) -> IdentityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(SUITE_SEED);
    let mut checks = Vec::new();

    let mut vs_conj = Tracker::new("closed_form_vs_conjugation", EXACT_TOL);
    let mut trace = Tracker::new("trace_preservation", EXACT_TOL);
    let mut det = Tracker::new("determinant_preservation", EXACT_TOL);
    for _ in 0..100 {
        let s = random_state(&mut rng);
        let q = rotation_embed(s.theta, 2).expect("d = 2");
        let direct = conjugate(&q, &s.as_matrix()).expect("dims match");
        let (a, b, d) = closed_form(s);
        vs_conj.record(max3(
            (a, b, d),
            (direct.get(0, 0), direct.get(0, 1), direct.get(1, 1)),
        ));
        trace.record(((a + d) - (s.a + s.d)).abs());
        det.record(((a * d - b * b) - (s.a * s.d - s.b * s.b)).abs());
    }
    checks.extend([vs_conj.finish(), trace.finish(), det.finish()]);

    let mut compose = Tracker::new("rotation_composition", EXACT_TOL);
    for _ in 0..100 {
        let s = random_state(&mut rng);
        let theta2 = rng.random_range(0.0..std::f64::consts::TAU);
        let (a1, b1, d1) = closed_form(s);
        let twice = closed_form(Rot2State::new(a1, b1, d1, theta2));
        let once = closed_form(Rot2State {
            theta: s.theta + theta2,
            ..s
        });
        compose.record(max3(twice, once));
    }
    checks.push(compose.finish());

    let mut deriv = Tracker::new("derivative_identities", DERIVATIVE_TOL);
    let h = fd_step;
    for _ in 0..20 {
        let base = random_state(&mut rng);
        for theta in identity_theta_grid() {
            let at = |t: f64| closed_form(Rot2State { theta: t, ..base });
            let plus = at(theta + h);
            let minus = at(theta - h);
            let fd = (
                (plus.0 - minus.0) / (2.0 * h),
                (plus.1 - minus.1) / (2.0 * h),
                (plus.2 - minus.2) / (2.0 * h),
            );
            let (a, b, d) = at(theta);
            deriv.record(max3(fd, rotate2_derivatives(a, b, d)));
        }
    }
    checks.push(deriv.finish());

    let mut pairing = Tracker::new("trace_pairing_expansion", EXACT_TOL);
    for _ in 0..100 {
        let d = rng.random_range(1..=6);
        let a = random_sym(&mut rng, d);
        let b = random_sym(&mut rng, d);
        let prod = matmul(d, &a.to_full(), &b.to_full());
        let direct: f64 = (0..d).map(|j| prod[j * d + j]).sum();
        pairing.record((trace_pairing(&a, &b).expect("same dim") - direct).abs());
    }
    checks.push(pairing.finish());

    let all_pass = checks.iter().all(|c| c.pass);
    IdentityReport {
        fd_step,
        checks,
        all_pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corrupted(s: Rot2State) -> (f64, f64, f64) {
        let (a, b, d) = rotate2_closed_form(s);
        // sign error on the sin(2 theta) term of B
        (a, b - 2.0 * s.a * (2.0 * s.theta).sin(), d)
    }

    #[test]
    fn default_suite_passes() {
        let report = run_identity_suite(DEFAULT_FD_STEP);
        for c in &report.checks {
            assert!(c.pass, "{} residual {:e}", c.name, c.max_residual);
        }
        assert!(report.all_pass);
        assert_eq!(
            report.check("derivative_identities").unwrap().cases,
            32 * 20
        );
        assert!(
            report
                .check("closed_form_vs_conjugation")
                .unwrap()
                .max_residual
                <= 1e-12
        );
    }

    #[test]
    fn corrupted_formula_is_caught() {
        let report = run_identity_suite_with(DEFAULT_FD_STEP, corrupted);
        assert!(!report.all_pass);
        assert!(!report.check("closed_form_vs_conjugation").unwrap().pass);
    }

    #[test]
    fn coarse_step_fails_derivative_tolerance() {
        let report = run_identity_suite(0.5);
        assert!(!report.check("derivative_identities").unwrap().pass);
        assert!(report.check("closed_form_vs_conjugation").unwrap().pass);
    }
}
