//! Difference quotients `(f(z_n) - f(b)) / (z_n - b)` along nontangential
//! sequences, compared with the derivation oracle `f'(b)`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::function::TestFunction;
use crate::geometry::{check_nontangential, ray_sequence, NontangentialCheck, NontangentialRay};
use crate::io::{csv, fmt_f64};
use crate::numeric::lsq_slope;
use crate::{Error, Point, Result};

/// Smallest admissible `|z_n - b|`.
pub const R_FLOOR: f64 = 1e-8;
pub const DEFAULT_TOL_FINITE: f64 = 1e-6;
pub const DEFAULT_TOL_CLUSTER: f64 = 1e-3;
/// Minimum record count and span (decades of r) for a convergence fit.
pub const MIN_RECORDS: usize = 8;
pub const MIN_DECADES: f64 = 3.0;
/// Records at the end of the sequence that must decrease up to `NOISE_FACTOR`.
pub const MONOTONE_WINDOW: usize = 5;
pub const NOISE_FACTOR: f64 = 2.0;

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub f: TestFunction,
    pub ray: NontangentialRay,
    pub r0: f64,
    pub rho: f64,
    pub count: usize,
    pub tol: f64,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Probe ray of the function's domain with the default tolerance for its
    /// family.
    pub fn along_probe(f: TestFunction, r0: f64, rho: f64, count: usize) -> Self {
        let ray = NontangentialRay::from_probe(f.domain());
        let tol = if f.is_clustering() {
            DEFAULT_TOL_CLUSTER
        } else {
            DEFAULT_TOL_FINITE
        };
        Self {
            f,
            ray,
            r0,
            rho,
            count,
            tol,
            seed: 0,
        }
    }

    pub fn sequence(&self) -> Result<Vec<Point>> {
        ray_sequence(&self.ray, self.r0, self.rho, self.count)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuotientRecord {
    pub n: usize,
    pub r: f64,
    pub z: Point,
    pub q: Complex64,
    pub err: f64,
    /// `|f(b)| 2^-52 / r`: rounding noise of the numerator.
    pub cancellation_bound: f64,
    /// Truncation bound of the two evaluations divided by `r`.
    pub truncation_bound: f64,
}

fn quotient_records(f: &TestFunction, seq: &[Point], oracle: Complex64) -> Result<Vec<QuotientRecord>> {
    let d = f.domain();
    if let Some(index) = seq.iter().position(|&z| !d.is_in_u(z)) {
        return Err(Error::SequenceLeftDomain { index });
    }
    let b = d.b();
    let fb = f.eval(b)?;
    let rows: Vec<Result<QuotientRecord>> = seq
        .par_iter()
        .enumerate()
        .map(|(n, &z)| {
            let fz = f.eval(z)?;
            let h = z - b;
            let r = h.norm();
            if r < R_FLOOR {
                return Err(Error::InvalidInput(format!("|z_{n} - b| = {r:e} is below the floor {R_FLOOR:e}")));
            }
            let q = (fz.value - fb.value) / h;
            Ok(QuotientRecord {
                n,
                r,
                z,
                q,
                err: (q - oracle).norm(),
                cancellation_bound: fb.value.norm() * f64::EPSILON / r,
                truncation_bound: (fz.tail + fb.tail) / r,
            })
        })
        .collect();
    rows.into_iter().collect()
}

/// Quotients along the configured ray after checking membership and the
/// cone condition at the ray's aperture.
pub fn run_quotients(cfg: &ExperimentConfig) -> Result<Vec<QuotientRecord>> {
    let seq = cfg.sequence()?;
    let d = cfg.f.domain();
    if let Some(index) = seq.iter().position(|&z| !d.is_in_u(z)) {
        return Err(Error::SequenceLeftDomain { index });
    }
    if let Some(index) = check_nontangential(&seq, cfg.ray.t, d)?.first_violation {
        return Err(Error::ApertureViolated { index });
    }
    let oracle = cfg.f.derivation_oracle()?.value;
    quotient_records(&cfg.f, &seq, oracle)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuotientVerdict {
    Converged,
    NotConverged,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub records: Vec<QuotientRecord>,
    pub oracle: Complex64,
    pub tol: f64,
    pub final_err: f64,
    /// Slope of `ln err` against `ln r` over records with nonzero error.
    pub empirical_order: Option<f64>,
    /// Two-step Richardson extrapolation of the last three quotients.
    pub limit_estimate: Option<Complex64>,
    pub limit_err: Option<f64>,
    pub verdict: QuotientVerdict,
}

/// Two-step Richardson extrapolation of a sequence with error
/// `c1 r + c2 r^2 + ...` sampled at ratio `rho`.
pub fn richardson(q: [Complex64; 3], rho: f64) -> Complex64 {
    let r1a = (q[1] - rho * q[0]) / (1.0 - rho);
    let r1b = (q[2] - rho * q[1]) / (1.0 - rho);
    (r1b - rho * rho * r1a) / (1.0 - rho * rho)
}

fn last_monotone(errs: &[f64]) -> bool {
    let tail = &errs[errs.len().saturating_sub(MONOTONE_WINDOW)..];
    tail.windows(2).all(|w| w[1] <= NOISE_FACTOR * w[0])
}

pub fn convergence_report(records: &[QuotientRecord], oracle: Complex64, tol: f64) -> Result<ConvergenceReport> {
    if records.len() < MIN_RECORDS {
        return Err(Error::InsufficientData(format!(
            "{} records, need at least {MIN_RECORDS}",
            records.len()
        )));
    }
    let (r_min, r_max) = records
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), rec| (lo.min(rec.r), hi.max(rec.r)));
    if (r_max / r_min).log10() < MIN_DECADES - 1e-9 {
        return Err(Error::InsufficientData(format!(
            "r spans {:.3} decades, need {MIN_DECADES}",
            (r_max / r_min).log10()
        )));
    }
    let errs: Vec<f64> = records.iter().map(|r| r.err).collect();
    let final_err = *errs.last().expect("nonempty");
    let fit: Vec<&QuotientRecord> = records.iter().filter(|r| r.err > 0.0).collect();
    let empirical_order = lsq_slope(
        &fit.iter().map(|r| r.r.ln()).collect::<Vec<_>>(),
        &fit.iter().map(|r| r.err.ln()).collect::<Vec<_>>(),
    );
    let k = records.len();
    let last3 = [records[k - 3], records[k - 2], records[k - 1]];
    let rho_a = last3[1].r / last3[0].r;
    let rho_b = last3[2].r / last3[1].r;
    let limit_estimate = ((rho_a - rho_b).abs() <= 1e-9 * rho_a && rho_a < 1.0)
        .then(|| richardson([last3[0].q, last3[1].q, last3[2].q], rho_a));
    let monotone = last_monotone(&errs);
    let verdict = if final_err < tol && monotone {
        QuotientVerdict::Converged
    } else if final_err >= tol && errs[k - MONOTONE_WINDOW.min(k)] <= NOISE_FACTOR * final_err {
        // no progress over the window while still above tolerance
        QuotientVerdict::NotConverged
    } else {
        QuotientVerdict::Inconclusive
    };
    Ok(ConvergenceReport {
        records: records.to_vec(),
        oracle,
        tol,
        final_err,
        empirical_order,
        limit_err: limit_estimate.map(|l| (l - oracle).norm()),
        limit_estimate,
        verdict,
    })
}

impl ConvergenceReport {
    pub fn to_csv(&self) -> String {
        records_csv(&self.records)
    }

    pub fn summary(&self) -> ConvergenceSummary {
        ConvergenceSummary {
            oracle: self.oracle,
            tol: self.tol,
            records: self.records.len(),
            r_final: self.records.last().map_or(0.0, |r| r.r),
            final_err: self.final_err,
            empirical_order: self.empirical_order,
            limit_estimate: self.limit_estimate,
            limit_err: self.limit_err,
            verdict: self.verdict,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceSummary {
    pub oracle: Complex64,
    pub tol: f64,
    pub records: usize,
    pub r_final: f64,
    pub final_err: f64,
    pub empirical_order: Option<f64>,
    pub limit_estimate: Option<Complex64>,
    pub limit_err: Option<f64>,
    pub verdict: QuotientVerdict,
}

pub fn records_csv(records: &[QuotientRecord]) -> String {
    csv(
        &["n", "r_n", "z_re", "z_im", "q_re", "q_im", "err"],
        records.iter().map(|r| {
            vec![
                r.n.to_string(),
                fmt_f64(r.r),
                fmt_f64(r.z.re),
                fmt_f64(r.z.im),
                fmt_f64(r.q.re),
                fmt_f64(r.q.im),
                fmt_f64(r.err),
            ]
        }),
    )
}

/// Approach curves outside the cone hypothesis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CurveSpec {
    Points { points: Vec<Point> },
    /// For each removed ball `B(c, s)`, ordered by decreasing distance to
    /// `b`, the point at distance `s (1 + gap)` from `c` in the direction
    /// perpendicular to `c - b`. Radii shrink faster than `|c - b|` on a
    /// design, so the aperture decays to zero.
    HugBalls { gap: f64 },
}

impl CurveSpec {
    pub fn points(&self, d: &crate::geometry::DomainSpec) -> Vec<Point> {
        match self {
            CurveSpec::Points { points } => points.clone(),
            CurveSpec::HugBalls { gap } => {
                let b = d.b();
                let mut balls: Vec<_> = d.balls().to_vec();
                balls.sort_by(|x, y| (y.center - b).norm().total_cmp(&(x.center - b).norm()));
                balls
                    .iter()
                    .filter(|ball| (ball.center - b).norm() > 2.0 * R_FLOOR)
                    .map(|ball| {
                        let u = (ball.center - b) / (ball.center - b).norm();
                        let perp = u * Complex64::new(0.0, 1.0);
                        ball.center + perp * (ball.radius * (1.0 + gap))
                    })
                    .collect()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TangentialReport {
    pub records: Vec<QuotientRecord>,
    pub aperture: f64,
    pub aperture_check: NontangentialCheck,
    pub note: String,
}

pub const TANGENTIAL_NOTE: &str =
    "approach curve outside the cone hypothesis; records are exploratory and carry no verdict";

/// Quotients along an arbitrary curve in U. The aperture check is reported,
/// never enforced.
pub fn tangential_probe(f: &TestFunction, curve: &CurveSpec, t: f64) -> Result<TangentialReport> {
    let seq = curve.points(f.domain());
    let aperture_check = check_nontangential(&seq, t, f.domain())?;
    let oracle = f.derivation_oracle()?.value;
    Ok(TangentialReport {
        records: quotient_records(f, &seq, oracle)?,
        aperture: t,
        aperture_check,
        note: TANGENTIAL_NOTE.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{designed_domain, largest_ball_center, two_ball_domain};
    use crate::function::{build_cluster_function, EpsilonRule};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn cfg(f: TestFunction, count: usize) -> ExperimentConfig {
        ExperimentConfig::along_probe(f, 0.5, 0.5, count)
    }

    #[test]
    fn identity_quotients_are_one() {
        let d = two_ball_domain();
        let recs = run_quotients(&cfg(TestFunction::identity(d), 20)).unwrap();
        assert!(recs.iter().all(|r| (r.q - 1.0).norm() < 1e-12));
        let rep = convergence_report(&recs, c(1.0, 0.0), 1e-6).unwrap();
        assert_eq!(rep.verdict, QuotientVerdict::Converged);
        assert_eq!(rep.empirical_order, None);
    }

    #[test]
    fn square_has_linear_error() {
        let d = two_ball_domain();
        let f = TestFunction::polynomial(d, vec![c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
        let recs = run_quotients(&cfg(f, 20)).unwrap();
        for r in &recs {
            assert!((r.err - r.r).abs() <= 1e-15 * r.r);
        }
        let rep = convergence_report(&recs, c(0.0, 0.0), 1e-5).unwrap();
        assert!((rep.empirical_order.unwrap() - 1.0).abs() < 1e-6);
        assert_eq!(rep.verdict, QuotientVerdict::Converged);
        assert!(rep.limit_err.unwrap() < 1e-12);
    }

    #[test]
    fn cauchy_kernel_error_follows_taylor() {
        let d = two_ball_domain();
        let f = TestFunction::kernel(d, c(0.5, 0.0), c(1.0, 0.0)).unwrap();
        let recs = run_quotients(&cfg(f, 20)).unwrap();
        let oracle = c(-4.0, 0.0);
        for r in &recs {
            assert!((r.err - (r.q - oracle).norm()).abs() < 1e-15);
            // exact error 8r / (1 + 2r) along the negative axis
            assert!((r.err - 8.0 * r.r / (1.0 + 2.0 * r.r)).abs() < 1e-9);
        }
        let rep = convergence_report(&recs, oracle, 1e-6).unwrap();
        let order = rep.empirical_order.unwrap();
        assert!((0.9..=1.1).contains(&order));
        assert!(rep.final_err < 1e-4);
        assert!(rep.limit_err.unwrap() < 1e-6);
    }

    #[test]
    fn cluster_function_converges() {
        let d = designed_domain();
        let f = build_cluster_function(d, EpsilonRule::Geometric { scale: 1.0, base: 32.0 }).unwrap();
        let oracle = f.derivation_oracle().unwrap().value;
        let r0 = f.domain().probe().eps_range[1];
        let count = ((r0 / 1e-5).log2().ceil() as usize) + 1;
        let recs = run_quotients(&ExperimentConfig::along_probe(f, r0, 0.5, count)).unwrap();
        let rep = convergence_report(&recs, oracle, DEFAULT_TOL_CLUSTER).unwrap();
        assert!(recs.last().unwrap().r <= 1e-5);
        assert_eq!(rep.verdict, QuotientVerdict::Converged, "{:?}", rep.summary());
    }

    #[test]
    fn insufficient_data_is_reported() {
        let d = two_ball_domain();
        let recs = run_quotients(&cfg(TestFunction::identity(d.clone()), 7)).unwrap();
        assert!(matches!(
            convergence_report(&recs, c(1.0, 0.0), 1e-6),
            Err(Error::InsufficientData(_))
        ));
        // eight records spanning only about two decades
        let recs = run_quotients(&cfg(TestFunction::identity(d), 8)).unwrap();
        assert!(matches!(
            convergence_report(&recs, c(1.0, 0.0), 1e-6),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn bad_sequences_are_rejected() {
        let d = two_ball_domain();
        let f = TestFunction::identity(d.clone());
        let mut c1 = cfg(f.clone(), 20);
        c1.ray.theta = 0.0;
        assert!(matches!(run_quotients(&c1), Err(Error::SequenceLeftDomain { index: 0 })));
        // a ray grazing B(0.5, 0.1): dist / r is about 0.05 at r = 0.5
        let mut c2 = cfg(f.clone(), 20);
        c2.ray.theta = 0.25;
        assert!(matches!(run_quotients(&c2), Err(Error::ApertureViolated { index: 0 })));
        let c3 = ExperimentConfig::along_probe(f, 0.5, 0.1, 10);
        assert!(matches!(run_quotients(&c3), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn tangential_probe_reports_without_verdict() {
        let d = designed_domain();
        let f = TestFunction::kernel(d.clone(), largest_ball_center(&d), c(1.0, 0.0)).unwrap();
        let rep = tangential_probe(&f, &CurveSpec::HugBalls { gap: 0.1 }, d.probe().t).unwrap();
        assert_eq!(rep.aperture_check.first_violation, Some(0));
        assert_eq!(rep.records.len(), CurveSpec::HugBalls { gap: 0.1 }.points(&d).len());
        assert!(rep.records.len() >= 20);
        assert_eq!(rep.note, TANGENTIAL_NOTE);
        // along the ray the probe reproduces run_quotients
        let c0 = cfg(f.clone(), 12);
        let pts = c0.sequence().unwrap();
        let along = tangential_probe(&f, &CurveSpec::Points { points: pts }, d.probe().t).unwrap();
        assert!(along.aperture_check.ok);
        assert_eq!(along.records, run_quotients(&c0).unwrap());
    }

    #[test]
    fn richardson_removes_two_orders() {
        let l = c(2.0, -1.0);
        let q: Vec<Complex64> = (0..3)
            .map(|n| {
                let r = 0.5f64.powi(n);
                l + c(3.0, 1.0) * r + c(-2.0, 0.5) * r * r
            })
            .collect();
        assert!((richardson([q[0], q[1], q[2]], 0.5) - l).norm() < 1e-13);
    }

    proptest! {
        #[test]
        fn limits_are_additive(c1 in -2.0f64..2.0, c2 in -2.0f64..2.0, p in -1.0f64..1.0) {
            let d = two_ball_domain();
            let f = TestFunction::kernel(d.clone(), c(0.5, 0.0), c(c1, 0.0)).unwrap();
            let g = TestFunction::polynomial(d.clone(), vec![c(0.0, 0.0), c(p, 0.0), c(1.0, p)]).unwrap();
            let h = f.add(&g).unwrap();
            let lim = |f: &TestFunction| {
                let recs = run_quotients(&cfg(f.clone(), 20)).unwrap();
                convergence_report(&recs, f.derivation_oracle().unwrap().value, 1e-6).unwrap()
            };
            let (rf, rg, rh) = (lim(&f), lim(&g), lim(&h));
            let sum = rf.limit_estimate.unwrap() + rg.limit_estimate.unwrap();
            prop_assert!((sum - rh.limit_estimate.unwrap()).norm() < 3e-6);
            let _ = c2;
        }

        #[test]
        fn converged_verdict_survives_smaller_aperture(t in 0.05f64..0.5) {
            let d = two_ball_domain();
            let f = TestFunction::kernel(d, c(0.5, 0.0), c(1.0, 0.0)).unwrap();
            let mut cf = cfg(f, 20);
            let base = convergence_report(&run_quotients(&cf).unwrap(), c(-4.0, 0.0), 1e-5).unwrap();
            cf.ray.t = t;
            let other = convergence_report(&run_quotients(&cf).unwrap(), c(-4.0, 0.0), 1e-5).unwrap();
            prop_assert_eq!(base.verdict, other.verdict);
        }
    }
}
