//! Upper bounds for the lower (1+α)-dimensional Hausdorff content of
//! `A_n(b) \ U`, the Wiener-type series `Σ 4^n M(A_n(b) \ U)`, and a
//! designer that removes balls so the series provably converges.
//!
//! Only three facts about the content are used: a closed ball of radius `r`
//! has content `r^β`, segments have content zero for `β > 1`, and the
//! content is countably subadditive. Consequently everything here is an
//! upper bound: the series can be certified convergent, never divergent.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{certify_probe_aperture, Annulus, ClosedBall, DomainSpec, Probe};
use crate::numeric::{dyadic_pow, exact_log2, stream_rng, CompensatedSum};
use crate::{Error, Point, Result};

/// Content of a closed ball: `r^β` (exact for dyadic radii).
pub fn content_ball(r: f64, beta: f64) -> Result<f64> {
    if !(r > 0.0 && beta > 0.0 && r.is_finite() && beta.is_finite()) {
        return Err(Error::ContentDomain { r, beta });
    }
    Ok(dyadic_pow(r, beta))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// Subadditivity over the balls meeting the annulus.
    BallSum,
    /// Content of the containing ball `B(b, 2^-n)`.
    TrivialAnnulus,
    /// Ball sum where some contributing ball also meets a neighbouring
    /// annulus and is therefore counted more than once across the series.
    Mixed,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::BallSum => "ball-sum",
            Provenance::TrivialAnnulus => "trivial-annulus",
            Provenance::Mixed => "mixed",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ContentBound {
    pub n: u32,
    pub bound: f64,
    pub provenance: Provenance,
}

/// Range of annulus indices a ball meets: `None` when it meets none,
/// otherwise `(first, last)` with `last = None` when the ball contains `b`.
fn annulus_span(b: Point, ball: &ClosedBall) -> Option<(u32, Option<u32>)> {
    let rho = (ball.center - b).norm();
    let hi = rho + ball.radius;
    let lo = (rho - ball.radius).max(0.0);
    // A_n meets [lo, hi] iff 2^-(n+1) <= hi and 2^-n >= lo
    let first = (0u32..).find(|&n| Annulus::new(b, n).inner() <= hi)?;
    if lo == 0.0 {
        return Some((first, None));
    }
    if Annulus::new(b, first).outer() < lo {
        return None;
    }
    let mut last = first;
    while Annulus::new(b, last + 1).outer() >= lo {
        last += 1;
    }
    Some((first, Some(last)))
}

pub fn annulus_content_bound(d: &DomainSpec, n: u32) -> ContentBound {
    let beta = d.beta();
    let trivial = dyadic_pow(Annulus::new(d.b(), n).outer(), beta);
    if !d.annulus_inside_outer(n) {
        return ContentBound {
            n,
            bound: trivial,
            provenance: Provenance::TrivialAnnulus,
        };
    }
    let meeting = d.balls_meeting_annulus(n);
    let mut sum = CompensatedSum::new();
    for ball in &meeting {
        sum.add(dyadic_pow(ball.radius, beta));
    }
    let sum = sum.value();
    if sum > trivial {
        return ContentBound {
            n,
            bound: trivial,
            provenance: Provenance::TrivialAnnulus,
        };
    }
    let shared = meeting
        .iter()
        .any(|ball| single_annulus(d.b(), ball).is_none());
    ContentBound {
        n,
        bound: sum,
        provenance: if shared { Provenance::Mixed } else { Provenance::BallSum },
    }
}

/// Summable sequence `s_n` with a closed-form tail.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SeriesFamily {
    /// `s_n = scale * ratio^n`, `0 < ratio < 1`.
    Geometric { scale: f64, ratio: f64 },
    /// `s_n = scale / (n + 1)^2`.
    InverseSquare { scale: f64 },
}

impl SeriesFamily {
    pub fn term(&self, n: u32) -> f64 {
        match *self {
            SeriesFamily::Geometric { scale, ratio } => scale * ratio.powi(n as i32),
            SeriesFamily::InverseSquare { scale } => scale / ((n as f64 + 1.0) * (n as f64 + 1.0)),
        }
    }

    /// Upper bound for `Σ_{n >= from} s_n` and a description of its origin.
    pub fn tail_from(&self, from: u32) -> (f64, String) {
        match *self {
            SeriesFamily::Geometric { scale, ratio } => (
                scale * ratio.powi(from as i32) / (1.0 - ratio),
                format!("geometric tail scale*ratio^{from}/(1-ratio)"),
            ),
            SeriesFamily::InverseSquare { scale } => {
                // Σ_{m >= from+1} 1/m^2 <= 1/from for from >= 1, and π²/6 at 0
                let bound = if from == 0 {
                    scale * PI * PI / 6.0
                } else {
                    scale / from as f64
                };
                (bound, format!("integral bound scale/{from} for Σ 1/(n+1)^2"))
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            SeriesFamily::Geometric { scale, ratio } => {
                scale > 0.0 && scale.is_finite() && ratio > 0.0 && ratio < 1.0
            }
            SeriesFamily::InverseSquare { scale } => scale > 0.0 && scale.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid series family {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BallCount {
    Constant { k: u32 },
    /// `k` balls in even annuli, none in odd ones.
    EvenOnly { k: u32 },
    /// Counts for `n_min, n_min + 1, ...`; zero past the end of the list.
    PerAnnulus { counts: Vec<u32> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadiiSchedule {
    pub family: SeriesFamily,
    pub n_range: [u32; 2],
    pub balls_per_annulus: BallCount,
    /// Angular clearance (radians) kept free around the probe direction.
    pub angular_margin: f64,
}

/// Centers sit at modulus `PLACEMENT_MODULUS * 2^-n` from `b`.
pub const PLACEMENT_MODULUS: f64 = 0.75;

impl RadiiSchedule {
    pub fn geometric(scale: f64, ratio: f64, n_range: [u32; 2], k: u32) -> Self {
        Self {
            family: SeriesFamily::Geometric { scale, ratio },
            n_range,
            balls_per_annulus: BallCount::Constant { k },
            angular_margin: PI / 4.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.family.validate()?;
        if self.n_range[0] > self.n_range[1] || self.n_range[1] > 60 {
            return Err(Error::InvalidInput(format!("bad n_range {:?}", self.n_range)));
        }
        if !(self.angular_margin >= 0.0 && self.angular_margin < PI) {
            return Err(Error::InvalidInput("angular margin must lie in [0, pi)".into()));
        }
        Ok(())
    }

    pub fn s(&self, n: u32) -> f64 {
        self.family.term(n)
    }

    /// Budget `s_n / 4^n` for the (1+α)-th powers of radii meeting `A_n`.
    pub fn budget(&self, n: u32) -> f64 {
        self.s(n) * 0.25f64.powi(n as i32)
    }

    /// Ball count for annulus `n`, following the rule past `n_range[1]`.
    pub fn count(&self, n: u32) -> u32 {
        if n < self.n_range[0] {
            return 0;
        }
        match &self.balls_per_annulus {
            BallCount::Constant { k } => *k,
            BallCount::EvenOnly { k } => {
                if n % 2 == 0 {
                    *k
                } else {
                    0
                }
            }
            BallCount::PerAnnulus { counts } => counts
                .get((n - self.n_range[0]) as usize)
                .copied()
                .unwrap_or(0),
        }
    }

    pub fn max_count(&self) -> u32 {
        match &self.balls_per_annulus {
            BallCount::Constant { k } | BallCount::EvenOnly { k } => *k,
            BallCount::PerAnnulus { counts } => counts.iter().copied().max().unwrap_or(0),
        }
    }

    /// Radius solving `k r^β = budget`, before clamping.
    pub fn budget_radius(&self, n: u32, k: u32, beta: f64) -> f64 {
        let x = self.budget(n) / k as f64;
        // exact root when it is itself a power of two
        if let Some(e) = exact_log2(x) {
            let q = (e as f64 / beta).round();
            let r = 2f64.powi(q as i32);
            if q.abs() < 1000.0 && dyadic_pow(r, beta) == x {
                return r;
            }
        }
        x.powf(1.0 / beta)
    }

    /// Largest radius that keeps a ball centred at modulus `0.75 * 2^-n`
    /// strictly inside `A_n`.
    pub fn fit_radius(n: u32) -> f64 {
        2f64.powi(-(n as i32) - 3)
    }

    /// Ball centers in annulus `n`: modulus `0.75 * 2^-n`, equally spaced
    /// angles outside the margin around `theta_probe`.
    pub fn centers(&self, b: Point, theta_probe: f64, n: u32) -> Vec<Point> {
        let k = self.count(n);
        let rho = PLACEMENT_MODULUS * 2f64.powi(-(n as i32));
        let spacing = (2.0 * PI - 2.0 * self.angular_margin) / k as f64;
        (0..k)
            .map(|j| {
                let angle = theta_probe + self.angular_margin + (j as f64 + 0.5) * spacing;
                b + Complex64::from_polar(rho, angle)
            })
            .collect()
    }

    /// `r_n = min(budget radius, fit radius)`, adjusted downward so that
    /// `k r^β <= budget` holds in floating point.
    pub fn radius(&self, n: u32, k: u32, beta: f64) -> f64 {
        let budget = self.budget(n);
        let mut r = self.budget_radius(n, k, beta).min(Self::fit_radius(n));
        // snap to a nearby power of two when that keeps the budget exact
        let e = r.log2().round();
        let dyadic = 2f64.powf(e);
        if (r - dyadic).abs() <= 8.0 * f64::EPSILON * r && dyadic <= Self::fit_radius(n) {
            r = dyadic;
        }
        loop {
            let mut sum = CompensatedSum::new();
            for _ in 0..k {
                sum.add(dyadic_pow(r, beta));
            }
            if sum.value() <= budget {
                return r;
            }
            r = r.next_down();
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    CertifiedConvergent,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WienerTerm {
    pub n: u32,
    pub content_bound: f64,
    pub provenance: Provenance,
    pub term: f64,
    pub partial_sum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WienerReport {
    pub beta: f64,
    pub n_max: u32,
    pub terms: Vec<WienerTerm>,
    pub partial_sum: f64,
    pub tail_bound: Option<f64>,
    pub tail_derivation: Option<String>,
    pub budget_failures: Vec<u32>,
    pub verdict: Verdict,
}

impl WienerReport {
    /// Assembles terms `4^n * bound` with compensated partial sums.
    pub fn from_bounds(beta: f64, bounds: &[ContentBound]) -> Self {
        let mut acc = CompensatedSum::new();
        let terms: Vec<WienerTerm> = bounds
            .iter()
            .map(|cb| {
                let term = cb.bound * 4f64.powi(cb.n as i32);
                acc.add(term);
                WienerTerm {
                    n: cb.n,
                    content_bound: cb.bound,
                    provenance: cb.provenance,
                    term,
                    partial_sum: acc.value(),
                }
            })
            .collect();
        Self {
            beta,
            n_max: bounds.last().map_or(0, |cb| cb.n),
            terms,
            partial_sum: acc.value(),
            tail_bound: None,
            tail_derivation: None,
            budget_failures: Vec::new(),
            verdict: Verdict::Inconclusive,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,content_bound,provenance,term,partial_sum\n");
        for t in &self.terms {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                t.n,
                crate::io::fmt_f64(t.content_bound),
                t.provenance.as_str(),
                crate::io::fmt_f64(t.term),
                crate::io::fmt_f64(t.partial_sum)
            ));
        }
        out
    }

    pub fn summary(&self) -> WienerSummary {
        WienerSummary {
            beta: self.beta,
            n_max: self.n_max,
            partial_sum: self.partial_sum,
            tail_bound: self.tail_bound,
            verdict: self.verdict,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WienerSummary {
    pub beta: f64,
    pub n_max: u32,
    pub partial_sum: f64,
    pub tail_bound: Option<f64>,
    pub verdict: Verdict,
}

/// Per-annulus budget check `Σ_{balls meeting A_n} r^β <= s_n / 4^n` over
/// the schedule's range. Returns the failing annuli.
pub fn budget_failures(d: &DomainSpec, schedule: &RadiiSchedule) -> Vec<u32> {
    let beta = d.beta();
    (schedule.n_range[0]..=schedule.n_range[1])
        .filter(|&n| {
            let mut sum = CompensatedSum::new();
            for ball in d.balls_meeting_annulus(n) {
                sum.add(dyadic_pow(ball.radius, beta));
            }
            sum.value() > schedule.budget(n)
        })
        .collect()
}

pub fn wiener_series(d: &DomainSpec, n_max: u32, schedule: Option<&RadiiSchedule>) -> WienerReport {
    let bounds: Vec<ContentBound> = (0..=n_max).map(|n| annulus_content_bound(d, n)).collect();
    let mut report = WienerReport::from_bounds(d.beta(), &bounds);

    let spans: Vec<(u32, Option<u32>)> = d
        .balls()
        .iter()
        .filter_map(|ball| annulus_span(d.b(), ball))
        .collect();
    let reaches_b = spans.iter().any(|s| s.1.is_none());
    let deepest = spans.iter().filter_map(|s| s.1).max();
    let after_inside = d.annulus_inside_outer(n_max + 1);

    match schedule {
        None => {
            if !reaches_b && deepest.is_none_or(|deep| deep <= n_max) && after_inside {
                report.tail_bound = Some(0.0);
                report.tail_derivation =
                    Some(format!("no removed ball meets an annulus beyond n = {n_max}"));
                report.verdict = Verdict::CertifiedConvergent;
            }
        }
        Some(s) => {
            let failures = budget_failures(d, s);
            let contained = !reaches_b
                && spans.iter().all(|&(first, last)| {
                    let last = last.unwrap_or(u32::MAX);
                    (first >= s.n_range[0] && last <= s.n_range[1]) || last <= n_max
                });
            if failures.is_empty() && contained && s.validate().is_ok() {
                // explicit terms for annuli between n_max and the schedule start
                let mut gap = CompensatedSum::new();
                for n in (n_max + 1)..s.n_range[0] {
                    let cb = annulus_content_bound(d, n);
                    gap.add(cb.bound * 4f64.powi(n as i32));
                }
                let from = (n_max + 1).max(s.n_range[0]);
                let (tail, how) = s.family.tail_from(from);
                report.tail_bound = Some(gap.value() + tail);
                report.tail_derivation = Some(how);
                report.verdict = Verdict::CertifiedConvergent;
            }
            report.budget_failures = failures;
        }
    }
    report
}

/// Removes `k_n` balls per annulus over the schedule range so that the
/// budget `s_n / 4^n` holds in every annulus, and certifies a probe ray.
///
/// The seed selects the probe direction. With `require_exact_budget`, an
/// annulus where the fit radius is smaller than the budget radius is an
/// error instead of being clamped.
pub fn design_domain(
    alpha: f64,
    schedule: &RadiiSchedule,
    outer: ClosedBall,
    b: Point,
    seed: u64,
    require_exact_budget: bool,
) -> Result<DomainSpec> {
    schedule.validate()?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let beta = 1.0 + alpha;
    let theta_probe = 2.0 * PI * stream_rng(seed, 0).random::<f64>();
    let margin = schedule.angular_margin;
    let mut balls = Vec::new();

    for n in schedule.n_range[0]..=schedule.n_range[1] {
        let k = schedule.count(n);
        if k == 0 {
            continue;
        }
        let infeasible = |reason: String| Err(Error::InfeasibleSchedule { n, reason });
        let fit = RadiiSchedule::fit_radius(n);
        if require_exact_budget && schedule.budget_radius(n, k, beta) > fit {
            return infeasible(format!(
                "budget radius {:e} exceeds fit radius {fit:e}",
                schedule.budget_radius(n, k, beta)
            ));
        }
        let r = schedule.radius(n, k, beta);
        let rho = PLACEMENT_MODULUS * 2f64.powi(-(n as i32));
        let spacing = (2.0 * PI - 2.0 * margin) / k as f64;
        let half_width = (r / rho).asin();
        if k >= 2 && 2.0 * rho * (spacing / 2.0).sin() <= 2.0 * r {
            return infeasible(format!("{k} balls of radius {r:e} overlap at modulus {rho:e}"));
        }
        if half_width >= margin + spacing / 2.0 {
            return infeasible("balls reach the probe direction".into());
        }
        for center in schedule.centers(b, theta_probe, n) {
            if (center - outer.center).norm() + r >= outer.radius {
                return infeasible("ball leaves the outer disk".into());
            }
            balls.push(ClosedBall::new(center, r)?);
        }
    }

    let slack = outer.radius - (b - outer.center).norm();
    if slack <= 0.0 {
        return Err(Error::InvalidDomain("b must lie in the open outer disk".into()));
    }
    let eps_hi = slack / 2.0;
    let t = certify_probe_aperture(&outer, b, &balls, &[], theta_probe, eps_hi).min(0.999);
    if t <= 0.0 {
        return Err(Error::InfeasibleSchedule {
            n: schedule.n_range[0],
            reason: "no positive aperture along the probe".into(),
        });
    }
    let d = DomainSpec::new(
        outer,
        b,
        alpha,
        balls,
        vec![],
        Probe {
            theta: theta_probe,
            t,
            eps_range: [0.0, eps_hi],
        },
    )?
    .with_design(schedule.clone());

    // recompute the certificate: each ball meets exactly one annulus and
    // every annulus budget holds
    for ball in d.balls() {
        if single_annulus(b, ball).is_none() {
            return Err(Error::InfeasibleSchedule {
                n: schedule.n_range[0],
                reason: "ball meets more than one annulus".into(),
            });
        }
    }
    if let Some(&n) = budget_failures(&d, schedule).first() {
        return Err(Error::InfeasibleSchedule {
            n,
            reason: "budget recomputation failed".into(),
        });
    }
    Ok(d)
}

/// Informational Dolzhenko flag: true when every annulus of the design range
/// (or of the span of removed balls, without a design) contains a removed
/// ball, so every neighbourhood of `b` meets `ℂ \ U` in a set of infinite
/// (1+α)-dimensional Hausdorff measure.
pub fn removability_flag(d: &DomainSpec) -> bool {
    let range = match d.design() {
        Some(s) => Some((s.n_range[0], s.n_range[1])),
        None => {
            let spans: Vec<(u32, u32)> = d
                .balls()
                .iter()
                .filter_map(|ball| match annulus_span(d.b(), ball) {
                    Some((first, Some(last))) => Some((first, last)),
                    _ => None,
                })
                .collect();
            let lo = spans.iter().map(|s| s.0).min();
            let hi = spans.iter().map(|s| s.1).max();
            lo.zip(hi)
        }
    };
    match range {
        Some((lo, hi)) => (lo..=hi).all(|n| !d.balls_meeting_annulus(n).is_empty()),
        None => false,
    }
}

/// Annulus index of a ball that meets exactly one annulus.
pub fn single_annulus(b: Point, ball: &ClosedBall) -> Option<u32> {
    match annulus_span(b, ball) {
        Some((first, Some(last))) if first == last => Some(first),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Point {
        Complex64::new(re, im)
    }

    fn plain_domain(balls: Vec<ClosedBall>) -> DomainSpec {
        DomainSpec::new(
            ClosedBall::new(c(0.0, 0.0), 2.0).unwrap(),
            c(0.0, 0.0),
            0.5,
            balls,
            vec![],
            Probe {
                theta: 0.0,
                t: 0.5,
                eps_range: [0.0, 0.5],
            },
        )
        .unwrap()
    }

    #[test]
    fn content_ball_examples() {
        assert!((content_ball(0.5, 1.5).unwrap() - 0.353_553_390_593_273_8).abs() < 1e-15);
        assert_eq!(content_ball(1.0, 0.7).unwrap(), 1.0);
        assert_eq!(content_ball(0.25, 1.5).unwrap(), 0.125);
        assert!(content_ball(0.0, 1.5).is_err());
        assert!(content_ball(0.5, -1.0).is_err());
    }

    #[test]
    fn annulus_bound_examples() {
        // one ball of radius 2^-2n meeting only A_n
        for n in 3..8u32 {
            let rho = 0.75 * 2f64.powi(-(n as i32));
            let r = 2f64.powi(-2 * n as i32);
            let d = plain_domain(vec![ClosedBall::new(c(-rho, 0.0), r).unwrap()]);
            let cb = annulus_content_bound(&d, n);
            assert_eq!(cb.bound, 2f64.powi(-3 * n as i32));
            assert_eq!(cb.provenance, Provenance::BallSum);
            assert_eq!(annulus_content_bound(&d, n + 1).bound, 0.0);
        }
    }

    #[test]
    fn fat_balls_clamp_to_trivial_bound() {
        let n = 2;
        let rho = 0.75 * 0.25;
        let balls: Vec<ClosedBall> = (0..4)
            .map(|j| {
                let angle = PI / 2.0 + j as f64 * PI / 6.0;
                ClosedBall::new(Complex64::from_polar(rho, angle), 0.03).unwrap()
            })
            .collect();
        let sum: f64 = balls.iter().map(|b| b.radius.powf(1.5)).sum();
        let trivial = 0.25f64.powf(1.5);
        assert!(sum < trivial);
        let d = plain_domain(balls.clone());
        assert_eq!(annulus_content_bound(&d, n).provenance, Provenance::BallSum);

        let fat: Vec<ClosedBall> = (0..9)
            .map(|j| {
                let angle = PI / 3.0 + j as f64 * PI / 8.0;
                ClosedBall::new(Complex64::from_polar(rho, angle), 0.06).unwrap()
            })
            .collect();
        let fat_sum: f64 = fat.iter().map(|b| b.radius.powf(1.5)).sum();
        assert!(fat_sum > trivial);
        let d = plain_domain(fat);
        let cb = annulus_content_bound(&d, n);
        assert_eq!(cb.bound, trivial);
        assert_eq!(cb.provenance, Provenance::TrivialAnnulus);
    }

    #[test]
    fn annulus_outside_outer_uses_trivial_bound() {
        let d = DomainSpec::new(
            ClosedBall::new(c(0.0, 0.0), 1.0).unwrap(),
            c(0.0, 0.0),
            0.5,
            vec![],
            vec![],
            Probe {
                theta: 0.0,
                t: 0.5,
                eps_range: [0.0, 0.5],
            },
        )
        .unwrap();
        let cb = annulus_content_bound(&d, 0);
        assert_eq!((cb.bound, cb.provenance), (1.0, Provenance::TrivialAnnulus));
        assert_eq!(annulus_content_bound(&d, 1).bound, 0.0);
    }

    #[test]
    fn partial_sums_of_eighth_powers() {
        let bounds: Vec<ContentBound> = (0..=10)
            .map(|n| ContentBound {
                n,
                bound: 0.125f64.powi(n as i32),
                provenance: Provenance::BallSum,
            })
            .collect();
        let report = WienerReport::from_bounds(1.5, &bounds);
        for t in &report.terms {
            assert_eq!(t.term, 0.5f64.powi(t.n as i32));
        }
        // direct summation cross-check
        let direct: f64 = (0..=10).map(|n| 0.5f64.powi(n)).sum();
        assert!((report.partial_sum - (2.0 - 2f64.powi(-10))).abs() < 1e-15);
        assert!((report.partial_sum - direct).abs() < 1e-15);
    }

    #[test]
    fn design_radii_follow_the_budget() {
        let s = RadiiSchedule::geometric(1.0, 0.5, [2, 20], 1);
        let d = design_domain(0.5, &s, ClosedBall::new(c(0.0, 0.0), 2.0).unwrap(), c(0.0, 0.0), 1, false)
            .unwrap();
        assert_eq!(d.balls().len(), 19);
        for ball in d.balls() {
            let n = single_annulus(d.b(), ball).unwrap();
            // r^{1.5} = 8^-n  =>  r = 4^-n, clamped by 2^-(n+3)
            let expected = 2f64.powi(-2 * n as i32).min(2f64.powi(-(n as i32) - 3));
            assert_eq!(ball.radius, expected, "n = {n}");
            if n >= 3 {
                assert_eq!(ball.radius, 2f64.powi(-2 * n as i32));
            }
        }
        assert!(budget_failures(&d, &s).is_empty());
        assert!(removability_flag(&d));
    }

    #[test]
    fn empty_schedule_gives_zero_series() {
        let s = RadiiSchedule::geometric(1.0, 0.5, [2, 20], 0);
        let d = design_domain(0.5, &s, ClosedBall::new(c(0.0, 0.0), 2.0).unwrap(), c(0.0, 0.0), 0, false)
            .unwrap();
        assert!(d.balls().is_empty());
        let report = wiener_series(&d, 25, Some(&s));
        assert!(report.terms.iter().all(|t| t.term == 0.0));
        assert_eq!(report.verdict, Verdict::CertifiedConvergent);
        assert!(!removability_flag(&d));
    }

    #[test]
    fn exact_budget_requirement_reports_first_annulus() {
        let s = RadiiSchedule::geometric(1.0, 0.5, [0, 10], 1);
        let err = design_domain(0.5, &s, ClosedBall::new(c(0.0, 0.0), 4.0).unwrap(), c(0.0, 0.0), 0, true)
            .unwrap_err();
        assert!(matches!(err, Error::InfeasibleSchedule { n: 0, .. }));
    }

    #[test]
    fn overcrowded_annulus_is_infeasible() {
        let s = RadiiSchedule::geometric(1.0, 0.9, [3, 6], 400);
        let err = design_domain(0.5, &s, ClosedBall::new(c(0.0, 0.0), 2.0).unwrap(), c(0.0, 0.0), 0, false)
            .unwrap_err();
        assert!(matches!(err, Error::InfeasibleSchedule { n: 3, .. }));
    }

    #[test]
    fn fat_balls_without_schedule_are_inconclusive() {
        let balls: Vec<ClosedBall> = (1..10u32)
            .map(|n| {
                let rho = 0.75 * 2f64.powi(-(n as i32));
                ClosedBall::new(c(-rho, 0.0), 2f64.powi(-(n as i32) - 3)).unwrap()
            })
            .collect();
        let d = plain_domain(balls);
        let report = wiener_series(&d, 6, None);
        assert_eq!(report.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn segments_only_certify_with_zero_tail() {
        let d = DomainSpec::new(
            ClosedBall::new(c(0.0, 0.0), 2.0).unwrap(),
            c(0.0, 0.0),
            0.5,
            vec![],
            vec![crate::geometry::Segment::new(c(0.0, 0.0), c(-1.0, 0.0)).unwrap()],
            Probe {
                theta: 0.0,
                t: 0.5,
                eps_range: [0.0, 0.5],
            },
        )
        .unwrap();
        let report = wiener_series(&d, 12, None);
        assert!(report.terms.iter().all(|t| t.term == 0.0));
        assert_eq!(report.tail_bound, Some(0.0));
        assert_eq!(report.verdict, Verdict::CertifiedConvergent);
    }

    #[test]
    fn even_only_design_is_not_flagged() {
        let s = RadiiSchedule {
            balls_per_annulus: BallCount::EvenOnly { k: 1 },
            ..RadiiSchedule::geometric(1.0, 0.5, [2, 12], 1)
        };
        let d = design_domain(0.5, &s, ClosedBall::new(c(0.0, 0.0), 2.0).unwrap(), c(0.0, 0.0), 0, false)
            .unwrap();
        assert!(!removability_flag(&d));
        assert!(wiener_series(&d, 12, Some(&s)).verdict == Verdict::CertifiedConvergent);
    }

    #[test]
    fn annulus_span_matches_meeting_test() {
        let b = c(0.0, 0.0);
        for (rho, r) in [(0.4, 0.05), (0.26, 0.02), (0.7, 0.29), (0.01, 0.003), (0.9, 0.2)] {
            let ball = ClosedBall::new(c(rho, 0.0), r).unwrap();
            let (first, last) = annulus_span(b, &ball).unwrap();
            for n in 0..20 {
                let inside = n >= first && last.is_none_or(|l| n <= l);
                assert_eq!(inside, Annulus::new(b, n).meets(&ball), "rho {rho} r {r} n {n}");
            }
        }
    }
}
