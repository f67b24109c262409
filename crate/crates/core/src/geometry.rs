//! Planar geometry of swiss-cheese domains.
//!
//! A domain is an open outer disk with finitely many closed balls, closed
//! segments and the distinguished boundary point `b` removed. Every distance
//! below is a closed-form formula per primitive; the primitive counts used
//! here are small enough that a linear scan beats any spatial index.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::content::RadiiSchedule;
use crate::numeric::{is_finite_point, stream_rng};
use crate::{Error, Point, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosedBall {
    pub center: Point,
    pub radius: f64,
}

impl ClosedBall {
    pub fn new(center: Point, radius: f64) -> Result<Self> {
        if !is_finite_point(center) || !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidInput(format!(
                "ball needs a finite center and positive radius, got {center} / {radius}"
            )));
        }
        Ok(Self { center, radius })
    }

    pub fn contains(&self, z: Point) -> bool {
        (z - self.center).norm_sqr() <= self.radius * self.radius
    }

    pub fn circumference(&self) -> f64 {
        2.0 * PI * self.radius
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub p: Point,
    pub q: Point,
}

impl Segment {
    pub fn new(p: Point, q: Point) -> Result<Self> {
        if !is_finite_point(p) || !is_finite_point(q) || p == q {
            return Err(Error::InvalidInput(format!(
                "segment endpoints must be finite and distinct, got {p} / {q}"
            )));
        }
        Ok(Self { p, q })
    }

    pub fn length(&self) -> f64 {
        (self.q - self.p).norm()
    }

    /// Parameter in [0, 1] of the closest point to `z`.
    pub fn closest_param(&self, z: Point) -> f64 {
        let d = self.q - self.p;
        let v = z - self.p;
        let s = (v.re * d.re + v.im * d.im) / d.norm_sqr();
        s.clamp(0.0, 1.0)
    }

    pub fn point_at(&self, s: f64) -> Point {
        self.p + (self.q - self.p) * s
    }

    pub fn distance(&self, z: Point) -> f64 {
        (z - self.point_at(self.closest_param(z))).norm()
    }

    /// Exact incidence test: zero cross product and projection inside the
    /// segment, no tolerance.
    pub fn contains(&self, z: Point) -> bool {
        let d = self.q - self.p;
        let v = z - self.p;
        let cross = d.re * v.im - d.im * v.re;
        if cross != 0.0 {
            return false;
        }
        let dot = d.re * v.re + d.im * v.im;
        dot >= 0.0 && dot <= d.norm_sqr()
    }
}

/// Dyadic annulus `2^-(n+1) <= |z - b| <= 2^-n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Annulus {
    pub b: Point,
    pub n: u32,
}

impl Annulus {
    pub fn new(b: Point, n: u32) -> Self {
        Self { b, n }
    }

    pub fn inner(&self) -> f64 {
        2f64.powi(-(self.n as i32) - 1)
    }

    pub fn outer(&self) -> f64 {
        2f64.powi(-(self.n as i32))
    }

    /// Radial-interval overlap; equivalent to ball ∩ annulus ≠ ∅ because a
    /// ball is connected.
    pub fn meets(&self, ball: &ClosedBall) -> bool {
        let rho = (ball.center - self.b).norm();
        let lo = (rho - ball.radius).max(0.0);
        let hi = rho + ball.radius;
        lo <= self.outer() && hi >= self.inner()
    }
}

/// Witness that `b` is a boundary point: `b + eps e^{i theta}` lies in U with
/// `dist >= t eps` for every `eps` in `(eps_range[0], eps_range[1]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Probe {
    pub theta: f64,
    pub t: f64,
    pub eps_range: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainRepr {
    outer: ClosedBall,
    b: Point,
    alpha: f64,
    balls: Vec<ClosedBall>,
    segments: Vec<Segment>,
    probe: Probe,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    design: Option<RadiiSchedule>,
}

/// Bounded open set `U = int(outer) \ (balls ∪ segments ∪ {b})` together
/// with the Lipschitz exponent and a certified probe direction at `b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainRepr", into = "DomainRepr")]
pub struct DomainSpec {
    outer: ClosedBall,
    b: Point,
    alpha: f64,
    balls: Vec<ClosedBall>,
    segments: Vec<Segment>,
    probe: Probe,
    design: Option<RadiiSchedule>,
}

impl TryFrom<DomainRepr> for DomainSpec {
    type Error = Error;

    fn try_from(r: DomainRepr) -> Result<Self> {
        let mut d = DomainSpec::new(r.outer, r.b, r.alpha, r.balls, r.segments, r.probe)?;
        d.design = r.design;
        Ok(d)
    }
}

impl From<DomainSpec> for DomainRepr {
    fn from(d: DomainSpec) -> Self {
        DomainRepr {
            outer: d.outer,
            b: d.b,
            alpha: d.alpha,
            balls: d.balls,
            segments: d.segments,
            probe: d.probe,
            design: d.design,
        }
    }
}

const PROBE_CHECKS: usize = 64;

impl DomainSpec {
    pub fn new(
        outer: ClosedBall,
        b: Point,
        alpha: f64,
        balls: Vec<ClosedBall>,
        segments: Vec<Segment>,
        probe: Probe,
    ) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidDomain(msg));
        ClosedBall::new(outer.center, outer.radius)?;
        if !is_finite_point(b) {
            return bad("b must be finite".into());
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {alpha}"));
        }
        if (b - outer.center).norm() >= outer.radius {
            return bad("b must lie in the open outer disk".into());
        }
        for (i, ball) in balls.iter().enumerate() {
            ClosedBall::new(ball.center, ball.radius)?;
            if (ball.center - outer.center).norm() + ball.radius >= outer.radius {
                return bad(format!("removed ball {i} is not inside the open outer disk"));
            }
            if (b - ball.center).norm_sqr() < ball.radius * ball.radius {
                return bad(format!("b lies inside removed ball {i}"));
            }
        }
        for s in &segments {
            Segment::new(s.p, s.q)?;
        }
        let [lo, hi] = probe.eps_range;
        if !(probe.theta.is_finite() && probe.t > 0.0 && probe.t < 1.0) {
            return bad("probe needs a finite direction and aperture in (0, 1)".into());
        }
        if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
            return bad(format!("probe eps range [{lo}, {hi}] is empty"));
        }
        let d = Self {
            outer,
            b,
            alpha,
            balls,
            segments,
            probe,
            design: None,
        };
        d.verify_probe()?;
        Ok(d)
    }

    pub fn with_design(mut self, schedule: RadiiSchedule) -> Self {
        self.design = Some(schedule);
        self
    }

    pub fn outer(&self) -> &ClosedBall {
        &self.outer
    }

    pub fn b(&self) -> Point {
        self.b
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        1.0 + self.alpha
    }

    pub fn balls(&self) -> &[ClosedBall] {
        &self.balls
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn probe(&self) -> &Probe {
        &self.probe
    }

    pub fn design(&self) -> Option<&RadiiSchedule> {
        self.design.as_ref()
    }

    /// Upper bound for diam(clos U).
    pub fn diameter_bound(&self) -> f64 {
        2.0 * self.outer.radius
    }

    /// Upper bound for sup |z - b| over clos U.
    pub fn reach_from_b(&self) -> f64 {
        (self.b - self.outer.center).norm() + self.outer.radius
    }

    fn verify_probe(&self) -> Result<()> {
        let [lo, hi] = self.probe.eps_range;
        let lo = if lo > 0.0 { lo } else { hi * 1e-12 };
        let dir = Complex64::from_polar(1.0, self.probe.theta);
        for k in 0..PROBE_CHECKS {
            let s = k as f64 / (PROBE_CHECKS - 1) as f64;
            let eps = hi * (lo / hi).powf(s);
            let z = self.b + dir * eps;
            if !self.is_in_u(z) {
                return Err(Error::InvalidDomain(format!(
                    "probe point at eps = {eps:e} is not in U"
                )));
            }
            let dist = self.dist_to_complement(z)?;
            if dist < self.probe.t * (z - self.b).norm() {
                return Err(Error::InvalidDomain(format!(
                    "probe aperture {} fails at eps = {eps:e}",
                    self.probe.t
                )));
            }
        }
        Ok(())
    }

    pub fn is_in_u(&self, z: Point) -> bool {
        if !is_finite_point(z) {
            return false;
        }
        if (z - self.outer.center).norm() >= self.outer.radius {
            return false;
        }
        if z == self.b {
            return false;
        }
        if self.balls.iter().any(|ball| ball.contains(z)) {
            return false;
        }
        !self.segments.iter().any(|s| s.contains(z))
    }

    /// Membership in clos U (segments and `b` have empty interior).
    pub fn is_in_closure(&self, z: Point) -> bool {
        is_finite_point(z)
            && (z - self.outer.center).norm() <= self.outer.radius
            && self
                .balls
                .iter()
                .all(|ball| (z - ball.center).norm_sqr() >= ball.radius * ball.radius)
    }

    /// Euclidean distance from `z ∈ U` to `ℂ \ U`.
    pub fn dist_to_complement(&self, z: Point) -> Result<f64> {
        if !self.is_in_u(z) {
            return Err(Error::PointNotInDomain(z));
        }
        let mut d = self.outer.radius - (z - self.outer.center).norm();
        d = d.min((z - self.b).norm());
        for ball in &self.balls {
            d = d.min((z - ball.center).norm() - ball.radius);
        }
        for s in &self.segments {
            d = d.min(s.distance(z));
        }
        Ok(d)
    }

    /// Distance from any `z` to the union of the boundary pieces (outer
    /// circle, ball circles, segments, `b`), which contains X = bdy U.
    pub fn dist_to_boundary(&self, z: Point) -> f64 {
        let mut d = ((z - self.outer.center).norm() - self.outer.radius).abs();
        d = d.min((z - self.b).norm());
        for ball in &self.balls {
            d = d.min(((z - ball.center).norm() - ball.radius).abs());
        }
        for s in &self.segments {
            d = d.min(s.distance(z));
        }
        d
    }

    pub fn balls_meeting_annulus(&self, n: u32) -> Vec<ClosedBall> {
        let annulus = Annulus::new(self.b, n);
        self.balls
            .iter()
            .filter(|ball| annulus.meets(ball))
            .copied()
            .collect()
    }

    /// True when the closed annulus `A_n(b)` lies in the open outer disk.
    pub fn annulus_inside_outer(&self, n: u32) -> bool {
        let a = Annulus::new(self.b, n);
        (self.b - self.outer.center).norm() + a.outer() < self.outer.radius
    }

    pub fn boundary_pieces(&self, include_b: bool) -> Vec<(BoundaryPiece, f64)> {
        let mut pieces = vec![(BoundaryPiece::Outer, self.outer.circumference())];
        pieces.extend(
            self.balls
                .iter()
                .enumerate()
                .map(|(i, ball)| (BoundaryPiece::Ball(i), ball.circumference())),
        );
        pieces.extend(
            self.segments
                .iter()
                .enumerate()
                .map(|(i, s)| (BoundaryPiece::Segment(i), s.length())),
        );
        if include_b {
            pieces.push((BoundaryPiece::Point, 0.0));
        }
        pieces
    }

    pub fn piece_point(&self, piece: BoundaryPiece, param: f64) -> Point {
        match piece {
            BoundaryPiece::Outer => {
                self.outer.center + Complex64::from_polar(self.outer.radius, param)
            }
            BoundaryPiece::Ball(i) => {
                let ball = &self.balls[i];
                ball.center + Complex64::from_polar(ball.radius, param)
            }
            BoundaryPiece::Segment(i) => self.segments[i].point_at(param.clamp(0.0, 1.0)),
            BoundaryPiece::Point => self.b,
        }
    }

    /// Nearest boundary piece to `z` and the parameter of the nearest point.
    pub fn project_to_boundary(&self, z: Point) -> (BoundaryPiece, f64) {
        let circle = |c: Point, r: f64| {
            let v = z - c;
            let theta = if v == Complex64::new(0.0, 0.0) { 0.0 } else { v.arg() };
            ((v.norm() - r).abs(), theta)
        };
        let (mut dist, theta) = circle(self.outer.center, self.outer.radius);
        let mut best = (BoundaryPiece::Outer, theta);
        for (i, ball) in self.balls.iter().enumerate() {
            let (d, theta) = circle(ball.center, ball.radius);
            if d < dist {
                dist = d;
                best = (BoundaryPiece::Ball(i), theta);
            }
        }
        for (i, s) in self.segments.iter().enumerate() {
            let d = s.distance(z);
            if d < dist {
                dist = d;
                best = (BoundaryPiece::Segment(i), s.closest_param(z));
            }
        }
        if (z - self.b).norm() < dist {
            best = (BoundaryPiece::Point, 0.0);
        }
        best
    }

    /// Deterministic boundary sample weighted by one-dimensional size.
    pub fn sample_boundary_points(&self, count: usize, seed: u64) -> Vec<Point> {
        let mut rng = stream_rng(seed, 0);
        let sampler = BoundarySampler::new(self, false);
        (0..count).map(|_| sampler.sample(self, &mut rng).1).collect()
    }

    pub fn random_interior_point<R: Rng>(&self, rng: &mut R) -> Point {
        loop {
            let r = self.outer.radius * rng.random::<f64>().sqrt();
            let theta = 2.0 * PI * rng.random::<f64>();
            let z = self.outer.center + Complex64::from_polar(r, theta);
            if self.is_in_u(z) {
                return z;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryPiece {
    Outer,
    Ball(usize),
    Segment(usize),
    Point,
}

impl BoundaryPiece {
    pub fn is_circle(&self) -> bool {
        matches!(self, BoundaryPiece::Outer | BoundaryPiece::Ball(_))
    }
}

/// Length-weighted choice of boundary piece and uniform parameter on it.
#[derive(Clone, Debug)]
pub struct BoundarySampler {
    pieces: Vec<BoundaryPiece>,
    cumulative: Vec<f64>,
}

impl BoundarySampler {
    pub fn new(d: &DomainSpec, include_b: bool) -> Self {
        let mut pieces = Vec::new();
        let mut cumulative = Vec::new();
        let mut total = 0.0;
        for (piece, len) in d.boundary_pieces(false) {
            total += len;
            pieces.push(piece);
            cumulative.push(total);
        }
        if include_b {
            // b is an atom of the sampler with the weight of the mean piece
            total += total / pieces.len() as f64;
            pieces.push(BoundaryPiece::Point);
            cumulative.push(total);
        }
        Self { pieces, cumulative }
    }

    pub fn pieces(&self) -> &[BoundaryPiece] {
        &self.pieces
    }

    pub fn sample<R: Rng>(&self, d: &DomainSpec, rng: &mut R) -> (BoundaryPiece, Point, f64) {
        let total = *self.cumulative.last().unwrap();
        let u = rng.random::<f64>() * total;
        let idx = self
            .cumulative
            .partition_point(|&c| c <= u)
            .min(self.pieces.len() - 1);
        let piece = self.pieces[idx];
        let param = random_param(piece, rng);
        (piece, d.piece_point(piece, param), param)
    }
}

pub fn random_param<R: Rng>(piece: BoundaryPiece, rng: &mut R) -> f64 {
    match piece {
        BoundaryPiece::Outer | BoundaryPiece::Ball(_) => 2.0 * PI * rng.random::<f64>(),
        BoundaryPiece::Segment(_) => rng.random::<f64>(),
        BoundaryPiece::Point => 0.0,
    }
}

/// Segment from `b` in direction `theta` along which the cone condition
/// holds with aperture `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NontangentialRay {
    pub b: Point,
    pub theta: f64,
    pub t: f64,
    pub r_max: f64,
}

impl NontangentialRay {
    pub fn new(b: Point, theta: f64, t: f64, r_max: f64) -> Result<Self> {
        if !is_finite_point(b) || !theta.is_finite() {
            return Err(Error::InvalidInput("ray needs finite b and theta".into()));
        }
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::InvalidInput(format!("aperture must lie in (0, 1), got {t}")));
        }
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(Error::InvalidInput(format!("r_max must be positive, got {r_max}")));
        }
        Ok(Self { b, theta, t, r_max })
    }

    /// The domain's certified probe ray.
    pub fn from_probe(d: &DomainSpec) -> Self {
        let p = d.probe();
        Self {
            b: d.b(),
            theta: p.theta,
            t: p.t,
            r_max: p.eps_range[1],
        }
    }

    pub fn point(&self, r: f64) -> Point {
        self.b + Complex64::from_polar(r, self.theta)
    }
}

/// `z_n = b + r0 rho^n e^{i theta}` for `n = 0..count`.
pub fn ray_sequence(ray: &NontangentialRay, r0: f64, rho: f64, count: usize) -> Result<Vec<Point>> {
    if !(r0 > 0.0 && r0 <= ray.r_max) {
        return Err(Error::InvalidInput(format!(
            "r0 = {r0} must lie in (0, r_max = {}]",
            ray.r_max
        )));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidInput(format!("rho must lie in (0, 1), got {rho}")));
    }
    let dir = Complex64::from_polar(1.0, ray.theta);
    Ok((0..count)
        .map(|n| ray.b + dir * (r0 * rho.powi(n as i32)))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct NontangentialCheck {
    pub ok: bool,
    pub first_violation: Option<usize>,
}

/// Every point in U with `dist(z_n, ℂ \ U) >= t |z_n - b|`.
pub fn check_nontangential(seq: &[Point], t: f64, d: &DomainSpec) -> Result<NontangentialCheck> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::InvalidInput(format!("aperture must lie in (0, 1), got {t}")));
    }
    let first_violation = seq.iter().position(|&z| match d.dist_to_complement(z) {
        Ok(dist) => dist < t * (z - d.b()).norm(),
        Err(_) => true,
    });
    Ok(NontangentialCheck {
        ok: first_violation.is_none(),
        first_violation,
    })
}

/// Analytic lower bound for `dist(b + s e^{i theta}, ℂ \ U) / s` over
/// `0 < s <= eps_hi`.
///
/// A ball whose directions from `b` stay at angular distance `gamma` from
/// `theta` is at distance at least `s sin(min(gamma, pi/2))` from the ray
/// point; segments are handled through the angular sector they subtend.
pub fn certify_probe_aperture(
    outer: &ClosedBall,
    b: Point,
    balls: &[ClosedBall],
    segments: &[Segment],
    theta: f64,
    eps_hi: f64,
) -> f64 {
    let gap_bound = |gamma: f64| gamma.clamp(0.0, PI / 2.0).sin();
    let angle_between = |phi: f64| {
        let mut d = (phi - theta).rem_euclid(2.0 * PI);
        if d > PI {
            d = 2.0 * PI - d;
        }
        d
    };
    let slack = outer.radius - (b - outer.center).norm();
    let mut t = ((slack - eps_hi) / eps_hi).min(1.0);
    for ball in balls {
        let v = ball.center - b;
        let rho = v.norm();
        let half_width = if ball.radius >= rho {
            PI
        } else {
            (ball.radius / rho).asin()
        };
        t = t.min(gap_bound(angle_between(v.arg()) - half_width));
    }
    for s in segments {
        let (vp, vq) = (s.p - b, s.q - b);
        if s.contains(b) {
            return 0.0;
        }
        let (ap, aq) = (angle_between(vp.arg()), angle_between(vq.arg()));
        // the sector spanned by the endpoints (< pi since b is off the segment)
        let span = (vq / vp).arg();
        let dir = Complex64::from_polar(1.0, theta);
        let inside = {
            let to_dir = (dir / vp).arg();
            if span >= 0.0 {
                to_dir >= 0.0 && to_dir <= span
            } else {
                to_dir <= 0.0 && to_dir >= span
            }
        };
        let gamma = if inside { 0.0 } else { ap.min(aq) };
        t = t.min(gap_bound(gamma));
    }
    t
}
