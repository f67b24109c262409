//! Members of `A_α(U)` given in closed form: finite sums of Cauchy kernels
//! `c / (z - a)^m` with poles inside removed balls, a polynomial in
//! `(z - b)`, and kernel families whose poles cluster at `b`.
//!
//! A clustering family places one simple pole with weight `ε_n` at the center
//! of every ball of a designed domain. The stored domain only holds the balls
//! up to some depth; the omitted poles continue the design's placement rule
//! and are accounted for by closed-form tail bounds.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::content::{single_annulus, RadiiSchedule, SeriesFamily, PLACEMENT_MODULUS};
use crate::geometry::{random_param, BoundaryPiece, BoundarySampler, DomainSpec};
use crate::numeric::{stream_rng, CompensatedSum};
use crate::{Error, Point, Result};

pub const MAX_POLY_DEGREE: usize = 6;
/// Largest admissible remainder for the derivation oracle.
pub const ORACLE_TOL: f64 = 1e-8;
/// Pairs closer than this are skipped by the samplers.
const MIN_PAIR_SEPARATION: f64 = 1e-12;
const CHUNK: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelTerm {
    pub pole: Point,
    pub order: u32,
    pub coeff: Complex64,
}

/// Weights of a clustering family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EpsilonRule {
    /// `ε_n = scale * base^-n` for every ball of annulus `n`.
    Geometric { scale: f64, base: f64 },
}

impl EpsilonRule {
    pub fn eps(&self, n: u32) -> f64 {
        match *self {
            EpsilonRule::Geometric { scale, base } => scale * base.powi(-(n as i32)),
        }
    }

    fn scale(&self) -> f64 {
        match *self {
            EpsilonRule::Geometric { scale, .. } => scale,
        }
    }

    fn base(&self) -> f64 {
        match *self {
            EpsilonRule::Geometric { base, .. } => base,
        }
    }

    /// `scale * Σ_{n >= from} (x / base)^n`, infinite unless `x < base`.
    fn weighted_tail(&self, x: f64, from: u32) -> f64 {
        let q = x / self.base();
        if self.scale() == 0.0 {
            0.0
        } else if q < 1.0 {
            self.scale().abs() * q.powi(from as i32) / (1.0 - q)
        } else {
            f64::INFINITY
        }
    }
}

/// Serialized form of a test function; the domain is stored separately.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionSpec {
    #[serde(default)]
    pub kernels: Vec<KernelTerm>,
    /// Coefficients of `Σ p_j (z - b)^j`.
    #[serde(default)]
    pub poly: Vec<Complex64>,
    #[serde(default)]
    pub epsilon_rule: Option<EpsilonRule>,
}

/// A value together with a bound on the omitted clustering tail.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub value: Complex64,
    pub tail: f64,
}

#[derive(Clone, Debug)]
struct Cluster {
    rule: EpsilonRule,
    coeff: Complex64,
    depth: u32,
    /// Annulus index, pole and ball radius of every stored pole.
    poles: Vec<(u32, Point, f64)>,
    schedule: RadiiSchedule,
    b: Point,
    theta: f64,
    beta: f64,
}

impl Cluster {
    fn weight(&self, n: u32) -> Complex64 {
        self.coeff * self.rule.eps(n)
    }

    /// Bound on `Σ |ε_n| / |z - a|^power` over the omitted poles.
    fn tail(&self, z: Point, power: i32) -> f64 {
        if self.coeff == Complex64::new(0.0, 0.0) || self.rule.scale() == 0.0 {
            return 0.0;
        }
        let kbar = self.schedule.max_count() as f64;
        let s = (z - self.b).norm();
        let mut acc = CompensatedSum::new();
        let mut n = self.depth + 1;
        if s == 0.0 {
            // |b - a| = 0.75 * 2^-n exactly
            let x = 2f64.powi(power);
            acc.add(kbar * self.rule.weighted_tail(x, n) / PLACEMENT_MODULUS.powi(power));
        } else {
            while PLACEMENT_MODULUS * 2f64.powi(-(n as i32)) > s / 2.0 {
                for a in self.schedule.centers(self.b, self.theta, n) {
                    acc.add(self.rule.eps(n).abs() / (z - a).norm().powi(power));
                }
                n += 1;
            }
            // beyond this point every omitted pole has |z - a| >= s / 2
            acc.add(kbar * self.rule.weighted_tail(1.0, n) * (2.0 / s).powi(power));
        }
        self.coeff.norm() * acc.value()
    }

    /// Bound on `Σ |ε_n| / r_n^2` over the omitted balls, from
    /// `1 / r_n^2 <= 1 / budget radius^2 + 1 / fit radius^2`.
    fn lip_tail(&self) -> f64 {
        if self.coeff == Complex64::new(0.0, 0.0) || self.rule.scale() == 0.0 {
            return 0.0;
        }
        let kbar = self.schedule.max_count() as f64;
        if kbar == 0.0 {
            return 0.0;
        }
        let from = self.depth + 1;
        let p = 2.0 / self.beta;
        let safety = 1.0 + 1e-10;
        let fit = 64.0 * kbar * self.rule.weighted_tail(4.0, from);
        let budget = match self.schedule.family {
            SeriesFamily::Geometric { scale, ratio } => {
                let c = (4.0 / ratio).powf(p);
                kbar * (kbar / scale).powf(p) * self.rule.weighted_tail(c, from)
            }
            SeriesFamily::InverseSquare { scale } => {
                // t_n = scale_eps base^-n (kbar (n+1)^2 / S)^p 4^{pn}; ratio test
                let c = 4f64.powf(p);
                let term = |n: u32| {
                    self.rule.eps(n).abs()
                        * (kbar * ((n + 1) as f64).powi(2) / scale).powf(p)
                        * c.powi(n as i32)
                };
                let ratio_bound =
                    |n: u32| (((n + 2) as f64) / ((n + 1) as f64)).powf(2.0 * p) * c / self.rule.base();
                let mut acc = CompensatedSum::new();
                let mut n = from;
                while ratio_bound(n) >= 1.0 {
                    if n > from + 10_000 || !term(n).is_finite() {
                        return f64::INFINITY;
                    }
                    acc.add(term(n));
                    n += 1;
                }
                acc.add(term(n) / (1.0 - ratio_bound(n)));
                kbar * acc.value()
            }
        };
        self.coeff.norm() * safety * (fit + budget)
    }
}

/// Asymptotic ratio `r_{n+1} / r_n` of the design radii.
fn radius_ratio(schedule: &RadiiSchedule, beta: f64) -> f64 {
    match schedule.family {
        SeriesFamily::Geometric { ratio, .. } => (ratio / 4.0).powf(1.0 / beta).min(0.5),
        SeriesFamily::InverseSquare { .. } => 0.25f64.powf(1.0 / beta).min(0.5),
    }
}

#[derive(Clone, Debug)]
pub struct TestFunction {
    domain: Arc<DomainSpec>,
    kernels: Vec<KernelTerm>,
    /// Distance from each explicit pole to clos U (lower bound).
    clearances: Vec<f64>,
    poly: Vec<Complex64>,
    clusters: Vec<Cluster>,
}

/// Lower bound on the distance from `pole` to clos U: the pole must sit in
/// a removed ball at depth at least half its radius.
fn pole_clearance(d: &DomainSpec, pole: Point) -> Result<f64> {
    d.balls()
        .iter()
        .map(|ball| ball.radius - (pole - ball.center).norm())
        .zip(d.balls())
        .filter(|(depth, ball)| *depth >= ball.radius / 2.0)
        .map(|(depth, _)| depth)
        .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))))
        .ok_or(Error::PoleOutsideComplement(pole))
}

impl TestFunction {
    pub fn new(domain: Arc<DomainSpec>, kernels: Vec<KernelTerm>, poly: Vec<Complex64>) -> Result<Self> {
        if poly.len() > MAX_POLY_DEGREE + 1 {
            return Err(Error::InvalidInput(format!(
                "polynomial degree {} exceeds {MAX_POLY_DEGREE}",
                poly.len() - 1
            )));
        }
        let mut clearances = Vec::with_capacity(kernels.len());
        for k in &kernels {
            if k.order == 0 {
                return Err(Error::InvalidInput("kernel order must be at least 1".into()));
            }
            clearances.push(pole_clearance(&domain, k.pole)?);
        }
        Ok(Self {
            domain,
            kernels,
            clearances,
            poly,
            clusters: Vec::new(),
        })
    }

    pub fn polynomial(domain: Arc<DomainSpec>, poly: Vec<Complex64>) -> Result<Self> {
        Self::new(domain, vec![], poly)
    }

    /// `z`, written as `b + (z - b)`.
    pub fn identity(domain: Arc<DomainSpec>) -> Self {
        let b = domain.b();
        Self::polynomial(domain, vec![b, Complex64::new(1.0, 0.0)]).expect("degree 1")
    }

    /// `coeff / (z - pole)`.
    pub fn kernel(domain: Arc<DomainSpec>, pole: Point, coeff: Complex64) -> Result<Self> {
        Self::new(domain, vec![KernelTerm { pole, order: 1, coeff }], vec![])
    }

    pub fn from_spec(domain: Arc<DomainSpec>, spec: &FunctionSpec) -> Result<Self> {
        let base = Self::new(domain.clone(), spec.kernels.clone(), spec.poly.clone())?;
        match spec.epsilon_rule {
            Some(rule) => base.add(&build_cluster_function(domain, rule)?),
            None => Ok(base),
        }
    }

    /// The serialized form. Fails for combinations of several clustering
    /// parts, which the format cannot express.
    pub fn to_spec(&self) -> Result<FunctionSpec> {
        let epsilon_rule = match self.clusters.as_slice() {
            [] => None,
            [c] if c.coeff == Complex64::new(1.0, 0.0) => Some(c.rule),
            _ => {
                return Err(Error::InvalidInput(
                    "only a single unscaled clustering part can be serialized".into(),
                ))
            }
        };
        Ok(FunctionSpec {
            kernels: self.kernels.clone(),
            poly: self.poly.clone(),
            epsilon_rule,
        })
    }

    pub fn domain(&self) -> &Arc<DomainSpec> {
        &self.domain
    }

    pub fn is_clustering(&self) -> bool {
        !self.clusters.is_empty()
    }

    /// Explicit and stored clustering poles, as kernel terms.
    pub fn kernel_terms(&self) -> Vec<KernelTerm> {
        let mut out = self.kernels.clone();
        for c in &self.clusters {
            out.extend(c.poles.iter().map(|&(n, pole, _)| KernelTerm {
                pole,
                order: 1,
                coeff: c.weight(n),
            }));
        }
        out
    }

    pub fn poly(&self) -> &[Complex64] {
        &self.poly
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        for k in &mut out.kernels {
            k.coeff *= c;
        }
        for p in &mut out.poly {
            *p *= c;
        }
        for cl in &mut out.clusters {
            cl.coeff *= c;
        }
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if !(Arc::ptr_eq(&self.domain, &other.domain) || *self.domain == *other.domain) {
            return Err(Error::InvalidInput("test functions live on different domains".into()));
        }
        let mut out = self.clone();
        out.kernels.extend_from_slice(&other.kernels);
        out.clearances.extend_from_slice(&other.clearances);
        if out.poly.len() < other.poly.len() {
            out.poly.resize(other.poly.len(), Complex64::new(0.0, 0.0));
        }
        for (p, q) in out.poly.iter_mut().zip(&other.poly) {
            *p += q;
        }
        out.clusters.extend(other.clusters.iter().cloned());
        Ok(out)
    }

    /// Product of two polynomial test functions.
    pub fn poly_product(&self, other: &Self) -> Result<Self> {
        if !(self.kernels.is_empty() && other.kernels.is_empty())
            || self.is_clustering()
            || other.is_clustering()
        {
            return Err(Error::InvalidInput("products are only formed for polynomials".into()));
        }
        if self.poly.is_empty() || other.poly.is_empty() {
            return Self::polynomial(self.domain.clone(), vec![]);
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.poly.len() + other.poly.len() - 1];
        for (i, p) in self.poly.iter().enumerate() {
            for (j, q) in other.poly.iter().enumerate() {
                out[i + j] += p * q;
            }
        }
        Self::polynomial(self.domain.clone(), out)
    }

    /// The same function with clustering poles beyond `depth` moved into
    /// the certified tail.
    pub fn truncated(&self, depth: u32) -> Self {
        let mut out = self.clone();
        for c in &mut out.clusters {
            if depth < c.depth {
                c.poles.retain(|&(n, _, _)| n <= depth);
                c.depth = depth;
            }
        }
        out
    }

    fn check_pole(&self, z: Point) -> Result<()> {
        let hit = self.kernels.iter().any(|k| k.pole == z)
            || self
                .clusters
                .iter()
                .any(|c| c.poles.iter().any(|&(_, a, _)| a == z));
        if hit {
            Err(Error::PoleHit(z))
        } else {
            Ok(())
        }
    }

    fn poly_eval(&self, u: Complex64) -> Complex64 {
        self.poly
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &p| acc * u + p)
    }

    fn poly_derivative(&self, u: Complex64) -> Complex64 {
        self.poly
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, (j, &p)| acc * u + p * j as f64)
    }

    /// Value at `z` (including `z = b` for clustering families, where the
    /// series converges absolutely) and the tail bound.
    pub fn eval(&self, z: Point) -> Result<Evaluation> {
        self.check_pole(z)?;
        let mut terms = Vec::with_capacity(self.kernels.len() + 1);
        terms.push(self.poly_eval(z - self.domain.b()));
        for k in &self.kernels {
            terms.push(k.coeff / (z - k.pole).powu(k.order));
        }
        let mut tail = 0.0;
        for c in &self.clusters {
            for &(n, a, _) in &c.poles {
                terms.push(c.weight(n) / (z - a));
            }
            tail += c.tail(z, 1);
        }
        Ok(Evaluation {
            value: crate::numeric::compensated_sum_complex(terms),
            tail,
        })
    }

    /// Value without the tail bound.
    pub fn value(&self, z: Point) -> Result<Complex64> {
        self.eval(z).map(|e| e.value)
    }

    pub fn derivative_at(&self, z: Point) -> Result<Evaluation> {
        self.check_pole(z)?;
        let mut terms = Vec::with_capacity(self.kernels.len() + 1);
        terms.push(self.poly_derivative(z - self.domain.b()));
        for k in &self.kernels {
            terms.push(-(k.order as f64) * k.coeff / (z - k.pole).powu(k.order + 1));
        }
        let mut tail = 0.0;
        for c in &self.clusters {
            for &(n, a, _) in &c.poles {
                terms.push(-c.weight(n) / ((z - a) * (z - a)));
            }
            tail += c.tail(z, 2);
        }
        Ok(Evaluation {
            value: crate::numeric::compensated_sum_complex(terms),
            tail,
        })
    }

    /// The normalised point derivation at `b` applied to this function,
    /// i.e. `f'(b)`, with its certified remainder.
    pub fn derivation_oracle(&self) -> Result<Evaluation> {
        let e = self.derivative_at(self.domain.b())?;
        if !(e.tail <= ORACLE_TOL) {
            return Err(Error::TailNotCertified {
                bound: e.tail,
                tol: ORACLE_TOL,
            });
        }
        Ok(e)
    }

    /// Lipschitz-1 constant `K` on clos U and the Lip-α constant
    /// `K * diam^(1-α)`.
    pub fn lip_bounds(&self) -> LipBounds {
        let d = &self.domain;
        let reach = d.reach_from_b();
        let mut acc = CompensatedSum::new();
        for (j, &p) in self.poly.iter().enumerate().skip(1) {
            acc.add(j as f64 * p.norm() * reach.powi(j as i32 - 1));
        }
        for (k, &delta) in self.kernels.iter().zip(&self.clearances) {
            acc.add(k.coeff.norm() * k.order as f64 / delta.powi(k.order as i32 + 1));
        }
        for c in &self.clusters {
            for &(n, _, r) in &c.poles {
                acc.add(c.weight(n).norm() / (r * r));
            }
            acc.add(c.lip_tail());
        }
        let k = acc.value();
        LipBounds {
            k,
            kappa_bar: k * d.diameter_bound().powf(1.0 - d.alpha()),
        }
    }

    /// Radius `ρ` of a disk around `b` free of poles and `C` with
    /// `|(f(z) - f(b)) / (z - b) - f'(b)| <= C |z - b|` for `|z - b| <= ρ`.
    /// Clustering families are not holomorphic near `b` and have none.
    pub fn taylor_constant(&self) -> Result<(f64, f64)> {
        if self.is_clustering() {
            return Err(Error::InvalidInput(
                "clustering families are not holomorphic near b".into(),
            ));
        }
        let b = self.domain.b();
        let nearest = self
            .kernels
            .iter()
            .map(|k| (k.pole - b).norm())
            .fold(f64::INFINITY, f64::min);
        let rho = if nearest.is_finite() {
            nearest / 2.0
        } else {
            self.domain.reach_from_b()
        };
        let mut second = CompensatedSum::new();
        for (j, &p) in self.poly.iter().enumerate().skip(2) {
            second.add((j * (j - 1)) as f64 * p.norm() * rho.powi(j as i32 - 2));
        }
        for k in &self.kernels {
            let m = k.order as f64;
            let gap = (k.pole - b).norm() - rho;
            second.add(k.coeff.norm() * m * (m + 1.0) / gap.powi(k.order as i32 + 2));
        }
        Ok((rho, second.value() / 2.0))
    }

    pub fn tail_certificate(&self) -> Option<TailCertificate> {
        let c = self.clusters.first()?;
        let b = self.domain.b();
        Some(TailCertificate {
            rule: c.rule,
            depth: c.depth,
            value_tail_at_b: self.clusters.iter().map(|c| c.tail(b, 1)).sum(),
            oracle_tail: self.clusters.iter().map(|c| c.tail(b, 2)).sum(),
            lip_tail: self.clusters.iter().map(|c| c.lip_tail()).sum(),
            derivation: format!(
                "omitted poles continue the design placement; |b - a| = 0.75 * 2^-n gives \
                 value tail <= kmax/0.75 * scale * Σ_(n>{d}) (2/base)^n and oracle tail <= \
                 kmax/0.75^2 * scale * Σ_(n>{d}) (4/base)^n",
                d = c.depth
            ),
        })
    }

    /// Sampled `sup |f(z) - f(w)| / |z - w|^α` over pairs in clos U. The
    /// pairs drawn for `samples` are a prefix of those for any larger count.
    pub fn empirical_seminorm(&self, samples: usize, seed: u64) -> SeminormEstimate {
        let alpha = self.domain.alpha();
        let sampler = PointSampler::new(&self.domain);
        let best = chunked_max(samples, seed, SEMINORM_STREAM, |rng| {
            let (z, w, _) = sampler.pair(rng);
            lip_quotient(self, z, w, alpha).map(|q| (q, z, w, false))
        });
        let bounds = self.lip_bounds();
        let kappa_hat = best.all.map_or(0.0, |b| b.value);
        SeminormEstimate {
            kappa_hat,
            kappa_bar: bounds.kappa_bar,
            lip_one: bounds.k,
            argmax_pair: best.all.map(|b| (b.z, b.w)),
            samples,
            seed,
            within_bound: kappa_hat <= bounds.kappa_bar * (1.0 + 1e-9),
        }
    }

    /// Sampled `sup |f(z) - f(w)| / |z - w|^α` over pairs with
    /// `|z - w| < δ`, for each `δ` of the grid.
    pub fn little_lip_profile(&self, delta_grid: &[f64], samples: usize, seed: u64) -> Result<Vec<ProfilePoint>> {
        if delta_grid.iter().any(|&d| !(d > 0.0 && d.is_finite()))
            || delta_grid.windows(2).any(|w| w[1] >= w[0])
        {
            return Err(Error::InvalidInput("deltas must be positive and decreasing".into()));
        }
        let alpha = self.domain.alpha();
        let k = self.lip_bounds().k;
        let sampler = PointSampler::new(&self.domain);
        Ok(delta_grid
            .iter()
            .enumerate()
            .map(|(i, &delta)| {
                let stream = PROFILE_STREAM + ((i as u64) << 24);
                let best = chunked_max(samples, seed, stream, |rng| {
                    let (z, _) = sampler.point(rng);
                    let w = z + Complex64::from_polar(delta * rng.random::<f64>().sqrt(), 2.0 * PI * rng.random::<f64>());
                    if (z - w).norm() >= delta || !self.domain.is_in_closure(w) {
                        return None;
                    }
                    lip_quotient(self, z, w, alpha).map(|q| (q, z, w, false))
                });
                ProfilePoint {
                    delta,
                    sup_ratio: best.all.map_or(0.0, |b| b.value),
                    lip_one_bound: k * delta.powf(1.0 - alpha),
                }
            })
            .collect())
    }
}

/// `|f(z) - f(w)| / |z - w|^α`, or `None` for coincident points and poles.
pub(crate) fn lip_quotient(f: &TestFunction, z: Point, w: Point, alpha: f64) -> Option<f64> {
    let sep = (z - w).norm();
    if sep < MIN_PAIR_SEPARATION {
        return None;
    }
    let fz = f.value(z).ok()?;
    let fw = f.value(w).ok()?;
    Some((fz - fw).norm() / sep.powf(alpha))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LipBounds {
    /// Lipschitz-1 constant on clos U.
    pub k: f64,
    pub kappa_bar: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeminormEstimate {
    pub kappa_hat: f64,
    pub kappa_bar: f64,
    pub lip_one: f64,
    pub argmax_pair: Option<(Point, Point)>,
    pub samples: usize,
    pub seed: u64,
    pub within_bound: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProfilePoint {
    pub delta: f64,
    pub sup_ratio: f64,
    /// `K δ^(1-α)`, the bound implied by the Lipschitz-1 constant.
    pub lip_one_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailCertificate {
    pub rule: EpsilonRule,
    pub depth: u32,
    pub value_tail_at_b: f64,
    pub oracle_tail: f64,
    pub lip_tail: f64,
    pub derivation: String,
}

/// One simple pole of weight `ε_n` at the center of every ball of a designed
/// domain, `n` being the ball's annulus.
pub fn build_cluster_function(d: Arc<DomainSpec>, rule: EpsilonRule) -> Result<TestFunction> {
    let EpsilonRule::Geometric { scale, base } = rule;
    if !(scale.is_finite() && base > 1.0 && base.is_finite()) {
        return Err(Error::InvalidInput(format!("invalid epsilon rule {rule:?}")));
    }
    let schedule = d
        .design()
        .cloned()
        .ok_or_else(|| Error::InvalidInput("clustering families need a designed domain".into()))?;
    let beta = d.beta();
    let threshold = radius_ratio(&schedule, beta).powi(-2);
    if base <= threshold {
        return Err(Error::DivergentNorm(format!(
            "Σ ε_n / r_n^2 diverges: base {base} must exceed {threshold} for radius ratio {}",
            radius_ratio(&schedule, beta)
        )));
    }
    let b = d.b();
    let mut poles = Vec::with_capacity(d.balls().len());
    for ball in d.balls() {
        let n = single_annulus(b, ball).ok_or_else(|| {
            Error::InvalidInput("every ball of a designed domain meets one annulus".into())
        })?;
        poles.push((n, ball.center, ball.radius));
    }
    let depth = poles.iter().map(|p| p.0).max().unwrap_or(schedule.n_range[1]).max(schedule.n_range[1]);
    for n in schedule.n_range[0]..=depth {
        let present = poles.iter().filter(|p| p.0 == n).count();
        if present != schedule.count(n) as usize {
            return Err(Error::InvalidInput(format!(
                "annulus {n} holds {present} balls but the design places {}",
                schedule.count(n)
            )));
        }
    }
    let theta = d.probe().theta;
    let mut f = TestFunction::new(d, vec![], vec![])?;
    f.clusters.push(Cluster {
        rule,
        coeff: Complex64::new(1.0, 0.0),
        depth,
        poles,
        schedule,
        b,
        theta,
        beta,
    });
    Ok(f)
}

const SEMINORM_STREAM: u64 = 1 << 40;
const PROFILE_STREAM: u64 = 2 << 40;

/// Points of clos U drawn from a mixture: length-weighted boundary,
/// piece-uniform boundary, area-uniform interior and points just inside
/// the boundary.
pub struct PointSampler<'a> {
    d: &'a DomainSpec,
    weighted: BoundarySampler,
    pieces: Vec<BoundaryPiece>,
}

impl<'a> PointSampler<'a> {
    pub fn new(d: &'a DomainSpec) -> Self {
        let weighted = BoundarySampler::new(d, false);
        let pieces = weighted.pieces().to_vec();
        Self { d, weighted, pieces }
    }

    pub fn domain(&self) -> &DomainSpec {
        self.d
    }

    fn uniform_piece<R: Rng>(&self, rng: &mut R) -> (BoundaryPiece, Point) {
        let piece = self.pieces[rng.random_range(0..self.pieces.len())];
        let param = random_param(piece, rng);
        (piece, self.d.piece_point(piece, param))
    }

    /// A point and, when it was drawn on the boundary, its piece.
    pub fn point<R: Rng>(&self, rng: &mut R) -> (Point, Option<BoundaryPiece>) {
        let u: f64 = rng.random();
        if u < 0.25 {
            let (piece, p, _) = self.weighted.sample(self.d, rng);
            (p, Some(piece))
        } else if u < 0.5 {
            let (piece, p) = self.uniform_piece(rng);
            (p, Some(piece))
        } else if u < 0.75 {
            (self.d.random_interior_point(rng), None)
        } else {
            let (piece, p) = self.uniform_piece(rng);
            let offset = 0.1 * self.d.outer().radius * 10f64.powf(-5.0 * rng.random::<f64>());
            let z = p + Complex64::from_polar(offset, 2.0 * PI * rng.random::<f64>());
            if self.d.is_in_u(z) {
                (z, None)
            } else {
                (p, Some(piece))
            }
        }
    }

    /// A pair of points; half the time the second point lies on the same
    /// boundary piece as the first. The flag is true when both points were
    /// drawn on the boundary.
    pub fn pair<R: Rng>(&self, rng: &mut R) -> (Point, Point, bool) {
        let (z, zp) = self.point(rng);
        let same: bool = rng.random_bool(0.5);
        match zp {
            Some(piece) if same => {
                let w = self.d.piece_point(piece, random_param(piece, rng));
                (z, w, true)
            }
            _ => {
                let (w, wp) = self.point(rng);
                (z, w, zp.is_some() && wp.is_some())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Best {
    pub value: f64,
    pub z: Point,
    pub w: Point,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct SampleMax {
    pub all: Option<Best>,
    /// Maximum over draws flagged as boundary pairs.
    pub flagged: Option<Best>,
}

fn keep(slot: &mut Option<Best>, cand: Best) {
    if slot.is_none_or(|b| cand.value > b.value) {
        *slot = Some(cand);
    }
}

/// Maximum of `draw` over `samples` draws. Draws are split into fixed
/// chunks, each with its own random stream, so the result is independent
/// of the thread count and grows monotonically with `samples`.
pub(crate) fn chunked_max<F>(samples: usize, seed: u64, stream: u64, draw: F) -> SampleMax
where
    F: Fn(&mut ChaCha8Rng) -> Option<(f64, Point, Point, bool)> + Sync,
{
    let chunks = samples.div_ceil(CHUNK);
    let per_chunk: Vec<SampleMax> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, stream + c as u64);
            let count = CHUNK.min(samples - c * CHUNK);
            let mut out = SampleMax::default();
            for _ in 0..count {
                if let Some((value, z, w, flag)) = draw(&mut rng) {
                    if value.is_finite() {
                        let cand = Best { value, z, w };
                        keep(&mut out.all, cand);
                        if flag {
                            keep(&mut out.flagged, cand);
                        }
                    }
                }
            }
            out
        })
        .collect();
    let mut out = SampleMax::default();
    for m in per_chunk {
        if let Some(b) = m.all {
            keep(&mut out.all, b);
        }
        if let Some(b) = m.flagged {
            keep(&mut out.flagged, b);
        }
    }
    out
}
