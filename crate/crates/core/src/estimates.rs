//! Falsification harnesses for the growth estimates of Cauchy transforms
//! near `b`, the boundary seminorm equality, the Fubini identity for `T₁`
//! and the transform identities used in the convergence argument.
//!
//! Transforms are reached through [`CauchyTransforms`] so that a harness can
//! be run against a deliberately broken implementation.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::function::{chunked_max, lip_quotient, PointSampler, TestFunction};
use crate::geometry::{BoundaryPiece, DomainSpec};
use crate::io::{csv, fmt_f64};
use crate::measure::{module_action, PairMeasure, ScalarMeasure};
use crate::numeric::{compensated_sum_complex, gauss_legendre, loglog_slope, lsq_slope};
use crate::{Error, Point, Result};

/// Largest `|g(b)|` accepted as `g(b) = 0`.
pub const VANISHING_TOL: f64 = 1e-12;
/// Largest log-log growth exponent accepted for a bounded ratio.
pub const SLOPE_TOL: f64 = 0.05;

pub trait CauchyTransforms: Sync {
    fn h(&self, mu: &PairMeasure, a: Point) -> Result<Complex64>;
    fn h_tilde(&self, mu: &PairMeasure, a: Point) -> Result<f64>;
    fn scalar(&self, lambda: &ScalarMeasure, a: Point) -> Result<Complex64>;
}

/// The closed-form transforms of [`PairMeasure`] and [`ScalarMeasure`].
#[derive(Clone, Copy, Debug, Default)]
pub struct Exact;

impl CauchyTransforms for Exact {
    fn h(&self, mu: &PairMeasure, a: Point) -> Result<Complex64> {
        mu.cauchy_h(a)
    }

    fn h_tilde(&self, mu: &PairMeasure, a: Point) -> Result<f64> {
        mu.cauchy_h_majorant(a)
    }

    fn scalar(&self, lambda: &ScalarMeasure, a: Point) -> Result<Complex64> {
        lambda.cauchy(a)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Lemma {
    L1,
    L2,
    L3,
}

/// Log-spaced points `b + r e^{i theta}`, `r` from `r_max` down to `r_min`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RaySpec {
    pub theta: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub count: usize,
}

impl RaySpec {
    pub fn radii(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.r_max];
        }
        (0..self.count)
            .map(|i| {
                let s = i as f64 / (self.count - 1) as f64;
                self.r_max * (self.r_min / self.r_max).powf(s)
            })
            .collect()
    }

    pub fn points(&self, b: Point) -> Vec<Point> {
        self.radii()
            .into_iter()
            .map(|r| b + Complex64::from_polar(r, self.theta))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if !(self.r_min > 0.0 && self.r_max >= self.r_min && self.count >= 1 && self.theta.is_finite()) {
            return Err(Error::InvalidInput(format!("bad ray spec {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScanPoint {
    pub a: Point,
    pub dist_to_x: f64,
    pub r: f64,
    pub lhs: f64,
    pub normalizer: f64,
    pub ratio: f64,
    /// L1 only: the ratio with `dist(a, X)` in place of `|a - b|`.
    pub ratio_dist: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioScan {
    pub lemma: Lemma,
    pub t: f64,
    pub points: Vec<ScanPoint>,
    pub sup_ratio: f64,
    /// Least-squares slope of `ln ratio` against `ln r`; `None` when fewer
    /// than two ratios are positive.
    pub loglog_slope: Option<f64>,
    /// `-loglog_slope`: positive when the ratio grows as `r -> 0`.
    pub growth_exponent: Option<f64>,
    /// Points where `|π H(a)| > H̃(a)`, with the two sides.
    pub majorant_violations: Vec<(Point, f64, f64)>,
    /// L2 only: points where the triangle inequality against the S1 and
    /// scalar components fails.
    pub triangle_violations: Vec<Point>,
    /// L1 and L2: `(‖λ‖, κ̄(g) ‖μ‖)` for the residual part of the split.
    pub split_norms: Option<(f64, f64)>,
}

impl RatioScan {
    pub fn split_bound_holds(&self) -> bool {
        self.split_norms.is_none_or(|(lam, bound)| lam <= bound * (1.0 + 1e-12))
    }

    /// Bounded ratio: finite supremum and no growth faster than
    /// `r^-SLOPE_TOL`.
    pub fn bounded(&self) -> bool {
        self.sup_ratio.is_finite() && self.growth_exponent.is_none_or(|g| g <= SLOPE_TOL)
    }

    pub fn to_csv(&self) -> String {
        csv(
            &["r", "dist", "lhs", "normalizer", "ratio"],
            self.points.iter().map(|p| {
                vec![
                    fmt_f64(p.r),
                    fmt_f64(p.dist_to_x),
                    fmt_f64(p.lhs),
                    fmt_f64(p.normalizer),
                    fmt_f64(p.ratio),
                ]
            }),
        )
    }

    pub fn summary(&self) -> ScanSummary {
        ScanSummary {
            lemma: self.lemma,
            t: self.t,
            points: self.points.len(),
            sup_ratio: self.sup_ratio,
            loglog_slope: self.loglog_slope,
            growth_exponent: self.growth_exponent,
            bounded: self.bounded(),
            split_bound_holds: self.split_bound_holds(),
            majorant_violations: self.majorant_violations.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanSummary {
    pub lemma: Lemma,
    pub t: f64,
    pub points: usize,
    pub sup_ratio: f64,
    pub loglog_slope: Option<f64>,
    pub growth_exponent: Option<f64>,
    pub bounded: bool,
    pub split_bound_holds: bool,
    pub majorant_violations: usize,
}

/// Ray points with their distance to X, each checked against the cone.
fn cone_points(d: &DomainSpec, t: f64, ray: &RaySpec) -> Result<Vec<(Point, f64, f64)>> {
    ray.validate()?;
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::InvalidInput(format!("aperture must lie in (0, 1), got {t}")));
    }
    let b = d.b();
    ray.points(b)
        .into_iter()
        .enumerate()
        .map(|(index, a)| {
            let r = (a - b).norm();
            match d.dist_to_complement(a) {
                Ok(dist) if dist >= t * r => Ok((a, dist, r)),
                _ => Err(Error::ApertureViolated { index }),
            }
        })
        .collect()
}

fn check_vanishing(g: &TestFunction) -> Result<()> {
    let gb = g.value(g.domain().b())?;
    if gb.norm() > VANISHING_TOL {
        return Err(Error::InvalidInput(format!("g(b) = {gb} does not vanish")));
    }
    Ok(())
}

fn finish_scan(
    lemma: Lemma,
    t: f64,
    points: Vec<ScanPoint>,
    majorant_violations: Vec<(Point, f64, f64)>,
    triangle_violations: Vec<Point>,
    split_norms: Option<(f64, f64)>,
) -> RatioScan {
    let sup_ratio = points.iter().map(|p| p.ratio).fold(0.0, f64::max);
    let rs: Vec<f64> = points.iter().map(|p| p.r).collect();
    let ratios: Vec<f64> = points.iter().map(|p| p.ratio).collect();
    let loglog = loglog_slope(&rs, &ratios);
    RatioScan {
        lemma,
        t,
        points,
        sup_ratio,
        loglog_slope: loglog,
        growth_exponent: loglog.map(|s| -s),
        majorant_violations,
        triangle_violations,
        split_norms,
    }
}

fn majorant_check(tr: &dyn CauchyTransforms, mu: &PairMeasure, a: Point, h: Complex64) -> Result<Option<(Point, f64, f64)>> {
    let ht = tr.h_tilde(mu, a)?;
    let lhs = PI * h.norm();
    Ok((lhs > ht * (1.0 + 1e-12) + f64::MIN_POSITIVE).then_some((a, lhs, ht)))
}

fn safe_ratio(lhs: f64, normalizer: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else {
        lhs / normalizer
    }
}

/// `|Ŝ₁(a)|` against `κ̄(g) ‖μ‖ / |a - b|` along a ray.
pub fn scan_l1(
    mu: &PairMeasure,
    g: &TestFunction,
    t: f64,
    ray: &RaySpec,
    tr: &dyn CauchyTransforms,
) -> Result<RatioScan> {
    check_vanishing(g)?;
    let d = g.domain();
    let pts = cone_points(d, t, ray)?;
    let split = module_action(|z| g.value(z), mu)?;
    let scale = g.lip_bounds().kappa_bar * mu.total_variation();
    let rows: Vec<Result<(ScanPoint, Option<(Point, f64, f64)>)>> = pts
        .par_iter()
        .map(|&(a, dist, r)| {
            let h = tr.h(&split.s1, a)?;
            let lhs = h.norm();
            let normalizer = scale / r;
            let viol = majorant_check(tr, &split.s1, a, h)?;
            Ok((
                ScanPoint {
                    a,
                    dist_to_x: dist,
                    r,
                    lhs,
                    normalizer,
                    ratio: safe_ratio(lhs, normalizer),
                    ratio_dist: Some(safe_ratio(lhs, scale / dist)),
                },
                viol,
            ))
        })
        .collect();
    let mut points = Vec::with_capacity(rows.len());
    let mut viols = Vec::new();
    for row in rows {
        let (p, v) = row?;
        points.push(p);
        viols.extend(v);
    }
    Ok(finish_scan(Lemma::L1, t, points, viols, vec![], Some((split.s2.total_variation(), scale))))
}

/// `|Ŝ₁(a) + λ̂(a)|` against `κ̄(g) ‖μ‖ / dist(a, X)` along a ray.
pub fn scan_l2(
    mu: &PairMeasure,
    g: &TestFunction,
    t: f64,
    ray: &RaySpec,
    tr: &dyn CauchyTransforms,
) -> Result<RatioScan> {
    check_vanishing(g)?;
    let d = g.domain();
    let pts = cone_points(d, t, ray)?;
    let split = module_action(|z| g.value(z), mu)?;
    let scale = g.lip_bounds().kappa_bar * mu.total_variation();
    let lam_tv = split.s2.total_variation();
    let rows: Vec<Result<(ScanPoint, Option<(Point, f64, f64)>, bool)>> = pts
        .par_iter()
        .map(|&(a, dist, r)| {
            let s1 = tr.h(&split.s1, a)?;
            let lam = tr.scalar(&split.s2, a)?;
            let lhs = (s1 + lam).norm();
            let normalizer = scale / dist;
            let ratio = safe_ratio(lhs, normalizer);
            // triangle inequality with the scalar part bounded by ‖λ‖ / (π dist)
            let component = safe_ratio(s1.norm(), normalizer) + safe_ratio(lam_tv / (PI * dist), normalizer);
            let triangle_ok = ratio <= component * (1.0 + 1e-12) + f64::MIN_POSITIVE;
            Ok((
                ScanPoint {
                    a,
                    dist_to_x: dist,
                    r,
                    lhs,
                    normalizer,
                    ratio,
                    ratio_dist: None,
                },
                majorant_check(tr, &split.s1, a, s1)?,
                triangle_ok,
            ))
        })
        .collect();
    let mut points = Vec::with_capacity(rows.len());
    let mut viols = Vec::new();
    let mut triangle = Vec::new();
    for row in rows {
        let (p, v, ok) = row?;
        if !ok {
            triangle.push(p.a);
        }
        points.push(p);
        viols.extend(v);
    }
    Ok(finish_scan(Lemma::L2, t, points, viols, triangle, Some((lam_tv, scale))))
}

/// `|H(a)|` against `‖μ‖ / dist(a, X)^(1+α)` along a ray.
pub fn scan_l3(mu: &PairMeasure, d: &DomainSpec, t: f64, ray: &RaySpec, tr: &dyn CauchyTransforms) -> Result<RatioScan> {
    let pts = cone_points(d, t, ray)?;
    let tv = mu.total_variation();
    let beta = 1.0 + mu.alpha();
    let rows: Vec<Result<(ScanPoint, Option<(Point, f64, f64)>)>> = pts
        .par_iter()
        .map(|&(a, dist, r)| {
            let h = tr.h(mu, a)?;
            let lhs = h.norm();
            let normalizer = tv / dist.powf(beta);
            Ok((
                ScanPoint {
                    a,
                    dist_to_x: dist,
                    r,
                    lhs,
                    normalizer,
                    ratio: safe_ratio(lhs, normalizer),
                    ratio_dist: None,
                },
                majorant_check(tr, mu, a, h)?,
            ))
        })
        .collect();
    let mut points = Vec::with_capacity(rows.len());
    let mut viols = Vec::new();
    for row in rows {
        let (p, v) = row?;
        points.push(p);
        viols.extend(v);
    }
    Ok(finish_scan(Lemma::L3, t, points, viols, vec![], None))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundaryCheck {
    pub sup_yy: f64,
    pub sup_xx: f64,
    pub interior_excess: f64,
    /// `interior_excess / sup_xx` (0 when both sups vanish).
    pub relative_excess: f64,
    pub argmax_yy: Option<(Point, Point)>,
    pub argmax_xx: Option<(Point, Point)>,
    pub samples: usize,
    pub seed: u64,
}

const BOUNDARY_STREAM: u64 = 3 << 40;

/// Coordinate search over the boundary parameters of a pair, starting from
/// the given pieces and parameters.
fn refine_on_boundary(
    f: &TestFunction,
    start: ((BoundaryPiece, f64), (BoundaryPiece, f64)),
) -> Option<(f64, Point, Point)> {
    let d = f.domain();
    let alpha = d.alpha();
    let ((pz, mut sz), (pw, mut sw)) = start;
    let eval = |s: f64, t: f64| {
        let z = d.piece_point(pz, s);
        let w = d.piece_point(pw, t);
        lip_quotient(f, z, w, alpha).map(|q| (q, z, w))
    };
    let mut best = eval(sz, sw)?;
    let mut step = 0.05;
    let mut iterations = 0;
    while step > 1e-13 && iterations < 4000 {
        iterations += 1;
        let mut improved = false;
        for (ds, dt) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step), (step, step), (-step, -step), (step, -step), (-step, step)] {
            if let Some(c) = eval(sz + ds, sw + dt) {
                if c.0 > best.0 {
                    best = c;
                    sz += ds;
                    sw += dt;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    Some(best)
}

/// Sampled Lip-α quotient over pairs in clos U against pairs on X, with
/// coordinate refinement on X started from both argmax pairs.
pub fn boundary_seminorm_check(f: &TestFunction, samples: usize, seed: u64) -> BoundaryCheck {
    let d = f.domain();
    let alpha = d.alpha();
    let sampler = PointSampler::new(d);
    let best = chunked_max(samples, seed, BOUNDARY_STREAM, |rng| {
        let (z, w, on_x) = sampler.pair(rng);
        lip_quotient(f, z, w, alpha).map(|q| (q, z, w, on_x))
    });
    let mut sup_xx = best.flagged.map_or(0.0, |b| b.value);
    let mut argmax_xx = best.flagged.map(|b| (b.z, b.w));
    let starts: Vec<(Point, Point)> = [best.flagged, best.all].iter().flatten().map(|b| (b.z, b.w)).collect();
    for (z, w) in starts {
        let start = (d.project_to_boundary(z), d.project_to_boundary(w));
        if let Some((q, rz, rw)) = refine_on_boundary(f, start) {
            if q > sup_xx {
                sup_xx = q;
                argmax_xx = Some((rz, rw));
            }
        }
    }
    let sampled_yy = best.all.map_or(0.0, |b| b.value);
    let (sup_yy, argmax_yy) = if sampled_yy > sup_xx {
        (sampled_yy, best.all.map(|b| (b.z, b.w)))
    } else {
        (sup_xx, argmax_xx)
    };
    let interior_excess = (sup_yy - sup_xx).max(0.0);
    BoundaryCheck {
        sup_yy,
        sup_xx,
        interior_excess,
        relative_excess: if sup_xx > 0.0 { interior_excess / sup_xx } else { 0.0 },
        argmax_yy,
        argmax_xx,
        samples,
        seed,
    }
}

/// `φ(x, y) = ψ((x - c_x)/R) ψ((y - c_y)/R)` with `ψ(s) = exp(-1/(1 - s^2))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub center: Point,
    pub radius: f64,
}

fn mollifier(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (-1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

impl Bump {
    pub fn value(&self, z: Point) -> f64 {
        let u = (z - self.center) / self.radius;
        mollifier(u.re) * mollifier(u.im)
    }

    /// `φ̂(z) = (1/π) ∫ φ(ζ) / (z - ζ) dm(ζ)` by composite Gauss-Legendre on
    /// the support square; accurate for `z` away from the support.
    pub fn cauchy(&self, z: Point, panels: usize, order: usize) -> Complex64 {
        let (x, w) = gauss_legendre(order);
        let h = 2.0 * self.radius / panels as f64;
        let mut nodes = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let lo = -self.radius + p as f64 * h;
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push((lo + (xi + 1.0) * h / 2.0, wi * h / 2.0));
            }
        }
        let terms = nodes.iter().flat_map(|&(u, wu)| {
            nodes.iter().map(move |&(v, wv)| {
                let zeta = self.center + Complex64::new(u, v);
                wu * wv * self.value(zeta) / (z - zeta)
            })
        });
        compensated_sum_complex(terms) / PI
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FubiniLevel {
    pub cells: usize,
    pub h: f64,
    pub rhs: Complex64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FubiniReport {
    pub lhs: Complex64,
    pub rhs: Complex64,
    pub rel_err: f64,
    pub levels: Vec<FubiniLevel>,
    /// Slope of `ln rel_err` against `ln h` over levels above the floor.
    pub order: Option<f64>,
    pub floor: f64,
}

/// Relative errors below this are treated as converged when fitting the order.
pub const FUBINI_FLOOR: f64 = 1e-11;

/// Midpoint rule for `∫ φ H dm` on an `n × n` grid over the support square.
pub fn fubini_rhs(mu: &PairMeasure, bump: &Bump, cells: usize, tr: &dyn CauchyTransforms) -> Result<Complex64> {
    let h = 2.0 * bump.radius / cells as f64;
    let rows: Vec<Result<Complex64>> = (0..cells)
        .into_par_iter()
        .map(|i| {
            let y = -bump.radius + (i as f64 + 0.5) * h;
            let mut row = Vec::with_capacity(cells);
            for j in 0..cells {
                let x = -bump.radius + (j as f64 + 0.5) * h;
                let a = bump.center + Complex64::new(x, y);
                let phi = bump.value(a);
                if phi != 0.0 {
                    row.push(phi * tr.h(mu, a)?);
                }
            }
            Ok(compensated_sum_complex(row))
        })
        .collect();
    let mut vals = Vec::with_capacity(cells);
    for r in rows {
        vals.push(r?);
    }
    Ok(compensated_sum_complex(vals) * h * h)
}

/// `-T₁(φ̂)` against the midpoint sum of `φ H` on each grid of `grids`; the
/// last grid gives `rhs` and `rel_err`.
pub fn fubini_consistency(mu: &PairMeasure, bump: &Bump, grids: &[usize], tr: &dyn CauchyTransforms) -> Result<FubiniReport> {
    if grids.is_empty() || grids.contains(&0) || !(bump.radius > 0.0) {
        return Err(Error::InvalidInput("need a positive bump radius and nonempty grids".into()));
    }
    if mu
        .atoms()
        .iter()
        .flat_map(|a| [a.z, a.w])
        .any(|p| bump.value(p) != 0.0 || (p - bump.center).norm() < bump.radius * 2f64.sqrt() * 1.01)
    {
        return Err(Error::InvalidInput("bump support must stay away from the atoms".into()));
    }
    let phi_hat: Vec<Complex64> = {
        let pts: Vec<Point> = mu.atoms().iter().flat_map(|a| [a.z, a.w]).collect();
        pts.par_iter().map(|&p| bump.cauchy(p, 8, 24)).collect()
    };
    let lhs = -compensated_sum_complex(mu.atoms().iter().enumerate().map(|(k, a)| {
        a.c * (phi_hat[2 * k] - phi_hat[2 * k + 1]) / (a.z - a.w).norm().powf(mu.alpha())
    }));
    let mut levels = Vec::with_capacity(grids.len());
    for &cells in grids {
        let rhs = fubini_rhs(mu, bump, cells, tr)?;
        let scale = lhs.norm().max(rhs.norm());
        if scale < 1e-14 {
            return Err(Error::QuadratureUnderflow(scale));
        }
        levels.push(FubiniLevel {
            cells,
            h: 2.0 * bump.radius / cells as f64,
            rhs,
            rel_err: (lhs - rhs).norm() / scale,
        });
    }
    let fit: Vec<&FubiniLevel> = levels.iter().filter(|l| l.rel_err > FUBINI_FLOOR).collect();
    let order = lsq_slope(
        &fit.iter().map(|l| l.h.ln()).collect::<Vec<_>>(),
        &fit.iter().map(|l| l.rel_err.ln()).collect::<Vec<_>>(),
    );
    let last = levels.last().expect("grids is nonempty");
    Ok(FubiniReport {
        lhs,
        rhs: last.rhs,
        rel_err: last.rel_err,
        order,
        floor: FUBINI_FLOOR,
        levels,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityReport {
    pub identity: String,
    pub trials: usize,
    pub max_abs_discrepancy: f64,
    pub max_rel_discrepancy: f64,
    /// Multiplier relating the two paths.
    pub constant_convention: String,
    /// The trial with the largest relative discrepancy.
    pub witness: Option<Point>,
}

impl IdentityReport {
    /// Aggregates `(a, path1, path2)` triples.
    pub fn from_trials(identity: &str, convention: &str, trials: &[(Point, Complex64, Complex64)]) -> Self {
        let mut max_abs: f64 = 0.0;
        let mut max_rel: f64 = 0.0;
        let mut witness = None;
        for &(a, p1, p2) in trials {
            let abs = (p1 - p2).norm();
            let scale = p1.norm().max(p2.norm());
            let rel = if abs == 0.0 { 0.0 } else { abs / scale };
            max_abs = max_abs.max(abs);
            if rel > max_rel || witness.is_none() {
                max_rel = max_rel.max(rel);
                witness = Some(a);
            }
        }
        Self {
            identity: identity.to_string(),
            trials: trials.len(),
            max_abs_discrepancy: max_abs,
            max_rel_discrepancy: max_rel,
            constant_convention: convention.to_string(),
            witness,
        }
    }
}

/// Both sides of `E_a(g) = T₁((a - b) g(z) / (z - a)) = -π (a - b) (Ŝ₁(a) + λ̂(a))`.
pub fn identity_e_a(mu: &PairMeasure, g: &TestFunction, a: Point, tr: &dyn CauchyTransforms) -> Result<(Complex64, Complex64)> {
    check_vanishing(g)?;
    let b = mu.b();
    if mu.dist_to_atoms(a) == 0.0 {
        return Err(Error::TransformSingular(a));
    }
    let direct = mu.apply_t1(|z| Ok((a - b) * g.value(z)? / (z - a)))?;
    let split = module_action(|z| g.value(z), mu)?;
    let via = -PI * (a - b) * (tr.h(&split.s1, a)? + tr.scalar(&split.s2, a)?);
    Ok((direct, via))
}

/// Both sides of the split identity `T₁(g φ) = T₁[S1](φ) + S2(φ)` for
/// `φ = 1 / (z - a)`.
pub fn identity_split(mu: &PairMeasure, g: &TestFunction, a: Point) -> Result<(Complex64, Complex64)> {
    let phi = |z: Point| Ok(1.0 / (z - a));
    let split = module_action(|z| g.value(z), mu)?;
    let lhs = mu.apply_t1(|z| Ok(g.value(z)? * phi(z)?))?;
    let rhs = split.s1.apply_t1(phi)? + split.s2.apply(phi)?;
    Ok((lhs, rhs))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct THatRow {
    pub r: f64,
    pub t_hat: Complex64,
    /// `1 - π (a - b)^2 H(a)`, equal to `t_hat` when `T₁(z - b) = 1`.
    pub t_hat_via_h: Complex64,
    pub deviation: f64,
    pub reference: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct THatDiagnostic {
    pub rows: Vec<THatRow>,
    /// Slope of `ln |T̂ - 1|` against `ln r`.
    pub slope: Option<f64>,
    /// `|T̂ - 1|` decays at least like `r^(1-α)` over the sampled range.
    pub trend: bool,
}

/// `T̂(a) = T₁((z - b)^2 / (z - a))` along the given points. Diagnostic only.
pub fn t_hat_diagnostic(mu: &PairMeasure, points: &[Point], tr: &dyn CauchyTransforms) -> Result<THatDiagnostic> {
    let b = mu.b();
    let alpha = mu.alpha();
    let mut rows = Vec::with_capacity(points.len());
    for &a in points {
        let t_hat = mu.apply_t1(|z| Ok((z - b) * (z - b) / (z - a)))?;
        let t_hat_via_h = 1.0 - PI * (a - b) * (a - b) * tr.h(mu, a)?;
        let r = (a - b).norm();
        rows.push(THatRow {
            r,
            t_hat,
            t_hat_via_h,
            deviation: (t_hat - 1.0).norm(),
            reference: r.powf(1.0 - alpha),
        });
    }
    let slope = loglog_slope(
        &rows.iter().map(|r| r.r).collect::<Vec<_>>(),
        &rows.iter().map(|r| r.deviation).collect::<Vec<_>>(),
    );
    Ok(THatDiagnostic {
        trend: slope.is_some_and(|s| s >= 1.0 - alpha - 0.1),
        rows,
        slope,
    })
}

/// `a^2 π H(a)` at `|a| = radius` along each direction, for comparison
/// with the first moment `T₁(z)`.
pub fn laurent_leading(mu: &PairMeasure, radius: f64, thetas: &[f64], tr: &dyn CauchyTransforms) -> Result<Vec<(Point, Complex64)>> {
    thetas
        .iter()
        .map(|&th| {
            let a = Complex64::from_polar(radius, th);
            Ok((a, a * a * PI * tr.h(mu, a)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ClosedBall, Probe};
    use crate::measure::{moment_match, random_measure, random_pairs, PairAtom};
    use std::sync::Arc;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn two_ball() -> Arc<DomainSpec> {
        Arc::new(
            DomainSpec::new(
                ClosedBall::new(c(0.0, 0.0), 1.0).unwrap(),
                c(0.0, 0.0),
                0.5,
                vec![
                    ClosedBall::new(c(0.5, 0.0), 0.1).unwrap(),
                    ClosedBall::new(c(0.0, -0.5), 0.1).unwrap(),
                ],
                vec![],
                Probe {
                    theta: PI,
                    t: 0.5,
                    eps_range: [0.0, 0.5],
                },
            )
            .unwrap(),
        )
    }

    fn ray() -> RaySpec {
        RaySpec {
            theta: PI,
            r_min: 1e-6,
            r_max: 0.3,
            count: 50,
        }
    }

    fn z_minus_b(d: &Arc<DomainSpec>) -> TestFunction {
        TestFunction::polynomial(d.clone(), vec![c(0.0, 0.0), c(1.0, 0.0)]).unwrap()
    }

    #[test]
    fn zero_measure_and_zero_g_give_zero_ratios() {
        let d = two_ball();
        let g = z_minus_b(&d);
        let zero = PairMeasure::zero(&d);
        for scan in [
            scan_l1(&zero, &g, 0.5, &ray(), &Exact).unwrap(),
            scan_l2(&zero, &g, 0.5, &ray(), &Exact).unwrap(),
            scan_l3(&zero, &d, 0.5, &ray(), &Exact).unwrap(),
        ] {
            assert_eq!(scan.sup_ratio, 0.0);
            assert!(scan.bounded());
        }
        let mu = random_measure(&d, 20, 1);
        let g0 = TestFunction::polynomial(d.clone(), vec![]).unwrap();
        assert_eq!(scan_l1(&mu, &g0, 0.5, &ray(), &Exact).unwrap().sup_ratio, 0.0);
    }

    #[test]
    fn random_scans_are_bounded() {
        let d = two_ball();
        let g = z_minus_b(&d);
        for seed in 0..3 {
            let mu = random_measure(&d, 20, seed);
            let l1 = scan_l1(&mu, &g, 0.5, &ray(), &Exact).unwrap();
            let l2 = scan_l2(&mu, &g, 0.5, &ray(), &Exact).unwrap();
            let l3 = scan_l3(&mu, &d, 0.5, &ray(), &Exact).unwrap();
            for s in [&l1, &l2, &l3] {
                assert!(s.bounded(), "{:?}", s.summary());
                assert!(s.majorant_violations.is_empty());
                assert!(s.split_bound_holds());
            }
            assert!(l2.triangle_violations.is_empty());
        }
    }

    #[test]
    fn single_atom_l2_matches_closed_form() {
        let d = two_ball();
        let g = z_minus_b(&d);
        let mu = PairMeasure::new(
            &d,
            vec![PairAtom {
                z: c(1.0, 0.0),
                w: c(-1.0, 0.0),
                c: c(1.0, 0.0),
            }],
        )
        .unwrap();
        let scan = scan_l2(&mu, &g, 0.5, &ray(), &Exact).unwrap();
        for p in &scan.points {
            // g T₁ applied to 1/(π(a - z)) with g = z: T₁(z/(π(a - z)))
            let a = p.a;
            // = 2a / (π (a^2 - 1)) / sqrt 2, written without cancellation
            let closed = 2.0 * a / (PI * (a * a - 1.0)) / 2f64.sqrt();
            assert!((p.lhs - closed.norm()).abs() <= 1e-9 * closed.norm());
        }
    }

    #[test]
    fn l3_ratio_matches_direct_evaluation() {
        let d = two_ball();
        let mu = random_measure(&d, 8, 4);
        let scan = scan_l3(&mu, &d, 0.5, &ray(), &Exact).unwrap();
        for p in &scan.points {
            let h = mu.cauchy_h(p.a).unwrap().norm();
            let want = h * p.dist_to_x.powf(1.5) / mu.total_variation();
            assert!((p.ratio - want).abs() <= 1e-13 * want);
            assert!((p.dist_to_x - p.r).abs() < 1e-15);
        }
    }

    #[test]
    fn single_atom_l3_ratio_decays_along_far_ray() {
        let d = Arc::new(
            DomainSpec::new(
                ClosedBall::new(c(0.0, 0.0), 1e4).unwrap(),
                c(0.0, 0.0),
                0.5,
                vec![ClosedBall::new(c(0.0, -0.5), 0.1).unwrap()],
                vec![],
                Probe {
                    theta: 0.0,
                    t: 0.5,
                    eps_range: [0.0, 1e3],
                },
            )
            .unwrap(),
        );
        let mu = PairMeasure::new(
            &d,
            vec![PairAtom {
                z: c(0.0, -0.4),
                w: c(0.1, -0.5),
                c: c(1.0, 0.0),
            }],
        )
        .unwrap();
        let far = RaySpec {
            theta: 0.0,
            r_min: 10.0,
            r_max: 1000.0,
            count: 20,
        };
        let scan = scan_l3(&mu, &d, 0.5, &far, &Exact).unwrap();
        // points run from far to near, so the ratio must increase along the list
        assert!(scan.points.windows(2).all(|w| w[0].ratio < w[1].ratio));
        let (far_ratio, near_ratio) = (scan.points[0].ratio, scan.points[19].ratio);
        // |H| ~ r^-2 against dist^-1.5: ratio ~ r^-0.5, a factor 10 over two decades
        assert!((near_ratio / far_ratio - 10.0).abs() < 0.5);
    }

    #[test]
    fn cone_violation_is_reported() {
        let d = two_ball();
        let mu = random_measure(&d, 5, 3);
        let bad = RaySpec {
            theta: 0.0,
            ..ray()
        };
        assert!(matches!(scan_l3(&mu, &d, 0.5, &bad, &Exact), Err(Error::ApertureViolated { index: 0 })));
    }

    #[test]
    fn e_a_identity_paths_agree() {
        let d = two_ball();
        let g = z_minus_b(&d);
        let mu = PairMeasure::new(
            &d,
            vec![PairAtom {
                z: c(1.0, 0.0),
                w: c(-1.0, 0.0),
                c: c(1.0, 0.0),
            }],
        )
        .unwrap();
        let a = d.b() + Complex64::from_polar(0.3, PI);
        let (p1, p2) = identity_e_a(&mu, &g, a, &Exact).unwrap();
        assert!((p1 - p2).norm() <= 1e-13 * p1.norm());
        let zero = TestFunction::polynomial(d.clone(), vec![]).unwrap();
        let (z1, z2) = identity_e_a(&mu, &zero, a, &Exact).unwrap();
        assert_eq!((z1, z2), (c(0.0, 0.0), -c(0.0, 0.0) * 0.0));
    }

    #[test]
    fn boundary_check_for_identity_and_constants() {
        let d = two_ball();
        let id = TestFunction::identity(d.clone());
        let chk = boundary_seminorm_check(&id, 20_000, 1);
        assert!(chk.relative_excess < 1e-3);
        assert!((chk.sup_xx - 2f64.sqrt()).abs() < 1e-6);
        let one = TestFunction::polynomial(d.clone(), vec![c(1.0, 0.0)]).unwrap();
        let chk = boundary_seminorm_check(&one, 2000, 1);
        assert_eq!((chk.sup_xx, chk.sup_yy), (0.0, 0.0));
    }

    #[test]
    fn fubini_single_atom() {
        let d = two_ball();
        let mu = PairMeasure::new(
            &d,
            vec![PairAtom {
                z: c(1.0, 0.0),
                w: c(-1.0, 0.0),
                c: c(1.0, 0.0),
            }],
        )
        .unwrap();
        let bump = Bump {
            center: c(-0.3, 0.4),
            radius: 0.2,
        };
        let rep = fubini_consistency(&mu, &bump, &[16, 32, 64, 128], &Exact).unwrap();
        assert!(rep.rel_err < 1e-3, "{rep:?}");
        assert!(rep.order.unwrap() >= 1.8, "{rep:?}");
        let zero = PairMeasure::zero(&d);
        assert!(matches!(
            fubini_consistency(&zero, &bump, &[16], &Exact),
            Err(Error::QuadratureUnderflow(_))
        ));
    }

    #[test]
    fn t_hat_paths_agree_for_matched_measures() {
        let d = two_ball();
        let pairs = random_pairs(&d, 12, 7, 0, 0.1);
        let (mu, _) = moment_match(&d, &pairs, 3).unwrap();
        let pts = RaySpec {
            theta: PI,
            r_min: 1e-3,
            r_max: 0.3,
            count: 10,
        }
        .points(d.b());
        let diag = t_hat_diagnostic(&mu, &pts, &Exact).unwrap();
        for r in &diag.rows {
            assert!((r.t_hat - r.t_hat_via_h).norm() < 1e-8 * r.t_hat.norm().max(1.0));
        }
        let zero = t_hat_diagnostic(&PairMeasure::zero(&d), &pts, &Exact).unwrap();
        assert!(zero.rows.iter().all(|r| r.t_hat == c(0.0, 0.0)));
        assert!(!zero.trend);
    }

    #[test]
    fn laurent_coefficient_is_first_moment() {
        let d = two_ball();
        let pairs = random_pairs(&d, 5, 2, 0, 0.1);
        let (mu, _) = moment_match(&d, &pairs, 1).unwrap();
        for (_, v) in laurent_leading(&mu, 1e3 * d.diameter_bound(), &[0.1, 2.2, 4.4], &Exact).unwrap() {
            assert!((v - 1.0).norm() < 1e-2);
        }
    }
}
