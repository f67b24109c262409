//! Finite atomic measures on X×X off the diagonal, the functional
//!
//! `T₁(φ) = Σ c_k (φ(z_k) - φ(w_k)) / |z_k - w_k|^α`
//!
//! they define, its Cauchy transform `H` with majorant `H̃`, and the split
//! of `g·T₁` into a pair-measure part and a scalar residual.
//!
//! Transforms carry the factor `1/π` inside: `H(a) = T₁(1 / (π (a - z)))`
//! and `λ̂(a) = (1/π) Σ λ_k / (a - p_k)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{BoundarySampler, DomainSpec};
use crate::io::{csv, fmt_f64};
use crate::numeric::{compensated_sum, compensated_sum_complex, stream_rng};
use crate::{Error, Point, Result};

/// Atoms farther than this from the boundary pieces are rejected.
pub const ON_BOUNDARY_TOL: f64 = 1e-10;
/// Minimal separation `|z - w|` of an atom.
pub const DIAGONAL_TOL: f64 = 1e-12;
/// Largest accepted residual of a moment-matching solve.
pub const MOMENT_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairAtom {
    pub z: Point,
    pub w: Point,
    pub c: Complex64,
}

impl PairAtom {
    /// `|z - w|^α`.
    fn kernel_norm(&self, alpha: f64) -> f64 {
        (self.z - self.w).norm().powf(alpha)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PairRepr", into = "PairRepr")]
pub struct PairMeasure {
    alpha: f64,
    b: Point,
    atoms: Vec<PairAtom>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairRepr {
    alpha: f64,
    b: Point,
    atoms: Vec<PairAtom>,
}

impl TryFrom<PairRepr> for PairMeasure {
    type Error = Error;

    fn try_from(r: PairRepr) -> Result<Self> {
        PairMeasure::from_parts(r.alpha, r.b, r.atoms)
    }
}

impl From<PairMeasure> for PairRepr {
    fn from(m: PairMeasure) -> Self {
        PairRepr {
            alpha: m.alpha,
            b: m.b,
            atoms: m.atoms,
        }
    }
}

impl PairMeasure {
    /// A measure whose atoms are checked against the diagonal only.
    pub fn from_parts(alpha: f64, b: Point, atoms: Vec<PairAtom>) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        for (k, a) in atoms.iter().enumerate() {
            let finite = [a.z, a.w, a.c].iter().all(|p| p.re.is_finite() && p.im.is_finite());
            if !finite {
                return Err(Error::InvalidInput(format!("atom {k} is not finite")));
            }
            if !((a.z - a.w).norm() > DIAGONAL_TOL) {
                return Err(Error::InvalidInput(format!(
                    "atom {k} lies within {DIAGONAL_TOL:e} of the diagonal"
                )));
            }
        }
        Ok(Self { alpha, b, atoms })
    }

    /// A measure on `X × X` for the boundary `X` of `d`.
    pub fn new(d: &DomainSpec, atoms: Vec<PairAtom>) -> Result<Self> {
        let m = Self::from_parts(d.alpha(), d.b(), atoms)?;
        m.verify_on(d)?;
        Ok(m)
    }

    pub fn zero(d: &DomainSpec) -> Self {
        Self {
            alpha: d.alpha(),
            b: d.b(),
            atoms: vec![],
        }
    }

    /// Every atom point within the on-boundary tolerance of `X`.
    pub fn verify_on(&self, d: &DomainSpec) -> Result<()> {
        for (k, a) in self.atoms.iter().enumerate() {
            for p in [a.z, a.w] {
                let dist = d.dist_to_boundary(p);
                if !(dist < ON_BOUNDARY_TOL) {
                    return Err(Error::InvalidInput(format!(
                        "atom {k} point {p} is {dist:e} away from the boundary"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn b(&self) -> Point {
        self.b
    }

    pub fn atoms(&self) -> &[PairAtom] {
        &self.atoms
    }

    pub fn total_variation(&self) -> f64 {
        compensated_sum(self.atoms.iter().map(|a| a.c.norm()))
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        let mut out = self.clone();
        for a in &mut out.atoms {
            a.c *= s;
        }
        out
    }

    fn check_off_atoms(&self, a: Point) -> Result<()> {
        if self.atoms.iter().any(|at| at.z == a || at.w == a) {
            Err(Error::TransformSingular(a))
        } else {
            Ok(())
        }
    }

    /// `T₁(φ) = Σ c (φ(z) - φ(w)) / |z - w|^α`.
    pub fn apply_t1<F>(&self, phi: F) -> Result<Complex64>
    where
        F: Fn(Point) -> Result<Complex64>,
    {
        let mut terms = Vec::with_capacity(self.atoms.len());
        for a in &self.atoms {
            let diff = phi(a.z)? - phi(a.w)?;
            terms.push(a.c * diff / a.kernel_norm(self.alpha));
        }
        Ok(compensated_sum_complex(terms))
    }

    /// `H(a) = (1/π) Σ c (z - w) / ((z - a)(w - a)|z - w|^α)`.
    pub fn cauchy_h(&self, a: Point) -> Result<Complex64> {
        self.check_off_atoms(a)?;
        let terms = self
            .atoms
            .iter()
            .map(|at| at.c * (at.z - at.w) / ((at.z - a) * (at.w - a) * at.kernel_norm(self.alpha)));
        Ok(compensated_sum_complex(terms) / PI)
    }

    /// `H(a)` as `T₁` applied to the kernel `1 / (π (a - z))`.
    pub fn cauchy_h_via_t1(&self, a: Point) -> Result<Complex64> {
        self.check_off_atoms(a)?;
        self.apply_t1(|z| Ok(1.0 / (PI * (a - z))))
    }

    /// `H̃(a) = Σ |c| |w - z|^(1-α) / (|z - a| |w - a|)`, so `|π H| <= H̃`.
    pub fn cauchy_h_majorant(&self, a: Point) -> Result<f64> {
        self.check_off_atoms(a)?;
        Ok(compensated_sum(self.atoms.iter().map(|at| {
            at.c.norm() * (at.w - at.z).norm().powf(1.0 - self.alpha)
                / ((at.z - a).norm() * (at.w - a).norm())
        })))
    }

    /// Distance from `a` to the atom points.
    pub fn dist_to_atoms(&self, a: Point) -> f64 {
        self.atoms
            .iter()
            .flat_map(|at| [at.z, at.w])
            .map(|p| (p - a).norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// CSV of `H` and `H̃` at the given points:
    /// `a_re, a_im, H_re, H_im, H_tilde, dist_to_X`.
    pub fn transform_field_csv(&self, d: &DomainSpec, points: &[Point]) -> Result<String> {
        let mut rows = Vec::with_capacity(points.len());
        for &a in points {
            let h = self.cauchy_h(a)?;
            let ht = self.cauchy_h_majorant(a)?;
            rows.push(vec![
                fmt_f64(a.re),
                fmt_f64(a.im),
                fmt_f64(h.re),
                fmt_f64(h.im),
                fmt_f64(ht),
                fmt_f64(d.dist_to_boundary(a)),
            ]);
        }
        Ok(csv(&["a_re", "a_im", "H_re", "H_im", "H_tilde", "dist_to_X"], rows))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarAtom {
    pub point: Point,
    pub weight: Complex64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarMeasure {
    pub atoms: Vec<ScalarAtom>,
}

impl ScalarMeasure {
    pub fn total_variation(&self) -> f64 {
        compensated_sum(self.atoms.iter().map(|a| a.weight.norm()))
    }

    /// `Σ weight φ(point)`.
    pub fn apply<F>(&self, phi: F) -> Result<Complex64>
    where
        F: Fn(Point) -> Result<Complex64>,
    {
        let mut terms = Vec::with_capacity(self.atoms.len());
        for a in &self.atoms {
            terms.push(a.weight * phi(a.point)?);
        }
        Ok(compensated_sum_complex(terms))
    }

    /// `λ̂(a) = (1/π) Σ weight / (a - point)`.
    pub fn cauchy(&self, a: Point) -> Result<Complex64> {
        if self.atoms.iter().any(|at| at.point == a) {
            return Err(Error::TransformSingular(a));
        }
        Ok(compensated_sum_complex(self.atoms.iter().map(|at| at.weight / (a - at.point))) / PI)
    }

    pub fn dist_to_atoms(&self, a: Point) -> f64 {
        self.atoms
            .iter()
            .map(|at| (at.point - a).norm())
            .fold(f64::INFINITY, f64::min)
    }
}

/// `g·T₁ = T₁[S1] + S2`: `S1` has weights `g(z) c`, `S2` has atoms at `w`
/// with weights `c (g(z) - g(w)) / |z - w|^α`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ActionSplit {
    pub s1: PairMeasure,
    pub s2: ScalarMeasure,
}

pub fn module_action<G>(g: G, mu: &PairMeasure) -> Result<ActionSplit>
where
    G: Fn(Point) -> Result<Complex64>,
{
    let mut s1 = Vec::with_capacity(mu.atoms.len());
    let mut s2 = Vec::with_capacity(mu.atoms.len());
    for a in &mu.atoms {
        let gz = g(a.z)?;
        let gw = g(a.w)?;
        s1.push(PairAtom {
            z: a.z,
            w: a.w,
            c: gz * a.c,
        });
        s2.push(ScalarAtom {
            point: a.w,
            weight: a.c * (gz - gw) / a.kernel_norm(mu.alpha),
        });
    }
    Ok(ActionSplit {
        s1: PairMeasure {
            alpha: mu.alpha,
            b: mu.b,
            atoms: s1,
        },
        s2: ScalarMeasure { atoms: s2 },
    })
}

/// Minimal-norm weights on `pairs` with `T₁((z-b)^m) = [m = 1]` for
/// `m = 1..=degree`, and the residual of the solve.
pub fn moment_match(d: &DomainSpec, pairs: &[(Point, Point)], degree: usize) -> Result<(PairMeasure, f64)> {
    if degree == 0 || pairs.len() < degree {
        return Err(Error::InvalidInput(format!(
            "need degree >= 1 and at least degree pairs, got degree {degree} with {} pairs",
            pairs.len()
        )));
    }
    let template: Vec<PairAtom> = pairs
        .iter()
        .map(|&(z, w)| PairAtom {
            z,
            w,
            c: Complex64::new(1.0, 0.0),
        })
        .collect();
    let probe = PairMeasure::new(d, template)?;
    let b = d.b();
    let alpha = d.alpha();
    let a = DMatrix::from_fn(degree, pairs.len(), |i, k| {
        let at = &probe.atoms[k];
        let m = i as u32 + 1;
        ((at.z - b).powu(m) - (at.w - b).powu(m)) / at.kernel_norm(alpha)
    });
    let mut rhs = DVector::from_element(degree, Complex64::new(0.0, 0.0));
    rhs[0] = Complex64::new(1.0, 0.0);
    let svd = a.clone().svd(true, true);
    let cutoff = svd.singular_values.max() * 1e-13;
    let sol = svd
        .solve(&rhs, cutoff)
        .map_err(|e| Error::InvalidInput(format!("SVD solve failed: {e}")))?;
    let residual = (&a * &sol - &rhs).norm();
    if !(residual < MOMENT_RESIDUAL_TOL) {
        return Err(Error::RankDeficient { residual });
    }
    let atoms = probe
        .atoms
        .iter()
        .zip(sol.iter())
        .map(|(at, &c)| PairAtom { c, ..*at })
        .collect();
    Ok((PairMeasure { atoms, ..probe }, residual))
}

/// Pairs of boundary points, drawn by boundary length, at least `min_sep`
/// apart.
pub fn random_pairs(d: &DomainSpec, count: usize, seed: u64, stream: u64, min_sep: f64) -> Vec<(Point, Point)> {
    let sampler = BoundarySampler::new(d, false);
    let mut rng = stream_rng(seed, stream);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let z = sampler.sample(d, &mut rng).1;
        let w = sampler.sample(d, &mut rng).1;
        if (z - w).norm() >= min_sep {
            out.push((z, w));
        }
    }
    out
}

/// A measure with `count` atoms on random boundary pairs and weights
/// uniform in the unit square.
pub fn random_measure(d: &DomainSpec, count: usize, seed: u64) -> PairMeasure {
    let pairs = random_pairs(d, count, seed, 0x6d65_6173, 1e-6);
    let mut rng = stream_rng(seed, 0x7765_6967);
    let atoms = pairs
        .into_iter()
        .map(|(z, w)| PairAtom {
            z,
            w,
            c: Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
        })
        .collect();
    PairMeasure::new(d, atoms).expect("sampled atoms lie on the boundary, off the diagonal")
}
