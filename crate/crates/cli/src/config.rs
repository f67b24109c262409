//! Per-command configuration blocks. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use serde::Deserialize;

use lipalpha_core::content::RadiiSchedule;
use lipalpha_core::diffquot::CurveSpec;
use lipalpha_core::estimates::{Bump, RaySpec};
use lipalpha_core::fixtures;
use lipalpha_core::function::{FunctionSpec, TestFunction};
use lipalpha_core::geometry::{ClosedBall, DomainSpec};
use lipalpha_core::measure::{moment_match, random_measure, random_pairs, PairAtom, PairMeasure};
use lipalpha_core::Point;

/// Either a failure to read/parse the config (exit 1) or a domain error.
#[derive(Debug)]
pub enum ConfigError {
    Read(String),
    Schema(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Read(m) => write!(f, "cannot read config: {m}"),
            ConfigError::Schema(m) => write!(f, "config schema error: {m}"),
        }
    }
}

/// Parses TOML for `.toml` files and JSON otherwise.
pub fn parse<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T, ConfigError> {
    if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(text).map_err(|e| ConfigError::Schema(e.to_string()))
    } else {
        serde_json::from_str(text).map_err(|e| ConfigError::Schema(e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Fixture {
    TwoBall,
    Designed,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum DomainSource {
    /// Domain JSON, relative paths taken from the config's directory.
    File(PathBuf),
    Fixture(Fixture),
    Inline(Box<DomainSpec>),
}

/// A resolved domain and, for file sources, the path it was read from.
pub struct LoadedDomain {
    pub domain: Arc<DomainSpec>,
    pub file: Option<(PathBuf, Vec<u8>)>,
}

impl DomainSource {
    pub fn load(&self, base: &Path) -> Result<LoadedDomain, ConfigError> {
        match self {
            DomainSource::File(p) => {
                let path = if p.is_absolute() { p.clone() } else { base.join(p) };
                let bytes = std::fs::read(&path).map_err(|e| ConfigError::Read(format!("{}: {e}", path.display())))?;
                let domain: DomainSpec = serde_json::from_slice(&bytes)
                    .map_err(|e| ConfigError::Schema(format!("{}: {e}", path.display())))?;
                Ok(LoadedDomain {
                    domain: Arc::new(domain),
                    file: Some((path, bytes)),
                })
            }
            DomainSource::Fixture(Fixture::TwoBall) => Ok(LoadedDomain {
                domain: fixtures::two_ball_domain(),
                file: None,
            }),
            DomainSource::Fixture(Fixture::Designed) => Ok(LoadedDomain {
                domain: fixtures::designed_domain(),
                file: None,
            }),
            DomainSource::Inline(d) => Ok(LoadedDomain {
                domain: Arc::new((**d).clone()),
                file: None,
            }),
        }
    }
}

fn default_min_sep() -> f64 {
    1e-3
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeasureSpec {
    Zero,
    Random {
        atoms: usize,
    },
    Explicit {
        atoms: Vec<PairAtom>,
    },
    MomentMatched {
        pairs: usize,
        degree: usize,
        #[serde(default = "default_min_sep")]
        min_sep: f64,
    },
}

impl MeasureSpec {
    pub fn build(&self, d: &DomainSpec, seed: u64) -> lipalpha_core::Result<PairMeasure> {
        match self {
            MeasureSpec::Zero => Ok(PairMeasure::zero(d)),
            MeasureSpec::Random { atoms } => Ok(random_measure(d, *atoms, seed)),
            MeasureSpec::Explicit { atoms } => PairMeasure::new(d, atoms.clone()),
            MeasureSpec::MomentMatched { pairs, degree, min_sep } => {
                let p = random_pairs(d, *pairs, seed, 0, *min_sep);
                moment_match(d, &p, *degree).map(|(mu, _)| mu)
            }
        }
    }
}

/// `g` for the lemma and identity commands; defaults to `z - b`.
pub fn function_or_shift(d: &Arc<DomainSpec>, spec: Option<&FunctionSpec>) -> lipalpha_core::Result<TestFunction> {
    match spec {
        Some(s) => TestFunction::from_spec(d.clone(), s),
        None => TestFunction::polynomial(d.clone(), vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]),
    }
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub alpha: f64,
    pub outer: ClosedBall,
    pub b: Point,
    pub schedule: RadiiSchedule,
    #[serde(default = "yes")]
    pub require_exact_budget: bool,
    /// Last annulus of the Wiener report; defaults to the schedule's end.
    #[serde(default)]
    pub n_max: Option<u32>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WienerConfig {
    pub domain: DomainSource,
    pub n_max: u32,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffquotConfig {
    pub domain: DomainSource,
    pub function: FunctionSpec,
    /// Ray direction and aperture; the domain's probe when omitted.
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub t: Option<f64>,
    pub r0: f64,
    pub rho: f64,
    pub count: usize,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub tangential: Option<CurveSpec>,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmasConfig {
    pub domain: DomainSource,
    pub measure: MeasureSpec,
    /// Independent measures drawn from `measure`.
    #[serde(default = "one")]
    pub measures: usize,
    #[serde(default)]
    pub g: Option<FunctionSpec>,
    pub t: f64,
    pub ray: RaySpec,
    /// Random interior points for the pointwise transform bounds.
    #[serde(default)]
    pub majorant_points: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn seminorm_tol() -> f64 {
    1e-2
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeminormConfig {
    pub domain: DomainSource,
    pub functions: Vec<FunctionSpec>,
    pub samples: usize,
    #[serde(default = "seminorm_tol")]
    pub tol: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn fubini_tol() -> f64 {
    1e-3
}

fn fubini_order() -> f64 {
    1.8
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FubiniConfig {
    pub domain: DomainSource,
    pub measure: MeasureSpec,
    pub bump: Bump,
    pub grids: Vec<usize>,
    #[serde(default = "fubini_tol")]
    pub tol: f64,
    #[serde(default = "fubini_order")]
    pub min_order: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn identity_tol() -> f64 {
    1e-12
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentityConfig {
    pub domain: DomainSource,
    pub trials: usize,
    pub atoms: usize,
    #[serde(default)]
    pub g: Option<FunctionSpec>,
    #[serde(default = "identity_tol")]
    pub tol: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThatConfig {
    pub domain: DomainSource,
    pub measure: MeasureSpec,
    pub ray: RaySpec,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_named() {
        let err = parse::<WienerConfig>(Path::new("c.json"), r#"{"domain": {"fixture": "two-ball"}, "n_max": 4, "nmax": 3}"#)
            .unwrap_err();
        assert!(err.to_string().contains("nmax"));
        let err = parse::<WienerConfig>(Path::new("c.toml"), "n_max = 4\nbogus = 1\n[domain]\nfixture = \"two-ball\"\n")
            .unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn toml_and_json_agree() {
        let a: LemmasConfig = parse(
            Path::new("a.toml"),
            "t = 0.5\n[domain]\nfixture = \"two-ball\"\n[measure]\nkind = \"random\"\natoms = 20\n[ray]\ntheta = 3.0\nr_min = 1e-6\nr_max = 0.3\ncount = 50\n",
        )
        .unwrap();
        let b: LemmasConfig = parse(
            Path::new("a.json"),
            r#"{"t": 0.5, "domain": {"fixture": "two-ball"}, "measure": {"kind": "random", "atoms": 20}, "ray": {"theta": 3.0, "r_min": 1e-6, "r_max": 0.3, "count": 50}}"#,
        )
        .unwrap();
        assert_eq!(a.ray, b.ray);
        assert_eq!(a.measures, 1);
        assert!(matches!(b.measure, MeasureSpec::Random { atoms: 20 }));
    }
}
