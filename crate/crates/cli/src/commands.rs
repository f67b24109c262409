//! One function per subcommand. Each returns the files to write and an exit
//! code, or a failure that maps to exit 1 or 2 without writing anything.

use std::path::PathBuf;

use num_complex::Complex64;
use serde::Serialize;

use lipalpha_core::content::{design_domain, wiener_series, Verdict, WienerReport};
use lipalpha_core::diffquot::{
    convergence_report, records_csv, run_quotients, tangential_probe, ExperimentConfig, QuotientVerdict,
    DEFAULT_TOL_CLUSTER, DEFAULT_TOL_FINITE,
};
use lipalpha_core::estimates::{
    boundary_seminorm_check, fubini_consistency, identity_e_a, identity_split, scan_l1, scan_l2, scan_l3,
    t_hat_diagnostic, BoundaryCheck, CauchyTransforms, IdentityReport, RatioScan, ScanSummary,
};
use lipalpha_core::function::TestFunction;
use lipalpha_core::geometry::{DomainSpec, NontangentialRay};
use lipalpha_core::io::{csv, fmt_f64};
use lipalpha_core::measure::{module_action, random_measure, PairMeasure};
use lipalpha_core::numeric::stream_rng;
use lipalpha_core::plot::{loglog_svg, Series};
use lipalpha_core::{Error, Point};

use crate::config::{
    function_or_shift, ConfigError, DesignConfig, DiffquotConfig, DomainSource, FubiniConfig, IdentityConfig,
    LemmasConfig, SeminormConfig, ThatConfig, WienerConfig,
};
use crate::output::{sha256_hex, Bundle, FileHash};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_PRECONDITION: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;
pub const EXIT_VIOLATION: i32 = 4;

#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Precondition(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Precondition(e.to_string())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

pub struct Ctx<'a> {
    /// Directory of the config file, for relative input paths.
    pub base: PathBuf,
    pub seed: u64,
    pub tr: &'a dyn CauchyTransforms,
    pub inputs: Vec<FileHash>,
}

impl Ctx<'_> {
    fn domain(&mut self, src: &DomainSource) -> Result<std::sync::Arc<DomainSpec>, Failure> {
        let loaded = src.load(&self.base)?;
        if let Some((path, bytes)) = loaded.file {
            self.inputs.push(FileHash {
                path: path.display().to_string(),
                sha256: sha256_hex(&bytes),
            });
        }
        Ok(loaded.domain)
    }
}

/// Seed of the `i`-th independent step under `master`.
pub fn step_seed(master: u64, i: u64) -> u64 {
    master ^ (i + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

#[derive(Debug, Default)]
pub struct Report {
    pub bundle: Bundle,
    pub code: i32,
    pub messages: Vec<String>,
}

impl Report {
    fn violation(&mut self, what: &str, witness: Point) {
        self.code = EXIT_VIOLATION;
        self.messages.push(format!(
            "invariant violated: {what}; witness a = ({}, {})",
            fmt_f64(witness.re),
            fmt_f64(witness.im)
        ));
    }
}

fn wiener_files(report: &mut Report, rep: &WienerReport) {
    report.bundle.add("wiener.csv", rep.to_csv());
    report.bundle.json("wiener.json", &rep.summary());
    report.code = match rep.verdict {
        Verdict::CertifiedConvergent => EXIT_OK,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
    };
    report.messages.push(format!(
        "wiener partial sum {} through n = {}: {:?}",
        fmt_f64(rep.partial_sum),
        rep.n_max,
        rep.verdict
    ));
}

pub fn design(cfg: &DesignConfig, ctx: &mut Ctx) -> Result<Report, Failure> {
    let mut report = Report::default();
    report.bundle.seeds.insert("design".into(), ctx.seed);
    let d = design_domain(cfg.alpha, &cfg.schedule, cfg.outer, cfg.b, ctx.seed, cfg.require_exact_budget)?;
    let n_max = cfg.n_max.unwrap_or(cfg.schedule.n_range[1]);
    let rep = wiener_series(&d, n_max, Some(&cfg.schedule));
    report.bundle.json("domain.json", &d);
    wiener_files(&mut report, &rep);
    Ok(report)
}

pub fn wiener(cfg: &WienerConfig, ctx: &mut Ctx) -> Result<Report, Failure> {
    let d = ctx.domain(&cfg.domain)?;
    let mut report = Report::default();
    let rep = wiener_series(&d, cfg.n_max, d.design());
    wiener_files(&mut report, &rep);
    Ok(report)
}

#[derive(Serialize)]
struct TangentialSummary<'a> {
    note: &'a str,
    aperture: f64,
    aperture_ok: bool,
    first_violation: Option<usize>,
    records: usize,
}

pub fn diffquot(cfg: &DiffquotConfig, ctx: &mut Ctx) -> Result<Report, Failure> {
    let d = ctx.domain(&cfg.domain)?;
    let f = TestFunction::from_spec(d.clone(), &cfg.function)?;
    let probe = NontangentialRay::from_probe(&d);
    let ray = if cfg.theta.is_some() || cfg.t.is_some() {
        NontangentialRay::new(
            d.b(),
            cfg.theta.unwrap_or(probe.theta),
            cfg.t.unwrap_or(probe.t),
            probe.r_max.max(cfg.r0),
        )?
    } else {
        probe
    };
    let tol = cfg.tol.unwrap_or(if f.is_clustering() {
        DEFAULT_TOL_CLUSTER
    } else {
        DEFAULT_TOL_FINITE
    });
    let ec = ExperimentConfig {
        f: f.clone(),
        ray,
        r0: cfg.r0,
        rho: cfg.rho,
        count: cfg.count,
        tol,
        seed: ctx.seed,
    };
    let records = run_quotients(&ec)?;
    let oracle = f.derivation_oracle()?.value;
    let rep = convergence_report(&records, oracle, tol)?;

    let mut report = Report::default();
    report.bundle.add("diffquot.csv", rep.to_csv());
    report.bundle.json("diffquot.json", &rep.summary());
    report.bundle.add(
        "diffquot.svg",
        loglog_svg(
            "difference quotient error",
            "r",
            "error",
            &[
                Series::new("|q_n - oracle|", records.iter().map(|r| (r.r, r.err)).collect()),
                Series::new("cancellation bound", records.iter().map(|r| (r.r, r.cancellation_bound)).collect()),
            ],
        ),
    );
    if let Some(curve) = &cfg.tangential {
        match tangential_probe(&f, curve, ray.t) {
            Ok(tp) => {
                report.bundle.add("tangential.csv", records_csv(&tp.records));
                report.bundle.json(
                    "tangential.json",
                    &TangentialSummary {
                        note: &tp.note,
                        aperture: tp.aperture,
                        aperture_ok: tp.aperture_check.ok,
                        first_violation: tp.aperture_check.first_violation,
                        records: tp.records.len(),
                    },
                );
                report.messages.push(format!("tangential probe: {}", tp.note));
            }
            Err(e) => report.messages.push(format!("tangential probe skipped: {e}")),
        }
    }
    report.messages.push(format!(
        "final error {} at r = {}: {:?}",
        fmt_f64(rep.final_err),
        fmt_f64(records.last().map_or(0.0, |r| r.r)),
        rep.verdict
    ));
    match rep.verdict {
        QuotientVerdict::Converged => {}
        QuotientVerdict::Inconclusive => report.code = EXIT_INCONCLUSIVE,
        QuotientVerdict::NotConverged => {
            let last = records.last().expect("report has records");
            report.violation("difference quotients do not approach the derivation oracle", last.z);
        }
    }
    Ok(report)
}

#[derive(Serialize)]
struct MeasureScan {
    measure: usize,
    #[serde(flatten)]
    summary: ScanSummary,
}

#[derive(Serialize)]
struct LemmasSummary {
    t: f64,
    measures: usize,
    scans: Vec<MeasureScan>,
    majorant_points: usize,
    pointwise_violations: usize,
    violations: usize,
}

fn scan_witness(scan: &RatioScan) -> Point {
    scan.points
        .iter()
        .max_by(|a, b| a.ratio.total_cmp(&b.ratio))
        .map_or(Complex64::new(0.0, 0.0), |p| p.a)
}

pub fn lemmas(cfg: &LemmasConfig, ctx: &mut Ctx) -> Result<Report, Failure> {
    let d = ctx.domain(&cfg.domain)?;
    let g = function_or_shift(&d, cfg.g.as_ref())?;
    let mut report = Report::default();
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    let mut pointwise = 0;
    let mut first_scans: Vec<RatioScan> = Vec::new();
    for i in 0..cfg.measures {
        let seed = step_seed(ctx.seed, i as u64);
        report.bundle.seeds.insert(format!("measure[{i}]"), seed);
        let mu = cfg.measure.build(&d, seed)?;
        let scans = [
            scan_l1(&mu, &g, cfg.t, &cfg.ray, ctx.tr)?,
            scan_l2(&mu, &g, cfg.t, &cfg.ray, ctx.tr)?,
            scan_l3(&mu, &d, cfg.t, &cfg.ray, ctx.tr)?,
        ];
        for scan in &scans {
            let name = format!("{:?}", scan.lemma);
            for p in &scan.points {
                rows.push(vec![
                    i.to_string(),
                    name.clone(),
                    fmt_f64(p.r),
                    fmt_f64(p.dist_to_x),
                    fmt_f64(p.lhs),
                    fmt_f64(p.normalizer),
                    fmt_f64(p.ratio),
                ]);
            }
            if !scan.bounded() {
                report.violation(&format!("{name} ratio grows as r -> 0 (measure {i})"), scan_witness(scan));
            }
            if let Some(&(a, lhs, rhs)) = scan.majorant_violations.first() {
                report.violation(
                    &format!("|pi H(a)| = {lhs:e} exceeds the majorant {rhs:e} (measure {i}, {name})"),
                    a,
                );
            }
            if let Some(&a) = scan.triangle_violations.first() {
                report.violation(&format!("triangle bound fails (measure {i}, {name})"), a);
            }
            if !scan.split_bound_holds() {
                report.violation(&format!("split norm exceeds its bound (measure {i}, {name})"), mu.b());
            }
            summaries.push(MeasureScan {
                measure: i,
                summary: scan.summary(),
            });
        }
        if cfg.majorant_points > 0 {
            pointwise += pointwise_bounds(&mu, &g, &d, cfg.majorant_points, seed, ctx.tr, &mut report)?;
        }
        if i == 0 {
            first_scans = scans.to_vec();
        }
    }
    let violations = report.messages.len();
    report.bundle.add(
        "lemmas.csv",
        csv(&["measure", "lemma", "r", "dist", "lhs", "normalizer", "ratio"], rows),
    );
    report.bundle.json(
        "lemmas.json",
        &LemmasSummary {
            t: cfg.t,
            measures: cfg.measures,
            scans: summaries,
            majorant_points: cfg.majorant_points,
            pointwise_violations: pointwise,
            violations,
        },
    );
    report.bundle.add(
        "lemmas.svg",
        loglog_svg(
            "ratio along the ray (first measure)",
            "r",
            "ratio",
            &first_scans
                .iter()
                .map(|s| {
                    Series::new(
                        format!("{:?}", s.lemma),
                        s.points.iter().map(|p| (p.r, p.ratio)).collect(),
                    )
                })
                .collect::<Vec<_>>(),
        ),
    );
    if report.code == EXIT_OK {
        report.messages.push(format!("{} scans bounded", cfg.measures * 3));
    }
    Ok(report)
}

/// `|π H(a)| <= H̃(a)` and `|λ̂(a)| <= ‖λ‖ / (π dist(a, atoms))` at random
/// interior points. Returns the number of failing points.
fn pointwise_bounds(
    mu: &PairMeasure,
    g: &TestFunction,
    d: &DomainSpec,
    count: usize,
    seed: u64,
    tr: &dyn CauchyTransforms,
    report: &mut Report,
) -> Result<usize, Failure> {
    let split = module_action(|z| g.value(z), mu)?;
    let lam_tv = split.s2.total_variation();
    let mut rng = stream_rng(seed, 0x706f_696e);
    let mut failures = 0;
    for _ in 0..count {
        let a = d.random_interior_point(&mut rng);
        if mu.dist_to_atoms(a) == 0.0 {
            continue;
        }
        let lhs = std::f64::consts::PI * tr.h(mu, a)?.norm();
        let rhs = tr.h_tilde(mu, a)?;
        if lhs > rhs * (1.0 + 1e-12) + f64::MIN_POSITIVE {
            failures += 1;
            if failures == 1 {
                report.violation(&format!("|pi H(a)| = {lhs:e} exceeds the majorant {rhs:e}"), a);
            }
        }
        let lam = tr.scalar(&split.s2, a)?.norm();
        let bound = lam_tv / (std::f64::consts::PI * split.s2.dist_to_atoms(a));
        if lam > bound * (1.0 + 1e-12) + f64::MIN_POSITIVE {
            failures += 1;
            report.violation(&format!("|scalar transform| = {lam:e} exceeds {bound:e}"), a);
        }
    }
    Ok(failures)
}

#[derive(Serialize)]
struct SeminormEntry {
    function: usize,
    #[serde(flatten)]
    check: BoundaryCheck,
    passed: bool,
}

pub fn seminorm(cfg: &SeminormConfig, ctx: &mut Ctx) -> Result<Report, Failure> {
    let d = ctx.domain(&cfg.domain)?;
    let mut report = Report::default();
    let mut entries = Vec::new();
    for (i, spec) in cfg.functions.iter().enumerate() {
        let f = TestFunction::from_spec(d.clone(), spec)?;
        let seed = step_seed(ctx.seed, i as u64);
        report.bundle.seeds.insert(format!("function[{i}]"), seed);
        let check = boundary_seminorm_check(&f, cfg.samples, seed);
        let passed = check.relative_excess < cfg.tol;
        if !passed {
            let witness = check.argmax_yy.map_or(d.b(), |p| p.0);
            report.violation(
                &format!(
                    "interior pairs exceed the boundary supremum by {:e} relative (function {i})",
                    check.relative_excess
                ),
                witness,
            );
        }
        entries.push(SeminormEntry {
            function: i,
            check,
            passed,
        });
    }
    report.bundle.json("seminorm.json", &entries);
    Ok(report)
}

#[derive(Serialize)]
struct Vacuous {
    vacuous: bool,
    reason: String,
}

pub fn fubini(cfg: &FubiniConfig, ctx: &mut Ctx) -> Result<Report, Failure> {
    let d = ctx.domain(&cfg.domain)?;
    let mut report = Report::default();
    let seed = step_seed(ctx.seed, 0);
    report.bundle.seeds.insert("measure".into(), seed);
    let mu = cfg.measure.build(&d, seed)?;
    let rep = match fubini_consistency(&mu, &cfg.bump, &cfg.grids, ctx.tr) {
        Err(Error::QuadratureUnderflow(v)) => {
            report.bundle.json(
                "fubini.json",
                &Vacuous {
                    vacuous: true,
                    reason: format!("both sides below {v:e}"),
                },
            );
            report.messages.push("fubini check is vacuous: both sides vanish".into());
            return Ok(report);
        }
        other => other?,
    };
    report.bundle.add(
        "fubini.csv",
        csv(
            &["cells", "h", "rhs_re", "rhs_im", "rel_err"],
            rep.levels.iter().map(|l| {
                vec![
                    l.cells.to_string(),
                    fmt_f64(l.h),
                    fmt_f64(l.rhs.re),
                    fmt_f64(l.rhs.im),
                    fmt_f64(l.rel_err),
                ]
            }),
        ),
    );
    report.bundle.json("fubini.json", &rep);
    report.bundle.add(
        "fubini.svg",
        loglog_svg(
            "grid refinement",
            "h",
            "relative error",
            &[Series::new("rel_err", rep.levels.iter().map(|l| (l.h, l.rel_err)).collect())],
        ),
    );
    if rep.rel_err >= cfg.tol {
        report.violation(&format!("relative error {:e} at the finest grid", rep.rel_err), cfg.bump.center);
    }
    if let Some(order) = rep.order {
        if order < cfg.min_order {
            report.violation(&format!("refinement order {order} below {}", cfg.min_order), cfg.bump.center);
        }
    }
    report.messages.push(format!(
        "fubini relative error {} with order {:?}",
        fmt_f64(rep.rel_err),
        rep.order
    ));
    Ok(report)
}

type Trial = (Point, Complex64, Complex64);

fn trial_rows<'a>(kind: &str, trials: &'a [Trial]) -> impl Iterator<Item = Vec<String>> + 'a {
    let kind = kind.to_string();
    trials.iter().enumerate().map(move |(i, &(a, p1, p2))| {
        vec![
            kind.clone(),
            i.to_string(),
            fmt_f64(a.re),
            fmt_f64(a.im),
            fmt_f64(p1.re),
            fmt_f64(p1.im),
            fmt_f64(p2.re),
            fmt_f64(p2.im),
        ]
    })
}

#[derive(Serialize)]
struct IdentitySummary {
    e_a: IdentityReport,
    split: IdentityReport,
    tol: f64,
}

pub fn identity(cfg: &IdentityConfig, ctx: &mut Ctx) -> Result<Report, Failure> {
    let d = ctx.domain(&cfg.domain)?;
    let g = function_or_shift(&d, cfg.g.as_ref())?;
    let mut report = Report::default();
    let mut e_a = Vec::with_capacity(cfg.trials);
    let mut split = Vec::with_capacity(cfg.trials);
    for i in 0..cfg.trials {
        let seed = step_seed(ctx.seed, i as u64);
        let mu = random_measure(&d, cfg.atoms, seed);
        let mut rng = stream_rng(seed, 0x6964_656e);
        let a = loop {
            let p = d.random_interior_point(&mut rng);
            if mu.dist_to_atoms(p) > 0.0 {
                break p;
            }
        };
        let (p1, p2) = identity_e_a(&mu, &g, a, ctx.tr)?;
        e_a.push((a, p1, p2));
        let (s1, s2) = identity_split(&mu, &g, a)?;
        split.push((a, s1, s2));
    }
    report.bundle.seeds.insert("trials".into(), ctx.seed);
    let summary = IdentitySummary {
        e_a: IdentityReport::from_trials("E_a", "-pi", &e_a),
        split: IdentityReport::from_trials("module split", "1", &split),
        tol: cfg.tol,
    };
    for rep in [&summary.e_a, &summary.split] {
        if rep.max_rel_discrepancy >= cfg.tol {
            report.violation(
                &format!(
                    "{} paths differ by {:e} relative",
                    rep.identity, rep.max_rel_discrepancy
                ),
                rep.witness.unwrap_or(d.b()),
            );
        }
    }
    report.bundle.add(
        "identity.csv",
        csv(
            &["identity", "trial", "a_re", "a_im", "path1_re", "path1_im", "path2_re", "path2_im"],
            trial_rows("E_a", &e_a).chain(trial_rows("split", &split)),
        ),
    );
    report.bundle.json("identity.json", &summary);
    report.messages.push(format!(
        "E_a max relative discrepancy {}, split {}",
        fmt_f64(summary.e_a.max_rel_discrepancy),
        fmt_f64(summary.split.max_rel_discrepancy)
    ));
    Ok(report)
}

#[derive(Serialize)]
struct ThatSummary {
    rows: usize,
    slope: Option<f64>,
    trend: bool,
    note: &'static str,
}

pub fn that(cfg: &ThatConfig, ctx: &mut Ctx) -> Result<Report, Failure> {
    let d = ctx.domain(&cfg.domain)?;
    let mut report = Report::default();
    let seed = step_seed(ctx.seed, 0);
    report.bundle.seeds.insert("measure".into(), seed);
    let mu = cfg.measure.build(&d, seed)?;
    let diag = t_hat_diagnostic(&mu, &cfg.ray.points(d.b()), ctx.tr)?;
    report.bundle.add(
        "that.csv",
        csv(
            &["r", "t_hat_re", "t_hat_im", "via_h_re", "via_h_im", "deviation", "reference"],
            diag.rows.iter().map(|r| {
                vec![
                    fmt_f64(r.r),
                    fmt_f64(r.t_hat.re),
                    fmt_f64(r.t_hat.im),
                    fmt_f64(r.t_hat_via_h.re),
                    fmt_f64(r.t_hat_via_h.im),
                    fmt_f64(r.deviation),
                    fmt_f64(r.reference),
                ]
            }),
        ),
    );
    report.bundle.json(
        "that.json",
        &ThatSummary {
            rows: diag.rows.len(),
            slope: diag.slope,
            trend: diag.trend,
            note: "diagnostic only; moment-matched measures need not represent the derivation",
        },
    );
    report.bundle.add(
        "that.svg",
        loglog_svg(
            "|T^(a) - 1| along the ray",
            "r",
            "deviation",
            &[
                Series::new("|T^ - 1|", diag.rows.iter().map(|r| (r.r, r.deviation)).collect()),
                Series::new("r^(1-alpha)", diag.rows.iter().map(|r| (r.r, r.reference)).collect()),
            ],
        ),
    );
    report.messages.push(format!("t-hat trend flag: {}", diag.trend));
    Ok(report)
}
