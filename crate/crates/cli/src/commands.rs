use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use okalab_core::complex::{curvature_selection_check, pseudoconvexity_check, ComplexStructure, CurvatureSelection, LEVI_TOL};
use okalab_core::curvature::{method_agreement, MethodAgreement};
use okalab_core::dist::{inradius, medial_axis_scan, nearest_boundary_points, sample_boundary_points, DistanceResult, DomainMetrics, MedialScan, K_MAX};
use okalab_core::grid::GridSpec;
use okalab_core::potential::{
    oka_certificate, plurisubharmonicity_scan, subharmonicity_scan, OkaCertificate, PotentialKind, ScanReport,
};
use okalab_core::{boundary_frame, builtin, BoundaryFrame, ImplicitDomain};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::acceptance::{self, shell_mismatches, CriterionOutcome};
use crate::config::{parse_params, parse_vector, DomainSpec, OutputSpec, RunConfig};

pub const SCHEMA_VERSION: u32 = 1;

const DEFAULT_SCAN_N: usize = 12;
const DEFAULT_SAMPLES: usize = 50;

#[derive(Debug, Parser)]
#[command(name = "okalab", version, about = "Distance functions, curvature and (pluri)subharmonicity checks on implicit domains")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration; explicit flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long, alias = "json", global = true, value_name = "PATH")]
    output: Option<PathBuf>,
    /// Write the per-point CSV here.
    #[arg(long, global = true, value_name = "PATH")]
    csv: Option<PathBuf>,
    /// Exit with status 1 when a check contradicts the theorem it tests.
    #[arg(long, global = true)]
    strict: bool,
    /// Seed for boundary sampling and the sphere directions used when m >= 5
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Margin tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Points per axis of the default grid.
    #[arg(long, global = true, value_name = "N")]
    grid_n: Option<usize>,
    /// Builtin domain: ball, annulus, ellipsoid, complex_egg, powersum, ...
    #[arg(long, global = true, value_name = "NAME")]
    domain: Option<String>,
    /// Builtin parameters, `k=v,k=v`.
    #[arg(long, global = true, value_name = "K=V,...", allow_hyphen_values = true)]
    params: Option<String>,
    /// Defining function `F` of `{F < 0}`.
    #[arg(long = "f", global = true, value_name = "EXPR", allow_hyphen_values = true)]
    expr: Option<String>,
    /// Dimension for `--f`.
    #[arg(long, global = true)]
    dim: Option<usize>,
    /// Bounding box for `--f`, `min1,max1,min2,max2,...`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    bbox: Option<String>,
    /// Sample count for boundary and interior sampling.
    #[arg(long, global = true)]
    samples: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Distance, nearest points and the frame at the nearest point.
    Analyze {
        #[arg(long, allow_hyphen_values = true)]
        point: String,
    },
    /// Principal and mean curvatures at a boundary point by three routes.
    Curvature {
        #[arg(long, allow_hyphen_values = true)]
        point: String,
    },
    /// Flag grid points near the medial axis.
    MedialAxis,
    /// Largest inscribed ball.
    Inradius,
    /// Generalized Laplacian of a distance potential over a grid.
    Scan {
        #[arg(long, default_value = "neg_log_d")]
        potential: PotentialKind,
        /// Radial grid `rmin,rmax,n` instead of a tensor grid.
        #[arg(long, allow_hyphen_values = true)]
        radial: Option<String>,
        /// Direction of the radial grid.
        #[arg(long, allow_hyphen_values = true)]
        direction: Option<String>,
    },
    /// Check one of the theorems on the given domain.
    #[command(subcommand)]
    Verify(Verify),
    /// Closed-form counterexamples.
    #[command(subcommand)]
    Counterexample(Counterexample),
    /// Run the acceptance criteria and print one line per criterion.
    Acceptance {
        /// Run only this criterion (1-10)
        #[arg(long)]
        criterion: Option<u8>,
    },
}

#[derive(Debug, Subcommand)]
enum Verify {
    /// `-log d` plurisubharmonic on pseudoconvex domains, with certificates.
    Oka,
    /// `d^(2-m)` subharmonic; `-log d` subharmonic under the mean-curvature condition.
    Sh,
    /// `-d` subharmonic exactly when the boundary is mean convex.
    Meanconvex,
    /// Principal-curvature selection on pseudoconvex boundaries.
    CurvatureSelection,
}

#[derive(Debug, Subcommand)]
enum Counterexample {
    /// Radial `-log d` scan of the spherical shell against its closed form.
    Annulus {
        #[arg(long, default_value_t = 200)]
        shells: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Analyze { .. } => "analyze",
            Command::Curvature { .. } => "curvature",
            Command::MedialAxis => "medial-axis",
            Command::Inradius => "inradius",
            Command::Scan { .. } => "scan",
            Command::Verify(Verify::Oka) => "verify oka",
            Command::Verify(Verify::Sh) => "verify sh",
            Command::Verify(Verify::Meanconvex) => "verify meanconvex",
            Command::Verify(Verify::CurvatureSelection) => "verify curvature-selection",
            Command::Counterexample(Counterexample::Annulus { .. }) => "counterexample annulus",
            Command::Acceptance { .. } => "acceptance",
        }
    }
}

/// Parses `argv`, runs the command and returns the process exit status:
/// 0 on success, 1 on findings under `--strict` (or failed acceptance
/// criteria), 2 on usage, configuration or input errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let parse_error = e.chain().any(|c| {
                matches!(
                    c.downcast_ref::<okalab_core::Error>(),
                    Some(
                        okalab_core::Error::Syntax { .. }
                            | okalab_core::Error::UnknownIdentifier { .. }
                            | okalab_core::Error::VariableOutOfRange { .. }
                    )
                )
            });
            if parse_error {
                eprintln!("\nexpression grammar:\n{}", okalab_core::GRAMMAR);
            }
            2
        }
    }
}

struct Emitted {
    json: String,
    csv: Option<String>,
    finding: bool,
}

fn execute(cli: Cli) -> Result<i32> {
    let name = cli.command.name();
    let cfg = resolve_config(&cli.common)?;
    cfg.validate(name)?;
    let strict = cfg.strict.unwrap_or(false);
    let out = match &cli.command {
        Command::Acceptance { criterion } => return run_acceptance(*criterion, &cfg),
        Command::Counterexample(Counterexample::Annulus { shells }) => counterexample_annulus(&cfg, *shells)?,
        cmd => {
            let dom = cfg.domain()?;
            match cmd {
                Command::Analyze { point } => analyze(&dom, point)?,
                Command::Curvature { point } => curvature(&dom, point)?,
                Command::MedialAxis => medial(&dom, &cfg)?,
                Command::Inradius => inradius_cmd(&dom, &cfg)?,
                Command::Scan {
                    potential,
                    radial,
                    direction,
                } => scan(&dom, &cfg, *potential, radial.as_deref(), direction.as_deref())?,
                Command::Verify(Verify::Oka) => verify_oka(&dom, &cfg)?,
                Command::Verify(Verify::Sh) => verify_sh(&dom, &cfg)?,
                Command::Verify(Verify::Meanconvex) => verify_meanconvex(&dom, &cfg)?,
                Command::Verify(Verify::CurvatureSelection) => verify_selection(&dom, &cfg)?,
                Command::Acceptance { .. } | Command::Counterexample(_) => unreachable!(),
            }
        }
    };
    write_outputs(&cfg, &out)?;
    Ok(if strict && out.finding { 1 } else { 0 })
}

fn resolve_config(c: &Common) -> Result<RunConfig> {
    let file = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let params = c.params.as_deref().map(parse_params).transpose()?;
    let bbox = c.bbox.as_deref().map(parse_vector).transpose()?;
    let domain = if c.domain.is_some() || c.expr.is_some() {
        Some(DomainSpec {
            builtin: c.domain.clone(),
            params: params.unwrap_or_default(),
            expr: c.expr.clone(),
            dim: c.dim,
            bbox,
        })
    } else {
        // Parameters alone refine the configured domain.
        match (file.domain.clone(), params) {
            (Some(mut d), Some(p)) => {
                d.params.extend(p);
                Some(d)
            }
            (None, Some(p)) => Some(DomainSpec {
                params: p,
                ..Default::default()
            }),
            (d, None) => {
                if c.dim.is_some() || bbox.is_some() {
                    bail!("--dim and --bbox need --f");
                }
                d
            }
        }
    };
    let output = (c.output.is_some() || c.csv.is_some()).then(|| OutputSpec {
        json: c.output.clone(),
        csv: c.csv.clone(),
    });
    let flags = RunConfig {
        domain,
        grid_n: c.grid_n,
        tol: c.tol,
        output,
        seed: c.seed,
        samples: c.samples,
        strict: c.strict.then_some(true),
        ..Default::default()
    };
    Ok(file.merged_under(flags))
}

fn write_outputs(cfg: &RunConfig, out: &Emitted) -> Result<()> {
    let spec = cfg.output.clone().unwrap_or_default();
    match &spec.json {
        Some(p) => std::fs::write(p, &out.json).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{}", out.json),
    }
    if let (Some(p), Some(csv)) = (&spec.csv, &out.csv) {
        std::fs::write(p, csv).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn emit(report: &impl Serialize, csv: Option<String>, finding: bool) -> Result<Emitted> {
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    Ok(Emitted { json, csv, finding })
}

fn parse_point(dom: &ImplicitDomain, s: &str) -> Result<Vec<f64>> {
    let x = parse_vector(s)?;
    if x.len() != dom.dim() {
        bail!("point has {} coordinates, domain dimension is {}", x.len(), dom.dim());
    }
    Ok(x)
}

#[derive(Serialize)]
struct AnalyzeReport {
    schema_version: u32,
    domain: String,
    distance: DistanceResult,
    /// Frame at the first nearest boundary point.
    frame: Option<BoundaryFrame>,
}

fn analyze(dom: &ImplicitDomain, point: &str) -> Result<Emitted> {
    let x = parse_point(dom, point)?;
    let distance = nearest_boundary_points(dom, &x, K_MAX)?;
    let frame = distance.nearest.first().map(|w| boundary_frame(dom, w)).transpose()?;
    emit(
        &AnalyzeReport {
            schema_version: SCHEMA_VERSION,
            domain: dom.label().to_string(),
            distance,
            frame,
        },
        None,
        false,
    )
}

#[derive(Serialize)]
struct CurvatureReport {
    schema_version: u32,
    domain: String,
    w: Vec<f64>,
    nu: Vec<f64>,
    kappas: Vec<f64>,
    principal_dirs: Vec<Vec<f64>>,
    #[serde(rename = "H")]
    mean_curvature: f64,
    method_agreement: MethodAgreement,
}

fn curvature(dom: &ImplicitDomain, point: &str) -> Result<Emitted> {
    let w = parse_point(dom, point)?;
    let (frame, agreement) = method_agreement(dom, &w)?;
    emit(
        &CurvatureReport {
            schema_version: SCHEMA_VERSION,
            domain: dom.label().to_string(),
            w: frame.w,
            nu: frame.nu,
            kappas: frame.kappas,
            principal_dirs: frame.principal_dirs,
            mean_curvature: frame.mean_curv,
            method_agreement: agreement,
        },
        None,
        false,
    )
}

#[derive(Serialize)]
struct MedialReport {
    schema_version: u32,
    domain: String,
    grid: GridSpec,
    #[serde(flatten)]
    scan: MedialScan,
}

fn medial(dom: &ImplicitDomain, cfg: &RunConfig) -> Result<Emitted> {
    let grid = cfg.grid(dom, DEFAULT_SCAN_N)?;
    let scan = medial_axis_scan(dom, &grid)?;
    let csv = scan.to_csv(dom.dim());
    emit(
        &MedialReport {
            schema_version: SCHEMA_VERSION,
            domain: dom.label().to_string(),
            grid,
            scan,
        },
        Some(csv),
        false,
    )
}

#[derive(Serialize)]
struct InradiusReport {
    schema_version: u32,
    domain: String,
    grid: GridSpec,
    #[serde(flatten)]
    metrics: DomainMetrics,
}

fn inradius_cmd(dom: &ImplicitDomain, cfg: &RunConfig) -> Result<Emitted> {
    let grid = cfg.grid(dom, 20)?;
    let metrics = inradius(dom, &grid)?;
    emit(
        &InradiusReport {
            schema_version: SCHEMA_VERSION,
            domain: dom.label().to_string(),
            grid,
            metrics,
        },
        None,
        false,
    )
}

fn scan(
    dom: &ImplicitDomain,
    cfg: &RunConfig,
    kind: PotentialKind,
    radial: Option<&str>,
    direction: Option<&str>,
) -> Result<Emitted> {
    let grid = match radial {
        Some(spec) => {
            let v = parse_vector(spec)?;
            if v.len() != 3 || v[2].fract() != 0.0 || v[2] < 2.0 {
                bail!("--radial expects rmin,rmax,n with integer n >= 2");
            }
            let dir = match direction {
                Some(d) => parse_point(dom, d)?,
                None => vec![1.0; dom.dim()],
            };
            let g = GridSpec::radial(v[0], v[1], v[2] as usize, dir);
            g.validate(dom.dim())?;
            g
        }
        None => {
            if direction.is_some() {
                bail!("--direction needs --radial");
            }
            cfg.grid(dom, DEFAULT_SCAN_N)?
        }
    };
    let rep = subharmonicity_scan(dom, kind, &grid, &cfg.scan_options())?;
    let csv = rep.to_csv();
    let finding = !rep.verdict;
    emit(&rep, Some(csv), finding)
}

fn boundary_samples(dom: &ImplicitDomain, cfg: &RunConfig) -> Result<Vec<Vec<f64>>> {
    Ok(sample_boundary_points(dom, cfg.samples.unwrap_or(DEFAULT_SAMPLES), cfg.seed.unwrap_or(0))?)
}

#[derive(Serialize)]
struct MeanCurvatureSummary {
    samples: usize,
    min_mean_curvature: f64,
    argmin: Vec<f64>,
}

fn mean_curvature_summary(dom: &ImplicitDomain, pts: &[Vec<f64>]) -> Result<MeanCurvatureSummary> {
    let mut best = (f64::INFINITY, Vec::new());
    for w in pts {
        let h = boundary_frame(dom, w)?.mean_curv;
        if h < best.0 {
            best = (h, w.clone());
        }
    }
    Ok(MeanCurvatureSummary {
        samples: pts.len(),
        min_mean_curvature: best.0,
        argmin: best.1,
    })
}

#[derive(Serialize)]
struct ShReport {
    schema_version: u32,
    domain: String,
    dim: usize,
    /// Scan of `d^(2-m)` (`-log d` when `m <= 2`); must pass on every domain.
    d_pow: ScanReport,
    neg_log_d: ScanReport,
    inradius: f64,
    boundary: MeanCurvatureSummary,
    /// `-1/((m-2)R)`, absent for `m <= 2`.
    mean_curvature_threshold: Option<f64>,
    /// `H >= -1/((m-2)R)` at every sample.
    mean_curvature_condition: bool,
    /// No finding contradicts the theorem.
    consistent: bool,
}

fn verify_sh(dom: &ImplicitDomain, cfg: &RunConfig) -> Result<Emitted> {
    let m = dom.dim();
    let grid = cfg.grid(dom, DEFAULT_SCAN_N)?;
    let opts = cfg.scan_options();
    let d_pow = subharmonicity_scan(dom, PotentialKind::DPow, &grid, &opts)?;
    let neg_log_d = subharmonicity_scan(dom, PotentialKind::NegLogD, &grid, &opts)?;
    let r = inradius(dom, &GridSpec::uniform(dom, 20))?.inradius;
    let boundary = mean_curvature_summary(dom, &boundary_samples(dom, cfg)?)?;
    let threshold = (m > 2).then(|| -1.0 / ((m as f64 - 2.0) * r));
    let condition = threshold.is_none_or(|t| boundary.min_mean_curvature >= t - LEVI_TOL);
    let consistent = d_pow.verdict && (!condition || neg_log_d.verdict);
    let csv = d_pow.to_csv();
    emit(
        &ShReport {
            schema_version: SCHEMA_VERSION,
            domain: dom.label().to_string(),
            dim: m,
            d_pow,
            neg_log_d,
            inradius: r,
            boundary,
            mean_curvature_threshold: threshold,
            mean_curvature_condition: condition,
            consistent,
        },
        Some(csv),
        !consistent,
    )
}

#[derive(Serialize)]
struct MeanconvexReport {
    schema_version: u32,
    domain: String,
    neg_d: ScanReport,
    boundary: MeanCurvatureSummary,
    mean_convex: bool,
    /// The scan verdict matches mean convexity of the sampled boundary.
    consistent: bool,
}

fn verify_meanconvex(dom: &ImplicitDomain, cfg: &RunConfig) -> Result<Emitted> {
    let grid = cfg.grid(dom, DEFAULT_SCAN_N)?;
    let neg_d = subharmonicity_scan(dom, PotentialKind::NegD, &grid, &cfg.scan_options())?;
    let boundary = mean_curvature_summary(dom, &boundary_samples(dom, cfg)?)?;
    let mean_convex = boundary.min_mean_curvature >= -LEVI_TOL;
    let consistent = mean_convex == neg_d.verdict;
    let csv = neg_d.to_csv();
    emit(
        &MeanconvexReport {
            schema_version: SCHEMA_VERSION,
            domain: dom.label().to_string(),
            neg_d,
            boundary,
            mean_convex,
            consistent,
        },
        Some(csv),
        !consistent,
    )
}

#[derive(Serialize)]
struct FailedPoint {
    p: Vec<f64>,
    error: String,
}

#[derive(Serialize)]
struct OkaReport {
    schema_version: u32,
    domain: String,
    boundary_samples: usize,
    levi_min_eig: f64,
    pseudoconvex: bool,
    psh: ScanReport,
    certificates: Vec<OkaCertificate>,
    certificate_failures: Vec<FailedPoint>,
    certificates_hold: bool,
    /// On a pseudoconvex boundary the scan and every certificate pass.
    consistent: bool,
}

fn verify_oka(dom: &ImplicitDomain, cfg: &RunConfig) -> Result<Emitted> {
    let cs = ComplexStructure::for_dim(dom.dim())?;
    let pts = boundary_samples(dom, cfg)?;
    let mut levi_min = f64::INFINITY;
    for q in &pts {
        levi_min = levi_min.min(pseudoconvexity_check(dom, q, &cs)?.min_eig);
    }
    let pseudoconvex = levi_min >= -LEVI_TOL;
    let grid = cfg.grid(dom, 8)?;
    let psh = plurisubharmonicity_scan(dom, &grid, cfg.tol.unwrap_or(okalab_core::potential::DEFAULT_TOL))?;

    let n = cfg.samples.unwrap_or(DEFAULT_SAMPLES).min(20);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.unwrap_or(0));
    let (lo, hi) = dom.bbox();
    let (mut certificates, mut failures) = (Vec::new(), Vec::new());
    let mut attempts = 0;
    while certificates.len() + failures.len() < n && attempts < 1000 * n.max(1) {
        attempts += 1;
        let p: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| rng.gen_range(*a..*b)).collect();
        if !dom.contains(&p)? {
            continue;
        }
        match oka_certificate(dom, &p, &cs, &[]) {
            Ok(c) => certificates.push(c),
            Err(e) => failures.push(FailedPoint { p, error: e.to_string() }),
        }
    }
    let certificates_hold = certificates.iter().all(|c| c.holds);
    let consistent = !pseudoconvex || (psh.verdict && certificates_hold);
    let csv = psh.to_csv();
    emit(
        &OkaReport {
            schema_version: SCHEMA_VERSION,
            domain: dom.label().to_string(),
            boundary_samples: pts.len(),
            levi_min_eig: levi_min,
            pseudoconvex,
            psh,
            certificates,
            certificate_failures: failures,
            certificates_hold,
            consistent,
        },
        Some(csv),
        !consistent,
    )
}

#[derive(Serialize)]
struct SelectionReport {
    schema_version: u32,
    domain: String,
    seed: u64,
    records: Vec<CurvatureSelection>,
    worst_drop_min_sum: f64,
    worst_nonneg_count: usize,
    required_nonneg: usize,
    /// Points with a pseudoconvex Levi form where the selection fails.
    violations: usize,
}

fn verify_selection(dom: &ImplicitDomain, cfg: &RunConfig) -> Result<Emitted> {
    let cs = ComplexStructure::for_dim(dom.dim())?;
    let pts = boundary_samples(dom, cfg)?;
    let records = pts
        .iter()
        .map(|q| curvature_selection_check(dom, q, &cs))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let worst_drop_min_sum = records.iter().map(|r| r.drop_min_sum).fold(f64::INFINITY, f64::min);
    let worst_nonneg_count = records.iter().map(|r| r.nonneg_count).min().unwrap_or(0);
    let violations = records
        .iter()
        .filter(|r| r.levi_min_eig >= -LEVI_TOL && !r.holds)
        .count();
    let mut csv = String::from("q,kappas,drop_min_sum,nonneg_count,levi_min_eig,holds\n");
    for r in &records {
        let join = |v: &[f64]| v.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" ");
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            join(&r.q),
            join(&r.kappas),
            r.drop_min_sum,
            r.nonneg_count,
            r.levi_min_eig,
            r.holds
        ));
    }
    emit(
        &SelectionReport {
            schema_version: SCHEMA_VERSION,
            domain: dom.label().to_string(),
            seed: cfg.seed.unwrap_or(0),
            required_nonneg: cs.n - 1,
            records,
            worst_drop_min_sum,
            worst_nonneg_count,
            violations,
        },
        Some(csv),
        violations > 0,
    )
}

#[derive(Serialize)]
struct ShellRow {
    rho: f64,
    d: f64,
    margin: f64,
    /// `((m-1)r - (m-2)ρ)/(ρ(ρ-r)²)`, valid while the inner sphere is nearest.
    closed_form: Option<f64>,
    predicted_negative: bool,
}

#[derive(Serialize)]
struct AnnulusReport {
    schema_version: u32,
    m: usize,
    r: f64,
    /// Shells where `Δ(-log d) < 0` is predicted.
    interval: [f64; 2],
    shell_width: f64,
    shells: Vec<ShellRow>,
    /// Radii, away from the interval ends, whose sign disagrees with the prediction.
    mismatches: Vec<f64>,
    scan: ScanReport,
}

fn counterexample_annulus(cfg: &RunConfig, shells: usize) -> Result<Emitted> {
    let mut params: BTreeMap<String, f64> = BTreeMap::from([("m".into(), 3.0), ("r".into(), 0.1)]);
    if let Some(d) = &cfg.domain {
        if d.expr.is_some() || d.builtin.as_deref().is_some_and(|b| b != "annulus") {
            bail!("counterexample annulus takes only --params m=..,r=..");
        }
        params.extend(d.params.clone());
    }
    let dom = builtin("annulus", &params)?;
    let (m, r) = (dom.dim(), params["r"]);
    if m < 3 {
        bail!("the counterexample needs m >= 3");
    }
    if shells < 2 {
        bail!("--shells must be at least 2");
    }
    let mf = m as f64;
    let dir: Vec<f64> = if m == 3 {
        acceptance::RADIAL_DIRECTION.to_vec()
    } else {
        vec![1.0; m]
    };
    let grid = GridSpec::radial(r, 1.0, shells, dir);
    let scan = subharmonicity_scan(&dom, PotentialKind::NegLogD, &grid, &cfg.scan_options())?;
    let (a, b) = ((mf - 1.0) * r / (mf - 2.0), (1.0 + r) / 2.0);
    let width = (1.0 - r) / shells as f64;
    let mismatches = shell_mismatches(&scan, a, b, width);
    let rows = scan
        .points
        .iter()
        .map(|p| {
            let rho = p.x.iter().map(|t| t * t).sum::<f64>().sqrt();
            ShellRow {
                rho,
                d: p.d,
                margin: p.margin,
                closed_form: (rho < b).then(|| ((mf - 1.0) * r - (mf - 2.0) * rho) / (rho * (rho - r) * (rho - r))),
                predicted_negative: rho > a && rho < b,
            }
        })
        .collect();
    let csv = scan.to_csv();
    let finding = !mismatches.is_empty();
    emit(
        &AnnulusReport {
            schema_version: SCHEMA_VERSION,
            m,
            r,
            interval: [a, b],
            shell_width: width,
            shells: rows,
            mismatches,
            scan,
        },
        Some(csv),
        finding,
    )
}

#[derive(Serialize)]
struct AcceptanceReport {
    schema_version: u32,
    criteria: Vec<CriterionOutcome>,
    all_acceptable: bool,
}

fn run_acceptance(which: Option<u8>, cfg: &RunConfig) -> Result<i32> {
    let ids: Vec<u8> = match which {
        Some(id) => vec![id],
        None => acceptance::CRITERIA.to_vec(),
    };
    let mut criteria = Vec::new();
    for id in ids {
        let o = acceptance::run_criterion(id)?;
        println!("{}", o.line());
        criteria.push(o);
    }
    let all_acceptable = criteria.iter().all(|c| c.acceptable);
    if let Some(p) = cfg.output.as_ref().and_then(|o| o.json.as_ref()) {
        let report = AcceptanceReport {
            schema_version: SCHEMA_VERSION,
            criteria,
            all_acceptable,
        };
        std::fs::write(p, serde_json::to_string_pretty(&report)? + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(if all_acceptable { 0 } else { 1 })
}
