//! Command-line orchestration of case runs and mesh sweeps, with results
//! written as CSV reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::cases::{
    spe10_case, synthetic_field, wheeler_case, wheeler_decomposition, CaseKind, Decomposition, PermeabilityField,
    ProblemDefinition, SPE10_DIMS,
};
use crate::error::{Error, Result};
use crate::mesh::{Mapping, MeshSpec};
use crate::postproc::{
    compute_errors, convergence_rates, l2_div_residual, sample_fields, write_samples_csv, ErrorSummary,
};
use crate::solver::{solve, DarcyProblem, DarcySolution, Formulation, SolveReport, SolverOptions, DEFAULT_MEM_BUDGET};

/// Layers kept by the cropped reservoir case.
pub const CROP_LAYERS: usize = 10;

#[derive(Debug, Parser)]
#[command(name = "darcy-dd", version, about = "Mimetic spectral-element Darcy solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a case, optionally over a sweep of meshes, writing CSV reports.
    Run(Box<RunArgs>),
    /// Compute speed-up ratios from a continuous and a decomposed timings.csv.
    Speedup { continuous: PathBuf, dd: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormulationArg {
    Continuous,
    Dd,
    Both,
}

#[derive(Debug, Args, Clone)]
pub struct RunArgs {
    /// Case name; see `CaseKind`.
    #[arg(long, default_value = "manufactured")]
    pub case: String,
    #[arg(long, value_enum, default_value = "dd")]
    pub formulation: FormulationArg,
    /// Element order.
    #[arg(long = "N", default_value_t = 1)]
    pub order: usize,
    /// Elements per axis (manufactured case).
    #[arg(long = "K")]
    pub k: Option<usize>,
    /// Subdomains per axis, `n` or `nx x ny x nz` written as `nxXnyXnz`.
    #[arg(long = "K1")]
    pub k1: Option<String>,
    /// Elements per subdomain and axis.
    #[arg(long = "K2")]
    pub k2: Option<String>,
    /// Reservoir decomposition preset (`case1`, `case2`, `crop`).
    #[arg(long)]
    pub decomp: Option<String>,
    /// Whitespace-separated permeability file.
    #[arg(long)]
    pub perm_file: Option<PathBuf>,
    /// Use a seeded synthetic permeability field instead of a file.
    #[arg(long)]
    pub synthetic: bool,
    /// Read three permeability components per block.
    #[arg(long)]
    pub anisotropic: bool,
    /// Mesh sweep, e.g. `K=4,8,16`.
    #[arg(long)]
    pub sweep: Option<String>,
    /// Timing repetitions; the reported phase times are medians.
    #[arg(long, default_value_t = 1)]
    pub repeat: usize,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory; `DARCY_DD_OUT` takes precedence.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Cap on stored matrix entries.
    #[arg(long, default_value_t = DEFAULT_MEM_BUDGET)]
    pub mem_budget: u64,
    /// Extra quadrature points per axis.
    #[arg(long, default_value_t = 0)]
    pub quad_bump: usize,
    /// Skip condition-number estimates.
    #[arg(long)]
    pub no_cond: bool,
    /// Samples per element and axis (default 2, or 1 for reservoir cases).
    #[arg(long)]
    pub samples: Option<usize>,
}

/// Validated run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub case: CaseKind,
    pub formulations: Vec<Formulation>,
    pub order: usize,
    /// One mesh per sweep entry: `(K1, K2)`.
    pub meshes: Vec<([usize; 3], [usize; 3])>,
    pub perm_file: Option<PathBuf>,
    pub synthetic: bool,
    pub anisotropic: bool,
    pub repeat: usize,
    pub threads: Option<usize>,
    pub out: PathBuf,
    pub seed: u64,
    pub options: SolverOptions,
    pub quad_bump: usize,
    pub samples: usize,
}

fn parse_axes(s: &str) -> Result<[usize; 3]> {
    let parts: Vec<&str> = s.split(['x', 'X', ',']).collect();
    let nums = parts
        .iter()
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("'{s}' is not a count or AxBxC triple")))
        })
        .collect::<Result<Vec<_>>>()?;
    match nums.as_slice() {
        [n] => Ok([*n; 3]),
        [a, b, c] => Ok([*a, *b, *c]),
        _ => Err(Error::Config(format!("'{s}' is not a count or AxBxC triple"))),
    }
}

fn parse_sweep(s: &str) -> Result<Vec<usize>> {
    let list = s
        .strip_prefix("K=")
        .ok_or_else(|| Error::Config(format!("sweep '{s}' must look like K=4,8,16")))?;
    list.split(',')
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad sweep entry '{v}'")))
        })
        .collect()
}

fn manufactured_mesh(
    order: usize,
    k: usize,
    k1: Option<[usize; 3]>,
    k2: Option<[usize; 3]>,
) -> Result<([usize; 3], [usize; 3])> {
    let per_axis = |a: [usize; 3], what: &str| -> Result<[usize; 3]> {
        let mut out = [0; 3];
        for d in 0..3 {
            if a[d] == 0 || !k.is_multiple_of(a[d]) {
                return Err(Error::Config(format!("{what}={} does not divide K={k}", a[d])));
            }
            out[d] = k / a[d];
        }
        Ok(out)
    };
    match (k1, k2) {
        (Some(a), Some(b)) => {
            if (0..3).any(|d| a[d] * b[d] != k) {
                return Err(Error::Config(format!("K1 x K2 = {a:?} x {b:?} does not give K={k}")));
            }
            Ok((a, b))
        }
        (Some(a), None) => Ok((a, per_axis(a, "K1")?)),
        (None, Some(b)) => Ok((per_axis(b, "K2")?, b)),
        (None, None) => Ok(wheeler_decomposition(order, k)),
    }
}

impl RunConfig {
    pub fn from_args(args: &RunArgs) -> Result<Self> {
        let case = CaseKind::from_str(&args.case)?;
        let formulations = match args.formulation {
            FormulationArg::Continuous => vec![Formulation::Continuous],
            FormulationArg::Dd => vec![Formulation::DomainDecomposition],
            FormulationArg::Both => vec![Formulation::Continuous, Formulation::DomainDecomposition],
        };
        if args.repeat == 0 {
            return Err(Error::Config("--repeat must be at least 1".into()));
        }
        if args.threads == Some(0) {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        let k1 = args.k1.as_deref().map(parse_axes).transpose()?;
        let k2 = args.k2.as_deref().map(parse_axes).transpose()?;
        let meshes = match case {
            CaseKind::Manufactured => {
                let ks = match (&args.sweep, args.k) {
                    (Some(s), _) => parse_sweep(s)?,
                    (None, Some(k)) => vec![k],
                    (None, None) => return Err(Error::Config("--K or --sweep is required".into())),
                };
                if args.sweep.is_some() && k1.is_some() && k2.is_some() {
                    return Err(Error::Config("a sweep takes at most one of --K1 and --K2".into()));
                }
                ks.iter()
                    .map(|&k| manufactured_mesh(args.order, k, k1, k2))
                    .collect::<Result<_>>()?
            }
            CaseKind::Spe10 | CaseKind::Spe10Crop => {
                if args.order != 1 {
                    return Err(Error::Config(
                        "reservoir cases use lowest-order elements (--N 1)".into(),
                    ));
                }
                if args.sweep.is_some() {
                    return Err(Error::Config("reservoir cases do not take a sweep".into()));
                }
                let d = match (&args.decomp, k1, k2) {
                    (Some(name), _, _) => Decomposition::preset(name)?,
                    (None, Some(a), Some(b)) => Decomposition {
                        subdomains: a,
                        sub_elements: b,
                    },
                    (None, _, _) if case == CaseKind::Spe10 => Decomposition::CASE1,
                    (None, _, _) => Decomposition::CROP,
                };
                vec![(d.subdomains, d.sub_elements)]
            }
        };
        if args.perm_file.is_none() && !args.synthetic && case != CaseKind::Manufactured {
            return Err(Error::Config("reservoir cases need --perm-file or --synthetic".into()));
        }
        let out = std::env::var_os("DARCY_DD_OUT")
            .map(PathBuf::from)
            .unwrap_or_else(|| args.out.clone());
        let samples = args
            .samples
            .unwrap_or(if case == CaseKind::Manufactured { 2 } else { 1 });
        Ok(Self {
            case,
            formulations,
            order: args.order,
            meshes,
            perm_file: args.perm_file.clone(),
            synthetic: args.synthetic,
            anisotropic: args.anisotropic,
            repeat: args.repeat,
            threads: args.threads,
            out,
            seed: args.seed,
            options: SolverOptions {
                mem_budget: args.mem_budget,
                condition_numbers: !args.no_cond,
                ..Default::default()
            },
            quad_bump: args.quad_bump,
            samples,
        })
    }

    /// Configuration echo for CSV headers; excludes the thread count so that
    /// outputs of different thread counts can be compared byte for byte.
    pub fn echo(&self) -> String {
        let meshes: Vec<String> = self
            .meshes
            .iter()
            .map(|(a, b)| format!("{}/{}", fmt3(*a), fmt3(*b)))
            .collect();
        let forms: Vec<&str> = self.formulations.iter().map(|f| f.as_str()).collect();
        format!(
            "# config: case={} formulation={} N={} meshes={} quad_bump={} seed={} mem_budget={} anisotropic={} perm={}",
            self.case,
            forms.join("+"),
            self.order,
            meshes.join(","),
            self.quad_bump,
            self.seed,
            self.options.mem_budget,
            self.anisotropic,
            match (&self.perm_file, self.synthetic) {
                (Some(p), _) => p.display().to_string(),
                (None, true) => "synthetic".into(),
                (None, false) => "-".into(),
            }
        )
    }
}

fn fmt3(v: [usize; 3]) -> String {
    if v[0] == v[1] && v[1] == v[2] {
        v[0].to_string()
    } else {
        format!("{}x{}x{}", v[0], v[1], v[2])
    }
}

/// Result of one configured solve.
#[derive(Clone, Debug)]
pub enum RunOutcome {
    Solved(SolveReport),
    OutOfMemory {
        formulation: Formulation,
        order: usize,
        elements: [usize; 3],
        required: u64,
    },
}

impl RunOutcome {
    fn key(&self) -> (usize, [usize; 3]) {
        match self {
            RunOutcome::Solved(r) => (r.order, r.elements),
            RunOutcome::OutOfMemory { order, elements, .. } => (*order, *elements),
        }
    }

    fn total(&self) -> Option<f64> {
        match self {
            RunOutcome::Solved(r) => Some(r.total_s),
            RunOutcome::OutOfMemory { .. } => None,
        }
    }
}

pub const SPEEDUP_CSV_HEADER: &str = "N,K,continuous_s,dd_s,speedup";

/// Speed-up `t_continuous / t_dd` per matched pair; `-` where either run did
/// not fit in memory.
pub fn speedup_report(continuous: &[RunOutcome], dd: &[RunOutcome]) -> Result<String> {
    if continuous.len() != dd.len() {
        return Err(Error::Comparison(format!(
            "{} continuous runs against {} decomposed runs",
            continuous.len(),
            dd.len()
        )));
    }
    let mut out = String::from(SPEEDUP_CSV_HEADER);
    out.push('\n');
    for (c, d) in continuous.iter().zip(dd) {
        if c.key() != d.key() {
            return Err(Error::Comparison(format!(
                "mesh mismatch: continuous {:?} against decomposed {:?}",
                c.key(),
                d.key()
            )));
        }
        let (order, elements) = c.key();
        let cell = |t: Option<f64>| t.map_or_else(|| "-".to_string(), |t| format!("{t:.6}"));
        let ratio = match (c.total(), d.total()) {
            (Some(a), Some(b)) if b > 0.0 => format!("{:.4}", a / b),
            _ => "-".into(),
        };
        writeln!(
            out,
            "{order},{},{},{},{ratio}",
            fmt3(elements),
            cell(c.total()),
            cell(d.total())
        )
        .expect("string write");
    }
    Ok(out)
}

/// Reads the mesh and timing columns of a timings.csv.
pub fn read_timings(path: &Path) -> Result<Vec<RunOutcome>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Config(format!("{} is empty", path.display())))?
        .split(',')
        .collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Error::Config(format!("{} has no '{name}' column", path.display())))
    };
    let (ci, cf, cn, ck, ct) = (
        col("status")?,
        col("formulation")?,
        col("N")?,
        col("K")?,
        col("total_s")?,
    );
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || Error::Config(format!("malformed timings row '{l}'"));
            let formulation = match *f.get(cf).ok_or_else(bad)? {
                "continuous" => Formulation::Continuous,
                _ => Formulation::DomainDecomposition,
            };
            let order = f.get(cn).ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let elements = parse_axes(f.get(ck).ok_or_else(bad)?)?;
            if *f.get(ci).ok_or_else(bad)? == "out_of_memory" {
                return Ok(RunOutcome::OutOfMemory {
                    formulation,
                    order,
                    elements,
                    required: 0,
                });
            }
            let total_s: f64 = f.get(ct).ok_or_else(bad)?.parse().map_err(|_| bad())?;
            Ok(RunOutcome::Solved(SolveReport {
                case_id: String::new(),
                formulation,
                order,
                elements,
                subdomains: [1; 3],
                sub_elements: elements,
                setup_s: 0.0,
                lambda_s: 0.0,
                recover_s: 0.0,
                total_s,
                cond_pressure: None,
                cond_lambda: None,
                dof_u: 0,
                dof_p: 0,
                dof_lambda: 0,
                stored_entries: 0,
                lambda_residual: None,
            }))
        })
        .collect()
}

fn load_field(cfg: &RunConfig) -> Result<PermeabilityField> {
    let full = match (&cfg.perm_file, cfg.synthetic) {
        (Some(path), _) => PermeabilityField::load(path, cfg.anisotropic)?,
        (None, true) => {
            let dims = if cfg.case == CaseKind::Spe10Crop {
                [SPE10_DIMS[0], SPE10_DIMS[1], CROP_LAYERS]
            } else {
                SPE10_DIMS
            };
            return Ok(synthetic_field(dims, cfg.seed));
        }
        (None, false) => return Err(Error::Config("no permeability source".into())),
    };
    match cfg.case {
        CaseKind::Spe10Crop => full.crop_layers(0, CROP_LAYERS),
        _ => Ok(full),
    }
}

fn definition(
    cfg: &RunConfig,
    mesh: ([usize; 3], [usize; 3]),
    field: Option<&PermeabilityField>,
) -> Result<ProblemDefinition> {
    let mut def = match cfg.case {
        CaseKind::Manufactured => wheeler_case(MeshSpec::new(cfg.order, mesh.0, mesh.1, Mapping::WheelerDeformed)?)?,
        CaseKind::Spe10 | CaseKind::Spe10Crop => spe10_case(
            field.ok_or_else(|| Error::Config("no permeability field".into()))?,
            Decomposition {
                subdomains: mesh.0,
                sub_elements: mesh.1,
            },
        )?,
    };
    def.problem.quadrature.bump = cfg.quad_bump;
    Ok(def)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// One row of every report for one solve.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub outcome: RunOutcome,
    pub total_mean_s: Option<f64>,
    pub repeats: usize,
    pub errors: Option<ErrorSummary>,
    pub div_residual_max: Option<f64>,
}

/// Everything a run produced.
#[derive(Debug, Default)]
pub struct RunSummary {
    pub records: Vec<RunRecord>,
    /// Largest continuous-vs-decomposed sample difference per mesh, when both ran.
    pub equivalence: Vec<(usize, [usize; 3], f64, f64)>,
    pub out_dir: PathBuf,
}

fn solve_repeated(
    problem: &DarcyProblem,
    formulation: Formulation,
    cfg: &RunConfig,
) -> Result<(Option<DarcySolution>, RunRecord)> {
    let mut reports = Vec::with_capacity(cfg.repeat);
    let mut last = None;
    for rep in 0..cfg.repeat {
        let mut options = cfg.options.clone();
        options.condition_numbers &= rep == 0;
        match solve(problem, formulation, &options) {
            Ok(sol) => {
                reports.push(sol.report.clone());
                last = Some(sol);
            }
            Err(Error::OutOfMemory { required, .. }) => {
                log::warn!(
                    "{formulation} at K={:?} exceeds the memory budget",
                    problem.spec.elements
                );
                let outcome = RunOutcome::OutOfMemory {
                    formulation,
                    order: problem.spec.order,
                    elements: problem.spec.elements,
                    required,
                };
                return Ok((
                    None,
                    RunRecord {
                        outcome,
                        total_mean_s: None,
                        repeats: 0,
                        errors: None,
                        div_residual_max: None,
                    },
                ));
            }
            Err(e) => return Err(e),
        }
    }
    let mut report = reports[0].clone();
    let pick = |f: fn(&SolveReport) -> f64| median(&mut reports.iter().map(f).collect::<Vec<_>>());
    report.setup_s = pick(|r| r.setup_s);
    report.lambda_s = pick(|r| r.lambda_s);
    report.recover_s = pick(|r| r.recover_s);
    report.total_s = pick(|r| r.total_s);
    let mean = reports.iter().map(|r| r.total_s).sum::<f64>() / reports.len() as f64;
    let sol = last.expect("at least one repetition");
    Ok((
        Some(sol),
        RunRecord {
            outcome: RunOutcome::Solved(report),
            total_mean_s: Some(mean),
            repeats: cfg.repeat,
            errors: None,
            div_residual_max: None,
        },
    ))
}

/// Runs a configuration inside a thread pool of the requested size.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start {:?} worker threads: {e}", cfg.threads)))?;
    pool.install(|| run_in_pool(cfg))
}

fn run_in_pool(cfg: &RunConfig) -> Result<RunSummary> {
    fs::create_dir_all(&cfg.out)?;
    let field = match cfg.case {
        CaseKind::Manufactured => None,
        _ => Some(load_field(cfg)?),
    };
    let mut summary = RunSummary {
        out_dir: cfg.out.clone(),
        ..Default::default()
    };
    let mut last_samples = None;
    for &mesh in &cfg.meshes {
        let def = definition(cfg, mesh, field.as_ref())?;
        let mut mesh_samples = Vec::new();
        for &formulation in &cfg.formulations {
            let (sol, mut record) = solve_repeated(&def.problem, formulation, cfg)?;
            if let Some(sol) = sol {
                record.div_residual_max = Some(sol.divergence_residual()?);
                record.errors = Some(match &def.exact {
                    Some(exact) => compute_errors(&def.problem, &sol, exact)?,
                    None => ErrorSummary {
                        case_id: def.problem.case_id.clone(),
                        order: cfg.order,
                        elements: def.problem.spec.elements[0],
                        h: 2.0 / def.problem.spec.elements[0] as f64,
                        l2_div_residual: l2_div_residual(&def.problem, &sol)?,
                        hdiv_u_error: f64::NAN,
                        h1_p_error: f64::NAN,
                    },
                });
                let samples = sample_fields(&def.problem, &sol, cfg.samples)?;
                mesh_samples.push(samples);
            }
            summary.records.push(record);
        }
        if mesh_samples.len() == 2 {
            let (dp, du) = crate::postproc::max_sample_difference(&mesh_samples[0], &mesh_samples[1])?;
            summary.equivalence.push((cfg.order, def.problem.spec.elements, dp, du));
        }
        if let Some(s) = mesh_samples.pop() {
            last_samples = Some(s);
        }
    }
    write_reports(cfg, &summary, last_samples.as_deref())?;
    Ok(summary)
}

fn fmt_err(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.10e}")
    } else {
        "-".into()
    }
}

fn write_reports(cfg: &RunConfig, summary: &RunSummary, samples: Option<&[crate::postproc::Sample]>) -> Result<()> {
    let echo = cfg.echo();
    let dir = &cfg.out;

    let mut errors = format!("{echo}\ncase,formulation,N,K,h,e_div,e_hdiv,e_h1,div_max,rate_div,rate_hdiv,rate_h1\n");
    let mut rates = format!("{echo}\ncase,formulation,N,quantity,slope\n");
    for &formulation in &cfg.formulations {
        let rows: Vec<(&ErrorSummary, f64)> = summary
            .records
            .iter()
            .filter(|r| matches!(&r.outcome, RunOutcome::Solved(s) if s.formulation == formulation))
            .filter_map(|r| r.errors.as_ref().zip(r.div_residual_max))
            .collect();
        let mut prev: Option<&ErrorSummary> = None;
        for &(e, div_max) in &rows {
            let rate = |a: Option<f64>, b: f64| -> String {
                match a.map(|a| convergence_rates(&[(prev.expect("previous row").h, a), (e.h, b)])) {
                    Some(Ok(r)) => format!("{:.4}", r.least_squares),
                    _ => "-".into(),
                }
            };
            let (rd, rh, r1) = if prev.is_some() {
                (
                    rate(prev.map(|p| p.l2_div_residual), e.l2_div_residual),
                    rate(prev.map(|p| p.hdiv_u_error), e.hdiv_u_error),
                    rate(prev.map(|p| p.h1_p_error), e.h1_p_error),
                )
            } else {
                ("-".into(), "-".into(), "-".into())
            };
            writeln!(
                errors,
                "{},{},{},{},{:.6},{},{},{},{},{rd},{rh},{r1}",
                e.case_id,
                formulation,
                e.order,
                e.elements,
                e.h,
                fmt_err(e.l2_div_residual),
                fmt_err(e.hdiv_u_error),
                fmt_err(e.h1_p_error),
                fmt_err(div_max)
            )
            .expect("string write");
            prev = Some(e);
        }
        if rows.len() >= 2 {
            let case = &rows[0].0.case_id;
            for (name, get) in [
                (
                    "e_hdiv",
                    (|e: &ErrorSummary| e.hdiv_u_error) as fn(&ErrorSummary) -> f64,
                ),
                ("e_h1", |e: &ErrorSummary| e.h1_p_error),
            ] {
                let series: Vec<(f64, f64)> = rows.iter().map(|(e, _)| (e.h, get(e))).collect();
                let slope =
                    convergence_rates(&series).map_or_else(|_| "-".into(), |r| format!("{:.4}", r.least_squares));
                writeln!(rates, "{case},{formulation},{},{name},{slope}", cfg.order).expect("string write");
            }
        }
    }
    fs::write(dir.join("errors.csv"), errors)?;
    fs::write(dir.join("rates.csv"), rates)?;

    let mut timings = format!(
        "{echo}\ncase,formulation,N,K,K1,K2,status,repeats,setup_s,lambda_s,recover_s,total_s,total_mean_s,lambda_frac,dof_u,dof_p,dof_lambda,stored_entries\n"
    );
    let mut cond = format!("{echo}\ncase,formulation,N,K,cond_pressure,cond_lambda\n");
    let case = cfg.case.as_str();
    for r in &summary.records {
        match &r.outcome {
            RunOutcome::Solved(s) => {
                writeln!(
                    timings,
                    "{},{},{},{},{},{},ok,{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.4},{},{},{},{}",
                    case,
                    s.formulation,
                    s.order,
                    fmt3(s.elements),
                    fmt3(s.subdomains),
                    fmt3(s.sub_elements),
                    r.repeats,
                    s.setup_s,
                    s.lambda_s,
                    s.recover_s,
                    s.total_s,
                    r.total_mean_s.unwrap_or(s.total_s),
                    s.lambda_fraction(),
                    s.dof_u,
                    s.dof_p,
                    s.dof_lambda,
                    s.stored_entries
                )
                .expect("string write");
                let c = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.6e}"));
                writeln!(
                    cond,
                    "{case},{},{},{},{},{}",
                    s.formulation,
                    s.order,
                    fmt3(s.elements),
                    c(s.cond_pressure),
                    c(s.cond_lambda)
                )
                .expect("string write");
            }
            RunOutcome::OutOfMemory {
                formulation,
                order,
                elements,
                required,
            } => {
                writeln!(
                    timings,
                    "{case},{formulation},{order},{},-,-,out_of_memory,0,-,-,-,-,-,-,-,-,-,{required}",
                    fmt3(*elements)
                )
                .expect("string write");
                writeln!(cond, "{case},{formulation},{order},{},-,-", fmt3(*elements)).expect("string write");
            }
        }
    }
    fs::write(dir.join("timings.csv"), timings)?;
    fs::write(dir.join("cond.csv"), cond)?;

    let mut buf = format!("{echo}\n").into_bytes();
    write_samples_csv(&mut buf, samples.unwrap_or(&[]))?;
    fs::write(dir.join("samples.csv"), buf)?;

    if cfg.formulations.len() == 2 {
        let cont: Vec<RunOutcome> = summary
            .records
            .iter()
            .filter(|r| run_formulation(&r.outcome) == Formulation::Continuous)
            .map(|r| r.outcome.clone())
            .collect();
        let dd: Vec<RunOutcome> = summary
            .records
            .iter()
            .filter(|r| run_formulation(&r.outcome) == Formulation::DomainDecomposition)
            .map(|r| r.outcome.clone())
            .collect();
        fs::write(
            dir.join("speedup.csv"),
            format!("{echo}\n{}", speedup_report(&cont, &dd)?),
        )?;
        let mut eq = format!("{echo}\nN,K,max_diff_p,max_diff_u\n");
        for (n, k, dp, du) in &summary.equivalence {
            writeln!(eq, "{n},{},{dp:.3e},{du:.3e}", fmt3(*k)).expect("string write");
        }
        fs::write(dir.join("equivalence.csv"), eq)?;
    }
    Ok(())
}

fn run_formulation(o: &RunOutcome) -> Formulation {
    match o {
        RunOutcome::Solved(r) => r.formulation,
        RunOutcome::OutOfMemory { formulation, .. } => *formulation,
    }
}

/// Parses arguments and runs, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Run(args) => RunConfig::from_args(args).and_then(|cfg| {
            log::info!("{}", cfg.echo());
            let summary = run(&cfg)?;
            for r in &summary.records {
                if let RunOutcome::Solved(s) = &r.outcome {
                    println!("{}", s.csv_row());
                }
            }
            println!("reports written to {}", summary.out_dir.display());
            Ok(())
        }),
        Command::Speedup { continuous, dd } => read_timings(continuous)
            .and_then(|c| read_timings(dd).map(|d| (c, d)))
            .and_then(|(c, d)| {
                print!("{}", speedup_report(&c, &d)?);
                Ok(())
            }),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let cat = e.category();
            eprintln!("error[{cat}]: {e}");
            cat.exit_code()
        }
    }
}
