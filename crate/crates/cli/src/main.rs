mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use valdesign::experiments::{
    equivalence_check, run_delta, run_ise, CriteriaEvaluator, DeltaConfig, EquivalenceConfig, IseConfig,
    StreamSeeds, DELTA_COLUMNS, ISE_COLUMNS, ISE_SUMMARY_COLUMNS,
};
use valdesign::geometry::{default_probes, space_filling_report};
use valdesign::herding::{run, HerdingConfig, Variant};
use valdesign::io::{format_float, write_design, write_table};
use valdesign::measures::{DiscreteMeasure, MuRepresentation};
use valdesign::testbed::sobol_points;
use valdesign::{Design, Kernel, Matern32, MaternForm};

use output::{load_design, sink, RunRecord};

#[derive(Parser)]
#[command(name = "valdesign", version, about = "Validation designs by kernel herding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a design by herding over a Sobol' candidate set.
    Design(DesignArgs),
    /// Optimal unconstrained weights of a design under the validation kernel.
    Weights(WeightsArgs),
    /// Validation criteria and space-filling radii of designs.
    Criteria(CriteriaArgs),
    /// Covering and packing radii of designs.
    Metrics(MetricsArgs),
    /// Relative ISE estimation errors on random polynomial truths.
    ExperimentIse(IseArgs),
    /// Criteria of several validation designs for a herded prediction design.
    ExperimentDelta(DeltaArgs),
    /// Check that weighted herding from X_n and conditional-kernel herding agree.
    Theorem1Check(Theorem1Args),
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
enum Form {
    Isotropic,
    Product,
}

impl From<Form> for MaternForm {
    fn from(f: Form) -> Self {
        match f {
            Form::Isotropic => MaternForm::Isotropic,
            Form::Product => MaternForm::Product,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
enum VariantArg {
    Kh,
    Mn,
    Mn2,
    KhExclude,
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
enum MuArg {
    /// Uniform on the candidate set.
    Discrete,
    /// Uniform on the cube in closed form (product kernel only).
    Closed,
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
enum Conditioning {
    /// `K|n`.
    Conditional,
    /// `K̄|n`.
    Validation,
}

#[derive(Clone, Copy, Debug, Serialize)]
#[serde(untagged)]
enum Theta {
    Auto(&'static str),
    Value(f64),
}

fn parse_theta(s: &str) -> Result<Theta, String> {
    if s == "auto" {
        return Ok(Theta::Auto("auto"));
    }
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(Theta::Value(v)),
        _ => Err(format!("expected a positive number or `auto`, got {s:?}")),
    }
}

impl Theta {
    /// `auto` is `n^{1/d}`.
    fn resolve(self, n: usize, dim: usize) -> f64 {
        match self {
            Theta::Value(v) => v,
            Theta::Auto(_) => (n.max(1) as f64).powf(1.0 / dim as f64),
        }
    }

    fn as_option(self) -> Option<f64> {
        match self {
            Theta::Value(v) => Some(v),
            Theta::Auto(_) => None,
        }
    }
}

#[derive(Args, Clone, Debug, Serialize)]
struct KernelArgs {
    /// Inverse correlation length, or `auto` for `n^{1/d}`.
    #[arg(long, default_value = "auto", value_parser = parse_theta)]
    theta: Theta,
    #[arg(long, value_enum, default_value_t = Form::Isotropic)]
    kernel: Form,
    /// Candidate set size.
    #[arg(long, default_value_t = 4096)]
    q: usize,
    #[arg(long, value_enum, default_value_t = MuArg::Discrete)]
    mu: MuArg,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl KernelArgs {
    fn base(&self, dim: usize, n: usize) -> Result<Matern32> {
        Ok(Matern32::new(self.kernel.into(), dim, self.theta.resolve(n, dim))?)
    }

    fn candidates(&self, dim: usize) -> Result<Design> {
        Ok(sobol_points(dim, self.q, StreamSeeds::new(self.seed).candidates, true)?)
    }

    fn mu(&self, kernel: &Kernel, candidates: &Design) -> Result<MuRepresentation> {
        Ok(match self.mu {
            MuArg::Discrete => MuRepresentation::discrete(candidates.clone())?,
            MuArg::Closed => MuRepresentation::closed_form(kernel)
                .context("closed-form mu needs the product kernel (--kernel product)")?,
        })
    }
}

#[derive(Args, Debug, Serialize)]
struct DesignArgs {
    #[arg(long)]
    d: usize,
    /// Number of points to select.
    #[arg(long, visible_alias = "m", default_value_t = 50)]
    n: usize,
    #[arg(long, value_enum, default_value_t = VariantArg::Kh)]
    variant: VariantArg,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Initial design the herding continues from.
    #[arg(long)]
    #[serde(skip)]
    initial: Option<PathBuf>,
    /// Prediction design to condition the kernel on (and to exclude for kh-exclude).
    #[arg(long)]
    #[serde(skip)]
    xn: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Conditioning::Validation)]
    conditioning: Conditioning,
    /// kh-exclude: let repeated selections count toward the target.
    #[arg(long)]
    allow_repeats: bool,
    /// kh-exclude: iteration cap (default 50 times the target).
    #[arg(long)]
    cap: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct WeightsArgs {
    #[arg(long)]
    #[serde(skip)]
    design: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    xn: PathBuf,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct CriteriaArgs {
    /// Design files; a `w` column is used as weights.
    #[arg(long, required = true, num_args = 1..)]
    #[serde(skip)]
    design: Vec<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    xn: PathBuf,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Sobol' points for the IMSE reference.
    #[arg(long, default_value_t = 1 << 16)]
    reference: usize,
    /// Sobol' probes for the covering radius.
    #[arg(long, default_value_t = 1 << 16)]
    probes: usize,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct MetricsArgs {
    #[arg(long, required = true, num_args = 1..)]
    #[serde(skip)]
    design: Vec<PathBuf>,
    #[arg(long, default_value_t = 1 << 16)]
    probes: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct IseArgs {
    /// Dimensions, comma separated.
    #[arg(long = "d", value_delimiter = ',', default_value = "2,3")]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    m: usize,
    #[arg(long, default_value_t = 4096)]
    q: usize,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[arg(long, default_value_t = 1 << 16)]
    reference: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
    /// Per-method means; defaults to `<out>.summary.csv`.
    #[arg(long)]
    #[serde(skip)]
    summary: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct DeltaArgs {
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    m: usize,
    #[arg(long, default_value_t = 4096)]
    q: usize,
    #[arg(long, default_value = "auto", value_parser = parse_theta)]
    theta: Theta,
    #[arg(long, value_enum, default_value_t = Form::Isotropic)]
    kernel: Form,
    #[arg(long, default_value_t = 1 << 16)]
    reference: usize,
    #[arg(long, default_value_t = 1 << 16)]
    probes: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
    /// Also write the prediction design here.
    #[arg(long)]
    #[serde(skip)]
    xn_out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct Theorem1Args {
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    m: usize,
    #[arg(long, default_value_t = 10.0)]
    theta: f64,
    #[arg(long, default_value_t = 256)]
    q: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

fn inputs<'a>(pairs: &[(&'a str, Option<&'a Path>)]) -> Vec<(&'a str, &'a Path)> {
    pairs.iter().filter_map(|(k, p)| p.map(|p| (*k, p))).collect()
}

fn check_dim(file: &Design, dim: usize, what: &str) -> Result<()> {
    if file.dim() != dim {
        bail!("{what} has dimension {}, expected {dim}", file.dim());
    }
    Ok(())
}

#[derive(Serialize)]
struct DesignResult {
    variant: &'static str,
    iterations: usize,
    points: usize,
    theta: f64,
    mmd2: Vec<f64>,
    total_mass: Vec<f64>,
    initial_weights: Vec<f64>,
    in_excluded_selections: usize,
    repeated_selections: usize,
    mmd_clamped: bool,
}

fn cmd_design(args: &DesignArgs) -> Result<()> {
    let d = args.d;
    let initial = args.initial.as_deref().map(load_design).transpose()?.map(|f| f.design);
    let xn = args.xn.as_deref().map(load_design).transpose()?.map(|f| f.design);
    for (f, what) in [(&initial, "initial design"), (&xn, "prediction design")] {
        if let Some(f) = f {
            check_dim(f, d, what)?;
        }
    }
    let scale_n = xn.as_ref().or(initial.as_ref()).map_or(args.n, Design::len);
    let base = args.kernel.base(d, scale_n)?;
    let kernel = match (&xn, args.conditioning) {
        (None, _) => Kernel::Matern(base),
        (Some(x), Conditioning::Conditional) => Kernel::conditional(base, x.clone())?,
        (Some(x), Conditioning::Validation) => Kernel::validation(base, x.clone())?,
    };
    let candidates = args.kernel.candidates(d)?;
    let mu = args.kernel.mu(&kernel, &candidates)?;
    let variant = match args.variant {
        VariantArg::Kh => Variant::Kh,
        VariantArg::Mn => Variant::Mn,
        VariantArg::Mn2 => Variant::Mn2,
        VariantArg::KhExclude => Variant::KhExclude {
            exclude: xn.clone().context("kh-exclude needs the prediction design (--xn)")?,
            target: args.n,
            distinct: !args.allow_repeats,
            cap: args.cap,
        },
    };
    let mut config = HerdingConfig::new(kernel, mu, candidates, variant).with_iterations(args.n);
    if let Some(init) = initial {
        config = config.with_initial(init);
    }
    let trace = run(&config)?;

    let record = RunRecord::new(
        "design",
        args,
        &inputs(&[("initial", args.initial.as_deref()), ("xn", args.xn.as_deref())]),
        args.kernel.seed,
    )?;
    let w = trace.measure.weights();
    let own = &w[w.len() - trace.design.len()..];
    let weights = match args.variant {
        VariantArg::Kh => None,
        _ => Some(own),
    };
    let mut out = sink(args.out.as_deref())?;
    write_design(&mut out, &record.meta(), &trace.design, weights, None)?;
    out.flush()?;
    let count = |k| trace.events.iter().filter(|e| e.kind == k).count();
    record.write_sidecar(
        args.out.as_deref(),
        &DesignResult {
            variant: trace.variant,
            iterations: trace.iterations(),
            points: trace.design.len(),
            theta: base.theta(),
            mmd2: trace.mmd2.clone(),
            total_mass: trace.total_mass.clone(),
            initial_weights: w[..w.len() - trace.design.len()].to_vec(),
            in_excluded_selections: count(valdesign::herding::EventKind::InExcluded),
            repeated_selections: count(valdesign::herding::EventKind::Repeat),
            mmd_clamped: trace.mmd_clamped,
        },
    )
}

fn evaluator(kernel: &KernelArgs, xn: &Design, reference: usize, probes: usize) -> Result<CriteriaEvaluator> {
    let d = xn.dim();
    let base = kernel.base(d, xn.len())?;
    let seeds = StreamSeeds::new(kernel.seed);
    let validation = Kernel::validation(base, xn.clone())?;
    let candidates = kernel.candidates(d)?;
    let mu = kernel.mu(&validation, &candidates)?;
    let reference = sobol_points(d, reference, seeds.reference, true)?;
    let probes = default_probes(d, probes, seeds.probes)?;
    Ok(CriteriaEvaluator::new(base, xn.clone(), mu, &reference, probes)?)
}

#[derive(Serialize)]
struct WeightsResult {
    total_mass: f64,
    pruned: usize,
    delta_bar: f64,
}

fn cmd_weights(args: &WeightsArgs) -> Result<()> {
    let z = load_design(&args.design)?.design;
    let xn = load_design(&args.xn)?.design;
    check_dim(&z, xn.dim(), "design")?;
    // the radii are not reported here, so a tiny probe set suffices
    let eval = evaluator(&args.kernel, &xn, 1, 1)?;
    let w = eval.weights(&z)?;
    let measure = DiscreteMeasure::new(z.clone(), w.weights.clone())?;
    let delta_bar = valdesign::measures::mmd_squared(eval.validation_kernel(), &measure, eval.mu()).value.sqrt();
    let record = RunRecord::new(
        "weights",
        args,
        &[("design", args.design.as_path()), ("xn", args.xn.as_path())],
        args.kernel.seed,
    )?;
    let mut out = sink(args.out.as_deref())?;
    write_design(&mut out, &record.meta(), &z, Some(&w.weights), Some(&w.pruned))?;
    out.flush()?;
    record.write_sidecar(
        args.out.as_deref(),
        &WeightsResult { total_mass: w.total_mass(), pruned: w.pruned.iter().filter(|&&p| p).count(), delta_bar },
    )
}

fn design_label(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn cmd_criteria(args: &CriteriaArgs) -> Result<()> {
    let xn = load_design(&args.xn)?.design;
    let eval = evaluator(&args.kernel, &xn, args.reference, args.probes)?;
    let mut rows = Vec::new();
    let mut files = vec![("xn".to_string(), args.xn.as_path())];
    for (i, path) in args.design.iter().enumerate() {
        let f = load_design(path)?;
        check_dim(&f.design, xn.dim(), "design")?;
        let weighted = f.weights.is_some();
        let measure = match f.weights {
            Some(w) => DiscreteMeasure::new(f.design, w)?,
            None => DiscreteMeasure::uniform(f.design),
        };
        let size = measure.len();
        rows.push(eval.evaluate(&design_label(path), weighted, &measure, size)?);
        files.push((format!("design{i}"), path.as_path()));
    }
    let names: Vec<(&str, &Path)> = files.iter().map(|(k, p)| (k.as_str(), *p)).collect();
    let record = RunRecord::new("criteria", args, &names, args.kernel.seed)?;
    let report = valdesign::experiments::DeltaReport {
        config: DeltaConfig::desk(xn.dim(), args.kernel.seed),
        theta: args.kernel.theta.resolve(xn.len(), xn.dim()),
        prediction_design: xn,
        imse_reference: eval.imse_reference(),
        rows,
    };
    let mut out = sink(args.out.as_deref())?;
    write_table(&mut out, &record.meta(), &DELTA_COLUMNS, &report.table_rows())?;
    out.flush()?;
    record.write_sidecar(args.out.as_deref(), &report.rows)
}

const METRIC_COLUMNS: [&str; 7] =
    ["design", "size", "covering", "packing", "covering_renormalized", "packing_renormalized", "probes"];

fn cmd_metrics(args: &MetricsArgs) -> Result<()> {
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    let mut files = Vec::new();
    for (i, path) in args.design.iter().enumerate() {
        let z = load_design(path)?.design;
        let probes = default_probes(z.dim(), args.probes, StreamSeeds::new(args.seed).probes)?;
        let r = space_filling_report(&z, &probes).with_context(|| format!("metrics of {}", path.display()))?;
        rows.push(vec![
            design_label(path),
            r.size.to_string(),
            format_float(r.covering),
            format_float(r.packing),
            format_float(r.covering_renormalized),
            format_float(r.packing_renormalized),
            r.probes.to_string(),
        ]);
        reports.push(r);
        files.push((format!("design{i}"), path.as_path()));
    }
    let names: Vec<(&str, &Path)> = files.iter().map(|(k, p)| (k.as_str(), *p)).collect();
    let record = RunRecord::new("metrics", args, &names, args.seed)?;
    let mut out = sink(args.out.as_deref())?;
    write_table(&mut out, &record.meta(), &METRIC_COLUMNS, &rows)?;
    out.flush()?;
    record.write_sidecar(args.out.as_deref(), &reports)
}

#[derive(Serialize)]
struct IseResult<'a> {
    replicates: usize,
    failed: usize,
    failures: &'a [valdesign::experiments::IseFailure],
    summary: Vec<valdesign::experiments::IseSummary>,
}

fn cmd_experiment_ise(args: &IseArgs) -> Result<()> {
    let config = IseConfig {
        dims: args.dims.clone(),
        n: args.n,
        m: args.m,
        q: args.q,
        replicates: args.reps,
        seed: args.seed,
        reference_size: args.reference,
    };
    let study = run_ise(&config)?;
    for f in &study.failures {
        eprintln!("replicate {} in d={} skipped: {}", f.replicate, f.d, f.message);
    }
    let record = RunRecord::new("experiment-ise", args, &[], args.seed)?;
    let mut out = sink(args.out.as_deref())?;
    write_table(&mut out, &record.meta(), &ISE_COLUMNS, &study.table_rows())?;
    out.flush()?;
    let summary_path = args.summary.clone().or_else(|| {
        args.out.as_ref().map(|o| {
            let mut s = o.as_os_str().to_owned();
            s.push(".summary.csv");
            PathBuf::from(s)
        })
    });
    if let Some(p) = &summary_path {
        let mut f = sink(Some(p))?;
        write_table(&mut f, &record.meta(), &ISE_SUMMARY_COLUMNS, &study.summary_rows())?;
        f.flush()?;
    }
    record.write_sidecar(
        args.out.as_deref(),
        &IseResult {
            replicates: args.reps * args.dims.len(),
            failed: study.failures.len(),
            failures: &study.failures,
            summary: study.summary(),
        },
    )
}

fn cmd_experiment_delta(args: &DeltaArgs) -> Result<()> {
    let config = DeltaConfig {
        dim: args.d,
        n: args.n,
        m: args.m,
        q: args.q,
        theta: args.theta.as_option(),
        form: args.kernel.into(),
        seed: args.seed,
        reference_size: args.reference,
        probe_count: args.probes,
    };
    let report = run_delta(&config)?;
    let record = RunRecord::new("experiment-delta", args, &[], args.seed)?;
    let mut out = sink(args.out.as_deref())?;
    write_table(&mut out, &record.meta(), &DELTA_COLUMNS, &report.table_rows())?;
    out.flush()?;
    if let Some(p) = &args.xn_out {
        let mut f = sink(Some(p))?;
        write_design(&mut f, &record.meta(), &report.prediction_design, None, None)?;
        f.flush()?;
    }
    record.write_sidecar(args.out.as_deref(), &report.rows)
}

fn cmd_theorem1(args: &Theorem1Args) -> Result<bool> {
    let report = equivalence_check(&EquivalenceConfig {
        n: args.n,
        k: args.m,
        theta: args.theta,
        q: args.q,
        seed: args.seed,
    })?;
    let record = RunRecord::new("theorem1-check", args, &[], args.seed)?;
    let rows: Vec<Vec<String>> = report
        .from_design
        .iter()
        .zip(&report.conditional)
        .enumerate()
        .map(|(i, (a, b))| vec![i.to_string(), format_float(*a), format_float(*b), (a == b).to_string()])
        .collect();
    let mut out = sink(args.out.as_deref())?;
    write_table(&mut out, &record.meta(), &["step", "from_design", "conditional", "equal"], &rows)?;
    out.flush()?;
    record.write_sidecar(args.out.as_deref(), &report)?;
    eprintln!("sequences identical: {}", report.identical);
    Ok(report.identical)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Design(a) => cmd_design(a).map(|_| true),
        Command::Weights(a) => cmd_weights(a).map(|_| true),
        Command::Criteria(a) => cmd_criteria(a).map(|_| true),
        Command::Metrics(a) => cmd_metrics(a).map(|_| true),
        Command::ExperimentIse(a) => cmd_experiment_ise(a).map(|_| true),
        Command::ExperimentDelta(a) => cmd_experiment_delta(a).map(|_| true),
        Command::Theorem1Check(a) => cmd_theorem1(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
