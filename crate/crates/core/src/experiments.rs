//! The two desk-scale studies: validation criteria of several designs
//! conditioned on a herded prediction design, and relative ISE estimation
//! errors on random polynomial truths. Also a direct check that weighted
//! herding from `X_n` and herding with the conditional kernel agree.

use rand::SeedableRng;
use rayon::prelude::*;
use serde::Serialize;

use crate::design::Design;
use crate::error::{Error, Result};
use crate::geometry::{default_probes, space_filling_report};
use crate::gp::{fit_theta_loo, ise_hat, ise_reference, relative_error, GpModel, ThetaSearch};
use crate::herding::{run, HerdingConfig, HerdingTrace, Variant};
use crate::io::format_float;
use crate::kernel::{ConditionalKernel, Kernel, Matern32, MaternForm};
use crate::measures::{mmd_squared, optimal_weights_free, DiscreteMeasure, FreeWeights, MuRepresentation};
use crate::testbed::{sobol_points, uniform_points, PolynomialSpec, RandomPolynomial, SeededRng, SobolStream};

/// Bandwidth used for space filling: `n^{1/d}`.
pub fn default_theta(n: usize, dim: usize) -> f64 {
    (n as f64).powf(1.0 / dim as f64)
}

/// Seeds for independent Sobol' scramblings and random draws, derived from
/// one master seed.
fn stream_rng(seed: u64, stream: u64) -> SeededRng {
    let mut rng = SeededRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn sub_seed(rng: &mut SeededRng) -> u64 {
    rand::Rng::random(rng)
}

/// Herded design `KH(∅, K, n)` over `candidates` with `mu` the uniform
/// measure on the candidates.
pub fn herded_design(kernel: &Kernel, candidates: &Design, n: usize) -> Result<HerdingTrace> {
    let mu = MuRepresentation::discrete(candidates.clone())?;
    run(&HerdingConfig::new(kernel.clone(), mu, candidates.clone(), Variant::Kh).with_iterations(n))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeltaConfig {
    pub dim: usize,
    pub n: usize,
    pub m: usize,
    /// Candidate set size; `mu` is uniform on the candidates.
    pub q: usize,
    /// `None` means `n^{1/d}`.
    pub theta: Option<f64>,
    pub form: MaternForm,
    pub seed: u64,
    /// Sobol' points used for the IMSE reference.
    pub reference_size: usize,
    /// Sobol' probes for the covering radius (the `3^d` grid is added).
    pub probe_count: usize,
}

impl DeltaConfig {
    pub fn desk(dim: usize, seed: u64) -> Self {
        DeltaConfig {
            dim,
            n: 50,
            m: 50,
            q: 1 << 12,
            theta: None,
            form: MaternForm::Isotropic,
            seed,
            reference_size: 1 << 16,
            probe_count: 1 << 16,
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta.unwrap_or_else(|| default_theta(self.n, self.dim))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeltaRow {
    pub method: String,
    pub weighted: bool,
    pub size: usize,
    /// `E^{1/2}_{K̄|n}(ζ − μ_Q)`.
    pub delta_bar: f64,
    /// `|IMSE estimate − IMSE reference|`.
    pub delta: f64,
    pub imse_hat: f64,
    pub covering: f64,
    pub packing: f64,
    pub covering_renormalized: f64,
    pub packing_renormalized: f64,
    pub total_mass: f64,
    /// Herding iterations, for KH-exclude larger than `size`.
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct DeltaReport {
    pub config: DeltaConfig,
    pub theta: f64,
    pub prediction_design: Design,
    pub imse_reference: f64,
    pub rows: Vec<DeltaRow>,
}

pub const DELTA_COLUMNS: [&str; 13] = [
    "method",
    "weighted",
    "size",
    "delta_bar",
    "delta",
    "imse_hat",
    "covering",
    "packing",
    "covering_renormalized",
    "packing_renormalized",
    "total_mass",
    "iterations",
    "imse_reference",
];

impl DeltaReport {
    pub fn table_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                let mut row = vec![r.method.clone(), r.weighted.to_string(), r.size.to_string()];
                for v in [
                    r.delta_bar,
                    r.delta,
                    r.imse_hat,
                    r.covering,
                    r.packing,
                    r.covering_renormalized,
                    r.packing_renormalized,
                    r.total_mass,
                ] {
                    row.push(format_float(v));
                }
                row.push(r.iterations.to_string());
                row.push(format_float(self.imse_reference));
                row
            })
            .collect()
    }

    pub fn row(&self, method: &str, weighted: bool) -> Option<&DeltaRow> {
        self.rows.iter().find(|r| r.method == method && r.weighted == weighted)
    }
}

/// Validation criteria of weighted designs relative to a prediction
/// design: `Δ̄` under `K̄|n`, `Δ` against an IMSE reference, and
/// space-filling radii.
pub struct CriteriaEvaluator {
    validation: Kernel,
    mu: MuRepresentation,
    probes: Design,
    imse_reference: f64,
}

impl CriteriaEvaluator {
    /// `mu` must be discrete or built for the validation kernel of `base`
    /// and `x_n`; `reference` is the point set for the IMSE reference.
    pub fn new(base: Matern32, x_n: Design, mu: MuRepresentation, reference: &Design, probes: Design) -> Result<Self> {
        let validation = Kernel::validation(base, x_n)?;
        let cond = validation.conditioning().expect("validation kernel carries its conditioning");
        let imse_reference = reference.iter().map(|x| cond.variance(x)).sum::<f64>() / reference.len().max(1) as f64;
        Ok(CriteriaEvaluator { validation, mu, probes, imse_reference })
    }

    pub fn validation_kernel(&self) -> &Kernel {
        &self.validation
    }

    pub fn mu(&self) -> &MuRepresentation {
        &self.mu
    }

    pub fn imse_reference(&self) -> f64 {
        self.imse_reference
    }

    fn conditional(&self) -> &ConditionalKernel {
        self.validation.conditioning().expect("validation kernel carries its conditioning")
    }

    pub fn evaluate(&self, method: &str, weighted: bool, measure: &DiscreteMeasure, iterations: usize) -> Result<DeltaRow> {
        let design = measure.support();
        let delta_bar = mmd_squared(&self.validation, measure, &self.mu).value.sqrt();
        let cond = self.conditional();
        let imse_hat: f64 = design.iter().zip(measure.weights()).map(|(z, w)| w * cond.variance(z)).sum();
        let sf = space_filling_report(design, &self.probes)?;
        Ok(DeltaRow {
            method: method.to_string(),
            weighted,
            size: design.len(),
            delta_bar,
            delta: (imse_hat - self.imse_reference).abs(),
            imse_hat,
            covering: sf.covering,
            packing: sf.packing,
            covering_renormalized: sf.covering_renormalized,
            packing_renormalized: sf.packing_renormalized,
            total_mass: measure.total_mass(),
            iterations,
        })
    }

    /// Unconstrained optimal weights under `K̄|n`.
    pub fn weights(&self, support: &Design) -> Result<FreeWeights> {
        optimal_weights_free(&self.validation, support, &self.mu)
    }

    pub fn weighted(&self, support: &Design) -> Result<DiscreteMeasure> {
        DiscreteMeasure::new(support.clone(), self.weights(support)?.weights)
    }
}

/// Scrambling seeds of the point sets used by the criteria study, all
/// derived from one master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamSeeds {
    pub candidates: u64,
    pub sobol: u64,
    pub reference: u64,
    pub probes: u64,
}

impl StreamSeeds {
    pub fn new(seed: u64) -> Self {
        let mut rng = stream_rng(seed, 0);
        StreamSeeds {
            candidates: sub_seed(&mut rng),
            sobol: sub_seed(&mut rng),
            reference: sub_seed(&mut rng),
            probes: sub_seed(&mut rng),
        }
    }
}

/// Criteria for `X_n = KH(∅, K, n)` and the validation designs
/// `KH(X_n, K, m)`, KH-exclude with `K̄|n`, `MN₂(∅, K̄|n, m)` and the first
/// `m` points of a scrambled Sobol' sequence, with and without optimal
/// weights.
pub fn run_delta(config: &DeltaConfig) -> Result<DeltaReport> {
    let &DeltaConfig { dim, n, m, q, seed, .. } = config;
    if n == 0 || m == 0 {
        return Err(Error::Parameter("n and m must be positive".into()));
    }
    let seeds = StreamSeeds::new(seed);
    let candidates = sobol_points(dim, q, seeds.candidates, true)?;
    let sobol = sobol_points(dim, m, seeds.sobol, true)?;
    let reference = sobol_points(dim, config.reference_size, seeds.reference, true)?;
    let probes = default_probes(dim, config.probe_count, seeds.probes)?;

    let theta = config.theta();
    let base = Matern32::new(config.form, dim, theta)?;
    let plain = Kernel::Matern(base);
    let mu = MuRepresentation::discrete(candidates.clone())?;
    let x_n = herded_design(&plain, &candidates, n)?.design;
    let ctx = CriteriaEvaluator::new(base, x_n.clone(), mu.clone(), &reference, probes)?;
    let validation = ctx.validation_kernel().clone();

    let mut rows = Vec::new();
    let uniform = |d: &Design| DiscreteMeasure::uniform(d.clone());
    rows.push(ctx.evaluate("x_n", false, &uniform(&x_n), n)?);

    let kh = run(&HerdingConfig::new(plain.clone(), mu.clone(), candidates.clone(), Variant::Kh)
        .with_initial(x_n.clone())
        .with_iterations(m))?;
    rows.push(ctx.evaluate("kh", false, &uniform(&kh.design), m)?);
    rows.push(ctx.evaluate("kh", true, &ctx.weighted(&kh.design)?, m)?);

    let exclude = Variant::KhExclude { exclude: x_n.clone(), target: m, distinct: true, cap: None };
    let ex = run(&HerdingConfig::new(validation.clone(), mu.clone(), candidates.clone(), exclude))?;
    rows.push(ctx.evaluate("kh-exclude", false, &ex.measure, ex.iterations())?);

    let mn2 = run(&HerdingConfig::new(validation, mu, candidates, Variant::Mn2).with_iterations(m))?;
    rows.push(ctx.evaluate("mn2", true, &mn2.measure, m)?);

    rows.push(ctx.evaluate("sobol", false, &uniform(&sobol), m)?);
    rows.push(ctx.evaluate("sobol", true, &ctx.weighted(&sobol)?, m)?);

    let imse_reference = ctx.imse_reference();
    Ok(DeltaReport { config: config.clone(), theta, prediction_design: x_n, imse_reference, rows })
}

#[derive(Clone, Debug, PartialEq)]
pub struct IseConfig {
    pub dims: Vec<usize>,
    pub n: usize,
    pub m: usize,
    pub q: usize,
    pub replicates: usize,
    pub seed: u64,
    pub reference_size: usize,
}

impl IseConfig {
    pub fn desk(dims: Vec<usize>, replicates: usize, seed: u64) -> Self {
        IseConfig { dims, n: 100, m: 50, q: 1 << 12, replicates, seed, reference_size: 1 << 16 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IseRow {
    pub d: usize,
    pub replicate: usize,
    pub method: String,
    pub weighted: bool,
    pub ise_ref: f64,
    pub ise_hat: f64,
    /// `None` when the reference ISE vanishes.
    pub rho: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IseFailure {
    pub d: usize,
    pub replicate: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IseSummary {
    pub d: usize,
    pub method: String,
    pub weighted: bool,
    pub count: usize,
    pub mean_rho: f64,
    pub mean_abs_rho: f64,
}

#[derive(Clone, Debug)]
pub struct IseStudy {
    pub config: IseConfig,
    pub rows: Vec<IseRow>,
    pub failures: Vec<IseFailure>,
}

pub const ISE_COLUMNS: [&str; 7] = ["d", "replicate", "method", "weighted", "ise_ref", "ise_hat", "rho"];
pub const ISE_SUMMARY_COLUMNS: [&str; 6] = ["d", "method", "weighted", "count", "mean_rho", "mean_abs_rho"];

impl IseStudy {
    /// Rows for [`ISE_COLUMNS`]; an undefined `rho` is written as `NA`.
    pub fn table_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.d.to_string(),
                    r.replicate.to_string(),
                    r.method.clone(),
                    r.weighted.to_string(),
                    format_float(r.ise_ref),
                    format_float(r.ise_hat),
                    r.rho.map_or_else(|| "NA".to_string(), format_float),
                ]
            })
            .collect()
    }

    pub fn summary_rows(&self) -> Vec<Vec<String>> {
        self.summary()
            .into_iter()
            .map(|s| {
                vec![
                    s.d.to_string(),
                    s.method,
                    s.weighted.to_string(),
                    s.count.to_string(),
                    format_float(s.mean_rho),
                    format_float(s.mean_abs_rho),
                ]
            })
            .collect()
    }

    /// Mean and mean absolute relative error per dimension and method, in
    /// order of first appearance.
    pub fn summary(&self) -> Vec<IseSummary> {
        let mut out: Vec<IseSummary> = Vec::new();
        let mut sums: Vec<(f64, f64)> = Vec::new();
        for r in &self.rows {
            let Some(rho) = r.rho else { continue };
            let pos = out.iter().position(|s| s.d == r.d && s.method == r.method && s.weighted == r.weighted);
            let i = pos.unwrap_or_else(|| {
                out.push(IseSummary {
                    d: r.d,
                    method: r.method.clone(),
                    weighted: r.weighted,
                    count: 0,
                    mean_rho: 0.0,
                    mean_abs_rho: 0.0,
                });
                sums.push((0.0, 0.0));
                out.len() - 1
            });
            out[i].count += 1;
            sums[i].0 += rho;
            sums[i].1 += rho.abs();
        }
        for (s, (a, b)) in out.iter_mut().zip(sums) {
            s.mean_rho = a / s.count as f64;
            s.mean_abs_rho = b / s.count as f64;
        }
        out
    }

    pub fn find(&self, d: usize, method: &str, weighted: bool) -> Option<IseSummary> {
        self.summary().into_iter().find(|s| s.d == d && s.method == method && s.weighted == weighted)
    }
}

/// One replicate: truth, designs, LOO bandwidth, ISE reference and the
/// estimates of every method.
pub fn ise_replicate(config: &IseConfig, dim: usize, replicate: usize) -> Result<Vec<IseRow>> {
    let &IseConfig { n, m, q, .. } = config;
    let mut rng = stream_rng(config.seed, ((dim as u64) << 32) | replicate as u64);
    let mut stream = SobolStream::new(dim, Some(sub_seed(&mut rng)))?;
    let x_n = stream.take(n);
    let s_m = stream.take(m);
    let candidates = sobol_points(dim, q, sub_seed(&mut rng), true)?;
    let reference = sobol_points(dim, config.reference_size, sub_seed(&mut rng), true)?;
    let truth = RandomPolynomial::sample(&PolynomialSpec::for_design_size(dim, n), &mut rng)?;
    let r_m = uniform_points(dim, m, &mut rng);
    let f = |x: &[f64]| truth.eval(x);

    let y: Vec<f64> = x_n.iter().map(f).collect();
    let fit = fit_theta_loo(MaternForm::Product, &x_n, &y, &ThetaSearch::default_for(n, dim))?;
    let gp_kernel = Matern32::product(dim, fit.theta)?;
    let model = GpModel::fit(gp_kernel, x_n.clone(), y)?;

    let fill = Kernel::Matern(Matern32::product(dim, default_theta(n, dim))?);
    let fill_mu = MuRepresentation::closed_form(&fill)?;
    let z_m = run(&HerdingConfig::new(fill, fill_mu, candidates, Variant::Kh)
        .with_initial(x_n.clone())
        .with_iterations(m))?
    .design;

    let validation = Kernel::validation(gp_kernel, x_n)?;
    let mu = MuRepresentation::closed_form(&validation)?;
    let ise_ref = ise_reference(&model, &f, &reference);

    let mut rows = Vec::new();
    let mut push = |method: &str, weighted: bool, ise_hat: f64| {
        rows.push(IseRow {
            d: dim,
            replicate,
            method: method.to_string(),
            weighted,
            ise_ref,
            ise_hat,
            rho: relative_error(ise_hat, ise_ref),
        })
    };
    for (name, design) in [("sobol", &s_m), ("kh", &z_m), ("random", &r_m)] {
        push(name, false, ise_hat(&model, &f, design, None)?);
        let w = optimal_weights_free(&validation, design, &mu)?;
        push(name, true, ise_hat(&model, &f, design, Some(&w.weights))?);
    }
    push("loo", false, model.loo_ise()?);
    Ok(rows)
}

/// All replicates for every dimension, run in parallel and reported in
/// dimension then replicate order. Failed replicates are skipped and
/// listed.
pub fn run_ise(config: &IseConfig) -> Result<IseStudy> {
    if config.n < 3 || config.m == 0 {
        return Err(Error::Parameter("need n >= 3 and m >= 1".into()));
    }
    let jobs: Vec<(usize, usize)> =
        config.dims.iter().flat_map(|&d| (0..config.replicates).map(move |j| (d, j))).collect();
    let results: Vec<Result<Vec<IseRow>>> = jobs.par_iter().map(|&(d, j)| ise_replicate(config, d, j)).collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (&(d, replicate), res) in jobs.iter().zip(results) {
        match res {
            Ok(r) => rows.extend(r),
            Err(e) => failures.push(IseFailure { d, replicate, message: e.to_string() }),
        }
    }
    Ok(IseStudy { config: config.clone(), rows, failures })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceConfig {
    pub n: usize,
    pub k: usize,
    pub theta: f64,
    pub q: usize,
    pub seed: u64,
}

impl Default for EquivalenceConfig {
    fn default() -> Self {
        EquivalenceConfig { n: 4, k: 8, theta: 10.0, q: 256, seed: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub prediction_design: Vec<f64>,
    /// `MN₂(X_n, K, k)` selections.
    pub from_design: Vec<f64>,
    /// `MN₂(∅, K|n, k)` selections.
    pub conditional: Vec<f64>,
    pub identical: bool,
}

/// Runs both constructions on the same 1-d candidate set.
pub fn equivalence_check(config: &EquivalenceConfig) -> Result<EquivalenceReport> {
    let candidates = sobol_points(1, config.q, config.seed, true)?;
    let base = Matern32::univariate(config.theta)?;
    let plain = Kernel::Matern(base);
    let mu = MuRepresentation::discrete(candidates.clone())?;
    let x_n = herded_design(&plain, &candidates, config.n)?.design;
    let a = run(&HerdingConfig::new(plain, mu.clone(), candidates.clone(), Variant::Mn2)
        .with_initial(x_n.clone())
        .with_iterations(config.k))?;
    let b = run(&HerdingConfig::new(Kernel::conditional(base, x_n.clone())?, mu, candidates, Variant::Mn2)
        .with_iterations(config.k))?;
    Ok(EquivalenceReport {
        prediction_design: x_n.coords().to_vec(),
        from_design: a.design.coords().to_vec(),
        conditional: b.design.coords().to_vec(),
        identical: a.design == b.design,
    })
}
