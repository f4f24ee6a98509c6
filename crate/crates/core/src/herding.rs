//! Sequential design construction by kernel herding and its minimum-norm
//! variants, with the search restricted to a finite candidate set.

use rayon::prelude::*;

use crate::design::Design;
use crate::error::{Error, Result};
use crate::kernel::{Kernel, Prepared};
use crate::linalg::SpdFactor;
use crate::measures::{DiscreteMeasure, Mmd, MuRepresentation};

/// Candidates whose value is within this much of the minimum are tied;
/// the lowest index wins.
pub const TIE_SLACK: f64 = 1e-12;

/// Candidates whose conditional variance given the current support is at
/// or below this are not eligible for the weighted variants.
pub const ZERO_VARIANCE: f64 = 1e-12;

/// Default limit on the candidate-by-support evaluation table.
pub const DEFAULT_MEMORY_CAP: usize = 2 << 30;

#[derive(Clone, Debug, PartialEq)]
pub enum Variant {
    /// Uniform weights over the support.
    Kh,
    /// Optimal weights summing to one.
    Mn,
    /// Unconstrained optimal weights.
    Mn2,
    /// Plain herding until `target` selections fall outside `exclude`
    /// (and, with `distinct`, were not selected before).
    KhExclude {
        exclude: Design,
        target: usize,
        distinct: bool,
        /// Iteration cap; `None` means `50 * target`.
        cap: Option<usize>,
    },
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Kh => "kh",
            Variant::Mn => "mn",
            Variant::Mn2 => "mn2",
            Variant::KhExclude { .. } => "kh-exclude",
        }
    }
}

#[derive(Clone, Debug)]
pub struct HerdingConfig {
    pub kernel: Kernel,
    pub mu: MuRepresentation,
    pub candidates: Design,
    /// Initial support `Z_{k1}`, possibly empty.
    pub initial: Design,
    /// Number of selections; ignored by [`Variant::KhExclude`].
    pub iterations: usize,
    pub variant: Variant,
    pub memory_cap: usize,
}

impl HerdingConfig {
    pub fn new(kernel: Kernel, mu: MuRepresentation, candidates: Design, variant: Variant) -> Self {
        let dim = candidates.dim();
        HerdingConfig {
            kernel,
            mu,
            candidates,
            initial: Design::empty(dim),
            iterations: 0,
            variant,
            memory_cap: DEFAULT_MEMORY_CAP,
        }
    }

    pub fn with_initial(mut self, initial: Design) -> Self {
        self.initial = initial;
        self
    }

    pub fn with_iterations(mut self, k: usize) -> Self {
        self.iterations = k;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.candidates.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        let d = self.kernel.dim();
        self.candidates.expect_dim(d)?;
        self.initial.expect_dim(d)?;
        self.candidates.check_unit_cube()?;
        self.initial.check_unit_cube()?;
        if let Variant::KhExclude { exclude, .. } = &self.variant {
            exclude.expect_dim(d)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    /// The selected candidate is a point of the excluded design.
    InExcluded,
    /// The selected candidate had been selected before.
    Repeat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SelectionEvent {
    pub iteration: usize,
    pub candidate: usize,
    pub kind: EventKind,
}

#[derive(Clone, Debug)]
pub struct HerdingTrace {
    pub variant: &'static str,
    /// Candidate index chosen at each iteration.
    pub selected: Vec<usize>,
    /// The chosen points, in order.
    pub points: Design,
    /// Squared MMD of the variant's measure after each iteration.
    pub mmd2: Vec<f64>,
    /// Support weights (initial points first) after each iteration; empty
    /// for uniform-weight variants.
    pub weights: Vec<Vec<f64>>,
    /// Total mass of the returned measure's weights after each iteration.
    pub total_mass: Vec<f64>,
    pub events: Vec<SelectionEvent>,
    /// Weighted support at the end: initial points and selections for
    /// KH/MN/MN2, only the retained validation points for KH-exclude.
    pub measure: DiscreteMeasure,
    /// Retained validation points for KH-exclude, the selections otherwise.
    pub design: Design,
    pub initial_len: usize,
    /// Set when any recorded squared MMD was negative roundoff.
    pub mmd_clamped: bool,
}

impl HerdingTrace {
    pub fn iterations(&self) -> usize {
        self.selected.len()
    }

    pub fn final_mmd2(&self) -> Option<f64> {
        self.mmd2.last().copied()
    }
}

/// Candidate set (followed by the initial points) with cached kernel
/// features and target potentials.
struct Pool {
    prepared: Prepared,
    q: usize,
    mu_pot: Vec<f64>,
    diag: Vec<f64>,
    mu_energy: f64,
}

impl Pool {
    fn new(config: &HerdingConfig) -> Result<Self> {
        let q = config.candidates.len();
        let points = config.candidates.concat(&config.initial)?;
        let prepared = config.kernel.prepare(&points);
        let mu_pot = config.mu.potentials(&config.kernel, &prepared);
        let diag = (0..points.len()).into_par_iter().map(|i| prepared.eval_within(i, i)).collect();
        let mu_energy = match &config.mu {
            MuRepresentation::Discrete(d) if d == &config.candidates => mu_pot[..q].iter().sum::<f64>() / q as f64,
            mu => mu.energy(&config.kernel),
        };
        Ok(Pool { prepared, q, mu_pot, diag, mu_energy })
    }

    fn len(&self) -> usize {
        self.prepared.len()
    }
}

/// Lowest index among values within [`TIE_SLACK`] of the minimum, skipping
/// `NaN` entries (used to mark ineligible candidates).
fn argmin_with_ties(values: &[f64]) -> Option<usize> {
    let min = values.iter().copied().filter(|v| !v.is_nan()).fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return None;
    }
    values.iter().position(|&v| v <= min + TIE_SLACK)
}

/// Running state of uniform-weight herding.
pub struct KhState {
    pool: Pool,
    sums: Vec<f64>,
    support: usize,
    double_sum: f64,
    linear_sum: f64,
}

impl KhState {
    pub fn new(kernel: &Kernel, mu: &MuRepresentation, candidates: &Design, initial: &Design) -> Result<Self> {
        let config = HerdingConfig::new(kernel.clone(), mu.clone(), candidates.clone(), Variant::Kh)
            .with_initial(initial.clone());
        config.validate()?;
        KhState::from_pool(Pool::new(&config)?)
    }

    fn from_pool(pool: Pool) -> Result<Self> {
        let q = pool.q;
        let init: Vec<usize> = (q..pool.len()).collect();
        let p = &pool.prepared;
        let sums = (0..q)
            .into_par_iter()
            .map(|c| init.iter().map(|&j| p.eval_within(c, j)).sum::<f64>())
            .collect();
        let double_sum = init.iter().map(|&i| init.iter().map(|&j| p.eval_within(i, j)).sum::<f64>()).sum();
        let linear_sum = init.iter().map(|&i| pool.mu_pot[i]).sum();
        Ok(KhState { sums, support: init.len(), double_sum, linear_sum, pool })
    }

    /// `P_{C,zeta}(z) - P_{C,mu}(z)` for every candidate.
    pub fn potential_gap(&self) -> Vec<f64> {
        let s = self.support as f64;
        (0..self.pool.q)
            .into_par_iter()
            .map(|c| if self.support == 0 { -self.pool.mu_pot[c] } else { self.sums[c] / s - self.pool.mu_pot[c] })
            .collect()
    }

    /// Candidate index minimizing the potential gap.
    pub fn next_candidate(&self) -> usize {
        argmin_with_ties(&self.potential_gap()).expect("candidate set is nonempty")
    }

    /// Adds candidate `c` to the support.
    pub fn select(&mut self, c: usize) {
        let p = &self.pool.prepared;
        self.double_sum += 2.0 * self.sums[c] + self.pool.diag[c];
        self.linear_sum += self.pool.mu_pot[c];
        self.sums.par_iter_mut().enumerate().for_each(|(j, s)| *s += p.eval_within(j, c));
        self.support += 1;
    }

    /// Squared MMD of the uniform measure on the current support.
    pub fn mmd2(&self) -> Mmd {
        let s = self.support as f64;
        Mmd::from_raw(self.double_sum / (s * s) - 2.0 * self.linear_sum / s + self.pool.mu_energy)
    }

    pub fn support_len(&self) -> usize {
        self.support
    }

    pub fn candidates(&self) -> &Design {
        self.pool.prepared.points()
    }
}

/// One herding step: the candidate that minimizes the potential gap.
pub fn kh_step(state: &KhState) -> Result<usize> {
    argmin_with_ties(&state.potential_gap()).ok_or(Error::EmptyCandidates)
}

pub fn run(config: &HerdingConfig) -> Result<HerdingTrace> {
    config.validate()?;
    match &config.variant {
        Variant::Kh => herd_uniform(config, None),
        Variant::KhExclude { exclude, target, distinct, cap } => {
            herd_uniform(config, Some((exclude, *target, *distinct, cap.unwrap_or(50 * target))))
        }
        Variant::Mn => herd_weighted(config, false),
        Variant::Mn2 => herd_weighted(config, true),
    }
}

fn expect_variant(config: &HerdingConfig, name: &str) -> Result<()> {
    if config.variant.name() != name {
        return Err(Error::Parameter(format!("expected variant {name}, got {}", config.variant.name())));
    }
    Ok(())
}

pub fn run_kh(config: &HerdingConfig) -> Result<HerdingTrace> {
    expect_variant(config, "kh")?;
    run(config)
}

pub fn run_kh_exclude(config: &HerdingConfig) -> Result<HerdingTrace> {
    expect_variant(config, "kh-exclude")?;
    run(config)
}

pub fn run_mn(config: &HerdingConfig) -> Result<HerdingTrace> {
    expect_variant(config, "mn")?;
    run(config)
}

pub fn run_mn2(config: &HerdingConfig) -> Result<HerdingTrace> {
    expect_variant(config, "mn2")?;
    run(config)
}

fn herd_uniform(config: &HerdingConfig, exclude: Option<(&Design, usize, bool, usize)>) -> Result<HerdingTrace> {
    let pool = Pool::new(config)?;
    let q = pool.q;
    let k1 = config.initial.len();
    let mut state = KhState::from_pool(pool)?;
    let in_excluded: Vec<bool> = match exclude {
        Some((x, ..)) => config.candidates.iter().map(|c| x.position(c).is_some()).collect(),
        None => vec![false; q],
    };
    let mut seen = vec![false; q];
    let mut selected = Vec::new();
    let mut mmd2 = Vec::new();
    let mut total_mass = Vec::new();
    let mut events = Vec::new();
    let mut clamped = false;
    // validation points kept by the exclusion variant: (candidate, count)
    let mut kept: Vec<(usize, usize)> = Vec::new();
    let mut kept_selections = 0usize;
    let (target, limit) = match exclude {
        Some((_, target, _, cap)) => (target, cap),
        None => (usize::MAX, config.iterations),
    };
    loop {
        let found = if exclude.is_some() { kept.len() } else { selected.len() };
        if found >= target || (exclude.is_none() && selected.len() >= limit) {
            break;
        }
        if exclude.is_some() && selected.len() >= limit {
            let partial = uniform_trace(config, &selected, mmd2, total_mass, events, &kept, k1, clamped)?;
            return Err(Error::IterationCap { cap: limit, found, target, partial: Box::new(partial) });
        }
        let c = kh_step(&state)?;
        let it = selected.len();
        if in_excluded[c] {
            events.push(SelectionEvent { iteration: it, candidate: c, kind: EventKind::InExcluded });
        }
        if seen[c] {
            events.push(SelectionEvent { iteration: it, candidate: c, kind: EventKind::Repeat });
        }
        if let Some((_, _, distinct, _)) = exclude {
            if !in_excluded[c] {
                kept_selections += 1;
                match kept.iter_mut().find(|(j, _)| *j == c) {
                    Some(entry) if distinct => entry.1 += 1,
                    _ => kept.push((c, 1)),
                }
            }
        }
        seen[c] = true;
        state.select(c);
        selected.push(c);
        let m = state.mmd2();
        clamped |= m.clamped;
        mmd2.push(m.value);
        total_mass.push(if exclude.is_some() {
            kept_selections as f64 / state.support_len() as f64
        } else {
            1.0
        });
    }
    uniform_trace(config, &selected, mmd2, total_mass, events, &kept, k1, clamped)
}

#[allow(clippy::too_many_arguments)]
fn uniform_trace(
    config: &HerdingConfig,
    selected: &[usize],
    mmd2: Vec<f64>,
    total_mass: Vec<f64>,
    events: Vec<SelectionEvent>,
    kept: &[(usize, usize)],
    k1: usize,
    mmd_clamped: bool,
) -> Result<HerdingTrace> {
    let points = config.candidates.select(selected);
    let total = (k1 + selected.len()).max(1) as f64;
    let (measure, design) = if matches!(config.variant, Variant::KhExclude { .. }) {
        let idx: Vec<usize> = kept.iter().map(|(c, _)| *c).collect();
        let design = config.candidates.select(&idx);
        let weights = kept.iter().map(|(_, n)| *n as f64 / total).collect();
        (DiscreteMeasure::new(design.clone(), weights)?, design)
    } else {
        let support = config.initial.concat(&points)?;
        (DiscreteMeasure::uniform(support), points.clone())
    };
    Ok(HerdingTrace {
        variant: config.variant.name(),
        selected: selected.to_vec(),
        points,
        mmd2,
        weights: Vec::new(),
        total_mass,
        events,
        measure,
        design,
        initial_len: k1,
        mmd_clamped,
    })
}

/// Weighted herding. Every pool point carries its features `L^{-1} c_k(x)`
/// for the current (unpruned) support `C_k = L L'` and its conditional
/// variance given the support.
struct WeightedState {
    features: Vec<Vec<f64>>,
    cvar: Vec<f64>,
    factor: SpdFactor,
    /// Pool indices of the active (unpruned) support, in order.
    active: Vec<usize>,
}

impl WeightedState {
    fn new(pool: &Pool) -> Self {
        WeightedState {
            features: vec![Vec::new(); pool.len()],
            cvar: pool.diag.clone(),
            factor: SpdFactor::empty(),
            active: Vec::new(),
        }
    }

    /// Adds pool point `s` to the support. Returns `false` if it is
    /// numerically dependent on the support.
    fn add(&mut self, pool: &Pool, s: usize) -> Result<bool> {
        if self.cvar[s] <= ZERO_VARIANCE {
            return Ok(false);
        }
        let col: Vec<f64> = self.active.iter().map(|&j| pool.prepared.eval_within(s, j)).collect();
        self.active.push(s);
        if self.factor.append(&col, pool.diag[s]) {
            let k = self.factor.dim() - 1;
            let row = self.factor.row(k).to_vec();
            let p = &pool.prepared;
            self.features.par_iter_mut().zip(self.cvar.par_iter_mut()).enumerate().for_each(|(x, (f, v))| {
                let dotp: f64 = f.iter().zip(&row[..k]).map(|(a, b)| a * b).sum();
                let new = (p.eval_within(x, s) - dotp) / row[k];
                f.push(new);
                *v -= new * new;
            });
        } else {
            self.refactor(pool)?;
        }
        Ok(true)
    }

    fn refactor(&mut self, pool: &Pool) -> Result<()> {
        let p = &pool.prepared;
        let active = self.active.clone();
        self.factor = SpdFactor::from_fn(active.len(), "herding support", |i, j| p.eval_within(active[i], active[j]))?;
        let factor = &self.factor;
        self.features.par_iter_mut().zip(self.cvar.par_iter_mut()).enumerate().for_each(|(x, (f, v))| {
            *f = active.iter().map(|&j| p.eval_within(x, j)).collect();
            factor.solve_lower_in_place(f);
            *v = pool.diag[x] - f.iter().map(|a| a * a).sum::<f64>();
        });
        Ok(())
    }
}

fn herd_weighted(config: &HerdingConfig, free: bool) -> Result<HerdingTrace> {
    let pool = Pool::new(config)?;
    let q = pool.q;
    let k1 = config.initial.len();
    let support_cap = k1 + config.iterations;
    let needed = pool.len().saturating_mul(support_cap).saturating_mul(std::mem::size_of::<f64>());
    if needed > config.memory_cap {
        return Err(Error::MemoryCap { needed, cap: config.memory_cap });
    }
    let mut state = WeightedState::new(&pool);
    // support in pool indices, initial points first; pruned ones are absent
    // from `state.active` and get weight 0
    let mut support: Vec<usize> = Vec::new();
    for i in 0..k1 {
        let s = q + i;
        if !state.add(&pool, s)? && !free {
            return Err(Error::WeightSolve(
                "initial support has a singular Gram matrix; use unconstrained weights (mn2)".into(),
            ));
        }
        support.push(s);
    }
    let mut selected = Vec::new();
    let mut mmd2 = Vec::new();
    let mut weights = Vec::new();
    let mut total_mass = Vec::new();
    let mut clamped = false;
    for _ in 0..config.iterations {
        let (a, shift) = solve_state(&state, &pool, free);
        let direction: Vec<f64> = a.iter().zip(&shift).map(|(x, y)| x + y).collect();
        let gap: Vec<f64> = (0..q)
            .into_par_iter()
            .map(|c| {
                if state.cvar[c] <= ZERO_VARIANCE {
                    f64::NAN
                } else {
                    let f = &state.features[c];
                    f.iter().zip(&direction).map(|(x, y)| x * y).sum::<f64>() - pool.mu_pot[c]
                }
            })
            .collect();
        let c = argmin_with_ties(&gap).ok_or(Error::EmptyCandidates)?;
        if !state.add(&pool, c)? {
            return Err(Error::WeightSolve("selected candidate is dependent on the support".into()));
        }
        support.push(c);
        selected.push(c);
        let (a, shift) = solve_state(&state, &pool, free);
        let u: Vec<f64> = a.iter().zip(&shift).map(|(x, y)| x + y).collect();
        let quad: f64 = u.iter().map(|v| v * v).sum();
        let lin: f64 = u.iter().zip(&a).map(|(x, y)| x * y).sum();
        let m = Mmd::from_raw(quad - 2.0 * lin + pool.mu_energy);
        clamped |= m.clamped;
        mmd2.push(m.value);
        let mut w_active = u;
        state.factor.solve_upper_in_place(&mut w_active);
        let mut w = vec![0.0; support.len()];
        for (s, wi) in support.iter().zip(w.iter_mut()) {
            if let Some(pos) = state.active.iter().position(|a| a == s) {
                *wi = w_active[pos];
            }
        }
        total_mass.push(w.iter().sum());
        weights.push(w);
    }
    let points = config.candidates.select(&selected);
    let support_design = config.initial.concat(&points)?;
    let final_w = weights.last().cloned().unwrap_or_else(|| initial_weights(&state, &pool, free, &support));
    Ok(HerdingTrace {
        variant: config.variant.name(),
        selected,
        design: points.clone(),
        points,
        mmd2,
        weights,
        total_mass,
        events: Vec::new(),
        measure: DiscreteMeasure::new(support_design, final_w)?,
        initial_len: k1,
        mmd_clamped: clamped,
    })
}

fn initial_weights(state: &WeightedState, pool: &Pool, free: bool, support: &[usize]) -> Vec<f64> {
    if state.active.is_empty() {
        return vec![0.0; support.len()];
    }
    let (a, shift) = solve_state(state, pool, free);
    let mut u: Vec<f64> = a.iter().zip(&shift).map(|(x, y)| x + y).collect();
    state.factor.solve_upper_in_place(&mut u);
    support
        .iter()
        .map(|s| state.active.iter().position(|a| a == s).map_or(0.0, |p| u[p]))
        .collect()
}

/// `a = L^{-1} p` and the whitened correction that enforces unit total
/// mass (zero for the unconstrained variant).
fn solve_state(state: &WeightedState, pool: &Pool, free: bool) -> (Vec<f64>, Vec<f64>) {
    let p: Vec<f64> = state.active.iter().map(|&j| pool.mu_pot[j]).collect();
    let a = state.factor.solve_lower(&p);
    if free || a.is_empty() {
        let zeros = vec![0.0; a.len()];
        return (a, zeros);
    }
    let b = state.factor.solve_lower(&vec![1.0; a.len()]);
    let bb: f64 = b.iter().map(|v| v * v).sum();
    let ab: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let t = (1.0 - ab) / bb;
    let shift = b.iter().map(|v| t * v).collect();
    (a, shift)
}
