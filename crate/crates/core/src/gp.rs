//! Kriging with empirical-mean centering, error criteria and
//! leave-one-out bandwidth selection.

use rayon::prelude::*;

use crate::design::Design;
use crate::error::{Error, Result};
use crate::kernel::{clamp_diag, dot, ConditionalKernel, MaternForm, Matern32};
use crate::linalg::SpdFactor;

/// Interpolating GP predictor with unit process variance.
#[derive(Clone, Debug)]
pub struct GpModel {
    kernel: Matern32,
    design: Design,
    y: Vec<f64>,
    mean: f64,
    factor: SpdFactor,
    alpha: Vec<f64>,
}

impl GpModel {
    /// Fits on data centered by its empirical mean.
    pub fn fit(kernel: Matern32, design: Design, y: Vec<f64>) -> Result<Self> {
        GpModel::build(kernel, design, y, true)
    }

    /// Zero-mean fit on the raw observations.
    pub fn fit_uncentered(kernel: Matern32, design: Design, y: Vec<f64>) -> Result<Self> {
        GpModel::build(kernel, design, y, false)
    }

    fn build(kernel: Matern32, design: Design, y: Vec<f64>, centered: bool) -> Result<Self> {
        design.expect_dim(kernel.dim())?;
        if y.len() != design.len() {
            return Err(Error::DimensionMismatch { expected: design.len(), got: y.len() });
        }
        let n = design.len();
        let mean = if centered && n > 0 { y.iter().sum::<f64>() / n as f64 } else { 0.0 };
        let factor = SpdFactor::from_fn(n, &format!("training design (n = {n})"), |i, j| {
            kernel.eval(design.point(i), design.point(j))
        })?;
        let centered_y: Vec<f64> = y.iter().map(|v| v - mean).collect();
        let alpha = factor.solve(&centered_y);
        Ok(GpModel { kernel, design, y, mean, factor, alpha })
    }

    pub fn kernel(&self) -> &Matern32 {
        &self.kernel
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn observations(&self) -> &[f64] {
        &self.y
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn n(&self) -> usize {
        self.design.len()
    }

    /// The posterior covariance as a kernel.
    pub fn conditional_kernel(&self) -> Result<ConditionalKernel> {
        ConditionalKernel::new(self.kernel, self.design.clone())
    }

    fn cross(&self, x: &[f64]) -> Vec<f64> {
        self.design.iter().map(|xi| self.kernel.eval(x, xi)).collect()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        dot(&self.cross(x), &self.alpha) + self.mean
    }

    pub fn try_predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.kernel.dim() {
            return Err(Error::DimensionMismatch { expected: self.kernel.dim(), got: x.len() });
        }
        Ok(self.predict(x))
    }

    pub fn predict_all(&self, points: &Design) -> Vec<f64> {
        (0..points.len()).into_par_iter().map(|i| self.predict(points.point(i))).collect()
    }

    pub fn posterior_variance(&self, x: &[f64]) -> f64 {
        let a = self.factor.solve_lower(&self.cross(x));
        clamp_diag(self.kernel.eval(x, x) - dot(&a, &a))
    }

    /// `sum_i w_i K_{|n}(z_i, z_i)`, with `w_i = 1/m` when no weights are
    /// given. Signed weights give a signed value.
    pub fn imse_hat(&self, z: &Design, weights: Option<&[f64]>) -> Result<f64> {
        let v: Vec<f64> = (0..z.len()).into_par_iter().map(|i| self.posterior_variance(z.point(i))).collect();
        weighted_mean(&v, weights)
    }

    /// Leave-one-out mean squared error, without refitting.
    pub fn loo_ise(&self) -> Result<f64> {
        let n = self.n();
        if n < 2 {
            return Err(Error::Parameter("leave-one-out needs at least two points".into()));
        }
        let inv = self.factor.inverse();
        let s: f64 = (0..n).map(|i| (self.alpha[i] / inv[i * n + i]).powi(2)).sum();
        Ok(s / n as f64)
    }
}

fn weighted_mean(values: &[f64], weights: Option<&[f64]>) -> Result<f64> {
    match weights {
        Some(w) => {
            if w.len() != values.len() {
                return Err(Error::DimensionMismatch { expected: values.len(), got: w.len() });
            }
            Ok(values.iter().zip(w).map(|(v, w)| v * w).sum())
        }
        None if values.is_empty() => Ok(0.0),
        None => Ok(values.iter().sum::<f64>() / values.len() as f64),
    }
}

pub fn predict(model: &GpModel, x: &[f64]) -> Result<f64> {
    model.try_predict(x)
}

pub fn posterior_variance(model: &GpModel, x: &[f64]) -> f64 {
    model.posterior_variance(x)
}

pub fn imse_hat(model: &GpModel, z: &Design, weights: Option<&[f64]>) -> Result<f64> {
    model.imse_hat(z, weights)
}

pub fn loo_ise(model: &GpModel) -> Result<f64> {
    model.loo_ise()
}

/// Where to look for the leave-one-out optimal `θ`.
#[derive(Clone, Debug, PartialEq)]
pub enum ThetaSearch {
    /// `points` log-spaced values in `[lo, hi]`, then golden-section
    /// refinement around the best one.
    Bracket { lo: f64, hi: f64, points: usize },
    /// Only these values.
    Grid(Vec<f64>),
}

impl ThetaSearch {
    /// `[0.1, 10] * n^{1/d}` with 25 grid points.
    pub fn default_for(n: usize, dim: usize) -> Self {
        let s = (n as f64).powf(1.0 / dim as f64);
        ThetaSearch::Bracket { lo: 0.1 * s, hi: 10.0 * s, points: 25 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThetaFit {
    pub theta: f64,
    pub loo: f64,
}

fn loo_at(form: MaternForm, design: &Design, y: &[f64], theta: f64) -> Option<f64> {
    let kernel = Matern32::new(form, design.dim(), theta).ok()?;
    GpModel::fit(kernel, design.clone(), y.to_vec()).ok()?.loo_ise().ok()
}

/// `θ` minimizing the leave-one-out error of the centered predictor.
pub fn fit_theta_loo(form: MaternForm, design: &Design, y: &[f64], search: &ThetaSearch) -> Result<ThetaFit> {
    if design.len() < 3 {
        return Err(Error::Parameter("bandwidth selection needs at least three points".into()));
    }
    let (grid, refine) = match search {
        ThetaSearch::Grid(g) => (g.clone(), false),
        ThetaSearch::Bracket { lo, hi, points } => {
            if !(*lo > 0.0 && hi > lo && *points >= 2) {
                return Err(Error::Parameter(format!("bad bracket [{lo}, {hi}] with {points} points")));
            }
            let (a, b) = (lo.ln(), hi.ln());
            let g = (0..*points).map(|i| (a + (b - a) * i as f64 / (*points - 1) as f64).exp()).collect();
            (g, true)
        }
    };
    if grid.is_empty() {
        return Err(Error::Parameter("empty theta grid".into()));
    }
    let values: Vec<Option<f64>> = grid.par_iter().map(|&t| loo_at(form, design, y, t)).collect();
    let best = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .fold(None, |acc: Option<(usize, f64)>, (i, v)| match acc {
            Some((_, bv)) if bv <= v => acc,
            _ => Some((i, v)),
        })
        .ok_or_else(|| Error::Factorization { design: "training design at every theta".into(), max_jitter: f64::NAN })?;
    let (i, v) = best;
    if !refine || grid.len() < 3 {
        return Ok(ThetaFit { theta: grid[i], loo: v });
    }
    let lo = grid[i.saturating_sub(1)].ln();
    let hi = grid[(i + 1).min(grid.len() - 1)].ln();
    let f = |lt: f64| loo_at(form, design, y, lt.exp()).unwrap_or(f64::INFINITY);
    let (lt, lv) = golden_section(f, lo, hi, 1e-3);
    Ok(if lv < v { ThetaFit { theta: lt.exp(), loo: lv } } else { ThetaFit { theta: grid[i], loo: v } })
}

/// Minimizes `f` on `[a, b]` until the bracket is shorter than `tol`.
fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// `(estimate - reference) / reference`, undefined when the reference
/// vanishes.
pub fn relative_error(estimate: f64, reference: f64) -> Option<f64> {
    if reference == 0.0 || !reference.is_finite() {
        None
    } else {
        Some((estimate - reference) / reference)
    }
}

/// Squared prediction errors at every point of `points`.
pub fn squared_errors<F: Fn(&[f64]) -> f64 + Sync>(model: &GpModel, truth: &F, points: &Design) -> Vec<f64> {
    (0..points.len())
        .into_par_iter()
        .map(|i| {
            let x = points.point(i);
            (truth(x) - model.predict(x)).powi(2)
        })
        .collect()
}

/// ISE approximated by the average squared error over `mu_points`.
pub fn ise_reference<F: Fn(&[f64]) -> f64 + Sync>(model: &GpModel, truth: &F, mu_points: &Design) -> f64 {
    let e = squared_errors(model, truth, mu_points);
    e.iter().sum::<f64>() / e.len().max(1) as f64
}

/// ISE estimated from a validation design, plain average or weighted sum.
pub fn ise_hat<F: Fn(&[f64]) -> f64 + Sync>(
    model: &GpModel,
    truth: &F,
    z: &Design,
    weights: Option<&[f64]>,
) -> Result<f64> {
    weighted_mean(&squared_errors(model, truth, z), weights)
}

#[derive(Clone, Debug, PartialEq)]
pub struct IseReport {
    pub reference: f64,
    pub unweighted: f64,
    pub weighted: Option<f64>,
    pub rho_unweighted: Option<f64>,
    pub rho_weighted: Option<f64>,
    pub squared_errors: Vec<f64>,
}

impl IseReport {
    pub fn new<F: Fn(&[f64]) -> f64 + Sync>(
        model: &GpModel,
        truth: &F,
        z: &Design,
        weights: Option<&[f64]>,
        reference: f64,
    ) -> Result<Self> {
        let squared_errors = squared_errors(model, truth, z);
        let unweighted = weighted_mean(&squared_errors, None)?;
        let weighted = weights.map(|w| weighted_mean(&squared_errors, Some(w))).transpose()?;
        Ok(IseReport {
            reference,
            unweighted,
            weighted,
            rho_unweighted: relative_error(unweighted, reference),
            rho_weighted: weighted.and_then(|w| relative_error(w, reference)),
            squared_errors,
        })
    }
}
