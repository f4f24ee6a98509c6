use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use rand::Rng;
use rand_distr::StandardNormal;

use super::legendre::{legendre_all, MAX_LEGENDRE_DEGREE};
use super::rotation::{random_rotation_with, Matrix};
use crate::error::{Error, Result};

pub type MultiIndex = Vec<usize>;

/// Per-degree variances of the univariate coefficients.
#[derive(Clone, Debug, PartialEq)]
pub enum LambdaSchedule {
    /// `1 / ((i+1)^gamma tau^i)`.
    Power { gamma: f64, tau: f64 },
    /// Explicit values for degrees `0..len`; higher degrees are unavailable.
    Values(Vec<f64>),
}

impl LambdaSchedule {
    pub fn value(&self, i: usize) -> Option<f64> {
        match self {
            LambdaSchedule::Power { gamma, tau } => {
                Some(1.0 / ((i as f64 + 1.0).powf(*gamma) * tau.powi(i as i32)))
            }
            LambdaSchedule::Values(v) => v.get(i).copied(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            LambdaSchedule::Power { gamma, tau } => {
                if !(*gamma > 0.0) || !(*tau > 0.0) || !tau.is_finite() {
                    return Err(Error::Parameter(format!(
                        "lambda schedule needs gamma > 0 and finite tau > 0, got {gamma}, {tau}"
                    )));
                }
            }
            LambdaSchedule::Values(v) => {
                if v.is_empty() || v.iter().any(|x| !(*x > 0.0)) || v.windows(2).any(|w| w[1] > w[0]) {
                    return Err(Error::Parameter(
                        "explicit lambda values must be positive and non-increasing".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn same_level(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

struct Entry {
    lambda: f64,
    index: MultiIndex,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    // max-heap: larger lambda first, then lexicographically smaller index
    fn cmp(&self, other: &Self) -> Ordering {
        self.lambda
            .total_cmp(&other.lambda)
            .then_with(|| other.index.cmp(&self.index))
    }
}

fn product_lambda(index: &[usize], schedule: &LambdaSchedule) -> Option<f64> {
    index.iter().try_fold(1.0, |acc, &l| schedule.value(l).map(|v| acc * v))
}

/// Multi-indices with entries `<= max_degree` and sum `<= total_degree`,
/// in decreasing order of their product variance, keeping the first
/// `n_terms` and any further indices tied with the last one kept.
pub fn build_index_set(
    dim: usize,
    n_terms: usize,
    max_degree: usize,
    total_degree: usize,
    schedule: &LambdaSchedule,
) -> Result<Vec<MultiIndex>> {
    if dim == 0 {
        return Err(Error::EmptyIndexSet);
    }
    if n_terms == 0 {
        return Err(Error::Parameter("index set size must be at least 1".into()));
    }
    schedule.validate()?;
    let root = vec![0; dim];
    let mut heap = BinaryHeap::new();
    let mut seen = HashSet::new();
    heap.push(Entry { lambda: product_lambda(&root, schedule).ok_or(Error::EmptyIndexSet)?, index: root.clone() });
    seen.insert(root);
    let mut out: Vec<MultiIndex> = Vec::new();
    let mut last = f64::NAN;
    while let Some(Entry { lambda, index }) = heap.pop() {
        if out.len() >= n_terms && !same_level(lambda, last) {
            break;
        }
        let total: usize = index.iter().sum();
        for k in 0..dim {
            if index[k] >= max_degree || total >= total_degree {
                continue;
            }
            let mut child = index.clone();
            child[k] += 1;
            if seen.contains(&child) {
                continue;
            }
            if let Some(l) = product_lambda(&child, schedule) {
                seen.insert(child.clone());
                heap.push(Entry { lambda: l, index: child });
            }
        }
        last = lambda;
        out.push(index);
    }
    Ok(out)
}

/// Settings for drawing a random polynomial test function.
#[derive(Clone, Debug, PartialEq)]
pub struct PolynomialSpec {
    pub dim: usize,
    pub n_terms: usize,
    pub max_degree: usize,
    pub total_degree: usize,
    pub alpha: f64,
    pub gamma: f64,
}

impl PolynomialSpec {
    /// Defaults used for a training design of size `n`.
    pub fn for_design_size(dim: usize, n: usize) -> Self {
        PolynomialSpec {
            dim,
            n_terms: (n / 2).max(1),
            max_degree: 7,
            total_degree: 25,
            alpha: 0.5,
            gamma: 2.0,
        }
    }
}

/// `f(x) = P(Q (x - 1/2) + 1/2)` with `P` a Legendre expansion with
/// Gaussian coefficients.
#[derive(Clone, Debug)]
pub struct RandomPolynomial {
    dim: usize,
    indices: Vec<MultiIndex>,
    coefficients: Vec<f64>,
    variances: Vec<f64>,
    transform: Matrix,
    tau: f64,
    top_degree: usize,
}

fn max_abs_row_sum(q: &Matrix) -> f64 {
    (0..q.n)
        .map(|i| (0..q.n).map(|j| q.at(i, j).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

impl RandomPolynomial {
    pub fn new(indices: Vec<MultiIndex>, coefficients: Vec<f64>, transform: Matrix) -> Result<Self> {
        let dim = transform.n;
        if indices.len() != coefficients.len() {
            return Err(Error::DimensionMismatch { expected: indices.len(), got: coefficients.len() });
        }
        let mut top_degree = 0;
        for ix in &indices {
            if ix.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: ix.len() });
            }
            top_degree = top_degree.max(ix.iter().copied().max().unwrap_or(0));
        }
        if top_degree > MAX_LEGENDRE_DEGREE {
            return Err(Error::Parameter(format!("degree {top_degree} exceeds {MAX_LEGENDRE_DEGREE}")));
        }
        let tau = max_abs_row_sum(&transform);
        Ok(RandomPolynomial {
            dim,
            variances: vec![f64::NAN; indices.len()],
            indices,
            coefficients,
            transform,
            tau,
            top_degree,
        })
    }

    pub fn sample<R: Rng + ?Sized>(spec: &PolynomialSpec, rng: &mut R) -> Result<Self> {
        let d = spec.dim;
        if d == 0 {
            return Err(Error::Parameter("dimension must be positive".into()));
        }
        if !(0.0..=1.0).contains(&spec.alpha) {
            return Err(Error::Domain { value: spec.alpha, domain: "[0, 1]" });
        }
        if spec.max_degree > MAX_LEGENDRE_DEGREE {
            return Err(Error::Parameter(format!(
                "max degree {} exceeds {MAX_LEGENDRE_DEGREE}",
                spec.max_degree
            )));
        }
        let rotation = random_rotation_with(d, rng);
        let mut transform = Matrix::identity(d);
        for (t, r) in transform.data.iter_mut().zip(&rotation.data) {
            *t = spec.alpha * r + (1.0 - spec.alpha) * *t;
        }
        let tau = max_abs_row_sum(&transform);
        let schedule = LambdaSchedule::Power { gamma: spec.gamma, tau };
        let indices = build_index_set(d, spec.n_terms, spec.max_degree, spec.total_degree, &schedule)?;
        let variances: Vec<f64> = indices
            .iter()
            .map(|ix| product_lambda(ix, &schedule).expect("power schedule is total"))
            .collect();
        let coefficients = variances
            .iter()
            .map(|v| rng.sample::<f64, _>(StandardNormal) * v.sqrt())
            .collect();
        let mut poly = RandomPolynomial::new(indices, coefficients, transform)?;
        poly.variances = variances;
        Ok(poly)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Coefficient variances; NaN for hand-built polynomials.
    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn transform(&self) -> &Matrix {
        &self.transform
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let centered: Vec<f64> = x.iter().map(|v| v - 0.5).collect();
        let mut t = vec![0.0; d];
        self.transform.apply(&centered, &mut t);
        let stride = self.top_degree + 1;
        let mut table = vec![0.0; d * stride];
        for (k, tk) in t.iter().enumerate() {
            legendre_all(self.top_degree, tk + 0.5, &mut table[k * stride..(k + 1) * stride]);
        }
        self.indices
            .iter()
            .zip(&self.coefficients)
            .map(|(ix, b)| b * ix.iter().enumerate().map(|(k, &l)| table[k * stride + l]).product::<f64>())
            .sum()
    }
}

pub fn eval_truth(poly: &RandomPolynomial, x: &[f64]) -> f64 {
    poly.eval(x)
}
