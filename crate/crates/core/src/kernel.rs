//! Matérn 3/2 kernels and the kernels derived from them by conditioning
//! on a design.
//!
//! All Matérn kernels are stored by their rate `ε = √3 θ`, so that the
//! kernel reads `(1 + ε r) exp(-ε r)`. Constructors take the inverse
//! correlation length `θ` of the usual `(1 + √3 θ r) exp(-√3 θ r)` form.

use std::sync::Arc;

use rayon::prelude::*;

use crate::design::{squared_distance, Design};
use crate::error::{Error, Result};
use crate::linalg::SpdFactor;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Posterior variances in `(-DIAG_CLAMP, 0)` are roundoff and reported as 0.
pub const DIAG_CLAMP: f64 = 1e-12;

#[inline]
fn matern_rate(rate: f64, r: f64) -> f64 {
    let a = rate * r;
    (1.0 + a) * (-a).exp()
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("theta must be positive and finite, got {theta}")))
    }
}

fn check_dims(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    Ok(())
}

/// `(1 + √3 θ |x - x'|) exp(-√3 θ |x - x'|)`.
pub fn matern32_univariate(theta: f64, x: f64, x_prime: f64) -> Result<f64> {
    check_theta(theta)?;
    Ok(matern_rate(SQRT3 * theta, (x - x_prime).abs()))
}

/// Univariate Matérn 3/2 of the Euclidean distance.
pub fn matern32_isotropic(theta: f64, x: &[f64], x_prime: &[f64]) -> Result<f64> {
    check_theta(theta)?;
    check_dims(x, x_prime)?;
    Ok(matern_rate(SQRT3 * theta, squared_distance(x, x_prime).sqrt()))
}

/// Product over axes of univariate Matérn 3/2 kernels sharing `θ`.
pub fn matern32_product(theta: f64, x: &[f64], x_prime: &[f64]) -> Result<f64> {
    check_theta(theta)?;
    check_dims(x, x_prime)?;
    let rate = SQRT3 * theta;
    Ok(x.iter().zip(x_prime).map(|(a, b)| matern_rate(rate, (a - b).abs())).product())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaternForm {
    Isotropic,
    Product,
}

/// Matérn 3/2 kernel on `[0, 1]^d`, isotropic or tensor-product.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Matern32 {
    form: MaternForm,
    dim: usize,
    rate: f64,
}

impl Matern32 {
    pub fn new(form: MaternForm, dim: usize, theta: f64) -> Result<Self> {
        check_theta(theta)?;
        if dim == 0 {
            return Err(Error::Parameter("dimension must be positive".into()));
        }
        Ok(Matern32 { form, dim, rate: SQRT3 * theta })
    }

    pub fn univariate(theta: f64) -> Result<Self> {
        Matern32::new(MaternForm::Product, 1, theta)
    }

    pub fn isotropic(dim: usize, theta: f64) -> Result<Self> {
        Matern32::new(MaternForm::Isotropic, dim, theta)
    }

    pub fn product(dim: usize, theta: f64) -> Result<Self> {
        Matern32::new(MaternForm::Product, dim, theta)
    }

    /// Same kernel parameterized directly by the rate `ε`.
    pub fn with_rate(form: MaternForm, dim: usize, rate: f64) -> Result<Self> {
        Matern32::new(form, dim, rate / SQRT3)
    }

    pub fn form(&self) -> MaternForm {
        self.form
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn theta(&self) -> f64 {
        self.rate / SQRT3
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Separable kernels factor over axes (always true in dimension 1).
    pub fn is_separable(&self) -> bool {
        self.form == MaternForm::Product || self.dim == 1
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(y.len(), self.dim);
        match self.form {
            MaternForm::Isotropic => matern_rate(self.rate, squared_distance(x, y).sqrt()),
            MaternForm::Product => {
                // one exp for all axes
                let mut poly = 1.0;
                let mut dist = 0.0;
                for (a, b) in x.iter().zip(y) {
                    let r = self.rate * (a - b).abs();
                    poly *= 1.0 + r;
                    dist += r;
                }
                poly * (-dist).exp()
            }
        }
    }
}

/// `K_{|n}(x, x') = K(x, x') - k_n(x)' K_n^{-1} k_n(x')`: the posterior
/// covariance of a GP with covariance `K` after observing `X_n`.
#[derive(Clone, Debug)]
pub struct ConditionalKernel {
    base: Matern32,
    design: Design,
    factor: SpdFactor,
}

impl ConditionalKernel {
    pub fn new(base: Matern32, design: Design) -> Result<Self> {
        design.expect_dim(base.dim())?;
        let n = design.len();
        let factor = SpdFactor::from_fn(n, &format!("conditioning design X_n (n = {n})"), |i, j| {
            base.eval(design.point(i), design.point(j))
        })?;
        Ok(ConditionalKernel { base, design, factor })
    }

    pub fn base(&self) -> &Matern32 {
        &self.base
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn factor(&self) -> &SpdFactor {
        &self.factor
    }

    pub fn n(&self) -> usize {
        self.design.len()
    }

    /// `k_n(x)`.
    pub fn cross(&self, x: &[f64]) -> Vec<f64> {
        self.design.iter().map(|xi| self.base.eval(x, xi)).collect()
    }

    /// `L^{-1} k_n(x)` where `K_n = L L'`.
    pub fn whiten(&self, x: &[f64]) -> Vec<f64> {
        let mut k = self.cross(x);
        self.factor.solve_lower_in_place(&mut k);
        k
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let a = self.whiten(x);
        let b = self.whiten(y);
        let v = self.base.eval(x, y) - dot(&a, &b);
        if x == y {
            clamp_diag(v)
        } else {
            v
        }
    }

    pub fn variance(&self, x: &[f64]) -> f64 {
        let a = self.whiten(x);
        clamp_diag(self.base.eval(x, x) - dot(&a, &a))
    }
}

#[inline]
pub(crate) fn clamp_diag(v: f64) -> f64 {
    if v < 0.0 && v > -DIAG_CLAMP {
        0.0
    } else {
        v
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conditional covariance evaluated from an explicit base kernel, design
/// and factorization of its Gram matrix.
pub fn conditional_eval(
    base: &Matern32,
    design: &Design,
    gram_factor: &SpdFactor,
    x: &[f64],
    x_prime: &[f64],
) -> Result<f64> {
    check_dims(x, x_prime)?;
    if x.len() != base.dim() {
        return Err(Error::DimensionMismatch { expected: base.dim(), got: x.len() });
    }
    if gram_factor.dim() != design.len() {
        return Err(Error::DimensionMismatch { expected: design.len(), got: gram_factor.dim() });
    }
    let kx: Vec<f64> = design.iter().map(|xi| base.eval(x, xi)).collect();
    let ky: Vec<f64> = design.iter().map(|xi| base.eval(x_prime, xi)).collect();
    let a = gram_factor.solve_lower(&kx);
    let b = gram_factor.solve_lower(&ky);
    let v = base.eval(x, x_prime) - dot(&a, &b);
    Ok(if x == x_prime { clamp_diag(v) } else { v })
}

/// `K̄_{|n}(x, x') = 2 K_{|n}(x, x')² + K_{|n}(x, x) K_{|n}(x', x')`.
pub fn validation_eval(cond: &ConditionalKernel, x: &[f64], x_prime: &[f64]) -> Result<f64> {
    check_dims(x, x_prime)?;
    if x.len() != cond.base.dim() {
        return Err(Error::DimensionMismatch { expected: cond.base.dim(), got: x.len() });
    }
    let c = cond.eval(x, x_prime);
    Ok(2.0 * c * c + cond.variance(x) * cond.variance(x_prime))
}

/// Every kernel the design constructors work with.
#[derive(Clone, Debug)]
pub enum Kernel {
    Matern(Matern32),
    /// `K(x, x')²`.
    Squared(Matern32),
    /// `K_{|n}`.
    Conditional(Arc<ConditionalKernel>),
    /// `K̄_{|n}` built on the wrapped conditional kernel.
    Validation(Arc<ConditionalKernel>),
}

impl Kernel {
    pub fn conditional(base: Matern32, design: Design) -> Result<Self> {
        Ok(Kernel::Conditional(Arc::new(ConditionalKernel::new(base, design)?)))
    }

    pub fn validation(base: Matern32, design: Design) -> Result<Self> {
        Ok(Kernel::Validation(Arc::new(ConditionalKernel::new(base, design)?)))
    }

    pub fn dim(&self) -> usize {
        self.base().dim()
    }

    pub fn base(&self) -> &Matern32 {
        match self {
            Kernel::Matern(k) | Kernel::Squared(k) => k,
            Kernel::Conditional(c) | Kernel::Validation(c) => &c.base,
        }
    }

    pub fn conditioning(&self) -> Option<&ConditionalKernel> {
        match self {
            Kernel::Conditional(c) | Kernel::Validation(c) => Some(c),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Kernel::Matern(_) => "matern32",
            Kernel::Squared(_) => "matern32-squared",
            Kernel::Conditional(_) => "conditional",
            Kernel::Validation(_) => "validation",
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Kernel::Matern(k) => k.eval(x, y),
            Kernel::Squared(k) => {
                let v = k.eval(x, y);
                v * v
            }
            Kernel::Conditional(c) => c.eval(x, y),
            Kernel::Validation(c) => {
                let v = c.eval(x, y);
                2.0 * v * v + c.variance(x) * c.variance(y)
            }
        }
    }

    pub fn try_eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dims(x, y)?;
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(self.eval(x, y))
    }

    /// Precomputes per-point quantities so that repeated evaluations on
    /// `points` cost `O(n)` instead of `O(n²)` for conditioned kernels.
    pub fn prepare(&self, points: &Design) -> Prepared {
        let n = self.conditioning().map_or(0, |c| c.n());
        let mut whitened = vec![0.0; points.len() * n];
        let mut cdiag = vec![0.0; if n > 0 { points.len() } else { 0 }];
        if let Some(c) = self.conditioning() {
            if n > 0 {
                whitened
                    .par_chunks_mut(n)
                    .zip(cdiag.par_iter_mut())
                    .enumerate()
                    .for_each(|(i, (w, d))| {
                        let x = points.point(i);
                        for (wj, xj) in w.iter_mut().zip(c.design.iter()) {
                            *wj = c.base.eval(x, xj);
                        }
                        c.factor.solve_lower_in_place(w);
                        *d = clamp_diag(c.base.eval(x, x) - dot(w, w));
                    });
            }
        }
        Prepared { kernel: self.clone(), points: points.clone(), n, whitened, cdiag }
    }
}

/// A point set with cached kernel features; see [`Kernel::prepare`].
#[derive(Clone, Debug)]
pub struct Prepared {
    kernel: Kernel,
    points: Design,
    n: usize,
    whitened: Vec<f64>,
    cdiag: Vec<f64>,
}

impl Prepared {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &Design {
        &self.points
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    #[inline]
    fn feat(&self, i: usize) -> &[f64] {
        &self.whitened[i * self.n..(i + 1) * self.n]
    }

    /// Kernel between point `i` of `self` and point `j` of `other`; both
    /// must have been prepared with the same kernel.
    #[inline]
    pub fn eval(&self, i: usize, other: &Prepared, j: usize) -> f64 {
        let x = self.points.point(i);
        let y = other.points.point(j);
        match &self.kernel {
            Kernel::Matern(k) => k.eval(x, y),
            Kernel::Squared(k) => {
                let v = k.eval(x, y);
                v * v
            }
            Kernel::Conditional(c) => {
                if self.n == 0 {
                    c.base.eval(x, y)
                } else {
                    c.base.eval(x, y) - dot(self.feat(i), other.feat(j))
                }
            }
            Kernel::Validation(c) => {
                if self.n == 0 {
                    let v = c.base.eval(x, y);
                    2.0 * v * v + c.base.eval(x, x) * c.base.eval(y, y)
                } else {
                    let v = c.base.eval(x, y) - dot(self.feat(i), other.feat(j));
                    2.0 * v * v + self.cdiag[i] * other.cdiag[j]
                }
            }
        }
    }

    /// Kernel between two points of this set.
    #[inline]
    pub fn eval_within(&self, i: usize, j: usize) -> f64 {
        self.eval(i, self, j)
    }

    /// `K_{|n}(x_i, x_i)` for conditioned kernels, `None` otherwise.
    pub fn conditional_variance(&self, i: usize) -> Option<f64> {
        match &self.kernel {
            Kernel::Conditional(c) | Kernel::Validation(c) => {
                Some(if self.n == 0 { c.base.eval(self.points.point(i), self.points.point(i)) } else { self.cdiag[i] })
            }
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use valdesign_oracles::{matern32, SplitMix};

    #[test]
    fn univariate_values() {
        assert_eq!(matern32_univariate(10.0, 0.3, 0.3).unwrap(), 1.0);
        let v = matern32_univariate(10.0, 0.0, 1.0).unwrap();
        // (1 + 10√3) e^{-10√3}, from 40-digit arithmetic
        let expected = 5.504_735_201_255_512e-7;
        assert!(((v - expected) / expected).abs() < 1e-13, "{v}");
        assert_eq!(
            matern32_univariate(3.0, 0.2, 0.7).unwrap(),
            matern32_univariate(3.0, 0.7, 0.2).unwrap()
        );
        assert!(matern32_univariate(0.0, 0.1, 0.2).is_err());
        assert!(matern32_univariate(-1.0, 0.1, 0.2).is_err());
    }

    #[test]
    fn isotropic_and_product_values() {
        let theta = 50f64.sqrt();
        assert_eq!(matern32_isotropic(theta, &[0.4, 0.1], &[0.4, 0.1]).unwrap(), 1.0);
        let v = matern32_isotropic(2.0, &[0.0, 0.0], &[0.6, 0.8]).unwrap();
        let expected = 0.139_731_350_192_314_67; // (1 + 2√3) e^{-2√3}
        assert!(((v - expected) / expected).abs() < 1e-13, "{v}");
        let v = matern32_product(1.0, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let one = 0.483_357_724_596_507_65; // (1 + √3) e^{-√3}
        assert!(((v - one * one) / (one * one)).abs() < 1e-13, "{v}");
        assert_eq!(matern32_product(4.0, &[0.2, 0.9], &[0.2, 0.9]).unwrap(), 1.0);
        assert!(matern32_product(1.0, &[0.0], &[0.0, 1.0]).is_err());
        assert!(matern32_isotropic(1.0, &[0.0], &[0.0, 1.0]).is_err());
        for (x, y) in [(0.1, 0.7), (0.9, 0.05)] {
            let u = matern32_univariate(3.0, x, y).unwrap();
            assert_eq!(matern32_isotropic(3.0, &[x], &[y]).unwrap(), u);
            assert!((matern32_product(3.0, &[x], &[y]).unwrap() - u).abs() < 1e-16);
            assert!((u - matern32(3.0, x - y)).abs() < 1e-15);
        }
    }

    #[test]
    fn struct_matches_free_functions() {
        let mut rng = SplitMix(7);
        let iso = Matern32::isotropic(3, 2.5).unwrap();
        let prod = Matern32::product(3, 2.5).unwrap();
        for _ in 0..50 {
            let p = rng.points(2, 3);
            let (x, y) = (&p[0], &p[1]);
            assert!((iso.eval(x, y) - matern32_isotropic(2.5, x, y).unwrap()).abs() < 1e-15);
            assert!((prod.eval(x, y) - matern32_product(2.5, x, y).unwrap()).abs() < 1e-15);
            assert!(prod.eval(x, x) >= prod.eval(x, y));
            assert!(iso.eval(x, x) >= iso.eval(x, y));
        }
    }

    #[test]
    fn conditional_single_point_hand_expansion() {
        let base = Matern32::univariate(10.0).unwrap();
        let cond = ConditionalKernel::new(base, Design::from_scalars(&[0.5])).unwrap();
        let k = |a: f64, b: f64| matern32(10.0, a - b);
        let expected = k(0.2, 0.8) - k(0.2, 0.5) * k(0.8, 0.5);
        assert!((cond.eval(&[0.2], &[0.8]) - expected).abs() < 1e-15);
        let f = cond.factor();
        let v = conditional_eval(&base, cond.design(), f, &[0.2], &[0.8]).unwrap();
        assert!((v - expected).abs() < 1e-15);
    }

    #[test]
    fn conditional_empty_design_is_base() {
        let base = Matern32::isotropic(2, 3.0).unwrap();
        let cond = ConditionalKernel::new(base, Design::empty(2)).unwrap();
        let (x, y) = ([0.1, 0.2], [0.6, 0.3]);
        assert_eq!(cond.eval(&x, &y), base.eval(&x, &y));
        let v = Kernel::Validation(Arc::new(cond)).eval(&x, &y);
        let k = base.eval(&x, &y);
        assert!((v - (2.0 * k * k + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn conditional_vanishes_on_design() {
        let mut rng = SplitMix(11);
        let xn = Design::from_points(2, &rng.points(10, 2)).unwrap();
        let kernel = Kernel::validation(Matern32::isotropic(2, 3.0).unwrap(), xn.clone()).unwrap();
        let cond = kernel.conditioning().unwrap();
        for _ in 0..100 {
            let x = rng.points(1, 2).pop().unwrap();
            for xi in xn.iter() {
                assert!(cond.eval(xi, &x).abs() <= 1e-10);
                assert!(validation_eval(cond, xi, &x).unwrap().abs() <= 1e-10);
            }
        }
        let x = [0.3, 0.3];
        let c = cond.variance(&x);
        let v = validation_eval(cond, &x, &x).unwrap();
        assert!((v - 3.0 * c * c).abs() <= 1e-12 * v);
    }

    #[test]
    fn prepared_matches_direct() {
        let mut rng = SplitMix(3);
        let xn = Design::from_points(2, &rng.points(6, 2)).unwrap();
        let pts = Design::from_points(2, &rng.points(9, 2)).unwrap();
        let base = Matern32::product(2, 4.0).unwrap();
        for kernel in [
            Kernel::Matern(base),
            Kernel::Squared(base),
            Kernel::conditional(base, xn.clone()).unwrap(),
            Kernel::validation(base, xn.clone()).unwrap(),
        ] {
            let prep = kernel.prepare(&pts);
            for i in 0..pts.len() {
                for j in 0..pts.len() {
                    let direct = kernel.eval(pts.point(i), pts.point(j));
                    assert!((prep.eval_within(i, j) - direct).abs() < 1e-13, "{}", kernel.name());
                }
            }
        }
    }

    #[test]
    fn dimension_errors() {
        let k = Kernel::Matern(Matern32::isotropic(2, 1.0).unwrap());
        assert!(matches!(k.try_eval(&[0.1], &[0.2]), Err(Error::DimensionMismatch { .. })));
        assert!(Kernel::conditional(Matern32::isotropic(2, 1.0).unwrap(), Design::from_scalars(&[0.5])).is_err());
    }
}
