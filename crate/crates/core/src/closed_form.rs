//! Potentials and energies of the uniform measure on `[0, 1]^d` for
//! tensor-product Matérn 3/2 kernels, and for the conditional and
//! validation kernels built on them.
//!
//! The univariate primitives take the kernel rate `ε` (kernel
//! `(1 + ε r) e^{-ε r}`), i.e. `ε = √3 θ` for the `θ` of [`Matern32`].

use crate::design::Design;
use crate::error::{Error, Result};
use crate::kernel::{ConditionalKernel, Kernel, Matern32};
use crate::linalg::SpdFactor;

fn check_unit(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain { value: x, domain: "[0, 1]" })
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if rate > 0.0 && rate.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("rate must be positive and finite, got {rate}")))
    }
}

/// Univariate integrals of the rate-`ε` Matérn 3/2 kernel against the
/// uniform measure on `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnivariateIntegrals {
    rate: f64,
}

impl UnivariateIntegrals {
    pub fn new(rate: f64) -> Result<Self> {
        check_rate(rate)?;
        Ok(UnivariateIntegrals { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// `∫_0^x K(0, t) dt`.
    pub fn s(&self, x: f64) -> f64 {
        let t = self.rate;
        (2.0 - (2.0 + t * x) * (-t * x).exp()) / t
    }

    /// `∫_0^x K(0, t)² dt`.
    pub fn t(&self, x: f64) -> f64 {
        let t = self.rate;
        let tx = t * x;
        (5.0 - (5.0 + 6.0 * tx + 2.0 * tx * tx) * (-2.0 * tx).exp()) / (4.0 * t)
    }

    pub fn b(&self, u: f64, v: f64) -> f64 {
        let t = self.rate;
        let r = t * (u - v).abs();
        (-r).exp() / (6.0 * t) * (15.0 * (1.0 + r) + 6.0 * r * r + r * r * r)
    }

    pub fn c(&self, u: f64, v: f64) -> f64 {
        let t = self.rate;
        (-t * (u + v)).exp() / (4.0 * t) * (5.0 + 3.0 * t * (u + v) + 2.0 * t * t * u * v)
    }

    pub fn g(&self, u: f64, v: f64) -> f64 {
        let t = self.rate;
        let (s, p) = (u + v, u * v);
        (-t * (1.0 + s)).exp() / (16.0 * t * t)
            * (21.0 + t * (9.0 + 13.0 * s) + t * t * (6.0 * s + 8.0 * p) + 4.0 * t * t * t * p)
    }

    pub fn h(&self, u: f64, v: f64) -> f64 {
        let t = self.rate;
        let (s, p) = (u + v, u * v);
        let ts = t * s;
        (-ts).exp() / (24.0 * t * t)
            * (126.0
                + 96.0 * ts
                + 24.0 * ts * ts
                + 3.0 * ts * ts * ts
                + t * t * p * (24.0 + 6.0 * ts + 2.0 * t * t * (u * u + v * v)))
    }

    pub fn i(&self, u: f64, v: f64) -> f64 {
        let t = self.rate;
        let r = t * (u - v).abs();
        let poly = 945.0 + r * (945.0 + r * (420.0 + r * (105.0 + r * (15.0 + r))));
        (-r).exp() / (120.0 * t * t) * poly
    }

    /// `P_{K,μ₁}(x)`.
    pub fn potential(&self, x: f64) -> f64 {
        self.s(x) + self.s(1.0 - x)
    }

    /// `E_K(μ₁)`.
    pub fn energy(&self) -> f64 {
        let t = self.rate;
        2.0 / (t * t) * ((t + 3.0) * (-t).exp() + 2.0 * t - 3.0)
    }

    /// `P_{K²,μ₁}(x)`.
    pub fn potential_sq(&self, x: f64) -> f64 {
        self.t(x) + self.t(1.0 - x)
    }

    /// `E_{K²}(μ₁)`.
    pub fn energy_sq(&self) -> f64 {
        let t = self.rate;
        ((2.0 * t * t + 8.0 * t + 9.0) * (-2.0 * t).exp() + 10.0 * t - 9.0) / (4.0 * t * t)
    }

    /// `β(u, v) = ∫ K(u, t) K(v, t) dt`.
    pub fn beta(&self, u: f64, v: f64) -> f64 {
        self.b(u, v) - self.c(u, v) - self.c(1.0 - u, 1.0 - v)
    }

    /// `γ(u, v) = ∫∫ K(u, t) K(v, s) K(t, s) dt ds`.
    pub fn gamma(&self, u: f64, v: f64) -> f64 {
        self.g(u, 1.0 - v) + self.g(v, 1.0 - u) - self.h(u, v) - self.h(1.0 - u, 1.0 - v) + self.i(u, v)
    }
}

pub fn potential_uniform_1d(rate: f64, x: f64) -> Result<f64> {
    check_unit(x)?;
    Ok(UnivariateIntegrals::new(rate)?.potential(x))
}

pub fn energy_uniform_1d(rate: f64) -> Result<f64> {
    Ok(UnivariateIntegrals::new(rate)?.energy())
}

pub fn potential_sq_uniform_1d(rate: f64, x: f64) -> Result<f64> {
    check_unit(x)?;
    Ok(UnivariateIntegrals::new(rate)?.potential_sq(x))
}

pub fn energy_sq_uniform_1d(rate: f64) -> Result<f64> {
    Ok(UnivariateIntegrals::new(rate)?.energy_sq())
}

pub fn beta_1d(rate: f64, u: f64, v: f64) -> Result<f64> {
    check_unit(u)?;
    check_unit(v)?;
    Ok(UnivariateIntegrals::new(rate)?.beta(u, v))
}

pub fn gamma_1d(rate: f64, u: f64, v: f64) -> Result<f64> {
    check_unit(u)?;
    check_unit(v)?;
    Ok(UnivariateIntegrals::new(rate)?.gamma(u, v))
}

fn require_separable(base: &Matern32) -> Result<UnivariateIntegrals> {
    if !base.is_separable() {
        return Err(Error::Unsupported(
            "closed-form uniform-measure integrals need a tensor-product kernel".into(),
        ));
    }
    UnivariateIntegrals::new(base.rate())
}

/// Everything needed to evaluate `P_{K̄|n,μ}` and `E_{K̄|n}(μ)` (and the
/// corresponding quantities for `K|n`) in closed form.
#[derive(Clone, Debug)]
pub struct SeparableMuCache {
    uni: UnivariateIntegrals,
    dim: usize,
    design: Design,
    factor: SpdFactor,
    /// `Ω`, row-major `n x n`.
    omega: Vec<f64>,
    /// `Γ`, row-major `n x n`.
    gamma: Vec<f64>,
    energy_k: f64,
    energy_k2: f64,
    /// `P_{K,μ}(x_j)`.
    pot_design: Vec<f64>,
    /// `K_n^{-1} p_{K,n}(μ)`.
    pot_solved: Vec<f64>,
    trace_omega: f64,
    trace_gamma: f64,
    trace_omega_sq: f64,
}

impl SeparableMuCache {
    pub fn new(base: &Matern32, design: &Design) -> Result<Self> {
        let cond = ConditionalKernel::new(*base, design.clone())?;
        SeparableMuCache::from_conditional(&cond)
    }

    pub fn from_conditional(cond: &ConditionalKernel) -> Result<Self> {
        let base = cond.base();
        let uni = require_separable(base)?;
        let design = cond.design().clone();
        let factor = cond.factor().clone();
        let (n, dim) = (design.len(), base.dim());
        let mut omega = vec![0.0; n * n];
        let mut gamma = vec![0.0; n * n];
        for j in 0..n {
            for k in 0..=j {
                let (xj, xk) = (design.point(j), design.point(k));
                let mut o = 1.0;
                let mut g = 1.0;
                for i in 0..dim {
                    o *= uni.beta(xj[i], xk[i]);
                    g *= uni.gamma(xj[i], xk[i]);
                }
                omega[j * n + k] = o;
                omega[k * n + j] = o;
                gamma[j * n + k] = g;
                gamma[k * n + j] = g;
            }
        }
        // K_n^{-1} Ω and K_n^{-1} Γ column by column
        let solve_cols = |m: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; n * n];
            let mut col = vec![0.0; n];
            for c in 0..n {
                for r in 0..n {
                    col[r] = m[r * n + c];
                }
                let s = factor.solve(&col);
                for r in 0..n {
                    out[r * n + c] = s[r];
                }
            }
            out
        };
        let a_omega = solve_cols(&omega);
        let a_gamma = solve_cols(&gamma);
        let trace_omega = (0..n).map(|i| a_omega[i * n + i]).sum();
        let trace_gamma = (0..n).map(|i| a_gamma[i * n + i]).sum();
        let mut trace_omega_sq = 0.0;
        for i in 0..n {
            for j in 0..n {
                trace_omega_sq += a_omega[i * n + j] * a_omega[j * n + i];
            }
        }
        let pot_design: Vec<f64> = design
            .iter()
            .map(|x| x.iter().map(|&xi| uni.potential(xi)).product())
            .collect();
        let pot_solved = factor.solve(&pot_design);
        Ok(SeparableMuCache {
            uni,
            dim,
            energy_k: uni.energy().powi(dim as i32),
            energy_k2: uni.energy_sq().powi(dim as i32),
            design,
            factor,
            omega,
            gamma,
            pot_design,
            pot_solved,
            trace_omega,
            trace_gamma,
            trace_omega_sq,
        })
    }

    pub fn n(&self) -> usize {
        self.design.len()
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// `tr(K_n^{-1} Γ)`.
    pub fn trace_gamma(&self) -> f64 {
        self.trace_gamma
    }

    /// `tr(K_n^{-1} Ω)`.
    pub fn trace_omega(&self) -> f64 {
        self.trace_omega
    }

    /// `ω_{K,n}(x)`.
    pub fn omega_vec(&self, x: &[f64]) -> Vec<f64> {
        self.design
            .iter()
            .map(|xj| xj.iter().zip(x).map(|(&a, &b)| self.uni.beta(a, b)).product())
            .collect()
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        x.iter().try_for_each(|&v| check_unit(v))
    }

    fn k_vec(&self, x: &[f64]) -> Vec<f64> {
        let rate = self.uni.rate();
        self.design
            .iter()
            .map(|xj| {
                xj.iter()
                    .zip(x)
                    .map(|(a, b)| {
                        let r = rate * (a - b).abs();
                        (1.0 + r) * (-r).exp()
                    })
                    .product()
            })
            .collect()
    }

    /// `P_{K,μ}(x)`.
    pub fn potential_k(&self, x: &[f64]) -> f64 {
        x.iter().map(|&v| self.uni.potential(v)).product()
    }

    /// `P_{K²,μ}(x)`.
    pub fn potential_k2(&self, x: &[f64]) -> f64 {
        x.iter().map(|&v| self.uni.potential_sq(v)).product()
    }

    pub fn energy_k(&self) -> f64 {
        self.energy_k
    }

    pub fn energy_k2(&self) -> f64 {
        self.energy_k2
    }

    /// `P_{K|n,μ}(x) = P_{K,μ}(x) - k_n(x)' K_n^{-1} p_{K,n}(μ)`.
    pub fn potential_conditional(&self, x: &[f64]) -> f64 {
        let k = self.k_vec(x);
        self.potential_k(x) - crate::kernel::dot(&k, &self.pot_solved)
    }

    /// `E_{K|n}(μ) = E_K(μ) - p_{K,n}(μ)' K_n^{-1} p_{K,n}(μ)`.
    pub fn energy_conditional(&self) -> f64 {
        self.energy_k - crate::kernel::dot(&self.pot_design, &self.pot_solved)
    }

    /// `P_{K̄|n,μ}(x)` without domain checks.
    pub fn potential_validation(&self, x: &[f64]) -> f64 {
        let n = self.n();
        let p2 = self.potential_k2(x);
        if n == 0 {
            return 2.0 * p2 + 1.0;
        }
        let k = self.k_vec(x);
        let a = self.factor.solve(&k);
        let om = self.omega_vec(x);
        let a_om = crate::kernel::dot(&a, &om);
        let mut a_big_om_a = 0.0;
        for i in 0..n {
            let row = &self.omega[i * n..(i + 1) * n];
            a_big_om_a += a[i] * crate::kernel::dot(row, &a);
        }
        let var = 1.0 - crate::kernel::dot(&k, &a);
        2.0 * p2 - 4.0 * a_om + 2.0 * a_big_om_a + var * (1.0 - self.trace_omega)
    }

    /// `E_{K̄|n}(μ)`.
    pub fn energy_validation(&self) -> f64 {
        let t = 1.0 - self.trace_omega;
        2.0 * self.energy_k2 - 4.0 * self.trace_gamma + 2.0 * self.trace_omega_sq + t * t
    }
}

pub fn build_mu_cache(kernel: &Matern32, design: &Design) -> Result<SeparableMuCache> {
    if design.is_empty() {
        return Err(Error::Parameter("conditioning design must be nonempty".into()));
    }
    SeparableMuCache::new(kernel, design)
}

pub fn potential_validation_mu(cache: &SeparableMuCache, x: &[f64]) -> Result<f64> {
    cache.check_point(x)?;
    Ok(cache.potential_validation(x))
}

pub fn energy_validation_mu(cache: &SeparableMuCache) -> f64 {
    cache.energy_validation()
}

/// Closed-form potential/energy of the uniform measure for any kernel in
/// [`Kernel`] whose base is a tensor-product Matérn 3/2.
#[derive(Clone, Debug)]
pub enum UniformMu {
    Plain(UnivariateIntegrals),
    Squared(UnivariateIntegrals),
    Conditional(Box<SeparableMuCache>),
    Validation(Box<SeparableMuCache>),
}

impl UniformMu {
    pub fn new(kernel: &Kernel) -> Result<Self> {
        Ok(match kernel {
            Kernel::Matern(k) => UniformMu::Plain(require_separable(k)?),
            Kernel::Squared(k) => UniformMu::Squared(require_separable(k)?),
            Kernel::Conditional(c) => UniformMu::Conditional(Box::new(SeparableMuCache::from_conditional(c)?)),
            Kernel::Validation(c) => UniformMu::Validation(Box::new(SeparableMuCache::from_conditional(c)?)),
        })
    }

    pub fn potential(&self, x: &[f64]) -> f64 {
        match self {
            UniformMu::Plain(u) => x.iter().map(|&v| u.potential(v)).product(),
            UniformMu::Squared(u) => x.iter().map(|&v| u.potential_sq(v)).product(),
            UniformMu::Conditional(c) => c.potential_conditional(x),
            UniformMu::Validation(c) => c.potential_validation(x),
        }
    }

    pub fn energy(&self, dim: usize) -> f64 {
        match self {
            UniformMu::Plain(u) => u.energy().powi(dim as i32),
            UniformMu::Squared(u) => u.energy_sq().powi(dim as i32),
            UniformMu::Conditional(c) => c.energy_conditional(),
            UniformMu::Validation(c) => c.energy_validation(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use valdesign_oracles::{integrate, integrate_unit_square, matern32_rate, SplitMix};

    const TOL: f64 = 1e-11;

    #[test]
    fn potential_symmetry_and_endpoint() {
        let u = UnivariateIntegrals::new(7.3).unwrap();
        for x in [0.0, 0.1, 0.37, 0.5] {
            assert!((u.potential(x) - u.potential(1.0 - x)).abs() < 1e-15);
            assert!((u.potential_sq(x) - u.potential_sq(1.0 - x)).abs() < 1e-15);
        }
        assert_eq!(u.s(0.0), 0.0);
        assert_eq!(u.t(0.0), 0.0);
        assert!((u.potential(0.0) - u.s(1.0)).abs() < 1e-15);
        assert!(potential_uniform_1d(3.0, 1.2).is_err());
        assert!(beta_1d(3.0, 0.2, -0.1).is_err());
        assert!(energy_uniform_1d(0.0).is_err());
    }

    #[test]
    fn potential_matches_quadrature() {
        let v = potential_uniform_1d(10.0, 0.5).unwrap();
        let q = integrate(|t| matern32_rate(10.0, 0.5 - t), 0.0, 1.0, &[0.5], TOL);
        assert!((v - q).abs() < 1e-10);
    }

    #[test]
    fn energy_matches_quadrature_and_fubini() {
        let rate = 10.0;
        let e = energy_uniform_1d(rate).unwrap();
        let q = integrate(
            |s| integrate(|t| matern32_rate(rate, s - t), 0.0, 1.0, &[s], 1e-12),
            0.0,
            1.0,
            &[],
            TOL,
        );
        assert!((e - q).abs() < 1e-8);
        let u = UnivariateIntegrals::new(rate).unwrap();
        let f = integrate(|x| u.potential(x), 0.0, 1.0, &[], TOL);
        assert!((e - f).abs() < 1e-10);
        let small = energy_uniform_1d(1e-4).unwrap();
        assert!((small - 1.0).abs() < 1e-3);
    }

    #[test]
    fn squared_potential_and_energy() {
        let u = UnivariateIntegrals::new(10.0).unwrap();
        let grid: Vec<f64> = (1..10).map(|i| i as f64 / 10.0).collect();
        let vals: Vec<f64> = grid.iter().map(|&x| u.potential_sq(x)).collect();
        let best = vals.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(best, vals[4]);
        for (rate, x) in [(5.0, 0.25), (10.0, 0.5), (20.0, 0.9)] {
            let v = potential_sq_uniform_1d(rate, x).unwrap();
            let q = integrate(|t| matern32_rate(rate, x - t).powi(2), 0.0, 1.0, &[x], TOL);
            assert!((v - q).abs() < 1e-8);
            let e = energy_sq_uniform_1d(rate).unwrap();
            let u = UnivariateIntegrals::new(rate).unwrap();
            let q = integrate(|x| u.potential_sq(x), 0.0, 1.0, &[], TOL);
            assert!((e - q).abs() < 1e-8);
        }
    }

    #[test]
    fn beta_and_gamma() {
        let u = UnivariateIntegrals::new(10.0).unwrap();
        assert!((u.beta(0.2, 0.7) - u.beta(0.7, 0.2)).abs() < 1e-15);
        let q = integrate(|t| matern32_rate(10.0, 0.2 - t) * matern32_rate(10.0, 0.7 - t), 0.0, 1.0, &[0.2, 0.7], TOL);
        assert!((u.beta(0.2, 0.7) - q).abs() < 1e-8);
        let mut rng = SplitMix(5);
        for _ in 0..20 {
            let x = rng.uniform();
            assert!((u.beta(x, x) - u.potential_sq(x)).abs() < 1e-13);
        }
        assert!((u.gamma(0.3, 0.6) - u.gamma(0.6, 0.3)).abs() < 1e-14);
        assert!((u.gamma(0.3, 0.6) - u.gamma(0.7, 0.4)).abs() < 1e-14);
        let (a, b) = (0.3, 0.6);
        let q = integrate_unit_square(
            |s, t| matern32_rate(10.0, a - s) * matern32_rate(10.0, b - t) * matern32_rate(10.0, s - t),
            &[a, b],
            |s| vec![b, s],
            1e-10,
        );
        assert!((u.gamma(a, b) - q).abs() < 1e-7);
    }

    #[test]
    fn large_rate_stays_finite() {
        let u = UnivariateIntegrals::new(200.0).unwrap();
        for x in [0.0, 0.3, 1.0] {
            for v in [u.potential(x), u.potential_sq(x), u.beta(x, 0.5), u.gamma(x, 0.5)] {
                assert!(v.is_finite());
            }
        }
        assert!(u.energy().is_finite() && u.energy_sq().is_finite());
    }

    #[test]
    fn cache_single_point() {
        let base = Matern32::univariate(10.0 / 3f64.sqrt()).unwrap();
        let cache = build_mu_cache(&base, &Design::from_scalars(&[0.4])).unwrap();
        let u = UnivariateIntegrals::new(10.0).unwrap();
        assert!((cache.omega()[0] - u.beta(0.4, 0.4)).abs() < 1e-15);
        assert!((cache.gamma()[0] - u.gamma(0.4, 0.4)).abs() < 1e-15);
        assert!(build_mu_cache(&base, &Design::empty(1)).is_err());
        let iso = Matern32::isotropic(2, 3.0).unwrap();
        assert!(matches!(
            build_mu_cache(&iso, &Design::from_points(2, &[[0.5, 0.5]]).unwrap()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn cache_matrices_symmetric() {
        let mut rng = SplitMix(9);
        let xn = Design::from_points(3, &rng.points(5, 3)).unwrap();
        let cache = build_mu_cache(&Matern32::product(3, 2.0).unwrap(), &xn).unwrap();
        let n = 5;
        for i in 0..n {
            for j in 0..n {
                assert_eq!(cache.omega()[i * n + j], cache.omega()[j * n + i]);
                assert_eq!(cache.gamma()[i * n + j], cache.gamma()[j * n + i]);
            }
        }
    }

    #[test]
    fn empty_design_degenerate_values() {
        let base = Matern32::product(2, 3.0).unwrap();
        let cache = SeparableMuCache::new(&base, &Design::empty(2)).unwrap();
        let x = [0.3, 0.8];
        assert!((cache.potential_validation(&x) - (2.0 * cache.potential_k2(&x) + 1.0)).abs() < 1e-15);
        assert!((cache.energy_validation() - (2.0 * cache.energy_k2() + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn separable_energy_is_product() {
        let base = Matern32::product(2, 3.0).unwrap();
        let mu = UniformMu::new(&Kernel::Matern(base)).unwrap();
        let u = UnivariateIntegrals::new(base.rate()).unwrap();
        assert!((mu.energy(2) - u.energy() * u.energy()).abs() < 1e-12);
    }

    // Brute-force double sum of K̄|n over a midpoint grid in d = 1.
    fn grid_validation_energy(base: Matern32, xn: &Design, q: usize) -> (f64, Vec<f64>) {
        let kernel = Kernel::validation(base, xn.clone()).unwrap();
        let grid = Design::from_scalars(&(0..q).map(|i| (i as f64 + 0.5) / q as f64).collect::<Vec<_>>());
        let prep = kernel.prepare(&grid);
        let pots: Vec<f64> =
            (0..q).map(|i| (0..q).map(|j| prep.eval_within(i, j)).sum::<f64>() / q as f64).collect();
        (pots.iter().sum::<f64>() / q as f64, pots)
    }

    #[test]
    fn printed_energy_variant_disagrees_with_oracle() {
        // The squared-trace term must use Ω, not Γ.
        let base = Matern32::with_rate(crate::kernel::MaternForm::Product, 1, 7.0).unwrap();
        let xn = Design::from_scalars(&[0.2, 0.55, 0.9]);
        let cache = SeparableMuCache::new(&base, &xn).unwrap();
        let (oracle, _) = grid_validation_energy(base, &xn, 2000);
        let ours = cache.energy_validation();
        assert!(((ours - oracle) / oracle).abs() < 5e-3, "{ours} vs {oracle}");
        let n = 3;
        let a = cache.factor.inverse();
        let mut ag = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                ag[i * n + j] = (0..n).map(|k| a[i * n + k] * cache.gamma[k * n + j]).sum();
            }
        }
        let tr_ag_sq: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| ag[i * n + j] * ag[j * n + i]).sum();
        let t = 1.0 - cache.trace_omega;
        let printed = 2.0 * cache.energy_k2 - 4.0 * cache.trace_gamma + 2.0 * tr_ag_sq + t * t;
        assert!(((printed - oracle) / oracle).abs() > 0.5, "{printed} vs {oracle}");
    }

    #[test]
    fn validation_energy_two_points_matches_grid() {
        let base = Matern32::univariate(10.0).unwrap();
        let xn = Design::from_scalars(&[0.3, 0.75]);
        let cache = SeparableMuCache::new(&base, &xn).unwrap();
        let (oracle, pots) = grid_validation_energy(base, &xn, 4096);
        assert!(((cache.energy_validation() - oracle) / oracle).abs() < 5e-3);
        let q = pots.len();
        for i in (0..q).step_by(409) {
            let x = (i as f64 + 0.5) / q as f64;
            let v = cache.potential_validation(&[x]);
            assert!(((v - pots[i]) / pots[i]).abs() < 5e-3, "x={x}: {v} vs {}", pots[i]);
        }
    }
}
