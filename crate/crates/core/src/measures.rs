//! Signed discrete measures, energies, MMD and optimal weights.

use rayon::prelude::*;

use crate::closed_form::UniformMu;
use crate::design::Design;
use crate::error::{Error, Result};
use crate::kernel::{Kernel, Prepared};
use crate::linalg::SpdFactor;

/// Finitely supported signed measure.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    support: Design,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(support: Design, weights: Vec<f64>) -> Result<Self> {
        if support.len() != weights.len() {
            return Err(Error::DimensionMismatch { expected: support.len(), got: weights.len() });
        }
        Ok(DiscreteMeasure { support, weights })
    }

    /// Equal weights `1/k` on the `k` support points.
    pub fn uniform(support: Design) -> Self {
        let k = support.len();
        let weights = vec![1.0 / k.max(1) as f64; k];
        DiscreteMeasure { support, weights }
    }

    pub fn support(&self) -> &Design {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.support.dim()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        DiscreteMeasure {
            support: self.support.clone(),
            weights: self.weights.iter().map(|w| w * factor).collect(),
        }
    }

    /// `self + other` as a measure on the concatenated supports.
    pub fn add(&self, other: &DiscreteMeasure) -> Result<Self> {
        let support = self.support.concat(&other.support)?;
        let mut weights = self.weights.clone();
        weights.extend_from_slice(&other.weights);
        Ok(DiscreteMeasure { support, weights })
    }

    /// `self - other`.
    pub fn minus(&self, other: &DiscreteMeasure) -> Result<Self> {
        self.add(&other.scaled(-1.0))
    }

    /// `(1 - alpha) self + alpha other`.
    pub fn mix(&self, alpha: f64, other: &DiscreteMeasure) -> Result<Self> {
        self.scaled(1.0 - alpha).add(&other.scaled(alpha))
    }
}

/// The target measure: uniform on a finite point set, or uniform on the
/// unit cube through closed-form integrals.
#[derive(Clone, Debug)]
pub enum MuRepresentation {
    Discrete(Design),
    /// Built for one kernel; only use it with that kernel.
    ClosedForm(UniformMu),
}

impl MuRepresentation {
    pub fn discrete(points: Design) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        Ok(MuRepresentation::Discrete(points))
    }

    /// Needs a kernel with a tensor-product Matérn base.
    pub fn closed_form(kernel: &Kernel) -> Result<Self> {
        Ok(MuRepresentation::ClosedForm(UniformMu::new(kernel)?))
    }

    pub fn as_measure(&self) -> Option<DiscreteMeasure> {
        match self {
            MuRepresentation::Discrete(d) => Some(DiscreteMeasure::uniform(d.clone())),
            MuRepresentation::ClosedForm(_) => None,
        }
    }

    pub fn potential(&self, kernel: &Kernel, x: &[f64]) -> f64 {
        match self {
            MuRepresentation::Discrete(d) => {
                let single = Design::from_flat(x.len(), x.to_vec()).expect("point has positive dimension");
                let px = kernel.prepare(&single);
                discrete_potentials(&px, &kernel.prepare(d))[0]
            }
            MuRepresentation::ClosedForm(u) => u.potential(x),
        }
    }

    /// Potentials at every point of `points`.
    pub fn potentials(&self, kernel: &Kernel, points: &Prepared) -> Vec<f64> {
        match self {
            MuRepresentation::Discrete(d) => discrete_potentials(points, &kernel.prepare(d)),
            MuRepresentation::ClosedForm(u) => {
                (0..points.len()).into_par_iter().map(|i| u.potential(points.points().point(i))).collect()
            }
        }
    }

    pub fn energy(&self, kernel: &Kernel) -> f64 {
        match self {
            MuRepresentation::Discrete(d) => {
                let p = kernel.prepare(d);
                ordered_mean(&discrete_potentials(&p, &p))
            }
            MuRepresentation::ClosedForm(u) => u.energy(kernel.dim()),
        }
    }
}

fn ordered_mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean kernel value against every point of `mu`, for each point of `at`.
fn discrete_potentials(at: &Prepared, mu: &Prepared) -> Vec<f64> {
    let q = mu.len() as f64;
    (0..at.len())
        .into_par_iter()
        .map(|i| (0..mu.len()).map(|j| at.eval(i, mu, j)).sum::<f64>() / q)
        .collect()
}

/// Row-major Gram matrix of `kernel` on `points`.
pub fn gram(kernel: &Kernel, points: &Design) -> Vec<f64> {
    gram_prepared(&kernel.prepare(points))
}

pub(crate) fn gram_prepared(p: &Prepared) -> Vec<f64> {
    let k = p.len();
    let mut g = vec![0.0; k * k];
    g.par_chunks_mut(k.max(1)).enumerate().for_each(|(i, row)| {
        for (j, v) in row.iter_mut().enumerate() {
            *v = p.eval_within(i, j);
        }
    });
    g
}

fn bilinear(left: &Prepared, wl: &[f64], right: &Prepared, wr: &[f64]) -> f64 {
    let rows: Vec<f64> = (0..left.len())
        .into_par_iter()
        .map(|i| wl[i] * (0..right.len()).map(|j| wr[j] * left.eval(i, right, j)).sum::<f64>())
        .collect();
    rows.iter().sum()
}

/// `sum_ij w_i w_j C(s_i, s_j)`.
pub fn energy(kernel: &Kernel, xi: &DiscreteMeasure) -> f64 {
    let p = kernel.prepare(&xi.support);
    bilinear(&p, &xi.weights, &p, &xi.weights)
}

pub fn cross_energy(kernel: &Kernel, xi: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
    let a = kernel.prepare(&xi.support);
    let b = kernel.prepare(&nu.support);
    bilinear(&a, &xi.weights, &b, &nu.weights)
}

/// `sum_i w_i C(x, s_i)`.
pub fn potential(kernel: &Kernel, xi: &DiscreteMeasure, x: &[f64]) -> f64 {
    xi.support.iter().zip(&xi.weights).map(|(s, w)| w * kernel.eval(x, s)).sum()
}

/// Squared MMD. Negative roundoff is reported as zero with `clamped` set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mmd {
    pub value: f64,
    pub raw: f64,
    pub clamped: bool,
}

impl Mmd {
    pub(crate) fn from_raw(raw: f64) -> Self {
        if raw < 0.0 {
            Mmd { value: 0.0, raw, clamped: true }
        } else {
            Mmd { value: raw, raw, clamped: false }
        }
    }
}

/// `w' C w - 2 w' p + E_C(mu)`.
pub fn mmd_squared(kernel: &Kernel, zeta: &DiscreteMeasure, mu: &MuRepresentation) -> Mmd {
    let p = kernel.prepare(&zeta.support);
    let quad = bilinear(&p, &zeta.weights, &p, &zeta.weights);
    let pot = mu.potentials(kernel, &p);
    let lin: f64 = zeta.weights.iter().zip(&pot).map(|(w, v)| w * v).sum();
    Mmd::from_raw(quad - 2.0 * lin + mu.energy(kernel))
}

/// Derivative of the squared MMD at `xi` in the direction of a Dirac mass
/// at `x`.
pub fn directional_derivative(kernel: &Kernel, xi: &DiscreteMeasure, mu: &MuRepresentation, x: &[f64]) -> f64 {
    let p = kernel.prepare(&xi.support);
    let pot = mu.potentials(kernel, &p);
    let cross_mu: f64 = xi.weights.iter().zip(&pot).map(|(w, v)| w * v).sum();
    2.0 * (potential(kernel, xi, x) - mu.potential(kernel, x) - energy(kernel, xi) + cross_mu)
}

/// `C^{-1} p + (1 - 1'C^{-1}p) / (1'C^{-1}1) C^{-1} 1`.
pub(crate) fn sum_to_one_weights(factor: &SpdFactor, p: &[f64]) -> Vec<f64> {
    let a = factor.solve(p);
    let b = factor.solve(&vec![1.0; p.len()]);
    let t = (1.0 - a.iter().sum::<f64>()) / b.iter().sum::<f64>();
    a.iter().zip(&b).map(|(x, y)| x + t * y).collect()
}

/// Weights summing to one that minimize the squared MMD on `support`.
pub fn optimal_weights_sum1(kernel: &Kernel, support: &Design, mu: &MuRepresentation) -> Result<Vec<f64>> {
    if support.is_empty() {
        return Err(Error::WeightSolve("empty support".into()));
    }
    let p = kernel.prepare(support);
    let factor = SpdFactor::new_strict(&gram_prepared(&p), support.len(), "weight support").map_err(|_| {
        Error::WeightSolve(
            "Gram matrix on the support is singular; use unconstrained weights (mn2) instead".into(),
        )
    })?;
    Ok(sum_to_one_weights(&factor, &mu.potentials(kernel, &p)))
}

/// Unconstrained optimal weights with the support points that were dropped
/// before solving.
#[derive(Clone, Debug, PartialEq)]
pub struct FreeWeights {
    pub weights: Vec<f64>,
    pub pruned: Vec<bool>,
}

impl FreeWeights {
    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

pub(crate) const ZERO_ROW: f64 = 1e-12;

/// `C^{-1} p` after dropping points whose Gram row vanishes and repeated
/// points; dropped points get weight 0.
pub fn optimal_weights_free(kernel: &Kernel, support: &Design, mu: &MuRepresentation) -> Result<FreeWeights> {
    let k = support.len();
    let p = kernel.prepare(support);
    let g = gram_prepared(&p);
    let mut pruned = vec![false; k];
    for i in 0..k {
        let zero_row = g[i * k..(i + 1) * k].iter().all(|v| v.abs() < ZERO_ROW);
        let repeat = (0..i).any(|j| !pruned[j] && support.point(j) == support.point(i));
        pruned[i] = zero_row || repeat;
    }
    let keep: Vec<usize> = (0..k).filter(|&i| !pruned[i]).collect();
    let mut weights = vec![0.0; k];
    if keep.is_empty() {
        return Ok(FreeWeights { weights, pruned });
    }
    let r = keep.len();
    let mut sub = vec![0.0; r * r];
    for (a, &i) in keep.iter().enumerate() {
        for (b, &j) in keep.iter().enumerate() {
            sub[a * r + b] = g[i * k + j];
        }
    }
    let factor = SpdFactor::new_strict(&sub, r, "weight support")
        .map_err(|_| Error::WeightSolve("Gram matrix on the pruned support is singular".into()))?;
    let pot = mu.potentials(kernel, &p);
    let rhs: Vec<f64> = keep.iter().map(|&i| pot[i]).collect();
    for (&i, w) in keep.iter().zip(factor.solve(&rhs)) {
        weights[i] = w;
    }
    Ok(FreeWeights { weights, pruned })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Matern32;
    use crate::testbed::sobol_points;
    use valdesign_oracles::{kkt_sum_to_one, least_squares_weights, SplitMix};

    fn random_measure(rng: &mut SplitMix, k: usize, d: usize) -> DiscreteMeasure {
        let pts = rng.points(k, d);
        let w = (0..k).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        DiscreteMeasure::new(Design::from_points(d, &pts).unwrap(), w).unwrap()
    }

    fn matern(d: usize, theta: f64) -> Kernel {
        Kernel::Matern(Matern32::isotropic(d, theta).unwrap())
    }

    #[test]
    fn energy_matches_double_loop() {
        let mut rng = SplitMix(3);
        let k = matern(2, 4.0);
        let xi = random_measure(&mut rng, 10, 2);
        let mut want = 0.0;
        for i in 0..10 {
            for j in 0..10 {
                want += xi.weights[i] * xi.weights[j] * k.eval(xi.support.point(i), xi.support.point(j));
            }
        }
        assert!((energy(&k, &xi) - want).abs() < 1e-12);
        assert!((cross_energy(&k, &xi, &xi) - energy(&k, &xi)).abs() < 1e-12);
        let one = DiscreteMeasure::uniform(Design::from_scalars(&[0.3]));
        let k1 = matern(1, 4.0);
        assert_eq!(energy(&k1, &one), 1.0);
        assert_eq!(potential(&k1, &one, &[0.3]), 1.0);
        let pair = DiscreteMeasure::new(Design::from_scalars(&[0.2, 0.6]), vec![1.0, -1.0]).unwrap();
        assert!(energy(&k1, &pair) > 0.0);
    }

    #[test]
    fn convexity_identity() {
        let mut rng = SplitMix(17);
        let k = matern(3, 2.5);
        for _ in 0..5 {
            let xi = random_measure(&mut rng, 6, 3);
            let nu = random_measure(&mut rng, 4, 3);
            let a = rng.uniform();
            let lhs = (1.0 - a) * energy(&k, &xi) + a * energy(&k, &nu) - energy(&k, &xi.mix(a, &nu).unwrap());
            let rhs = a * (1.0 - a) * energy(&k, &xi.minus(&nu).unwrap());
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn mmd_matches_signed_measure_energy() {
        let mut rng = SplitMix(5);
        let k = matern(2, 3.0);
        let q = sobol_points(2, 128, 1, true).unwrap();
        let mu = MuRepresentation::discrete(q.clone()).unwrap();
        let zeta = DiscreteMeasure::uniform(Design::from_points(2, &rng.points(7, 2)).unwrap());
        let diff = zeta.minus(&mu.as_measure().unwrap()).unwrap();
        let m = mmd_squared(&k, &zeta, &mu);
        assert!((m.value - energy(&k, &diff)).abs() < 1e-12);
        let same = mmd_squared(&k, &DiscreteMeasure::uniform(q), &mu);
        assert!(same.value.abs() < 1e-12);
        // one point: C(z,z) - 2 P(z) + E
        let z = [0.4, 0.7];
        let single = DiscreteMeasure::uniform(Design::from_points(2, &[z]).unwrap());
        let want = 1.0 - 2.0 * mu.potential(&k, &z) + mu.energy(&k);
        assert!((mmd_squared(&k, &single, &mu).raw - want).abs() < 1e-12);
    }

    #[test]
    fn directional_derivative_by_finite_difference() {
        let mut rng = SplitMix(8);
        let k = matern(2, 3.0);
        let mu = MuRepresentation::discrete(sobol_points(2, 64, 2, true).unwrap()).unwrap();
        let mu_m = mu.as_measure().unwrap();
        let xi = DiscreteMeasure::uniform(Design::from_points(2, &rng.points(5, 2)).unwrap());
        let x = [0.25, 0.8];
        let dirac = DiscreteMeasure::uniform(Design::from_points(2, &[x]).unwrap());
        let a = 1e-6;
        let fd = (energy(&k, &xi.mix(a, &dirac).unwrap().minus(&mu_m).unwrap())
            - energy(&k, &xi.minus(&mu_m).unwrap()))
            / a;
        let dd = directional_derivative(&k, &xi, &mu, &x);
        assert!((fd - dd).abs() < 1e-4 * dd.abs().max(1e-3), "{fd} vs {dd}");
        assert!(directional_derivative(&k, &dirac, &mu, &x).abs() < 1e-12);
    }

    fn gram_rows(k: &Kernel, s: &Design) -> Vec<Vec<f64>> {
        let g = gram(k, s);
        g.chunks(s.len()).map(|r| r.to_vec()).collect()
    }

    #[test]
    fn weights_against_oracles() {
        let mut rng = SplitMix(21);
        let k = matern(2, 5.0);
        let mu = MuRepresentation::discrete(sobol_points(2, 256, 4, true).unwrap()).unwrap();
        for _ in 0..5 {
            let s = Design::from_points(2, &rng.points(8, 2)).unwrap();
            let p = mu.potentials(&k, &k.prepare(&s));
            let c = gram_rows(&k, &s);
            let hat = optimal_weights_sum1(&k, &s, &mu).unwrap();
            let want = kkt_sum_to_one(&c, &p).unwrap();
            for (a, b) in hat.iter().zip(&want) {
                assert!((a - b).abs() < 1e-8);
            }
            assert!((hat.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            let free = optimal_weights_free(&k, &s, &mu).unwrap();
            let want = least_squares_weights(&c, &p).unwrap();
            for (a, b) in free.weights.iter().zip(&want) {
                assert!((a - b).abs() < 1e-8);
            }
            assert!(free.pruned.iter().all(|p| !p));
        }
        let one = Design::from_scalars(&[0.3]);
        let k1 = matern(1, 5.0);
        let mu1 = MuRepresentation::discrete(sobol_points(1, 64, 4, true).unwrap()).unwrap();
        assert_eq!(optimal_weights_sum1(&k1, &one, &mu1).unwrap(), vec![1.0]);
        let free = optimal_weights_free(&k1, &one, &mu1).unwrap();
        assert!((free.weights[0] - mu1.potential(&k1, &[0.3])).abs() < 1e-14);
    }

    #[test]
    fn validation_kernel_support_meeting_design() {
        let base = Matern32::product(2, 3.0).unwrap();
        let xn = sobol_points(2, 6, 9, true).unwrap();
        let kbar = Kernel::validation(base, xn.clone()).unwrap();
        let mu = MuRepresentation::closed_form(&kbar).unwrap();
        let mut s = sobol_points(2, 5, 10, true).unwrap();
        s.push(xn.point(2));
        s.push(s.point(0).to_vec().as_slice());
        assert!(matches!(optimal_weights_sum1(&kbar, &s, &mu), Err(Error::WeightSolve(_))));
        let free = optimal_weights_free(&kbar, &s, &mu).unwrap();
        assert_eq!(free.pruned, vec![false, false, false, false, false, true, true]);
        assert_eq!(free.weights[5], 0.0);
        assert_eq!(free.weights[6], 0.0);
    }
}
