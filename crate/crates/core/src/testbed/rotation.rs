use rand::Rng;
use rand_distr::StandardNormal;

use super::seeded_rng;

/// Dense row-major square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Matrix { n, data }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        let n = self.n;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.at(i, k);
                for j in 0..n {
                    data[i * n + j] += a * other.at(k, j);
                }
            }
        }
        Matrix { n, data }
    }

    pub fn transpose(&self) -> Matrix {
        let n = self.n;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                data[j * n + i] = self.at(i, j);
            }
        }
        Matrix { n, data }
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..self.n).map(|j| self.at(i, j) * x[j]).sum();
        }
    }
}

/// Random orthogonal matrix: a random planar rotation/reflection for
/// `d = 2`, then recursively a Householder reflection mapping `e_1` to a
/// uniform unit vector times `diag(1, Q(d-1))`. `d = 1` gives `[±1]`.
pub fn random_rotation_with<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Matrix {
    match d {
        0 => Matrix { n: 0, data: vec![] },
        1 => Matrix { n: 1, data: vec![if rng.random_bool(0.5) { 1.0 } else { -1.0 }] },
        2 => {
            let t = rng.random::<f64>() * std::f64::consts::TAU;
            let a = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let (s, c) = t.sin_cos();
            Matrix { n: 2, data: vec![c, -a * s, s, a * c] }
        }
        _ => {
            let inner = random_rotation_with(d - 1, rng);
            let mut block = Matrix::identity(d);
            for i in 1..d {
                for j in 1..d {
                    block.data[i * d + j] = inner.at(i - 1, j - 1);
                }
            }
            let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let mut w: Vec<f64> = v.iter().map(|x| -x / norm).collect();
            w[0] += 1.0;
            let wn = w.iter().map(|x| x * x).sum::<f64>();
            let mut house = Matrix::identity(d);
            if wn > 1e-300 {
                for i in 0..d {
                    for j in 0..d {
                        house.data[i * d + j] -= 2.0 * w[i] * w[j] / wn;
                    }
                }
            }
            house.mul(&block)
        }
    }
}

pub fn random_rotation(d: usize, seed: u64) -> Matrix {
    random_rotation_with(d, &mut seeded_rng(seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_for_all_sizes() {
        for d in 2..=10 {
            for seed in 0..5 {
                let q = random_rotation(d, seed);
                let qtq = q.transpose().mul(&q);
                for i in 0..d {
                    for j in 0..d {
                        let want = if i == j { 1.0 } else { 0.0 };
                        assert!((qtq.at(i, j) - want).abs() < 1e-10);
                    }
                    let col: f64 = (0..d).map(|k| q.at(k, i).powi(2)).sum();
                    assert!((col - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn first_column_centered() {
        let mut rng = seeded_rng(2024);
        let samples = 2000;
        let mut mean = [0.0; 3];
        for _ in 0..samples {
            let q = random_rotation_with(3, &mut rng);
            for (i, m) in mean.iter_mut().enumerate() {
                *m += q.at(i, 0) / samples as f64;
            }
        }
        // each coordinate of a uniform unit vector in R^3 has variance 1/3
        let sigma = (1.0 / 3.0 / samples as f64).sqrt();
        for m in mean {
            assert!(m.abs() < 3.0 * sigma, "{mean:?}");
        }
    }
}
