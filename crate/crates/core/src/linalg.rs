//! Cholesky factorization of symmetric positive-definite Gram matrices.

use crate::error::{Error, Result};

/// Relative jitter levels (times `trace / n`) tried in turn.
pub const JITTER_LEVELS: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

/// Lower Cholesky factor `L` of `A + jitter I`, stored packed by rows so
/// that appending a row and column (bordering) is a push.
#[derive(Clone, Debug)]
pub struct SpdFactor {
    n: usize,
    l: Vec<f64>,
    jitter: f64,
}

#[inline]
fn row_start(i: usize) -> usize {
    i * (i + 1) / 2
}

impl SpdFactor {
    pub fn empty() -> Self {
        SpdFactor { n: 0, l: Vec::new(), jitter: 0.0 }
    }

    /// Factorizes the row-major `n x n` matrix `a`, escalating the diagonal
    /// jitter through [`JITTER_LEVELS`]. `label` names the design in errors.
    pub fn new(a: &[f64], n: usize, label: &str) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        if n == 0 {
            return Ok(SpdFactor::empty());
        }
        let scale = (0..n).map(|i| a[i * n + i]).sum::<f64>() / n as f64;
        for level in JITTER_LEVELS {
            let jitter = level * scale;
            if let Some(l) = cholesky_packed(a, n, jitter) {
                return Ok(SpdFactor { n, l, jitter });
            }
        }
        Err(Error::Factorization {
            design: label.to_string(),
            max_jitter: JITTER_LEVELS[JITTER_LEVELS.len() - 1] * scale,
        })
    }

    /// Factorizes without jitter, rejecting pivots below `1e-13` times the
    /// largest diagonal entry.
    pub fn new_strict(a: &[f64], n: usize, label: &str) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        let top = (0..n).map(|i| a[i * n + i]).fold(0.0, f64::max);
        match cholesky_packed(a, n, 0.0) {
            Some(l) if (0..n).all(|i| l[row_start(i) + i].powi(2) > 1e-13 * top) => {
                Ok(SpdFactor { n, l, jitter: 0.0 })
            }
            _ => Err(Error::Factorization { design: label.to_string(), max_jitter: 0.0 }),
        }
    }

    /// Factorizes the Gram matrix built from `entry(i, j)` for `i, j < n`.
    pub fn from_fn<F: Fn(usize, usize) -> f64>(n: usize, label: &str, entry: F) -> Result<Self> {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = entry(i, j);
                a[i * n + j] = v;
                a[j * n + i] = v;
            }
        }
        SpdFactor::new(&a, n, label)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Row `i` of `L` up to and including the diagonal.
    pub(crate) fn row(&self, i: usize) -> &[f64] {
        &self.l[row_start(i)..row_start(i) + i + 1]
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.l[row_start(i) + j]
    }

    /// `L^{-1} b` (forward substitution).
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_lower_in_place(&mut x);
        x
    }

    pub fn solve_lower_in_place(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for i in 0..self.n {
            let row = &self.l[row_start(i)..row_start(i) + i + 1];
            let s: f64 = row[..i].iter().zip(&x[..i]).map(|(a, b)| a * b).sum();
            x[i] = (x[i] - s) / row[i];
        }
    }

    /// `L^{-T} b` (backward substitution).
    pub fn solve_upper_in_place(&self, x: &mut [f64]) {
        for i in (0..self.n).rev() {
            x[i] /= self.at(i, i);
            let xi = x[i];
            let row = &self.l[row_start(i)..row_start(i) + i];
            for (xj, lij) in x[..i].iter_mut().zip(row) {
                *xj -= lij * xi;
            }
        }
    }

    /// `A^{-1} b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_lower_in_place(&mut x);
        self.solve_upper_in_place(&mut x);
        x
    }

    /// Dense `A^{-1}`, row-major. Only used where the diagonal of the
    /// inverse is needed.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv[i * n + j] = col[i];
            }
        }
        inv
    }

    /// `b' A^{-1} b`.
    pub fn quad_form(&self, b: &[f64]) -> f64 {
        let y = self.solve_lower(b);
        y.iter().map(|v| v * v).sum()
    }

    /// Borders the factor with a new row/column `(col, diag)` of the
    /// underlying matrix. Returns `false` (factor unchanged) when the new
    /// pivot is not safely positive.
    pub fn append(&mut self, col: &[f64], diag: f64) -> bool {
        debug_assert_eq!(col.len(), self.n);
        let mut row = self.solve_lower(col);
        let d = diag + self.jitter - row.iter().map(|v| v * v).sum::<f64>();
        if !(d > 1e-14 * diag.abs().max(f64::MIN_POSITIVE)) {
            return false;
        }
        row.push(d.sqrt());
        self.l.extend_from_slice(&row);
        self.n += 1;
        true
    }
}

fn cholesky_packed(a: &[f64], n: usize, jitter: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * (n + 1) / 2];
    for i in 0..n {
        let ri = row_start(i);
        for j in 0..=i {
            let rj = row_start(j);
            let s: f64 = (0..j).map(|k| l[ri + k] * l[rj + k]).sum();
            if i == j {
                let d = a[i * n + i] + jitter - s;
                if !(d > 0.0) || !d.is_finite() {
                    return None;
                }
                l[ri + i] = d.sqrt();
            } else {
                l[ri + j] = (a[i * n + j] - s) / l[rj + j];
            }
        }
    }
    Some(l)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd3() -> Vec<f64> {
        vec![4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0]
    }

    #[test]
    fn solve_matches_matrix() {
        let a = spd3();
        let f = SpdFactor::new(&a, 3, "test").unwrap();
        assert_eq!(f.jitter(), 0.0);
        let x = f.solve(&[1.0, 2.0, 3.0]);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[i * 3 + j] * x[j]).sum();
            assert!((r - (i + 1) as f64).abs() < 1e-12);
        }
        let inv = f.inverse();
        assert!((inv[1] - inv[3]).abs() < 1e-14);
    }

    #[test]
    fn append_equals_full_factorization() {
        let a = spd3();
        let full = SpdFactor::new(&a, 3, "full").unwrap();
        let mut inc = SpdFactor::new(&[4.0, 2.0, 2.0, 5.0], 2, "sub").unwrap();
        assert!(inc.append(&[0.6, 1.0], 3.0));
        for (x, y) in full.l.iter().zip(&inc.l) {
            assert!((x - y).abs() < 1e-14);
        }
        // duplicate row makes the bordered matrix singular
        assert!(!inc.append(&[4.0, 2.0, 0.6], 4.0));
        assert_eq!(inc.dim(), 3);
    }

    #[test]
    fn strict_rejects_tiny_pivots() {
        let a = vec![1.0, 0.0, 0.0, 1e-20];
        assert!(SpdFactor::new_strict(&a, 2, "s").is_err());
        assert!(SpdFactor::new_strict(&spd3(), 3, "s").is_ok());
    }

    #[test]
    fn singular_matrix_gets_jitter_or_fails() {
        let a = vec![1.0, 1.0, 1.0, 1.0];
        let f = SpdFactor::new(&a, 2, "dup").unwrap();
        assert!(f.jitter() > 0.0);
        let bad = vec![1.0, 2.0, 2.0, 1.0];
        match SpdFactor::new(&bad, 2, "indefinite") {
            Err(Error::Factorization { design, .. }) => assert_eq!(design, "indefinite"),
            other => panic!("expected factorization error, got {other:?}"),
        }
    }
}
