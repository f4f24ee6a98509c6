use crate::error::{Error, Result};

pub const MAX_LEGENDRE_DEGREE: usize = 12;

/// Legendre polynomial of degree `i`, shifted to `[0, 1]` and normalized so
/// that `∫_0^1 P_i P_j = δ_ij`. Evaluates polynomially outside `[0, 1]`.
pub fn legendre(i: usize, x: f64) -> Result<f64> {
    if i > MAX_LEGENDRE_DEGREE {
        return Err(Error::Parameter(format!(
            "Legendre degree {i} exceeds {MAX_LEGENDRE_DEGREE}"
        )));
    }
    let mut out = [0.0; MAX_LEGENDRE_DEGREE + 1];
    legendre_all(i, x, &mut out);
    Ok(out[i])
}

/// Values of degrees `0..=max_degree` at `x` written into `out`.
pub(crate) fn legendre_all(max_degree: usize, x: f64, out: &mut [f64]) {
    let t = 2.0 * x - 1.0;
    let (mut p0, mut p1) = (1.0, t);
    out[0] = 1.0;
    if max_degree >= 1 {
        out[1] = 3f64.sqrt() * t;
    }
    for k in 1..max_degree {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * t * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
        out[k + 1] = (2.0 * kf + 3.0).sqrt() * p2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use valdesign_oracles::gauss_legendre_unit;

    fn printed(i: usize, x: f64) -> f64 {
        match i {
            0 => 1.0,
            1 => 3f64.sqrt() * (2.0 * x - 1.0),
            2 => 5f64.sqrt() * (6.0 * x * x - 6.0 * x + 1.0),
            3 => 7f64.sqrt() * (20.0 * x.powi(3) - 30.0 * x * x + 12.0 * x - 1.0),
            4 => 3.0 * (70.0 * x.powi(4) - 140.0 * x.powi(3) + 90.0 * x * x - 20.0 * x + 1.0),
            _ => unreachable!(),
        }
    }

    #[test]
    fn low_degrees() {
        assert_eq!(legendre(0, 0.3).unwrap(), 1.0);
        assert_eq!(legendre(1, 0.5).unwrap(), 0.0);
        assert!((legendre(2, 0.5).unwrap() + 5f64.sqrt() / 2.0).abs() < 1e-15);
        for i in 0..=4 {
            for k in 0..=100 {
                let x = k as f64 / 100.0;
                assert!((legendre(i, x).unwrap() - printed(i, x)).abs() < 1e-12);
            }
        }
        assert!(legendre(13, 0.5).is_err());
    }

    #[test]
    fn orthonormal() {
        let (nodes, weights) = gauss_legendre_unit(64);
        for i in 0..=6 {
            for j in 0..=6 {
                let v: f64 = nodes
                    .iter()
                    .zip(&weights)
                    .map(|(&x, &w)| w * legendre(i, x).unwrap() * legendre(j, x).unwrap())
                    .sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-10, "({i}, {j}): {v}");
            }
        }
    }
}
