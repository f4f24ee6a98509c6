//! Reference computations for the test suites.
//!
//! Nothing here shares code with the library: integrals are evaluated by
//! adaptive Gauss–Kronrod refinement, linear systems by dense Gaussian
//! elimination with partial pivoting. Slow and simple on purpose.

// 15-point Kronrod nodes on [-1, 1] (non-negative half) and weights; the
// 7-point Gauss rule uses every other node.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (value, err) = gk15(f, a, b);
    if err <= tol || depth == 0 || (b - a).abs() < 1e-14 {
        return value;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, 0.5 * tol, depth - 1) + adapt(f, m, b, 0.5 * tol, depth - 1)
}

/// Integral of `f` over `[a, b]` with absolute tolerance `tol`. `breaks`
/// are interior points where `f` may have a kink; each sub-interval is
/// integrated separately.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64 {
    let mut knots = vec![a];
    knots.extend(breaks.iter().copied().filter(|&t| t > a && t < b));
    knots.push(b);
    knots.sort_by(|x, y| x.partial_cmp(y).unwrap());
    knots.dedup();
    let pieces = (knots.len() - 1) as f64;
    knots
        .windows(2)
        .map(|w| adapt(&f, w[0], w[1], tol / pieces, 40))
        .sum()
}

/// Double integral over `[0, 1]²`. `outer_breaks` are kinks in the outer
/// variable; `inner_breaks(s)` gives the kinks of the inner integrand.
pub fn integrate_unit_square<F, B>(f: F, outer_breaks: &[f64], inner_breaks: B, tol: f64) -> f64
where
    F: Fn(f64, f64) -> f64,
    B: Fn(f64) -> Vec<f64>,
{
    integrate(
        |s| {
            let br = inner_breaks(s);
            integrate(|t| f(s, t), 0.0, 1.0, &br, 0.1 * tol)
        },
        0.0,
        1.0,
        outer_breaks,
        tol,
    )
}

/// Matérn 3/2 kernel written directly from its definition, with the
/// `sqrt(3)` scaling of the inverse correlation length.
pub fn matern32(theta: f64, r: f64) -> f64 {
    let a = 3f64.sqrt() * theta * r.abs();
    (1.0 + a) * (-a).exp()
}

/// Same kernel parameterized by its rate (`(1 + rate*r) exp(-rate*r)`).
pub fn matern32_rate(rate: f64, r: f64) -> f64 {
    let a = rate * r.abs();
    (1.0 + a) * (-a).exp()
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
/// `a` is row-major `n x n`. Returns `None` when a pivot vanishes.
pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| {
            let mut r = row.clone();
            r.push(bi);
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        for row in col + 1..n {
            let factor = m[row][col] / m[col][col];
            for k in col..=n {
                m[row][k] -= factor * m[col][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = m[i][n];
        for k in i + 1..n {
            s -= m[i][k] * x[k];
        }
        x[i] = s / m[i][i];
    }
    Some(x)
}

/// Minimizes `w' C w - 2 w' p` subject to `sum(w) = 1` by solving the full
/// KKT system `[[C, 1], [1', 0]] [w; lambda] = [p; 1]`.
pub fn kkt_sum_to_one(c: &[Vec<f64>], p: &[f64]) -> Option<Vec<f64>> {
    let k = p.len();
    let mut a = Vec::with_capacity(k + 1);
    for i in 0..k {
        let mut row = c[i].clone();
        row.push(1.0);
        a.push(row);
    }
    let mut last = vec![1.0; k];
    last.push(0.0);
    a.push(last);
    let mut rhs = p.to_vec();
    rhs.push(1.0);
    let sol = dense_solve(&a, &rhs)?;
    Some(sol[..k].to_vec())
}

/// Unconstrained minimizer of `w' C w - 2 w' p` via the normal equations.
pub fn least_squares_weights(c: &[Vec<f64>], p: &[f64]) -> Option<Vec<f64>> {
    dense_solve(c, p)
}

/// `n`-point Gauss–Legendre nodes and weights on `[0, 1]`, by Newton
/// iteration on the Legendre three-term recurrence.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Tiny deterministic generator for test inputs (SplitMix64).
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn points(&mut self, count: usize, dim: usize) -> Vec<Vec<f64>> {
        (0..count).map(|_| (0..dim).map(|_| self.uniform()).collect()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_polynomial_and_kink() {
        let v = integrate(|x| x * x, 0.0, 1.0, &[], 1e-13);
        assert!((v - 1.0 / 3.0).abs() < 1e-13);
        let v = integrate(|x| (x - 0.3).abs(), 0.0, 1.0, &[0.3], 1e-13);
        assert!((v - (0.045 + 0.245)).abs() < 1e-13);
    }

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        let (x, w) = gauss_legendre_unit(8);
        let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(9)).sum();
        assert!((v - 0.1).abs() < 1e-14);
    }

    #[test]
    fn dense_solve_small() {
        let a = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let x = dense_solve(&a, &[3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14 && (x[1] - 1.4).abs() < 1e-14);
    }
}
