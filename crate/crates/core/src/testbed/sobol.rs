//! Sobol' sequences with Joe–Kuo direction numbers and seeded nested
//! uniform (Owen) scrambling of the base-2 digits.

use std::sync::OnceLock;

use crate::design::Design;
use crate::error::{Error, Result};

const DIRECTION_DATA: &str = include_str!("../../data/new-joe-kuo-6.21201.txt");

/// Highest dimension covered by the bundled direction-number table.
pub const MAX_SOBOL_DIM: usize = 20;

const BITS: usize = 32;

fn directions() -> &'static Vec<[u32; BITS]> {
    static TABLE: OnceLock<Vec<[u32; BITS]>> = OnceLock::new();
    TABLE.get_or_init(|| parse_directions(DIRECTION_DATA).expect("bundled direction numbers are valid"))
}

/// Parses the `d s a m_i...` text format (header line first) into direction
/// integers `v_k = m_k 2^{32-k}`, one row per dimension starting with the
/// van der Corput dimension.
fn parse_directions(text: &str) -> Result<Vec<[u32; BITS]>> {
    let mut out = Vec::new();
    let mut first = [0u32; BITS];
    for (k, v) in first.iter_mut().enumerate() {
        *v = 1 << (BITS - 1 - k);
    }
    out.push(first);
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let fields: Vec<u64> = line
            .split_whitespace()
            .map(|f| f.parse::<u64>().map_err(|e| Error::Parse(format!("direction numbers: {e}"))))
            .collect::<Result<_>>()?;
        if fields.len() < 3 || fields.len() != 3 + fields[1] as usize {
            return Err(Error::Parse(format!("malformed direction-number line: {line}")));
        }
        let s = fields[1] as usize;
        let a = fields[2] as u32;
        let m = &fields[3..];
        let mut v = [0u32; BITS];
        for k in 0..s.min(BITS) {
            v[k] = (m[k] as u32) << (BITS - 1 - k);
        }
        for k in s..BITS {
            let mut vk = v[k - s] ^ (v[k - s] >> s);
            for j in 1..s {
                if (a >> (s - 1 - j)) & 1 == 1 {
                    vk ^= v[k - j];
                }
            }
            v[k] = vk;
        }
        out.push(v);
    }
    Ok(out)
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn node_hash(seed: u64, dim: usize, depth: usize, prefix: u32) -> u64 {
    let mut h = mix64(seed ^ 0x9E37_79B9_7F4A_7C15);
    h = mix64(h ^ (dim as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93));
    h = mix64(h ^ ((depth as u64) << 32 | prefix as u64));
    h
}

/// Nested uniform scrambling: digit `k` is flipped according to a random
/// bit attached to the binary-tree node reached by the first `k` digits.
fn owen_scramble(x: u32, seed: u64, dim: usize) -> (u32, u32) {
    let mut out = 0u32;
    for depth in 0..BITS {
        let prefix = if depth == 0 { 0 } else { x >> (BITS - depth) };
        let flip = (node_hash(seed, dim, depth, prefix) & 1) as u32;
        let bit = (x >> (BITS - 1 - depth)) & 1;
        out |= (bit ^ flip) << (BITS - 1 - depth);
    }
    // digits below 2^-32 are uniform within the leaf interval
    let tail = (node_hash(seed, dim, BITS, x) >> 44) as u32;
    (out, tail)
}

/// A deterministic Sobol' point stream in `[0, 1)^dim`.
#[derive(Clone, Debug)]
pub struct SobolStream {
    dim: usize,
    scramble_seed: Option<u64>,
    cursor: u64,
}

impl SobolStream {
    pub fn new(dim: usize, scramble_seed: Option<u64>) -> Result<Self> {
        if dim == 0 || dim > MAX_SOBOL_DIM {
            return Err(Error::Parameter(format!(
                "Sobol' dimension must be in 1..={MAX_SOBOL_DIM}, got {dim}"
            )));
        }
        Ok(SobolStream { dim, scramble_seed, cursor: 0 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cursor(&self) -> u64 {
        self.cursor
    }

    /// Copy of this stream positioned at `index`.
    pub fn at(&self, index: u64) -> Self {
        SobolStream { cursor: index, ..self.clone() }
    }

    pub fn skip(&mut self, count: u64) {
        self.cursor += count;
    }

    /// Point number `index` of the sequence, in Gray-code order.
    pub fn point(&self, index: u64, out: &mut [f64]) {
        assert!(index < 1 << BITS, "Sobol' index beyond 2^32");
        let table = directions();
        for (j, o) in out.iter_mut().enumerate().take(self.dim) {
            let v = &table[j];
            let mut x = 0u32;
            let mut i = index ^ (index >> 1);
            let mut k = 0;
            while i != 0 {
                if i & 1 == 1 {
                    x ^= v[k];
                }
                i >>= 1;
                k += 1;
            }
            *o = match self.scramble_seed {
                None => x as f64 / 4_294_967_296.0,
                Some(seed) => {
                    let (s, tail) = owen_scramble(x, seed, j);
                    (s as f64 + tail as f64 / 1_048_576.0) / 4_294_967_296.0
                }
            };
        }
    }

    /// Next `count` points.
    pub fn take(&mut self, count: usize) -> Design {
        let mut coords = vec![0.0; count * self.dim];
        for (i, p) in coords.chunks_exact_mut(self.dim).enumerate() {
            self.point(self.cursor + i as u64, p);
        }
        self.cursor += count as u64;
        Design::from_flat(self.dim, coords).expect("dim > 0")
    }
}

/// First `count` points of the (optionally scrambled) sequence.
pub fn sobol_points(dim: usize, count: usize, seed: u64, scrambled: bool) -> Result<Design> {
    if count == 0 {
        return Err(Error::Parameter("count must be at least 1".into()));
    }
    let mut s = SobolStream::new(dim, scrambled.then_some(seed))?;
    Ok(s.take(count))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unscrambled_matches_reference_values() {
        // reference values from an independent Joe–Kuo implementation,
        // coordinates 1, 2, 5, 10 and 20
        let cases: [(u64, [f64; 5]); 6] = [
            (1, [0.5, 0.5, 0.5, 0.5, 0.5]),
            (2, [0.75, 0.25, 0.75, 0.75, 0.25]),
            (5, [0.875, 0.875, 0.875, 0.125, 0.625]),
            (100, [0.4140625, 0.2578125, 0.8828125, 0.6953125, 0.3359375]),
            (777, [0.6923828125, 0.9365234375, 0.6357421875, 0.3232421875, 0.7529296875]),
            (1023, [0.0009765625, 0.7529296875, 0.1865234375, 0.8505859375, 0.3193359375]),
        ];
        let s = SobolStream::new(20, None).unwrap();
        let mut p = vec![0.0; 20];
        s.point(0, &mut p);
        assert!(p.iter().all(|&v| v == 0.0));
        for (i, want) in cases {
            s.point(i, &mut p);
            let got = [p[0], p[1], p[4], p[9], p[19]];
            assert_eq!(got, want, "index {i}");
        }
    }

    fn elementary_boxes_balanced(pts: &Design, m: u32) -> bool {
        // every split of 2^-m volume into 2^-a x 2^-b boxes holds count / 2^m points
        let n = pts.len();
        let per_box = n >> m;
        (0..=m).all(|a| {
            let b = m - a;
            let mut counts = vec![0usize; 1 << m];
            for p in pts.iter() {
                let i = (p[0] * (1u64 << a) as f64) as usize;
                let j = (p[1] * (1u64 << b) as f64) as usize;
                counts[(i << b) | j] += 1;
            }
            counts.iter().all(|&c| c == per_box)
        })
    }

    #[test]
    fn digital_net_property() {
        let pts = sobol_points(2, 1024, 0, false).unwrap();
        assert!(elementary_boxes_balanced(&pts, 6));
        let scrambled = sobol_points(2, 1024, 42, true).unwrap();
        assert!(elementary_boxes_balanced(&scrambled, 6));
    }

    #[test]
    fn scrambled_is_deterministic_and_in_range() {
        let a = sobol_points(3, 500, 7, true).unwrap();
        let b = sobol_points(3, 500, 7, true).unwrap();
        assert_eq!(a, b);
        let c = sobol_points(3, 500, 8, true).unwrap();
        assert_ne!(a, c);
        assert!(a.coords().iter().all(|&v| (0.0..1.0).contains(&v)));
        let mut s = SobolStream::new(3, Some(7)).unwrap();
        let head = s.take(200);
        let tail = s.take(300);
        assert_eq!(head.concat(&tail).unwrap(), a);
        assert_eq!(s.at(200).take(300), tail);
    }

    #[test]
    fn dimension_limits() {
        assert!(SobolStream::new(0, None).is_err());
        assert!(SobolStream::new(21, None).is_err());
        assert!(sobol_points(2, 0, 0, false).is_err());
        assert!(parse_directions("hdr\n2 1 0\n").is_err());
    }
}
