//! Point sets in `[0, 1]^d`.

use crate::error::{Error, Result};

/// An ordered list of points in `[0, 1]^d`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Design {
    dim: usize,
    coords: Vec<f64>,
}

impl Design {
    pub fn empty(dim: usize) -> Self {
        Design { dim, coords: Vec::new() }
    }

    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Parameter("dimension must be positive".into()));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: coords.len() % dim });
        }
        Ok(Design { dim, coords })
    }

    pub fn from_points<P: AsRef<[f64]>>(dim: usize, points: &[P]) -> Result<Self> {
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
            }
            coords.extend_from_slice(p);
        }
        Design::from_flat(dim, coords)
    }

    /// One-dimensional design from scalar locations.
    pub fn from_scalars(xs: &[f64]) -> Self {
        Design { dim: 1, coords: xs.to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn push(&mut self, p: &[f64]) {
        debug_assert_eq!(p.len(), self.dim);
        self.coords.extend_from_slice(p);
    }

    /// First `count` points.
    pub fn prefix(&self, count: usize) -> Design {
        Design { dim: self.dim, coords: self.coords[..count * self.dim].to_vec() }
    }

    /// Points `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Design {
        Design { dim: self.dim, coords: self.coords[start * self.dim..end * self.dim].to_vec() }
    }

    pub fn select(&self, idx: &[usize]) -> Design {
        let mut out = Design::empty(self.dim);
        for &i in idx {
            out.push(self.point(i));
        }
        out
    }

    pub fn concat(&self, other: &Design) -> Result<Design> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        Ok(Design { dim: self.dim, coords })
    }

    /// Index of the first point with exactly these coordinates.
    pub fn position(&self, p: &[f64]) -> Option<usize> {
        self.iter().position(|q| q == p)
    }

    pub fn check_unit_cube(&self) -> Result<()> {
        match self.coords.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            Some(&value) => Err(Error::Domain { value, domain: "[0, 1]" }),
            None => Ok(()),
        }
    }

    pub(crate) fn expect_dim(&self, dim: usize) -> Result<()> {
        if self.dim != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: self.dim });
        }
        Ok(())
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Full factorial grid with `levels` equally spaced values per axis,
/// `{0, 1/(levels-1), ..., 1}`.
pub fn full_factorial(dim: usize, levels: usize) -> Design {
    let total = levels.pow(dim as u32);
    let step = if levels > 1 { 1.0 / (levels - 1) as f64 } else { 0.0 };
    let mut out = Design::empty(dim);
    let mut p = vec![0.0; dim];
    for mut idx in 0..total {
        for v in p.iter_mut() {
            *v = (idx % levels) as f64 * step;
            idx /= levels;
        }
        out.push(&p);
    }
    out
}
