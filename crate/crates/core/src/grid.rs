//! Uniform space-time grid on `(x_lo, x_hi) × (t_lo, t_hi)` and the scalar
//! fields living on it.
//!
//! Space has `nx` interior nodes plus the two boundary nodes, with
//! `dx = (x_hi − x_lo)/(nx + 1)`. Time has `nt + 1` levels with
//! `dt = (t_hi − t_lo)/nt`. Fields are stored row-major with x fastest.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::Result;

/// One of the two boundary points of the interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// Outward normal direction (±1).
    pub fn normal(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }
}

/// Observed subset of the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gamma0 {
    Left,
    Right,
    Both,
}

impl Gamma0 {
    pub fn contains(self, side: Side) -> bool {
        matches!(
            (self, side),
            (Gamma0::Both, _) | (Gamma0::Left, Side::Left) | (Gamma0::Right, Side::Right)
        )
    }

    pub fn sides(self) -> impl Iterator<Item = Side> {
        let (l, r) = match self {
            Gamma0::Left => (Some(Side::Left), None),
            Gamma0::Right => (None, Some(Side::Right)),
            Gamma0::Both => (Some(Side::Left), Some(Side::Right)),
        };
        l.into_iter().chain(r)
    }
}

/// Integration region for weighted quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// Interior space nodes over all time levels, cell measure `dx·dt`.
    Interior,
    /// The observed boundary subset over all time levels, measure `dt`.
    Gamma0,
    /// Interior space nodes at one time level, measure `dx`.
    TimeSlice(usize),
}

/// Geometry of the space-time grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainConfig {
    pub x_lo: f64,
    pub x_hi: f64,
    /// Number of interior spatial nodes.
    pub nx: usize,
    pub t_lo: f64,
    pub t_hi: f64,
    /// Number of time steps (`nt + 1` levels).
    pub nt: usize,
    pub gamma0: Gamma0,
}

impl DomainConfig {
    /// Checks the structural invariants (ordering, positive steps).
    pub fn validate(&self) -> Result<()> {
        if !(self.x_lo < self.x_hi) {
            return Err(Error::InvalidConfig(format!(
                "x_lo = {} must be below x_hi = {}",
                self.x_lo, self.x_hi
            )));
        }
        if !(self.t_lo < self.t_hi) {
            return Err(Error::InvalidConfig(format!(
                "t_lo = {} must be below t_hi = {}",
                self.t_lo, self.t_hi
            )));
        }
        if self.nx < 2 || self.nt < 2 {
            return Err(Error::InvalidConfig(format!(
                "need nx >= 2 and nt >= 2, got nx = {}, nt = {}",
                self.nx, self.nt
            )));
        }
        if !self.x_lo.is_finite() || !self.x_hi.is_finite() || !self.t_lo.is_finite() || !self.t_hi.is_finite() {
            return Err(Error::NonFinite("domain bounds"));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_hi - self.x_lo) / (self.nx + 1) as f64
    }

    pub fn dt(&self) -> f64 {
        (self.t_hi - self.t_lo) / self.nt as f64
    }

    /// Spatial coordinate of node `ix ∈ 0..=nx+1`.
    pub fn x(&self, ix: usize) -> f64 {
        self.x_lo + ix as f64 * self.dx()
    }

    /// Time coordinate of level `it ∈ 0..=nt`.
    pub fn t(&self, it: usize) -> f64 {
        self.t_lo + it as f64 * self.dt()
    }

    /// Total number of spatial nodes including the boundary.
    pub fn n_space(&self) -> usize {
        self.nx + 2
    }

    /// Total number of time levels.
    pub fn n_time(&self) -> usize {
        self.nt + 1
    }

    /// Index of the boundary node on `side`.
    pub fn boundary_ix(&self, side: Side) -> usize {
        match side {
            Side::Left => 0,
            Side::Right => self.nx + 1,
        }
    }

    /// Time level closest to `t`.
    pub fn time_index(&self, t: f64) -> Result<usize> {
        let raw = (t - self.t_lo) / self.dt();
        let it = if raw < 0.0 { -1.0 } else { raw + 0.5 } as i64;
        if it < 0 || it > self.nt as i64 {
            return Err(Error::RegionOutOfRange(format!(
                "time {t} outside [{}, {}]",
                self.t_lo, self.t_hi
            )));
        }
        Ok(it as usize)
    }

    /// Largest |x − x0| over the closed spatial interval.
    pub fn sup_dist(&self, x0: f64) -> f64 {
        let a = crate::fp::abs(self.x_lo - x0);
        let b = crate::fp::abs(self.x_hi - x0);
        if a > b {
            a
        } else {
            b
        }
    }

    /// Grid refined by `k` in both directions, keeping the coarse nodes:
    /// `nx' = k·(nx+1) − 1`, `nt' = k·nt`.
    pub fn refined(&self, k: usize) -> DomainConfig {
        DomainConfig {
            nx: k * (self.nx + 1) - 1,
            nt: k * self.nt,
            ..*self
        }
    }
}

/// Scalar function on the full space-time grid (boundary nodes included).
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    nx: usize,
    nt: usize,
    values: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(domain: &DomainConfig) -> Self {
        SpaceTimeField {
            nx: domain.nx,
            nt: domain.nt,
            values: vec![0.0; domain.n_space() * domain.n_time()],
        }
    }

    /// Samples `f(x, t)` at every grid node.
    pub fn from_fn(domain: &DomainConfig, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(domain);
        for it in 0..=domain.nt {
            let t = domain.t(it);
            for ix in 0..=domain.nx + 1 {
                out.set(ix, it, f(domain.x(ix), t));
            }
        }
        out
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.nt)
    }

    #[inline(always)]
    pub fn at(&self, ix: usize, it: usize) -> f64 {
        self.values[it * (self.nx + 2) + ix]
    }

    #[inline(always)]
    pub fn set(&mut self, ix: usize, it: usize, v: f64) {
        self.values[it * (self.nx + 2) + ix] = v;
    }

    /// Raw storage, row-major with x fastest.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// One time level as a slice of length `nx + 2`.
    pub fn time_slice(&self, it: usize) -> &[f64] {
        let w = self.nx + 2;
        &self.values[it * w..(it + 1) * w]
    }

    pub fn same_shape(&self, other: &SpaceTimeField) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::GridMismatch {
                expected: self.shape(),
                got: other.shape(),
            });
        }
        Ok(())
    }

    pub fn matches_domain(&self, domain: &DomainConfig) -> Result<()> {
        if self.shape() != (domain.nx, domain.nt) {
            return Err(Error::GridMismatch {
                expected: (domain.nx, domain.nt),
                got: self.shape(),
            });
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .fold(0.0_f64, |m, &v| m.max(crate::fp::abs(v)))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// True when the boundary columns vanish at every time level.
    pub fn is_dirichlet_homogeneous(&self) -> bool {
        (0..=self.nt).all(|it| self.at(0, it) == 0.0 && self.at(self.nx + 1, it) == 0.0)
    }

    /// `self += c · other`
    pub fn axpy(&mut self, c: f64, other: &SpaceTimeField) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.values.iter_mut().zip(other.values.iter()) {
            *a += c * b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for v in self.values.iter_mut() {
            *v *= c;
        }
    }

    /// Plain (unweighted, measure-free) dot product of the raw storage.
    pub fn dot(&self, other: &SpaceTimeField) -> f64 {
        debug_assert_eq!(self.shape(), other.shape());
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Restriction to a coarse grid; `self` must live on `fine = coarse.refined(k)`.
    pub fn restrict(&self, coarse: &DomainConfig, k: usize) -> Result<SpaceTimeField> {
        let fine = coarse.refined(k);
        self.matches_domain(&fine)?;
        let mut out = SpaceTimeField::zeros(coarse);
        for it in 0..=coarse.nt {
            for ix in 0..=coarse.nx + 1 {
                out.set(ix, it, self.at(k * ix, k * it));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dom() -> DomainConfig {
        DomainConfig {
            x_lo: 0.0,
            x_hi: 1.0,
            nx: 9,
            t_lo: -2.0,
            t_hi: 2.0,
            nt: 8,
            gamma0: Gamma0::Right,
        }
    }

    #[test]
    fn grid_spacing_and_coordinates() {
        let d = dom();
        assert!((d.dx() - 0.1).abs() < 1e-15);
        assert!((d.dt() - 0.5).abs() < 1e-15);
        assert!((d.x(10) - 1.0).abs() < 1e-15);
        assert!((d.t(8) - 2.0).abs() < 1e-15);
        assert_eq!(d.time_index(0.0).unwrap(), 4);
        assert!(d.time_index(3.0).is_err());
    }

    #[test]
    fn validate_rejects_degenerate_domains() {
        let mut d = dom();
        d.x_hi = d.x_lo;
        assert!(d.validate().is_err());
        let mut d = dom();
        d.nx = 1;
        assert!(d.validate().is_err());
    }

    #[test]
    fn refinement_keeps_coarse_nodes() {
        let d = dom();
        let f = d.refined(2);
        assert_eq!(f.nx, 19);
        assert_eq!(f.nt, 16);
        assert!((f.dx() - d.dx() / 2.0).abs() < 1e-15);
        let field = SpaceTimeField::from_fn(&f, |x, t| x + 10.0 * t);
        let r = field.restrict(&d, 2).unwrap();
        for it in 0..=d.nt {
            for ix in 0..=d.nx + 1 {
                assert!((r.at(ix, it) - (d.x(ix) + 10.0 * d.t(it))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn field_indexing_is_x_fastest() {
        let d = dom();
        let mut f = SpaceTimeField::zeros(&d);
        f.set(3, 2, 7.0);
        assert_eq!(f.values()[2 * (d.nx + 2) + 3], 7.0);
        assert_eq!(f.at(3, 2), 7.0);
    }
}
