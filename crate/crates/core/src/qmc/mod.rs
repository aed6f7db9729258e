//! Low-discrepancy and stratified point sets.
//!
//! Unit-cube generators ([`halton_unit`], [`sobol_unit`], [`faure_unit`],
//! [`lhs_unit`]) return a [`PointSet`] over `[0,1]^r`; [`scale_to_domain`]
//! maps it affinely onto a filtering hypercube.

mod discrepancy;
mod faure;
mod halton;
mod lhs;
mod primes;
mod sobol;

pub use discrepancy::star_discrepancy_exact_2d;
pub use faure::{faure_unit, faure_unit_skip};
pub use halton::{halton_unit, radical_inverse};
pub use lhs::lhs_unit;
pub use primes::{nth_prime, smallest_prime_at_least, MAX_TABULATED_PRIMES};
pub use sobol::{sobol_unit, SOBOL_MAX_DIMENSION};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned hypercube `prod_i [center_i - R, center_i + R]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    center: Vec<f64>,
    half_width: f64,
}

impl Domain {
    pub fn new(center: Vec<f64>, half_width: f64) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "domain half-width must be positive and finite, got {half_width}"
            )));
        }
        if center.is_empty() {
            return Err(Error::InvalidInput("domain dimension must be >= 1".into()));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("domain center must be finite".into()));
        }
        Ok(Self { center, half_width })
    }

    /// `[-R, R]^r`.
    pub fn centered(r: usize, half_width: f64) -> Result<Self> {
        Self::new(vec![0.0; r], half_width)
    }

    /// `[0, 1]^r`.
    pub fn unit(r: usize) -> Self {
        Self {
            center: vec![0.5; r],
            half_width: 0.5,
        }
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn volume(&self) -> f64 {
        (2.0 * self.half_width).powi(self.dim() as i32)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(&self.center)
                .all(|(xi, ci)| (xi - ci).abs() <= self.half_width)
    }

    /// Sup-norm distance from `x` to the boundary (non-negative inside).
    pub fn distance_to_boundary(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.center)
            .map(|(xi, ci)| self.half_width - (xi - ci).abs())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Which construction produced a point set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SequenceKind {
    Halton,
    Sobol,
    Faure,
    Lhs,
    /// Caller-supplied points (grids, pseudo-random sets in tests).
    Explicit,
}

impl SequenceKind {
    /// Halton below ten dimensions, Sobol from ten upwards.
    pub fn default_for_dimension(r: usize) -> Self {
        if r < 10 {
            SequenceKind::Halton
        } else {
            SequenceKind::Sobol
        }
    }

    /// Skip applied when none is configured: Sobol drops index 0 (the corner).
    pub fn default_skip(self) -> u64 {
        match self {
            SequenceKind::Sobol => 1,
            _ => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SequenceKind::Halton => "halton",
            SequenceKind::Sobol => "sobol",
            SequenceKind::Faure => "faure",
            SequenceKind::Lhs => "lhs",
            SequenceKind::Explicit => "explicit",
        }
    }
}

impl std::str::FromStr for SequenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "halton" => Ok(SequenceKind::Halton),
            "sobol" => Ok(SequenceKind::Sobol),
            "faure" => Ok(SequenceKind::Faure),
            "lhs" => Ok(SequenceKind::Lhs),
            other => Err(Error::Config(format!("unknown sequence kind `{other}`"))),
        }
    }
}

/// `n` points of dimension `r` stored row-major, all inside `domain`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    points: Vec<f64>,
    n: usize,
    r: usize,
    kind: SequenceKind,
    domain: Domain,
}

impl PointSet {
    /// Wraps generator output. Callers guarantee containment.
    pub(crate) fn from_raw(
        points: Vec<f64>,
        n: usize,
        r: usize,
        kind: SequenceKind,
        domain: Domain,
    ) -> Self {
        debug_assert_eq!(points.len(), n * r);
        Self {
            points,
            n,
            r,
            kind,
            domain,
        }
    }

    /// Builds a set from explicit rows, checking containment, finiteness and
    /// pairwise distinctness.
    pub fn from_points(rows: &[Vec<f64>], domain: Domain) -> Result<Self> {
        let r = domain.dim();
        let mut points = Vec::with_capacity(rows.len() * r);
        for row in rows {
            if row.len() != r {
                return Err(Error::DimensionMismatch {
                    expected: r,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) || !domain.contains(row) {
                return Err(Error::InvalidInput(format!(
                    "point {row:?} is not finite or lies outside the domain"
                )));
            }
            points.extend_from_slice(row);
        }
        let set = Self::from_raw(points, rows.len(), r, SequenceKind::Explicit, domain);
        if let Some((a, b)) = set.first_duplicate() {
            return Err(Error::InvalidInput(format!(
                "points {a} and {b} coincide"
            )));
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.r
    }

    pub fn kind(&self) -> SequenceKind {
        self.kind
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.r..(i + 1) * self.r]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size; r >= 1 always.
        self.points.chunks_exact(self.r.max(1)).take(self.n)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.points
    }

    /// Index pair of the first repeated point, if any (sort-based, `O(n log n)`).
    pub fn first_duplicate(&self) -> Option<(usize, usize)> {
        let mut idx: Vec<usize> = (0..self.n).collect();
        let key = |i: usize| -> Vec<u64> { self.point(i).iter().map(|v| v.to_bits()).collect() };
        idx.sort_by_key(|&i| key(i));
        idx.windows(2)
            .find(|w| self.point(w[0]) == self.point(w[1]))
            .map(|w| (w[0].min(w[1]), w[0].max(w[1])))
    }

    /// 64-bit FNV-1a fingerprint of dimensions and coordinate bits.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        eat(&(self.n as u64).to_le_bytes());
        eat(&(self.r as u64).to_le_bytes());
        for v in &self.points {
            eat(&v.to_bits().to_le_bytes());
        }
        h
    }
}

/// Affine map `u -> center + (2u - 1) R`, coordinatewise.
pub fn scale_to_domain(unit: &PointSet, domain: &Domain) -> Result<PointSet> {
    if unit.dim() != domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: domain.dim(),
            got: unit.dim(),
        });
    }
    let r = unit.dim();
    let rw = domain.half_width();
    let points = unit
        .as_slice()
        .iter()
        .enumerate()
        .map(|(k, &u)| domain.center()[k % r] + (2.0 * u - 1.0) * rw)
        .collect();
    Ok(PointSet::from_raw(
        points,
        unit.len(),
        r,
        unit.kind(),
        domain.clone(),
    ))
}

/// Inverse of [`scale_to_domain`].
pub fn unscale_from_domain(points: &PointSet) -> PointSet {
    let r = points.dim();
    let d = points.domain();
    let unit = points
        .as_slice()
        .iter()
        .enumerate()
        .map(|(k, &x)| (x - d.center()[k % r]) / (2.0 * d.half_width()) + 0.5)
        .collect();
    PointSet::from_raw(unit, points.len(), r, points.kind(), Domain::unit(r))
}

/// `n` i.i.d. uniform points in `[0,1]^r` (the Monte Carlo reference for
/// discrepancy comparisons), tagged as explicit.
pub fn pseudo_random_unit(n: usize, r: usize, seed: u64) -> Result<PointSet> {
    use rand::Rng;
    if n == 0 || r == 0 {
        return Err(Error::InvalidInput("need n >= 1 and r >= 1".into()));
    }
    let mut rng = crate::rng::stream_rng(seed, 0, crate::rng::Stream::Custom);
    let points = (0..n * r).map(|_| rng.random::<f64>()).collect();
    Ok(PointSet::from_raw(points, n, r, SequenceKind::Explicit, Domain::unit(r)))
}

/// Dispatches to the unit-cube generator for `kind`.
pub fn generate_unit(kind: SequenceKind, n: usize, r: usize, skip: u64, seed: u64) -> Result<PointSet> {
    match kind {
        SequenceKind::Halton => halton_unit(n, r, skip),
        SequenceKind::Sobol => sobol_unit(n, r, skip),
        SequenceKind::Faure => faure_unit_skip(n, r, skip),
        SequenceKind::Lhs => lhs_unit(n, r, seed),
        SequenceKind::Explicit => Err(Error::InvalidInput(
            "explicit point sets cannot be generated".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pseudo_random_points_are_seeded_and_in_cube() {
        let a = pseudo_random_unit(50, 3, 9).unwrap();
        assert_eq!(a, pseudo_random_unit(50, 3, 9).unwrap());
        assert_ne!(a, pseudo_random_unit(50, 3, 10).unwrap());
        assert!(a.as_slice().iter().all(|&v| (0.0..1.0).contains(&v)));
    }

    #[test]
    fn midpoint_maps_to_center() {
        let unit = PointSet::from_points(&[vec![0.5, 0.5, 0.5]], Domain::unit(3)).unwrap();
        let dom = Domain::new(vec![1.0, -2.0, 3.5], 0.7).unwrap();
        let s = scale_to_domain(&unit, &dom).unwrap();
        assert_eq!(s.point(0), &[1.0, -2.0, 3.5]);
    }

    #[test]
    fn corner_maps_to_minus_r() {
        let unit = PointSet::from_points(&[vec![0.0, 0.0]], Domain::unit(2)).unwrap();
        let s = scale_to_domain(&unit, &Domain::centered(2, 3.0).unwrap()).unwrap();
        assert_eq!(s.point(0), &[-3.0, -3.0]);
    }

    #[test]
    fn scale_roundtrip() {
        let unit = sobol_unit(50, 4, 1).unwrap();
        let dom = Domain::new(vec![0.3, -1.0, 10.0, 2.0], 4.5).unwrap();
        let back = unscale_from_domain(&scale_to_domain(&unit, &dom).unwrap());
        for (a, b) in unit.as_slice().iter().zip(back.as_slice()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn scale_rejects_mismatched_dimension() {
        let unit = halton_unit(4, 2, 0).unwrap();
        let err = scale_to_domain(&unit, &Domain::centered(3, 1.0).unwrap()).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn chooser_switches_at_ten() {
        assert_eq!(SequenceKind::default_for_dimension(1), SequenceKind::Halton);
        assert_eq!(SequenceKind::default_for_dimension(9), SequenceKind::Halton);
        assert_eq!(SequenceKind::default_for_dimension(10), SequenceKind::Sobol);
        assert_eq!(SequenceKind::default_for_dimension(1000), SequenceKind::Sobol);
    }

    #[test]
    fn duplicate_points_rejected() {
        let err = PointSet::from_points(&[vec![0.1], vec![0.2], vec![0.1]], Domain::unit(1));
        assert!(err.is_err());
    }

    #[test]
    fn domain_volume() {
        let d = Domain::centered(3, 0.5).unwrap();
        assert_eq!(d.volume(), 1.0);
        assert!(Domain::centered(2, 0.0).is_err());
    }
}
