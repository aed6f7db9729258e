use rand::seq::SliceRandom;
use rand::Rng;

use super::{Domain, PointSet, SequenceKind};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Latin hypercube sample: coordinate `d` of point `i` is `(pi_d(i) + u) / n`.
pub fn lhs_unit(n: usize, r: usize, seed: u64) -> Result<PointSet> {
    if n == 0 {
        return Err(Error::InvalidInput("LHS needs n >= 1".into()));
    }
    if r == 0 {
        return Err(Error::InvalidInput("dimension must be >= 1".into()));
    }
    let mut rng = stream_rng(seed, 0, Stream::LatinHypercube);
    let mut points = vec![0.0; n * r];
    let inv_n = 1.0 / n as f64;
    let mut perm: Vec<usize> = (0..n).collect();
    for d in 0..r {
        perm.shuffle(&mut rng);
        for (i, &stratum) in perm.iter().enumerate() {
            let u: f64 = rng.random();
            // stays below the stratum's upper edge even after rounding
            let x = ((stratum as f64 + u) * inv_n).min((stratum + 1) as f64 * inv_n - f64::EPSILON * inv_n);
            points[i * r + d] = x.max(stratum as f64 * inv_n);
        }
    }
    Ok(PointSet::from_raw(points, n, r, SequenceKind::Lhs, Domain::unit(r)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn each_stratum_hit_once() {
        let n = 37;
        let ps = lhs_unit(n, 5, 11).unwrap();
        for d in 0..5 {
            let mut strata: Vec<usize> = ps.iter().map(|p| (p[d] * n as f64).floor() as usize).collect();
            strata.sort_unstable();
            assert_eq!(strata, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn single_point() {
        let ps = lhs_unit(1, 3, 0).unwrap();
        assert_eq!(ps.len(), 1);
        assert!(ps.point(0).iter().all(|&c| (0.0..1.0).contains(&c)));
    }

    #[test]
    fn seeded_reproducibility() {
        assert_eq!(lhs_unit(20, 4, 9).unwrap(), lhs_unit(20, 4, 9).unwrap());
        assert_ne!(lhs_unit(20, 4, 9).unwrap(), lhs_unit(20, 4, 10).unwrap());
    }

    #[test]
    fn zero_points_rejected() {
        assert!(lhs_unit(0, 2, 1).is_err());
    }
}
