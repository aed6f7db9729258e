use super::primes::{nth_prime, MAX_TABULATED_PRIMES};
use super::{Domain, PointSet, SequenceKind};
use crate::error::{Error, Result};

/// Radical inverse `phi_p(k) = sum_i k_i p^-(i+1)` over the base-`p` digits of `k`.
pub fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut acc = 0.0;
    while k > 0 {
        acc += (k % base) as f64 * scale;
        k /= base;
        scale *= inv;
    }
    acc
}

/// Halton points `k = 0..n`, coordinate `d` equal to `phi_{p_d}(k + skip + 1)`.
pub fn halton_unit(n: usize, r: usize, skip: u64) -> Result<PointSet> {
    if r == 0 {
        return Err(Error::InvalidInput("dimension must be >= 1".into()));
    }
    if r > MAX_TABULATED_PRIMES {
        return Err(Error::UnsupportedDimension {
            requested: r,
            reason: format!("Halton prime table holds {MAX_TABULATED_PRIMES} bases"),
        });
    }
    let bases: Vec<u64> = (0..r).map(|d| nth_prime(d).expect("checked above")).collect();
    let mut points = Vec::with_capacity(n * r);
    for k in 0..n as u64 {
        let index = k + skip + 1;
        points.extend(bases.iter().map(|&p| radical_inverse(index, p)));
    }
    Ok(PointSet::from_raw(points, n, r, SequenceKind::Halton, Domain::unit(r)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_two_first_three() {
        let ps = halton_unit(3, 1, 0).unwrap();
        assert_eq!(ps.as_slice(), &[0.5, 0.25, 0.75]);
    }

    #[test]
    fn first_point_two_dims() {
        let ps = halton_unit(1, 2, 0).unwrap();
        assert_eq!(ps.point(0)[0], 0.5);
        assert!((ps.point(0)[1] - 1.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn empty_set_keeps_metadata() {
        let ps = halton_unit(0, 3, 0).unwrap();
        assert_eq!(ps.len(), 0);
        assert_eq!(ps.dim(), 3);
        assert!(ps.is_empty());
    }

    #[test]
    fn skip_shifts_index() {
        let a = halton_unit(5, 3, 0).unwrap();
        let b = halton_unit(3, 3, 2).unwrap();
        assert_eq!(&a.as_slice()[6..], b.as_slice());
    }

    #[test]
    fn too_many_dimensions() {
        assert!(matches!(
            halton_unit(1, 1001, 0),
            Err(Error::UnsupportedDimension { .. })
        ));
        assert!(halton_unit(2, 1000, 0).is_ok());
    }

    #[test]
    fn radical_inverse_base_three() {
        // 5 = 12_3 -> 0.21_3 = 2/3 + 1/9
        assert!((radical_inverse(5, 3) - (2.0 / 3.0 + 1.0 / 9.0)).abs() < 1e-16);
    }
}
