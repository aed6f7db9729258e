use super::primes::smallest_prime_at_least;
use super::{Domain, PointSet, SequenceKind};
use crate::error::{Error, Result};

/// Faure points for indices `1..=n` in base `p`, the smallest prime `>= max(r, 2)`.
pub fn faure_unit(n: usize, r: usize) -> Result<PointSet> {
    faure_unit_skip(n, r, 0)
}

/// Faure points for indices `skip+1 ..= skip+n`.
pub fn faure_unit_skip(n: usize, r: usize, skip: u64) -> Result<PointSet> {
    if r == 0 {
        return Err(Error::InvalidInput("dimension must be >= 1".into()));
    }
    let p = smallest_prime_at_least(r as u64);
    let max_index = skip + n as u64;
    let digits = digit_count(max_index, p) + 1;
    let matrices = generating_matrices(r, p, digits);

    let inv_p = 1.0 / p as f64;
    let mut k_digits = vec![0u64; digits];
    let mut y = vec![0u64; digits];
    let mut points = Vec::with_capacity(n * r);
    for k in 0..n as u64 {
        let mut index = k + skip + 1;
        for slot in k_digits.iter_mut() {
            *slot = index % p;
            index /= p;
        }
        for c in &matrices {
            for (i, yi) in y.iter_mut().enumerate() {
                // upper triangular: only j >= i contribute
                let row = &c[i * digits..(i + 1) * digits];
                *yi = (i..digits).map(|j| row[j] * k_digits[j]).sum::<u64>() % p;
            }
            let mut scale = inv_p;
            let mut x = 0.0;
            for &yi in &y {
                x += yi as f64 * scale;
                scale *= inv_p;
            }
            points.push(x);
        }
    }
    Ok(PointSet::from_raw(points, n, r, SequenceKind::Faure, Domain::unit(r)))
}

/// Number of base-`p` digits of `k` (at least 1).
fn digit_count(mut k: u64, p: u64) -> usize {
    let mut count = 1;
    while k >= p {
        k /= p;
        count += 1;
    }
    count
}

/// `C^(d) = P^(d-1) mod p` for `d = 1..=r`, with `P_{i,j} = binom(j, i) mod p`.
/// Row-major `digits x digits` blocks.
fn generating_matrices(r: usize, p: u64, digits: usize) -> Vec<Vec<u64>> {
    let mut pascal = vec![0u64; digits * digits];
    for j in 0..digits {
        pascal[j] = 1; // binom(j, 0)
        for i in 1..=j {
            let above = if i <= j - 1 { pascal[i * digits + j - 1] } else { 0 };
            pascal[i * digits + j] = (pascal[(i - 1) * digits + j - 1] + above) % p;
        }
    }
    let mut identity = vec![0u64; digits * digits];
    for i in 0..digits {
        identity[i * digits + i] = 1;
    }
    let mut out = Vec::with_capacity(r);
    out.push(identity);
    for d in 1..r {
        let prev = &out[d - 1];
        let mut next = vec![0u64; digits * digits];
        for i in 0..digits {
            for j in i..digits {
                let s: u64 = (i..=j)
                    .map(|l| pascal[i * digits + l] * prev[l * digits + j])
                    .sum();
                next[i * digits + j] = s % p;
            }
        }
        out.push(next);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmc::radical_inverse;

    fn binom(n: u64, k: u64) -> u128 {
        (0..k).fold(1u128, |acc, i| acc * u128::from(n - i) / u128::from(i + 1))
    }

    /// Direct formula for the generalised Pascal matrix:
    /// `(P^(d-1))_{i,j} = binom(j, i) (d-1)^(j-i)  (mod p)`.
    fn oracle_coordinate(k: u64, d: usize, p: u64, digits: usize) -> f64 {
        let kd: Vec<u64> = (0..digits).map(|i| (k / p.pow(i as u32)) % p).collect();
        let mut x = 0.0;
        for i in 0..digits {
            let mut y: u128 = 0;
            for j in i..digits {
                let c = binom(j as u64, i as u64) * u128::from((d as u64 - 1).pow((j - i) as u32));
                y += c * u128::from(kd[j]);
            }
            x += (y % u128::from(p)) as f64 / (p as f64).powi(i as i32 + 1);
        }
        x
    }

    #[test]
    fn one_dim_is_van_der_corput() {
        let ps = faure_unit(7, 1).unwrap();
        let expect: Vec<f64> = (1..=7).map(|k| radical_inverse(k, 2)).collect();
        assert_eq!(ps.as_slice(), expect.as_slice());
        assert_eq!(&ps.as_slice()[..3], &[0.5, 0.25, 0.75]);
    }

    #[test]
    fn two_dims_base_two_matches_matrix_power() {
        let ps = faure_unit(1, 2).unwrap();
        // k = 1, d = 2: y = P * (1, 0, ..) = first column of P = (1, 0, ..)
        assert_eq!(ps.point(0)[1], oracle_coordinate(1, 2, 2, 2));
        assert_eq!(ps.point(0)[1], 0.5);
    }

    #[test]
    fn agrees_with_closed_form_oracle() {
        for &r in &[2usize, 3, 5, 7] {
            let n = 200;
            let ps = faure_unit(n, r).unwrap();
            let p = smallest_prime_at_least(r as u64);
            let digits = digit_count(n as u64, p) + 1;
            for k in 0..n {
                for d in 0..r {
                    let want = oracle_coordinate(k as u64 + 1, d + 1, p, digits);
                    assert!((ps.point(k)[d] - want).abs() < 1e-15, "r={r} k={k} d={d}");
                }
            }
        }
    }

    #[test]
    fn points_in_unit_cube() {
        let ps = faure_unit(500, 11).unwrap();
        assert!(ps.as_slice().iter().all(|&c| (0.0..1.0).contains(&c)));
        assert!(ps.first_duplicate().is_none());
    }
}
