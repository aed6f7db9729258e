use std::sync::OnceLock;

use super::{Domain, PointSet, SequenceKind};
use crate::error::{Error, Result};

const TABLE: &str = include_str!("data/new-joe-kuo-6.21201.1024.txt");

/// Dimensions covered by the embedded direction-number table.
pub const SOBOL_MAX_DIMENSION: usize = 1024;

const BITS: usize = 32;

/// Per-dimension direction numbers `v_1..v_32`, left-aligned in a `u32`.
type Directions = [u32; BITS];

fn directions() -> &'static [Directions] {
    static DIRS: OnceLock<Vec<Directions>> = OnceLock::new();
    DIRS.get_or_init(|| {
        TABLE
            .lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
            .map(|line| {
                let nums: Vec<u32> = line
                    .split_whitespace()
                    .map(|t| t.parse().expect("malformed direction table"))
                    .collect();
                build_directions(nums[0], &nums[1..])
            })
            .collect()
    })
}

/// Expands a primitive polynomial (with leading and trailing bits) and its
/// initial odd integers `m_1..m_s` into 32 direction numbers.
fn build_directions(poly: u32, m: &[u32]) -> Directions {
    let mut v = [0u32; BITS];
    let degree = (32 - poly.leading_zeros()).saturating_sub(1) as usize;
    if degree == 0 {
        // first dimension: van der Corput, m_j = 1
        for (j, vj) in v.iter_mut().enumerate() {
            *vj = 1u32 << (BITS - 1 - j);
        }
        return v;
    }
    // interior coefficients a_1..a_{s-1}, most significant first
    let a = (poly >> 1) & ((1u32 << (degree - 1)) - 1);
    for j in 0..degree.min(BITS) {
        v[j] = m[j] << (BITS - 1 - j);
    }
    for j in degree..BITS {
        let mut x = v[j - degree] ^ (v[j - degree] >> degree);
        for k in 1..degree {
            if (a >> (degree - 1 - k)) & 1 == 1 {
                x ^= v[j - k];
            }
        }
        v[j] = x;
    }
    v
}

/// Sobol points with natural indices `skip..skip+n`, generated with the
/// Gray-code recurrence. The default skip of 1 drops the origin.
pub fn sobol_unit(n: usize, r: usize, skip: u64) -> Result<PointSet> {
    if r == 0 {
        return Err(Error::InvalidInput("dimension must be >= 1".into()));
    }
    if r > SOBOL_MAX_DIMENSION {
        return Err(Error::UnsupportedDimension {
            requested: r,
            reason: format!("Sobol direction table covers {SOBOL_MAX_DIMENSION} dimensions"),
        });
    }
    let last = skip.checked_add(n as u64).unwrap_or(u64::MAX);
    if last > 1u64 << BITS {
        return Err(Error::InvalidInput(format!(
            "Sobol index {last} exceeds the 2^{BITS} table resolution"
        )));
    }
    let dirs = &directions()[..r];
    let scale = 1.0 / (1u64 << BITS) as f64;

    // state for index `skip`: XOR of v_j over set bits of gray(skip)
    let gray = skip ^ (skip >> 1);
    let mut state: Vec<u32> = dirs
        .iter()
        .map(|v| {
            (0..BITS)
                .filter(|&j| (gray >> j) & 1 == 1)
                .fold(0u32, |acc, j| acc ^ v[j])
        })
        .collect();

    let mut points = Vec::with_capacity(n * r);
    for k in 0..n as u64 {
        if k > 0 {
            let index = skip + k;
            let bit = index.trailing_zeros() as usize;
            for (s, v) in state.iter_mut().zip(dirs) {
                *s ^= v[bit];
            }
        }
        points.extend(state.iter().map(|&s| f64::from(s) * scale));
    }
    Ok(PointSet::from_raw(points, n, r, SequenceKind::Sobol, Domain::unit(r)))
}
