use super::PointSet;
use crate::error::{Error, Result};

/// Exact star discrepancy of a two-dimensional point set in the unit square.
///
/// The supremum over anchored boxes `[0,u) x [0,v)` is attained with `u` and `v`
/// taken from the point coordinates or 1, either with the box open (count too
/// small) or closed (count too large). Runs in `O(n^2)` after sorting.
pub fn star_discrepancy_exact_2d(points: &PointSet) -> Result<f64> {
    if points.dim() != 2 {
        return Err(Error::UnsupportedDimension {
            requested: points.dim(),
            reason: "exact star discrepancy is implemented for r = 2 only".into(),
        });
    }
    let n = points.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty point set".into()));
    }
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p[0], p[1])).collect();
    if pts
        .iter()
        .any(|&(x, y)| !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y))
    {
        return Err(Error::InvalidInput(
            "star discrepancy needs points in the unit square".into(),
        ));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    ys.push(1.0);
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    let m = ys.len();
    let rank = |y: f64| ys.partition_point(|&c| c < y);

    let mut us: Vec<f64> = pts.iter().map(|p| p.0).collect();
    us.push(1.0);
    us.dedup();

    let inv_n = 1.0 / n as f64;
    let mut hist = vec![0usize; m];
    let mut next = 0;
    let mut worst: f64 = 0.0;
    for &u in &us {
        while next < n && pts[next].0 < u {
            hist[rank(pts[next].1)] += 1;
            next += 1;
        }
        // open box: points strictly below v
        let mut below = 0;
        for (k, &v) in ys.iter().enumerate() {
            worst = worst.max(u * v - below as f64 * inv_n);
            below += hist[k];
        }
        while next < n && pts[next].0 == u {
            hist[rank(pts[next].1)] += 1;
            next += 1;
        }
        // closed box: points at or below v
        let mut at_or_below = 0;
        for (k, &v) in ys.iter().enumerate() {
            at_or_below += hist[k];
            worst = worst.max(at_or_below as f64 * inv_n - u * v);
        }
    }
    Ok(worst)
}
