use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{highorder_coeffs, pseudoinverse_spd, KernelSpec};
use crate::error::{Error, Result};
use crate::models::{divergence, DivergenceMethod, DynamicsModel};
use crate::qmc::PointSet;

/// Sup-norm distance to the domain boundary below which a row is zeroed.
pub const DEFAULT_BOUNDARY_TOL: f64 = 1e-12;

/// Minimum rows per rayon task; keeps tiny operators from drowning in overhead.
const ROWS_PER_TASK: usize = 8;

/// Terms below `exp(-50)` of the row maximum cannot change a double-precision
/// sum of at most a few thousand terms and are skipped.
const NEGLIGIBLE_LOG: f64 = -50.0;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Storage {
    /// First order: `log K(x_i, x_j)`, `-inf` on zeroed rows.
    Log(Vec<f64>),
    /// Higher order: entry `(i, j) = exp(shift_i) * mantissa_ij`, signed.
    Signed { shift: Vec<f64>, mantissa: Vec<f64> },
}

/// Discrete propagator `(F u)(x_i) = w sum_j K(x_i, x_j) u(x_j) + c_{N+1} u(x_i)`.
///
/// Row `i` belongs to evaluation point `x_i`. The kernel part is kept in log
/// form for order 1 and in a per-row shifted signed form for higher orders.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionOperator {
    pub(crate) n: usize,
    pub(crate) r: usize,
    pub(crate) spec: KernelSpec,
    pub(crate) coeffs: Vec<f64>,
    pub(crate) storage: Storage,
    pub(crate) quad_weight: f64,
    pub(crate) boundary_mask: Vec<bool>,
    pub(crate) point_set_id: u64,
    pub(crate) divergence_method: Option<DivergenceMethod>,
}

impl TransitionOperator {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn order(&self) -> usize {
        self.spec.order
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    /// `c_1 .. c_N, c_{N+1}`.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn identity_coeff(&self) -> f64 {
        self.coeffs[self.spec.order]
    }

    pub fn quad_weight(&self) -> f64 {
        self.quad_weight
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary_mask
    }

    pub fn point_set_id(&self) -> u64 {
        self.point_set_id
    }

    /// How divergence was obtained (`None` when every row was zeroed).
    pub fn divergence_method(&self) -> Option<DivergenceMethod> {
        self.divergence_method
    }

    /// Kernel-matrix entry `sum_a c_a K_{dt/s_a}(x_i, x_j)` (no quadrature weight).
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::Log(l) => l[i * self.n + j].exp(),
            Storage::Signed { shift, mantissa } => {
                if self.boundary_mask[i] {
                    0.0
                } else {
                    shift[i].exp() * mantissa[i * self.n + j]
                }
            }
        }
    }

    /// `log |entry(i, j)|`.
    pub fn log_abs_entry(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::Log(l) => l[i * self.n + j],
            Storage::Signed { shift, mantissa } => {
                if self.boundary_mask[i] {
                    f64::NEG_INFINITY
                } else {
                    shift[i] + mantissa[i * self.n + j].abs().ln()
                }
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.entry(i, j))
    }
}

/// Per-point quantities shared by all entries of a row.
struct RowData {
    /// Whitened drift `W f(x_i)` (or `f` itself for identity noise).
    wf: Vec<f64>,
    /// `dt`-independent part of the drift penalty: `div f + |f|^2_{a^+} / 2`.
    penalty: f64,
    log_det: f64,
    /// Row-specific whitening for state-dependent noise.
    whitening: Option<DMatrix<f64>>,
    method: DivergenceMethod,
}

/// Pairwise squared distances between (whitened) offsets, reused while the
/// offsets stay bitwise identical (translated restarts).
#[derive(Debug, Clone, Default)]
pub struct DistanceCache {
    key: Option<u64>,
    d2: Arc<Vec<f64>>,
}

impl DistanceCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn get(&mut self, coords: &[f64], n: usize, k: usize) -> Arc<Vec<f64>> {
        let key = fingerprint(coords, k);
        if self.key == Some(key) && self.d2.len() == n * n {
            return Arc::clone(&self.d2);
        }
        let mut d2 = vec![0.0; n * n];
        d2.par_chunks_mut(n.max(1))
            .with_min_len(ROWS_PER_TASK)
            .enumerate()
            .for_each(|(i, row)| {
                let zi = &coords[i * k..(i + 1) * k];
                for (j, out) in row.iter_mut().enumerate() {
                    let zj = &coords[j * k..(j + 1) * k];
                    *out = zi.iter().zip(zj).map(|(a, b)| (a - b) * (a - b)).sum();
                }
            });
        self.key = Some(key);
        self.d2 = Arc::new(d2);
        Arc::clone(&self.d2)
    }
}

fn fingerprint(values: &[f64], k: usize) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ (k as u64);
    for v in values {
        h ^= v.to_bits();
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
        h ^= h >> 29;
    }
    h
}

/// Builds the transition operator of `model` on `points`.
///
/// Rows whose point lies within `boundary_tol` (sup norm) of the domain
/// boundary are zeroed. Rows are independent and computed in parallel; the
/// result does not depend on the number of threads.
pub fn assemble_operator(
    model: &DynamicsModel,
    points: &PointSet,
    spec: &KernelSpec,
    boundary_tol: f64,
) -> Result<TransitionOperator> {
    assemble_operator_with(model, points, None, spec, boundary_tol, &mut DistanceCache::new())
}

/// [`assemble_operator`] with explicit offsets `x_i - center` (row-major) and
/// a distance cache. Displacements `x_j - x_i` are taken as differences of
/// offsets, so translated copies of one reference set share the cache.
pub fn assemble_operator_with(
    model: &DynamicsModel,
    points: &PointSet,
    offsets: Option<&[f64]>,
    spec: &KernelSpec,
    boundary_tol: f64,
    cache: &mut DistanceCache,
) -> Result<TransitionOperator> {
    let r = model.r();
    if points.dim() != r {
        return Err(Error::DimensionMismatch {
            expected: r,
            got: points.dim(),
        });
    }
    if !(boundary_tol >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "boundary tolerance must be >= 0, got {boundary_tol}"
        )));
    }
    let coeffs = highorder_coeffs(spec)?;
    let n = points.len();
    let domain = points.domain();
    let owned_offsets;
    let offsets = match offsets {
        Some(o) if o.len() == n * r => o,
        Some(o) => {
            return Err(Error::DimensionMismatch {
                expected: n * r,
                got: o.len(),
            })
        }
        None => {
            owned_offsets = points
                .as_slice()
                .iter()
                .enumerate()
                .map(|(idx, x)| x - domain.center()[idx % r])
                .collect::<Vec<f64>>();
            &owned_offsets
        }
    };
    let mask: Vec<bool> = points
        .iter()
        .map(|x| domain.distance_to_boundary(x) <= boundary_tol)
        .collect();

    // For constant noise, |W (x_j - x_i)|^2 is the a^+-norm and
    // (x_j - x_i) . a^+ f = (W x_j - W x_i) . (W f).
    let constant_whitening = match model.state_noise() {
        None => None,
        Some(c) if c.is_constant() => Some(pseudoinverse_spd(&model.diffusion(points.point(0)), None)?),
        Some(_) => None,
    };
    let state_dependent = model.state_noise().is_some() && constant_whitening.is_none();
    let k = constant_whitening.as_ref().map_or(r, |p| p.rank);
    let coords: Vec<f64> = match &constant_whitening {
        Some(p) => whiten_rows(offsets, r, &p.whitening),
        None => offsets.to_vec(),
    };

    let rows: Vec<Option<RowData>> = (0..n)
        .into_par_iter()
        .with_min_len(ROWS_PER_TASK)
        .map(|i| -> Result<Option<RowData>> {
            if mask[i] {
                return Ok(None);
            }
            let x = points.point(i);
            let f = model.drift_vec(x);
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteEvaluation { what: "drift" });
            }
            let div = divergence(model, x)?;
            let (wf, log_det, whitening) = if state_dependent {
                let p = pseudoinverse_spd(&model.diffusion(x), None)?;
                let wf = (&p.whitening * DVector::from_column_slice(&f)).as_slice().to_vec();
                (wf, p.det_plus.ln(), Some(p.whitening))
            } else if let Some(p) = &constant_whitening {
                let wf = (&p.whitening * DVector::from_column_slice(&f)).as_slice().to_vec();
                (wf, p.det_plus.ln(), None)
            } else {
                (f, 0.0, None)
            };
            let norm2: f64 = wf.iter().map(|v| v * v).sum();
            Ok(Some(RowData {
                wf,
                penalty: div.value + 0.5 * norm2,
                log_det,
                whitening,
                method: div.method,
            }))
        })
        .collect::<Result<_>>()?;

    // Shared-geometry path: cached distances and one matrix product for the
    // drift term, q_ij = W f(x_i) . z_j.
    let shared = if state_dependent {
        None
    } else {
        let d2 = cache.get(&coords, n, k);
        let wf = DMatrix::from_fn(n, k, |i, c| rows[i].as_ref().map_or(0.0, |row| row.wf[c]));
        let z = DMatrix::from_fn(k, n, |c, j| coords[j * k + c]);
        Some((d2, wf * z))
    };

    let sub_steps = spec.sub_steps();
    let log_norm: Vec<f64> = sub_steps
        .iter()
        .map(|&h| -0.5 * r as f64 * (2.0 * std::f64::consts::PI * h).ln())
        .collect();

    // Fills squared distances and drift terms of row i.
    let fill_row = |i: usize, row: &RowData, d2s: &mut [f64], lins: &mut [f64]| match &shared {
        Some((d2, q)) => {
            d2s.copy_from_slice(&d2[i * n..(i + 1) * n]);
            let qii = q[(i, i)];
            for (j, l) in lins.iter_mut().enumerate() {
                *l = q[(i, j)] - qii;
            }
        }
        None => {
            let w = row.whitening.as_ref().expect("state-dependent rows carry a whitening");
            let zi = w * DVector::from_column_slice(&offsets[i * r..(i + 1) * r]);
            for j in 0..n {
                let zj = w * DVector::from_column_slice(&offsets[j * r..(j + 1) * r]);
                let d = zj - &zi;
                d2s[j] = d.norm_squared();
                lins[j] = d.iter().zip(&row.wf).map(|(a, b)| a * b).sum();
            }
        }
    };

    let storage = if spec.order == 1 {
        let mut logk = vec![f64::NEG_INFINITY; n * n];
        let h = sub_steps[0];
        logk.par_chunks_mut(n.max(1))
            .with_min_len(ROWS_PER_TASK)
            .enumerate()
            .for_each(|(i, out)| {
                let Some(row) = &rows[i] else { return };
                let mut d2s = vec![0.0; n];
                let mut lins = vec![0.0; n];
                fill_row(i, row, &mut d2s, &mut lins);
                let base = log_norm[0] - 0.5 * row.log_det - h * row.penalty;
                let inv = 1.0 / (2.0 * h);
                for ((o, d2), lin) in out.iter_mut().zip(&d2s).zip(&lins) {
                    *o = base - d2 * inv - lin;
                }
            });
        Storage::Log(logk)
    } else {
        let mut shift = vec![f64::NEG_INFINITY; n];
        let mut mantissa = vec![0.0; n * n];
        mantissa
            .par_chunks_mut(n.max(1))
            .zip(shift.par_iter_mut())
            .with_min_len(ROWS_PER_TASK)
            .enumerate()
            .for_each(|(i, (out, shift_i))| {
                let Some(row) = &rows[i] else { return };
                let mut d2s = vec![0.0; n];
                let mut lins = vec![0.0; n];
                fill_row(i, row, &mut d2s, &mut lins);
                let bases: Vec<f64> = sub_steps
                    .iter()
                    .zip(&log_norm)
                    .map(|(&h, &ln)| ln - 0.5 * row.log_det - h * row.penalty)
                    .collect();
                let log_entry = |a: usize, j: usize| bases[a] - d2s[j] / (2.0 * sub_steps[a]) - lins[j];
                let mut m = f64::NEG_INFINITY;
                for a in 0..sub_steps.len() {
                    for j in 0..n {
                        m = m.max(log_entry(a, j));
                    }
                }
                *shift_i = m;
                for (j, o) in out.iter_mut().enumerate() {
                    *o = (0..sub_steps.len())
                        .map(|a| coeffs[a] * (log_entry(a, j) - m).exp())
                        .sum();
                }
            });
        Storage::Signed { shift, mantissa }
    };

    Ok(TransitionOperator {
        n,
        r,
        spec: spec.clone(),
        coeffs,
        storage,
        quad_weight: domain.volume() / n as f64,
        divergence_method: rows.iter().flatten().map(|row| row.method).next(),
        boundary_mask: mask,
        point_set_id: points.fingerprint(),
    })
}

fn whiten_rows(offsets: &[f64], r: usize, w: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(offsets.len() / r * w.nrows());
    for o in offsets.chunks_exact(r) {
        out.extend((w * DVector::from_column_slice(o)).iter());
    }
    out
}

/// Log-magnitudes with a sign per entry (`0` marks an exact zero, log `-inf`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SignedLogVec {
    pub log_abs: Vec<f64>,
    pub sign: Vec<i8>,
}

impl SignedLogVec {
    pub fn with_len(n: usize) -> Self {
        Self {
            log_abs: vec![f64::NEG_INFINITY; n],
            sign: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.log_abs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_abs.is_empty()
    }
}

/// Applies the operator to a density given by its log values.
pub fn apply_operator(op: &TransitionOperator, logw: &[f64]) -> Result<SignedLogVec> {
    let mut out = SignedLogVec::with_len(op.n);
    apply_operator_into(op, logw, &mut out)?;
    Ok(out)
}

/// [`apply_operator`] writing into a reusable buffer.
///
/// First order: `out_i = log w + LSE_j (log K_ij + logw_j)` with a per-row max
/// shift. Higher orders: weights are shifted by their global maximum, the
/// signed sum is formed in the linear domain and its log-magnitude returned.
pub fn apply_operator_into(op: &TransitionOperator, logw: &[f64], out: &mut SignedLogVec) -> Result<()> {
    let n = op.n;
    if logw.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: logw.len(),
        });
    }
    if logw.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::InvalidInput("log-weights must be finite or -inf".into()));
    }
    let g = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if g == f64::NEG_INFINITY {
        return Err(Error::DegenerateWeights);
    }
    out.log_abs.resize(n, f64::NEG_INFINITY);
    out.sign.resize(n, 0);
    let log_wq = op.quad_weight.ln();
    let mask = &op.boundary_mask;

    match &op.storage {
        Storage::Log(l) => {
            out.log_abs
                .par_iter_mut()
                .zip(out.sign.par_iter_mut())
                .with_min_len(ROWS_PER_TASK)
                .enumerate()
                .for_each(|(i, (val, sign))| {
                    *val = f64::NEG_INFINITY;
                    *sign = 0;
                    if mask[i] {
                        return;
                    }
                    let row = &l[i * n..(i + 1) * n];
                    let m = row
                        .iter()
                        .zip(logw)
                        .map(|(a, b)| a + b)
                        .fold(f64::NEG_INFINITY, f64::max);
                    if m == f64::NEG_INFINITY {
                        return;
                    }
                    let s: f64 = row
                        .iter()
                        .zip(logw)
                        .map(|(a, b)| a + b - m)
                        .filter(|&t| t > NEGLIGIBLE_LOG)
                        .map(f64::exp)
                        .sum();
                    *val = log_wq + m + s.ln();
                    *sign = 1;
                });
        }
        Storage::Signed { shift, mantissa } => {
            let v: Vec<f64> = logw.iter().map(|w| (w - g).exp()).collect();
            let c = op.identity_coeff();
            out.log_abs
                .par_iter_mut()
                .zip(out.sign.par_iter_mut())
                .with_min_len(ROWS_PER_TASK)
                .enumerate()
                .for_each(|(i, (val, sign))| {
                    *val = f64::NEG_INFINITY;
                    *sign = 0;
                    if mask[i] {
                        return;
                    }
                    let row = &mantissa[i * n..(i + 1) * n];
                    let s: f64 = row.iter().zip(&v).map(|(a, b)| a * b).sum();
                    let kernel_term = (s != 0.0).then(|| (log_wq + shift[i] + s.abs().ln(), s.signum()));
                    let id_term = (c != 0.0 && logw[i] > f64::NEG_INFINITY)
                        .then(|| (c.abs().ln() + logw[i] - g, c.signum()));
                    let (l, sg) = signed_log_add(kernel_term, id_term);
                    *val = l + g;
                    *sign = sg;
                });
        }
    }
    Ok(())
}

/// `log|a + b|` and its sign for terms given as (log-magnitude, sign).
fn signed_log_add(a: Option<(f64, f64)>, b: Option<(f64, f64)>) -> (f64, i8) {
    match (a, b) {
        (None, None) => (f64::NEG_INFINITY, 0),
        (Some((l, s)), None) | (None, Some((l, s))) => (l, s as i8),
        (Some((la, sa)), Some((lb, sb))) => {
            let m = la.max(lb);
            let v = sa * (la - m).exp() + sb * (lb - m).exp();
            if v == 0.0 {
                (f64::NEG_INFINITY, 0)
            } else {
                (m + v.abs().ln(), v.signum() as i8)
            }
        }
    }
}
