//! Binary operator cache.
//!
//! Layout (little endian): magic `YYOP`, `u32` version, `u64` n, `u64` r,
//! `u64` order, `f64` dt, `u64` point-set fingerprint; then `f64` values:
//! quadrature weight, coefficients `c_1 .. c_{N+1}`, boundary mask as 0/1,
//! per-row shifts (order >= 2 only) and the row-major `n x n` matrix.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::operator::{Storage, TransitionOperator};
use super::KernelSpec;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"YYOP";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CacheHeader {
    pub n: u64,
    pub r: u64,
    pub order: u64,
    pub dt: f64,
    pub point_set_id: u64,
}

impl CacheHeader {
    pub fn of(op: &TransitionOperator) -> Self {
        Self {
            n: op.n as u64,
            r: op.r as u64,
            order: op.spec.order as u64,
            dt: op.spec.dt,
            point_set_id: op.point_set_id,
        }
    }
}

/// File name for an operator keyed by model name, spec and point set.
pub fn operator_cache_path(dir: &Path, model_name: &str, spec: &KernelSpec, point_set_id: u64) -> PathBuf {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    eat(model_name.as_bytes());
    eat(&point_set_id.to_le_bytes());
    eat(&spec.dt.to_bits().to_le_bytes());
    for v in spec.scales.iter().chain(&spec.exponents) {
        eat(&v.to_bits().to_le_bytes());
    }
    dir.join(format!("op-{h:016x}.bin"))
}

pub fn save_operator(path: &Path, op: &TransitionOperator) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        let head = CacheHeader::of(op);
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&head.n.to_le_bytes())?;
        w.write_all(&head.r.to_le_bytes())?;
        w.write_all(&head.order.to_le_bytes())?;
        w.write_all(&head.dt.to_le_bytes())?;
        w.write_all(&head.point_set_id.to_le_bytes())?;
        let mut put = |v: f64| w.write_all(&v.to_le_bytes());
        put(op.quad_weight)?;
        for &c in &op.coeffs {
            put(c)?;
        }
        for &m in &op.boundary_mask {
            put(if m { 1.0 } else { 0.0 })?;
        }
        match &op.storage {
            Storage::Log(l) => {
                for &v in l {
                    put(v)?;
                }
            }
            Storage::Signed { shift, mantissa } => {
                for &v in shift.iter().chain(mantissa) {
                    put(v)?;
                }
            }
        }
        w.flush()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

/// Reads a cached operator, checking it against `spec` and the expected
/// point-set fingerprint. Returns `Ok(None)` when the file is absent.
pub fn load_operator(
    path: &Path,
    spec: &KernelSpec,
    r: usize,
    point_set_id: u64,
) -> Result<Option<TransitionOperator>> {
    let file = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let mut rd = BufReader::new(file);
    let mut magic = [0u8; 4];
    rd.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Cache(format!("{} is not an operator cache", path.display())));
    }
    let mut b4 = [0u8; 4];
    rd.read_exact(&mut b4)?;
    if u32::from_le_bytes(b4) != VERSION {
        return Err(Error::Cache("unsupported cache version".into()));
    }
    let mut b8 = [0u8; 8];
    let mut next_u64 = |rd: &mut BufReader<fs::File>| -> Result<u64> {
        rd.read_exact(&mut b8)?;
        Ok(u64::from_le_bytes(b8))
    };
    let n = next_u64(&mut rd)? as usize;
    let rr = next_u64(&mut rd)? as usize;
    let order = next_u64(&mut rd)? as usize;
    let dt = f64::from_bits(next_u64(&mut rd)?);
    let id = next_u64(&mut rd)?;
    if rr != r || order != spec.order || dt != spec.dt || id != point_set_id {
        return Err(Error::Cache(format!(
            "{} was built for a different configuration",
            path.display()
        )));
    }
    let next_f64 = |rd: &mut BufReader<fs::File>| -> Result<f64> {
        let mut b = [0u8; 8];
        rd.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    };
    let quad_weight = next_f64(&mut rd)?;
    let coeffs = (0..=order).map(|_| next_f64(&mut rd)).collect::<Result<Vec<_>>>()?;
    let boundary_mask = (0..n)
        .map(|_| next_f64(&mut rd).map(|v| v != 0.0))
        .collect::<Result<Vec<_>>>()?;
    let storage = if order == 1 {
        Storage::Log((0..n * n).map(|_| next_f64(&mut rd)).collect::<Result<_>>()?)
    } else {
        let shift = (0..n).map(|_| next_f64(&mut rd)).collect::<Result<_>>()?;
        let mantissa = (0..n * n).map(|_| next_f64(&mut rd)).collect::<Result<_>>()?;
        Storage::Signed { shift, mantissa }
    };
    let mut trailing = [0u8; 1];
    if rd.read(&mut trailing)? != 0 {
        return Err(Error::Cache("trailing bytes in operator cache".into()));
    }
    Ok(Some(TransitionOperator {
        n,
        r,
        spec: spec.clone(),
        coeffs,
        storage,
        quad_weight,
        boundary_mask,
        point_set_id: id,
        divergence_method: None,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{assemble_operator, DEFAULT_BOUNDARY_TOL};
    use crate::models::make_cubic_sensor;
    use crate::qmc::{halton_unit, scale_to_domain, Domain};

    #[test]
    fn roundtrip_both_storages() {
        let dir = tempfile::tempdir().unwrap();
        let model = make_cubic_sensor(2);
        let ps = scale_to_domain(&halton_unit(25, 2, 0).unwrap(), &Domain::centered(2, 1.0).unwrap()).unwrap();
        for order in [1, 2] {
            let spec = KernelSpec::new(order, 0.01).unwrap();
            let mut op = assemble_operator(&model, &ps, &spec, DEFAULT_BOUNDARY_TOL).unwrap();
            let path = operator_cache_path(dir.path(), model.name(), &spec, ps.fingerprint());
            assert!(load_operator(&path, &spec, 2, ps.fingerprint()).unwrap().is_none());
            save_operator(&path, &op).unwrap();
            let back = load_operator(&path, &spec, 2, ps.fingerprint()).unwrap().unwrap();
            op.divergence_method = None;
            assert_eq!(back, op);
            assert!(load_operator(&path, &spec, 2, ps.fingerprint() ^ 1).is_err());
        }
    }

    #[test]
    fn rejects_foreign_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        std::fs::write(&path, b"not an operator").unwrap();
        let spec = KernelSpec::new(1, 0.1).unwrap();
        assert!(load_operator(&path, &spec, 1, 0).is_err());
    }
}
