//! `GMM1` model files and JSON schedules.
//!
//! `GMM1` layout (little-endian): magic `GMM1`, `u16` version (1), `u32` K,
//! `u32` N, `f64` weights `[K]`, `f64` interleaved complex means `[K][N][2]`,
//! then for each component the lower triangle of its Cholesky factor,
//! row-major, interleaved re/im. A scov model is stored as `K = 1`.

use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{DecodeError, Error, Result};
use crate::linalg::{cholesky_psd, CMatrix, Cholesky};

use super::diffusion::DiffusionSchedule;
use super::gmm::GmmModel;

pub const GMM_MAGIC: [u8; 4] = *b"GMM1";
pub const GMM_VERSION: u16 = 1;
const HEADER_LEN: usize = 14;

pub fn encode_model(model: &GmmModel) -> Result<Vec<u8>> {
    let k = model.n_components();
    let n = model.n_antennas();
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * (k + 2 * k * n + k * n * (n + 1)));
    buf.extend_from_slice(&GMM_MAGIC);
    buf.extend_from_slice(&GMM_VERSION.to_le_bytes());
    buf.extend_from_slice(&(k as u32).to_le_bytes());
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    for w in &model.weights {
        buf.extend_from_slice(&w.to_le_bytes());
    }
    for mu in &model.means {
        for z in mu {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    for (j, c) in model.covariances.iter().enumerate() {
        let f = cholesky_psd(c, &format!("component {j} covariance"))?;
        for a in 0..n {
            for b in 0..=a {
                let z = f.l[(a, b)];
                buf.extend_from_slice(&z.re.to_le_bytes());
                buf.extend_from_slice(&z.im.to_le_bytes());
            }
        }
    }
    Ok(buf)
}

pub fn decode_model(bytes: &[u8], path: &Path) -> Result<GmmModel> {
    let err = |kind| Error::decode(path, kind);
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && bytes[0..4] != GMM_MAGIC {
            return Err(err(DecodeError::BadMagic { expected: GMM_MAGIC, found: bytes[0..4].try_into().unwrap() }));
        }
        return Err(err(DecodeError::Truncated { expected: HEADER_LEN as u64, found: bytes.len() as u64 }));
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != GMM_MAGIC {
        return Err(err(DecodeError::BadMagic { expected: GMM_MAGIC, found: magic }));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != GMM_VERSION {
        return Err(err(DecodeError::VersionMismatch { expected: GMM_VERSION, found: version }));
    }
    let k = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let n = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    if k == 0 || n == 0 {
        return Err(err(DecodeError::ZeroDimension));
    }
    let n_f64 = (k as u64) * (1 + 2 * n as u64 + (n as u64) * (n as u64 + 1));
    let expected = HEADER_LEN as u64 + 8 * n_f64;
    let found = bytes.len() as u64;
    if found < expected {
        return Err(err(DecodeError::Truncated { expected, found }));
    }
    if found > expected {
        return Err(err(DecodeError::TrailingBytes { expected, found }));
    }
    let mut vals = bytes[HEADER_LEN..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut next = || vals.next().unwrap();
    let weights: Vec<f64> = (0..k).map(|_| next()).collect();
    let means: Vec<Vec<Complex64>> = (0..k).map(|_| (0..n).map(|_| Complex64::new(next(), next())).collect()).collect();
    let mut covs = Vec::with_capacity(k);
    for _ in 0..k {
        let mut l = CMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..=a {
                l[(a, b)] = Complex64::new(next(), next());
            }
        }
        covs.push(Cholesky { l, loading: 0.0 }.reconstruct());
    }
    if weights.iter().any(|w| !w.is_finite())
        || means.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite())
        || covs.iter().any(|c| !c.is_finite())
    {
        return Err(err(DecodeError::NonFinite));
    }
    GmmModel::new(weights, means, covs)
}

pub fn write_model(model: &GmmModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_model(model)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: impl AsRef<Path>) -> Result<GmmModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes, path)
}

pub fn write_schedule(s: &DiffusionSchedule, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, serde_json::to_vec_pretty(s)?).map_err(|e| Error::io(path, e))
}

pub fn read_schedule(path: impl AsRef<Path>) -> Result<DiffusionSchedule> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_normal, RngStream};

    fn random_model(k: usize, n: usize) -> GmmModel {
        let mut rng = RngStream::new(4, 0).rng();
        let covs = (0..k)
            .map(|_| {
                let a = CMatrix::from_fn(n, n, |_, _| complex_normal(&mut rng));
                a.matmul(&a.adjoint())
            })
            .collect();
        let means = (0..k).map(|_| (0..n).map(|_| complex_normal(&mut rng)).collect()).collect();
        let w = vec![1.0 / k as f64; k];
        GmmModel::new(w, means, covs).unwrap()
    }

    #[test]
    fn model_round_trip() {
        let m = random_model(3, 5);
        let bytes = encode_model(&m).unwrap();
        let back = decode_model(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back.weights, m.weights);
        assert_eq!(back.means, m.means);
        for (a, b) in back.covariances.iter().zip(&m.covariances) {
            assert!(a.sub(b).frobenius_norm() <= 1e-12 * b.frobenius_norm());
        }
        // factor of the reconstruction re-encodes to (nearly) the same bytes
        let again = encode_model(&back).unwrap();
        assert_eq!(again.len(), bytes.len());
    }

    #[test]
    fn decode_errors() {
        let bytes = encode_model(&random_model(2, 3)).unwrap();
        let p = Path::new("mem");
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_model(&bad, p), Err(Error::Decode { kind: DecodeError::BadMagic { .. }, .. })));
        assert!(matches!(
            decode_model(&bytes[..bytes.len() - 1], p),
            Err(Error::Decode { kind: DecodeError::Truncated { .. }, .. })
        ));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(decode_model(&bad, p), Err(Error::Decode { kind: DecodeError::VersionMismatch { .. }, .. })));
    }
}
