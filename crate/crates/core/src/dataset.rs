//! Channel datasets and the `CHD1` binary format.
//!
//! Layout (little-endian): magic `CHD1`, `u16` version (1), `u16` flags
//! (bit 0: normalized), `u32` N, `u64` M, then `M * N` pairs of `f32`
//! `(re, im)`, sample-major. Provenance lives in a JSON sidecar
//! `<file>.meta.json`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{DecodeError, Error, Result};

pub const CHD_MAGIC: [u8; 4] = *b"CHD1";
pub const CHD_VERSION: u16 = 1;
const HEADER_LEN: usize = 20;
const FLAG_NORMALIZED: u16 = 1;

/// Free-form provenance attached to a dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_scale: Option<f64>,
}

/// `M` complex channel vectors of common length `N`, stored sample-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDataset {
    n_antennas: usize,
    data: Vec<Complex64>,
    pub norm_target: f64,
    pub normalized: bool,
    pub meta: DatasetMeta,
}

impl ChannelDataset {
    pub fn new(n_antennas: usize, data: Vec<Complex64>) -> Result<Self> {
        if n_antennas == 0 {
            return Err(Error::InvalidArgument("dataset dimension N must be positive".into()));
        }
        if !data.len().is_multiple_of(n_antennas) {
            return Err(Error::InvalidArgument(format!(
                "{} entries do not split into vectors of length {n_antennas}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite entry in sample {}", i / n_antennas)));
        }
        Ok(Self { n_antennas, data, norm_target: n_antennas as f64, normalized: false, meta: DatasetMeta::default() })
    }

    pub fn from_samples<I, S>(n_antennas: usize, samples: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[Complex64]>,
    {
        let mut data = Vec::new();
        for (i, s) in samples.into_iter().enumerate() {
            let s = s.as_ref();
            if s.len() != n_antennas {
                return Err(Error::InvalidArgument(format!(
                    "sample {i} has length {}, expected {n_antennas}",
                    s.len()
                )));
            }
            data.extend_from_slice(s);
        }
        Self::new(n_antennas, data)
    }

    pub fn with_meta(mut self, meta: DatasetMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.n_antennas
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.n_antennas..(i + 1) * self.n_antennas]
    }

    pub fn samples(&self) -> impl ExactSizeIterator<Item = &[Complex64]> + '_ {
        self.data.chunks_exact(self.n_antennas)
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn mean_sq_norm(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.samples().map(sq_norm).sum::<f64>() / self.len() as f64
    }

    /// First `m` samples (or all of them if fewer).
    pub fn head(&self, m: usize) -> ChannelDataset {
        let m = m.min(self.len());
        let mut out = self.clone();
        out.data.truncate(m * self.n_antennas);
        out
    }

    /// Samples `range` as a new dataset.
    pub fn slice(&self, range: std::ops::Range<usize>) -> ChannelDataset {
        let mut out = self.clone();
        out.data = self.data[range.start * self.n_antennas..range.end * self.n_antennas].to_vec();
        out
    }

    /// Stacked real rows `[Re h, Im h]` for samples in `range`, row-major `(len, 2N)`.
    pub fn real_rows(&self, range: std::ops::Range<usize>) -> Vec<f64> {
        let n = self.n_antennas;
        let mut out = vec![0.0; range.len() * 2 * n];
        for (r, i) in range.enumerate() {
            let dst = &mut out[r * 2 * n..(r + 1) * 2 * n];
            for (j, z) in self.sample(i).iter().enumerate() {
                dst[j] = z.re;
                dst[n + j] = z.im;
            }
        }
        out
    }

    /// Checks the normalization invariant when the dataset is flagged normalized.
    pub fn check_normalized(&self, rel_tol: f64) -> bool {
        !self.normalized || ((self.mean_sq_norm() - self.norm_target).abs() / self.norm_target) <= rel_tol
    }
}

pub(crate) fn sq_norm(h: &[Complex64]) -> f64 {
    h.iter().map(|z| z.norm_sqr()).sum()
}

/// Scales all samples by one global factor so that the mean squared norm
/// equals `norm_target`.
pub fn normalize_dataset(ds: &ChannelDataset) -> Result<ChannelDataset> {
    if ds.is_empty() {
        return Err(Error::DegenerateInput("cannot normalize an empty dataset".into()));
    }
    let total: f64 = ds.samples().map(sq_norm).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateInput("all samples have zero norm".into()));
    }
    let scale = (ds.norm_target * ds.len() as f64 / total).sqrt();
    let mut out = ds.clone();
    if scale != 1.0 {
        for z in &mut out.data {
            *z *= scale;
        }
    }
    out.normalized = true;
    out.meta.norm_scale = Some(ds.meta.norm_scale.unwrap_or(1.0) * scale);
    Ok(out)
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Encodes a dataset into `CHD1` bytes.
pub fn encode_dataset(ds: &ChannelDataset) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + ds.data.len() * 8);
    buf.extend_from_slice(&CHD_MAGIC);
    buf.extend_from_slice(&CHD_VERSION.to_le_bytes());
    let flags = if ds.normalized { FLAG_NORMALIZED } else { 0 };
    buf.extend_from_slice(&flags.to_le_bytes());
    buf.extend_from_slice(&(ds.n_antennas as u32).to_le_bytes());
    buf.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    for z in &ds.data {
        buf.extend_from_slice(&(z.re as f32).to_le_bytes());
        buf.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    buf
}

/// Decodes `CHD1` bytes. `path` is only used in error messages.
pub fn decode_dataset(bytes: &[u8], path: &Path) -> Result<ChannelDataset> {
    let err = |kind| Error::decode(path, kind);
    if bytes.len() < 4 {
        return Err(err(DecodeError::Truncated { expected: HEADER_LEN as u64, found: bytes.len() as u64 }));
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != CHD_MAGIC {
        return Err(err(DecodeError::BadMagic { expected: CHD_MAGIC, found: magic }));
    }
    if bytes.len() < HEADER_LEN {
        return Err(err(DecodeError::Truncated { expected: HEADER_LEN as u64, found: bytes.len() as u64 }));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CHD_VERSION {
        return Err(err(DecodeError::VersionMismatch { expected: CHD_VERSION, found: version }));
    }
    let flags = u16::from_le_bytes([bytes[6], bytes[7]]);
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let m = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    if n == 0 {
        return Err(err(DecodeError::ZeroDimension));
    }
    let expected = (HEADER_LEN as u64).saturating_add(m.saturating_mul(n as u64).saturating_mul(8));
    let found = bytes.len() as u64;
    if found < expected {
        return Err(err(DecodeError::Truncated { expected, found }));
    }
    if found > expected {
        return Err(err(DecodeError::TrailingBytes { expected, found }));
    }
    let body = &bytes[HEADER_LEN..];
    let mut data = Vec::with_capacity(m as usize * n);
    for pair in body.chunks_exact(8) {
        let re = f32::from_le_bytes(pair[0..4].try_into().unwrap());
        let im = f32::from_le_bytes(pair[4..8].try_into().unwrap());
        if !re.is_finite() || !im.is_finite() {
            return Err(err(DecodeError::NonFinite));
        }
        data.push(Complex64::new(re as f64, im as f64));
    }
    let mut ds = ChannelDataset::new(n, data)?;
    ds.normalized = flags & FLAG_NORMALIZED != 0;
    Ok(ds)
}

/// Writes `ds` as `CHD1` plus its JSON sidecar.
pub fn write_dataset(ds: &ChannelDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_dataset(ds);
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let json = serde_json::to_vec_pretty(&Sidecar { norm_target: ds.norm_target, meta: ds.meta.clone() })?;
    fs::write(&side, json).map_err(|e| Error::io(&side, e))?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    norm_target: f64,
    #[serde(flatten)]
    meta: DatasetMeta,
}

/// Reads a `CHD1` file and, when present, its sidecar.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<ChannelDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut ds = decode_dataset(&bytes, path)?;
    let side = sidecar_path(path);
    if side.exists() {
        let text = fs::read(&side).map_err(|e| Error::io(&side, e))?;
        let sc: Sidecar = serde_json::from_slice(&text)?;
        ds.norm_target = sc.norm_target;
        ds.meta = sc.meta;
    }
    Ok(ds)
}
