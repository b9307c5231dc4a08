//! Kronecker DFT codebooks and codebook fingerprints.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::ChannelDataset;
use crate::error::{Error, Result};
use crate::linalg::{gemm_nt, CMatrix};
use crate::par;
use crate::types::UraGeometry;

/// `C = c1 * c2` unit-norm codewords; codeword `i * c2 + j` is the Kronecker
/// product of vertical DFT column `i` and horizontal DFT column `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub geometry: UraGeometry,
    pub c1: usize,
    pub c2: usize,
    codewords: Vec<Complex64>,
    id: String,
}

/// Parameters describing a codebook, as exported next to fingerprints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookInfo {
    pub n_vertical: usize,
    pub n_horizontal: usize,
    pub c1: usize,
    pub c2: usize,
    pub size: usize,
    pub bits: f64,
    pub id: String,
}

impl Codebook {
    /// Builds a codebook from explicit codewords (each normalized to unit norm).
    pub fn from_codewords(n: usize, words: &[Vec<Complex64>]) -> Result<Self> {
        if n == 0 || words.is_empty() || words.iter().any(|w| w.len() != n) {
            return Err(Error::Config("codewords must be non-empty with common length".into()));
        }
        let mut codewords = Vec::with_capacity(n * words.len());
        for w in words {
            let norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if !(norm > 0.0) {
                return Err(Error::Config("zero codeword".into()));
            }
            codewords.extend(w.iter().map(|z| z / norm));
        }
        let geometry = UraGeometry { n_vertical: 1, n_horizontal: n, spacing_vertical: 1.0, spacing_horizontal: 0.5 };
        let id = hash_id(&geometry, 1, words.len(), &codewords);
        Ok(Self { geometry, c1: 1, c2: words.len(), codewords, id })
    }

    pub fn len(&self) -> usize {
        self.codewords.len() / self.n_antennas()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    pub fn n_antennas(&self) -> usize {
        self.geometry.n_antennas()
    }

    pub fn bits(&self) -> f64 {
        (self.len() as f64).log2()
    }

    pub fn codeword(&self, i: usize) -> &[Complex64] {
        let n = self.n_antennas();
        &self.codewords[i * n..(i + 1) * n]
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn info(&self) -> CodebookInfo {
        CodebookInfo {
            n_vertical: self.geometry.n_vertical,
            n_horizontal: self.geometry.n_horizontal,
            c1: self.c1,
            c2: self.c2,
            size: self.len(),
            bits: self.bits(),
            id: self.id.clone(),
        }
    }

    /// Realified `c^H` rows, `2C x 2N`.
    fn correlator(&self) -> Vec<f64> {
        let n = self.n_antennas();
        CMatrix::from_fn(self.len(), n, |i, j| self.codewords[i * n + j].conj()).realify()
    }
}

fn hash_id(g: &UraGeometry, c1: usize, c2: usize, words: &[Complex64]) -> String {
    let mut h = Sha256::new();
    h.update(format!("{}x{}:{}x{}", g.n_vertical, g.n_horizontal, c1, c2).as_bytes());
    for z in words {
        h.update(z.re.to_le_bytes());
        h.update(z.im.to_le_bytes());
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// First `c` columns of the `n`-point DFT grid: column `j` is
/// `exp(j 2 pi k j / n)`, `k = 0..n`.
fn dft_columns(n: usize, c: usize) -> Vec<Vec<Complex64>> {
    (0..c)
        .map(|col| {
            (0..n)
                .map(|k| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (k * col) as f64 / n as f64))
                .collect()
        })
        .collect()
}

pub fn build_codebook(geometry: &UraGeometry, c1: usize, c2: usize) -> Result<Codebook> {
    geometry.validate()?;
    if c1 == 0 || c2 == 0 {
        return Err(Error::Config("codebook sizes must be positive".into()));
    }
    let (nv, nh) = (geometry.n_vertical, geometry.n_horizontal);
    let fv = dft_columns(nv, c1);
    let fh = dft_columns(nh, c2);
    let scale = 1.0 / ((nv * nh) as f64).sqrt();
    let mut codewords = Vec::with_capacity(c1 * c2 * nv * nh);
    for v in &fv {
        for h in &fh {
            for a in v {
                codewords.extend(h.iter().map(|b| a * b * scale));
            }
        }
    }
    let id = hash_id(geometry, c1, c2, &codewords);
    Ok(Codebook { geometry: *geometry, c1, c2, codewords, id })
}

/// 0-based index of the codeword maximizing `|c^H h|`; ties go to the lowest index.
pub fn feedback_index(cb: &Codebook, h: &[Complex64]) -> Result<usize> {
    if h.len() != cb.n_antennas() {
        return Err(Error::InvalidArgument(format!(
            "vector length {} != codebook dimension {}",
            h.len(),
            cb.n_antennas()
        )));
    }
    let mut best = (0usize, -1.0f64);
    for i in 0..cb.len() {
        let c: Complex64 = cb.codeword(i).iter().zip(h).map(|(a, b)| a.conj() * b).sum();
        let v = c.norm_sqr();
        if v > best.1 {
            best = (i, v);
        }
    }
    if !(best.1 > 0.0) {
        return Err(Error::DegenerateInput("zero correlation with every codeword".into()));
    }
    Ok(best.0)
}

/// Feedback indices for all samples, computed in batches.
pub fn feedback_indices(cb: &Codebook, ds: &ChannelDataset) -> Result<Vec<usize>> {
    let n = cb.n_antennas();
    if ds.n_antennas() != n {
        return Err(Error::InvalidArgument(format!("dataset dimension {} != codebook dimension {n}", ds.n_antennas())));
    }
    let cw = cb.len();
    let corr = cb.correlator();
    let parts = par::map_chunks(ds.len(), par::CHUNK_ROWS, |r| {
        let m = r.len();
        let start = r.start;
        let rows = ds.real_rows(r);
        let mut y = vec![0.0; m * 2 * cw];
        gemm_nt(1.0, &rows, &corr, 0.0, &mut y, m, 2 * n, 2 * cw);
        let mut idx = Vec::with_capacity(m);
        let mut bad = Vec::new();
        for i in 0..m {
            let row = &y[i * 2 * cw..(i + 1) * 2 * cw];
            let mut best = (0usize, -1.0f64);
            for c in 0..cw {
                let v = row[c] * row[c] + row[cw + c] * row[cw + c];
                if v > best.1 {
                    best = (c, v);
                }
            }
            if !(best.1 > 0.0) {
                bad.push(start + i);
            }
            idx.push(best.0);
        }
        (idx, bad)
    });
    let mut out = Vec::with_capacity(ds.len());
    let mut bad = Vec::new();
    for (i, b) in parts {
        out.extend(i);
        bad.extend(b);
    }
    if !bad.is_empty() {
        let shown: Vec<String> = bad.iter().take(10).map(|i| i.to_string()).collect();
        return Err(Error::DegenerateInput(format!(
            "{} sample(s) with zero correlation to every codeword: {}{}",
            bad.len(),
            shown.join(", "),
            if bad.len() > 10 { ", ..." } else { "" }
        )));
    }
    Ok(out)
}

/// Normalized histogram of feedback indices over a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub histogram: Vec<f64>,
    pub n_samples: usize,
    pub codebook_id: String,
}

impl Fingerprint {
    /// Entries carrying more than `threshold` mass.
    pub fn support(&self, threshold: f64) -> usize {
        self.histogram.iter().filter(|&&p| p > threshold).count()
    }
}

pub fn fingerprint(cb: &Codebook, ds: &ChannelDataset) -> Result<Fingerprint> {
    if ds.is_empty() {
        return Err(Error::InvalidArgument("fingerprint of an empty dataset".into()));
    }
    let idx = feedback_indices(cb, ds)?;
    let mut counts = vec![0usize; cb.len()];
    for i in idx {
        counts[i] += 1;
    }
    let m = ds.len() as f64;
    Ok(Fingerprint {
        histogram: counts.iter().map(|&c| c as f64 / m).collect(),
        n_samples: ds.len(),
        codebook_id: cb.id().to_string(),
    })
}

/// Total variation distance `1/2 sum |p - q|`.
pub fn tvd(p: &Fingerprint, q: &Fingerprint) -> Result<f64> {
    if p.codebook_id != q.codebook_id || p.histogram.len() != q.histogram.len() {
        return Err(Error::IncompatibleFingerprints(format!(
            "codebooks {} ({} entries) and {} ({} entries)",
            p.codebook_id,
            p.histogram.len(),
            q.codebook_id,
            q.histogram.len()
        )));
    }
    let d = 0.5 * p.histogram.iter().zip(&q.histogram).map(|(a, b)| (a - b).abs()).sum::<f64>();
    Ok(d.min(1.0))
}
