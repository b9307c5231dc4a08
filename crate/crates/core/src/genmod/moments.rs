use num_complex::Complex64;

use crate::dataset::ChannelDataset;
use crate::linalg::{complex_gram_from_real, gemm_tn, CMatrix};

const GRAM_CHUNK: usize = 2048;

/// Weighted mean and covariance `sum w (h - mu)(h - mu)^H / sum w` over the
/// stacked real rows of `ds`. Rows with zero weight are skipped. The
/// computation is sequential so results do not depend on the caller's
/// threading.
pub(crate) fn weighted_moments(
    ds: &ChannelDataset,
    rows: &[f64],
    weights: Option<&[f64]>,
) -> (f64, Vec<Complex64>, CMatrix) {
    let n = ds.n_antennas();
    let d = 2 * n;
    let m = ds.len();
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);

    let mut total = 0.0;
    let mut acc = vec![0.0; d];
    for i in 0..m {
        let wi = w(i);
        if wi == 0.0 {
            continue;
        }
        total += wi;
        for (a, x) in acc.iter_mut().zip(&rows[i * d..(i + 1) * d]) {
            *a += wi * x;
        }
    }
    if !(total > 0.0) {
        return (0.0, vec![Complex64::new(0.0, 0.0); n], CMatrix::zeros(n, n));
    }
    let mean_real: Vec<f64> = acc.iter().map(|a| a / total).collect();

    let mut gram = vec![0.0; d * d];
    let mut buf = Vec::with_capacity(GRAM_CHUNK * d);
    let mut filled = 0;
    let flush = |buf: &mut Vec<f64>, filled: &mut usize, gram: &mut [f64]| {
        if *filled > 0 {
            gemm_tn(1.0, buf, buf, 1.0, gram, d, *filled, d);
            buf.clear();
            *filled = 0;
        }
    };
    for i in 0..m {
        let wi = w(i);
        if wi == 0.0 {
            continue;
        }
        let s = wi.sqrt();
        buf.extend(rows[i * d..(i + 1) * d].iter().zip(&mean_real).map(|(x, mu)| s * (x - mu)));
        filled += 1;
        if filled == GRAM_CHUNK {
            flush(&mut buf, &mut filled, &mut gram);
        }
    }
    flush(&mut buf, &mut filled, &mut gram);

    let mut cov = complex_gram_from_real(n, &gram).scale(1.0 / total);
    // exact Hermitian symmetry
    for a in 0..n {
        cov[(a, a)].im = 0.0;
        for b in 0..a {
            let z = cov[(a, b)];
            cov[(b, a)] = z.conj();
        }
    }
    let mean = (0..n).map(|j| Complex64::new(mean_real[j], mean_real[n + j])).collect();
    (total, mean, cov)
}
