#![allow(dead_code)]

use chanprobe::linalg::CMatrix;
use chanprobe::rng::complex_normal;
use chanprobe::{ChannelDataset, Complex64, RngStream};

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// `A A^H / n + floor I` for a random complex `A`.
pub fn random_covariance(n: usize, rank: usize, floor: f64, stream: &RngStream) -> CMatrix {
    let mut rng = stream.rng();
    let a = CMatrix::from_fn(n, rank, |_, _| complex_normal(&mut rng));
    a.matmul(&a.adjoint()).scale(1.0 / rank as f64).add_diagonal(floor)
}

pub fn random_vector(n: usize, scale: f64, stream: &RngStream) -> Vec<Complex64> {
    let mut rng = stream.rng();
    (0..n).map(|_| complex_normal(&mut rng) * scale).collect()
}

/// `m` draws of `N_C(mu, C)` using an explicit factor.
pub fn gaussian_samples(mu: &[Complex64], cov: &CMatrix, m: usize, stream: &RngStream) -> ChannelDataset {
    let l = chanprobe::linalg::cholesky_psd(cov, "test covariance").unwrap().l;
    let mut rng = stream.rng();
    let n = mu.len();
    let mut data = Vec::with_capacity(m * n);
    for _ in 0..m {
        let eps: Vec<Complex64> = (0..n).map(|_| complex_normal(&mut rng)).collect();
        let x = l.matvec(&eps);
        data.extend(x.iter().zip(mu).map(|(a, b)| a + b));
    }
    ChannelDataset::new(n, data).unwrap()
}

pub fn dataset_from_parts(n: usize, re: &[f64], im: &[f64]) -> ChannelDataset {
    let data: Vec<Complex64> = re.iter().zip(im).map(|(a, b)| c(*a, *b)).collect();
    ChannelDataset::new(n, data).unwrap()
}
