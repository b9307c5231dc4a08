//! Synthetic radio propagation environment.
//!
//! Users sit in a few disjoint angular sectors (a street-canyon-like layout).
//! Each user sees a handful of specular paths with complex Gaussian gains,
//! optionally a dominant line-of-sight path, and a weak spatially white
//! diffuse component. The resulting dataset is globally normalized.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{normalize_dataset, ChannelDataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::par;
use crate::rng::{complex_normal, RngStream};
use crate::types::{ChannelVector, UraGeometry};

/// Angular region users are drawn from. Angles are uniform in
/// `center +/- spread` (radians). Elevation is measured from the array's
/// vertical axis, so `pi/2` is the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleSector {
    pub azimuth_center: f64,
    pub azimuth_spread: f64,
    pub elevation_center: f64,
    pub elevation_spread: f64,
}

impl AngleSector {
    pub fn from_degrees(az: f64, az_spread: f64, el: f64, el_spread: f64) -> Self {
        Self {
            azimuth_center: az.to_radians(),
            azimuth_spread: az_spread.to_radians(),
            elevation_center: el.to_radians(),
            elevation_spread: el_spread.to_radians(),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let az = self.azimuth_center + self.azimuth_spread * (2.0 * rng.random::<f64>() - 1.0);
        let el = self.elevation_center + self.elevation_spread * (2.0 * rng.random::<f64>() - 1.0);
        (az, el)
    }
}

fn default_sectors() -> Vec<AngleSector> {
    vec![
        AngleSector::from_degrees(60.0, 8.0, 84.0, 3.0),
        AngleSector::from_degrees(95.0, 6.0, 86.0, 2.0),
        AngleSector::from_degrees(125.0, 10.0, 80.0, 4.0),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub geometry: UraGeometry,
    /// Inclusive range of specular paths per user.
    pub n_clusters_range: (usize, usize),
    pub los_probability: f64,
    pub rician_k_db: f64,
    pub angle_sectors: Vec<AngleSector>,
    /// Path `p` (0-based) has mean power `exp(-rate * p)`.
    pub per_path_gain_profile: f64,
    /// Power of the white diffuse component per antenna, relative to the
    /// mean specular power per antenna.
    pub diffuse_power_db: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            geometry: UraGeometry::default(),
            n_clusters_range: (1, 5),
            los_probability: 0.4,
            rician_k_db: 8.0,
            angle_sectors: default_sectors(),
            per_path_gain_profile: 0.5,
            diffuse_power_db: -20.0,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        let (lo, hi) = self.n_clusters_range;
        if lo == 0 || hi < lo {
            return Err(Error::Config(format!("invalid path count range [{lo}, {hi}]")));
        }
        if !(0.0..=1.0).contains(&self.los_probability) {
            return Err(Error::Config("los_probability must lie in [0, 1]".into()));
        }
        if self.angle_sectors.is_empty() {
            return Err(Error::Config("at least one angle sector is required".into()));
        }
        for (i, s) in self.angle_sectors.iter().enumerate() {
            let vals = [s.azimuth_center, s.azimuth_spread, s.elevation_center, s.elevation_spread];
            if vals.iter().any(|v| !v.is_finite()) || !(s.azimuth_spread > 0.0) || !(s.elevation_spread > 0.0) {
                return Err(Error::Config(format!("sector {i}: angles must be finite and spreads positive")));
            }
        }
        if !self.rician_k_db.is_finite() || !self.diffuse_power_db.is_finite() {
            return Err(Error::Config("rician_k_db and diffuse_power_db must be finite".into()));
        }
        if !(self.per_path_gain_profile >= 0.0) || !self.per_path_gain_profile.is_finite() {
            return Err(Error::Config("per_path_gain_profile must be a non-negative rate".into()));
        }
        Ok(())
    }
}

/// URA response `a_v(elevation) (x) a_h(elevation, azimuth)`.
pub fn steering_vector(geometry: &UraGeometry, azimuth: f64, elevation: f64) -> Result<ChannelVector> {
    if !azimuth.is_finite() || !elevation.is_finite() {
        return Err(Error::InvalidArgument("steering angles must be finite".into()));
    }
    geometry.validate()?;
    let mut out = vec![Complex64::new(0.0, 0.0); geometry.n_antennas()];
    write_steering(geometry, azimuth, elevation, Complex64::new(1.0, 0.0), &mut out);
    Ok(ChannelVector::new_unchecked(out))
}

/// `out += gain * a(azimuth, elevation)`.
fn write_steering(g: &UraGeometry, azimuth: f64, elevation: f64, gain: Complex64, out: &mut [Complex64]) {
    let v_phase = 2.0 * PI * g.spacing_vertical * elevation.cos();
    let h_phase = 2.0 * PI * g.spacing_horizontal * elevation.sin() * azimuth.cos();
    for k in 0..g.n_vertical {
        let av = gain * Complex64::from_polar(1.0, v_phase * k as f64);
        let row = &mut out[k * g.n_horizontal..(k + 1) * g.n_horizontal];
        for (l, z) in row.iter_mut().enumerate() {
            *z += av * Complex64::from_polar(1.0, h_phase * l as f64);
        }
    }
}

fn generate_sample(cfg: &ScenarioConfig, stream: RngStream, out: &mut [Complex64]) {
    let mut rng = stream.rng();
    let g = &cfg.geometry;
    let sector = &cfg.angle_sectors[rng.random_range(0..cfg.angle_sectors.len())];
    let los = rng.random::<f64>() < cfg.los_probability;
    let (lo, hi) = cfg.n_clusters_range;
    let n_paths = rng.random_range(lo..=hi);

    out.fill(Complex64::new(0.0, 0.0));
    let mut specular_power = 0.0;
    for p in 0..n_paths {
        let power = (-cfg.per_path_gain_profile * p as f64).exp();
        specular_power += power;
        let (az, el) = sector.draw(&mut rng);
        let gain = complex_normal(&mut rng) * power.sqrt();
        write_steering(g, az, el, gain, out);
    }
    if los {
        let k = 10f64.powf(cfg.rician_k_db / 10.0);
        let los_power = k * specular_power;
        let (az, el) = sector.draw(&mut rng);
        let phase = 2.0 * PI * rng.random::<f64>();
        write_steering(g, az, el, Complex64::from_polar(los_power.sqrt(), phase), out);
        specular_power += los_power;
    }
    let diffuse_std = (10f64.powf(cfg.diffuse_power_db / 10.0) * specular_power).sqrt();
    for z in out.iter_mut() {
        *z += complex_normal(&mut rng) * diffuse_std;
    }
}

/// Draws `n_samples` users from the scenario using the stream derived from
/// `cfg.seed` and `split` (use distinct labels for train / validation / test).
pub fn generate_rpe_split(cfg: &ScenarioConfig, n_samples: usize, split: &str) -> Result<ChannelDataset> {
    cfg.validate()?;
    if n_samples == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let n = cfg.geometry.n_antennas();
    let base = RngStream::new(cfg.seed, 0).derive("rpe").derive(split);
    let mut data = vec![Complex64::new(0.0, 0.0); n_samples * n];
    par::for_each_chunk_mut(&mut data, n * par::CHUNK_ROWS, |c, chunk| {
        for (j, h) in chunk.chunks_exact_mut(n).enumerate() {
            let i = c * par::CHUNK_ROWS + j;
            generate_sample(cfg, base.index(i as u64), h);
        }
    });
    let ds = ChannelDataset::new(n, data)?.with_meta(DatasetMeta {
        seed: Some(cfg.seed),
        scenario: Some(serde_json::to_value(cfg)?),
        generator: Some(format!("rpe:{split}")),
        norm_scale: None,
    });
    normalize_dataset(&ds)
}

/// [`generate_rpe_split`] with the default `"train"` split.
pub fn generate_rpe(cfg: &ScenarioConfig, n_samples: usize) -> Result<ChannelDataset> {
    generate_rpe_split(cfg, n_samples, "train")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadside_is_all_ones() {
        let a = steering_vector(&UraGeometry::default(), PI / 2.0, PI / 2.0).unwrap();
        for z in a.iter() {
            assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn half_wavelength_endfire_alternates() {
        let g = UraGeometry { n_vertical: 1, n_horizontal: 2, spacing_vertical: 1.0, spacing_horizontal: 0.5 };
        // sin(el) cos(az) = 1
        let a = steering_vector(&g, 0.0, PI / 2.0).unwrap();
        assert!((a[0] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!((a[1] - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn norm_is_n_for_random_angles() {
        let g = UraGeometry::default();
        let mut rng = RngStream::new(3, 1).rng();
        for _ in 0..100 {
            let az = rng.random::<f64>() * 2.0 * PI;
            let el = rng.random::<f64>() * PI;
            let a = steering_vector(&g, az, el).unwrap();
            assert!(a.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
            assert!((a.norm_sqr() - 64.0).abs() < 1e-9);
        }
    }

    #[test]
    fn non_finite_angle_rejected() {
        assert!(steering_vector(&UraGeometry::default(), f64::NAN, 0.0).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = ScenarioConfig::default();
        assert!(c.validate().is_ok());
        c.los_probability = 1.5;
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::default();
        c.angle_sectors.clear();
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::default();
        c.angle_sectors[0].azimuth_spread = 0.0;
        assert!(c.validate().is_err());
        let c = ScenarioConfig { n_clusters_range: (3, 2), ..Default::default() };
        assert!(matches!(generate_rpe(&c, 10), Err(Error::Config(_))));
    }

    #[test]
    fn generation_is_normalized_and_reproducible() {
        let cfg = ScenarioConfig { seed: 11, ..Default::default() };
        let a = generate_rpe(&cfg, 2000).unwrap();
        let b = generate_rpe(&cfg, 2000).unwrap();
        assert_eq!(a, b);
        assert!((a.mean_sq_norm() - 64.0).abs() / 64.0 <= 1e-12);
        let c = generate_rpe_split(&cfg, 2000, "test").unwrap();
        assert_ne!(a.sample(0), c.sample(0));
    }

    #[test]
    fn serial_and_parallel_agree() {
        let cfg = ScenarioConfig { seed: 5, ..Default::default() };
        let a = par::with_threads(Some(1), || generate_rpe(&cfg, 1500).unwrap());
        let b = par::with_threads(Some(4), || generate_rpe(&cfg, 1500).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = ScenarioConfig::default();
        let s = serde_json::to_string(&cfg).unwrap();
        let back: ScenarioConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, cfg);
        let partial: ScenarioConfig = serde_json::from_str(r#"{"seed": 9}"#).unwrap();
        assert_eq!(partial.seed, 9);
        assert_eq!(partial.angle_sectors.len(), 3);
    }
}
