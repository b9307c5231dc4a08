//! Metric reports and plot-ready CSV exports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::codebook::{CodebookInfo, Fingerprint};
use crate::error::{Error, Result};

/// Index convention used by the MMD estimate, recorded in every report.
pub const MMD_CONVENTION: &str = "unbiased U-statistic; i = j excluded in all four kernel terms";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    pub w1d: Option<f64>,
    pub tvd: Option<f64>,
    pub mmd: Option<f64>,
    pub bandwidth: Option<f64>,
    pub n_samples: usize,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codebook: Option<CodebookInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mmd_convention: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn cdf_csv(points: &[(f64, f64)]) -> String {
    let mut s = String::from("value,cdf\n");
    for (v, c) in points {
        let _ = writeln!(s, "{v},{c}");
    }
    s
}

pub fn write_cdf_csv(path: impl AsRef<Path>, points: &[(f64, f64)]) -> Result<()> {
    write_text(path.as_ref(), &cdf_csv(points))
}

/// `entry,mass` with 1-based codeword entries.
pub fn fingerprint_csv(fp: &Fingerprint) -> String {
    let mut s = String::from("entry,mass\n");
    for (i, m) in fp.histogram.iter().enumerate() {
        let _ = writeln!(s, "{},{m}", i + 1);
    }
    s
}

pub fn write_fingerprint_csv(path: impl AsRef<Path>, fp: &Fingerprint) -> Result<()> {
    write_text(path.as_ref(), &fingerprint_csv(fp))
}

/// One row per generator, mirroring a W1D / TVD / MMD comparison table.
pub fn metric_table_csv(reports: &[MetricReport]) -> String {
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    let mut s = String::from("generator,w1d,tvd,mmd,bandwidth,n_samples,error\n");
    for r in reports {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.generator.as_deref().unwrap_or(""),
            fmt(r.w1d),
            fmt(r.tvd),
            fmt(r.mmd),
            fmt(r.bandwidth),
            r.n_samples,
            r.error.as_deref().unwrap_or("").replace(',', ";")
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_csv_is_one_based() {
        let fp = Fingerprint { histogram: vec![0.25, 0.75], n_samples: 4, codebook_id: "a".into() };
        assert_eq!(fingerprint_csv(&fp), "entry,mass\n1,0.25\n2,0.75\n");
    }

    #[test]
    fn report_json_has_all_metric_keys() {
        let r = MetricReport { w1d: Some(0.0), n_samples: 3, ..Default::default() };
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for key in ["w1d", "tvd", "mmd", "bandwidth", "n_samples", "seeds"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
