//! Single-Gaussian Mahalanobis detector with Ledoit-Wolf shrinkage.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::ScanDescriptor;
use crate::matrix::SampleMatrix;

/// Shrinkage intensity used when fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shrinkage {
    LedoitWolf,
    Fixed(f64),
}

fn centered(x: &SampleMatrix) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let (n, d) = (x.rows(), x.cols());
    if n < 2 {
        return Err(Error::invalid(format!("covariance needs at least 2 samples, got {n}")));
    }
    if d == 0 {
        return Err(Error::invalid("samples have no features"));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("sample matrix".into()));
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let xc = DMatrix::from_fn(n, d, |i, j| x.get(i, j) - mean[j]);
    Ok((mean, xc))
}

/// Empirical covariance (divide by `n`) of centred rows.
fn empirical_covariance(xc: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = xc.tr_mul(xc);
    s /= xc.nrows() as f64;
    s
}

/// Ledoit-Wolf intensity for centred rows `xc` with covariance `s`.
fn lw_intensity(xc: &DMatrix<f64>, s: &DMatrix<f64>) -> f64 {
    let (n, d) = xc.shape();
    let mu = s.trace() / d as f64;
    let mut dist2 = 0.0;
    for j in 0..d {
        for i in 0..d {
            let t = s[(i, j)] - if i == j { mu } else { 0.0 };
            dist2 += t * t;
        }
    }
    if dist2 == 0.0 {
        return 0.0;
    }
    // sum_k ||x_k x_k^T - S||_F^2 = sum_k ||x_k||^4 - n ||S||_F^2
    let fourth: f64 = xc.row_iter().map(|r| r.norm_squared().powi(2)).sum();
    let b_bar2 = ((fourth - n as f64 * s.norm_squared()) / (n as f64 * n as f64)).max(0.0);
    b_bar2.min(dist2) / dist2
}

fn shrink(s: &DMatrix<f64>, delta: f64) -> DMatrix<f64> {
    let d = s.nrows();
    let mu = s.trace() / d as f64;
    let mut out = s * (1.0 - delta);
    for i in 0..d {
        out[(i, i)] += delta * mu;
    }
    out
}

/// Shrunk covariance `(1 - delta) S + delta mu I` and the intensity `delta`.
pub fn ledoit_wolf(x: &SampleMatrix) -> Result<(DMatrix<f64>, f64)> {
    let (_, xc) = centered(x)?;
    let s = empirical_covariance(&xc);
    let delta = lw_intensity(&xc, &s);
    Ok((shrink(&s, delta), delta))
}

/// Gaussian fitted to ID ROI descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianOodModel {
    pub mean: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub precision: DMatrix<f64>,
    pub shrinkage: f64,
}

impl GaussianOodModel {
    pub fn fit(x: &SampleMatrix, shrinkage: Shrinkage) -> Result<Self> {
        let (mean, xc) = centered(x)?;
        let s = empirical_covariance(&xc);
        let delta = match shrinkage {
            Shrinkage::LedoitWolf => lw_intensity(&xc, &s),
            Shrinkage::Fixed(t) if (0.0..=1.0).contains(&t) => t,
            Shrinkage::Fixed(t) => return Err(Error::invalid(format!("shrinkage must lie in [0, 1], got {t}"))),
        };
        Self::from_parts(mean, shrink(&s, delta), delta)
    }

    fn from_parts(mean: Vec<f64>, covariance: DMatrix<f64>, shrinkage: f64) -> Result<Self> {
        let precision = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Estimation("covariance is not positive definite".into()))?
            .inverse();
        Ok(Self {
            mean,
            covariance,
            precision,
            shrinkage,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Mahalanobis distance of one descriptor.
    pub fn distance(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let v = DVector::from_iterator(x.len(), x.iter().zip(&self.mean).map(|(a, m)| a - m));
        Ok(v.dot(&(&self.precision * &v)).max(0.0).sqrt())
    }

    pub fn save(&self, json_path: &Path) -> Result<()> {
        let bin_path = json_path.with_extension("bin");
        let header = GaussianHeader {
            format: GAUSSIAN_FORMAT.into(),
            version: 1,
            dim: self.dim(),
            shrinkage: self.shrinkage,
            dtype: "f64le".into(),
            layout: "mean, then covariance row-major".into(),
            payload: bin_path
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default()
                .to_string(),
        };
        let d = self.dim();
        let mut bytes = Vec::with_capacity(8 * d * (d + 1));
        for v in &self.mean {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        for i in 0..d {
            for j in 0..d {
                bytes.extend_from_slice(&self.covariance[(i, j)].to_le_bytes());
            }
        }
        fs::write(&bin_path, bytes)?;
        fs::write(json_path, serde_json::to_string_pretty(&header)?)?;
        Ok(())
    }

    pub fn load(json_path: &Path) -> Result<Self> {
        let header: GaussianHeader =
            serde_json::from_slice(&fs::read(json_path)?).map_err(|e| Error::format(json_path, e.to_string()))?;
        if header.format != GAUSSIAN_FORMAT || header.version != 1 || header.dtype != "f64le" {
            return Err(Error::format(json_path, "not a version 1 gaussian model"));
        }
        let bin_path = json_path.with_file_name(&header.payload);
        let bytes = fs::read(&bin_path)?;
        let d = header.dim;
        if bytes.len() != 8 * d * (d + 1) {
            return Err(Error::format(&bin_path, format!("expected {} bytes, found {}", 8 * d * (d + 1), bytes.len())));
        }
        let vals: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let covariance = DMatrix::from_row_slice(d, d, &vals[d..]);
        Self::from_parts(vals[..d].to_vec(), covariance, header.shrinkage)
    }
}

const GAUSSIAN_FORMAT: &str = "scanood-gaussian";

#[derive(Debug, Serialize, Deserialize)]
struct GaussianHeader {
    format: String,
    version: u32,
    dim: usize,
    shrinkage: f64,
    dtype: String,
    layout: String,
    payload: String,
}

/// Fits the detector on ID ROI descriptors only.
pub fn md_fit(id_rois: &[ScanDescriptor]) -> Result<GaussianOodModel> {
    if id_rois.is_empty() {
        return Err(Error::invalid("no ID descriptors to fit"));
    }
    GaussianOodModel::fit(&SampleMatrix::from_descriptors(id_rois)?, Shrinkage::LedoitWolf)
}

/// Mean Mahalanobis distance over the ROIs of one scan.
pub fn md_score(model: &GaussianOodModel, scan_rois: &[&ScanDescriptor]) -> Result<f64> {
    if scan_rois.is_empty() {
        return Err(Error::NoSegmentation("scan has no ROI descriptors".into()));
    }
    let mut dists = Vec::with_capacity(scan_rois.len());
    for r in scan_rois {
        let x: Vec<f64> = r.vector.iter().map(|&v| f64::from(v)).collect();
        dists.push(model.distance(&x)?);
    }
    Ok(super::rf_deep::order_free_mean(dists))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_metric() {
        let m = GaussianOodModel::from_parts(vec![1.0, 2.0], DMatrix::identity(2, 2), 0.0).unwrap();
        assert_eq!(m.distance(&[1.0, 2.0]).unwrap(), 0.0);
        assert!((m.distance(&[2.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(m.distance(&[1.0]).is_err());
    }

    #[test]
    fn isotropic_covariance_is_unchanged() {
        // S = 0.5 I exactly: rows are the four signed unit vectors
        let x = SampleMatrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]).unwrap();
        let (sigma, _) = ledoit_wolf(&x).unwrap();
        let s = [[0.5, 0.0], [0.0, 0.5]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((sigma[(i, j)] - s[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let x = SampleMatrix::from_rows(&[[0.1, 2.0, 3.3], [1.7, 0.2, -1.0], [0.3, -0.4, 0.8], [2.2, 1.1, 0.0]]).unwrap();
        let m = GaussianOodModel::fit(&x, Shrinkage::LedoitWolf).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gaussian.json");
        m.save(&p).unwrap();
        let back = GaussianOodModel::load(&p).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn degenerate_unshrunk_fails() {
        let x = SampleMatrix::from_rows(&[[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]).unwrap();
        assert!(matches!(
            GaussianOodModel::fit(&x, Shrinkage::Fixed(0.0)),
            Err(Error::Estimation(_))
        ));
        assert!(GaussianOodModel::fit(&x, Shrinkage::LedoitWolf).is_ok());
    }

    #[test]
    fn empty_scan_is_error() {
        let m = GaussianOodModel::from_parts(vec![0.0], DMatrix::identity(1, 1), 0.0).unwrap();
        assert!(matches!(md_score(&m, &[]), Err(Error::NoSegmentation(_))));
    }
}
