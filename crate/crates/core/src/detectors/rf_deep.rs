use crate::error::{Error, Result};
use crate::features::{Label, ScanDescriptor};
use crate::forest::{fit, ForestModel, ForestParams};
use crate::matrix::SampleMatrix;

/// Trains a forest with every ROI descriptor as its own row (OOD = 1).
pub fn rf_deep_train(
    id_rois: &[&ScanDescriptor],
    ood_rois: &[&ScanDescriptor],
    params: &ForestParams,
) -> Result<ForestModel> {
    if id_rois.is_empty() || ood_rois.is_empty() {
        return Err(Error::invalid("both ID and OOD training sets must be nonempty"));
    }
    let rows = id_rois.iter().chain(ood_rois).copied();
    let x = SampleMatrix::from_descriptors(rows)?;
    let y: Vec<Label> = std::iter::repeat_n(Label::Id, id_rois.len())
        .chain(std::iter::repeat_n(Label::Ood, ood_rois.len()))
        .collect();
    fit(&x, &y, params)
}

/// Mean summed in ascending order, so it does not depend on input order.
pub(crate) fn order_free_mean(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean OOD probability over the ROIs of one scan.
pub fn rf_deep_score(model: &ForestModel, scan_rois: &[&ScanDescriptor]) -> Result<f64> {
    if scan_rois.is_empty() {
        return Err(Error::NoSegmentation("scan has no ROI descriptors".into()));
    }
    let mut probs = Vec::with_capacity(scan_rois.len());
    let mut x = vec![0.0; model.feature_dim];
    for r in scan_rois {
        if r.vector.len() != model.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: model.feature_dim,
                got: r.vector.len(),
            });
        }
        for (dst, &v) in x.iter_mut().zip(&r.vector) {
            *dst = f64::from(v);
        }
        probs.push(model.predict_proba(&x)?);
    }
    Ok(order_free_mean(probs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::FeaturesPerSplit;

    fn row(scan: &str, label: Label, v: Vec<f32>) -> ScanDescriptor {
        ScanDescriptor {
            scan_id: scan.into(),
            roi_index: 0,
            dataset: "d".into(),
            label,
            vector: v,
        }
    }

    #[test]
    fn row_count_and_mean() {
        let id: Vec<ScanDescriptor> = (0..20).map(|i| row("i", Label::Id, vec![i as f32 * 0.01, 0.0])).collect();
        let ood: Vec<ScanDescriptor> = (0..20).map(|i| row("o", Label::Ood, vec![5.0 + i as f32, 0.0])).collect();
        let params = ForestParams {
            n_trees: 5,
            features_per_split: FeaturesPerSplit::All,
            ..ForestParams::default()
        };
        let (id, ood): (Vec<&ScanDescriptor>, Vec<&ScanDescriptor>) = (id.iter().collect(), ood.iter().collect());
        let m = rf_deep_train(&id, &ood, &params).unwrap();
        let a = row("q", Label::Id, vec![0.0, 0.0]);
        let b = row("q", Label::Id, vec![100.0, 0.0]);
        assert_eq!(rf_deep_score(&m, &[&a]).unwrap(), 0.0);
        assert_eq!(rf_deep_score(&m, &[&b]).unwrap(), 1.0);
        assert_eq!(rf_deep_score(&m, &[&a, &b]).unwrap(), 0.5);
        assert!(matches!(rf_deep_score(&m, &[]), Err(Error::NoSegmentation(_))));
        assert!(rf_deep_train(&[], &ood, &params).is_err());
    }
}
