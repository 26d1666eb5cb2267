//! Fixtures shared by the benchmarks.

use scanood::features::{synth_generate, ScanDescriptor, SynthConfig};
use scanood::grid3d::LabelMask;
use scanood::seed;

/// Deterministic scores with many ties.
pub fn scores(n: usize, offset: f64, stream: &str) -> Vec<f64> {
    let mut state = seed::derive_named(7, stream);
    (0..n)
        .map(|_| {
            state = seed::derive(state, 1);
            (state % 1000) as f64 / 100.0 + offset
        })
        .collect()
}

/// ID and OOD rows of one synthetic near cohort.
pub fn cohort(dim: usize, n_scans: usize) -> (Vec<ScanDescriptor>, Vec<ScanDescriptor>) {
    let cfg = SynthConfig {
        dim,
        n_id: n_scans,
        n_ood: n_scans,
        rng_seed: 5,
        ..SynthConfig::default()
    };
    let data = synth_generate(&cfg).expect("valid config");
    let ood = data.ood.into_iter().next().expect("default cohorts").1;
    (data.id, ood)
}

/// Ball of the given radius centred in a cubic grid.
pub fn ball(side: usize, radius: f64) -> LabelMask {
    let c = (side as f64 - 1.0) / 2.0;
    LabelMask::from_fn([side; 3], |i, j, k| {
        let d = [i, j, k].map(|v| v as f64 - c);
        d.iter().map(|x| x * x).sum::<f64>() <= radius * radius
    })
    .expect("nonzero dims")
}
