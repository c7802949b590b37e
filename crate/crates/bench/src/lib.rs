//! Shared instance builders for the benchmarks.

use saddleflow_core::*;

pub struct Instance {
    pub dataset: OrthonormalDataset,
    pub init: InitDraw,
    pub mask: MaskMatrix,
}

/// A seeded instance with the width preset used by the scaling sweeps.
pub fn scaling_instance(n: usize, seed: u64) -> Instance {
    let m = ((10_000.0 * n as f64).ln() / (4.0f64 / 3.0).ln()).ceil() as usize;
    let dataset = generate_dataset(n, n, &LabelSpec::Gaussian, BasisSpec::Identity, seed).unwrap();
    let init = sample_init(m, n, -500.0, seed + 1);
    let mask = mask_matrix(&dataset, &init).unwrap();
    Instance {
        dataset,
        init,
        mask,
    }
}

/// The 64-point reference instance (all-positive labels, six neurons).
pub fn reference_instance() -> Instance {
    let dataset = generate_dataset(64, 64, &LabelSpec::AbsGaussian, BasisSpec::Identity, 0).unwrap();
    let init = sample_init(6, 64, -500.0, 399);
    let mask = mask_matrix(&dataset, &init).unwrap();
    Instance {
        dataset,
        init,
        mask,
    }
}
