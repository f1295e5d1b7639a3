//! Benchmark fixtures for driftlab.

use driftlab_core::{DriftField, JumpLaw, RateField, WalkModel};

pub fn lamperti_model(c: f64) -> WalkModel {
    let field = DriftField::critical_lamperti(c).expect("valid c");
    WalkModel::new(
        RateField::new(field),
        JumpLaw::ExponentialMean1,
        JumpLaw::ExponentialMean1,
    )
    .expect("valid laws")
}
