//! Input-output model of a spin-ensemble/resonator hybrid probed with
//! squeezed microwaves, plus the estimators and tomography used to calibrate
//! it against measured data.
//!
//! Rates are HWHM values in Hz throughout; quadrature variances use the
//! convention where vacuum is 1/4.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod constants;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod hybrid;
pub mod lsq;
pub mod spin;
pub mod synth;
pub mod tomography;

pub use error::{Error, Result};
pub use experiments::{
    efficiency_map, predict_squeezing, spectrum_map, AxisScale, AxisSpec, EfficiencyMap, LinearRange, PredictionRow,
    ReferenceRow, Scenario, ScenarioTag, SpectrumMap, SqueezingReferenceTable, SweepParam,
};
pub use hybrid::{
    cooperativity, propagate_state, propagate_variance, s11, scatter_coefficients, squeezing_db, transfer_efficiency,
    BathVariances, CovarianceState, HybridParams, ScatterCoefficients,
};
pub use spin::{resonance_field, spin_levels, transition_frequency, LevelDiagram, SpinState, SpinSystem, Transition};
pub use tomography::{
    moments, planck_fit, purity, reconstruct_gaussian, MomentTable, PlanckCalibration, TomographyReport,
};
