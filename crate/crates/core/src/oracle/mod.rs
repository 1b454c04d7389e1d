//! Synthetic ground truth: device latency profiles, an accuracy function and
//! exhaustive search over small spaces.

mod accuracy;
mod brute;
mod device;
mod reference;
mod study;

pub use accuracy::{synthetic_accuracy, AccuracyOracle};
pub use brute::{brute_force_best, BruteForce, BruteForceError};
pub use device::{
    device_info, generate_lut_measurements, make_standard_profiles, synthetic_block_latency,
    synthetic_latency, DeviceProfile, StandardProfiles, SyntheticDevice,
};
pub use reference::{
    reference_arch, reference_genome, ReferenceVariant, REFERENCE_ORDERINGS, REFERENCE_VARIANTS,
};
pub use study::{
    adapt_study, calibration_pairs, latency_quantile, synthetic_estimator, AdaptReport, AdaptRow,
    AdaptStudy, StudyError,
};
