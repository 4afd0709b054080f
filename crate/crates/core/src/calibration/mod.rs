//! Offline failure-risk calibration: boundary labeling by suffix replacement
//! and per-signal logistic fits.

mod fit;
mod labels;
mod mapping;

pub use fit::{fit_sigmoid, fit_sigmoid_with, mean_bce, CalibrationSample, FitOptions, FitReport};
pub use labels::{build_labels, retain_for_calibration, Boundary, LabelInput, LabelingConfig, LabelingOutcome};
pub use mapping::{apply_mapping, RiskMapping, Signal};
