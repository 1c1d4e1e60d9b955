//! Cuff-less blood pressure estimation from pulse transit time.
//!
//! The proximal timing reference is the S1 heart sound on a phonocardiogram
//! (PCG), the distal one a fiducial point on a photoplethysmogram (PPG). A
//! force-sensing resistor (FSR) under the reference cuff marks the moment each
//! cuff reading is taken. The pipeline:
//!
//! 1. [`signal`]: median filter, z-score, zero-phase Butterworth filtering.
//! 2. [`segmentation`]: cuff episodes on the FSR channel, one interval per reading.
//! 3. [`fiducials`]: PPG foot / max-slope / peak and the matching S1.
//! 4. [`ptt`]: per-beat transit times, outlier rejection, weighted averaging.
//! 5. [`calibration`]: per-subject `BP = b0 + b1 / PTT` by least squares.
//! 6. [`evaluation`]: leave-one-out predictions, MAE / STD / r, Bland-Altman.
//!
//! [`synthgen`] produces recordings with known ground truth for every stage.

pub mod calibration;
pub mod commands;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod fiducials;
pub mod io;
pub mod par;
pub mod pipeline;
pub mod ptt;
pub mod segmentation;
pub mod signal;
pub mod synthgen;

pub use error::{Error, Result};
pub use signal::{Recording, TimeSeries};
