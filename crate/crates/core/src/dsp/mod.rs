//! Filtering primitives shared by every downstream pipeline.

mod clean;
mod filter;

pub use clean::{
    clamp_outliers, interpolate_gaps, median_filter, preprocess, upsample_linear, MAD_MULTIPLIER, MAD_WINDOW_S,
    MEDIAN_KERNEL, NOTCH_Q, POWERLINE_HZ,
};
pub use filter::{design_butterworth_bandpass, design_notch, filtfilt, FilterKind, FilterSpec, Sos};

/// Prototype order of every band-pass in the analysis chain.
pub const BUTTERWORTH_ORDER: usize = 5;
