//! Periodogram, short-time spectra, db2 wavelet, EMD and the periodicity score.
mod emd;
mod fourier;
mod wavelet;

pub use emd::{emd, EmdResult, DEFAULT_MAX_IMFS, SIFT_ITERATIONS, SIFT_SD_THRESHOLD};
pub(crate) use fourier::fft_real;
pub use fourier::{band_power_series, periodicity, periodogram, stft, Spectrum, TimeFrequencyMap};
pub use wavelet::{dwt2_db2, idwt2_db2, Dwt2};
