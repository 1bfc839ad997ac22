//! Spindle and K-complex detection: augmented EEG rows, window statistics,
//! SMOTE balancing, a bagged decision-tree forest and interval extraction.
mod detect;
mod features;
mod forest;
mod smote;

pub use detect::{
    bandlimit_eeg, detect_events, evaluate_detector, extract_features, merge_positive_windows, Detections,
    DetectorScores, EEG_BAND_HZ, MERGE_GAP_S,
};
pub use features::{
    build_feature_channels, channel_stats, feature_columns, hop_samples, label_windows, schema_hash, window_statistics,
    AugmentedChannels, BandConfig, FeatureMatrix, DEFAULT_HOP_S, N_CHANNELS, N_FEATURES, N_STATS, STAT_NAMES, WINDOW_S,
};
pub use forest::{candidate_features, train_forest, ForestModel, Prediction, Tree, DEFAULT_TREES};
pub use smote::{smote_balance, SmoteOutcome, DEFAULT_K};
