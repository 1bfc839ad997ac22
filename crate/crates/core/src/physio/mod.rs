//! Pressure-patch analytics: pulse rate, breathing rate, posture and gross movement.
mod heart;
mod pca;
mod posture;
mod resp;

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::Result;

pub use heart::{estimate_heart_rate, HrMode, HR_HOP_S, HR_WINDOW_S, PULSE_BAND_HZ};
pub use pca::{pca3, Pca3Decomposition};
pub use posture::{
    calibrate_seated_baseline, classify_posture, detect_movement, posture_from_drops, BaselineCalibration,
    MovementEvent, Posture, Severity, CALIBRATION_MIN_S, MAJOR_MOVEMENT_RATIO, MOVEMENT_BLOCK_S, MOVEMENT_HOP_S,
    MOVEMENT_RATIO, POSTURE_BLOCK_S, POSTURE_THRESHOLD_V,
};
pub use resp::{estimate_respiration, find_peaks, RespirationSeries, RESP_SEARCH_HZ, RESP_STEP_S, RESP_WINDOW_S};

/// Rate estimates per analysis window; NaN values carry quality 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RateSeries {
    pub times_s: Vec<f64>,
    pub values: Vec<f64>,
    pub quality: Vec<f64>,
}

impl RateSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Writes `time_s,value,quality`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        self.write_csv_to(File::create(path)?)
    }

    pub fn write_csv_to(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time_s", "value", "quality"])?;
        for ((t, v), q) in self.times_s.iter().zip(&self.values).zip(&self.quality) {
            w.write_record([format!("{t:.6}"), fmt_value(*v), format!("{q:.6}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:.6}")
    }
}

/// Writes posture blocks as `time_s,value,quality` with the posture name as value.
pub fn write_posture_csv(path: &Path, blocks: &[(f64, Posture)]) -> Result<()> {
    write_posture_csv_to(File::create(path)?, blocks)
}

pub fn write_posture_csv_to(out: impl Write, blocks: &[(f64, Posture)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time_s", "value", "quality"])?;
    for (t, p) in blocks {
        let q = if *p == Posture::Indeterminate { "0" } else { "1" };
        w.write_record([format!("{t:.6}").as_str(), p.as_str(), q])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes movement runs as `kind,start_s,end_s,severity,peak_ratio`.
pub fn write_movement_csv(path: &Path, events: &[MovementEvent]) -> Result<()> {
    write_movement_csv_to(File::create(path)?, events)
}

pub fn write_movement_csv_to(out: impl Write, events: &[MovementEvent]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kind", "start_s", "end_s", "severity", "peak_ratio"])?;
    for e in events {
        let sev = match e.severity {
            Severity::Minor => "minor",
            Severity::Major => "major",
        };
        w.write_record([
            "movement".to_string(),
            format!("{:.6}", e.interval.start_s),
            format!("{:.6}", e.interval.end_s),
            sev.to_string(),
            format!("{:.6}", e.peak_ratio),
        ])?;
    }
    w.flush()?;
    Ok(())
}
