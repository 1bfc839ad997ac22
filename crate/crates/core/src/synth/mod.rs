//! Seeded synthetic recordings with known ground truth.

mod cardio;
mod eeg;
mod noise;
mod scenario;

pub use cardio::{
    beat_times, calm_slow_variance, gen_cardio, pulse_train, CardioOutput, BCG_LEVEL_V, PATCH_LEVEL_V, PRESSED_DROP_V,
    PULSE_AMPLITUDE_V, RESP_AMPLITUDE_V,
};
pub use eeg::{gen_eeg, EegOutput, EEG_BACKGROUND_V, EEG_LEVEL_V};
pub use noise::{pink_noise, white_noise};
pub use scenario::{
    resp_gains, scatter_events, BodyPosition, EventSpec, GainProfile, MovementSpec, NoiseSpec, PostureSpan,
    RateSchedule, ScenarioSpec, HR_RANGE_BPM, RESP_RANGE_BPM,
};

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::recording::{
    default_start_time, save_recording, write_events, write_stages, EventInterval, EventKind, FastChannel, Hypnogram,
    Recording, SlowChannel, Stage, ADC_MAX_COUNT, DEFAULT_ADC_SCALE, EPOCH_LEN_S,
};

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedValue {
    pub time_s: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostureTruth {
    pub start_s: f64,
    pub end_s: f64,
    pub posture: BodyPosition,
}

/// Sidecar written as `truth.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    /// Scheduled rates once per second.
    pub hr_bpm: Vec<TimedValue>,
    pub resp_bpm: Vec<TimedValue>,
    pub postures: Vec<PostureTruth>,
    pub events: Vec<EventInterval>,
    pub movements: Vec<MovementSpec>,
    pub seated_baseline_v: [f64; 3],
    pub pressed_drop_v: f64,
    /// Measured signal-to-noise per generated channel, dB.
    pub channel_snr_db: BTreeMap<String, f64>,
}

impl Truth {
    pub fn hr_at(&self, t: f64) -> f64 {
        lookup(&self.hr_bpm, t)
    }

    pub fn resp_at(&self, t: f64) -> f64 {
        lookup(&self.resp_bpm, t)
    }

    /// Mean scheduled rate over `[a, b)` on the 1 s grid.
    pub fn mean_hr(&self, a: f64, b: f64) -> f64 {
        mean_over(&self.hr_bpm, a, b)
    }

    pub fn mean_resp(&self, a: f64, b: f64) -> f64 {
        mean_over(&self.resp_bpm, a, b)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

fn lookup(series: &[TimedValue], t: f64) -> f64 {
    let i = series.partition_point(|v| v.time_s <= t);
    series[i.saturating_sub(1)].value
}

fn mean_over(series: &[TimedValue], a: f64, b: f64) -> f64 {
    let vals: Vec<f64> = series.iter().filter(|v| v.time_s >= a && v.time_s < b).map(|v| v.value).collect();
    if vals.is_empty() {
        lookup(series, a)
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub recording: Recording,
    /// Microevents then movements, each sorted by start.
    pub events: Vec<EventInterval>,
    pub hypnogram: Hypnogram,
    pub truth: Truth,
}

fn clamp_to_adc(x: &mut [f64]) {
    let top = f64::from(ADC_MAX_COUNT) * DEFAULT_ADC_SCALE;
    for v in x {
        *v = v.clamp(0.0, top);
    }
}

pub fn gen_recording(spec: &ScenarioSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let cardio = gen_cardio(spec)?;
    let eeg = gen_eeg(spec)?;

    let [eeg_l, eeg_r] = eeg.eeg;
    let [eog_l, eog_r] = eeg.eog;
    let [p1, p2, p3] = cardio.bcg;
    let mut fast = [eeg_l, eeg_r, eog_l, eog_r, p1, p2, p3];
    let mut slow = cardio.resp;
    fast.iter_mut().chain(slow.iter_mut()).for_each(|c| clamp_to_adc(c));
    let recording = Recording::new(fast, slow, default_start_time())?;

    let mut events = eeg.events.clone();
    for m in &spec.movements {
        events.push(EventInterval::new(EventKind::Movement, m.start_s, m.end_s)?);
    }

    let n_epochs = (spec.duration_s / EPOCH_LEN_S).floor() as usize;
    let stages = match &spec.stages {
        Some(codes) => codes.iter().map(|c| Stage::from_code(c)).collect::<Result<_>>()?,
        None => vec![Stage::Light; n_epochs],
    };

    let seconds = spec.duration_s.floor() as usize;
    let grid = |f: &dyn Fn(f64) -> f64| -> Vec<TimedValue> {
        (0..=seconds).map(|s| TimedValue { time_s: s as f64, value: f(s as f64) }).collect()
    };
    let postures = spec
        .postures
        .iter()
        .enumerate()
        .map(|(i, p)| PostureTruth {
            start_s: p.start_s,
            end_s: spec.postures.get(i + 1).map_or(spec.duration_s, |q| q.start_s),
            posture: p.posture,
        })
        .collect();
    let mut channel_snr_db = BTreeMap::new();
    for c in FastChannel::BCG {
        channel_snr_db.insert(c.column().to_string(), cardio.bcg_snr_db[c.index() - 4]);
    }
    for c in SlowChannel::ALL {
        channel_snr_db.insert(c.column().to_string(), cardio.resp_snr_db[c.index()]);
    }
    for (c, snr) in [FastChannel::EegL, FastChannel::EegR].into_iter().zip(eeg.snr_db) {
        channel_snr_db.insert(c.column().to_string(), snr);
    }
    let truth = Truth {
        hr_bpm: grid(&|t| spec.hr_bpm.at(t)),
        resp_bpm: grid(&|t| spec.resp_bpm.at(t)),
        postures,
        events: events.clone(),
        movements: spec.movements.clone(),
        seated_baseline_v: PATCH_LEVEL_V,
        pressed_drop_v: PRESSED_DROP_V,
        channel_snr_db,
    };
    Ok(SynthOutput { recording, events, hypnogram: Hypnogram::new(stages), truth })
}

/// Writes the recording files plus `events.csv`, `stages.csv`,
/// `truth.json` and the `scenario.json` that produced them.
pub fn write_bundle(out: &SynthOutput, spec: &ScenarioSpec, dir: &Path) -> Result<()> {
    save_recording(&out.recording, dir)?;
    write_events(&dir.join("events.csv"), &out.events)?;
    write_stages(&dir.join("stages.csv"), &out.hypnogram)?;
    fs::write(dir.join("truth.json"), serde_json::to_string_pretty(&out.truth)? + "\n")?;
    fs::write(dir.join("scenario.json"), serde_json::to_string_pretty(spec)? + "\n")?;
    Ok(())
}
