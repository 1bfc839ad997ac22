use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::recording::{EventKind, Stage};

pub const HR_RANGE_BPM: (f64, f64) = (45.0, 120.0);
pub const RESP_RANGE_BPM: (f64, f64) = (6.0, 42.0);

/// A rate that is either constant or linear between `[time_s, value]` knots
/// (held flat outside the first and last knot).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RateSchedule {
    Constant(f64),
    Piecewise(Vec<[f64; 2]>),
}

impl RateSchedule {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            RateSchedule::Constant(v) => *v,
            RateSchedule::Piecewise(knots) => {
                let i = knots.partition_point(|k| k[0] <= t);
                if i == 0 {
                    return knots[0][1];
                }
                if i == knots.len() {
                    return knots[i - 1][1];
                }
                let ([t0, v0], [t1, v1]) = (knots[i - 1], knots[i]);
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            }
        }
    }

    fn validate(&self, name: &str, (lo, hi): (f64, f64)) -> Result<()> {
        let values: Vec<f64> = match self {
            RateSchedule::Constant(v) => vec![*v],
            RateSchedule::Piecewise(knots) => {
                if knots.is_empty() {
                    return Err(invalid(format!("{name} schedule has no knots")));
                }
                if knots.windows(2).any(|w| !(w[1][0] > w[0][0])) {
                    return Err(invalid(format!("{name} knots must have increasing times")));
                }
                knots.iter().map(|k| k[1]).collect()
            }
        };
        if let Some(v) = values.iter().find(|v| !(lo..=hi).contains(*v)) {
            return Err(invalid(format!("{name} {v} outside [{lo}, {hi}]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BodyPosition {
    /// Upright, no head pressure on any patch; used for calibration.
    Seated,
    Back,
    Left,
    Right,
}

impl BodyPosition {
    pub fn pressed_patch(self) -> Option<usize> {
        match self {
            BodyPosition::Seated => None,
            BodyPosition::Back => Some(0),
            BodyPosition::Left => Some(1),
            BodyPosition::Right => Some(2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostureSpan {
    pub start_s: f64,
    pub posture: BodyPosition,
}

/// How strongly each patch picks up the pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainProfile {
    /// Pressed patch 1.0, the other two 0.3.
    #[default]
    Pressed,
    /// Side patches carry the pulse best whatever the posture.
    TempleDominant,
}

pub const PRESSED_GAIN: f64 = 1.0;
pub const UNPRESSED_GAIN: f64 = 0.3;
pub const TEMPLE_GAINS: [f64; 3] = [0.4, 1.0, 1.0];

impl GainProfile {
    pub fn pulse_gains(self, posture: BodyPosition) -> [f64; 3] {
        match self {
            GainProfile::TempleDominant => TEMPLE_GAINS,
            GainProfile::Pressed => {
                let mut g = [UNPRESSED_GAIN; 3];
                if let Some(p) = posture.pressed_patch() {
                    g[p] = PRESSED_GAIN;
                }
                g
            }
        }
    }
}

/// Breathing pickup per patch. Seated wear couples breathing through the
/// strap equally; lying, the pressed patch dominates.
pub fn resp_gains(posture: BodyPosition) -> [f64; 3] {
    match posture.pressed_patch() {
        None => [PRESSED_GAIN; 3],
        Some(p) => {
            let mut g = [UNPRESSED_GAIN; 3];
            g[p] = PRESSED_GAIN;
            g
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub kind: EventKind,
    /// Event center, seconds.
    pub time_s: f64,
}

/// A gross movement: broadband burst whose variance is `variance_ratio`
/// times the calm seated variance of each patch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MovementSpec {
    pub start_s: f64,
    pub end_s: f64,
    pub variance_ratio: f64,
}

/// Signal-to-noise ratios in dB. BCG and respiration are referenced to a
/// unit-gain patch, so a patch with gain g sits at `snr + 20 log10 g`.
/// EEG compares the shared cortical background to per-electrode noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    pub bcg_snr_db: f64,
    pub resp_snr_db: f64,
    pub eeg_snr_db: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { bcg_snr_db: 0.0, resp_snr_db: 10.0, eeg_snr_db: 10.0 }
    }
}

fn default_postures() -> Vec<PostureSpan> {
    vec![PostureSpan { start_s: 0.0, posture: BodyPosition::Back }]
}

fn default_hr() -> RateSchedule {
    RateSchedule::Constant(72.0)
}

fn default_resp() -> RateSchedule {
    RateSchedule::Constant(15.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_postures")]
    pub postures: Vec<PostureSpan>,
    #[serde(default = "default_hr")]
    pub hr_bpm: RateSchedule,
    #[serde(default = "default_resp")]
    pub resp_bpm: RateSchedule,
    /// Beat-to-beat interval jitter as a fraction of the local period.
    #[serde(default)]
    pub hrv: f64,
    #[serde(default)]
    pub events: Vec<EventSpec>,
    #[serde(default)]
    pub movements: Vec<MovementSpec>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub gain_profile: GainProfile,
    /// Stage codes (W, L, D, R) per 30 s epoch; all Light when absent.
    #[serde(default)]
    pub stages: Option<Vec<String>>,
}

impl ScenarioSpec {
    pub fn new(duration_s: f64, seed: u64) -> Self {
        Self {
            duration_s,
            seed,
            postures: default_postures(),
            hr_bpm: default_hr(),
            resp_bpm: default_resp(),
            hrv: 0.0,
            events: Vec::new(),
            movements: Vec::new(),
            noise: NoiseSpec::default(),
            gain_profile: GainProfile::default(),
            stages: None,
        }
    }

    /// Calm seated wear for baseline calibration.
    pub fn seated_calibration(duration_s: f64, seed: u64) -> Self {
        Self {
            postures: vec![PostureSpan { start_s: 0.0, posture: BodyPosition::Seated }],
            ..Self::new(duration_s, seed)
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let spec: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn posture_at(&self, t: f64) -> BodyPosition {
        let i = self.postures.partition_point(|p| p.start_s <= t);
        self.postures[i.saturating_sub(1)].posture
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(invalid("duration_s must be positive"));
        }
        if self.postures.is_empty() {
            return Err(invalid("posture schedule is empty"));
        }
        if self.postures.windows(2).any(|w| !(w[1].start_s > w[0].start_s)) {
            return Err(invalid("posture schedule must be sorted by start_s"));
        }
        self.hr_bpm.validate("hr_bpm", HR_RANGE_BPM)?;
        self.resp_bpm.validate("resp_bpm", RESP_RANGE_BPM)?;
        if !(0.0..0.5).contains(&self.hrv) {
            return Err(invalid("hrv must be in [0, 0.5)"));
        }
        let n = &self.noise;
        if ![n.bcg_snr_db, n.resp_snr_db, n.eeg_snr_db].iter().all(|v| v.is_finite()) {
            return Err(invalid("SNR values must be finite"));
        }
        for m in &self.movements {
            if !(m.start_s >= 0.0 && m.end_s > m.start_s && m.end_s <= self.duration_s) {
                return Err(invalid(format!("movement [{}, {}] outside the recording", m.start_s, m.end_s)));
            }
            if !(m.variance_ratio >= 1.0 && m.variance_ratio.is_finite()) {
                return Err(invalid("movement variance_ratio must be >= 1"));
            }
        }
        if let Some(stages) = &self.stages {
            for s in stages {
                Stage::from_code(s)?;
            }
        }
        let mut ev = self.events.clone();
        ev.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
        for e in &ev {
            let h = max_half_extent(e.kind)?;
            if !(e.time_s - h >= 0.0 && e.time_s + h <= self.duration_s) {
                return Err(invalid(format!("{} at {} s does not fit in the recording", e.kind.as_str(), e.time_s)));
            }
        }
        for w in ev.windows(2) {
            if w[1].time_s - w[0].time_s < max_half_extent(w[0].kind)? + max_half_extent(w[1].kind)? {
                return Err(invalid(format!("events at {} s and {} s overlap", w[0].time_s, w[1].time_s)));
            }
        }
        Ok(())
    }
}

pub const SPINDLE_DURATION_S: (f64, f64) = (0.5, 1.5);
pub const KCOMPLEX_NEG_S: f64 = 0.3;
pub const KCOMPLEX_POS_S: f64 = 0.7;

/// Largest possible half-duration of an injected event.
pub fn max_half_extent(kind: EventKind) -> Result<f64> {
    match kind {
        EventKind::Spindle => Ok(SPINDLE_DURATION_S.1 / 2.0),
        EventKind::KComplex => Ok((KCOMPLEX_NEG_S + KCOMPLEX_POS_S) / 2.0),
        EventKind::Movement => Err(invalid("movements are given under `movements`, not `events`")),
    }
}

/// Random non-overlapping event centers: `n_spindles` spindles and
/// `n_kcomplexes` K-complexes shuffled, each pair at least `min_gap_s`
/// apart beyond their largest extents, the leftover time spread randomly.
pub fn scatter_events(
    duration_s: f64,
    n_spindles: usize,
    n_kcomplexes: usize,
    min_gap_s: f64,
    rng: &mut impl rand::Rng,
) -> Result<Vec<EventSpec>> {
    use rand::seq::SliceRandom;
    let mut kinds: Vec<EventKind> = std::iter::repeat_n(EventKind::Spindle, n_spindles)
        .chain(std::iter::repeat_n(EventKind::KComplex, n_kcomplexes))
        .collect();
    kinds.shuffle(rng);
    let halves: Vec<f64> = kinds.iter().map(|&k| max_half_extent(k)).collect::<Result<_>>()?;
    let needed: f64 = halves.iter().sum::<f64>() * 2.0 + min_gap_s * (kinds.len() + 1) as f64;
    let slack = duration_s - needed;
    if slack < 0.0 {
        return Err(invalid(format!("{} events need {needed:.1} s but only {duration_s} s given", kinds.len())));
    }
    let weights: Vec<f64> = (0..=kinds.len()).map(|_| rng.random::<f64>()).collect();
    let total: f64 = weights.iter().sum();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(kinds.len());
    for (i, (&kind, &h)) in kinds.iter().zip(&halves).enumerate() {
        t += min_gap_s + slack * weights[i] / total + h;
        out.push(EventSpec { kind, time_s: t });
        t += h;
    }
    Ok(out)
}
