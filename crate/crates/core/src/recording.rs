//! Multi-rate recordings, annotations and hypnograms, plus the on-disk
//! bundle format (`fast.csv`, `slow.csv`, `meta.json`, `events.csv`,
//! `stages.csv`).
//!
//! Fast channels (biopotential and cardiac pressure) share one sample grid
//! at 125 Hz. The three respiration patches share a single ADC input behind
//! a 3:1 multiplexer, so each of them is sampled every third tick and the
//! slow grid runs at exactly 125/3 Hz. Slow sample `j` of patch `k` is taken
//! at fast tick `3j + k`; slots whose tick falls past the end of the fast
//! grid were never sampled and hold NaN.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, FixedOffset};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const FAST_RATE_HZ: f64 = 125.0;
/// Number of fast ticks per slow sample (respiration MUX fan-in).
pub const MUX_FACTOR: usize = 3;
pub const ADC_REFERENCE_V: f64 = 3.3;
pub const ADC_LEVELS: u32 = 4096;
pub const ADC_MAX_COUNT: u16 = 4095;
pub const DEFAULT_ADC_SCALE: f64 = ADC_REFERENCE_V / ADC_LEVELS as f64;

/// Converts a 12-bit ADC count to volts (3.3 V reference).
pub fn adc_to_volts(raw: u16) -> Result<f64> {
    if raw > ADC_MAX_COUNT {
        return Err(Error::OutOfRange(format!("ADC count {raw} exceeds {ADC_MAX_COUNT}")));
    }
    Ok(raw as f64 * ADC_REFERENCE_V / ADC_LEVELS as f64)
}

/// Nearest ADC count for a voltage under the given scale (volts per count).
pub fn volts_to_adc(volts: f64, adc_scale: f64) -> Result<u16> {
    let count = (volts / adc_scale).round();
    if !count.is_finite() || !(0.0..=ADC_MAX_COUNT as f64).contains(&count) {
        return Err(Error::OutOfRange(format!("{volts} V does not map to a 12-bit count")));
    }
    Ok(count as u16)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FastChannel {
    EegL,
    EegR,
    EogL,
    EogR,
    BcgP1,
    BcgP2,
    BcgP3,
}

impl FastChannel {
    pub const ALL: [FastChannel; 7] = [
        FastChannel::EegL,
        FastChannel::EegR,
        FastChannel::EogL,
        FastChannel::EogR,
        FastChannel::BcgP1,
        FastChannel::BcgP2,
        FastChannel::BcgP3,
    ];
    pub const BCG: [FastChannel; 3] = [FastChannel::BcgP1, FastChannel::BcgP2, FastChannel::BcgP3];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Lower-case column name used in `fast.csv`.
    pub fn column(self) -> &'static str {
        match self {
            FastChannel::EegL => "eeg_l",
            FastChannel::EegR => "eeg_r",
            FastChannel::EogL => "eog_l",
            FastChannel::EogR => "eog_r",
            FastChannel::BcgP1 => "bcg_p1",
            FastChannel::BcgP2 => "bcg_p2",
            FastChannel::BcgP3 => "bcg_p3",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SlowChannel {
    RespP1,
    RespP2,
    RespP3,
}

impl SlowChannel {
    pub const ALL: [SlowChannel; 3] = [SlowChannel::RespP1, SlowChannel::RespP2, SlowChannel::RespP3];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn column(self) -> &'static str {
        match self {
            SlowChannel::RespP1 => "resp_p1",
            SlowChannel::RespP2 => "resp_p2",
            SlowChannel::RespP3 => "resp_p3",
        }
    }
}

/// Any channel of a recording, parsed from ids such as `EEG_L` or `resp_p2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelId {
    Fast(FastChannel),
    Slow(SlowChannel),
}

impl FromStr for ChannelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        if let Some(c) = FastChannel::ALL.iter().find(|c| c.column() == lower) {
            return Ok(ChannelId::Fast(*c));
        }
        if let Some(c) = SlowChannel::ALL.iter().find(|c| c.column() == lower) {
            return Ok(ChannelId::Slow(*c));
        }
        Err(Error::UnknownChannel(s.to_string()))
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelId::Fast(c) => f.write_str(&c.column().to_ascii_uppercase()),
            ChannelId::Slow(c) => f.write_str(&c.column().to_ascii_uppercase()),
        }
    }
}

/// Exact rational sample rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rational {
    pub num: u32,
    pub den: u32,
}

impl Rational {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(invalid("rate must be strictly positive"));
        }
        Ok(Self { num, den })
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

/// Time-aligned multi-rate recording. Values are volts; NaN marks lost samples.
#[derive(Debug, Clone)]
pub struct Recording {
    fast: [Vec<f64>; 7],
    slow: [Vec<f64>; 3],
    fast_rate_hz: f64,
    slow_rate: Rational,
    start_time: DateTime<FixedOffset>,
    adc_scale: f64,
}

/// Number of slow samples implied by a fast-grid length.
pub fn slow_len_for(fast_len: usize) -> usize {
    fast_len.div_ceil(MUX_FACTOR)
}

/// Whether slow sample `j` of patch `patch` was ever sampled on a fast grid
/// of `fast_len` ticks.
pub fn mux_slot_sampled(patch: usize, j: usize, fast_len: usize) -> bool {
    MUX_FACTOR * j + patch < fast_len
}

pub fn default_start_time() -> DateTime<FixedOffset> {
    DateTime::parse_from_rfc3339("1970-01-01T00:00:00+00:00").expect("static timestamp")
}

impl Recording {
    /// Builds a recording at the nominal 125 Hz / (125/3) Hz rates.
    ///
    /// Slow slots that fall past the end of the fast grid are overwritten
    /// with NaN since the multiplexer never sampled them.
    pub fn new(fast: [Vec<f64>; 7], slow: [Vec<f64>; 3], start_time: DateTime<FixedOffset>) -> Result<Self> {
        Self::with_rates(fast, slow, FAST_RATE_HZ, Rational { num: 125, den: 3 }, start_time, DEFAULT_ADC_SCALE)
    }

    pub fn with_rates(
        fast: [Vec<f64>; 7],
        mut slow: [Vec<f64>; 3],
        fast_rate_hz: f64,
        slow_rate: Rational,
        start_time: DateTime<FixedOffset>,
        adc_scale: f64,
    ) -> Result<Self> {
        if !(fast_rate_hz.is_finite() && fast_rate_hz > 0.0) {
            return Err(invalid("fast rate must be strictly positive"));
        }
        if slow_rate.num == 0 || slow_rate.den == 0 {
            return Err(invalid("slow rate must be strictly positive"));
        }
        if !(adc_scale.is_finite() && adc_scale > 0.0) {
            return Err(invalid("adc_scale must be strictly positive"));
        }
        let n = fast[0].len();
        if let Some(c) = FastChannel::ALL.iter().find(|c| fast[c.index()].len() != n) {
            return Err(Error::LengthMismatch(format!(
                "fast channel {} has {} samples, expected {n}",
                c.column(),
                fast[c.index()].len()
            )));
        }
        let m = slow_len_for(n);
        if let Some(c) = SlowChannel::ALL.iter().find(|c| slow[c.index()].len() != m) {
            return Err(Error::LengthMismatch(format!(
                "slow channel {} has {} samples, expected ceil({n}/3) = {m}",
                c.column(),
                slow[c.index()].len()
            )));
        }
        for (patch, ch) in slow.iter_mut().enumerate() {
            for (j, v) in ch.iter_mut().enumerate().rev() {
                if mux_slot_sampled(patch, j, n) {
                    break;
                }
                *v = f64::NAN;
            }
        }
        Ok(Self { fast, slow, fast_rate_hz, slow_rate, start_time, adc_scale })
    }

    pub fn empty() -> Self {
        Self::new(Default::default(), Default::default(), default_start_time()).expect("empty recording is valid")
    }

    pub fn fast_len(&self) -> usize {
        self.fast[0].len()
    }

    pub fn slow_len(&self) -> usize {
        self.slow[0].len()
    }

    pub fn fast(&self, ch: FastChannel) -> &[f64] {
        &self.fast[ch.index()]
    }

    pub fn slow(&self, ch: SlowChannel) -> &[f64] {
        &self.slow[ch.index()]
    }

    pub fn fast_channels(&self) -> &[Vec<f64>; 7] {
        &self.fast
    }

    pub fn slow_channels(&self) -> &[Vec<f64>; 3] {
        &self.slow
    }

    pub fn channel(&self, id: ChannelId) -> &[f64] {
        match id {
            ChannelId::Fast(c) => self.fast(c),
            ChannelId::Slow(c) => self.slow(c),
        }
    }

    pub fn rate_of(&self, id: ChannelId) -> f64 {
        match id {
            ChannelId::Fast(_) => self.fast_rate_hz,
            ChannelId::Slow(_) => self.slow_rate.as_f64(),
        }
    }

    pub fn fast_rate_hz(&self) -> f64 {
        self.fast_rate_hz
    }

    pub fn slow_rate(&self) -> Rational {
        self.slow_rate
    }

    pub fn slow_rate_hz(&self) -> f64 {
        self.slow_rate.as_f64()
    }

    pub fn start_time(&self) -> DateTime<FixedOffset> {
        self.start_time
    }

    pub fn adc_scale(&self) -> f64 {
        self.adc_scale
    }

    pub fn duration_s(&self) -> f64 {
        self.fast_len() as f64 / self.fast_rate_hz
    }

    pub fn bcg(&self) -> [&[f64]; 3] {
        FastChannel::BCG.map(|c| self.fast(c))
    }

    pub fn resp(&self) -> [&[f64]; 3] {
        SlowChannel::ALL.map(|c| self.slow(c))
    }

    /// Copy of the samples in `[start_s, end_s)` on both grids.
    pub fn time_slice(&self, start_s: f64, end_s: f64) -> Result<Recording> {
        if !(start_s >= 0.0 && end_s >= start_s) {
            return Err(invalid(format!("bad time slice [{start_s}, {end_s})")));
        }
        let n = self.fast_len();
        // Snap to the MUX cycle so patch phases stay aligned.
        let a = (((start_s * self.fast_rate_hz).round() as usize).min(n) / MUX_FACTOR) * MUX_FACTOR;
        let b = ((end_s * self.fast_rate_hz).round() as usize).clamp(a, n);
        let fast = self.fast.clone().map(|c| c[a..b].to_vec());
        let (sa, sb) = (a / MUX_FACTOR, slow_len_for(b));
        let slow = self.slow.clone().map(|c| {
            let mut v = c[sa..sb.max(sa)].to_vec();
            v.truncate(slow_len_for(b - a));
            v
        });
        let start = self.start_time + chrono::Duration::microseconds((a as f64 / self.fast_rate_hz * 1e6) as i64);
        Recording::with_rates(fast, slow, self.fast_rate_hz, self.slow_rate, start, self.adc_scale)
    }
}

/// Non-overlapping consecutive windows of `epoch_len_s`; a trailing partial
/// window is dropped.
pub fn slice_epochs(rec: &Recording, channel: ChannelId, epoch_len_s: f64) -> Result<Vec<&[f64]>> {
    if !(epoch_len_s > 0.0 && epoch_len_s.is_finite()) {
        return Err(invalid("epoch length must be positive"));
    }
    let len = (epoch_len_s * rec.rate_of(channel)).round() as usize;
    if len == 0 {
        return Err(invalid("epoch shorter than one sample"));
    }
    Ok(rec.channel(channel).chunks_exact(len).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Spindle,
    #[serde(rename = "kcomplex")]
    KComplex,
    Movement,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Spindle => "spindle",
            EventKind::KComplex => "kcomplex",
            EventKind::Movement => "movement",
        }
    }
}

impl FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "spindle" => Ok(EventKind::Spindle),
            "kcomplex" | "k-complex" => Ok(EventKind::KComplex),
            "movement" => Ok(EventKind::Movement),
            other => Err(invalid(format!("unknown event kind `{other}`"))),
        }
    }
}

/// Shortest and longest duration of a spindle or K-complex, seconds.
pub const MICROEVENT_MIN_S: f64 = 0.5;
pub const MICROEVENT_MAX_S: f64 = 3.0;

/// An annotated interval, seconds from recording start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventInterval {
    pub kind: EventKind,
    pub start_s: f64,
    pub end_s: f64,
}

impl EventInterval {
    pub fn new(kind: EventKind, start_s: f64, end_s: f64) -> Result<Self> {
        if !(start_s.is_finite() && end_s.is_finite() && end_s > start_s) {
            return Err(invalid(format!("event needs end > start, got [{start_s}, {end_s}]")));
        }
        let d = end_s - start_s;
        let micro = matches!(kind, EventKind::Spindle | EventKind::KComplex);
        // small slack so intervals read back from 6-decimal CSV still pass
        if micro && !(MICROEVENT_MIN_S - 1e-9..=MICROEVENT_MAX_S + 1e-9).contains(&d) {
            return Err(invalid(format!("{} lasting {d:.3} s outside [0.5, 3] s", kind.as_str())));
        }
        Ok(Self { kind, start_s, end_s })
    }

    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.start_s + self.end_s)
    }

    pub fn overlap(&self, start_s: f64, end_s: f64) -> f64 {
        (self.end_s.min(end_s) - self.start_s.max(start_s)).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    Wake,
    Light,
    Deep,
    Rem,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Wake, Stage::Light, Stage::Deep, Stage::Rem];

    pub fn code(self) -> char {
        match self {
            Stage::Wake => 'W',
            Stage::Light => 'L',
            Stage::Deep => 'D',
            Stage::Rem => 'R',
        }
    }

    pub fn from_code(s: &str) -> Result<Self> {
        match s.trim() {
            "W" => Ok(Stage::Wake),
            "L" => Ok(Stage::Light),
            "D" => Ok(Stage::Deep),
            "R" => Ok(Stage::Rem),
            other => Err(invalid(format!("unknown stage code `{other}`"))),
        }
    }
}

pub const EPOCH_LEN_S: f64 = 30.0;

/// Sleep stages scored in 30 s epochs (N1 and N2 merged into Light).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hypnogram {
    pub stages: Vec<Stage>,
}

impl Hypnogram {
    pub fn new(stages: Vec<Stage>) -> Self {
        Self { stages }
    }

    pub fn epoch_len_s(&self) -> f64 {
        EPOCH_LEN_S
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }
}

const FAST_HEADER: [&str; 8] = ["t", "eeg_l", "eeg_r", "eog_l", "eog_r", "bcg_p1", "bcg_p2", "bcg_p3"];
const SLOW_HEADER: [&str; 4] = ["t", "resp_p1", "resp_p2", "resp_p3"];

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    fast_rate_hz: f64,
    slow_rate_num: u32,
    slow_rate_den: u32,
    start_time: String,
    adc_scale: f64,
}

fn fmt_sample(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v}")
    }
}

fn write_grid(path: &Path, header: &[&str], rate: f64, cols: &[&[f64]]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    let n = cols.first().map_or(0, |c| c.len());
    let mut row = Vec::with_capacity(header.len());
    for i in 0..n {
        row.clear();
        row.push(format!("{:.6}", i as f64 / rate));
        row.extend(cols.iter().map(|c| fmt_sample(c[i])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn read_grid(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let malformed = |reason: String| Error::Malformed { path: path.to_path_buf(), reason };
    let mut r = csv::ReaderBuilder::new().flexible(true).has_headers(true).from_path(path)?;
    let got: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
    for name in got.iter().skip(1) {
        if !header.contains(&name.as_str()) {
            return Err(Error::UnknownChannel(name.clone()));
        }
    }
    if got.iter().map(String::as_str).ne(header.iter().copied()) {
        return Err(malformed(format!("expected header `{}`, got `{}`", header.join(","), got.join(","))));
    }
    let k = header.len() - 1;
    let mut cols = vec![Vec::new(); k];
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let present = rec.iter().take_while(|f| !f.trim().is_empty()).count();
        if rec.len() != header.len() || present != header.len() {
            return Err(Error::LengthMismatch(format!(
                "{}: row {} has {} of {} values",
                path.display(),
                line + 1,
                present.saturating_sub(1),
                k
            )));
        }
        rec[0].trim().parse::<f64>().map_err(|e| malformed(format!("row {}: bad time: {e}", line + 1)))?;
        for (c, field) in rec.iter().skip(1).enumerate() {
            let v = field
                .trim()
                .parse::<f64>()
                .map_err(|e| malformed(format!("row {}: bad value `{field}`: {e}", line + 1)))?;
            cols[c].push(v);
        }
    }
    Ok(cols)
}

/// Writes `fast.csv`, `slow.csv` and `meta.json` into `dir` (created if needed).
pub fn save_recording(rec: &Recording, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let fast: Vec<&[f64]> = rec.fast.iter().map(Vec::as_slice).collect();
    write_grid(&dir.join("fast.csv"), &FAST_HEADER, rec.fast_rate_hz, &fast)?;
    let slow: Vec<&[f64]> = rec.slow.iter().map(Vec::as_slice).collect();
    write_grid(&dir.join("slow.csv"), &SLOW_HEADER, rec.slow_rate.as_f64(), &slow)?;
    let meta = Meta {
        fast_rate_hz: rec.fast_rate_hz,
        slow_rate_num: rec.slow_rate.num,
        slow_rate_den: rec.slow_rate.den,
        start_time: rec.start_time.to_rfc3339(),
        adc_scale: rec.adc_scale,
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

pub fn load_recording(dir: &Path) -> Result<Recording> {
    let meta_path = dir.join("meta.json");
    if !meta_path.exists() {
        return Err(Error::MissingFile(meta_path));
    }
    let meta: Meta = serde_json::from_str(&fs::read_to_string(&meta_path)?)
        .map_err(|e| Error::Malformed { path: meta_path.clone(), reason: e.to_string() })?;
    let start_time = DateTime::parse_from_rfc3339(&meta.start_time)
        .map_err(|e| Error::Malformed { path: meta_path.clone(), reason: format!("start_time: {e}") })?;
    let fast: [Vec<f64>; 7] = read_grid(&dir.join("fast.csv"), &FAST_HEADER)?.try_into().expect("seven fast columns");
    let slow: [Vec<f64>; 3] = read_grid(&dir.join("slow.csv"), &SLOW_HEADER)?.try_into().expect("three slow columns");
    Recording::with_rates(
        fast,
        slow,
        meta.fast_rate_hz,
        Rational::new(meta.slow_rate_num, meta.slow_rate_den)?,
        start_time,
        meta.adc_scale,
    )
}

pub fn write_events(path: &Path, events: &[EventInterval]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["kind", "start_s", "end_s"])?;
    for e in events {
        w.write_record([e.kind.as_str().to_string(), format!("{:.6}", e.start_s), format!("{:.6}", e.end_s)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_events(path: &Path) -> Result<Vec<EventInterval>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let malformed = |reason: String| Error::Malformed { path: path.to_path_buf(), reason };
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<&str> = r.headers()?.iter().map(str::trim).collect();
    if header != ["kind", "start_s", "end_s"] {
        return Err(malformed(format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let kind: EventKind = rec.get(0).unwrap_or("").parse()?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i).unwrap_or("").trim().parse::<f64>().map_err(|e| malformed(format!("bad number: {e}")))
        };
        out.push(EventInterval::new(kind, num(1)?, num(2)?)?);
    }
    Ok(out)
}

pub fn write_stages(path: &Path, hyp: &Hypnogram) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "stage"])?;
    for (i, s) in hyp.stages.iter().enumerate() {
        w.write_record([i.to_string(), s.code().to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_stages(path: &Path) -> Result<Hypnogram> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let malformed = |reason: String| Error::Malformed { path: path.to_path_buf(), reason };
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<&str> = r.headers()?.iter().map(str::trim).collect();
    if header != ["epoch", "stage"] {
        return Err(malformed(format!("unexpected header {header:?}")));
    }
    let mut stages = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let epoch: usize =
            rec.get(0).unwrap_or("").trim().parse().map_err(|e| malformed(format!("bad epoch index: {e}")))?;
        if epoch != i {
            return Err(malformed(format!("epoch {epoch} out of sequence at row {}", i + 1)));
        }
        stages.push(Stage::from_code(rec.get(1).unwrap_or(""))?);
    }
    Ok(Hypnogram::new(stages))
}
