use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::dsp::upsample_linear;
use crate::error::{invalid, Error, Result};
use crate::recording::{EventInterval, EventKind, EPOCH_LEN_S};
use crate::spectral::{band_power_series, dwt2_db2, emd, stft, Dwt2};

pub const N_CHANNELS: usize = 6;
pub const N_STATS: usize = 10;
pub const N_FEATURES: usize = N_CHANNELS * N_STATS;
pub const WINDOW_S: f64 = 1.0;
pub const DEFAULT_HOP_S: f64 = 0.25;
pub const STAT_NAMES: [&str; N_STATS] =
    ["max", "mean", "median", "std", "sum", "energy", "mean_crossing", "iqr", "p10", "p90"];

/// Short-time spectral settings and the two power bands for one event kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandConfig {
    pub seg_len: usize,
    pub hop: usize,
    pub band_a: (f64, f64),
    pub band_b: (f64, f64),
}

impl BandConfig {
    pub fn for_kind(kind: EventKind) -> Result<Self> {
        match kind {
            EventKind::Spindle => Ok(Self { seg_len: 64, hop: 16, band_a: (10.0, 12.0), band_b: (9.0, 16.0) }),
            EventKind::KComplex => Ok(Self { seg_len: 256, hop: 64, band_a: (0.5, 1.0), band_b: (1.5, 4.5) }),
            EventKind::Movement => Err(invalid("movement is not an EEG micro-event")),
        }
    }
}

/// Feature column names for a kind; band edges are part of the names so
/// the schema hash differs between the spindle and K-complex pipelines.
pub fn feature_columns(kind: EventKind) -> Result<Vec<String>> {
    let c = BandConfig::for_kind(kind)?;
    let chans = [
        "raw".to_string(),
        format!("band_{}-{}hz", c.band_a.0, c.band_a.1),
        format!("band_{}-{}hz", c.band_b.0, c.band_b.1),
        "ca2".to_string(),
        "cd2".to_string(),
        "imf1".to_string(),
    ];
    Ok(chans.iter().flat_map(|ch| STAT_NAMES.iter().map(move |s| format!("{ch}.{s}"))).collect())
}

pub fn schema_hash(columns: &[String]) -> String {
    let mut h = Sha256::new();
    for c in columns {
        h.update(c.as_bytes());
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// The raw EEG plus five derived rows, all at the raw sample rate.
#[derive(Debug, Clone)]
pub struct AugmentedChannels {
    pub channels: [Vec<f64>; N_CHANNELS],
    pub fs_hz: f64,
    pub kind: EventKind,
}

impl AugmentedChannels {
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Epoch boundaries of `EPOCH_LEN_S`; a short tail joins the previous epoch.
fn epoch_bounds(n: usize, fs_hz: f64) -> Vec<(usize, usize)> {
    let len = (EPOCH_LEN_S * fs_hz).round() as usize;
    if n <= len {
        return vec![(0, n)];
    }
    let full = n / len;
    let mut b: Vec<(usize, usize)> = (0..full).map(|k| (k * len, (k + 1) * len)).collect();
    b.last_mut().unwrap().1 = n;
    b
}

fn augment_epoch(x: &[f64], fs_hz: f64, cfg: &BandConfig, out: &mut [Vec<f64>; N_CHANNELS]) -> Result<()> {
    let n = x.len();
    out[0].extend_from_slice(x);

    let tf = stft(x, fs_hz, cfg.seg_len, cfg.hop)?;
    let centers = tf.center_samples();
    for (row, band) in [(1, cfg.band_a), (2, cfg.band_b)] {
        let p = band_power_series(&tf, band.0, band.1)?;
        out[row].extend(upsample_linear(&p, n, &centers)?);
    }

    let Dwt2 { approx2, detail2, .. } = dwt2_db2(x)?;
    let centers: Vec<f64> = (0..approx2.len()).map(Dwt2::level2_center).collect();
    out[3].extend(upsample_linear(&approx2, n, &centers)?);
    out[4].extend(upsample_linear(&detail2, n, &centers)?);

    let modes = emd(x, 1)?;
    match modes.imfs.into_iter().next() {
        Some(imf) => out[5].extend(imf),
        None => out[5].extend(std::iter::repeat_n(0.0, n)),
    }
    Ok(())
}

/// Builds the six feature rows epoch by epoch. `eeg` should already be
/// band-limited to 0.5-35 Hz.
pub fn build_feature_channels(eeg: &[f64], fs_hz: f64, kind: EventKind) -> Result<AugmentedChannels> {
    let cfg = BandConfig::for_kind(kind)?;
    if eeg.iter().any(|v| v.is_nan()) {
        return Err(Error::NanInput);
    }
    if eeg.len() < cfg.seg_len.max(8) {
        return Err(Error::TooShort { needed: cfg.seg_len.max(8), got: eeg.len() });
    }
    let mut channels: [Vec<f64>; N_CHANNELS] = Default::default();
    for c in channels.iter_mut() {
        c.reserve(eeg.len());
    }
    for (a, b) in epoch_bounds(eeg.len(), fs_hz) {
        augment_epoch(&eeg[a..b], fs_hz, &cfg, &mut channels)?;
    }
    Ok(AugmentedChannels { channels, fs_hz, kind })
}

/// Linear-interpolated percentile of sorted data, `q` in [0, 1].
fn percentile_sorted(s: &[f64], q: f64) -> f64 {
    let pos = q * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (pos - lo as f64) * (s[hi] - s[lo])
}

/// The ten per-window statistics in `STAT_NAMES` order.
pub fn channel_stats(x: &[f64]) -> [f64; N_STATS] {
    let n = x.len() as f64;
    let sum: f64 = x.iter().sum();
    let mean = sum / n;
    let energy: f64 = x.iter().map(|v| v * v).sum();
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let mut crossings = 0usize;
    let mut prev = 0.0f64;
    for &v in x {
        let d = v - mean;
        if d != 0.0 {
            if prev != 0.0 && (d > 0.0) != (prev > 0.0) {
                crossings += 1;
            }
            prev = d;
        }
    }
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let max = s[s.len() - 1];
    [
        max,
        mean,
        percentile_sorted(&s, 0.5),
        var.sqrt(),
        sum,
        energy,
        crossings as f64,
        percentile_sorted(&s, 0.75) - percentile_sorted(&s, 0.25),
        percentile_sorted(&s, 0.1),
        percentile_sorted(&s, 0.9),
    ]
}

/// Row-major feature table with optional 0/1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub columns: Vec<String>,
    pub data: Vec<f64>,
    pub labels: Option<Vec<u8>>,
    pub fs_hz: f64,
    pub window_len: usize,
    pub hop: usize,
    /// First sample of each window, when rows come from a signal.
    pub window_starts: Vec<usize>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        if self.columns.is_empty() {
            0
        } else {
            self.data.len() / self.columns.len()
        }
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.columns.len();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn schema_hash(&self) -> String {
        schema_hash(&self.columns)
    }

    pub fn window_span_s(&self, i: usize) -> (f64, f64) {
        let s = self.window_starts[i] as f64 / self.fs_hz;
        (s, s + self.window_len as f64 / self.fs_hz)
    }

    /// Stacks matrices that share a schema. Window starts are dropped
    /// because they no longer refer to one signal.
    pub fn concat(parts: &[FeatureMatrix]) -> Result<FeatureMatrix> {
        let first = parts.first().ok_or_else(|| invalid("nothing to concatenate"))?;
        let mut out = FeatureMatrix { window_starts: Vec::new(), data: Vec::new(), ..first.clone() };
        let labelled = first.labels.is_some();
        out.labels = labelled.then(Vec::new);
        for p in parts {
            if p.columns != first.columns {
                return Err(Error::SchemaMismatch { expected: first.schema_hash(), actual: p.schema_hash() });
            }
            if p.labels.is_some() != labelled {
                return Err(invalid("cannot mix labelled and unlabelled feature matrices"));
            }
            out.data.extend_from_slice(&p.data);
            if let (Some(o), Some(l)) = (out.labels.as_mut(), p.labels.as_ref()) {
                o.extend_from_slice(l);
            }
        }
        Ok(out)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(FEATURE_MAGIC)?;
        w.write_all(&(self.n_rows() as u64).to_le_bytes())?;
        w.write_all(&(self.n_cols() as u32).to_le_bytes())?;
        w.write_all(&self.fs_hz.to_le_bytes())?;
        w.write_all(&(self.window_len as u32).to_le_bytes())?;
        w.write_all(&(self.hop as u32).to_le_bytes())?;
        for c in &self.columns {
            w.write_all(&(c.len() as u16).to_le_bytes())?;
            w.write_all(c.as_bytes())?;
        }
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        let starts = self.window_starts.len() == self.n_rows();
        w.write_all(&[u8::from(starts)])?;
        if starts {
            for s in &self.window_starts {
                w.write_all(&(*s as u64).to_le_bytes())?;
            }
        }
        match &self.labels {
            Some(l) => {
                w.write_all(&[1])?;
                w.write_all(l)?;
            }
            None => w.write_all(&[0])?,
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<FeatureMatrix> {
        fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
            let mut b = [0u8; N];
            r.read_exact(&mut b)?;
            Ok(b)
        }
        if &take::<4>(r)? != FEATURE_MAGIC {
            return Err(invalid("not a feature file"));
        }
        let rows = u64::from_le_bytes(take(r)?) as usize;
        let cols = u32::from_le_bytes(take(r)?) as usize;
        let fs_hz = f64::from_le_bytes(take(r)?);
        let window_len = u32::from_le_bytes(take(r)?) as usize;
        let hop = u32::from_le_bytes(take(r)?) as usize;
        let mut columns = Vec::with_capacity(cols.min(1024));
        for _ in 0..cols {
            let len = u16::from_le_bytes(take(r)?) as usize;
            let mut b = vec![0u8; len];
            r.read_exact(&mut b)?;
            columns.push(String::from_utf8(b).map_err(|_| invalid("column name is not UTF-8"))?);
        }
        let count = rows.checked_mul(cols).ok_or_else(|| invalid("feature table too large"))?;
        let mut data = Vec::with_capacity(count.min(1 << 24));
        for _ in 0..count {
            data.push(f64::from_le_bytes(take(r)?));
        }
        let mut window_starts = Vec::new();
        if take::<1>(r)?[0] == 1 {
            for _ in 0..rows {
                window_starts.push(u64::from_le_bytes(take(r)?) as usize);
            }
        }
        let labels = match take::<1>(r)?[0] {
            0 => None,
            1 => {
                let mut l = vec![0u8; rows];
                r.read_exact(&mut l)?;
                Some(l)
            }
            _ => return Err(invalid("bad label flag")),
        };
        Ok(FeatureMatrix { columns, data, labels, fs_hz, window_len, hop, window_starts })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<FeatureMatrix> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        FeatureMatrix::read_from(&mut f).map_err(|e| match e {
            Error::Io(_) | Error::InvalidArgument(_) => {
                Error::Malformed { path: path.to_path_buf(), reason: e.to_string() }
            }
            other => other,
        })
    }
}

const FEATURE_MAGIC: &[u8; 4] = b"NCF1";

pub fn hop_samples(hop_s: f64, fs_hz: f64) -> usize {
    ((hop_s * fs_hz).floor() as usize).max(1)
}

/// Slides a 1 s window over every augmented row.
pub fn window_statistics(ac: &AugmentedChannels, hop_s: f64) -> Result<FeatureMatrix> {
    let window_len = (WINDOW_S * ac.fs_hz).round() as usize;
    let hop = hop_samples(hop_s, ac.fs_hz);
    let n = ac.len();
    let columns = feature_columns(ac.kind)?;
    let count = if n >= window_len { (n - window_len) / hop + 1 } else { 0 };
    let mut data = Vec::with_capacity(count * N_FEATURES);
    let window_starts: Vec<usize> = (0..count).map(|k| k * hop).collect();
    for &s in &window_starts {
        for ch in &ac.channels {
            data.extend_from_slice(&channel_stats(&ch[s..s + window_len]));
        }
    }
    Ok(FeatureMatrix { columns, data, labels: None, fs_hz: ac.fs_hz, window_len, hop, window_starts })
}

/// 1 when at least half of the window overlaps an event of `kind`.
pub fn label_windows(fm: &FeatureMatrix, events: &[EventInterval], kind: EventKind) -> Vec<u8> {
    let half = 0.5 * fm.window_len as f64 / fm.fs_hz;
    (0..fm.window_starts.len())
        .map(|i| {
            let (a, b) = fm.window_span_s(i);
            let covered: f64 =
                events.iter().filter(|e| e.kind == kind).map(|e| (b.min(e.end_s) - a.max(e.start_s)).max(0.0)).sum();
            u8::from(covered >= half - 1e-9)
        })
        .collect()
}
