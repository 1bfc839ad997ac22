use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use nightcap::acquisition::{decode_stream, encode_stream};
use nightcap::metrics::{cohens_kappa, msc_coherence, stage_scores, zncc, CoherenceLabel, EegBand};
use nightcap::microevent::{
    detect_events, extract_features, feature_columns, label_windows, schema_hash, smote_balance, train_forest,
    FeatureMatrix, ForestModel,
};
use nightcap::physio::{
    calibrate_seated_baseline, classify_posture, detect_movement, estimate_heart_rate, estimate_respiration,
    write_movement_csv_to, write_posture_csv_to, BaselineCalibration, HrMode, RateSeries,
};
use nightcap::recording::{
    load_recording, read_events, read_stages, save_recording, write_events, ChannelId, EventKind, Recording,
    EPOCH_LEN_S,
};
use nightcap::synth::{gen_recording, write_bundle, ScenarioSpec};
use nightcap::{Error, Result};
use serde_json::{json, Value};

use crate::{Command, HrModeArg, KindArg, MetricArg};

pub fn run(cmd: Command, seed: Option<u64>) -> Result<()> {
    match cmd {
        Command::Synth { scenario, out } => synth(&scenario, &out, seed),
        Command::Encode { rec, out } => {
            let bytes = encode_stream(&load_recording(&rec)?)?;
            fs::write(&out, &bytes)?;
            info!("wrote {} bytes to {}", bytes.len(), out.display());
            Ok(())
        }
        Command::Decode { input, out } => decode(&input, &out),
        Command::Hr { rec, mode, out } => hr(&rec, mode, out),
        Command::Resp { rec, out } => {
            let r = load_recording(&rec)?;
            let series = estimate_respiration(r.resp(), r.slow_rate_hz())?;
            emit(out, |w| series.rate.write_csv_to(w))
        }
        Command::Calibrate { rec, out } => calibrate_seated_baseline(&load_recording(&rec)?)?.save(&out),
        Command::Posture { rec, calib, out } => {
            let blocks = classify_posture(&load_recording(&rec)?, &BaselineCalibration::load(&calib)?);
            emit(out, |w| write_posture_csv_to(w, &blocks))
        }
        Command::Movement { rec, calib, out } => {
            let events = detect_movement(&load_recording(&rec)?, &BaselineCalibration::load(&calib)?)?;
            emit(out, |w| write_movement_csv_to(w, &events))
        }
        Command::Features { rec, kind, events, out, channel } => features(&rec, kind, events, &out, &channel),
        Command::Train { features, out, trees, smote_k, no_smote } => {
            train(&features, &out, trees, if no_smote { None } else { Some(smote_k) }, seed.unwrap_or(0))
        }
        Command::Detect { rec, model, out, channel } => {
            let r = load_recording(&rec)?;
            let id: ChannelId = channel.parse()?;
            let model = ForestModel::load(&model)?;
            let det = detect_events(r.channel(id), r.rate_of(id), &model, model.kind)?;
            if !det.overlong.is_empty() {
                warn!("{} positive runs longer than a micro-event were dropped", det.overlong.len());
            }
            info!("{} {} events", det.events.len(), model.kind.as_str());
            write_events(&out, &det.events)
        }
        Command::Quality { rec, reference, metric, channel, out } => quality(&rec, &reference, metric, &channel, out),
        Command::Kappa { a, b } => {
            let k = cohens_kappa(&read_stages(&a)?, &read_stages(&b)?)?;
            println!("κ={k:.3}");
            Ok(())
        }
        Command::Scores { truth, pred, out } => scores(&truth, &pred, out),
    }
}

/// Runs `write` against `--out` when given, stdout otherwise.
fn emit(out: Option<PathBuf>, write: impl FnOnce(Box<dyn Write>) -> Result<()>) -> Result<()> {
    match out {
        Some(p) => write(Box::new(fs::File::create(p)?)),
        None => write(Box::new(io::stdout().lock())),
    }
}

fn emit_json(out: Option<PathBuf>, v: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(v)?;
    emit(out, |mut w| {
        writeln!(w, "{text}")?;
        Ok(())
    })
}

fn synth(scenario: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut spec = ScenarioSpec::load(scenario)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let generated = gen_recording(&spec)?;
    fs::create_dir_all(out)?;
    write_bundle(&generated, &spec, out)?;
    info!("{:.0} s recording written to {}", generated.recording.duration_s(), out.display());
    Ok(())
}

fn decode(input: &Path, out: &Path) -> Result<()> {
    if !input.exists() {
        return Err(Error::MissingFile(input.to_path_buf()));
    }
    let (rec, report) = decode_stream(&fs::read(input)?);
    fs::create_dir_all(out)?;
    save_recording(&rec, out)?;
    let v = serde_json::to_value(report)?;
    fs::write(out.join("loss_report.json"), serde_json::to_string_pretty(&v)?)?;
    println!("{v}");
    Ok(())
}

fn nan_mean(x: &[f64]) -> f64 {
    let (s, n) = x.iter().filter(|v| !v.is_nan()).fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::INFINITY
    } else {
        s / n as f64
    }
}

/// The patch carrying the head's weight reads lowest.
fn pressed_patch(rec: &Recording) -> usize {
    let means = rec.resp().map(nan_mean);
    (0..3).min_by(|&a, &b| means[a].total_cmp(&means[b])).unwrap_or(0)
}

fn hr(rec: &Path, mode: HrModeArg, out: Option<PathBuf>) -> Result<()> {
    let r = load_recording(rec)?;
    let mode = match mode {
        HrModeArg::Full => HrMode::Full,
        HrModeArg::NoPcaBest => HrMode::NoPcaBest,
        HrModeArg::NoPcaPressed => {
            let p = pressed_patch(&r);
            info!("pressed patch P{}", p + 1);
            HrMode::NoPcaPressed(p)
        }
    };
    let series: RateSeries = estimate_heart_rate(r.bcg(), r.fast_rate_hz(), mode)?;
    emit(out, |w| series.write_csv_to(w))
}

fn event_kind(kind: KindArg) -> EventKind {
    match kind {
        KindArg::Spindle => EventKind::Spindle,
        KindArg::Kcomplex => EventKind::KComplex,
    }
}

fn features(rec: &Path, kind: KindArg, events: Option<PathBuf>, out: &Path, channel: &str) -> Result<()> {
    let kind = event_kind(kind);
    let r = load_recording(rec)?;
    let id: ChannelId = channel.parse()?;
    let mut fm = extract_features(r.channel(id), r.rate_of(id), kind)?;
    let events = events.or_else(|| Some(rec.join("events.csv")).filter(|p| p.exists()));
    if let Some(p) = events {
        let labels = label_windows(&fm, &read_events(&p)?, kind);
        info!("{} of {} windows positive", labels.iter().filter(|&&l| l == 1).count(), labels.len());
        fm.labels = Some(labels);
    }
    fm.save(out)
}

fn kind_of(fm: &FeatureMatrix) -> Result<EventKind> {
    let hash = fm.schema_hash();
    for kind in [EventKind::Spindle, EventKind::KComplex] {
        if schema_hash(&feature_columns(kind)?) == hash {
            return Ok(kind);
        }
    }
    Err(Error::InvalidArgument("feature columns match no event kind".into()))
}

fn train(features: &Path, out: &Path, trees: usize, smote_k: Option<usize>, seed: u64) -> Result<()> {
    let fm = FeatureMatrix::load(features)?;
    let kind = kind_of(&fm)?;
    let fm = match smote_k {
        Some(k) => {
            let s = smote_balance(&fm, k, seed)?;
            if let Some(w) = &s.warning {
                warn!("{w}");
            }
            info!("{} synthetic rows, k = {}", s.synthetic, s.k_used);
            s.matrix
        }
        None => fm,
    };
    let model = train_forest(&fm, kind, trees, seed.wrapping_add(1))?;
    model.save(out)
}

fn quality(rec: &Path, reference: &Path, metric: MetricArg, channel: &str, out: Option<PathBuf>) -> Result<()> {
    let id: ChannelId = channel.parse()?;
    let (a, b) = (load_recording(rec)?, load_recording(reference)?);
    let fs_hz = a.rate_of(id);
    if fs_hz != b.rate_of(id) {
        return Err(Error::InvalidArgument("recordings differ in sample rate".into()));
    }
    let epoch = (EPOCH_LEN_S * fs_hz).round() as usize;
    let n = a.channel(id).len().min(b.channel(id).len());
    let epochs: Vec<(&[f64], &[f64])> = (0..n / epoch)
        .map(|k| (&a.channel(id)[k * epoch..(k + 1) * epoch], &b.channel(id)[k * epoch..(k + 1) * epoch]))
        .collect();
    if epochs.is_empty() {
        return Err(Error::TooShort { needed: epoch, got: n });
    }
    let report = match metric {
        MetricArg::Zncc => {
            let values: Vec<Option<f64>> = epochs.iter().map(|(x, y)| zncc(x, y).ok()).collect();
            let defined: Vec<f64> = values.iter().flatten().copied().collect();
            let mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
            json!({ "metric": "zncc", "channel": id.to_string(), "epoch_len_s": EPOCH_LEN_S, "values": values, "mean": mean })
        }
        MetricArg::Coherence => {
            let mut sums = [0.0; 4];
            let mut count = 0usize;
            for (x, y) in &epochs {
                if x.iter().chain(y.iter()).any(|v| v.is_nan()) {
                    continue;
                }
                let r = msc_coherence(x, y, fs_hz)?;
                for (s, band) in sums.iter_mut().zip(EegBand::ALL) {
                    *s += r.band_means[&band];
                }
                count += 1;
            }
            if count == 0 {
                return Err(Error::Undefined("no gap-free epoch for coherence".into()));
            }
            let mut means = serde_json::Map::new();
            let mut labels = serde_json::Map::new();
            for (s, band) in sums.iter().zip(EegBand::ALL) {
                let name = format!("{band:?}").to_ascii_lowercase();
                let m = s / count as f64;
                means.insert(name.clone(), json!(m));
                labels.insert(name, json!(label_name(CoherenceLabel::for_value(m))));
            }
            json!({
                "metric": "coherence", "channel": id.to_string(), "epoch_len_s": EPOCH_LEN_S,
                "epochs": count, "band_means": means, "band_labels": labels
            })
        }
    };
    emit_json(out, &report)
}

fn label_name(l: CoherenceLabel) -> &'static str {
    match l {
        CoherenceLabel::None => "none",
        CoherenceLabel::Low => "low",
        CoherenceLabel::Medium => "medium",
        CoherenceLabel::High => "high",
        CoherenceLabel::VeryHigh => "very_high",
    }
}

fn scores(truth: &Path, pred: &Path, out: Option<PathBuf>) -> Result<()> {
    let (t, p) = (read_stages(truth)?, read_stages(pred)?);
    let (cm, per_class) = stage_scores(&t, &p)?;
    let kappa = cohens_kappa(&t, &p).ok();
    let agree: usize = (0..cm.classes.len()).map(|i| cm.counts[i][i]).sum();
    let classes: Vec<String> = cm.classes.iter().map(|s| s.code().to_string()).collect();
    let per_class: serde_json::Map<String, Value> =
        classes.iter().zip(&per_class).map(|(c, s)| (c.clone(), json!(s))).collect();
    let report = json!({
        "classes": classes,
        "confusion": cm.counts,
        "epochs": cm.total(),
        "accuracy": agree as f64 / cm.total() as f64,
        "kappa": kappa,
        "per_class": per_class,
    });
    emit_json(out, &report)
}
