use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::recording::{slow_len_for, FAST_RATE_HZ, MUX_FACTOR};

use super::noise::{mean_power, pink_noise, white_noise};
use super::scenario::{resp_gains, BodyPosition, ScenarioSpec};
use super::stream_rng;

pub const PULSE_AMPLITUDE_V: f64 = 0.03;
pub const BCG_LEVEL_V: f64 = 1.65;
/// Breathing swing on the BCG channels relative to the pulse peak; the
/// pressure patches see breathing far more strongly than the heartbeat.
pub const BCG_RESP_RATIO: f64 = 3.0;
pub const BCG_NOISE_BAND_HZ: (f64, f64) = (0.1, 40.0);
/// Share of BCG noise power common to all patches (head and strap motion).
pub const BCG_COMMON_NOISE_FRACTION: f64 = 0.85;
pub const RESP_AMPLITUDE_V: f64 = 0.05;
pub const RESP_NOISE_BAND_HZ: (f64, f64) = (0.05, 20.0);
/// Seated patch levels; a pressed patch sits `PRESSED_DROP_V` lower.
pub const PATCH_LEVEL_V: [f64; 3] = [1.60, 1.65, 1.70];
pub const PRESSED_DROP_V: f64 = 0.3;
/// Pulse width as a fraction of the local beat period.
pub const PULSE_SIGMA_FRACTION: f64 = 0.15;

const STREAM_BEATS: u64 = 1;
const STREAM_BCG_NOISE: u64 = 2;
const STREAM_RESP_NOISE: u64 = 3;
const STREAM_MOVEMENT: u64 = 4;

pub fn fast_len(spec: &ScenarioSpec) -> usize {
    (spec.duration_s * FAST_RATE_HZ).round() as usize
}

/// Beat onsets: each interval is the local period, jittered by `hrv`.
pub fn beat_times(spec: &ScenarioSpec) -> Vec<f64> {
    let mut rng = stream_rng(spec.seed, STREAM_BEATS);
    let mut beats = Vec::new();
    let mut t = 0.0;
    while t < spec.duration_s {
        beats.push(t);
        let period = 60.0 / spec.hr_bpm.at(t);
        let jitter: f64 = if spec.hrv > 0.0 { rng.sample::<f64, _>(StandardNormal) * spec.hrv } else { 0.0 };
        t += period * (1.0 + jitter).max(0.5);
    }
    beats
}

/// Unit-gain pulse train: a Gaussian-derivative wavelet at each beat, peak 1.
pub fn pulse_train(beats: &[f64], n: usize, fs_hz: f64) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for (k, &tb) in beats.iter().enumerate() {
        let period = beats.get(k + 1).map_or_else(|| if k > 0 { tb - beats[k - 1] } else { 1.0 }, |&nx| nx - tb);
        let sigma = PULSE_SIGMA_FRACTION * period;
        let lo = ((tb - 5.0 * sigma) * fs_hz).ceil().max(0.0) as usize;
        let hi = (((tb + 5.0 * sigma) * fs_hz).floor() as usize + 1).min(n);
        for (i, v) in x.iter_mut().enumerate().take(hi).skip(lo) {
            let d = i as f64 / fs_hz - tb;
            *v += -(d / sigma) * (0.5 - d * d / (2.0 * sigma * sigma)).exp();
        }
    }
    x
}

/// Breathing phase in cycles at each time, integrating the schedule.
fn resp_phase(spec: &ScenarioSpec, times: impl Iterator<Item = f64>) -> Vec<f64> {
    let dt = 1.0 / FAST_RATE_HZ;
    let mut out = Vec::new();
    let mut phase = 0.0;
    let mut t_acc = 0.0;
    for t in times {
        while t_acc + dt <= t {
            phase += spec.resp_bpm.at(t_acc + dt / 2.0) / 60.0 * dt;
            t_acc += dt;
        }
        out.push(phase + spec.resp_bpm.at(t_acc) / 60.0 * (t - t_acc));
    }
    out
}

fn noise_sd(signal_power: f64, snr_db: f64) -> f64 {
    (signal_power / 10f64.powf(snr_db / 10.0)).sqrt()
}

/// Variance of calm seated wear on a patch: full-cycle breathing plus noise.
pub fn calm_slow_variance(spec: &ScenarioSpec) -> [f64; 3] {
    let g = resp_gains(BodyPosition::Seated);
    let resp_power = RESP_AMPLITUDE_V * RESP_AMPLITUDE_V / 2.0;
    let noise = noise_sd(resp_power, spec.noise.resp_snr_db).powi(2);
    std::array::from_fn(|p| g[p] * g[p] * resp_power + noise)
}

#[derive(Debug, Clone)]
pub struct CardioOutput {
    pub bcg: [Vec<f64>; 3],
    pub resp: [Vec<f64>; 3],
    pub beats: Vec<f64>,
    /// Measured signal-to-noise per BCG and respiration channel, dB.
    pub bcg_snr_db: [f64; 3],
    pub resp_snr_db: [f64; 3],
}

/// The three pressure patches: BCG at the fast rate, breathing baseline at
/// a third of it with each patch sampled on its own multiplexer tick.
pub fn gen_cardio(spec: &ScenarioSpec) -> Result<CardioOutput> {
    spec.validate()?;
    let n = fast_len(spec);
    let fs = FAST_RATE_HZ;
    let beats = beat_times(spec);
    let unit = pulse_train(&beats, n, fs);
    let pulse_power = mean_power(&unit) * PULSE_AMPLITUDE_V * PULSE_AMPLITUDE_V;
    let ripple_amp = BCG_RESP_RATIO * PULSE_AMPLITUDE_V;
    // noise is referenced to everything a unit-gain patch carries
    let bcg_sd = noise_sd(pulse_power + ripple_amp * ripple_amp / 2.0, spec.noise.bcg_snr_db);
    let resp_power = RESP_AMPLITUDE_V * RESP_AMPLITUDE_V / 2.0;
    let resp_sd = noise_sd(resp_power, spec.noise.resp_snr_db);
    let calm = calm_slow_variance(spec);

    let postures: Vec<BodyPosition> = (0..n).map(|i| spec.posture_at(i as f64 / fs)).collect();
    let fast_phase = resp_phase(spec, (0..n).map(|i| i as f64 / fs));
    let mut noise_rng = stream_rng(spec.seed, STREAM_BCG_NOISE);
    let mut move_rng = stream_rng(spec.seed, STREAM_MOVEMENT);
    let mut bcg_snr_db = [0.0; 3];
    let rho = BCG_COMMON_NOISE_FRACTION;
    let common = pink_noise(n, fs, BCG_NOISE_BAND_HZ.0, BCG_NOISE_BAND_HZ.1, &mut noise_rng);
    let bcg: [Vec<f64>; 3] = std::array::from_fn(|p| {
        let own = pink_noise(n, fs, BCG_NOISE_BAND_HZ.0, BCG_NOISE_BAND_HZ.1, &mut noise_rng);
        let noise: Vec<f64> = common.iter().zip(&own).map(|(c, o)| rho.sqrt() * c + (1.0 - rho).sqrt() * o).collect();
        let mut sig_power = 0.0;
        let mut x = Vec::with_capacity(n);
        for i in 0..n {
            let g = spec.gain_profile.pulse_gains(postures[i]);
            let gr = resp_gains(postures[i]);
            let s = g[p] * PULSE_AMPLITUDE_V * unit[i] + ripple_amp * gr[p] * (2.0 * PI * fast_phase[i]).sin();
            sig_power += s * s;
            x.push(BCG_LEVEL_V + s + bcg_sd * noise[i]);
        }
        bcg_snr_db[p] = 10.0 * (sig_power / n.max(1) as f64 / (bcg_sd * bcg_sd * mean_power(&noise))).log10();
        let burst = white_noise(n, &mut move_rng);
        add_movements(spec, &mut x, &burst, fs, 0.0, pulse_power + bcg_sd * bcg_sd);
        x
    });

    let m = slow_len_for(n);
    let mut resp_rng = stream_rng(spec.seed, STREAM_RESP_NOISE);
    let mut resp_snr_db = [0.0; 3];
    let slow_fs = fs / MUX_FACTOR as f64;
    let resp: [Vec<f64>; 3] = std::array::from_fn(|p| {
        let times: Vec<f64> = (0..m).map(|j| (MUX_FACTOR * j + p) as f64 / fs).collect();
        let phase = resp_phase(spec, times.iter().copied());
        let noise = pink_noise(m, slow_fs, RESP_NOISE_BAND_HZ.0, RESP_NOISE_BAND_HZ.1, &mut resp_rng);
        let mut sig_power = 0.0;
        let mut x = Vec::with_capacity(m);
        for j in 0..m {
            let posture = spec.posture_at(times[j]);
            let level = PATCH_LEVEL_V[p] - if posture.pressed_patch() == Some(p) { PRESSED_DROP_V } else { 0.0 };
            let s = resp_gains(posture)[p] * RESP_AMPLITUDE_V * (2.0 * PI * phase[j]).sin();
            sig_power += s * s;
            x.push(level + s + resp_sd * noise[j]);
        }
        resp_snr_db[p] = 10.0 * (sig_power / m.max(1) as f64 / (resp_sd * resp_sd)).log10();
        let burst = white_noise(m, &mut move_rng);
        add_movements(spec, &mut x, &burst, slow_fs, p as f64 / fs, calm[p]);
        x
    });
    Ok(CardioOutput { bcg, resp, beats, bcg_snr_db, resp_snr_db })
}

/// Adds each movement burst so the in-burst variance is about
/// `variance_ratio * reference`.
fn add_movements(spec: &ScenarioSpec, x: &mut [f64], burst: &[f64], fs_hz: f64, offset_s: f64, reference: f64) {
    for mv in &spec.movements {
        let sd = ((mv.variance_ratio - 1.0) * reference).sqrt();
        for (i, v) in x.iter_mut().enumerate() {
            let t = i as f64 / fs_hz + offset_s;
            if t >= mv.start_s && t < mv.end_s {
                *v += sd * burst[i];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{periodicity, periodogram};
    use crate::synth::scenario::RateSchedule;

    #[test]
    fn noiseless_intervals_are_exact() {
        let mut spec = ScenarioSpec::new(60.0, 1);
        spec.hr_bpm = RateSchedule::Constant(72.0);
        let beats = beat_times(&spec);
        assert_eq!(beats.len(), 72);
        for w in beats.windows(2) {
            assert!((w[1] - w[0] - 60.0 / 72.0).abs() < 1e-12);
        }
    }

    #[test]
    fn snr_is_as_declared() {
        let spec = ScenarioSpec::new(120.0, 2);
        let out = gen_cardio(&spec).unwrap();
        assert!(out.bcg_snr_db[0].abs() < 0.5, "{:?}", out.bcg_snr_db);
        assert!((out.bcg_snr_db[1] - 20.0 * 0.3f64.log10()).abs() < 0.5);
        assert!((out.resp_snr_db[0] - 10.0).abs() < 0.5, "{:?}", out.resp_snr_db);
    }

    #[test]
    fn pressed_channel_is_periodic_at_unit_pulse_snr() {
        let mut spec = ScenarioSpec::new(60.0, 3);
        let unit = pulse_train(&beat_times(&spec), fast_len(&spec), FAST_RATE_HZ);
        let pulse = mean_power(&unit);
        let ripple = BCG_RESP_RATIO * BCG_RESP_RATIO / 2.0;
        spec.noise.bcg_snr_db = 10.0 * ((pulse + ripple) / pulse).log10();
        let out = gen_cardio(&spec).unwrap();
        let score = periodicity(&out.bcg[0], FAST_RATE_HZ, (0.75, 3.0));
        assert!(score >= 0.6, "{score}");
    }

    #[test]
    fn slow_peak_at_breathing_rate() {
        let spec = ScenarioSpec::new(120.0, 4);
        let out = gen_cardio(&spec).unwrap();
        let p = periodogram(&out.resp[0], FAST_RATE_HZ / 3.0).unwrap();
        let f = p.peak_in_band(0.1, 0.7).unwrap();
        let bin = p.freqs_hz[1];
        assert!((f - 0.25).abs() <= bin + 1e-12, "{f}");
        let level = out.resp[1].iter().sum::<f64>() / out.resp[1].len() as f64;
        assert!((level - PATCH_LEVEL_V[1]).abs() < 1e-3);
    }
}
