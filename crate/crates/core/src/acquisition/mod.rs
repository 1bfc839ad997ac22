//! Framed wire codec for the board's 8-channel stream.
//!
//! Frame: `0xA5 | seq u16 | n u8 | n ticks x 8 x u16 | crc u16`, all
//! little-endian, CRC-16/CCITT-FALSE over everything before it.

mod crc;

pub use crc::crc16_ccitt_false;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::recording::{
    default_start_time, slow_len_for, volts_to_adc, FastChannel, Recording, ADC_MAX_COUNT, DEFAULT_ADC_SCALE,
    MUX_FACTOR,
};

pub const FRAME_MAGIC: u8 = 0xA5;
pub const CHANNELS_PER_TICK: usize = 8;
pub const MAX_TICKS_PER_FRAME: usize = 25;
pub const HEADER_LEN: usize = 4;
pub const CRC_LEN: usize = 2;
pub const STREAM_EXTENSION: &str = "pmk";

/// 13 ticks on even sequence numbers, 12 on odd: 12.5 per 100 ms.
pub fn ticks_for_seq(seq: u16) -> usize {
    if seq % 2 == 0 {
        13
    } else {
        12
    }
}

pub fn frame_len(ticks: usize) -> usize {
    HEADER_LEN + 2 * CHANNELS_PER_TICK * ticks + CRC_LEN
}

/// Patch whose respiration sample rides on absolute tick `tick`.
pub fn mux_patch(tick: usize) -> usize {
    tick % MUX_FACTOR
}

/// One decoded frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub seq: u16,
    pub ticks: Vec<[u16; CHANNELS_PER_TICK]>,
}

impl Frame {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(frame_len(self.ticks.len()));
        out.push(FRAME_MAGIC);
        out.extend_from_slice(&self.seq.to_le_bytes());
        out.push(self.ticks.len() as u8);
        for tick in &self.ticks {
            for v in tick {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc16_ccitt_false(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }
}

fn tick_counts(rec: &Recording, tick: usize) -> Result<[u16; CHANNELS_PER_TICK]> {
    let scale = rec.adc_scale();
    let mut row = [0u16; CHANNELS_PER_TICK];
    for c in FastChannel::ALL {
        row[c.index()] = volts_to_adc(rec.fast(c)[tick], scale)
            .map_err(|e| Error::OutOfRange(format!("tick {tick} {}: {e}", c.column())))?;
    }
    let patch = mux_patch(tick);
    row[7] = volts_to_adc(rec.resp()[patch][tick / MUX_FACTOR], scale)
        .map_err(|e| Error::OutOfRange(format!("tick {tick} resp_p{}: {e}", patch + 1)))?;
    Ok(row)
}

/// Frames for every fast tick, sequence numbers from 0.
pub fn encode_frames(rec: &Recording) -> Result<Vec<Frame>> {
    let n = rec.fast_len();
    let mut frames = Vec::new();
    let mut tick = 0;
    let mut seq: u16 = 0;
    while tick < n {
        let take = ticks_for_seq(seq).min(n - tick);
        let ticks = (tick..tick + take).map(|i| tick_counts(rec, i)).collect::<Result<_>>()?;
        frames.push(Frame { seq, ticks });
        tick += take;
        seq = seq.wrapping_add(1);
    }
    Ok(frames)
}

pub fn encode_stream(rec: &Recording) -> Result<Vec<u8>> {
    Ok(encode_frames(rec)?.iter().flat_map(Frame::to_bytes).collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LossReport {
    pub frames_ok: u64,
    pub frames_corrupt: u64,
    /// Sequence numbers skipped, minus those explained by a corrupt frame.
    pub frames_lost: u64,
    /// Ticks filled with NaN for skipped sequence numbers.
    pub samples_lost: u64,
}

/// Resumable decoder. Bytes go in with [`feed`](Self::feed); ticks
/// accumulate until [`finish`](Self::finish) builds the recording.
#[derive(Debug, Default)]
pub struct StreamDecoder {
    buf: Vec<u8>,
    pos: usize,
    expected_seq: Option<u16>,
    ticks: Vec<Option<[u16; CHANNELS_PER_TICK]>>,
    report: LossReport,
    resyncing: bool,
    corrupt_since_ok: u64,
}

enum Parse {
    Frame(Frame, usize),
    Bad,
    NeedMore,
}

impl StreamDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn report(&self) -> LossReport {
        self.report
    }

    pub fn ticks_decoded(&self) -> usize {
        self.ticks.len()
    }

    pub fn feed(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
        self.drain(false);
        if self.pos > 0 {
            self.buf.drain(..self.pos);
            self.pos = 0;
        }
    }

    fn mark_corrupt(&mut self) {
        if !self.resyncing {
            self.report.frames_corrupt += 1;
            self.corrupt_since_ok += 1;
            self.resyncing = true;
        }
    }

    fn try_parse(&self, at: usize) -> Parse {
        let b = &self.buf[at..];
        if b.len() < HEADER_LEN {
            return Parse::NeedMore;
        }
        let n = usize::from(b[3]);
        if n == 0 || n > MAX_TICKS_PER_FRAME {
            return Parse::Bad;
        }
        let len = frame_len(n);
        if b.len() < len {
            return Parse::NeedMore;
        }
        let crc = u16::from_le_bytes([b[len - 2], b[len - 1]]);
        if crc16_ccitt_false(&b[..len - 2]) != crc {
            return Parse::Bad;
        }
        let mut ticks = Vec::with_capacity(n);
        for t in 0..n {
            let mut row = [0u16; CHANNELS_PER_TICK];
            for (c, v) in row.iter_mut().enumerate() {
                let o = HEADER_LEN + 2 * (t * CHANNELS_PER_TICK + c);
                *v = u16::from_le_bytes([b[o], b[o + 1]]);
                if *v > ADC_MAX_COUNT {
                    return Parse::Bad;
                }
            }
            ticks.push(row);
        }
        Parse::Frame(Frame { seq: u16::from_le_bytes([b[1], b[2]]), ticks }, len)
    }

    /// Consumes whole frames from the buffer. At end of stream a trailing
    /// partial frame counts as corrupt and scanning continues past it.
    fn drain(&mut self, at_end: bool) {
        while self.pos < self.buf.len() {
            if self.buf[self.pos] != FRAME_MAGIC {
                self.mark_corrupt();
                match self.buf[self.pos..].iter().position(|&b| b == FRAME_MAGIC) {
                    Some(off) => self.pos += off,
                    None => {
                        self.pos = self.buf.len();
                        return;
                    }
                }
                continue;
            }
            match self.try_parse(self.pos) {
                Parse::Frame(frame, len) => {
                    self.pos += len;
                    self.accept(frame);
                }
                Parse::Bad => {
                    self.mark_corrupt();
                    self.pos += 1;
                }
                Parse::NeedMore if at_end => {
                    self.mark_corrupt();
                    self.pos += 1;
                }
                Parse::NeedMore => return,
            }
        }
    }

    fn accept(&mut self, frame: Frame) {
        let expected = self.expected_seq.unwrap_or(0);
        let gap = frame.seq.wrapping_sub(expected);
        if gap > 1 << 15 {
            // stale or replayed sequence number
            self.mark_corrupt();
            return;
        }
        if gap > 0 {
            let mut lost_ticks = 0;
            let mut s = expected;
            for _ in 0..gap {
                lost_ticks += ticks_for_seq(s);
                s = s.wrapping_add(1);
            }
            self.ticks.extend(std::iter::repeat_n(None, lost_ticks));
            self.report.frames_lost += u64::from(gap).saturating_sub(self.corrupt_since_ok);
            self.report.samples_lost += lost_ticks as u64;
        }
        self.ticks.extend(frame.ticks.into_iter().map(Some));
        self.expected_seq = Some(frame.seq.wrapping_add(1));
        self.report.frames_ok += 1;
        self.resyncing = false;
        self.corrupt_since_ok = 0;
    }

    /// Flushes the buffer and demultiplexes into a recording. Lost ticks
    /// are NaN on every channel, including the respiration slot they held.
    pub fn finish(mut self) -> (Recording, LossReport) {
        self.drain(true);
        let n = self.ticks.len();
        let mut fast: [Vec<f64>; 7] = std::array::from_fn(|_| vec![f64::NAN; n]);
        let mut slow: [Vec<f64>; 3] = std::array::from_fn(|_| vec![f64::NAN; slow_len_for(n)]);
        for (i, tick) in self.ticks.iter().enumerate() {
            if let Some(row) = tick {
                for (c, ch) in fast.iter_mut().enumerate() {
                    ch[i] = f64::from(row[c]) * DEFAULT_ADC_SCALE;
                }
                slow[mux_patch(i)][i / MUX_FACTOR] = f64::from(row[7]) * DEFAULT_ADC_SCALE;
            }
        }
        let rec = Recording::new(fast, slow, default_start_time()).expect("decoder output has consistent lengths");
        (rec, self.report)
    }
}

/// Decodes a complete captured stream. Never fails: garbage yields an
/// empty recording and a report of what was skipped.
pub fn decode_stream(bytes: &[u8]) -> (Recording, LossReport) {
    let mut dec = StreamDecoder::new();
    dec.feed(bytes);
    dec.finish()
}
