//! Decoding of three-state pulse streams into faradaic currents and the
//! derived readout figures of merit: LSB size, sensitivity, input-referred
//! noise, dynamic range, and running-mean convergence.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::electrochem::{limiting_current, ElectrodeGeometry};
use crate::fidigota::OutputDrive;

#[derive(Debug, Error)]
pub enum PulseError {
    #[error("empty stream")]
    EmptyStream,
    #[error("stream file parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("need at least {need} decode windows, got {got}")]
    TooFewWindows { need: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Recorded three-state digital output, one entry per clock period.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseStream {
    pub states: Vec<OutputDrive>,
    /// Clock frequency the stream was recorded at (Hz).
    pub fclk: f64,
}

impl PulseStream {
    pub fn new(states: Vec<OutputDrive>, fclk: f64) -> Self {
        Self { states, fclk }
    }

    /// Window length M in clock periods.
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.states.len() as f64 / self.fclk
    }

    /// Serialize as a header line `fclk_hz=<v>` followed by one character
    /// per period from {P, N, Z}, wrapped for readability.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "fclk_hz={}", self.fclk)?;
        for chunk in self.states.chunks(80) {
            let line: String = chunk.iter().map(|d| d.as_char()).collect();
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Parse the on-disk format produced by [`write_to`](Self::write_to).
    /// Newlines between state characters are tolerated.
    pub fn read_from<R: BufRead>(reader: R) -> Result<Self, PulseError> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or(PulseError::EmptyStream)?
            .map_err(PulseError::Io)?;
        let fclk = header
            .trim()
            .strip_prefix("fclk_hz=")
            .ok_or_else(|| PulseError::Parse {
                line: 1,
                reason: format!("expected 'fclk_hz=<value>' header, got '{header}'"),
            })?
            .parse::<f64>()
            .map_err(|e| PulseError::Parse {
                line: 1,
                reason: format!("bad fclk value: {e}"),
            })?;
        let mut states = Vec::new();
        for (idx, line) in lines.enumerate() {
            let line = line.map_err(PulseError::Io)?;
            for c in line.trim().chars() {
                let d = OutputDrive::from_char(c).ok_or_else(|| PulseError::Parse {
                    line: idx + 2,
                    reason: format!("invalid state character '{c}'"),
                })?;
                states.push(d);
            }
        }
        if states.is_empty() {
            return Err(PulseError::EmptyStream);
        }
        Ok(Self { states, fclk })
    }
}

/// Decoded current and pulse bookkeeping for one stream window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeResult {
    /// Decoded faradaic current (p·ip − n·in)/M (A).
    pub i_f: f64,
    /// Number of P (sourcing) periods.
    pub p: u64,
    /// Number of N (sinking) periods.
    pub n: u64,
    /// Window length in clock periods.
    pub m: u64,
    /// Minimum representable current ip/M (A).
    pub lsb: f64,
    /// Signed integer code: decoded current in LSB units, rounded.
    pub code: i64,
}

/// Decode a stream window into a faradaic current via the pulse-count
/// average (p·ip − n·in)/M.
pub fn decode(stream: &PulseStream, i_p: f64, i_n: f64) -> Result<DecodeResult, PulseError> {
    decode_slice(&stream.states, i_p, i_n)
}

/// Decode any slice of states; used for windowed analyses.
pub fn decode_slice(
    states: &[OutputDrive],
    i_p: f64,
    i_n: f64,
) -> Result<DecodeResult, PulseError> {
    if states.is_empty() {
        return Err(PulseError::EmptyStream);
    }
    let mut p = 0u64;
    let mut n = 0u64;
    for s in states {
        match s {
            OutputDrive::P => p += 1,
            OutputDrive::N => n += 1,
            OutputDrive::Z => {}
        }
    }
    let m = states.len() as u64;
    let i_f = (p as f64 * i_p - n as f64 * i_n) / m as f64;
    let lsb = i_p / m as f64;
    Ok(DecodeResult {
        i_f,
        p,
        n,
        m,
        lsb,
        code: (i_f / lsb).round() as i64,
    })
}

/// Minimum digitally representable current: one pulse of amplitude ip over
/// an M-cycle window.
pub fn lsb_current(i_p: f64, m: u64) -> f64 {
    i_p / m as f64
}

/// Readout sensitivity in LSB per mM for a diffusion-limited disc: the
/// limiting current of a 1 mol/m³ (1 mM) solution divided by the LSB of an
/// acquisition of `t_acq` seconds at `fclk`.
pub fn sensitivity_lsb_per_mm(
    geom: &ElectrodeGeometry,
    i_p: f64,
    t_acq: f64,
    fclk: f64,
) -> f64 {
    let m = (t_acq * fclk).round() as u64;
    limiting_current(geom, 1.0) / lsb_current(i_p, m)
}

/// RMS of windowed decode outputs across a set of zero-input streams.
/// `window` is the window length in clock periods; at least two windows in
/// total are required.
pub fn noise_rms(
    streams: &[PulseStream],
    i_p: f64,
    i_n: f64,
    window: usize,
) -> Result<f64, PulseError> {
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    for s in streams {
        for chunk in s.states.chunks_exact(window) {
            let d = decode_slice(chunk, i_p, i_n)?;
            sum_sq += d.i_f * d.i_f;
            count += 1;
        }
    }
    if count < 2 {
        return Err(PulseError::TooFewWindows { need: 2, got: count });
    }
    Ok((sum_sq / count as f64).sqrt())
}

/// Dynamic range 20·log10(i_max / i_noise_rms) in dB.
pub fn dynamic_range_db(i_max: f64, i_noise_rms: f64) -> f64 {
    20.0 * (i_max / i_noise_rms).log10()
}

/// Running (prefix) decode of a stream plus the first prefix index from
/// which the estimate stays inside a tolerance band around the full-window
/// value.
#[derive(Debug, Clone)]
pub struct RunningEstimate {
    /// Cumulative decoded current after each prefix of m periods (A).
    pub series: Vec<f64>,
    /// Full-window decode (A); equals the last series element.
    pub full_value: f64,
    /// First index (1-based prefix length) from which the estimate stays
    /// within the band; equals M when only the full window qualifies.
    pub convergence_index: usize,
}

/// Compute the running decode and its convergence index for a relative
/// tolerance band around the final value. A zero tolerance yields
/// convergence only at the full window.
pub fn running_estimate(
    stream: &PulseStream,
    i_p: f64,
    i_n: f64,
    rel_tolerance: f64,
) -> Result<RunningEstimate, PulseError> {
    if stream.is_empty() {
        return Err(PulseError::EmptyStream);
    }
    let m = stream.len();
    let mut series = Vec::with_capacity(m);
    let (mut p, mut n) = (0u64, 0u64);
    for (k, s) in stream.states.iter().enumerate() {
        match s {
            OutputDrive::P => p += 1,
            OutputDrive::N => n += 1,
            OutputDrive::Z => {}
        }
        series.push((p as f64 * i_p - n as f64 * i_n) / (k + 1) as f64);
    }
    let full = series[m - 1];
    let band = rel_tolerance * full.abs();
    let mut convergence_index = m;
    for k in (0..m).rev() {
        if (series[k] - full).abs() <= band {
            convergence_index = k + 1;
        } else {
            break;
        }
    }
    Ok(RunningEstimate {
        series,
        full_value: full,
        convergence_index,
    })
}
