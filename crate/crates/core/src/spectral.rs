//! Spectral estimation: Welch power spectral density, single-bin DFT
//! extraction for probe tones, and normalized stream spectra.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::fidigota::OutputDrive;
use crate::pulse::PulseStream;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("trace of {len} samples too short for segments of {nperseg}")]
    TraceTooShort { len: usize, nperseg: usize },
    #[error("invalid welch configuration: {0}")]
    BadConfig(String),
}

/// Welch estimator settings. Defaults: Hann window, 50% overlap, and a
/// segment length giving eight segments over the trace.
#[derive(Debug, Clone, Copy)]
pub struct WelchConfig {
    /// Segment length; `None` sizes it for [`DEFAULT_SEGMENTS`] segments.
    pub nperseg: Option<usize>,
    /// Overlap fraction in [0, 1).
    pub overlap: f64,
}

pub const DEFAULT_SEGMENTS: usize = 8;

impl Default for WelchConfig {
    fn default() -> Self {
        Self {
            nperseg: None,
            overlap: 0.5,
        }
    }
}

/// One-sided Welch PSD estimate. Frequencies run from 0 to fs/2; the
/// normalization makes the integral of the PSD equal the trace variance
/// (density scaling, per-segment mean removed).
pub fn psd_welch(
    trace: &[f64],
    fs: f64,
    cfg: &WelchConfig,
) -> Result<(Vec<f64>, Vec<f64>), SpectralError> {
    if !(0.0..1.0).contains(&cfg.overlap) {
        return Err(SpectralError::BadConfig(format!(
            "overlap {} outside [0, 1)",
            cfg.overlap
        )));
    }
    let nperseg = match cfg.nperseg {
        Some(n) => n,
        None => {
            // L = n + (k-1)*n*(1-ov)  =>  n = L / (1 + (k-1)*(1-ov))
            let l = trace.len() as f64;
            let k = DEFAULT_SEGMENTS as f64;
            (l / (1.0 + (k - 1.0) * (1.0 - cfg.overlap))).floor() as usize
        }
    };
    if nperseg < 4 {
        return Err(SpectralError::BadConfig(format!(
            "segment length {nperseg} too short"
        )));
    }
    if trace.len() < nperseg {
        return Err(SpectralError::TraceTooShort {
            len: trace.len(),
            nperseg,
        });
    }
    let step = ((nperseg as f64) * (1.0 - cfg.overlap)).max(1.0) as usize;
    if trace.len() < nperseg + step {
        return Err(SpectralError::TraceTooShort {
            len: trace.len(),
            nperseg,
        });
    }

    // periodic Hann window
    let window: Vec<f64> = (0..nperseg)
        .map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / nperseg as f64).cos())
        .collect();
    let win_power: f64 = window.iter().map(|w| w * w).sum();

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(nperseg);
    let n_bins = nperseg / 2 + 1;
    let mut acc = vec![0.0f64; n_bins];
    let mut count = 0usize;
    let mut buf = vec![Complex64::new(0.0, 0.0); nperseg];

    let mut start = 0usize;
    while start + nperseg <= trace.len() {
        let seg = &trace[start..start + nperseg];
        let mean = seg.iter().sum::<f64>() / nperseg as f64;
        for (b, (&x, &w)) in buf.iter_mut().zip(seg.iter().zip(window.iter())) {
            *b = Complex64::new((x - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (k, a) in acc.iter_mut().enumerate() {
            let mut pxx = buf[k].norm_sqr() / (fs * win_power);
            if k != 0 && !(nperseg % 2 == 0 && k == nperseg / 2) {
                pxx *= 2.0; // one-sided
            }
            *a += pxx;
        }
        count += 1;
        start += step;
    }

    let freqs: Vec<f64> = (0..n_bins).map(|k| k as f64 * fs / nperseg as f64).collect();
    let psd: Vec<f64> = acc.into_iter().map(|a| a / count as f64).collect();
    Ok((freqs, psd))
}

/// Complex amplitude of the component of `trace` at frequency `f` (Hz),
/// estimated by single-bin DFT over the full trace. The amplitude is scaled
/// so a signal A·sin(2πft) yields magnitude A when `f` lands on an integer
/// number of periods over the trace.
pub fn tone_amplitude(trace: &[f64], fs: f64, f: f64) -> Complex64 {
    let n = trace.len() as f64;
    let w = -2.0 * std::f64::consts::PI * f / fs;
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, &x) in trace.iter().enumerate() {
        let ph = w * k as f64;
        acc += Complex64::new(ph.cos(), ph.sin()) * x;
    }
    acc * (2.0 / n)
}

/// Amplitude spectrum of the normalized P-rail waveform of a stream: the
/// 0/1 occupancy rescaled to zero mean and unit supply, zero-padded to the
/// next power of two. Returns (frequencies, one-sided amplitudes).
pub fn fft_normalized(stream: &PulseStream) -> (Vec<f64>, Vec<f64>) {
    let n = stream.len().max(1);
    let nfft = n.next_power_of_two();
    let bits: Vec<f64> = stream
        .states
        .iter()
        .map(|s| if *s == OutputDrive::P { 1.0 } else { 0.0 })
        .collect();
    let mean = bits.iter().sum::<f64>() / n as f64;
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    for (b, &x) in buf.iter_mut().zip(bits.iter()) {
        *b = Complex64::new(x - mean, 0.0);
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(nfft).process(&mut buf);
    let n_bins = nfft / 2 + 1;
    let freqs = (0..n_bins)
        .map(|k| k as f64 * stream.fclk / nfft as f64)
        .collect();
    let amps = buf[..n_bins]
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let scale = if k == 0 || (nfft % 2 == 0 && k == nfft / 2) {
                1.0
            } else {
                2.0
            };
            scale * c.norm() / n as f64
        })
        .collect();
    (freqs, amps)
}

/// Resample a stream into per-cycle signed pulse widths at the
/// self-oscillation rate: each sample is (p − n)·Tclk summed over one T0
/// window (seconds). This is the pulse-width-equivalent series whose PSD is
/// comparable with the output noise model.
pub fn cycle_width_series(stream: &PulseStream, t0: f64) -> Vec<f64> {
    let tclk = 1.0 / stream.fclk;
    let ticks_per_cycle = t0 / tclk;
    let n_cycles = (stream.len() as f64 / ticks_per_cycle).floor() as usize;
    let mut out = Vec::with_capacity(n_cycles);
    for c in 0..n_cycles {
        let a = (c as f64 * ticks_per_cycle).round() as usize;
        let b = (((c + 1) as f64) * ticks_per_cycle).round() as usize;
        let b = b.min(stream.len());
        let mut acc = 0i64;
        for s in &stream.states[a..b] {
            match s {
                OutputDrive::P => acc += 1,
                OutputDrive::N => acc -= 1,
                OutputDrive::Z => {}
            }
        }
        out.push(acc as f64 * tclk);
    }
    out
}
