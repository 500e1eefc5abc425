//! Closed-loop experiments: the behavioral front end in feedback with the
//! electrochemical cell. Covers chronoamperometry, zero-input noise runs,
//! small-signal transfer-function probing, and multi-die Monte Carlo
//! readout statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use thiserror::Error;

use crate::electrochem::{
    limiting_current, microdisc_f, CalibrationCurve, ElectrodeGeometry, RandlesCell,
};
use crate::fidigota::{CircuitParams, Digota, OutputDrive, ParamError};
use crate::freqmodel::BlockGains;
use crate::pulse::{decode_slice, DecodeResult, PulseError, PulseStream};
use crate::spectral::tone_amplitude;

#[derive(Debug, Error)]
pub enum LoopError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("invalid loop configuration: {0}")]
    BadConfig(String),
    #[error("node voltage diverged to {voltage:.3e} V at t = {t:.6} s")]
    NodeOverflow { t: f64, voltage: f64 },
    #[error("output stage saturated during small-signal probe (longest active run {run} periods)")]
    ProbeSaturated { run: usize },
    #[error(transparent)]
    Pulse(#[from] PulseError),
}

/// Faradaic current model driving the cell.
#[derive(Debug, Clone)]
pub enum CurrentSource {
    /// Constant current (A).
    Constant(f64),
    /// Steady-state diffusion-limited ferrocyanide oxidation at a disc.
    Ferrocyanide { geom: ElectrodeGeometry, c: f64 },
    /// Chronoamperometric microdisc transient from t = 0.
    MicrodiscTransient { geom: ElectrodeGeometry, c: f64 },
    /// Glucose oxidation through a calibration curve, plus an optional
    /// constant interferent current (A).
    Glucose {
        cal: CalibrationCurve,
        c: f64,
        interferent: f64,
    },
}

impl CurrentSource {
    pub fn current(&self, t: f64) -> f64 {
        match self {
            CurrentSource::Constant(i) => *i,
            CurrentSource::Ferrocyanide { geom, c } => limiting_current(geom, *c),
            CurrentSource::MicrodiscTransient { geom, c } => {
                if t <= 0.0 {
                    0.0
                } else {
                    limiting_current(geom, *c) * microdisc_f(geom.tau(t))
                }
            }
            CurrentSource::Glucose { cal, c, interferent } => {
                cal.current(*c).current + interferent
            }
        }
    }
}

/// Noise sources of the behavioral loop. Both default on: the equivalent
/// input shot noise at its modeled density, realized white at the clock
/// rate, and Poisson shot noise on the ramp charging currents (which keeps
/// the zero-input limit cycle from being an artificially coherent tone).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSettings {
    pub input_noise: bool,
    pub ramp_shot_noise: bool,
}

impl Default for NoiseSettings {
    fn default() -> Self {
        Self {
            input_noise: true,
            ramp_shot_noise: true,
        }
    }
}

/// Configuration of one closed-loop run.
#[derive(Debug, Clone)]
pub struct LoopConfig {
    pub params: CircuitParams,
    pub cell: RandlesCell,
    pub source: CurrentSource,
    /// Reference-node setpoint (V).
    pub vref: f64,
    /// Run duration (s); at least 10·T0.
    pub duration: f64,
    pub seed: u64,
    pub noise: NoiseSettings,
    /// Independent output-stage rail used when the counter electrode needs a
    /// potential above Vdd; packet currents are unchanged, the rail is
    /// validation metadata for that operating mode.
    pub ce_rail: Option<f64>,
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), LoopError> {
        self.params.validate()?;
        if self.duration < 10.0 * self.params.t0 {
            return Err(LoopError::BadConfig(format!(
                "duration {:.3e} shorter than 10*t0 = {:.3e}",
                self.duration,
                10.0 * self.params.t0
            )));
        }
        match self.ce_rail {
            None => {
                if self.vref >= self.params.vdd {
                    return Err(LoopError::BadConfig(format!(
                        "vref {} >= vdd {} requires an external ce_rail",
                        self.vref, self.params.vdd
                    )));
                }
            }
            Some(rail) => {
                if rail <= self.vref {
                    return Err(LoopError::BadConfig(format!(
                        "ce_rail {rail} must exceed vref {}",
                        self.vref
                    )));
                }
            }
        }
        Ok(())
    }

    /// Effective load capacitance at the regulated node: standalone CL in
    /// parallel with the cell capacitance.
    pub fn node_capacitance(&self) -> f64 {
        self.params.cl + self.cell.cp
    }
}

/// Full record of a closed-loop run.
#[derive(Debug, Clone)]
pub struct ChronoResult {
    pub stream: PulseStream,
    /// Node voltage at the start of every clock period (V).
    pub v_node: Vec<f64>,
    /// Decode of the full stream.
    pub decoded: DecodeResult,
    /// First time from which the running decode stays within 2% of the
    /// full-window value (s).
    pub settle_time: f64,
    /// Drive currents the stream was recorded with.
    pub i_p: f64,
    pub i_n: f64,
}

impl ChronoResult {
    /// Decode the stream after skipping the first `t_skip` seconds.
    pub fn decode_after(&self, t_skip: f64) -> Result<DecodeResult, PulseError> {
        let skip = ((t_skip * self.stream.fclk) as usize).min(self.stream.len());
        decode_slice(&self.stream.states[skip..], self.i_p, self.i_n)
    }
}

const SETTLE_REL_TOL: f64 = 0.02;
const NODE_OVERFLOW_V: f64 = 1e3;

/// Run one closed-loop experiment.
///
/// Per clock period: the differential input vd = Vref − v_node is sampled at
/// the edge (zero-order hold), the machine advances one period, the returned
/// drive injects its packet current into the node, the cell draws the
/// faradaic current, and the node integrates on CL ∥ Cp with the
/// charge-transfer resistance referenced to the operating point.
pub fn run_chrono(config: &LoopConfig) -> Result<ChronoResult, LoopError> {
    config.validate()?;
    let p = &config.params;
    let tclk = p.tclk();
    let m = (config.duration * p.fclk).floor() as usize;
    let ct = config.node_capacitance();
    let tau = config.cell.rp * ct;
    let alpha = (-tclk / tau).exp();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut machine = Digota::new(*p)?;
    machine.set_initial_phase(rng.gen::<f64>());
    if config.noise.ramp_shot_noise {
        let noise_rng = ChaCha8Rng::seed_from_u64(rng.gen::<u64>());
        machine.enable_ramp_shot_noise(noise_rng);
    }
    // dither the node within a few drive packets of the setpoint
    let packet_step = p.i_p * tclk / ct;
    let mut v = config.vref + (rng.gen::<f64>() - 0.5) * 4.0 * packet_step;
    let vn_sigma = if config.noise.input_noise {
        (p.input_noise_psd() * p.fclk / 2.0).sqrt()
    } else {
        0.0
    };

    let mut states = Vec::with_capacity(m);
    let mut v_node = Vec::with_capacity(m);
    for k in 0..m {
        let t = k as f64 * tclk;
        v_node.push(v);
        let vn = if vn_sigma > 0.0 {
            vn_sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
        } else {
            0.0
        };
        let vd = config.vref - v + vn;
        let drive = machine.tick(vd);
        states.push(drive);
        let i_drive = match drive {
            OutputDrive::P => p.i_p,
            OutputDrive::N => -p.i_n,
            OutputDrive::Z => 0.0,
        };
        // faradaic current sampled at mid-period
        let i_f = config.source.current(t + 0.5 * tclk);
        let v_inf = config.vref + config.cell.rp * (i_drive - i_f);
        v = v_inf + (v - v_inf) * alpha;
        if !v.is_finite() || v.abs() > NODE_OVERFLOW_V {
            return Err(LoopError::NodeOverflow { t, voltage: v });
        }
    }

    let stream = PulseStream::new(states, p.fclk);
    let decoded = decode_slice(&stream.states, p.i_p, p.i_n)?;
    let settle_time = settle_time_of(&stream, p.i_p, p.i_n, tclk);
    Ok(ChronoResult {
        stream,
        v_node,
        decoded,
        settle_time,
        i_p: p.i_p,
        i_n: p.i_n,
    })
}

fn settle_time_of(stream: &PulseStream, i_p: f64, i_n: f64, tclk: f64) -> f64 {
    match crate::pulse::running_estimate(stream, i_p, i_n, SETTLE_REL_TOL) {
        Ok(r) => r.convergence_index as f64 * tclk,
        Err(_) => stream.len() as f64 * tclk,
    }
}

/// Record `n_runs` zero-input streams with dithered, seeded initial
/// conditions, suitable for noise analysis.
pub fn run_zero_input(config: &LoopConfig, n_runs: usize) -> Result<Vec<PulseStream>, LoopError> {
    let mut out = Vec::with_capacity(n_runs);
    for k in 0..n_runs {
        let mut cfg = config.clone();
        cfg.source = CurrentSource::Constant(0.0);
        cfg.seed = config.seed.wrapping_add(k as u64);
        out.push(run_chrono(&cfg)?.stream);
    }
    Ok(out)
}

/// One measured point of the loop transfer function.
#[derive(Debug, Clone, Copy)]
pub struct ProbePoint {
    /// Actual probe frequency after snapping to an integer number of
    /// periods over the analysis window (Hz); 0 for a DC step probe.
    pub f_hz: f64,
    /// Measured pulse-width-per-current magnitude (s/A).
    pub magnitude: f64,
    /// Measured phase (degrees); 0 for DC probes.
    pub phase_deg: f64,
}

/// Measure one point of the signal transfer function by superimposing a
/// sinusoidal component of `amplitude` (A) on the faradaic current and
/// extracting the pulse-width response at the probe frequency from the
/// recorded stream. A zero `f_sig` runs a step probe instead. Runs that
/// saturate the output stage (a full self-oscillation cycle of uninterrupted
/// drive) are rejected.
pub fn small_signal_probe(
    config: &LoopConfig,
    f_sig: f64,
    amplitude: f64,
) -> Result<ProbePoint, LoopError> {
    config.validate()?;
    let p = &config.params;
    let i_f0 = config.source.current(config.duration * 0.5);
    let gains = BlockGains::new(p, config.node_capacitance())
        .map_err(|e| LoopError::BadConfig(e.to_string()))?;
    let k_t2i = gains.k_t2i;

    if f_sig == 0.0 {
        // step probe: difference of settled decodes at i_f0 and i_f0 + A
        let decode_at = |i: f64, seed: u64| -> Result<f64, LoopError> {
            let mut cfg = config.clone();
            cfg.source = CurrentSource::Constant(i);
            cfg.seed = seed;
            let res = run_chrono(&cfg)?;
            let skip = ((0.3 * cfg.duration) * p.fclk) as usize;
            check_saturation(&res.stream.states[skip..], p)?;
            Ok(res.decode_after(0.3 * cfg.duration)?.i_f)
        };
        let base = decode_at(i_f0, config.seed)?;
        let up = decode_at(i_f0 + amplitude, config.seed)?;
        return Ok(ProbePoint {
            f_hz: 0.0,
            magnitude: ((up - base) / k_t2i / amplitude).abs(),
            phase_deg: 0.0,
        });
    }

    if f_sig >= 0.25 / p.t0 {
        return Err(LoopError::BadConfig(format!(
            "probe frequency {f_sig} Hz beyond f0/4 = {}",
            0.25 / p.t0
        )));
    }

    // analysis window: at least 24 periods and 1.5 s, snapped to an integer
    // number of probe periods; settle prefix discarded
    let settle_ticks = (0.3 * p.fclk) as usize;
    let n_periods = (24.0_f64).max((1.5 * f_sig).ceil()) as usize;
    let window_ticks = ((n_periods as f64) * p.fclk / f_sig).round() as usize;
    let f_act = n_periods as f64 * p.fclk / window_ticks as f64;
    let duration = (settle_ticks + window_ticks) as f64 / p.fclk;

    let mut cfg = config.clone();
    cfg.duration = duration;
    let base = i_f0;
    let probe_source = move |t: f64| -> f64 {
        base + amplitude * (2.0 * std::f64::consts::PI * f_act * t).sin()
    };
    // run with an explicit closure-driven source
    let res = run_custom(&cfg, &probe_source)?;
    check_saturation(&res.stream.states[settle_ticks..], p)?;

    let drive_series: Vec<f64> = res.stream.states[settle_ticks..settle_ticks + window_ticks]
        .iter()
        .map(|s| match s {
            OutputDrive::P => p.i_p,
            OutputDrive::N => -p.i_n,
            OutputDrive::Z => 0.0,
        })
        .collect();
    let injected: Vec<f64> = (0..window_ticks)
        .map(|k| probe_source((settle_ticks + k) as f64 / p.fclk) - base)
        .collect();
    let z_out = tone_amplitude(&drive_series, p.fclk, f_act);
    let z_in = tone_amplitude(&injected, p.fclk, f_act);
    let tf: Complex64 = z_out / (k_t2i * z_in);
    Ok(ProbePoint {
        f_hz: f_act,
        magnitude: tf.norm(),
        phase_deg: tf.arg().to_degrees(),
    })
}

fn check_saturation(states: &[OutputDrive], p: &CircuitParams) -> Result<(), LoopError> {
    // healthy regulation shows drive bursts up to a couple of cycles as the
    // pulses stretch; real saturation pins the stage for much longer
    let limit = 5 * (p.t0 * p.fclk).ceil() as usize;
    let mut run = 0usize;
    let mut longest = 0usize;
    for s in states {
        if *s == OutputDrive::Z {
            run = 0;
        } else {
            run += 1;
            longest = longest.max(run);
        }
    }
    if longest > limit {
        return Err(LoopError::ProbeSaturated { run: longest });
    }
    Ok(())
}

/// Like [`run_chrono`] but with an arbitrary faradaic current waveform.
fn run_custom(
    config: &LoopConfig,
    i_f: &dyn Fn(f64) -> f64,
) -> Result<ChronoResult, LoopError> {
    config.validate()?;
    let p = &config.params;
    let tclk = p.tclk();
    let m = (config.duration * p.fclk).floor() as usize;
    let ct = config.node_capacitance();
    let alpha = (-tclk / (config.cell.rp * ct)).exp();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut machine = Digota::new(*p)?;
    machine.set_initial_phase(rng.gen::<f64>());
    if config.noise.ramp_shot_noise {
        let noise_rng = ChaCha8Rng::seed_from_u64(rng.gen::<u64>());
        machine.enable_ramp_shot_noise(noise_rng);
    }
    let packet_step = p.i_p * tclk / ct;
    let mut v = config.vref + (rng.gen::<f64>() - 0.5) * 4.0 * packet_step;
    let vn_sigma = if config.noise.input_noise {
        (p.input_noise_psd() * p.fclk / 2.0).sqrt()
    } else {
        0.0
    };

    let mut states = Vec::with_capacity(m);
    let mut v_node = Vec::with_capacity(m);
    for k in 0..m {
        let t = k as f64 * tclk;
        v_node.push(v);
        let vn = if vn_sigma > 0.0 {
            vn_sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
        } else {
            0.0
        };
        let drive = machine.tick(config.vref - v + vn);
        states.push(drive);
        let i_drive = match drive {
            OutputDrive::P => p.i_p,
            OutputDrive::N => -p.i_n,
            OutputDrive::Z => 0.0,
        };
        let v_inf = config.vref + config.cell.rp * (i_drive - i_f(t + 0.5 * tclk));
        v = v_inf + (v - v_inf) * alpha;
        if !v.is_finite() || v.abs() > NODE_OVERFLOW_V {
            return Err(LoopError::NodeOverflow { t, voltage: v });
        }
    }
    let stream = PulseStream::new(states, p.fclk);
    let decoded = decode_slice(&stream.states, p.i_p, p.i_n)?;
    let settle_time = settle_time_of(&stream, p.i_p, p.i_n, tclk);
    Ok(ChronoResult {
        stream,
        v_node,
        decoded,
        settle_time,
        i_p: p.i_p,
        i_n: p.i_n,
    })
}

/// Per-setpoint statistics of a multi-die Monte Carlo.
#[derive(Debug, Clone, Copy)]
pub struct SetpointStats {
    pub setpoint: f64,
    pub mean: f64,
    pub sigma: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone)]
pub struct MultidieStats {
    pub per_setpoint: Vec<SetpointStats>,
    /// Average over setpoints of sigma/mean.
    pub mean_normalized_sigma: f64,
}

/// Parameters perturbed per die: {gm, r0, Cfi, Icm, ip, in, T0}, each scaled
/// by an independent lognormal factor exp(spread·z).
pub fn multidie_montecarlo(
    config: &LoopConfig,
    spread: f64,
    n_dice: usize,
    setpoints: &[f64],
    run_duration: f64,
    skip: f64,
) -> Result<MultidieStats, LoopError> {
    if n_dice < 1 || setpoints.is_empty() {
        return Err(LoopError::BadConfig(
            "need at least one die and one setpoint".into(),
        ));
    }
    if spread < 0.0 {
        return Err(LoopError::BadConfig(format!("spread {spread} < 0")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut die_factors = Vec::with_capacity(n_dice);
    for _ in 0..n_dice {
        let mut f = [1.0f64; 7];
        for v in f.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = (spread * z).exp();
        }
        die_factors.push(f);
    }

    let mut decoded = vec![vec![0.0f64; setpoints.len()]; n_dice];
    for (s_idx, &setp) in setpoints.iter().enumerate() {
        // match the drive strength to the setpoint, as the calibration words
        // do on the real device; decode with these nominal values
        let scale = (2.5 * setp / config.params.i_p).max(1.0);
        let nominal = crate::fidigota::scale_output_stage(&config.params, scale);
        // identical run seed across dice at a setpoint, so spread = 0 gives
        // identical runs and exactly zero sigma
        let run_seed = config.seed.wrapping_mul(0x9E37).wrapping_add(s_idx as u64);
        for (d_idx, f) in die_factors.iter().enumerate() {
            let mut die = nominal;
            die.gm *= f[0];
            die.r0 *= f[1];
            die.cfi *= f[2];
            die.icm *= f[3];
            die.i_p *= f[4];
            die.i_n *= f[5];
            die.t0 *= f[6];
            let cfg = LoopConfig {
                params: die,
                cell: config.cell,
                source: CurrentSource::Constant(setp),
                vref: config.vref,
                duration: run_duration,
                seed: run_seed,
                noise: config.noise,
                ce_rail: config.ce_rail,
            };
            let res = run_chrono(&cfg)?;
            let skip_ticks = ((skip * die.fclk) as usize).min(res.stream.len() - 1);
            // readout uses the nominal (datasheet) drive currents
            let d = decode_slice(&res.stream.states[skip_ticks..], nominal.i_p, nominal.i_n)?;
            decoded[d_idx][s_idx] = d.i_f;
        }
    }

    let mut per_setpoint = Vec::with_capacity(setpoints.len());
    let mut norm_acc = 0.0;
    for (s_idx, &setp) in setpoints.iter().enumerate() {
        let vals: Vec<f64> = (0..n_dice).map(|d| decoded[d][s_idx]).collect();
        let mean = vals.iter().sum::<f64>() / n_dice as f64;
        let sigma = if n_dice > 1 {
            (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n_dice - 1) as f64)
                .sqrt()
        } else {
            0.0
        };
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        norm_acc += sigma / mean.abs().max(f64::MIN_POSITIVE);
        per_setpoint.push(SetpointStats {
            setpoint: setp,
            mean,
            sigma,
            min,
            max,
        });
    }
    Ok(MultidieStats {
        mean_normalized_sigma: norm_acc / setpoints.len() as f64,
        per_setpoint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config(source: CurrentSource, duration: f64, seed: u64) -> LoopConfig {
        LoopConfig {
            params: CircuitParams::vdd04(),
            cell: RandlesCell::default_microelectrode(),
            source,
            vref: 0.25,
            duration,
            seed,
            noise: NoiseSettings::default(),
            ce_rail: Some(0.6),
        }
    }

    #[test]
    fn constant_current_decodes_accurately() {
        let i_f = 2e-9;
        let cfg = base_config(CurrentSource::Constant(i_f), 1.0, 3);
        let res = run_chrono(&cfg).unwrap();
        let d = res.decode_after(0.2).unwrap();
        let bound = (cfg.params.i_p + cfg.params.i_n) / d.m as f64 + 0.01 * i_f;
        assert!((d.i_f - i_f).abs() < bound, "decoded {:e}", d.i_f);
    }

    #[test]
    fn charge_balance_audit() {
        // independent bookkeeping: injected charge equals faradaic charge
        // plus node charge change plus leak, within one packet
        let i_f = 5e-9;
        let cfg = base_config(CurrentSource::Constant(i_f), 0.5, 11);
        let res = run_chrono(&cfg).unwrap();
        let p = &cfg.params;
        let tclk = p.tclk();
        let ct = cfg.node_capacitance();
        let injected = res.decoded.p as f64 * p.i_p * tclk - res.decoded.n as f64 * p.i_n * tclk;
        let drawn = i_f * res.stream.len() as f64 * tclk;
        let leak: f64 = res
            .v_node
            .iter()
            .map(|v| (v - cfg.vref) / cfg.cell.rp * tclk)
            .sum();
        let v_end = {
            // reconstruct final node voltage: one step past the last sample
            let last = *res.v_node.last().unwrap();
            last
        };
        let dq_node = ct * (v_end - res.v_node[0]);
        let packet = p.i_p.max(p.i_n) * tclk;
        let residual = injected - drawn - leak - dq_node;
        assert!(
            residual.abs() <= 2.0 * packet,
            "residual {residual:e} vs packet {packet:e}"
        );
    }

    #[test]
    fn zero_input_regulates_node() {
        let cfg = base_config(CurrentSource::Constant(0.0), 0.5, 7);
        let res = run_chrono(&cfg).unwrap();
        let d = res.decode_after(0.1).unwrap();
        assert!(d.i_f.abs() < 50.0 * d.lsb, "decoded {:e}", d.i_f);
        let mean_v: f64 =
            res.v_node[res.v_node.len() / 2..].iter().sum::<f64>()
                / (res.v_node.len() - res.v_node.len() / 2) as f64;
        assert!((mean_v - cfg.vref).abs() < 5e-3, "mean v {mean_v}");
    }

    #[test]
    fn regulation_within_5mv_for_constant_sources() {
        for (i_f, seed) in [(1e-9, 1u64), (10e-9, 2), (100e-9, 3)] {
            let mut cfg = base_config(CurrentSource::Constant(i_f), 0.4, seed);
            let scale = (2.5 * i_f / cfg.params.i_p).max(1.0);
            cfg.params = crate::fidigota::scale_output_stage(&cfg.params, scale);
            let res = run_chrono(&cfg).unwrap();
            let tail = &res.v_node[res.v_node.len() / 4..];
            let mean_v: f64 = tail.iter().sum::<f64>() / tail.len() as f64;
            assert!(
                (mean_v - cfg.vref).abs() < 5e-3,
                "mean v {mean_v} at i_f {i_f:e}"
            );
        }
    }

    #[test]
    fn decode_monotone_in_injected_current() {
        // 20-point sweep below output-stage saturation
        let mut prev = f64::NEG_INFINITY;
        for k in 0..20 {
            let i_f = 0.2e-9 + 4.0e-9 * k as f64 / 19.0;
            let cfg = base_config(CurrentSource::Constant(i_f), 0.3, 1000);
            let res = run_chrono(&cfg).unwrap();
            let d = res.decode_after(0.1).unwrap();
            assert!(
                d.i_f >= prev - 2.0 * d.lsb,
                "decode not monotone at {i_f:e}: {} < {prev}",
                d.i_f
            );
            prev = d.i_f;
        }
    }

    #[test]
    fn saturation_bound() {
        // inject more than the stage can source: decode clips at ip
        let cfg = base_config(CurrentSource::Constant(20e-9), 0.2, 5);
        let res = run_chrono(&cfg).unwrap();
        assert!(res.decoded.i_f <= cfg.params.i_p * (1.0 + 1e-9));
        let d = res.decode_after(0.05).unwrap();
        assert!((d.i_f - cfg.params.i_p).abs() < 0.02 * cfg.params.i_p);
    }

    #[test]
    fn reproducible_per_seed() {
        let cfg = base_config(CurrentSource::Constant(3e-9), 0.3, 42);
        let a = run_chrono(&cfg).unwrap();
        let b = run_chrono(&cfg).unwrap();
        assert_eq!(a.stream, b.stream);
        assert_eq!(a.v_node, b.v_node);
        let mut cfg2 = cfg.clone();
        cfg2.seed = 43;
        let c = run_chrono(&cfg2).unwrap();
        assert_ne!(a.stream, c.stream);
    }

    #[test]
    fn zero_input_runs_distinct_and_centered() {
        let cfg = base_config(CurrentSource::Constant(0.0), 0.3, 9);
        let streams = run_zero_input(&cfg, 4).unwrap();
        assert_eq!(streams.len(), 4);
        assert_ne!(streams[0], streams[1]);
        for s in &streams {
            let d = decode_slice(&s.states, cfg.params.i_p, cfg.params.i_n).unwrap();
            assert!(d.i_f.abs() < 100.0 * d.lsb);
        }
    }

    #[test]
    fn probe_dc_matches_model_within_3db() {
        let mut cfg = base_config(CurrentSource::Constant(2e-9), 1.0, 21);
        cfg.params.i_p = cfg.params.ion;
        cfg.params.i_n = cfg.params.ion;
        let pt = small_signal_probe(&cfg, 0.0, 0.5e-9).unwrap();
        let model = crate::freqmodel::stf(&cfg.params, cfg.node_capacitance())
            .unwrap()
            .dc();
        let err_db = 20.0 * (pt.magnitude / model).log10().abs();
        assert!(err_db < 3.0, "dc probe off by {err_db} dB");
    }

    #[test]
    fn probe_rejects_saturating_amplitude() {
        let mut cfg = base_config(CurrentSource::Constant(2e-9), 1.0, 22);
        cfg.params.i_p = cfg.params.ion;
        cfg.params.i_n = cfg.params.ion;
        let err = small_signal_probe(&cfg, 100.0, 50e-9).unwrap_err();
        assert!(matches!(err, LoopError::ProbeSaturated { .. }));
    }

    #[test]
    fn probe_amplitude_independence_in_linear_regime() {
        let mut cfg = base_config(CurrentSource::Constant(2e-9), 1.0, 23);
        cfg.params.i_p = cfg.params.ion;
        cfg.params.i_n = cfg.params.ion;
        let a = small_signal_probe(&cfg, 200.0, 0.4e-9).unwrap();
        let b = small_signal_probe(&cfg, 200.0, 0.8e-9).unwrap();
        let diff_db = 20.0 * (a.magnitude / b.magnitude).log10().abs();
        assert!(diff_db < 1.0, "amplitude dependence {diff_db} dB");
    }

    #[test]
    fn multidie_zero_spread_is_exact() {
        let cfg = base_config(CurrentSource::Constant(0.0), 0.3, 77);
        let stats =
            multidie_montecarlo(&cfg, 0.0, 5, &[1e-9, 10e-9], 0.3, 0.05).unwrap();
        for s in &stats.per_setpoint {
            assert_eq!(s.sigma, 0.0);
            assert!(s.min <= s.mean && s.mean <= s.max);
            assert_eq!(s.min, s.max);
        }
        assert_eq!(stats.mean_normalized_sigma, 0.0);
    }

    #[test]
    fn multidie_ordering_invariants() {
        let cfg = base_config(CurrentSource::Constant(0.0), 0.3, 78);
        let stats =
            multidie_montecarlo(&cfg, 0.05, 5, &[5e-9, 50e-9], 0.3, 0.05).unwrap();
        for s in &stats.per_setpoint {
            assert!(s.min <= s.mean && s.mean <= s.max);
            assert!(s.sigma >= 0.0);
        }
    }

    #[test]
    fn node_overflow_detected() {
        let mut cfg = base_config(CurrentSource::Constant(1e-3), 0.2, 2);
        cfg.cell.rp = 1e12;
        let err = run_chrono(&cfg).unwrap_err();
        assert!(matches!(err, LoopError::NodeOverflow { .. }));
    }

    #[test]
    fn config_validation() {
        let mut cfg = base_config(CurrentSource::Constant(0.0), 1e-4, 1);
        assert!(matches!(cfg.validate(), Err(LoopError::BadConfig(_))));
        cfg.duration = 0.5;
        cfg.ce_rail = None;
        cfg.vref = 0.5; // above vdd without an external rail
        assert!(matches!(cfg.validate(), Err(LoopError::BadConfig(_))));
        cfg.ce_rail = Some(0.9);
        assert!(cfg.validate().is_ok());
    }
}
