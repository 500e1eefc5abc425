//! Clock-driven behavioral model of the floating-inverter digital OTA
//! (FI-DIGOTA): dual ramp integrators with common-mode and differential
//! slopes, buffer thresholds, D-flip-flop time quantization, the synchronous
//! CM-compensation schedule, and the calibrated three-state output stage.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::consts::ELEMENTARY_CHARGE;

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("invalid circuit parameters: {0}")]
    Invalid(String),
    #[error("calibration code {0} out of range 0..=255")]
    CalCodeOutOfRange(u32),
}

/// FI-DIGOTA behavioral and small-signal parameters.
///
/// `icm` is the common-mode current of the linearized small-signal model; the
/// behavioral ramp slopes use the separately calibrated value returned by
/// [`calibrate_slopes`], because the small-signal `icm` does not reproduce the
/// configured self-oscillation period through a simple ramp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircuitParams {
    /// Supply voltage (V).
    pub vdd: f64,
    /// Clock frequency (Hz).
    pub fclk: f64,
    /// Self-oscillation period of the zero-input limit cycle (s).
    pub t0: f64,
    /// Input-stage transconductance (S).
    pub gm: f64,
    /// Input-stage output resistance (Ω).
    pub r0: f64,
    /// Parasitic capacitance at the input-stage output nodes (F).
    pub cfi: f64,
    /// Common-mode current of the small-signal model (A).
    pub icm: f64,
    /// Average output-stage on-current (A).
    pub ion: f64,
    /// Pull-up output current (A).
    pub i_p: f64,
    /// Pull-down output current (A).
    pub i_n: f64,
    /// Output-stage on-resistance (Ω).
    pub rout: f64,
    /// Load capacitance at the output node when operated standalone (F).
    pub cl: f64,
    /// Digital buffer threshold (V).
    pub vth_buff: f64,
}

impl CircuitParams {
    /// Simulation parameter set at Vdd = 0.4 V with the reported output-stage
    /// currents (ip = 4.89 nA, in = 10.16 nA) and a 50 kHz clock.
    pub fn vdd04() -> Self {
        Self {
            vdd: 0.4,
            fclk: 50e3,
            t0: 103e-6,
            gm: 61e-9,
            r0: 89e9,
            cfi: 1.9e-15,
            icm: 0.8e-12,
            ion: 8.1e-9,
            i_p: 4.89e-9,
            i_n: 10.16e-9,
            rout: 102e3,
            cl: 10e-12,
            vth_buff: 0.2,
        }
    }

    /// Clock period (s).
    pub fn tclk(&self) -> f64 {
        1.0 / self.fclk
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let mut bad = Vec::new();
        let positive = [
            ("vdd", self.vdd),
            ("fclk", self.fclk),
            ("t0", self.t0),
            ("gm", self.gm),
            ("r0", self.r0),
            ("cfi", self.cfi),
            ("icm", self.icm),
            ("ion", self.ion),
            ("ip", self.i_p),
            ("in", self.i_n),
            ("rout", self.rout),
            ("cl", self.cl),
            ("vth_buff", self.vth_buff),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                bad.push(format!("{name} must be > 0 (got {v})"));
            }
        }
        if bad.is_empty() {
            if self.tclk() >= self.t0 {
                bad.push(format!(
                    "tclk ({:.3e}) must be < t0 ({:.3e})",
                    self.tclk(),
                    self.t0
                ));
            }
            if self.vth_buff >= self.vdd {
                bad.push(format!(
                    "vth_buff ({}) must be < vdd ({})",
                    self.vth_buff, self.vdd
                ));
            }
            for (name, v) in [("ip", self.i_p), ("in", self.i_n)] {
                let ratio = v / self.ion;
                if !(0.1..=10.0).contains(&ratio) {
                    bad.push(format!(
                        "{name} ({v:.3e}) must be within an order of magnitude of ion ({:.3e})",
                        self.ion
                    ));
                }
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(ParamError::Invalid(bad.join("; ")))
        }
    }

    /// Shot-noise density of the equivalent input noise source, 2·q·Icm/gm²
    /// (V²/Hz, white).
    pub fn input_noise_psd(&self) -> f64 {
        2.0 * ELEMENTARY_CHARGE * self.icm / (self.gm * self.gm)
    }
}

/// Scale an output-stage rail by an 8-bit calibration word. The map is linear
/// in (code + 1) with code 1 as the reported baseline, so code 255 is full
/// strength and code 0 is 1/256 of full strength rather than a dead stage.
fn cal_scale(code: u32) -> Result<f64, ParamError> {
    if code > 255 {
        return Err(ParamError::CalCodeOutOfRange(code));
    }
    Ok((code + 1) as f64 / 2.0)
}

/// Apply the two 8-bit output-stage calibration words to `params`, scaling
/// ip and in by the code map and tracking the average on-current with them.
pub fn trim_output_stage(
    params: &CircuitParams,
    cal_p: u32,
    cal_n: u32,
) -> Result<CircuitParams, ParamError> {
    let sp = cal_scale(cal_p)?;
    let sn = cal_scale(cal_n)?;
    let mut out = *params;
    out.i_p = params.i_p * sp;
    out.i_n = params.i_n * sn;
    out.ion = params.ion * 0.5 * (sp + sn);
    Ok(out)
}

/// Scale both output rails and the average on-current by a common factor.
/// Used by experiment presets to match the drive strength to an expected
/// current range, like selecting calibration words on the real device.
pub fn scale_output_stage(params: &CircuitParams, factor: f64) -> CircuitParams {
    let mut out = *params;
    out.i_p *= factor;
    out.i_n *= factor;
    out.ion *= factor;
    out
}

/// Behavioral slope calibration derived from a parameter set.
///
/// `icm_eff` sets the common-mode ramp rate so the zero-input alternation
/// period equals the configured T0. `gm_eff` sets the differential slope so
/// the half-cycle ramp converts voltage to time with the same DC gain as the
/// linearized chain gm·r0·Cfi/Icm; with the raw gm the behavioral loop gain
/// would sit ~30x below the small-signal model for the reported parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeCalibration {
    /// Common-mode ramp current (A): 2·Cfi·Vth_buff/T0.
    pub icm_eff: f64,
    /// Differential transconductance of the behavioral ramps (S).
    pub gm_eff: f64,
}

/// Compute the behavioral ramp calibration; see [`SlopeCalibration`].
///
/// The differential gain uses the mean ramp excursion: the clock-quantized
/// CM latch carries an average residual of half a clock period into each
/// half-cycle, so ramps cover vth·(1 − Tclk/T0) on average while the mean
/// period stays exactly T0.
pub fn calibrate_slopes(params: &CircuitParams) -> SlopeCalibration {
    let icm_eff = 2.0 * params.cfi * params.vth_buff / params.t0;
    let mean_excursion = params.vth_buff * (1.0 - params.tclk() / params.t0);
    let gm_eff = params.gm * params.r0 * icm_eff * icm_eff / (params.icm * mean_excursion);
    SlopeCalibration { icm_eff, gm_eff }
}

/// Three-state output drive for one clock period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutputDrive {
    /// Sourcing ip into the load; active when (q1, q2) = (0, 1).
    P,
    /// Sinking in from the load; active when (q1, q2) = (1, 0).
    N,
    /// High impedance; both CM states.
    Z,
}

impl OutputDrive {
    pub fn as_char(self) -> char {
        match self {
            OutputDrive::P => 'P',
            OutputDrive::N => 'N',
            OutputDrive::Z => 'Z',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'P' => Some(OutputDrive::P),
            'N' => Some(OutputDrive::N),
            'Z' => Some(OutputDrive::Z),
            _ => None,
        }
    }
}

/// Ramp direction of the current half-cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Up,
    Down,
}

/// Observable state of the behavioral machine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DigotaState {
    /// Integrator voltages (V), clamped to [0, Vdd].
    pub vib1: f64,
    pub vib2: f64,
    /// Buffer outputs (comparator results at the end of the last period).
    pub d1: bool,
    pub d2: bool,
    /// D-flip-flop outputs (buffer outputs sampled at the clock edge).
    pub q1: bool,
    pub q2: bool,
    pub phase: Phase,
    /// Simulation time (s), advanced by one clock period per tick.
    pub t: f64,
}

/// Clock-driven FI-DIGOTA behavioral machine.
///
/// Each [`tick`](Digota::tick) models one clock period: the flip-flops latch
/// the buffer outputs at the edge, the synchronous logic applies the
/// CM-compensation reset on entering the terminal CM state of the current
/// half-cycle, the output drive for the period follows (q1, q2), and the
/// integrators advance one period at slopes (Icm_eff ± gm_eff·vd/2)/Cfi with
/// the differential sign swapping per half-cycle.
///
/// The CM reset re-references the integrators while carrying the overshoot
/// beyond the threshold into the next half-cycle, so sub-clock timing
/// information survives the reset and the mean alternation period stays at
/// T0 instead of quantizing to whole clock periods.
#[derive(Debug, Clone)]
pub struct Digota {
    params: CircuitParams,
    cal: SlopeCalibration,
    state: DigotaState,
    tclk: f64,
    /// Per-tick common-mode ramp increment (V).
    dv_cm: f64,
    /// Per-tick differential increment per volt of vd (V/V).
    dv_sig: f64,
    /// Upper re-reference level for the down ramp (V).
    v_hi: f64,
    /// Per-tick ramp shot-noise sigma (V); 0 disables the noise.
    shot_sigma: f64,
    rng: Option<ChaCha8Rng>,
}

impl Digota {
    /// Build a machine with integrators at zero, phase up, q1 = q2 = 0.
    pub fn new(params: CircuitParams) -> Result<Self, ParamError> {
        params.validate()?;
        let cal = calibrate_slopes(&params);
        let tclk = params.tclk();
        let v_hi = (2.0 * params.vth_buff).min(params.vdd);
        Ok(Self {
            state: DigotaState {
                vib1: 0.0,
                vib2: 0.0,
                d1: false,
                d2: false,
                q1: false,
                q2: false,
                phase: Phase::Up,
                t: 0.0,
            },
            dv_cm: cal.icm_eff * tclk / params.cfi,
            dv_sig: cal.gm_eff * tclk / (2.0 * params.cfi),
            v_hi,
            shot_sigma: 0.0,
            rng: None,
            params,
            cal,
            tclk,
        })
    }

    /// Set the initial common ramp position as a fraction of the threshold
    /// voltage (both integrators; phase up). Used to dither the oscillator
    /// phase between runs.
    pub fn set_initial_phase(&mut self, fraction: f64) {
        let v = fraction.clamp(0.0, 1.0) * self.params.vth_buff;
        self.state.vib1 = v;
        self.state.vib2 = v;
        self.state.d1 = v >= self.params.vth_buff;
        self.state.d2 = self.state.d1;
    }

    /// Enable shot noise on the ramp charging currents. The per-tick sigma
    /// follows Poisson statistics of the calibrated common-mode current
    /// (one-sided density 2·q·Icm_eff up to the clock Nyquist rate), applied
    /// independently to each integrator.
    pub fn enable_ramp_shot_noise(&mut self, rng: ChaCha8Rng) {
        self.shot_sigma = (ELEMENTARY_CHARGE * self.cal.icm_eff * self.params.fclk).sqrt()
            * self.tclk
            / self.params.cfi;
        self.rng = Some(rng);
    }

    pub fn params(&self) -> &CircuitParams {
        &self.params
    }

    pub fn calibration(&self) -> SlopeCalibration {
        self.cal
    }

    pub fn state(&self) -> &DigotaState {
        &self.state
    }

    /// Differential input range of the half-cycle ramps (V); inputs beyond
    /// roughly ±this value reverse one ramp and saturate the output.
    pub fn linear_input_range(&self) -> f64 {
        2.0 * self.cal.icm_eff / self.cal.gm_eff
    }

    /// Input at which the pulse width fills the whole half-cycle (duty 1);
    /// the output saturates here, before the ramp-reversal point.
    pub fn saturation_input(&self) -> f64 {
        let v2t = self.params.cfi * self.params.vth_buff * self.cal.gm_eff
            / (self.cal.icm_eff * self.cal.icm_eff);
        self.params.t0 / (2.0 * v2t)
    }

    /// Advance one clock period with differential input `vd` (V, sampled at
    /// the clock edge and held) and return the output drive for the period.
    pub fn tick(&mut self, vd: f64) -> OutputDrive {
        let s = &mut self.state;
        let vth = self.params.vth_buff;

        // D-FFs latch the buffer outputs at the clock edge.
        s.q1 = s.d1;
        s.q2 = s.d2;

        // CM compensation on entering the terminal state of this half-cycle.
        // Both integrators re-reference to a common level; the overshoot of
        // the later crossing (the one that completed the CM state and so
        // defines the oscillation phase) carries into the new ramp, keeping
        // the mean alternation period at T0 instead of quantizing to whole
        // clock periods. The differential lead was already consumed by the
        // emitted pulse and starts fresh.
        match s.phase {
            Phase::Up if s.q1 && s.q2 => {
                let o1 = (s.vib1 - vth).clamp(0.0, vth);
                let o2 = (s.vib2 - vth).clamp(0.0, vth);
                let o = o1.min(o2);
                s.vib1 = self.v_hi - o;
                s.vib2 = self.v_hi - o;
                s.phase = Phase::Down;
            }
            Phase::Down if !s.q1 && !s.q2 => {
                let u1 = (vth - s.vib1).clamp(0.0, vth);
                let u2 = (vth - s.vib2).clamp(0.0, vth);
                let u = u1.min(u2);
                s.vib1 = u;
                s.vib2 = u;
                s.phase = Phase::Up;
            }
            _ => {}
        }

        let drive = match (s.q1, s.q2) {
            (false, true) => OutputDrive::P,
            (true, false) => OutputDrive::N,
            _ => OutputDrive::Z,
        };

        // Integrate one clock period. The differential sign assignment swaps
        // with the ramp direction so a given vd polarity selects the same
        // (q1, q2) state in both half-cycles.
        let sig = self.dv_sig * vd;
        let (mut n1, mut n2) = (0.0, 0.0);
        if let Some(rng) = self.rng.as_mut() {
            let z1: f64 = StandardNormal.sample(rng);
            let z2: f64 = StandardNormal.sample(rng);
            n1 = self.shot_sigma * z1;
            n2 = self.shot_sigma * z2;
        }
        match s.phase {
            Phase::Up => {
                s.vib1 += self.dv_cm - sig + n1;
                s.vib2 += self.dv_cm + sig + n2;
            }
            Phase::Down => {
                s.vib1 -= self.dv_cm + sig + n1;
                s.vib2 -= self.dv_cm - sig + n2;
            }
        }
        s.vib1 = s.vib1.clamp(0.0, self.params.vdd);
        s.vib2 = s.vib2.clamp(0.0, self.params.vdd);
        // Each buffer commits on its first crossing of the half-cycle (the
        // logic acts on transitions), so within a ramp the (d1, d2) sequence
        // is monotone and opposite drive states are always separated by a
        // CM state.
        match s.phase {
            Phase::Up => {
                s.d1 |= s.vib1 >= vth;
                s.d2 |= s.vib2 >= vth;
            }
            Phase::Down => {
                s.d1 &= s.vib1 >= vth;
                s.d2 &= s.vib2 >= vth;
            }
        }
        s.t += self.tclk;

        drive
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> CircuitParams {
        CircuitParams::vdd04()
    }

    #[test]
    fn new_machine_starts_at_zero() {
        let dg = Digota::new(params()).unwrap();
        let s = dg.state();
        assert_eq!(s.vib1, 0.0);
        assert_eq!(s.vib2, 0.0);
        assert!(!s.q1 && !s.q2);
        assert_eq!(s.phase, Phase::Up);
        assert_eq!(s.t, 0.0);
    }

    #[test]
    fn validation_rejects_bad_params() {
        let mut p = params();
        p.fclk = 5e3; // tclk = 200 us >= t0
        let err = Digota::new(p).unwrap_err();
        assert!(err.to_string().contains("tclk"));

        let mut p = params();
        p.cfi = -1.0;
        let err = Digota::new(p).unwrap_err();
        assert!(err.to_string().contains("cfi"));
    }

    #[test]
    fn calibrate_slopes_formula() {
        let cal = calibrate_slopes(&params());
        // 2 * 1.9e-15 * 0.2 / 103e-6
        assert!((cal.icm_eff - 7.3786e-12).abs() < 1e-15, "{cal:?}");
        // halving t0 doubles icm_eff
        let mut p = params();
        p.t0 /= 2.0;
        let cal2 = calibrate_slopes(&p);
        assert!((cal2.icm_eff / cal.icm_eff - 2.0).abs() < 1e-12);
        // gm_eff reproduces the small-signal V2t gain gm*r0*cfi/icm at the
        // mean ramp excursion vth*(1 - tclk/t0)
        let p = params();
        let exc = p.vth_buff * (1.0 - p.tclk() / p.t0);
        let v2t = p.cfi * exc * cal.gm_eff / (cal.icm_eff * cal.icm_eff);
        let target = p.gm * p.r0 * p.cfi / p.icm;
        assert!((v2t / target - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_input_alternation_period_matches_t0() {
        let p = params();
        let mut dg = Digota::new(p).unwrap();
        let mut entries = Vec::new();
        let mut prev = false;
        for k in 0..20_000u64 {
            dg.tick(0.0);
            let s = dg.state();
            let cm_hi = s.q1 && s.q2;
            if cm_hi && !prev {
                entries.push(k);
            }
            prev = cm_hi;
        }
        assert!(entries.len() > 100);
        let n = entries.len() - 1;
        let mean =
            (entries[n] - entries[0]) as f64 * p.tclk() / n as f64;
        assert!(
            (mean - p.t0).abs() <= p.tclk(),
            "mean period {mean:e} vs t0 {:e}",
            p.t0
        );
    }

    #[test]
    fn zero_input_emits_no_pulses() {
        let mut dg = Digota::new(params()).unwrap();
        for _ in 0..50_000 {
            assert_eq!(dg.tick(0.0), OutputDrive::Z);
        }
    }

    #[test]
    fn pulse_counts_monotone_below_saturation() {
        use rand::SeedableRng;
        let p = params();
        let v_sat = Digota::new(p).unwrap().saturation_input();
        let mut counts = Vec::new();
        for k in 0..20 {
            let vd = 0.7 * v_sat * k as f64 / 19.0;
            let mut dg = Digota::new(p).unwrap();
            dg.set_initial_phase(0.37);
            dg.enable_ramp_shot_noise(ChaCha8Rng::seed_from_u64(7));
            let mut c = 0u64;
            for _ in 0..40_000 {
                if dg.tick(vd) == OutputDrive::P {
                    c += 1;
                }
            }
            counts.push(c);
        }
        for w in counts.windows(2) {
            assert!(w[1] >= w[0], "counts not monotone: {counts:?}");
        }
        assert!(counts[19] > counts[0]);
    }

    #[test]
    fn sign_flip_swaps_p_and_n_exactly() {
        let p = params();
        let mut a = Digota::new(p).unwrap();
        let mut b = Digota::new(p).unwrap();
        a.set_initial_phase(0.37);
        b.set_initial_phase(0.37);
        // deterministic pseudo-random vd sequence
        let mut x = 0x2545F4914F6CDD1Du64;
        for _ in 0..30_000 {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            let vd = ((x >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 20e-6;
            let da = a.tick(vd);
            let db = b.tick(-vd);
            let swapped = match da {
                OutputDrive::P => OutputDrive::N,
                OutputDrive::N => OutputDrive::P,
                OutputDrive::Z => OutputDrive::Z,
            };
            assert_eq!(db, swapped);
        }
    }

    #[test]
    fn p_never_directly_follows_n() {
        let p = params();
        let mut dg = Digota::new(p).unwrap();
        dg.set_initial_phase(0.1);
        let mut prev = OutputDrive::Z;
        let mut x = 0x9E3779B97F4A7C15u64;
        for _ in 0..60_000 {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            let vd = ((x >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 40e-6;
            let d = dg.tick(vd);
            let illegal = matches!(
                (prev, d),
                (OutputDrive::P, OutputDrive::N) | (OutputDrive::N, OutputDrive::P)
            );
            assert!(!illegal, "direct P<->N transition");
            prev = d;
        }
    }

    #[test]
    fn deterministic_given_seed() {
        use rand::SeedableRng;
        let p = params();
        let run = || {
            let mut dg = Digota::new(p).unwrap();
            dg.set_initial_phase(0.42);
            dg.enable_ramp_shot_noise(ChaCha8Rng::seed_from_u64(99));
            (0..5000).map(|k| dg.tick(1e-6 * (k % 7) as f64).as_char()).collect::<String>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn trim_map_properties() {
        let p = params();
        // baseline code 1 keeps the reported currents
        let base = trim_output_stage(&p, 1, 1).unwrap();
        assert!((base.i_p - 4.89e-9).abs() < 1e-18);
        assert!((base.i_n - 10.16e-9).abs() < 1e-18);
        // code 0 is 1/256 of full strength (code 255), not zero
        let lo = trim_output_stage(&p, 0, 0).unwrap();
        let hi = trim_output_stage(&p, 255, 255).unwrap();
        assert!(lo.i_p > 0.0);
        assert!((hi.i_p / lo.i_p - 256.0).abs() < 1e-9);
        // monotone in the code
        let mut prev = 0.0;
        for code in 0..=255 {
            let t = trim_output_stage(&p, code, code).unwrap();
            assert!(t.i_p > prev);
            prev = t.i_p;
        }
        assert!(trim_output_stage(&p, 256, 0).is_err());
    }

    #[test]
    fn zero_input_neutrality_charge_bound() {
        // open loop, vd = 0 exactly: no P or N pulses at all, so the charge
        // imbalance bound holds trivially; with a dithered start it still
        // holds over any long window.
        let p = params();
        let mut dg = Digota::new(p).unwrap();
        dg.set_initial_phase(0.73);
        let (mut np, mut nn) = (0u64, 0u64);
        let window = (100.0 * p.t0 / p.tclk()) as usize * 10;
        for _ in 0..window {
            match dg.tick(0.0) {
                OutputDrive::P => np += 1,
                OutputDrive::N => nn += 1,
                OutputDrive::Z => {}
            }
        }
        let imbalance = (np as f64 * p.i_p - nn as f64 * p.i_n).abs();
        assert!(imbalance <= p.i_p + p.i_n, "imbalance {imbalance:e}");
    }
}
