//! Linearized frequency-domain model of the DB potentiostat: block gains,
//! the signal transfer function from faradaic current to digital pulse
//! width, the two noise transfer functions, the noise source densities, and
//! the combined output noise spectrum.

use rustfft::num_complex::Complex64;
use thiserror::Error;

use crate::fidigota::CircuitParams;

#[derive(Debug, Error)]
pub enum FreqModelError {
    #[error("rational transfer function: {0}")]
    BadTf(String),
    #[error("block gains: {0}")]
    BadGains(String),
}

/// Second-order rational transfer function in s with real coefficients,
/// stored lowest order first.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalTf {
    pub num: [f64; 3],
    pub den: [f64; 3],
    /// Units of the DC gain, documented per construction ("s/A" for the
    /// signal TF, "" for the quantization NTF, "s/V" for the input NTF).
    pub gain_units: &'static str,
}

impl RationalTf {
    pub fn new(num: [f64; 3], den: [f64; 3], gain_units: &'static str) -> Result<Self, FreqModelError> {
        if num.iter().chain(den.iter()).any(|c| !c.is_finite()) {
            return Err(FreqModelError::BadTf("non-finite coefficient".into()));
        }
        if den[0] == 0.0 {
            return Err(FreqModelError::BadTf("denominator zero at s = 0".into()));
        }
        let deg = |c: &[f64; 3]| if c[2] != 0.0 { 2 } else if c[1] != 0.0 { 1 } else { 0 };
        if deg(&num) > deg(&den) {
            return Err(FreqModelError::BadTf(
                "numerator degree exceeds denominator degree".into(),
            ));
        }
        Ok(Self { num, den, gain_units })
    }

    fn poly_eval(c: &[f64; 3], s: Complex64) -> Complex64 {
        Complex64::new(c[0], 0.0) + s * (Complex64::new(c[1], 0.0) + s * c[2])
    }

    /// Evaluate at complex frequency s = j·2π·f.
    pub fn eval(&self, f: f64) -> Complex64 {
        let s = Complex64::new(0.0, 2.0 * std::f64::consts::PI * f);
        Self::poly_eval(&self.num, s) / Self::poly_eval(&self.den, s)
    }

    /// DC gain num(0)/den(0).
    pub fn dc(&self) -> f64 {
        self.num[0] / self.den[0]
    }

    pub fn magnitude(&self, f: f64) -> f64 {
        self.eval(f).norm()
    }

    pub fn magnitude_db(&self, f: f64) -> f64 {
        20.0 * self.magnitude(f).log10()
    }

    pub fn phase_deg(&self, f: f64) -> f64 {
        self.eval(f).arg().to_degrees()
    }

    /// Poles (roots of the denominator). Returns one root for first-order
    /// denominators.
    pub fn poles(&self) -> Vec<Complex64> {
        let [c, b, a] = self.den;
        if a == 0.0 {
            if b == 0.0 {
                return Vec::new();
            }
            return vec![Complex64::new(-c / b, 0.0)];
        }
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            vec![
                Complex64::new((-b + sq) / (2.0 * a), 0.0),
                Complex64::new((-b - sq) / (2.0 * a), 0.0),
            ]
        } else {
            let sq = (-disc).sqrt();
            vec![
                Complex64::new(-b / (2.0 * a), sq / (2.0 * a)),
                Complex64::new(-b / (2.0 * a), -sq / (2.0 * a)),
            ]
        }
    }
}

/// Block gains of the linearized loop: input stage A1(s), voltage-to-time
/// conversion, time-to-current conversion, and the output impedance Z2(s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockGains {
    /// DC gain of the input stage, gm·r0.
    pub a1_dc: f64,
    /// Input-stage pole time constant r0·Cfi (s).
    pub tau1: f64,
    /// Voltage-to-time gain Cfi/Icm (s/V).
    pub k_v2t: f64,
    /// Time-to-current gain 2·Ion/T0 (A/s).
    pub k_t2i: f64,
    /// Output impedance at DC, rout (Ω).
    pub z2_dc: f64,
    /// Output pole time constant rout·CL (s).
    pub tau2: f64,
}

impl BlockGains {
    /// Derive the block gains for a parameter set and an effective load
    /// capacitance `cl_eff` (standalone CL, or CL plus the cell capacitance
    /// when loop-connected).
    pub fn new(params: &CircuitParams, cl_eff: f64) -> Result<Self, FreqModelError> {
        if !(cl_eff > 0.0) {
            return Err(FreqModelError::BadGains(format!(
                "cl_eff must be > 0, got {cl_eff}"
            )));
        }
        let g = Self {
            a1_dc: params.gm * params.r0,
            tau1: params.r0 * params.cfi,
            k_v2t: params.cfi / params.icm,
            k_t2i: 2.0 * params.ion / params.t0,
            z2_dc: params.rout,
            tau2: params.rout * cl_eff,
        };
        if g.loop_gain_dc() <= 1.0 {
            return Err(FreqModelError::BadGains(format!(
                "DC loop gain {} must exceed 1",
                g.loop_gain_dc()
            )));
        }
        Ok(g)
    }

    /// DC loop gain A0 = A1(0)·k_v2t·k_t2i·Z2(0).
    pub fn loop_gain_dc(&self) -> f64 {
        self.a1_dc * self.k_v2t * self.k_t2i * self.z2_dc
    }

    /// Denominator polynomial (1 + s·τ1)(1 + s·τ2) + A0, shared by all three
    /// closed-loop transfer functions.
    fn char_poly(&self) -> [f64; 3] {
        [1.0 + self.loop_gain_dc(), self.tau1 + self.tau2, self.tau1 * self.tau2]
    }
}

/// Signal transfer function from faradaic current to digital pulse width
/// (s/A): Z2·A1·k_v2t / (1 + A1·k_v2t·k_t2i·Z2).
pub fn stf(params: &CircuitParams, cl_eff: f64) -> Result<RationalTf, FreqModelError> {
    let g = BlockGains::new(params, cl_eff)?;
    let k = g.a1_dc * g.k_v2t * g.z2_dc;
    RationalTf::new([k, 0.0, 0.0], g.char_poly(), "s/A")
}

/// Noise transfer function from the D-FF quantization noise to the pulse
/// width (dimensionless): (1 + s·τ1)(1 + s·τ2) / [(1 + s·τ1)(1 + s·τ2) + A0].
/// The DC value is 1/(1 + A0) and the high-frequency value tends to 1
/// (second-order shaping).
pub fn ntf_quantization(params: &CircuitParams, cl_eff: f64) -> Result<RationalTf, FreqModelError> {
    let g = BlockGains::new(params, cl_eff)?;
    RationalTf::new(
        [1.0, g.tau1 + g.tau2, g.tau1 * g.tau2],
        g.char_poly(),
        "",
    )
}

/// Noise transfer function from the equivalent input noise source to the
/// pulse width (s/V): A1·k_v2t / (1 + A1·k_v2t·k_t2i·Z2), first-order
/// shaping with DC attenuation T0/(2·rout·Ion) up to the closed-loop factor.
pub fn ntf_input(params: &CircuitParams, cl_eff: f64) -> Result<RationalTf, FreqModelError> {
    let g = BlockGains::new(params, cl_eff)?;
    let k = g.a1_dc * g.k_v2t;
    RationalTf::new([k, k * g.tau2, 0.0], g.char_poly(), "s/V")
}

/// White one-sided PSD of the D-FF quantization noise (s²/Hz):
/// Tclk²·T0/3, defined by its integral Tclk²/3 over [0, f0 = 1/T0].
pub fn quantization_noise_psd(params: &CircuitParams) -> f64 {
    let tclk = params.tclk();
    tclk * tclk * params.t0 / 3.0
}

/// White one-sided PSD of the equivalent input shot noise (V²/Hz):
/// 2·q·Icm/gm².
pub fn input_noise_psd(params: &CircuitParams) -> f64 {
    params.input_noise_psd()
}

/// Output noise spectrum referred to the digital pulse width.
#[derive(Debug, Clone)]
pub struct NoiseSpectrum {
    pub f_hz: Vec<f64>,
    /// Total PSD (s²/Hz).
    pub total: Vec<f64>,
    /// Quantization-noise component.
    pub quantization: Vec<f64>,
    /// Input shot-noise component.
    pub shot: Vec<f64>,
    /// Points above the self-oscillation Nyquist rate f0/2, where the
    /// linearized model assumptions no longer hold.
    pub beyond_nyquist: Vec<bool>,
}

/// Evaluate the combined output noise spectrum
/// |NTF_q|²·S_tnoise + |NTF_in|²·S_vn on a frequency grid. Evaluation above
/// f0/2 is permitted but flagged.
pub fn output_noise_spectrum(
    params: &CircuitParams,
    cl_eff: f64,
    f_grid: &[f64],
) -> Result<NoiseSpectrum, FreqModelError> {
    let nq = ntf_quantization(params, cl_eff)?;
    let ni = ntf_input(params, cl_eff)?;
    let s_t = quantization_noise_psd(params);
    let s_v = input_noise_psd(params);
    let nyquist = 0.5 / params.t0;
    let mut out = NoiseSpectrum {
        f_hz: f_grid.to_vec(),
        total: Vec::with_capacity(f_grid.len()),
        quantization: Vec::with_capacity(f_grid.len()),
        shot: Vec::with_capacity(f_grid.len()),
        beyond_nyquist: Vec::with_capacity(f_grid.len()),
    };
    for &f in f_grid {
        let q = nq.eval(f).norm_sqr() * s_t;
        let sh = ni.eval(f).norm_sqr() * s_v;
        out.quantization.push(q);
        out.shot.push(sh);
        out.total.push(q + sh);
        out.beyond_nyquist.push(f > nyquist);
    }
    Ok(out)
}
