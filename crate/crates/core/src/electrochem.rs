//! Electrochemical cell and microdisc electrode models.
//!
//! Covers the Randles equivalent of the working electrode interface,
//! diffusion-limited microdisc currents (steady state and transient),
//! least-squares fitting of chronoamperometric transients, and the
//! piecewise-linear analyte calibration used for non-enzymatic glucose
//! sensing.
//!
//! Units are SI throughout: currents in A, concentrations in mol/m³
//! (numerically equal to mM for aqueous solutions), times in s.

use std::io::{BufRead, Write};

use rustfft::num_complex::Complex64;
use thiserror::Error;

use crate::consts::FARADAY;

/// Literature diffusion coefficient of ferrocyanide in aqueous solution (m²/s).
pub const D_FERROCYANIDE: f64 = 6.67e-10;

/// Shoup–Szabo compact approximation coefficients for the dimensionless
/// microdisc current f(τ) = A + B·τ^(-1/2) + C·exp(-E·τ^(-1/2)).
const SS_A: f64 = 0.7854;
const SS_B: f64 = 0.8862;
const SS_C: f64 = 0.2146;
const SS_E: f64 = 0.7823;

#[derive(Debug, Error)]
pub enum ElectrochemError {
    #[error("invalid {field}: {value} ({reason})")]
    InvalidParameter {
        field: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("time must be positive, got {0}")]
    NonPositiveTime(f64),
    #[error("bad fit samples: {0}")]
    BadSamples(String),
    #[error("fit did not converge after {iterations} iterations (best residual {residual:.3e})")]
    DidNotConverge {
        iterations: usize,
        residual: f64,
        best: TransientFit,
    },
    #[error("calibration curve: {0}")]
    BadCalibration(String),
    #[error("csv parse error at line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Randles equivalent of the electrode interface: charge-transfer resistance
/// in parallel with an interfacial capacitance, plus an optional series
/// solution resistance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandlesCell {
    /// Charge-transfer resistance (Ω).
    pub rp: f64,
    /// Interfacial capacitance approximating the CPE (F). A CPE exponent
    /// field is deliberately not modeled; the ideal-capacitor value is used.
    pub cp: f64,
    /// Solution resistance (Ω); negligible for nA-range currents and 0 by
    /// default.
    pub rs: f64,
}

impl RandlesCell {
    pub fn new(rp: f64, cp: f64, rs: f64) -> Result<Self, ElectrochemError> {
        if !(rp > 0.0) || !rp.is_finite() {
            return Err(ElectrochemError::InvalidParameter {
                field: "rp",
                value: rp,
                reason: "must be > 0",
            });
        }
        if !(cp > 0.0) || !cp.is_finite() {
            return Err(ElectrochemError::InvalidParameter {
                field: "cp",
                value: cp,
                reason: "must be > 0",
            });
        }
        if !(rs >= 0.0) || !rs.is_finite() {
            return Err(ElectrochemError::InvalidParameter {
                field: "rs",
                value: rs,
                reason: "must be >= 0",
            });
        }
        Ok(Self { rp, cp, rs })
    }

    /// Default cell extracted from the nanostructured microelectrode
    /// characterization: Cp = 7 nF, Rp = 220 MΩ, Rs neglected.
    pub fn default_microelectrode() -> Self {
        Self {
            rp: 220e6,
            cp: 7e-9,
            rs: 0.0,
        }
    }

    /// Complex impedance Rs + Rp / (1 + j·2π·f·Rp·Cp) at frequency `f` (Hz).
    pub fn impedance(&self, f: f64) -> Complex64 {
        let jw = Complex64::new(0.0, 2.0 * std::f64::consts::PI * f);
        Complex64::new(self.rs, 0.0)
            + Complex64::new(self.rp, 0.0) / (Complex64::new(1.0, 0.0) + jw * self.rp * self.cp)
    }
}

/// Free-function form of [`RandlesCell::impedance`].
pub fn randles_impedance(cell: &RandlesCell, f: f64) -> Complex64 {
    cell.impedance(f)
}

/// Microdisc electrode geometry and reaction parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElectrodeGeometry {
    /// Microdisc radius (m).
    pub radius: f64,
    /// Electrons transferred per molecule.
    pub electrons: u32,
    /// Diffusion coefficient of the analyte (m²/s).
    pub d_coeff: f64,
}

impl ElectrodeGeometry {
    pub fn new(radius: f64, electrons: u32, d_coeff: f64) -> Result<Self, ElectrochemError> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(ElectrochemError::InvalidParameter {
                field: "radius",
                value: radius,
                reason: "must be > 0",
            });
        }
        if electrons < 1 {
            return Err(ElectrochemError::InvalidParameter {
                field: "electrons",
                value: electrons as f64,
                reason: "must be >= 1",
            });
        }
        if !(d_coeff > 0.0) || !d_coeff.is_finite() {
            return Err(ElectrochemError::InvalidParameter {
                field: "d_coeff",
                value: d_coeff,
                reason: "must be > 0",
            });
        }
        Ok(Self {
            radius,
            electrons,
            d_coeff,
        })
    }

    /// One-electron ferrocyanide oxidation at a disc of radius `a` (m).
    pub fn ferrocyanide(a: f64) -> Result<Self, ElectrochemError> {
        Self::new(a, 1, D_FERROCYANIDE)
    }

    /// Dimensionless time τ = 4·D·t / a².
    pub fn tau(&self, t: f64) -> f64 {
        4.0 * self.d_coeff * t / (self.radius * self.radius)
    }
}

/// Steady-state diffusion-limited current of an embedded microdisc:
/// i_L = 4·n·F·D·c·a.
pub fn limiting_current(geom: &ElectrodeGeometry, c: f64) -> f64 {
    4.0 * geom.electrons as f64 * FARADAY * geom.d_coeff * c * geom.radius
}

/// Dimensionless microdisc chronoamperometric current f(τ) in the
/// Shoup–Szabo compact form. f(τ) → 1 as τ → ∞ and approaches the Cottrell
/// planar-diffusion behavior as τ → 0.
pub fn microdisc_f(tau: f64) -> f64 {
    let u = tau.powf(-0.5);
    SS_A + SS_B * u + SS_C * (-SS_E * u).exp()
}

/// Chronoamperometric microdisc current i(t) = i_L · f(4·D·t/a²).
pub fn microdisc_transient(
    geom: &ElectrodeGeometry,
    c: f64,
    t: f64,
) -> Result<f64, ElectrochemError> {
    if !(t > 0.0) {
        return Err(ElectrochemError::NonPositiveTime(t));
    }
    Ok(limiting_current(geom, c) * microdisc_f(geom.tau(t)))
}

/// Steady-state ferrocyanide oxidation current at a disc of radius `a` (m)
/// and bulk concentration `c` (mol/m³). This is the diffusion-controlled
/// current source used by the loop simulator.
pub fn ferrocyanide_current(a: f64, c: f64) -> Result<f64, ElectrochemError> {
    Ok(limiting_current(&ElectrodeGeometry::ferrocyanide(a)?, c))
}

/// Result of a two-parameter (D, c) transient fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransientFit {
    /// Fitted diffusion coefficient (m²/s).
    pub d_coeff: f64,
    /// Fitted bulk concentration (mol/m³).
    pub c_bulk: f64,
    /// RMS relative error of the fit residuals.
    pub rms_relative_residual: f64,
    /// Standard error of the fitted diffusion coefficient.
    pub stderr_d: f64,
    /// Standard error of the fitted concentration.
    pub stderr_c: f64,
    /// Iterations consumed.
    pub iterations: usize,
}

/// Initial guesses for [`fit_transient`]. Radius and electron count are held
/// fixed; D and c are free parameters.
#[derive(Debug, Clone, Copy)]
pub struct FitPriors {
    pub radius: f64,
    pub electrons: u32,
    pub d_guess: f64,
    pub c_guess: f64,
}

const FIT_MAX_ITER: usize = 200;
const FIT_STEP_TOL: f64 = 1e-8;
const FIT_REL_STEP: f64 = 1e-6;

/// Least-squares fit of (D, c) to chronoamperometric samples using a damped
/// Gauss–Newton (Levenberg-style) iteration with a relative-step
/// finite-difference Jacobian.
///
/// Requires at least 8 samples spanning one decade in time, all with
/// positive current. On hitting the iteration cap the error carries the
/// best parameters reached.
pub fn fit_transient(
    samples: &[(f64, f64)],
    priors: &FitPriors,
) -> Result<TransientFit, ElectrochemError> {
    if samples.len() < 8 {
        return Err(ElectrochemError::BadSamples(format!(
            "need at least 8 samples, got {}",
            samples.len()
        )));
    }
    let (mut t_min, mut t_max) = (f64::INFINITY, 0.0f64);
    for &(t, i) in samples {
        if !(t > 0.0) || !(i > 0.0) || !t.is_finite() || !i.is_finite() {
            return Err(ElectrochemError::BadSamples(format!(
                "samples must have t > 0 and i > 0, got ({t}, {i})"
            )));
        }
        t_min = t_min.min(t);
        t_max = t_max.max(t);
    }
    if t_max / t_min < 10.0 {
        return Err(ElectrochemError::BadSamples(format!(
            "samples must span at least one decade in t (span {:.2}x)",
            t_max / t_min
        )));
    }

    let model = |d: f64, c: f64, t: f64| -> f64 {
        let geom = ElectrodeGeometry {
            radius: priors.radius,
            electrons: priors.electrons,
            d_coeff: d,
        };
        limiting_current(&geom, c) * microdisc_f(geom.tau(t))
    };
    let residuals = |d: f64, c: f64, out: &mut [f64]| {
        for (r, &(t, i)) in out.iter_mut().zip(samples) {
            *r = i - model(d, c, t);
        }
    };

    let n = samples.len();
    let mut p = [priors.d_guess, priors.c_guess];
    let mut r = vec![0.0; n];
    residuals(p[0], p[1], &mut r);
    let mut cost: f64 = r.iter().map(|x| x * x).sum();
    let mut lambda = 1e-3;
    let mut jac = vec![[0.0f64; 2]; n];
    let mut r_step = vec![0.0; n];
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..FIT_MAX_ITER {
        iterations = iter + 1;
        // finite-difference Jacobian, relative steps
        for j in 0..2 {
            let step = FIT_REL_STEP * p[j].abs();
            let mut pj = p;
            pj[j] += step;
            residuals(pj[0], pj[1], &mut r_step);
            for k in 0..n {
                jac[k][j] = (r_step[k] - r[k]) / step;
            }
        }
        // normal equations
        let mut jtj = [[0.0f64; 2]; 2];
        let mut jtr = [0.0f64; 2];
        for k in 0..n {
            for a in 0..2 {
                for b in 0..2 {
                    jtj[a][b] += jac[k][a] * jac[k][b];
                }
                jtr[a] += jac[k][a] * r[k];
            }
        }

        let mut delta = [0.0f64; 2];
        let mut accepted = false;
        for _ in 0..30 {
            let a00 = jtj[0][0] * (1.0 + lambda);
            let a11 = jtj[1][1] * (1.0 + lambda);
            let a01 = jtj[0][1];
            let det = a00 * a11 - a01 * a01;
            if det.abs() < f64::MIN_POSITIVE * 1e10 {
                lambda *= 10.0;
                continue;
            }
            delta = [
                (-jtr[0] * a11 + jtr[1] * a01) / det,
                (-jtr[1] * a00 + jtr[0] * a01) / det,
            ];
            let cand = [p[0] + delta[0], p[1] + delta[1]];
            if cand[0] <= 0.0 || cand[1] <= 0.0 {
                lambda *= 10.0;
                continue;
            }
            residuals(cand[0], cand[1], &mut r_step);
            let cand_cost: f64 = r_step.iter().map(|x| x * x).sum();
            if cand_cost < cost {
                p = cand;
                std::mem::swap(&mut r, &mut r_step);
                cost = cand_cost;
                lambda = (lambda / 3.0).max(1e-14);
                accepted = true;
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            break;
        }
        let rel_step = (delta[0] / p[0]).abs().max((delta[1] / p[1]).abs());
        if rel_step < FIT_STEP_TOL {
            converged = true;
            break;
        }
    }

    // covariance from the undamped normal matrix at the solution
    for j in 0..2 {
        let step = FIT_REL_STEP * p[j].abs();
        let mut pj = p;
        pj[j] += step;
        residuals(pj[0], pj[1], &mut r_step);
        for k in 0..n {
            jac[k][j] = (r_step[k] - r[k]) / step;
        }
    }
    let mut jtj = [[0.0f64; 2]; 2];
    for k in 0..n {
        for a in 0..2 {
            for b in 0..2 {
                jtj[a][b] += jac[k][a] * jac[k][b];
            }
        }
    }
    let dof = (n - 2).max(1) as f64;
    let sigma2 = cost / dof;
    let det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[0][1];
    let (stderr_d, stderr_c) = if det > 0.0 {
        (
            (sigma2 * jtj[1][1] / det).sqrt(),
            (sigma2 * jtj[0][0] / det).sqrt(),
        )
    } else {
        (f64::NAN, f64::NAN)
    };

    let mut rel_sq = 0.0;
    for (k, &(_, i)) in samples.iter().enumerate() {
        let rel = r[k] / i;
        rel_sq += rel * rel;
    }
    let fit = TransientFit {
        d_coeff: p[0],
        c_bulk: p[1],
        rms_relative_residual: (rel_sq / n as f64).sqrt(),
        stderr_d,
        stderr_c,
        iterations,
    };
    if converged {
        Ok(fit)
    } else {
        Err(ElectrochemError::DidNotConverge {
            iterations,
            residual: fit.rms_relative_residual,
            best: fit,
        })
    }
}

/// One linear segment of a calibration curve over [c_lo, c_hi] (mol/m³).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalSegment {
    pub c_lo: f64,
    pub c_hi: f64,
    /// Slope in A per mol/m³ (equivalently A/mM).
    pub slope: f64,
    /// Intercept in A.
    pub intercept: f64,
}

impl CalSegment {
    fn eval(&self, c: f64) -> f64 {
        self.intercept + self.slope * c
    }
}

/// Piecewise-linear analyte calibration with a limit of detection.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationCurve {
    segments: Vec<CalSegment>,
    /// Limit of detection (mol/m³).
    pub lod: f64,
}

/// Evaluation of a calibration curve at one concentration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlucoseReading {
    pub current: f64,
    /// Concentration below the limit of detection; current reported as 0.
    pub below_lod: bool,
    /// Concentration outside the calibrated range; value extrapolated from
    /// the nearest segment.
    pub extrapolated: bool,
}

impl CalibrationCurve {
    /// Build a curve from ordered segments. Segments must be contiguous and
    /// non-overlapping; continuity across boundaries is checked.
    pub fn new(segments: Vec<CalSegment>, lod: f64) -> Result<Self, ElectrochemError> {
        if segments.is_empty() {
            return Err(ElectrochemError::BadCalibration("no segments".into()));
        }
        if !(lod > 0.0) {
            return Err(ElectrochemError::BadCalibration(format!(
                "lod must be > 0, got {lod}"
            )));
        }
        for seg in &segments {
            if !(seg.c_lo < seg.c_hi) || !seg.slope.is_finite() || !seg.intercept.is_finite() {
                return Err(ElectrochemError::BadCalibration(format!(
                    "bad segment {seg:?}"
                )));
            }
        }
        for w in segments.windows(2) {
            if (w[0].c_hi - w[1].c_lo).abs() > 1e-9 * w[0].c_hi.abs().max(1.0) {
                return Err(ElectrochemError::BadCalibration(format!(
                    "segments not contiguous at {} vs {}",
                    w[0].c_hi, w[1].c_lo
                )));
            }
            let gap = (w[0].eval(w[0].c_hi) - w[1].eval(w[1].c_lo)).abs();
            let scale = w[0].eval(w[0].c_hi).abs().max(1e-15);
            if gap > 1e-6 * scale {
                return Err(ElectrochemError::BadCalibration(format!(
                    "segments discontinuous at c = {} (gap {gap:.3e} A)",
                    w[0].c_hi
                )));
            }
        }
        Ok(Self { segments, lod })
    }

    /// Two-segment curve with the intercept of the upper segment chosen for
    /// continuity at the breakpoint. Concentrations in mol/m³, slopes in
    /// A per mol/m³; the lower segment passes through the origin.
    pub fn two_segment(
        c_min: f64,
        c_break: f64,
        c_max: f64,
        slope_lo: f64,
        slope_hi: f64,
        lod: f64,
    ) -> Result<Self, ElectrochemError> {
        let lower = CalSegment {
            c_lo: c_min,
            c_hi: c_break,
            slope: slope_lo,
            intercept: 0.0,
        };
        let upper = CalSegment {
            c_lo: c_break,
            c_hi: c_max,
            slope: slope_hi,
            intercept: (slope_lo - slope_hi) * c_break,
        };
        Self::new(vec![lower, upper], lod)
    }

    /// Default non-enzymatic glucose calibration: two linear segments over
    /// 2–50 mM with a 20 mM breakpoint, an upper-segment sensitivity of
    /// 0.3 nA/mM, and a 530 µM limit of detection. The lower-segment slope
    /// is a configurable instantiation (0.6 nA/mM by default).
    pub fn default_glucose() -> Self {
        Self::two_segment(2.0, 20.0, 50.0, 0.6e-9, 0.3e-9, 0.53)
            .expect("default glucose calibration is valid")
    }

    pub fn segments(&self) -> &[CalSegment] {
        &self.segments
    }

    fn c_min(&self) -> f64 {
        self.segments[0].c_lo
    }

    fn c_max(&self) -> f64 {
        self.segments[self.segments.len() - 1].c_hi
    }

    /// Evaluate the calibration at concentration `c` (mol/m³). Below the
    /// limit of detection the current reads 0 with `below_lod` set; outside
    /// the calibrated range the nearest segment is extrapolated and flagged.
    pub fn current(&self, c: f64) -> GlucoseReading {
        if c < self.lod {
            return GlucoseReading {
                current: 0.0,
                below_lod: true,
                extrapolated: false,
            };
        }
        let extrapolated = c < self.c_min() || c > self.c_max();
        let seg = self
            .segments
            .iter()
            .find(|s| c <= s.c_hi)
            .unwrap_or(&self.segments[self.segments.len() - 1]);
        GlucoseReading {
            current: seg.eval(c),
            below_lod: false,
            extrapolated,
        }
    }
}

/// Evaluate a glucose calibration curve; see [`CalibrationCurve::current`].
pub fn glucose_current(cal: &CalibrationCurve, c: f64) -> GlucoseReading {
    cal.current(c)
}

/// Read chronoamperogram samples from CSV with header `t_s,i_A`.
pub fn read_chronoamperogram<R: BufRead>(reader: R) -> Result<Vec<(f64, f64)>, ElectrochemError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if idx == 0 {
            if line != "t_s,i_A" {
                return Err(ElectrochemError::Csv {
                    line: 1,
                    reason: format!("expected header 't_s,i_A', got '{line}'"),
                });
            }
            continue;
        }
        let mut parts = line.split(',');
        let parse = |s: Option<&str>, what: &str| -> Result<f64, ElectrochemError> {
            s.ok_or_else(|| ElectrochemError::Csv {
                line: idx + 1,
                reason: format!("missing {what}"),
            })?
            .trim()
            .parse::<f64>()
            .map_err(|e| ElectrochemError::Csv {
                line: idx + 1,
                reason: format!("bad {what}: {e}"),
            })
        };
        let t = parse(parts.next(), "t_s")?;
        let i = parse(parts.next(), "i_A")?;
        out.push((t, i));
    }
    Ok(out)
}

/// Write a fit report as CSV `param,value,stderr`.
pub fn write_fit_report<W: Write>(mut w: W, fit: &TransientFit) -> std::io::Result<()> {
    writeln!(w, "param,value,stderr")?;
    writeln!(w, "d_m2_per_s,{:e},{:e}", fit.d_coeff, fit.stderr_d)?;
    writeln!(w, "c_mol_per_m3,{:e},{:e}", fit.c_bulk, fit.stderr_c)?;
    writeln!(w, "rms_rel_residual,{:e},", fit.rms_relative_residual)?;
    Ok(())
}
