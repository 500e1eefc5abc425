//! Behavioral simulator and analysis toolkit for digital-based (DB)
//! potentiostat readouts.
//!
//! The crate models a clocked, fully digital transconductance front end
//! (a floating-inverter DIGOTA) closed in feedback around an electrochemical
//! cell. It provides:
//!
//! - [`electrochem`]: Randles cell impedance, microdisc limiting currents and
//!   chronoamperometric transients, transient fitting, and analyte
//!   calibration curves for ferrocyanide and glucose sensing.
//! - [`fidigota`]: the clock-driven behavioral state machine of the front
//!   end, including slope calibration and output-stage trimming.
//! - [`freqmodel`]: the linearized frequency-domain model (signal and noise
//!   transfer functions, noise source densities, combined output spectrum).
//! - [`pulse`]: decoding of three-state pulse streams into faradaic currents
//!   and the derived readout figures of merit.
//! - [`spectral`]: Welch power spectral density estimation and normalized
//!   stream spectra.
//! - [`loopsim`]: closed-loop experiments (chronoamperometry, zero-input
//!   noise runs, small-signal probing, multi-die Monte Carlo).
//! - [`config`]: the flat key-value configuration format shared by the
//!   simulator and its command-line front end.

pub mod config;
pub mod consts;
pub mod electrochem;
pub mod fidigota;
pub mod freqmodel;
pub mod loopsim;
pub mod pulse;
pub mod spectral;

pub use electrochem::{CalibrationCurve, ElectrodeGeometry, RandlesCell};
pub use fidigota::{CircuitParams, Digota, DigotaState, OutputDrive, SlopeCalibration};
pub use freqmodel::RationalTf;
pub use loopsim::{ChronoResult, CurrentSource, LoopConfig};
pub use pulse::{DecodeResult, PulseStream};
