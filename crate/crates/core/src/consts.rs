//! Physical constants used across the crate (SI units).

/// Faraday constant (C/mol).
pub const FARADAY: f64 = 96485.33;

/// Elementary charge (C).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
