//! Microdisc transient model checked against an independent
//! finite-difference diffusion oracle.

#[path = "support/fd_diffusion.rs"]
mod fd_diffusion;

use dbpot::electrochem::{
    fit_transient, limiting_current, microdisc_f, ElectrodeGeometry, FitPriors,
};
use fd_diffusion::fd_microdisc_richardson;

#[test]
fn compact_form_matches_fd_oracle_at_tau_one() {
    let (tm, f) = fd_microdisc_richardson(0.3, 0.05, 0.02, 40);
    // interpolate the oracle to tau = 1 (T = 0.25)
    let target = 0.25;
    let k = tm.partition_point(|&t| t < target).min(tm.len() - 1).max(1);
    let w = (target.ln() - tm[k - 1].ln()) / (tm[k].ln() - tm[k - 1].ln());
    let f_fd = (f[k - 1].ln() * (1.0 - w) + f[k].ln() * w).exp();
    let f_ss = microdisc_f(1.0);
    let err = (f_fd / f_ss - 1.0).abs();
    assert!(
        err < 0.03,
        "FD oracle {f_fd:.4} vs compact form {f_ss:.4} ({:.2}% off)",
        err * 100.0
    );
}

#[test]
fn fit_recovers_diffusion_coefficient_from_fd_oracle() {
    let geom = ElectrodeGeometry::ferrocyanide(25e-6).unwrap();
    let c_true = 1.0;
    let (tm, f) = fd_microdisc_richardson(1.5, 0.05, 0.0125, 60);
    let t_char = geom.radius * geom.radius / geom.d_coeff;
    // fit over the long-time window (tau >= 0.4) where both the oracle and
    // the compact form are most reliable; spans over a decade in t
    let samples: Vec<(f64, f64)> = tm
        .iter()
        .zip(f.iter())
        .filter(|(&t, _)| 4.0 * t >= 0.4)
        .map(|(&t, &fv)| (t * t_char, limiting_current(&geom, c_true) * fv))
        .collect();
    assert!(samples.len() >= 8);
    assert!(samples.last().unwrap().0 / samples[0].0 > 10.0);
    let fit = fit_transient(
        &samples,
        &FitPriors {
            radius: geom.radius,
            electrons: 1,
            d_guess: 2.0 * geom.d_coeff,
            c_guess: 0.5,
        },
    )
    .unwrap();
    let err = (fit.d_coeff / geom.d_coeff - 1.0).abs();
    assert!(
        err < 0.05,
        "recovered D {:.4e} vs true {:.4e} ({:.2}% off)",
        fit.d_coeff,
        geom.d_coeff,
        err * 100.0
    );
}

#[test]
fn fit_tolerates_multiplicative_noise() {
    // Monte Carlo over 100 seeds with 2% multiplicative noise; the median
    // worst-parameter error stays within 5%
    let geom = ElectrodeGeometry::ferrocyanide(25e-6).unwrap();
    let samples: Vec<(f64, f64)> = (0..24)
        .map(|k| {
            let t = 1e-2 * 10f64.powf(3.0 * k as f64 / 23.0);
            (
                t,
                limiting_current(&geom, 1.0) * microdisc_f(geom.tau(t)),
            )
        })
        .collect();
    let mut errs = Vec::new();
    let mut state = 0x853C49E6748FEA9Bu64;
    let mut gauss = move || {
        // Box-Muller on a xorshift stream
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        let u1 = (state >> 11) as f64 / (1u64 << 53) as f64;
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        let u2 = (state >> 11) as f64 / (1u64 << 53) as f64;
        (-2.0 * u1.max(1e-12).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    for _ in 0..100 {
        let noisy: Vec<(f64, f64)> = samples
            .iter()
            .map(|&(t, i)| (t, i * (1.0 + 0.02 * gauss())))
            .collect();
        let fit = fit_transient(
            &noisy,
            &FitPriors {
                radius: geom.radius,
                electrons: 1,
                d_guess: 2.0 * geom.d_coeff,
                c_guess: 0.5,
            },
        );
        // a capped-out fit still carries its best parameters
        let best = match fit {
            Ok(f) => f,
            Err(dbpot::electrochem::ElectrochemError::DidNotConverge { best, .. }) => best,
            Err(e) => panic!("unexpected fit error: {e}"),
        };
        let e = (best.d_coeff / geom.d_coeff - 1.0)
            .abs()
            .max((best.c_bulk / 1.0 - 1.0).abs());
        errs.push(e);
    }
    assert_eq!(errs.len(), 100);
    errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = errs[errs.len() / 2];
    assert!(median < 0.05, "median error {:.2}%", median * 100.0);
}
