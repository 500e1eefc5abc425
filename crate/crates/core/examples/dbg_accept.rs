use dbpot::electrochem::{ferrocyanide_current, ElectrodeGeometry, RandlesCell};
use dbpot::fidigota::{scale_output_stage, CircuitParams};
use dbpot::loopsim::{multidie_montecarlo, run_chrono, CurrentSource, LoopConfig, NoiseSettings};
use dbpot::pulse::running_estimate;
use std::time::Instant;

fn cfg(p: CircuitParams, source: CurrentSource, dur: f64, seed: u64) -> LoopConfig {
    LoopConfig {
        params: p,
        cell: RandlesCell::default_microelectrode(),
        source,
        vref: 0.25,
        duration: dur,
        seed,
        noise: NoiseSettings::default(),
        ce_rail: Some(0.6),
    }
}

fn main() {
    // criterion 2: 20 log points 600 pA .. 650 nA
    let t = Instant::now();
    let base = CircuitParams::vdd04();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in 0..20 {
        let i_f = 600e-12 * (650e-9_f64 / 600e-12).powf(k as f64 / 19.0);
        let scale = (2.5 * i_f / base.i_p).max(1.0);
        let p = scale_output_stage(&base, scale);
        let c = cfg(p, CurrentSource::Constant(i_f), 0.7, 100 + k);
        let res = run_chrono(&c).unwrap();
        let d = res.decode_after(0.2).unwrap();
        xs.push(i_f);
        ys.push(d.i_f);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| {
        let e = y - (slope * x + intercept);
        e * e
    }).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let r2 = 1.0 - ss_res / ss_tot;
    println!("c2: slope {:.5} r2 {:.7} ({} ms)", slope, r2, t.elapsed().as_millis());
    let rel_errs: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| (y / x - 1.0) * 100.0).collect();
    println!("    worst point error {:.3}%", rel_errs.iter().fold(0.0f64, |a, b| a.max(b.abs())));

    // criterion 7: convergence by M/256 (ferro 0.5 mM)
    let i_f = ferrocyanide_current(25e-6, 0.5).unwrap();
    let c = cfg(base, CurrentSource::Constant(i_f), 6.0, 42);
    let res = run_chrono(&c).unwrap();
    let skip = (0.5 * base.fclk) as usize;
    let settled = dbpot::pulse::PulseStream::new(res.stream.states[skip..skip + 250_000].to_vec(), base.fclk);
    let r = running_estimate(&settled, base.i_p, base.i_n, 0.05).unwrap();
    println!("c7: conv {} of {} (limit {})", r.convergence_index, settled.len(), settled.len() / 256);

    // criterion 10: multidie at table setpoints
    let t = Instant::now();
    let setpoints = [1.18e-9, 5.68e-9, 10.79e-9, 50.77e-9, 100.99e-9, 502.28e-9];
    let c = cfg(base, CurrentSource::Constant(0.0), 0.6, 13);
    let stats = multidie_montecarlo(&c, 0.10, 5, &setpoints, 0.6, 0.1).unwrap();
    for s in &stats.per_setpoint {
        println!(
            "  set {:9.2} nA: mean {:9.2} sigma {:7.2} ({:5.2}%)",
            s.setpoint * 1e9, s.mean * 1e9, s.sigma * 1e9, 100.0 * s.sigma / s.mean
        );
    }
    println!("c10: mean normalized sigma {:.2}% ({} ms)", stats.mean_normalized_sigma * 100.0, t.elapsed().as_millis());

    // sensitivity number
    let g = ElectrodeGeometry::ferrocyanide(25e-6).unwrap();
    let s = dbpot::pulse::sensitivity_lsb_per_mm(&g, 4.89e-9, 5.0, 50e3);
    println!("c6: sensitivity {:.0} LSB/mM (target 334137 +/- 10%)", s);
}
