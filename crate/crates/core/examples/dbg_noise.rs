use dbpot::electrochem::RandlesCell;
use dbpot::fidigota::CircuitParams;
use dbpot::freqmodel::{input_noise_psd, ntf_input, ntf_quantization, quantization_noise_psd};
use dbpot::loopsim::{run_zero_input, CurrentSource, LoopConfig, NoiseSettings};
use dbpot::spectral::{cycle_width_series, psd_welch, WelchConfig};

fn main() {
    for drive in [0.6e-9, 0.8e-9, 1.0e-9, 2.0e-9, 8.1e-9] {
        let mut p = CircuitParams::vdd04();
        p.i_p = drive;
        p.i_n = drive;
        p.ion = drive;
        let cfg = LoopConfig {
            params: p,
            cell: RandlesCell::default_microelectrode(),
            source: CurrentSource::Constant(0.0),
            vref: 0.25,
            duration: 40.0,
            seed: 700,
            noise: NoiseSettings::default(),
            ce_rail: Some(0.6),
        };
        let streams = run_zero_input(&cfg, 6).unwrap();
        let f0 = 1.0 / p.t0;
        let nseg = 8192;
        let mut acc: Vec<f64> = Vec::new();
        let mut freqs: Vec<f64> = Vec::new();
        for s in &streams {
            let series = cycle_width_series(s, p.t0);
            let (f, pxx) = psd_welch(
                &series,
                f0,
                &WelchConfig { nperseg: Some(nseg), overlap: 0.5 },
            )
            .unwrap();
            if acc.is_empty() {
                acc = pxx;
                freqs = f;
            } else {
                for (a, x) in acc.iter_mut().zip(pxx) {
                    *a += x;
                }
            }
        }
        for a in acc.iter_mut() {
            *a /= streams.len() as f64;
        }
        let cl_eff = cfg.node_capacitance();
        let nq = ntf_quantization(&p, cl_eff).unwrap();
        let ni = ntf_input(&p, cl_eff).unwrap();
        let s_t = quantization_noise_psd(&p);
        let s_v = input_noise_psd(&p);
        let df = freqs[1] - freqs[0];
        let mut ratios = Vec::new();
        for bmax in [f0 / 2.0, f0 / 4.0, f0 / 8.0] {
            let (mut p_sim, mut p_mod) = (0.0, 0.0);
            for k in 1..freqs.len() {
                if freqs[k] > bmax {
                    break;
                }
                p_sim += acc[k] * df;
                p_mod += (nq.eval(freqs[k]).norm_sqr() * s_t + ni.eval(freqs[k]).norm_sqr() * s_v) * df;
            }
            ratios.push(p_sim / p_mod);
        }
        let (p_sim, p_mod) = (ratios[0], 1.0);
        // low-decade slope
        let f_lo = freqs[1];
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for k in 1..freqs.len() {
            if freqs[k] <= 10.0 * f_lo {
                xs.push(freqs[k].log10());
                ys.push(10.0 * acc[k].max(1e-300).log10());
            }
        }
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
        // peak location
        let mut pk = 1;
        for k in 1..freqs.len() {
            if freqs[k] <= f0 / 2.0 && acc[k] > acc[pk] {
                pk = k;
            }
        }
        println!(
            "drive {:4.1} nA: ratio(f0/2) {:6.2} ratio(f0/4) {:6.2} ratio(f0/8) {:6.2}  low-slope {:+6.2}  peak {:.0} Hz",
            drive * 1e9, ratios[0], ratios[1], ratios[2], slope, freqs[pk]
        );
        let _ = (p_sim, p_mod);
    }
}
