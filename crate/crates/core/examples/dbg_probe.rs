use dbpot::electrochem::RandlesCell;
use dbpot::fidigota::CircuitParams;
use dbpot::freqmodel::stf;
use dbpot::loopsim::{small_signal_probe, CurrentSource, LoopConfig, NoiseSettings};

fn main() {
    let mut p = CircuitParams::vdd04();
    p.i_p = p.ion;
    p.i_n = p.ion;
    let cfg = LoopConfig {
        params: p,
        cell: RandlesCell::default_microelectrode(),
        source: CurrentSource::Constant(2e-9),
        vref: 0.25,
        duration: 1.0,
        seed: 11,
        noise: NoiseSettings::default(),
        ce_rail: Some(0.6),
    };
    let model = stf(&p, cfg.node_capacitance()).unwrap();
    let f_max = 0.999 * 0.25 / p.t0;
    let mut worst: f64 = 0.0;
    for dec in 0..11 {
        let f_sig = f_max * 10f64.powf(-(dec as f64) / 5.0);
        let pt = small_signal_probe(&cfg, f_sig, 0.6e-9).unwrap();
        let m = model.magnitude(pt.f_hz);
        let err_db = 20.0 * (pt.magnitude / m).log10();
        worst = worst.max(err_db.abs());
        println!("f={:9.2} Hz  model {:8.1}  sim {:8.1}  err {:+6.2} dB", pt.f_hz, m, pt.magnitude, err_db);
    }
    let dc = small_signal_probe(&cfg, 0.0, 0.6e-9).unwrap();
    let err_db = 20.0 * (dc.magnitude / model.dc()).log10();
    println!("DC          model {:8.1}  sim {:8.1}  err {:+6.2} dB", model.dc(), dc.magnitude, err_db);
    println!("worst ac error: {:.2} dB", worst);
}
