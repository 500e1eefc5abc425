use dbpot::fidigota::{CircuitParams, Digota, OutputDrive};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let p = CircuitParams::vdd04();
    let v_sat = Digota::new(p).unwrap().saturation_input();
    println!("saturation_input = {:.3e} V", v_sat);
    for k in [0, 1, 2, 3, 5, 10, 19] {
        let vd = 0.7 * v_sat * k as f64 / 19.0;
        for shot in [false, true] {
            let mut dg = Digota::new(p).unwrap();
            dg.set_initial_phase(0.37);
            if shot {
                dg.enable_ramp_shot_noise(ChaCha8Rng::seed_from_u64(7));
            }
            let (mut cp, mut cn) = (0u64, 0u64);
            for _ in 0..40_000 {
                match dg.tick(vd) {
                    OutputDrive::P => cp += 1,
                    OutputDrive::N => cn += 1,
                    _ => {}
                }
            }
            println!("vd={:.3e} shot={}  P={} N={}", vd, shot, cp, cn);
        }
    }
}
