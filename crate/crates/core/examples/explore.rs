use hhqed::dynamics::{self, assemble_full, evolve, EvolveOptions};
use hhqed::edge_model::{build_edge_model, EdgeModelOptions};
use hhqed::emitter::{self, EmitterSpec};
use hhqed::lattice::{build_real_space, Flux, LatticeSpec};
use hhqed::spectrum::band_structure;

fn main() {
    let flux9 = Flux::new(1, 9).unwrap();
    let spec9 = LatticeSpec::cylinder(50, 50, 1.0, flux9);
    let bath9 = build_real_space(&spec9).unwrap();
    let band9 = band_structure(&spec9).unwrap();
    let model9 = build_edge_model(&band9, &EdgeModelOptions::default()).unwrap();
    for omega_e in [-3.31f64, -2.16, -1.25] {
        let em = EmitterSpec::local(omega_e, 25, 0.1);
        let full = assemble_full(&bath9, &em).unwrap();
        let traj = evolve(&full, None, &EvolveOptions::new(200.0, 200.0)).unwrap();
        let s = &traj.final_state;
        let edge = dynamics::edge_profile(s, &bath9.grid);
        let (_, rates) = emitter::model_rate(&model9, omega_e, 0.1, 0.0);
        let pred: Vec<f64> = rates.iter().map(|r| (25.0 + r.v_g * 200.0).rem_euclid(50.0)).collect();
        println!("=== omega={omega_e} pred {:?}", pred.iter().map(|p| (p*10.0).round()/10.0).collect::<Vec<_>>());
        let m = edge.iter().cloned().fold(0.0f64, f64::max);
        let sm = smooth(&edge, 2.0);
        let msm = sm.iter().cloned().fold(0.0f64, f64::max);
        for y in 0..50 {
            let bar = "#".repeat((40.0 * edge[y] / m) as usize);
            let sbar = (40.0 * sm[y] / msm) as usize;
            println!("{y:3} {:6.4} {bar:<41} s:{}", edge[y], "*".repeat(sbar));
        }
    }
}

fn smooth(p: &[f64], sigma: f64) -> Vec<f64> {
    let n = p.len() as isize;
    let w = (3.0 * sigma).ceil() as isize;
    (0..n).map(|i| {
        let mut acc = 0.0;
        let mut norm = 0.0;
        for d in -w..=w {
            let g = (-(d as f64).powi(2) / (2.0 * sigma * sigma)).exp();
            acc += g * p[(i + d).rem_euclid(n) as usize];
            norm += g;
        }
        acc / norm
    }).collect()
}
