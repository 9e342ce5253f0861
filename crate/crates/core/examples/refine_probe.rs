// probe: grid refinement effect across toys/seeds
use pfode_core::gits::*;
use pfode_core::oracles::Dataset;
use pfode_core::schedules::polynomial_grid;
use pfode_core::solvers::{simulate, SolveMethod, SolverConfig};
use pfode_core::vecmath::dist;

fn main() {
    for seed in [71u64, 72, 100, 200] {
        for (name, pts) in [
            ("4pt", vec![vec![4.0,1.0],vec![-3.0,2.0],vec![1.0,-4.0],vec![-2.0,-2.0]]),
        ] {
            let data = Dataset::new(pts).unwrap();
            let eval = warmup_noises::<f64>(64, 2, 80.0, seed + 1);
            let euler = SolverConfig::new(SolveMethod::Euler).without_recording();
            let ref_grid = polynomial_grid(1000, 0.002, 80.0, 7.0).unwrap();
            let refs: Vec<Vec<f64>> = eval.iter().map(|x| simulate(&data, &ref_grid, x, &euler).unwrap().final_state().to_vec()).collect();
            let mean_err = |fine_steps: usize, warmup: usize| -> f64 {
                let params = GitsParams { nfe: 5, fine_steps, warmup, seed, ..GitsParams::default() };
                let schedule = gits_pipeline(&data, &params).unwrap().result.schedule;
                eval.iter().zip(&refs).map(|(x, r)| dist(simulate(&data, &schedule, x, &euler).unwrap().final_state(), r)).sum::<f64>() / eval.len() as f64
            };
            for warmup in [16usize, 64, 128] {
                let c = mean_err(20, warmup);
                let f = mean_err(40, warmup);
                println!("{name} seed={seed} warmup={warmup}: G21 {c:.4} G41 {f:.4} ratio {:.3}", f / c);
            }
        }
    }
}
