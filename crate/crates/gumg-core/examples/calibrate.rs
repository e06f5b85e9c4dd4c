//! Prints the evaluation trace of one preset experiment; handy for tuning
//! target sharpness and eyeballing convergence speed.
//!
//! Usage: `cargo run --release -p gumg-core --example calibrate -- imitation [seed] [iters]`

use gumg_core::learner::run;
use gumg_core::presets;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(String::as_str).unwrap_or("imitation");
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    let iters: Option<usize> = args.get(3).and_then(|s| s.parse().ok());

    let mut exp = match which {
        "imitation" => presets::imitation_grid(seed).unwrap(),
        "coverage" => presets::coverage_grid(seed).unwrap(),
        "exploration" => presets::exploration_grid(seed).unwrap(),
        other => {
            eprintln!("unknown experiment {other}");
            std::process::exit(2);
        }
    };
    if let Some(t) = iters {
        exp.config.iterations = t;
    }

    let trace = run(&exp.game, &exp.utilities, &exp.config, None).unwrap();
    println!("iter,potential,ne_gap,grad_map_norm,occ_gap,kl_occ_gap,samples,wall_s");
    for p in &trace.points {
        println!(
            "{},{},{},{},{},{},{},{:.1}",
            p.iter,
            p.potential.map(|x| format!("{x:.6}")).unwrap_or_default(),
            p.ne_gap.map(|x| format!("{x:.6}")).unwrap_or_default(),
            p.grad_map_norm,
            p.occ_gap.map(|x| format!("{x:.6}")).unwrap_or_default(),
            p.kl_occ_gap.map(|x| format!("{x:.6}")).unwrap_or_default(),
            p.samples,
            p.wall_clock_s,
        );
    }
}
