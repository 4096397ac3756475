//! Runs the reference 100-trial study and prints the summary.
//!
//! `cargo run --release -p randles-core --example reference_study -- [noisy] [seed]`

use randles::montecarlo::run_study;
use randles::presets::reference_study;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let noisy = args.iter().any(|a| a == "noisy");
    let seed = args
        .iter()
        .find_map(|a| a.parse::<u64>().ok())
        .unwrap_or(0);
    let cfg = reference_study(noisy, seed);
    let (stats, trials) = run_study(&cfg).expect("study runs");
    let Some(stats) = stats else {
        println!("no accepted trials");
        return;
    };
    println!(
        "accepted {} / {} (rejections {:?})",
        stats.accepted_count, stats.trials, stats.reject_counts
    );
    for p in &stats.parameters {
        println!(
            "{:>6}  true {:>9.4}  mean {:>11.6}  std {:>10.3e}  e_r {:>7.3}%",
            p.name, p.truth, p.mean, p.std, p.e_r
        );
    }
    let iters: usize = trials.iter().map(|t| t.iterations).max().unwrap_or(0);
    println!("max iterations {iters}");
}
