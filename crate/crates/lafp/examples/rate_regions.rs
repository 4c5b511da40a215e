//! Compute the two-user achievable region twice -- once with the
//! per-realization precoder search and once with the mean-fade dirty-paper
//! precoder -- and print both frontiers plus their best sum rates.
//!
//! The full acceptance-grade grid takes a few minutes; this example uses a
//! lighter grid so it finishes in seconds. Pass `--full` for the default
//! 21x17x18 grid.
//!
//! Run with: cargo run --release --example rate_regions [-- --full]

use lafp::region::{max_sum_rate, two_user_region, GridSpec, RegionMode};
use lafp::scenario::load_scenario;

fn main() {
    let sc = load_scenario(include_str!("../data/two_user_example.json")).unwrap();
    let full = std::env::args().any(|a| a == "--full");
    let grid = if full {
        GridSpec::default_region()
    } else {
        GridSpec::new(11, 9, 12).unwrap()
    };
    println!(
        "grid: {} power splits x {} shapes x {} angles",
        grid.power_splits, grid.shape_steps, grid.angle_steps
    );

    for (name, mode) in [
        ("assignment search", RegionMode::Lafp),
        ("mean-fade baseline", RegionMode::DpcBaseline),
    ] {
        let region = two_user_region(&sc, &grid, mode).unwrap();
        println!("\n{name}: {} frontier points", region.hull.len());
        for p in &region.hull {
            println!("  R1 = {:.4}  R2 = {:.4}", p.rates[0], p.rates[1]);
        }
        println!(
            "  max sum rate = {:.4} bits",
            max_sum_rate(&region).unwrap()
        );
    }
}
