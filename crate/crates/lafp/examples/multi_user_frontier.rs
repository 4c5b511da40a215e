//! Three-user rate vectors by dynamic programming: enumerate quantized
//! covariance assignments, memoize each user's rate on the
//! (interference, own, later-users) covariance triple, and keep the
//! Pareto-maximal rate vectors.
//!
//! Run with: cargo run --release --example multi_user_frontier

use lafp::linalg::Mat;
use lafp::region::{multi_user_rates_dp_detailed, GridSpec};
use lafp::scenario::{load_scenario, FadeAtom, UserChannel};

fn main() {
    let mut sc = load_scenario(include_str!("../data/two_user_example.json")).unwrap();
    sc.users.push(UserChannel {
        n_antennas: 1,
        atoms: vec![
            FadeAtom {
                prob: 0.5,
                h: Mat::from_rows(&[vec![0.8, 0.8]]).unwrap(),
            },
            FadeAtom {
                prob: 0.5,
                h: Mat::from_rows(&[vec![2.0, 0.5]]).unwrap(),
            },
        ],
    });

    let grid = GridSpec::new(4, 3, 6).unwrap();
    let (frontier, stats) = multi_user_rates_dp_detailed(&sc, &grid).unwrap();

    println!("Pareto frontier ({} points):", frontier.len());
    let mut sorted = frontier.clone();
    sorted.sort_by(|a, b| b.sum().partial_cmp(&a.sum()).unwrap());
    for p in sorted.iter().take(15) {
        println!(
            "  R = ({:.3}, {:.3}, {:.3})  sum = {:.3}",
            p.rates[0],
            p.rates[1],
            p.rates[2],
            p.sum()
        );
    }
    if sorted.len() > 15 {
        println!("  ... and {} more", sorted.len() - 15);
    }
    println!(
        "\nmemoization: {} distinct rate evaluations, {} reused",
        stats.memo_entries, stats.memo_hits
    );
}
