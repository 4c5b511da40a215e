//! Over a deterministic channel, precoding against known interference with
//! the dirty-paper matrix costs nothing: the assignment rate equals the
//! capacity of the channel with the interference removed, for any
//! covariances. This example checks the identity on random instances.
//!
//! Run with: cargo run --release --example dirty_paper_equivalence

use lafp::dirty_paper::{f_dpc, no_interference_capacity};
use lafp::fading_paper::{lafp_rate, NoiseModel, Setting};
use lafp::linalg::{Mat, SymPSD};
use lafp::scenario::{FadeAtom, UserChannel};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn random_pd(n: usize, rng: &mut StdRng) -> SymPSD {
    let a = Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    SymPSD::new(a.matmul(&a.transpose()).add(&Mat::identity(n).scale(0.3))).unwrap()
}

fn main() {
    let mut rng = StdRng::seed_from_u64(0);
    let mut worst = 0.0f64;
    for trial in 0..200 {
        let m = rng.gen_range(1..=3);
        let n = rng.gen_range(1..=3);
        let h = Mat::from_fn(n, m, |_, _| rng.gen_range(-2.0..2.0));
        let sigma_s = random_pd(m, &mut rng);
        let sigma_x = random_pd(m, &mut rng);
        let sigma_z = random_pd(n, &mut rng);

        let f = f_dpc(&h, &sigma_x, &sigma_z).unwrap();
        let setting = Setting {
            sigma_s,
            sigma_sx: Mat::zeros(m, m),
            sigma_x: sigma_x.clone(),
            f,
        };
        let user = UserChannel {
            n_antennas: n,
            atoms: vec![FadeAtom {
                prob: 1.0,
                h: h.clone(),
            }],
        };
        let nz = NoiseModel::new(vec![sigma_z.clone()]).unwrap();

        let with_interference = lafp_rate(&setting, &user, &nz).unwrap();
        let without = no_interference_capacity(&h, &sigma_x, &sigma_z).unwrap();
        let gap = (with_interference - without).abs();
        worst = worst.max(gap);
        if trial < 5 {
            println!(
                "trial {trial}: rate = {with_interference:.6} bits, capacity = {without:.6} bits, gap = {gap:.2e}"
            );
        }
    }
    println!("...");
    println!("worst gap over 200 random instances: {worst:.2e} bits");
}
