//! Evaluate one concrete operating point of the bundled two-user channel:
//! both users beamform with rank-one covariances (regularized to stay
//! positive definite) and the second-encoded user pre-cancels the first
//! user's signal through a linear assignment. The printed sum lands near
//! 2.86 bits per channel use.
//!
//! Run with: cargo run --release --example two_user_operating_point

use lafp::fading_paper::{candidate_f_set, lafp_rate, NoiseModel, Setting};
use lafp::linalg::{Mat, SymPSD};
use lafp::region::r1_rate;
use lafp::scenario::load_scenario;

fn main() {
    let sc = load_scenario(include_str!("../data/two_user_example.json")).unwrap();

    // covariances of the two transmit signals (eps keeps them PD)
    let eps = 1e-3;
    let sigma1 =
        SymPSD::new(Mat::from_rows(&[vec![1.0, 2.0 - eps], vec![2.0 - eps, 4.0]]).unwrap())
            .unwrap();
    let sigma2 =
        SymPSD::new(Mat::from_rows(&[vec![4.5, -1.5 + eps], vec![-1.5 + eps, 0.5]]).unwrap())
            .unwrap();

    // user 1 decodes with user 2's signal as noise
    let r1 = r1_rate(&sigma1, &sigma2, &sc.users[0]).unwrap();

    // user 2 pre-cancels user 1's signal; try every candidate precoder
    let u2 = &sc.users[1];
    let nz = NoiseModel::identity(u2);
    let mut best = (f64::NEG_INFINITY, Mat::zeros(2, 2));
    for f in candidate_f_set(u2, &sigma2, &nz).unwrap() {
        let setting = Setting {
            sigma_s: sigma1.clone(),
            sigma_sx: Mat::zeros(2, 2),
            sigma_x: sigma2.clone(),
            f: f.clone(),
        };
        if let Ok(r) = lafp_rate(&setting, u2, &nz) {
            println!("candidate F = {:?} -> R2 = {r:.4} bits", f.to_rows());
            if r > best.0 {
                best = (r, f);
            }
        }
    }
    println!();
    println!("R1 = {r1:.4} bits");
    println!("R2 = {:.4} bits with F = {:?}", best.0, best.1.to_rows());
    println!("sum = {:.4} bits per channel use", r1 + best.0);
}
