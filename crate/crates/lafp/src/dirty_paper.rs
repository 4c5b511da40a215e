//! Dirty-paper precoding for a fixed channel: the optimal interference
//! pre-subtraction matrix, its LMMSE factorization, and the capacity of
//! the matching no-interference channel.

use crate::error::Result;
use crate::linalg::{logdet, solve_spd, Mat, SymPSD};

const LN2: f64 = std::f64::consts::LN_2;

/// Receive-side covariance `h * sigma_x * h^T + sigma_z`.
fn output_cov(h: &Mat, sigma_x: &SymPSD, sigma_z: &SymPSD) -> SymPSD {
    SymPSD::from_symmetric_unchecked(sigma_x.congruence(h).mat().add(sigma_z.mat()))
}

/// The precoding matrix `sigma_x * h^T * (h sigma_x h^T + sigma_z)^-1 * h`
/// that makes known interference cost nothing over the fixed channel `h`.
pub fn f_dpc(h: &Mat, sigma_x: &SymPSD, sigma_z: &SymPSD) -> Result<Mat> {
    Ok(lmmse_matrix(h, sigma_x, sigma_z)?.matmul(h))
}

/// LMMSE estimator matrix `W = sigma_x h^T (h sigma_x h^T + sigma_z)^-1`
/// of the input from the no-interference output; satisfies
/// `f_dpc = W * h` exactly.
pub fn lmmse_matrix(h: &Mat, sigma_x: &SymPSD, sigma_z: &SymPSD) -> Result<Mat> {
    let sy = output_cov(h, sigma_x, sigma_z);
    // W^T = sy^-1 * (h * sigma_x)
    let wt = solve_spd(&sy, &h.matmul(sigma_x.mat()))?;
    Ok(wt.transpose())
}

/// Capacity of the no-interference channel `y = h x + z` with Gaussian
/// input covariance `sigma_x`, in bits:
/// `1/2 log2 det(I + sigma_z^-1 h sigma_x h^T)`.
pub fn no_interference_capacity(h: &Mat, sigma_x: &SymPSD, sigma_z: &SymPSD) -> Result<f64> {
    let sy = output_cov(h, sigma_x, sigma_z);
    Ok(0.5 * (logdet(&sy)? - logdet(sigma_z)?) / LN2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn rand_pd(n: usize, rng: &mut StdRng) -> SymPSD {
        let a = Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        SymPSD::new(a.matmul(&a.transpose()).add(&Mat::identity(n).scale(0.4))).unwrap()
    }

    #[test]
    fn identity_channel_halves() {
        let f = f_dpc(
            &Mat::identity(2),
            &SymPSD::identity(2),
            &SymPSD::identity(2),
        )
        .unwrap();
        assert!(f.max_abs_diff(&Mat::identity(2).scale(0.5)) < 1e-12);
        let w = lmmse_matrix(
            &Mat::identity(2),
            &SymPSD::identity(2),
            &SymPSD::identity(2),
        )
        .unwrap();
        assert!(w.max_abs_diff(&Mat::identity(2).scale(0.5)) < 1e-12);
    }

    #[test]
    fn zero_input_gives_zero_precoder() {
        let f = f_dpc(
            &Mat::from_rows(&[vec![1.0, 2.0]]).unwrap(),
            &SymPSD::zeros(2),
            &SymPSD::identity(1),
        )
        .unwrap();
        assert!(f.max_abs() < 1e-15);
    }

    #[test]
    fn scalar_case() {
        let h = Mat::from_rows(&[vec![1.0]]).unwrap();
        let one = SymPSD::identity(1);
        let f = f_dpc(&h, &one, &one).unwrap();
        assert_relative_eq!(f.get(0, 0), 0.5, epsilon = 1e-14);
        assert_relative_eq!(
            no_interference_capacity(&h, &one, &one).unwrap(),
            0.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn f_dpc_is_w_times_h() {
        let mut rng = StdRng::seed_from_u64(1);
        for _ in 0..50 {
            let n = rng.gen_range(1..=3);
            let m = rng.gen_range(1..=3);
            let h = Mat::from_fn(n, m, |_, _| rng.gen_range(-2.0..2.0));
            let sx = rand_pd(m, &mut rng);
            let sz = rand_pd(n, &mut rng);
            let f = f_dpc(&h, &sx, &sz).unwrap();
            let wh = lmmse_matrix(&h, &sx, &sz).unwrap().matmul(&h);
            assert!(f.max_abs_diff(&wh) < 1e-12);
        }
    }

    #[test]
    fn lmmse_vanishes_at_low_snr() {
        let h = Mat::from_rows(&[vec![1.0, -0.5], vec![0.3, 2.0]]).unwrap();
        let sx = SymPSD::identity(2);
        let sz = SymPSD::identity(2).scale(1e9).unwrap();
        let w = lmmse_matrix(&h, &sx, &sz).unwrap();
        assert!(w.max_abs() < 1e-8);
    }

    #[test]
    fn capacity_trivial_values() {
        let z2 = SymPSD::identity(2);
        assert_relative_eq!(
            no_interference_capacity(&Mat::identity(2), &SymPSD::zeros(2), &z2).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        let c = no_interference_capacity(
            &Mat::identity(2),
            &SymPSD::identity(2).scale(5.0).unwrap(),
            &z2,
        )
        .unwrap();
        assert_relative_eq!(c, 6.0f64.log2(), epsilon = 1e-12);
    }
}
