//! Converts a correlated multi-user signal assignment into an independent
//! one without reducing any user's rate.
//!
//! Successive encoding makes user `l`'s signal depend on the earlier
//! signals only through their sum `S_l`. Splitting off the correlated part
//! by Gram-Schmidt, `X_l = Gamma_l S_l + X'_l`, and pushing the correlated
//! parts down the chain yields independent signals `X^_l = G_l X'_l` with
//! the same total transmit covariance and adjusted assignment matrices
//! `F^_l = G_l (F_l + Gamma_l) B_l`. All constructions operate on second
//! moments; every variable involved is zero-mean Gaussian, so the
//! covariance algebra is exact and no sampling enters.

use crate::error::{Error, Result};
use crate::linalg::{clamp_psd, logdet, solve_spd, Mat, SymPSD};
use crate::scenario::{Scenario, UserChannel};

const LN2: f64 = std::f64::consts::LN_2;

/// A joint Gaussian assignment for `L` successively encoded users: the
/// stacked covariance of `(X_1, ..., X_L)` (blocks of size `m`) and the
/// assignment matrices `F_2, ..., F_L` (user 1 has none).
#[derive(Clone, Debug)]
pub struct JointAssignment {
    pub l_users: usize,
    pub m: usize,
    pub joint_cov: SymPSD,
    pub f_mats: Vec<Mat>,
}

impl JointAssignment {
    pub fn new(l_users: usize, m: usize, joint_cov: SymPSD, f_mats: Vec<Mat>) -> Result<Self> {
        if l_users < 1 || m < 1 {
            return Err(Error::Validation(
                "need at least one user and one antenna".into(),
            ));
        }
        if joint_cov.dim() != l_users * m {
            return Err(Error::Validation(format!(
                "joint covariance must be {}x{0}, got {1}x{1}",
                l_users * m,
                joint_cov.dim()
            )));
        }
        if f_mats.len() + 1 != l_users {
            return Err(Error::Validation(format!(
                "need {} assignment matrices for {} users, got {}",
                l_users - 1,
                l_users,
                f_mats.len()
            )));
        }
        if f_mats.iter().any(|f| f.rows() != m || f.cols() != m) {
            return Err(Error::Validation("assignment matrices must be MxM".into()));
        }
        Ok(JointAssignment {
            l_users,
            m,
            joint_cov,
            f_mats,
        })
    }

    /// Block `Cov(X_i, X_j)`.
    pub fn block(&self, i: usize, j: usize) -> Mat {
        let m = self.m;
        Mat::from_fn(m, m, |r, c| self.joint_cov.get(i * m + r, j * m + c))
    }

    /// Sum of blocks over index ranges: `Cov(sum_{i in rows} X_i, sum_{j in cols} X_j)`.
    fn block_sum(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Mat {
        let mut acc = Mat::zeros(self.m, self.m);
        for i in rows {
            for j in cols.clone() {
                acc = acc.add(&self.block(i, j));
            }
        }
        acc
    }

    /// `Cov(S_l)` where `S_l = sum_{i<l} X_i` (0-based `l`).
    pub fn cov_interference(&self, l: usize) -> SymPSD {
        SymPSD::from_symmetric_unchecked(self.block_sum(0..l, 0..l))
    }

    /// Total transmit covariance `Cov(sum_l X_l)`.
    pub fn total_cov(&self) -> SymPSD {
        SymPSD::from_symmetric_unchecked(self.block_sum(0..self.l_users, 0..self.l_users))
    }
}

/// Regress user `l`'s signal on its interference `S_l`:
/// returns `Gamma_l = Cov(X_l, S_l) Cov(S_l)^-1` and
/// `Cov(X'_l) = Cov(X_l) - Gamma_l Cov(S_l) Gamma_l^T`, so that
/// `X_l = Gamma_l S_l + X'_l` with `X'_l` uncorrelated with `S_l`.
/// `l` is 0-based and must be at least 1.
pub fn gram_schmidt_split(ja: &JointAssignment, l: usize) -> Result<(Mat, SymPSD)> {
    assert!(
        l >= 1 && l < ja.l_users,
        "gram_schmidt_split needs 1 <= l < L"
    );
    let cov_s = ja.cov_interference(l);
    let cov_xs = ja.block_sum(l..l + 1, 0..l); // Cov(X_l, S_l)
    let gamma_t = solve_spd(&cov_s, &cov_xs.transpose())
        .map_err(|_| Error::NotPositiveDefinite(format!("Cov(S_{}) is singular", l + 1)))?;
    let gamma = gamma_t.transpose();
    let reduced = ja
        .block(l, l)
        .sub(&gamma.matmul(cov_s.mat()).matmul(&gamma.transpose()));
    Ok((gamma, clamp_psd(&reduced)))
}

/// Decorrelate an assignment: returns an equivalent assignment whose joint
/// covariance is block-diagonal, with the total transmit covariance
/// preserved and every user's achievable rate at least as large.
pub fn decorrelate_assignment(ja: &JointAssignment) -> Result<JointAssignment> {
    let l_users = ja.l_users;
    let m = ja.m;
    // Gamma_1 is irrelevant (S_1 = 0); use zero
    let mut gammas = vec![Mat::zeros(m, m)];
    let mut reduced = vec![ja.block(0, 0)];
    for l in 1..l_users {
        let (g, r) = gram_schmidt_split(ja, l)?;
        gammas.push(g);
        reduced.push(r.mat().clone());
    }
    // G_l = (I + Gamma_L) ... (I + Gamma_{l+1}), G_L = I  (paper indices);
    // 0-based: g_mats[l] multiplies X'_l
    let mut g_mats = vec![Mat::identity(m); l_users];
    for l in (0..l_users - 1).rev() {
        g_mats[l] = g_mats[l + 1].matmul(&Mat::identity(m).add(&gammas[l + 1]));
    }

    let mut joint = Mat::zeros(l_users * m, l_users * m);
    for l in 0..l_users {
        let cov = g_mats[l].matmul(&reduced[l]).matmul(&g_mats[l].transpose());
        for i in 0..m {
            for j in 0..m {
                joint.set(l * m + i, l * m + j, 0.5 * (cov.get(i, j) + cov.get(j, i)));
            }
        }
    }

    // F^_l = G_l (F_l + Gamma_l) B_l with B_l = Cov(S_l, S^_l) Cov(S^_l)^-1
    // and S^_l = G_{l-1} S_l
    let mut f_hats = Vec::with_capacity(l_users.saturating_sub(1));
    for l in 1..l_users {
        let cov_s = ja.cov_interference(l);
        let g_prev = &g_mats[l - 1];
        let cov_s_hat = cov_s.congruence(g_prev);
        let cov_cross = cov_s.mat().matmul(&g_prev.transpose()); // Cov(S_l, S^_l)
        let b_t = solve_spd(&cov_s_hat, &cov_cross.transpose())
            .map_err(|_| Error::NotPositiveDefinite(format!("Cov(S^_{}) is singular", l + 1)))?;
        let b = b_t.transpose();
        let f_hat = g_mats[l]
            .matmul(&ja.f_mats[l - 1].add(&gammas[l]))
            .matmul(&b);
        f_hats.push(f_hat);
    }

    let out = JointAssignment::new(l_users, m, SymPSD::from_symmetric_unchecked(joint), f_hats)?;
    debug_assert!(
        out.total_cov().mat().max_abs_diff(ja.total_cov().mat()) < 1e-9,
        "total transmit covariance must be preserved"
    );
    Ok(out)
}

/// Exact achievable rate of user `l` (0-based) under a joint assignment,
/// from the full joint covariance: correlations with later-encoded users
/// enter the conditioning, so this is valid for correlated assignments.
/// For an independent assignment it reduces to the closed-form rate with
/// per-atom effective noise.
pub fn joint_user_rate(ja: &JointAssignment, l: usize, u: &UserChannel) -> Result<f64> {
    let m = ja.m;
    let f = if l == 0 {
        Mat::zeros(m, m)
    } else {
        ja.f_mats[l - 1].clone()
    };
    let cov_x = ja.block(l, l);
    let cov_xs = ja.block_sum(l..l + 1, 0..l); // Cov(X_l, S_l)
    let cov_xt = ja.block_sum(l..l + 1, l + 1..ja.l_users); // Cov(X_l, T_l)
    let cov_st = ja.block_sum(0..l, l + 1..ja.l_users); // Cov(S_l, T_l)
    let total = ja.total_cov();

    // Cov(U) and Cov(U|S)
    let (cov_u, cond_us) = if l == 0 {
        (
            SymPSD::from_symmetric_unchecked(cov_x.clone()),
            SymPSD::from_symmetric_unchecked(cov_x.clone()),
        )
    } else {
        let cov_s = ja.cov_interference(l);
        let fs = f.matmul(cov_s.mat());
        let fc = f.matmul(&cov_xs.transpose()); // F Cov(S,X)
        let cov_u_mat = fs
            .matmul(&f.transpose())
            .add(&fc)
            .add(&fc.transpose())
            .add(&cov_x);
        let cov_us = fs.add(&cov_xs); // Cov(U, S) = F Cov(S) + Cov(X, S)
        let solved = solve_spd(&cov_s, &cov_us.transpose())
            .map_err(|_| Error::NotPositiveDefinite(format!("Cov(S_{}) singular", l + 1)))?;
        let cond = cov_u_mat.sub(&cov_us.matmul(&solved));
        (
            SymPSD::from_symmetric_unchecked(cov_u_mat),
            SymPSD::from_symmetric_unchecked(cond),
        )
    };
    if cond_us.min_eigenvalue() < 1e-12 {
        return Err(Error::DegenerateSetting(format!(
            "user {}: Cov(U|S) nearly singular",
            l + 1
        )));
    }
    let ld_us = logdet(&cond_us)?;

    // Cov(U, X_tot) = Cov(U, S) + Cov(U, X) + Cov(U, T)
    let cov_u_xtot = if l == 0 {
        cov_x.add(&cov_xt)
    } else {
        let cov_s = ja.cov_interference(l);
        let cov_us = f.matmul(cov_s.mat()).add(&cov_xs);
        let cov_ux = f.matmul(&cov_xs.transpose()).add(&cov_x);
        let cov_ut = f.matmul(&cov_st).add(&cov_xt);
        cov_us.add(&cov_ux).add(&cov_ut)
    };

    let mut acc = 0.0;
    for a in &u.atoms {
        let cuy = cov_u_xtot.matmul(&a.h.transpose());
        let sy = SymPSD::from_symmetric_unchecked(
            total
                .congruence(&a.h)
                .mat()
                .add(&Mat::identity(u.n_antennas)),
        );
        let solved = solve_spd(&sy, &cuy.transpose())?;
        let cond = SymPSD::from_symmetric_unchecked(cov_u.mat().sub(&cuy.matmul(&solved)));
        if cond.min_eigenvalue() < 1e-12 {
            return Err(Error::DegenerateSetting(format!(
                "user {}: Cov(U|Y,H) nearly singular",
                l + 1
            )));
        }
        acc += a.prob * logdet(&cond)?;
    }
    Ok(0.5 * (ld_us - acc) / LN2)
}

/// Per-user rate comparison between an assignment and its decorrelated
/// counterpart. Users whose setting is degenerate are reported as errors
/// without failing the rest.
pub fn verify_rate_improvement(
    before: &JointAssignment,
    after: &JointAssignment,
    sc: &Scenario,
) -> Result<Vec<Result<(f64, f64)>>> {
    if before.l_users != sc.users.len() || after.l_users != sc.users.len() {
        return Err(Error::WrongUserCount {
            expected: sc.users.len(),
            got: before.l_users,
        });
    }
    if before.m != sc.m_antennas {
        return Err(Error::Validation(
            "assignment antenna count mismatch".into(),
        ));
    }
    let mut out = Vec::with_capacity(sc.users.len());
    for l in 0..sc.users.len() {
        let u = &sc.users[l];
        let pair = joint_user_rate(before, l, u)
            .and_then(|r| joint_user_rate(after, l, u).map(|rh| (r, rh)));
        out.push(pair);
    }
    Ok(out)
}

/// Draw a random successive-encoding assignment: user `l`'s signal is
/// `C_l S_l + V_l` with an arbitrary coupling matrix `C_l` and independent
/// innovation `V_l`, which is exactly the dependence structure produced by
/// encoding against the known interference. Total power is normalized to
/// `power`.
pub fn random_chain_assignment(
    l_users: usize,
    m: usize,
    power: f64,
    rng: &mut impl rand::Rng,
) -> JointAssignment {
    let dim = l_users * m;
    // X = T V with V block-diagonal innovations
    let mut t = Mat::zeros(dim, dim);
    for i in 0..m {
        t.set(i, i, 1.0);
    }
    for l in 1..l_users {
        // rows of X_l = C_l * (rows of S_l) + e_l
        let c = Mat::from_fn(m, m, |_, _| rng.gen_range(-0.6..0.6));
        for col in 0..dim {
            for r in 0..m {
                let mut acc = 0.0;
                for i in 0..l {
                    for k in 0..m {
                        acc += c.get(r, k) * t.get(i * m + k, col);
                    }
                }
                t.set(l * m + r, col, acc);
            }
        }
        for r in 0..m {
            let v = t.get(l * m + r, l * m + r) + 1.0;
            t.set(l * m + r, l * m + r, v);
        }
    }
    let mut v = Mat::zeros(dim, dim);
    for l in 0..l_users {
        let a = Mat::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
        let q = a.matmul(&a.transpose()).add(&Mat::identity(m).scale(0.25));
        for i in 0..m {
            for j in 0..m {
                v.set(l * m + i, l * m + j, q.get(i, j));
            }
        }
    }
    let joint = t.matmul(&v).matmul(&t.transpose());
    let ja = JointAssignment {
        l_users,
        m,
        joint_cov: SymPSD::from_symmetric_unchecked(joint),
        f_mats: (1..l_users)
            .map(|_| Mat::from_fn(m, m, |_, _| rng.gen_range(-0.5..0.5)))
            .collect(),
    };
    let tot = ja.total_cov().trace();
    let scaled = ja.joint_cov.mat().scale(power / tot);
    JointAssignment {
        joint_cov: SymPSD::from_symmetric_unchecked(scaled),
        ..ja
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fading_paper::{lafp_rate, NoiseModel, Setting, SettingBase};
    use crate::scenario::{example_scenario_json, load_scenario, FadeAtom};
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn three_user_scenario() -> Scenario {
        let mut sc = load_scenario(example_scenario_json()).unwrap();
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
        sc
    }

    fn independent_assignment(rng: &mut StdRng, l_users: usize, m: usize) -> JointAssignment {
        let dim = l_users * m;
        let mut joint = Mat::zeros(dim, dim);
        for l in 0..l_users {
            let a = Mat::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
            let q = a.matmul(&a.transpose()).add(&Mat::identity(m).scale(0.3));
            for i in 0..m {
                for j in 0..m {
                    joint.set(l * m + i, l * m + j, q.get(i, j));
                }
            }
        }
        JointAssignment::new(
            l_users,
            m,
            SymPSD::new(joint).unwrap(),
            (1..l_users)
                .map(|_| Mat::from_fn(m, m, |_, _| rng.gen_range(-0.5..0.5)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn split_of_independent_blocks_is_trivial() {
        let mut rng = StdRng::seed_from_u64(1);
        let ja = independent_assignment(&mut rng, 2, 2);
        let (gamma, cov_xp) = gram_schmidt_split(&ja, 1).unwrap();
        assert!(gamma.max_abs() < 1e-12);
        assert!(cov_xp.mat().max_abs_diff(&ja.block(1, 1)) < 1e-12);
    }

    #[test]
    fn split_of_perfectly_correlated_scalar() {
        // X_2 = X_1, unit variance
        let joint = Mat::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let ja = JointAssignment::new(
            2,
            1,
            SymPSD::new(joint).unwrap(),
            vec![Mat::from_rows(&[vec![0.3]]).unwrap()],
        )
        .unwrap();
        let (gamma, cov_xp) = gram_schmidt_split(&ja, 1).unwrap();
        assert_relative_eq!(gamma.get(0, 0), 1.0, epsilon = 1e-12);
        assert!(cov_xp.get(0, 0).abs() < 1e-12);
    }

    #[test]
    fn split_orthogonality_residual() {
        let mut rng = StdRng::seed_from_u64(2);
        for _ in 0..20 {
            let ja = random_chain_assignment(3, 2, 10.0, &mut rng);
            for l in 1..3 {
                let (gamma, _) = gram_schmidt_split(&ja, l).unwrap();
                // Cov(X' , S) = Cov(X, S) - Gamma Cov(S)
                let cov_s = ja.cov_interference(l);
                let resid = ja.block_sum(l..l + 1, 0..l).sub(&gamma.matmul(cov_s.mat()));
                assert!(resid.max_abs() < 1e-10, "residual {:?}", resid);
            }
        }
    }

    #[test]
    fn decorrelate_independent_is_identity() {
        let mut rng = StdRng::seed_from_u64(3);
        let ja = independent_assignment(&mut rng, 3, 2);
        let out = decorrelate_assignment(&ja).unwrap();
        assert!(out.joint_cov.mat().max_abs_diff(ja.joint_cov.mat()) < 1e-10);
        for (a, b) in out.f_mats.iter().zip(&ja.f_mats) {
            assert!(a.max_abs_diff(b) < 1e-10);
        }
    }

    #[test]
    fn decorrelate_two_user_scalar_correlation() {
        let joint = Mat::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let ja = JointAssignment::new(
            2,
            1,
            SymPSD::new(joint).unwrap(),
            vec![Mat::from_rows(&[vec![0.4]]).unwrap()],
        )
        .unwrap();
        let out = decorrelate_assignment(&ja).unwrap();
        assert!(
            out.block(0, 1).max_abs() < 1e-12,
            "off-diagonal must vanish"
        );
        assert_relative_eq!(
            out.total_cov().get(0, 0),
            ja.total_cov().get(0, 0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn decorrelated_output_is_block_diagonal() {
        let mut rng = StdRng::seed_from_u64(4);
        for _ in 0..20 {
            let ja = random_chain_assignment(3, 2, 10.0, &mut rng);
            let out = decorrelate_assignment(&ja).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        assert!(out.block(i, j).max_abs() < 1e-10);
                    }
                }
            }
            assert!(out.total_cov().mat().max_abs_diff(ja.total_cov().mat()) < 1e-9);
        }
    }

    #[test]
    fn interference_covariance_transforms_by_g() {
        // Cov(S^_l) = G_{l-1} Cov(S_l) G_{l-1}^T
        let mut rng = StdRng::seed_from_u64(5);
        let ja = random_chain_assignment(3, 2, 10.0, &mut rng);
        let out = decorrelate_assignment(&ja).unwrap();
        // recompute the G chain
        let mut gammas = vec![Mat::zeros(2, 2)];
        for l in 1..3 {
            gammas.push(gram_schmidt_split(&ja, l).unwrap().0);
        }
        let mut g = vec![Mat::identity(2); 3];
        for l in (0..2).rev() {
            g[l] = g[l + 1].matmul(&Mat::identity(2).add(&gammas[l + 1]));
        }
        for l in 1..3 {
            let lhs = out.cov_interference(l);
            let rhs = ja.cov_interference(l).congruence(&g[l - 1]);
            assert!(lhs.mat().max_abs_diff(rhs.mat()) < 1e-9);
        }
    }

    #[test]
    fn independent_assignment_rates_match_closed_form() {
        // for an independent assignment the joint-covariance rate must equal
        // the closed-form rate with per-atom effective noise
        let mut rng = StdRng::seed_from_u64(6);
        let sc = three_user_scenario();
        let ja = independent_assignment(&mut rng, 3, 2);
        for l in 1..3 {
            let exact = joint_user_rate(&ja, l, &sc.users[l]).unwrap();
            let sigma_s = ja.cov_interference(l);
            let sigma_later = SymPSD::from_symmetric_unchecked(ja.block_sum(l + 1..3, l + 1..3));
            let nz = NoiseModel::from_interference(&sc.users[l], &sigma_later);
            let setting = Setting {
                sigma_s,
                sigma_sx: Mat::zeros(2, 2),
                sigma_x: SymPSD::from_symmetric_unchecked(ja.block(l, l)),
                f: ja.f_mats[l - 1].clone(),
            };
            let closed = lafp_rate(&setting, &sc.users[l], &nz).unwrap();
            assert_relative_eq!(exact, closed, epsilon = 1e-10);
        }
        // first user: joint rate equals the interference-as-noise rate
        let exact0 = joint_user_rate(&ja, 0, &sc.users[0]).unwrap();
        let later = SymPSD::from_symmetric_unchecked(ja.block_sum(1..3, 1..3));
        let closed0 = crate::region::r1_rate(
            &SymPSD::from_symmetric_unchecked(ja.block(0, 0)),
            &later,
            &sc.users[0],
        )
        .unwrap();
        assert_relative_eq!(exact0, closed0, epsilon = 1e-10);
        let _ = SettingBase::independent(SymPSD::identity(2), SymPSD::identity(2));
    }

    #[test]
    fn verify_identity_on_independent_input() {
        let mut rng = StdRng::seed_from_u64(7);
        let sc = load_scenario(example_scenario_json()).unwrap();
        let ja = independent_assignment(&mut rng, 2, 2);
        let out = decorrelate_assignment(&ja).unwrap();
        let pairs = verify_rate_improvement(&ja, &out, &sc).unwrap();
        for p in pairs {
            let (r, rh) = p.unwrap();
            assert_relative_eq!(r, rh, epsilon = 1e-10);
        }
    }

    #[test]
    fn rates_never_drop_across_decorrelation() {
        let mut rng = StdRng::seed_from_u64(8);
        let sc2 = load_scenario(example_scenario_json()).unwrap();
        let sc3 = three_user_scenario();
        for trial in 0..100 {
            let (sc, l) = if trial % 2 == 0 { (&sc2, 2) } else { (&sc3, 3) };
            let ja = random_chain_assignment(l, 2, 10.0, &mut rng);
            let out = decorrelate_assignment(&ja).unwrap();
            for (idx, pair) in verify_rate_improvement(&ja, &out, sc)
                .unwrap()
                .into_iter()
                .enumerate()
            {
                if let Ok((r, rh)) = pair {
                    assert!(rh >= r - 1e-9, "trial {trial} user {idx}: {rh} < {r}");
                }
            }
        }
    }

    #[test]
    fn degenerate_user_flagged_without_failing_others() {
        // user 2 perfectly correlated with user 1 makes its reduced input
        // covariance singular after decorrelation
        let joint = Mat::from_rows(&[
            vec![1.0, 1.0, 0.0],
            vec![1.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let ja = JointAssignment::new(
            3,
            1,
            SymPSD::new(joint).unwrap(),
            vec![
                Mat::from_rows(&[vec![0.2]]).unwrap(),
                Mat::from_rows(&[vec![0.1]]).unwrap(),
            ],
        )
        .unwrap();
        let out = decorrelate_assignment(&ja).unwrap();
        let sc = {
            let mut sc = three_user_scenario();
            for u in sc.users.iter_mut() {
                for a in u.atoms.iter_mut() {
                    a.h = Mat::from_fn(1, 1, |_, _| a.h.get(0, 0));
                }
            }
            sc.m_antennas = 1;
            sc
        };
        let pairs = verify_rate_improvement(&ja, &out, &sc).unwrap();
        assert!(pairs[1].is_err(), "user 2 must be flagged degenerate");
        assert!(
            pairs[0].is_ok() && pairs[2].is_ok(),
            "others still reported"
        );
    }
}
