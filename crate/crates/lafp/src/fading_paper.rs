//! Linear-assignment fading-paper coding: settings, the Gaussian
//! conditional covariances of the auxiliary variable, the closed-form
//! achievable rate with expectation over the fade, and the precoder search.
//!
//! A *setting* fixes the interference covariance `sigma_s`, the
//! cross-covariance `sigma_sx` between interference and input, the input
//! covariance `sigma_x`, and the assignment matrix `f`; the auxiliary
//! variable is `U = F S + X` and the channel is `Y = H (S + X) + Z` with
//! the fade `H` known to the receiver only. The achievable rate is
//!
//! ```text
//! R = 1/2 log2 det Cov(U|S) - 1/2 E_H[ log2 det Cov(U|Y,H) ]
//! ```
//!
//! which may be negative for a poor choice of `F`; region assembly clamps
//! at zero.

use crate::dirty_paper::f_dpc;
use crate::error::{Error, Result};
use crate::linalg::{logdet, solve_spd, sym_eigen, Mat, SymPSD};
use crate::scenario::{mean_fade, UserChannel};
use serde::{Deserialize, Serialize};

const LN2: f64 = std::f64::consts::LN_2;
/// Conditional covariances with an eigenvalue below this are rejected as
/// degenerate rather than regularized; callers that need to survive
/// rank-deficient covariances add `1e-9 * I` to their inputs first.
const DEGENERATE_EIG: f64 = 1e-12;

/// Linear-assignment parameters `(sigma_s, sigma_sx, sigma_x, f)`.
///
/// The serialized form matches the CLI setting file:
/// `{"sigma_s": [[..]], "sigma_sx": [[..]], "sigma_x": [[..]], "f": [[..]]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Setting {
    pub sigma_s: SymPSD,
    pub sigma_sx: Mat,
    pub sigma_x: SymPSD,
    pub f: Mat,
}

/// A setting minus the assignment matrix; what the precoder search
/// optimizes over.
#[derive(Clone, Debug)]
pub struct SettingBase {
    pub sigma_s: SymPSD,
    pub sigma_sx: Mat,
    pub sigma_x: SymPSD,
}

impl SettingBase {
    pub fn independent(sigma_s: SymPSD, sigma_x: SymPSD) -> Self {
        let m = sigma_s.dim();
        SettingBase {
            sigma_s,
            sigma_sx: Mat::zeros(m, m),
            sigma_x,
        }
    }

    pub fn with_f(&self, f: Mat) -> Setting {
        Setting {
            sigma_s: self.sigma_s.clone(),
            sigma_sx: self.sigma_sx.clone(),
            sigma_x: self.sigma_x.clone(),
            f,
        }
    }
}

impl Setting {
    /// Validate dimensions and that the stacked covariance of `(S, X)` is
    /// positive semidefinite.
    pub fn validate(&self) -> Result<()> {
        let m = self.sigma_s.dim();
        if self.sigma_x.dim() != m
            || self.sigma_sx.rows() != m
            || self.sigma_sx.cols() != m
            || self.f.rows() != m
            || self.f.cols() != m
        {
            return Err(Error::Validation("setting blocks must all be MxM".into()));
        }
        let mut stacked = Mat::zeros(2 * m, 2 * m);
        for i in 0..m {
            for j in 0..m {
                stacked.set(i, j, self.sigma_s.get(i, j));
                stacked.set(i, j + m, self.sigma_sx.get(i, j));
                stacked.set(i + m, j, self.sigma_sx.get(j, i));
                stacked.set(i + m, j + m, self.sigma_x.get(i, j));
            }
        }
        SymPSD::new(stacked)
            .map_err(|_| Error::Validation("stacked (S, X) covariance is not PSD".into()))?;
        Ok(())
    }

    /// `F sigma_s + sigma_sx^T`, the cross-covariance `Cov(U, S)`.
    fn cov_us(&self) -> Mat {
        self.f
            .matmul(self.sigma_s.mat())
            .add(&self.sigma_sx.transpose())
    }

    /// Covariance of the auxiliary variable,
    /// `F sigma_s F^T + F sigma_sx + sigma_sx^T F^T + sigma_x`.
    fn cov_u(&self) -> SymPSD {
        let fs = self
            .f
            .matmul(self.sigma_s.mat())
            .matmul(&self.f.transpose());
        let fc = self.f.matmul(&self.sigma_sx);
        let m = fs.add(&fc).add(&fc.transpose()).add(self.sigma_x.mat());
        SymPSD::from_symmetric_unchecked(m)
    }

    /// `Cov(U, S + X) = F sigma_s + F sigma_sx + sigma_sx^T + sigma_x`.
    fn cov_u_sx(&self) -> Mat {
        self.f
            .matmul(self.sigma_s.mat())
            .add(&self.f.matmul(&self.sigma_sx))
            .add(&self.sigma_sx.transpose())
            .add(self.sigma_x.mat())
    }

    /// `Cov(S + X) = sigma_s + sigma_x + sigma_sx + sigma_sx^T`.
    fn cov_sx(&self) -> SymPSD {
        let m = self
            .sigma_s
            .mat()
            .add(self.sigma_x.mat())
            .add(&self.sigma_sx)
            .add(&self.sigma_sx.transpose());
        SymPSD::from_symmetric_unchecked(m)
    }
}

/// Per-fade-atom effective-noise covariances for one user.
#[derive(Clone, Debug)]
pub struct NoiseModel {
    lams: Vec<SymPSD>,
}

impl NoiseModel {
    /// Identity noise for each atom: the last-encoded user's model.
    pub fn identity(u: &UserChannel) -> Self {
        NoiseModel {
            lams: vec![SymPSD::identity(u.n_antennas); u.atoms.len()],
        }
    }

    /// Effective noise `h * sigma_later * h^T + I` per atom, where
    /// `sigma_later` is the total covariance of later-encoded users.
    pub fn from_interference(u: &UserChannel, sigma_later: &SymPSD) -> Self {
        let lams = u
            .atoms
            .iter()
            .map(|a| {
                SymPSD::from_symmetric_unchecked(
                    sigma_later
                        .congruence(&a.h)
                        .mat()
                        .add(&Mat::identity(u.n_antennas)),
                )
            })
            .collect();
        NoiseModel { lams }
    }

    pub fn new(lams: Vec<SymPSD>) -> Result<Self> {
        if lams.is_empty() {
            return Err(Error::Validation(
                "noise model needs at least one atom".into(),
            ));
        }
        Ok(NoiseModel { lams })
    }

    pub fn lam(&self, atom: usize) -> &SymPSD {
        &self.lams[atom]
    }

    pub fn len(&self) -> usize {
        self.lams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lams.is_empty()
    }

    /// Probability-weighted mean of the per-atom covariances.
    pub fn mean(&self, u: &UserChannel) -> SymPSD {
        let n = self.lams[0].dim();
        let mut acc = Mat::zeros(n, n);
        for (a, lam) in u.atoms.iter().zip(&self.lams) {
            acc = acc.add(&lam.mat().scale(a.prob));
        }
        SymPSD::from_symmetric_unchecked(acc)
    }
}

/// `J = (F sigma_s + sigma_sx^T) sigma_s^-1`, the matrix mapping an
/// interference realization to the conditional mean of the auxiliary
/// variable.
pub fn j_matrix(s: &Setting) -> Result<Mat> {
    let jt = solve_spd(&s.sigma_s, &s.cov_us().transpose())?;
    Ok(jt.transpose())
}

/// Conditional covariance of `U` given `S`.
///
/// For `sigma_sx = 0` this is `sigma_x` exactly (returned without touching
/// the entries). Eigenvalues below 1e-12 are a degenerate setting.
pub fn cond_cov_us(s: &Setting) -> Result<SymPSD> {
    let cov = if s.sigma_sx.is_zero() {
        s.sigma_x.clone()
    } else {
        let g = s.cov_us();
        let solved = solve_spd(&s.sigma_s, &g.transpose())?;
        SymPSD::from_symmetric_unchecked(s.cov_u().mat().sub(&g.matmul(&solved)))
    };
    check_regular(cov, "Cov(U|S)")
}

fn check_regular(cov: SymPSD, what: &str) -> Result<SymPSD> {
    let (eigs, _) = sym_eigen(cov.mat());
    let min = eigs.into_iter().fold(f64::INFINITY, f64::min);
    if min < DEGENERATE_EIG {
        return Err(Error::DegenerateSetting(format!(
            "{what} has eigenvalue {min:e} below {DEGENERATE_EIG:e}"
        )));
    }
    Ok(cov)
}

/// Receiver-side estimator matrix `K(H)` with
/// `Cov(U|Y=y, H) = ... mean K(H) y`:
/// `[Cov(U, S+X) H^T] [H Cov(S+X) H^T + sigma_z]^-1`.
pub fn k_matrix(s: &Setting, h: &Mat, sigma_z: &SymPSD) -> Result<Mat> {
    let cuy = s.cov_u_sx().matmul(&h.transpose());
    let sy = SymPSD::from_symmetric_unchecked(s.cov_sx().congruence(h).mat().add(sigma_z.mat()));
    let kt = solve_spd(&sy, &cuy.transpose())?;
    Ok(kt.transpose())
}

/// Conditional covariance of `U` given the channel output `(Y, H = h)`.
pub fn cond_cov_uyh(s: &Setting, h: &Mat, sigma_z: &SymPSD) -> Result<SymPSD> {
    let cuy = s.cov_u_sx().matmul(&h.transpose());
    let sy = SymPSD::from_symmetric_unchecked(s.cov_sx().congruence(h).mat().add(sigma_z.mat()));
    let solved = solve_spd(&sy, &cuy.transpose())?;
    let cov = SymPSD::from_symmetric_unchecked(s.cov_u().mat().sub(&cuy.matmul(&solved)));
    check_regular(cov, "Cov(U|Y,H)")
}

/// The linear-assignment achievable rate in bits per channel use:
/// `1/2 log2 det Cov(U|S) - sum_atoms p * 1/2 log2 det Cov(U|Y,H)`.
/// May be negative; region assembly clamps at zero.
pub fn lafp_rate(s: &Setting, u: &UserChannel, nz: &NoiseModel) -> Result<f64> {
    assert_eq!(nz.len(), u.atoms.len(), "noise model must cover every atom");
    let ld_us = logdet(&cond_cov_us(s)?)?;
    let mut acc = 0.0;
    for (k, a) in u.atoms.iter().enumerate() {
        acc += a.prob * logdet(&cond_cov_uyh(s, &a.h, nz.lam(k))?)?;
    }
    Ok(0.5 * (ld_us - acc) / LN2)
}

/// Candidate precoders: the dirty-paper matrix at every fade atom (with
/// that atom's effective noise), at the mean fade (with the mean noise),
/// and the zero matrix. Duplicates are removed at 1e-9 entrywise.
pub fn candidate_f_set(u: &UserChannel, sigma_x: &SymPSD, nz: &NoiseModel) -> Result<Vec<Mat>> {
    let mut cands = Vec::with_capacity(u.atoms.len() + 2);
    for (k, a) in u.atoms.iter().enumerate() {
        cands.push(f_dpc(&a.h, sigma_x, nz.lam(k))?);
    }
    cands.push(f_dpc(&mean_fade(u), sigma_x, &nz.mean(u))?);
    cands.push(Mat::zeros(sigma_x.dim(), sigma_x.dim()));
    let mut out: Vec<Mat> = Vec::with_capacity(cands.len());
    for c in cands {
        if !out.iter().any(|o| o.max_abs_diff(&c) < 1e-9) {
            out.push(c);
        }
    }
    Ok(out)
}

/// Controls the optional local refinement of the precoder search.
#[derive(Clone, Debug)]
pub struct AscentConfig {
    /// Initial step along the normalized gradient.
    pub step: f64,
    /// Stop once an accepted step improves the rate by less than this
    /// many bits.
    pub tol_bits: f64,
    pub max_iters: usize,
}

impl Default for AscentConfig {
    fn default() -> Self {
        AscentConfig {
            step: 0.25,
            tol_bits: 1e-6,
            max_iters: 100,
        }
    }
}

/// Maximize the achievable rate over the candidate precoders, optionally
/// refined by numerical ascent. Ties between candidates break on the
/// lexicographically smallest matrix so the winner does not depend on
/// evaluation order. The returned rate is never below the best candidate.
pub fn optimize_f(
    base: &SettingBase,
    u: &UserChannel,
    nz: &NoiseModel,
    refine: Option<&AscentConfig>,
) -> Result<(Mat, f64)> {
    let cands = candidate_f_set(u, &base.sigma_x, nz)?;
    let mut best: Option<(Mat, f64)> = None;
    for f in cands {
        let rate = match lafp_rate(&base.with_f(f.clone()), u, nz) {
            Ok(r) => r,
            Err(Error::DegenerateSetting(_)) | Err(Error::NotPositiveDefinite(_)) => continue,
            Err(e) => return Err(e),
        };
        best = Some(match best {
            None => (f, rate),
            Some((bf, br)) => {
                if rate > br || (rate == br && lex_less(&f, &bf)) {
                    (f, rate)
                } else {
                    (bf, br)
                }
            }
        });
    }
    let (mut f, mut rate) = best.ok_or(Error::AllCandidatesDegenerate)?;
    if let Some(cfg) = refine {
        let trace = ascent_f(base, u, nz, &mut f, rate, cfg);
        rate = *trace.last().unwrap_or(&rate);
    }
    Ok((f, rate))
}

fn lex_less(a: &Mat, b: &Mat) -> bool {
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            if a.get(i, j) != b.get(i, j) {
                return a.get(i, j) < b.get(i, j);
            }
        }
    }
    false
}

/// Gradient ascent over the entries of `F`: central-difference gradient,
/// step halving, stop when the accepted improvement drops below
/// `cfg.tol_bits`. Returns the trace of accepted rates (nondecreasing).
pub(crate) fn ascent_f(
    base: &SettingBase,
    u: &UserChannel,
    nz: &NoiseModel,
    f: &mut Mat,
    start_rate: f64,
    cfg: &AscentConfig,
) -> Vec<f64> {
    let m = f.rows();
    let eval = |f: &Mat| -> Option<f64> { lafp_rate(&base.with_f(f.clone()), u, nz).ok() };
    let mut trace = vec![start_rate];
    let mut rate = start_rate;
    let delta = 1e-6;
    for _ in 0..cfg.max_iters {
        // coordinate-wise central differences
        let mut grad = Mat::zeros(m, m);
        let mut norm2 = 0.0;
        for i in 0..m {
            for j in 0..m {
                let mut fp = f.clone();
                fp.set(i, j, f.get(i, j) + delta);
                let mut fm = f.clone();
                fm.set(i, j, f.get(i, j) - delta);
                let rp = eval(&fp).unwrap_or(f64::NEG_INFINITY);
                let rm = eval(&fm).unwrap_or(f64::NEG_INFINITY);
                if !rp.is_finite() || !rm.is_finite() {
                    continue;
                }
                let g = (rp - rm) / (2.0 * delta);
                grad.set(i, j, g);
                norm2 += g * g;
            }
        }
        let norm = norm2.sqrt();
        if norm < 1e-13 {
            break;
        }
        let dir = grad.scale(1.0 / norm);
        let mut t = cfg.step;
        let mut accepted = None;
        while t > 1e-12 {
            let cand = f.add(&dir.scale(t));
            if let Some(r) = eval(&cand) {
                if r > rate {
                    accepted = Some((cand, r));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((cand, r)) => {
                let gain = r - rate;
                *f = cand;
                rate = r;
                trace.push(rate);
                if gain < cfg.tol_bits {
                    break;
                }
            }
            None => break,
        }
    }
    trace
}
