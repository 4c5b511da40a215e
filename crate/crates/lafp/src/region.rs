//! Rate-region assembly: covariance grids, the first-encoded user's rate,
//! the two-user region for both precoder modes, a multi-user dynamic
//! program with memoized per-user rates, and the convex-hull frontier.

use crate::error::{Error, Result};
use crate::fading_paper::{optimize_f, AscentConfig, NoiseModel, SettingBase};
use crate::linalg::{logdet, Mat, SymPSD};
use crate::scenario::{Scenario, UserChannel};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

const LN2: f64 = std::f64::consts::LN_2;
/// Ridge added to grid covariances before rate evaluation so rank-deficient
/// shapes stay on the regular side of the degeneracy checks.
const RIDGE: f64 = 1e-9;

/// A vector of per-user rates in bits per channel use.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub rates: Vec<f64>,
}

impl RatePoint {
    pub fn sum(&self) -> f64 {
        self.rates.iter().sum()
    }

    /// Componentwise `self <= other` with at least one strict inequality.
    fn dominated_by(&self, other: &RatePoint) -> bool {
        self.rates.iter().zip(&other.rates).all(|(a, b)| a <= b)
            && self.rates.iter().zip(&other.rates).any(|(a, b)| a < b)
    }
}

/// An achievable region: the evaluated rate points plus the convex-hull
/// frontier (time-sharing closure), sorted by first coordinate.
#[derive(Clone, Debug)]
pub struct Region {
    pub raw_points: Vec<RatePoint>,
    pub hull: Vec<RatePoint>,
}

/// Grid resolution for the covariance search.
#[derive(Clone, Copy, Debug)]
pub struct GridSpec {
    pub power_splits: usize,
    pub shape_steps: usize,
    pub angle_steps: usize,
}

impl GridSpec {
    pub fn new(power_splits: usize, shape_steps: usize, angle_steps: usize) -> Result<Self> {
        if power_splits < 1 || shape_steps < 1 || angle_steps < 1 {
            return Err(Error::Validation("grid counts must be >= 1".into()));
        }
        Ok(GridSpec {
            power_splits,
            shape_steps,
            angle_steps,
        })
    }

    /// The resolution used by the acceptance runs.
    pub fn default_region() -> Self {
        GridSpec {
            power_splits: 21,
            shape_steps: 17,
            angle_steps: 18,
        }
    }
}

/// Which precoder the second-encoded user gets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegionMode {
    /// Best candidate precoder per cell (optionally ascent-refined).
    Lafp,
    /// Dirty-paper precoder matched to the mean fade.
    DpcBaseline,
}

/// Options beyond the grid itself.
#[derive(Clone, Debug)]
pub struct RegionOptions {
    /// Re-evaluate this many of the best sum-rate cells with ascent
    /// refinement of the precoder. Zero disables refinement.
    pub refine_top: usize,
    pub seed: u64,
}

impl Default for RegionOptions {
    fn default() -> Self {
        RegionOptions {
            refine_top: 50,
            seed: 0,
        }
    }
}

/// Covariance shapes with a fixed trace.
///
/// For `m == 2` this is the rotation/eigenvalue grid
/// `R(theta) diag(t f, t (1-f)) R(theta)^T` over `shape_steps` values of
/// `f` in `[0, 1]` and `angle_steps` angles in `[0, pi)`. `m == 1` has a
/// single shape. Larger `m` has no grid mode; use [`psd_sample`].
pub fn psd_grid(m: usize, trace_budget: f64, g: &GridSpec) -> Result<Vec<SymPSD>> {
    if trace_budget < 0.0 || !trace_budget.is_finite() {
        return Err(Error::Validation(format!(
            "bad trace budget {trace_budget}"
        )));
    }
    match m {
        1 => Ok(vec![SymPSD::diag(&[trace_budget])?]),
        2 => {
            if trace_budget == 0.0 {
                return Ok(vec![SymPSD::zeros(2)]);
            }
            let mut out = Vec::with_capacity(g.shape_steps * g.angle_steps);
            for fi in 0..g.shape_steps {
                let f = if g.shape_steps == 1 {
                    0.5
                } else {
                    fi as f64 / (g.shape_steps - 1) as f64
                };
                let (l1, l2) = (trace_budget * f, trace_budget * (1.0 - f));
                for ai in 0..g.angle_steps {
                    let th = std::f64::consts::PI * ai as f64 / g.angle_steps as f64;
                    let (c, s) = (th.cos(), th.sin());
                    let rot = Mat::from_rows(&[vec![c, -s], vec![s, c]]).unwrap();
                    let d = SymPSD::diag(&[l1, l2])?;
                    out.push(d.congruence(&rot));
                }
            }
            Ok(out)
        }
        _ => Err(Error::UnsupportedDimension(format!(
            "psd_grid supports m in {{1, 2}}, got {m}; use psd_sample for larger m"
        ))),
    }
}

/// Random PSD shapes with a fixed trace for `m > 2`: Cholesky factors with
/// standard normal entries, rescaled onto the trace sphere.
pub fn psd_sample(m: usize, trace_budget: f64, count: usize, rng: &mut ChaCha8Rng) -> Vec<SymPSD> {
    if trace_budget == 0.0 {
        return vec![SymPSD::zeros(m)];
    }
    (0..count)
        .map(|_| {
            let mut l = Mat::zeros(m, m);
            for i in 0..m {
                for j in 0..=i {
                    l.set(i, j, gauss(rng));
                }
            }
            let a = l.matmul(&l.transpose());
            let t = a.trace().max(1e-12);
            SymPSD::from_symmetric_unchecked(a.scale(trace_budget / t))
        })
        .collect()
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Rate of a user that decodes with later-encoded signals as noise:
/// `1/2 E_H log2 det(I + (h sigma2 h^T + I)^-1 h sigma1 h^T)`, which for a
/// single receive antenna is `1/2 E_H log2(1 + h s1 h^T / (h s2 h^T + 1))`.
pub fn r1_rate(sigma1: &SymPSD, sigma2: &SymPSD, u: &UserChannel) -> Result<f64> {
    let n = u.n_antennas;
    let eye = Mat::identity(n);
    let mut acc = 0.0;
    for a in &u.atoms {
        let intf = SymPSD::from_symmetric_unchecked(sigma2.congruence(&a.h).mat().add(&eye));
        let tot = SymPSD::from_symmetric_unchecked(sigma1.congruence(&a.h).mat().add(intf.mat()));
        acc += a.prob * (logdet(&tot)? - logdet(&intf)?);
    }
    Ok(0.5 * acc / LN2)
}

/// Ridge nonzero matrices; an exactly-zero covariance means a silent
/// signal and must yield exactly-zero rates, not ridge-sized ones.
fn regularized(s: &SymPSD) -> SymPSD {
    if s.mat().is_zero() {
        s.clone()
    } else {
        s.add_scaled_identity(RIDGE)
    }
}

struct CellKey {
    order: usize,
    split: usize,
    a_idx: usize,
    b_idx: usize,
}

/// The two-user achievable region for one precoder mode.
///
/// Both encoding orders are enumerated. For each order the power split
/// over `power_splits` fractions and both users' covariance shapes over
/// [`psd_grid`] are searched; the first-encoded user's rate comes from
/// [`r1_rate`] with the second user's signal as interference, the second
/// user's from the closed-form assignment rate with the mode's precoder.
/// The best `refine_top` cells by sum rate are re-evaluated with ascent
/// refinement of the precoder. Negative rates clamp to zero.
pub fn two_user_region(sc: &Scenario, g: &GridSpec, mode: RegionMode) -> Result<Region> {
    two_user_region_with(sc, g, mode, &RegionOptions::default())
}

pub fn two_user_region_with(
    sc: &Scenario,
    g: &GridSpec,
    mode: RegionMode,
    opts: &RegionOptions,
) -> Result<Region> {
    sc.validate()?;
    if sc.users.len() != 2 {
        return Err(Error::WrongUserCount {
            expected: 2,
            got: sc.users.len(),
        });
    }
    let m = sc.m_antennas;
    if m > 2 {
        return Err(Error::UnsupportedDimension(
            "two_user_region grid mode supports m <= 2".into(),
        ));
    }
    let k = g.power_splits.max(1);
    let mut raw: Vec<RatePoint> = Vec::new();
    let mut all_cells: Vec<(f64, CellKey)> = Vec::new();

    for order in 0..2usize {
        let (first, second) = if order == 0 { (0, 1) } else { (1, 0) };
        let u_first = &sc.users[first];
        let u_second = &sc.users[second];
        for split in 0..k {
            // budgets written exactly as the dynamic program computes its
            // trace steps, so shared cells match bit for bit
            let (budget_first, budget_second) = if k == 1 {
                (0.5 * sc.power, 0.5 * sc.power)
            } else {
                (
                    sc.power * split as f64 / (k - 1) as f64,
                    sc.power * (k - 1 - split) as f64 / (k - 1) as f64,
                )
            };
            let grid_a: Vec<SymPSD> = psd_grid(m, budget_first, g)?
                .iter()
                .map(regularized)
                .collect();
            let grid_b: Vec<SymPSD> = psd_grid(m, budget_second, g)?
                .iter()
                .map(regularized)
                .collect();
            let nz = NoiseModel::identity(u_second);

            // cells evaluated in parallel, gathered in index order
            let cells: Vec<(usize, usize, f64, f64)> = grid_b
                .par_iter()
                .enumerate()
                .flat_map_iter(|(bi, sb)| {
                    grid_a
                        .iter()
                        .enumerate()
                        .map(|(ai, sa)| {
                            let ra = r1_rate(sa, sb, u_first).unwrap_or(0.0).max(0.0);
                            let rb = second_user_rate(sa, sb, u_second, &nz, mode, None)
                                .unwrap_or(0.0)
                                .max(0.0);
                            (ai, bi, ra, rb)
                        })
                        .collect::<Vec<_>>()
                })
                .collect();

            // keep each slice's Pareto frontier; dominated cells change
            // neither the hull nor the max sum rate
            let mut slice = cells;
            slice.sort_by(|x, y| {
                y.2.partial_cmp(&x.2)
                    .unwrap()
                    .then(y.3.partial_cmp(&x.3).unwrap())
                    .then(x.0.cmp(&y.0))
                    .then(x.1.cmp(&y.1))
            });
            let mut best_rb = f64::NEG_INFINITY;
            for &(ai, bi, ra, rb) in &slice {
                all_cells.push((
                    ra + rb,
                    CellKey {
                        order,
                        split,
                        a_idx: ai,
                        b_idx: bi,
                    },
                ));
                if rb > best_rb {
                    best_rb = rb;
                    let mut rates = vec![0.0; 2];
                    rates[first] = ra;
                    rates[second] = rb;
                    raw.push(RatePoint { rates });
                }
            }
        }
    }

    // ascent refinement of the precoder on the best cells; the baseline
    // precoder is fully determined, so refinement only applies to lafp
    if opts.refine_top > 0 && mode == RegionMode::Lafp {
        all_cells.sort_by(|x, y| {
            y.0.partial_cmp(&x.0)
                .unwrap()
                .then(x.1.order.cmp(&y.1.order))
                .then(x.1.split.cmp(&y.1.split))
                .then(x.1.a_idx.cmp(&y.1.a_idx))
                .then(x.1.b_idx.cmp(&y.1.b_idx))
        });
        let cfg = AscentConfig::default();
        let top: Vec<&CellKey> = all_cells
            .iter()
            .take(opts.refine_top)
            .map(|c| &c.1)
            .collect();
        let refined: Vec<RatePoint> = top
            .par_iter()
            .filter_map(|cell| {
                let (first, second) = if cell.order == 0 { (0, 1) } else { (1, 0) };
                let (budget_first, budget_second) = if k == 1 {
                    (0.5 * sc.power, 0.5 * sc.power)
                } else {
                    (
                        sc.power * cell.split as f64 / (k - 1) as f64,
                        sc.power * (k - 1 - cell.split) as f64 / (k - 1) as f64,
                    )
                };
                let ga = psd_grid(m, budget_first, g).ok()?;
                let gb = psd_grid(m, budget_second, g).ok()?;
                let sa = regularized(&ga[cell.a_idx.min(ga.len() - 1)]);
                let sb = regularized(&gb[cell.b_idx.min(gb.len() - 1)]);
                let u_first = &sc.users[first];
                let u_second = &sc.users[second];
                let nz = NoiseModel::identity(u_second);
                let ra = r1_rate(&sa, &sb, u_first).ok()?.max(0.0);
                let rb = second_user_rate(&sa, &sb, u_second, &nz, mode, Some(&cfg))
                    .unwrap_or(0.0)
                    .max(0.0);
                let mut rates = vec![0.0; 2];
                rates[first] = ra;
                rates[second] = rb;
                Some(RatePoint { rates })
            })
            .collect();
        raw.extend(refined);
    }

    let hull = convex_hull(&raw);
    Ok(Region {
        raw_points: raw,
        hull,
    })
}

fn second_user_rate(
    sigma_s: &SymPSD,
    sigma_x: &SymPSD,
    u: &UserChannel,
    nz: &NoiseModel,
    mode: RegionMode,
    refine: Option<&AscentConfig>,
) -> Result<f64> {
    // a silent interferer leaves an ill-posed conditioning variable;
    // substitute the ridge so the limit is the no-interference rate
    let sigma_s = if sigma_s.mat().is_zero() {
        SymPSD::identity(sigma_s.dim()).scale(RIDGE)?
    } else {
        sigma_s.clone()
    };
    let base = SettingBase::independent(sigma_s, sigma_x.clone());
    match mode {
        RegionMode::Lafp => optimize_f(&base, u, nz, refine).map(|(_, r)| r),
        RegionMode::DpcBaseline => {
            let f =
                crate::dirty_paper::f_dpc(&crate::scenario::mean_fade(u), sigma_x, &nz.mean(u))?;
            crate::fading_paper::lafp_rate(&base.with_f(f), u, nz)
        }
    }
}

/// Upper-right convex frontier of 2-D rate points with the time-sharing
/// closure: the Pareto-nondominated vertices of the convex hull of the
/// points, their axis projections, and the origin, sorted by first
/// coordinate.
pub fn convex_hull(points: &[RatePoint]) -> Vec<RatePoint> {
    let mut pts: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    for p in points {
        assert_eq!(p.rates.len(), 2, "convex_hull expects 2-D rate points");
        pts.push((p.rates[0], p.rates[1]));
        pts.push((p.rates[0], 0.0));
        pts.push((0.0, p.rates[1]));
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-15 && (a.1 - b.1).abs() < 1e-15);
    let hull = monotone_chain(&pts);
    let mut frontier: Vec<(f64, f64)> = hull
        .iter()
        .filter(|&&(x, y)| {
            !hull
                .iter()
                .any(|&(x2, y2)| x2 >= x && y2 >= y && (x2 > x || y2 > y))
        })
        .cloned()
        .collect();
    frontier.sort_by(|a, b| a.partial_cmp(b).unwrap());
    frontier
        .into_iter()
        .map(|(x, y)| RatePoint { rates: vec![x, y] })
        .collect()
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Full convex hull vertices (Andrew's monotone chain) of sorted points.
fn monotone_chain(pts: &[(f64, f64)]) -> Vec<(f64, f64)> {
    if pts.len() <= 2 {
        return pts.to_vec();
    }
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Maximum total throughput over the frontier.
pub fn max_sum_rate(r: &Region) -> Result<f64> {
    r.hull
        .iter()
        .map(|p| p.sum())
        .fold(None, |acc: Option<f64>, v| {
            Some(acc.map_or(v, |a| a.max(v)))
        })
        .ok_or(Error::EmptyRegion)
}

/// Memoization statistics from the multi-user dynamic program.
#[derive(Clone, Copy, Debug, Default)]
pub struct DpStats {
    pub memo_hits: usize,
    pub memo_entries: usize,
}

/// Multi-user assignment rate vectors by dynamic programming.
///
/// Enumerates quantized covariance assignments with total trace at most
/// the power budget. Each user's rate depends only on the triple
/// (interference covariance, own covariance, later-users covariance), so
/// it is computed once per distinct triple (entries rounded at 1e-6 for
/// the memo key) and reused across assignments. Returns the Pareto
/// frontier of the clamped rate vectors.
pub fn multi_user_rates_dp(sc: &Scenario, g: &GridSpec) -> Result<Vec<RatePoint>> {
    multi_user_rates_dp_detailed(sc, g).map(|(pts, _)| pts)
}

pub fn multi_user_rates_dp_detailed(
    sc: &Scenario,
    g: &GridSpec,
) -> Result<(Vec<RatePoint>, DpStats)> {
    sc.validate()?;
    let l_users = sc.users.len();
    if l_users < 2 {
        return Err(Error::WrongUserCount {
            expected: 2,
            got: l_users,
        });
    }
    let m = sc.m_antennas;
    if m > 2 {
        return Err(Error::UnsupportedDimension(
            "multi_user_rates_dp grid mode supports m <= 2".into(),
        ));
    }
    let k = g.power_splits.max(2) - 1; // k grid steps of size P/k

    let mut shapes: Vec<Vec<SymPSD>> = Vec::with_capacity(k + 1);
    for t in 0..=k {
        shapes.push(psd_grid(m, sc.power * t as f64 / k as f64, g)?);
    }

    let mut compositions: Vec<Vec<usize>> = Vec::new();
    let mut cur = vec![0usize; l_users];
    enumerate_compositions(&mut compositions, &mut cur, 0, k);

    let mut memo: HashMap<Vec<i64>, f64> = HashMap::new();
    let mut stats = DpStats::default();
    let mut points: Vec<RatePoint> = Vec::new();

    for comp in &compositions {
        let lists: Vec<&[SymPSD]> = comp.iter().map(|&t| shapes[t].as_slice()).collect();
        let mut idx = vec![0usize; l_users];
        loop {
            let assignment: Vec<&SymPSD> = (0..l_users).map(|l| &lists[l][idx[l]]).collect();
            let mut rates = Vec::with_capacity(l_users);
            for l in 0..l_users {
                let sigma_s = sum_cov(&assignment[..l], m);
                let sigma_later = sum_cov(&assignment[l + 1..], m);
                let key = memo_key(l, &sigma_s, assignment[l], &sigma_later);
                let rate = if let Some(&r) = memo.get(&key) {
                    stats.memo_hits += 1;
                    r
                } else {
                    let r = user_rate(sc, l, &sigma_s, assignment[l], &sigma_later)
                        .unwrap_or(0.0)
                        .max(0.0);
                    memo.insert(key, r);
                    r
                };
                rates.push(rate);
            }
            points.push(RatePoint { rates });
            // advance the mixed-radix index over per-user shapes
            let mut carry = true;
            for l in 0..l_users {
                if !carry {
                    break;
                }
                idx[l] += 1;
                if idx[l] < lists[l].len() {
                    carry = false;
                } else {
                    idx[l] = 0;
                }
            }
            if carry {
                break;
            }
        }
    }
    stats.memo_entries = memo.len();
    Ok((pareto_frontier(points), stats))
}

fn enumerate_compositions(
    out: &mut Vec<Vec<usize>>,
    cur: &mut Vec<usize>,
    pos: usize,
    remaining: usize,
) {
    if pos == cur.len() {
        out.push(cur.clone());
        return;
    }
    for t in 0..=remaining {
        cur[pos] = t;
        enumerate_compositions(out, cur, pos + 1, remaining - t);
    }
}

fn sum_cov(mats: &[&SymPSD], m: usize) -> SymPSD {
    let mut acc = Mat::zeros(m, m);
    for s in mats {
        acc = acc.add(s.mat());
    }
    SymPSD::from_symmetric_unchecked(acc)
}

fn memo_key(l: usize, sigma_s: &SymPSD, sigma_x: &SymPSD, sigma_later: &SymPSD) -> Vec<i64> {
    let mut key = Vec::with_capacity(1 + 3 * sigma_s.dim() * sigma_s.dim());
    key.push(l as i64);
    for s in [sigma_s, sigma_x, sigma_later] {
        for i in 0..s.dim() {
            for j in 0..=i {
                key.push((s.get(i, j) * 1e6).round() as i64);
            }
        }
    }
    key
}

fn user_rate(
    sc: &Scenario,
    l: usize,
    sigma_s: &SymPSD,
    sigma_x: &SymPSD,
    sigma_later: &SymPSD,
) -> Result<f64> {
    let u = &sc.users[l];
    if l == 0 {
        r1_rate(&regularized(sigma_x), &regularized(sigma_later), u)
    } else {
        let nz = NoiseModel::from_interference(u, sigma_later);
        second_user_rate(
            &regularized(sigma_s),
            &regularized(sigma_x),
            u,
            &nz,
            RegionMode::Lafp,
            None,
        )
    }
}

/// Pareto-maximal points under componentwise dominance.
fn pareto_frontier(mut points: Vec<RatePoint>) -> Vec<RatePoint> {
    points.sort_by(|a, b| {
        b.sum()
            .partial_cmp(&a.sum())
            .unwrap()
            .then_with(|| a.rates.partial_cmp(&b.rates).unwrap())
    });
    let mut frontier: Vec<RatePoint> = Vec::new();
    for p in points {
        if !frontier
            .iter()
            .any(|q| p.dominated_by(q) || p.rates == q.rates)
        {
            frontier.push(p);
        }
    }
    frontier
}
