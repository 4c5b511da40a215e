//! Acceptance suite: every criterion runs at its stated tolerance and
//! prints one pass/fail line. Expensive artifacts (regions, the
//! cooperative bound) are computed once and shared across criteria.

use lafp::decorrelate::{decorrelate_assignment, random_chain_assignment, verify_rate_improvement};
use lafp::dirty_paper::{f_dpc, no_interference_capacity};
use lafp::fading_paper::{lafp_rate, NoiseModel, Setting};
use lafp::gp_quant::{perturbation_check, quantized_gp_rate, QuantGrid};
use lafp::linalg::{Mat, SymPSD};
use lafp::region::{max_sum_rate, r1_rate, two_user_region, GridSpec, Region, RegionMode};
use lafp::sato::{sato_bound, SatoOutcome};
use lafp::scenario::{load_scenario, FadeAtom, Scenario, UserChannel};
use once_cell::sync::Lazy;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::time::Instant;

fn example() -> Scenario {
    load_scenario(include_str!("../data/two_user_example.json")).unwrap()
}

struct Shared {
    lafp_region: Region,
    lafp_secs: f64,
    dpc_region: Region,
    dpc_secs: f64,
    sato: SatoOutcome,
    sato_secs: f64,
}

static SHARED: Lazy<Shared> = Lazy::new(|| {
    let sc = example();
    let grid = GridSpec::default_region();
    let t0 = Instant::now();
    let lafp_region = two_user_region(&sc, &grid, RegionMode::Lafp).unwrap();
    let lafp_secs = t0.elapsed().as_secs_f64();
    let t0 = Instant::now();
    let dpc_region = two_user_region(&sc, &grid, RegionMode::DpcBaseline).unwrap();
    let dpc_secs = t0.elapsed().as_secs_f64();
    let t0 = Instant::now();
    let sato = sato_bound(&sc, 11, 39).unwrap();
    let sato_secs = t0.elapsed().as_secs_f64();
    Shared {
        lafp_region,
        lafp_secs,
        dpc_region,
        dpc_secs,
        sato,
        sato_secs,
    }
});

fn report(name: &str, pass: bool, detail: &str) {
    println!(
        "criterion {name}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {name} failed: {detail}");
}

/// Published covariances and precoder of the two-user example,
/// regularized with eps = 1e-3.
fn published_optimum() -> (SymPSD, SymPSD, Mat) {
    let eps = 1e-3;
    let s1 = SymPSD::new(Mat::from_rows(&[vec![1.0, 2.0 - eps], vec![2.0 - eps, 4.0]]).unwrap())
        .unwrap();
    let s2 = SymPSD::new(Mat::from_rows(&[vec![4.5, -1.5 + eps], vec![-1.5 + eps, 0.5]]).unwrap())
        .unwrap();
    let f = Mat::from_rows(&[vec![1.0909, 0.3636], vec![-0.3636, -0.1212]]).unwrap();
    (s1, s2, f)
}

#[test]
fn criterion_1_published_sum_rate() {
    let t0 = Instant::now();
    let sc = example();
    let (s1, s2, f) = published_optimum();
    let r1 = r1_rate(&s1, &s2, &sc.users[0]).unwrap();
    let setting = Setting {
        sigma_s: s1,
        sigma_sx: Mat::zeros(2, 2),
        sigma_x: s2,
        f,
    };
    let u2 = &sc.users[1];
    let r2 = lafp_rate(&setting, u2, &NoiseModel::identity(u2)).unwrap();
    let sum = r1 + r2;
    let secs = t0.elapsed().as_secs_f64();
    report(
        "1 published sum-rate",
        (2.84..=2.88).contains(&sum) && secs < 1.0,
        &format!("sum = {sum:.4} bits, {secs:.2} s"),
    );
}

#[test]
fn criterion_2_lafp_region_search() {
    let shared = &*SHARED;
    let max = max_sum_rate(&shared.lafp_region).unwrap();
    report(
        "2 lafp region search",
        (2.84..=2.92).contains(&max) && shared.lafp_secs < 600.0,
        &format!("max sum = {max:.4} bits, {:.1} s", shared.lafp_secs),
    );
}

#[test]
fn criterion_3_dpc_baseline_region() {
    let shared = &*SHARED;
    let max = max_sum_rate(&shared.dpc_region).unwrap();
    report(
        "3 dpc baseline region",
        (2.65..=2.75).contains(&max) && shared.dpc_secs < 600.0,
        &format!("max sum = {max:.4} bits, {:.1} s", shared.dpc_secs),
    );
}

#[test]
fn criterion_4_sato_bound() {
    let shared = &*SHARED;
    let out = &shared.sato;
    let bound_ok = (3.15..=3.19).contains(&out.bound_bits);
    let alpha_ok = out.params.alpha == 0.0;
    let rho_ok = out
        .params
        .rhos
        .iter()
        .all(|r| (r - 0.3).abs() <= 0.05 + 1e-12);
    report(
        "4 sato bound",
        bound_ok && alpha_ok && rho_ok && shared.sato_secs < 120.0,
        &format!(
            "bound = {:.4} bits at alpha = {}, rho = {:?}, {:.1} s",
            out.bound_bits, out.params.alpha, out.params.rhos, shared.sato_secs
        ),
    );
}

#[test]
fn criterion_5_no_interference_equivalence() {
    let t0 = Instant::now();
    let mut rng = StdRng::seed_from_u64(105);
    let mut worst = 0.0f64;
    let rand_pd = |rng: &mut StdRng, n: usize| {
        let a = Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        SymPSD::new(a.matmul(&a.transpose()).add(&Mat::identity(n).scale(0.3))).unwrap()
    };
    for _ in 0..1000 {
        let m = rng.gen_range(1..=3);
        let n = rng.gen_range(1..=3);
        let h = Mat::from_fn(n, m, |_, _| rng.gen_range(-2.0..2.0));
        let sigma_s = rand_pd(&mut rng, m);
        let sigma_x = rand_pd(&mut rng, m);
        let sigma_z = rand_pd(&mut rng, n);
        let f = f_dpc(&h, &sigma_x, &sigma_z).unwrap();
        let setting = Setting {
            sigma_s,
            sigma_sx: Mat::zeros(m, m),
            sigma_x: sigma_x.clone(),
            f,
        };
        let u = UserChannel {
            n_antennas: n,
            atoms: vec![FadeAtom {
                prob: 1.0,
                h: h.clone(),
            }],
        };
        let nz = NoiseModel::new(vec![sigma_z.clone()]).unwrap();
        let rate = lafp_rate(&setting, &u, &nz).unwrap();
        let cap = no_interference_capacity(&h, &sigma_x, &sigma_z).unwrap();
        worst = worst.max((rate - cap).abs());
    }
    let secs = t0.elapsed().as_secs_f64();
    report(
        "5 no-interference equivalence",
        worst < 1e-9 && secs < 10.0,
        &format!("worst gap = {worst:.2e} bits over 1000 instances, {secs:.1} s"),
    );
}

#[test]
fn criterion_6_decorrelation_witness() {
    let t0 = Instant::now();
    let sc2 = example();
    let mut sc3 = example();
    sc3.users.push(UserChannel {
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
    let mut rng = StdRng::seed_from_u64(106);
    let mut worst_gap = f64::INFINITY;
    let mut worst_cov = 0.0f64;
    for trial in 0..100 {
        let (sc, l) = if trial % 2 == 0 { (&sc2, 2) } else { (&sc3, 3) };
        let before = random_chain_assignment(l, 2, sc.power, &mut rng);
        let after = decorrelate_assignment(&before).unwrap();
        worst_cov = worst_cov.max(
            after
                .total_cov()
                .mat()
                .max_abs_diff(before.total_cov().mat()),
        );
        for (r, rh) in verify_rate_improvement(&before, &after, sc)
            .unwrap()
            .into_iter()
            .flatten()
        {
            worst_gap = worst_gap.min(rh - r);
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    report(
        "6 decorrelation witness",
        worst_cov < 1e-9 && worst_gap >= -1e-9 && secs < 60.0,
        &format!(
            "covariance drift = {worst_cov:.2e}, min rate gain = {worst_gap:.2e} bits, {secs:.1} s"
        ),
    );
}

fn oracle_settings() -> Vec<(&'static str, Setting, UserChannel)> {
    let dirty = Setting {
        sigma_s: SymPSD::diag(&[1.0]).unwrap(),
        sigma_sx: Mat::zeros(1, 1),
        sigma_x: SymPSD::diag(&[1.0]).unwrap(),
        f: Mat::from_rows(&[vec![0.5]]).unwrap(),
    };
    let dirty_user = UserChannel {
        n_antennas: 1,
        atoms: vec![FadeAtom {
            prob: 1.0,
            h: Mat::from_rows(&[vec![1.0]]).unwrap(),
        }],
    };
    let fading = Setting {
        sigma_s: SymPSD::diag(&[1.0]).unwrap(),
        sigma_sx: Mat::zeros(1, 1),
        sigma_x: SymPSD::diag(&[1.0]).unwrap(),
        f: Mat::from_rows(&[vec![0.45]]).unwrap(),
    };
    let fading_user = UserChannel {
        n_antennas: 1,
        atoms: vec![
            FadeAtom {
                prob: 0.5,
                h: Mat::from_rows(&[vec![0.6]]).unwrap(),
            },
            FadeAtom {
                prob: 0.5,
                h: Mat::from_rows(&[vec![1.2]]).unwrap(),
            },
        ],
    };
    vec![
        ("dirty-paper", dirty, dirty_user),
        ("two-atom fading", fading, fading_user),
    ]
}

#[test]
fn criterion_7_quantized_oracle_agreement() {
    let t0 = Instant::now();
    let grid = QuantGrid::new(0.05, 6.0).unwrap();
    let mut detail = String::new();
    let mut pass = true;
    for (name, setting, user) in oracle_settings() {
        let closed = lafp_rate(&setting, &user, &NoiseModel::identity(&user)).unwrap();
        let quantized = quantized_gp_rate(&setting, &user, 1.0, &grid).unwrap();
        let gap = (quantized - closed).abs();
        pass &= gap <= 0.02;
        detail.push_str(&format!("{name}: gap = {gap:.4} bits; "));
    }
    let secs = t0.elapsed().as_secs_f64();
    detail.push_str(&format!("{secs:.1} s"));
    report(
        "7 quantized oracle agreement",
        pass && secs < 300.0,
        &detail,
    );
}

#[test]
fn criterion_8_perturbation_witness() {
    let t0 = Instant::now();
    let grid = QuantGrid::new(0.1, 6.0).unwrap();
    let mut detail = String::new();
    let mut pass = true;
    for (name, setting, user) in oracle_settings() {
        let rep = perturbation_check(&setting, &user, 1.0, &grid, 200, 108).unwrap();
        pass &= rep.passed;
        detail.push_str(&format!(
            "{name}: worst improvement = {:+.2e} vs tolerance {:.2e}; ",
            rep.worst_improvement, rep.tolerance
        ));
    }
    let secs = t0.elapsed().as_secs_f64();
    detail.push_str(&format!("{secs:.1} s"));
    report("8 perturbation witness", pass && secs < 600.0, &detail);
}

#[test]
fn criterion_9_regions_below_cooperative_bound() {
    let shared = &*SHARED;
    let bound = shared.sato.bound_bits;
    let violation = shared
        .lafp_region
        .raw_points
        .iter()
        .chain(&shared.dpc_region.raw_points)
        .find(|p| p.sum() > bound);
    report(
        "9 regions below cooperative bound",
        violation.is_none(),
        &format!(
            "bound = {bound:.4} bits; every region point's sum below it: {}",
            violation.is_none()
        ),
    );
}

/// Not a numbered criterion: the published comparison figure is anchored
/// only by the two sum rates, so the full-curve comparison is the
/// dominance property between the two regions.
#[test]
fn lafp_region_dominates_baseline() {
    let shared = &*SHARED;
    let all_covered = shared
        .dpc_region
        .hull
        .iter()
        .all(|p| covered_by_hull(&shared.lafp_region.hull, p.rates[0], p.rates[1]));
    report(
        "aux lafp dominates baseline",
        all_covered,
        "every baseline frontier point lies inside the lafp frontier",
    );
}

fn covered_by_hull(hull: &[lafp::region::RatePoint], x: f64, y: f64) -> bool {
    if hull
        .iter()
        .any(|q| q.rates[0] >= x - 1e-9 && q.rates[1] >= y - 1e-9)
    {
        return true;
    }
    hull.windows(2).any(|w| {
        let (x1, y1) = (w[0].rates[0], w[0].rates[1]);
        let (x2, y2) = (w[1].rates[0], w[1].rates[1]);
        if x < x1 - 1e-9 || x > x2 + 1e-9 {
            return false;
        }
        let t = if (x2 - x1).abs() < 1e-15 {
            0.0
        } else {
            (x - x1) / (x2 - x1)
        };
        y1 + t * (y2 - y1) >= y - 1e-9
    })
}
