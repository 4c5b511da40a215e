//! Command-line front end: scenario ingestion, command dispatch, and
//! CSV/JSON emission. All numeric output is printed with six significant
//! digits; identical invocations produce byte-identical output (all
//! randomized components derive from the `--seed` flag and parallel
//! reductions are order-independent).

use crate::decorrelate::{decorrelate_assignment, verify_rate_improvement, JointAssignment};
use crate::dirty_paper::{f_dpc, lmmse_matrix, no_interference_capacity};
use crate::error::{Error, Result};
use crate::fading_paper::{lafp_rate, NoiseModel, Setting};
use crate::gp_quant::{perturbation_check, quantized_gp_rate, QuantGrid};
use crate::linalg::{Mat, SymPSD};
use crate::region::{
    max_sum_rate, two_user_region_with, GridSpec, Region, RegionMode, RegionOptions,
};
use crate::sato::sato_bound;
use crate::scenario::{load_scenario, Scenario};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "lafp",
    about = "Achievable-rate regions for the ergodic fading MIMO broadcast channel",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Write output here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for every randomized component.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cap the worker thread count (0 = library default). Results do not
    /// depend on this value.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form assignment rate for one user of a scenario.
    Rate {
        #[arg(long)]
        scenario: PathBuf,
        /// Setting file: {"sigma_s", "sigma_sx", "sigma_x", "f"}.
        #[arg(long)]
        setting: PathBuf,
        /// 1-based user index; the user is treated as encoded last
        /// (identity effective noise).
        #[arg(long)]
        user: usize,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Dirty-paper precoder for a fixed channel.
    Fdpc {
        /// Input file: {"h", "sigma_x", "sigma_z"}.
        #[arg(long)]
        setting: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Two-user achievable region as CSV.
    Region {
        #[arg(long)]
        scenario: PathBuf,
        /// power splits, shape steps, angle steps
        #[arg(long, value_parser = parse_grid, default_value = "21,17,18")]
        grid: GridSpec,
        #[arg(long, value_parser = parse_mode, default_value = "lafp")]
        mode: RegionMode,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Cooperative sum-rate upper bound.
    Sato {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 11)]
        alpha_steps: usize,
        #[arg(long, default_value_t = 21)]
        rho_steps: usize,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Decorrelate a joint assignment and report per-user rates.
    Decorrelate {
        #[arg(long)]
        scenario: PathBuf,
        /// Assignment file: {"l_users", "joint_cov", "f_mats"}.
        #[arg(long)]
        setting: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Quantized-rate oracle check for a scalar setting.
    GpCheck {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        setting: PathBuf,
        /// 1-based user index supplying the fade distribution.
        #[arg(long)]
        user: usize,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value_t = 6.0)]
        extent: f64,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Both region modes plus the cooperative bound in one CSV.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_parser = parse_grid, default_value = "21,17,18")]
        grid: GridSpec,
        #[arg(long, default_value_t = 11)]
        alpha_steps: usize,
        #[arg(long, default_value_t = 21)]
        rho_steps: usize,
        #[command(flatten)]
        common: CommonOpts,
    },
}

fn parse_grid(text: &str) -> std::result::Result<GridSpec, String> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err("grid must be three comma-separated counts, e.g. 21,17,18".into());
    }
    let mut counts = [0usize; 3];
    for (slot, part) in counts.iter_mut().zip(&parts) {
        *slot = part.trim().parse::<usize>().map_err(|e| e.to_string())?;
    }
    GridSpec::new(counts[0], counts[1], counts[2]).map_err(|e| e.to_string())
}

fn parse_mode(text: &str) -> std::result::Result<RegionMode, String> {
    match text {
        "lafp" => Ok(RegionMode::Lafp),
        "dpc" => Ok(RegionMode::DpcBaseline),
        other => Err(format!("unknown mode {other:?}, expected lafp or dpc")),
    }
}

/// Format with six significant digits.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    let decimals = (5 - exp).clamp(0, 17) as usize;
    let mut s = format!("{x:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

/// Run the command line; returns the process exit code (0 success,
/// 1 input/validation error, 2 numerical failure).
pub fn run(argv: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let threads = common_of(&cli.command).threads;
    let body = || match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    if threads > 0 {
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(body),
            Err(e) => {
                eprintln!("error: {e}");
                1
            }
        }
    } else {
        body()
    }
}

fn common_of(cmd: &Command) -> &CommonOpts {
    match cmd {
        Command::Rate { common, .. }
        | Command::Fdpc { common, .. }
        | Command::Region { common, .. }
        | Command::Sato { common, .. }
        | Command::Decorrelate { common, .. }
        | Command::GpCheck { common, .. }
        | Command::Compare { common, .. } => common,
    }
}

fn read_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Validation(format!("cannot read {}: {e}", path.display())))?;
    load_scenario(&text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Validation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn emit(common: &CommonOpts, content: &str) -> Result<()> {
    match &common.out {
        Some(path) => {
            fs::write(path, content)?;
            Ok(())
        }
        None => {
            std::io::stdout().write_all(content.as_bytes())?;
            Ok(())
        }
    }
}

#[derive(Deserialize)]
struct FdpcInput {
    h: Mat,
    sigma_x: SymPSD,
    sigma_z: SymPSD,
}

#[derive(Deserialize)]
struct AssignmentFile {
    l_users: usize,
    joint_cov: SymPSD,
    f_mats: Vec<Mat>,
}

fn region_csv(label: &str, region: &Region, out: &mut String) {
    for p in &region.raw_points {
        let on_hull = region.hull.iter().any(|q| {
            (q.rates[0] - p.rates[0]).abs() < 1e-12 && (q.rates[1] - p.rates[1]).abs() < 1e-12
        });
        out.push_str(&format!(
            "{label},{},{},{}\n",
            sig6(p.rates[0]),
            sig6(p.rates[1]),
            u8::from(on_hull)
        ));
    }
}

fn execute(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Rate {
            scenario,
            setting,
            user,
            common,
        } => {
            let sc = read_scenario(scenario)?;
            let s: Setting = read_json(setting)?;
            s.validate()?;
            if *user == 0 || *user > sc.users.len() {
                return Err(Error::Validation(format!(
                    "user index {user} outside 1..={}",
                    sc.users.len()
                )));
            }
            let u = &sc.users[user - 1];
            let r = lafp_rate(&s, u, &NoiseModel::identity(u))?;
            emit(common, &format!("rate_bits={}\n", sig6(r)))
        }
        Command::Fdpc { setting, common } => {
            let input: FdpcInput = read_json(setting)?;
            let f = f_dpc(&input.h, &input.sigma_x, &input.sigma_z)?;
            let w = lmmse_matrix(&input.h, &input.sigma_x, &input.sigma_z)?;
            let c = no_interference_capacity(&input.h, &input.sigma_x, &input.sigma_z)?;
            let out = serde_json::json!({
                "f": f.to_rows(),
                "w": w.to_rows(),
                "no_interference_bits": c,
            });
            emit(
                common,
                &format!("{}\n", serde_json::to_string_pretty(&out).unwrap()),
            )
        }
        Command::Region {
            scenario,
            grid,
            mode,
            common,
        } => {
            let sc = read_scenario(scenario)?;
            let opts = RegionOptions {
                seed: common.seed,
                ..RegionOptions::default()
            };
            let region = two_user_region_with(&sc, grid, *mode, &opts)?;
            let label = match mode {
                RegionMode::Lafp => "lafp",
                RegionMode::DpcBaseline => "dpc_baseline",
            };
            let mut out = String::from("label,r1_bits,r2_bits,hull\n");
            region_csv(label, &region, &mut out);
            eprintln!("max_sum_rate_bits={}", sig6(max_sum_rate(&region)?));
            emit(common, &out)
        }
        Command::Sato {
            scenario,
            alpha_steps,
            rho_steps,
            common,
        } => {
            let sc = read_scenario(scenario)?;
            let outcome = sato_bound(&sc, *alpha_steps, *rho_steps)?;
            let mut out = String::from("bound_bits,alpha,rho1,rho2,rho3,rho4\n");
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                sig6(outcome.bound_bits),
                sig6(outcome.params.alpha),
                sig6(outcome.params.rhos[0]),
                sig6(outcome.params.rhos[1]),
                sig6(outcome.params.rhos[2]),
                sig6(outcome.params.rhos[3]),
            ));
            let sigma = serde_json::json!({ "sigma_x": outcome.sigma_x.mat().to_rows() });
            out.push_str(&serde_json::to_string_pretty(&sigma).unwrap());
            out.push('\n');
            emit(common, &out)
        }
        Command::Decorrelate {
            scenario,
            setting,
            common,
        } => {
            let sc = read_scenario(scenario)?;
            let file: AssignmentFile = read_json(setting)?;
            let ja =
                JointAssignment::new(file.l_users, sc.m_antennas, file.joint_cov, file.f_mats)?;
            let out_ja = decorrelate_assignment(&ja)?;
            let rates = verify_rate_improvement(&ja, &out_ja, &sc)?;
            let rate_rows: Vec<serde_json::Value> = rates
                .iter()
                .enumerate()
                .map(|(l, r)| match r {
                    Ok((before, after)) => serde_json::json!({
                        "user": l + 1,
                        "rate_bits": before,
                        "rate_hat_bits": after,
                    }),
                    Err(e) => serde_json::json!({
                        "user": l + 1,
                        "error": e.to_string(),
                    }),
                })
                .collect();
            let out = serde_json::json!({
                "l_users": out_ja.l_users,
                "joint_cov": out_ja.joint_cov.mat().to_rows(),
                "f_mats": out_ja.f_mats.iter().map(Mat::to_rows).collect::<Vec<_>>(),
                "rates": rate_rows,
            });
            emit(
                common,
                &format!("{}\n", serde_json::to_string_pretty(&out).unwrap()),
            )
        }
        Command::GpCheck {
            scenario,
            setting,
            user,
            eps,
            extent,
            trials,
            common,
        } => {
            let sc = read_scenario(scenario)?;
            let s: Setting = read_json(setting)?;
            s.validate()?;
            if *user == 0 || *user > sc.users.len() {
                return Err(Error::Validation(format!(
                    "user index {user} outside 1..={}",
                    sc.users.len()
                )));
            }
            let u = &sc.users[user - 1];
            let grid = QuantGrid::new(*eps, *extent)?;
            let closed = lafp_rate(&s, u, &NoiseModel::identity(u))?;
            let quantized = quantized_gp_rate(&s, u, 1.0, &grid)?;
            let joint = crate::gp_quant::build_discrete_joint(&s, u, 1.0, &grid, false)?;
            let report = perturbation_check(&s, u, 1.0, &grid, *trials, common.seed)?;
            let out = format!(
                "closed_form_bits={}\nquantized_bits={}\ngap_bits={}\noverflow_mass={}\nperturbation_pass={}\nworst_improvement_bits={}\ntolerance_bits={}\n",
                sig6(closed),
                sig6(quantized),
                sig6((quantized - closed).abs()),
                sig6(joint.overflow_mass()),
                report.passed,
                sig6(report.worst_improvement),
                sig6(report.tolerance),
            );
            emit(common, &out)
        }
        Command::Compare {
            scenario,
            grid,
            alpha_steps,
            rho_steps,
            common,
        } => {
            let sc = read_scenario(scenario)?;
            let opts = RegionOptions {
                seed: common.seed,
                ..RegionOptions::default()
            };
            let lafp = two_user_region_with(&sc, grid, RegionMode::Lafp, &opts)?;
            let dpc = two_user_region_with(&sc, grid, RegionMode::DpcBaseline, &opts)?;
            let sato = sato_bound(&sc, *alpha_steps, *rho_steps)?;
            let mut out = String::from("label,r1_bits,r2_bits,hull\n");
            region_csv("lafp", &lafp, &mut out);
            region_csv("dpc_baseline", &dpc, &mut out);
            // the cooperative bound plots as the line r1 + r2 = bound
            out.push_str(&format!("sato,{},0,1\n", sig6(sato.bound_bits)));
            out.push_str(&format!("sato,0,{},1\n", sig6(sato.bound_bits)));
            eprintln!(
                "lafp_max_sum_bits={} dpc_max_sum_bits={} sato_bound_bits={}",
                sig6(max_sum_rate(&lafp)?),
                sig6(max_sum_rate(&dpc)?),
                sig6(sato.bound_bits),
            );
            emit(common, &out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig6_rounds_and_trims() {
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(2.861789), "2.86179");
        assert_eq!(sig6(123456.7), "123457");
        assert_eq!(sig6(0.000123456), "0.000123456");
        assert_eq!(sig6(-1.5), "-1.5");
        assert_eq!(sig6(10.0), "10");
    }

    #[test]
    fn grid_parser_roundtrip() {
        let g = parse_grid("21,17,18").unwrap();
        assert_eq!((g.power_splits, g.shape_steps, g.angle_steps), (21, 17, 18));
        assert!(parse_grid("21,17").is_err());
        assert!(parse_grid("a,b,c").is_err());
    }
}
