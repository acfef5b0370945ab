//! `pefl` — run seeded pipeline trials, execute individual cloud-side
//! attacks with verbose diagnostics, and Monte-Carlo the distinct-pad fix
//! variants. Reports are deterministic given the seed (timestamps aside).

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use thiserror::Error;

use pefl_core::attacks::{
    attack_combined, attack_cp_as_user, attack_probabilistic, attack_secmed_diffs,
    attack_single_known, AttackMethod, AttackReport, SideInformation,
};
use pefl_core::he::BackendKind;
use pefl_core::pipeline::{run_round, GradientMatrix, RoundResult};
use pefl_core::report::{Report, RunConfig};
use pefl_core::scenario::{
    gen_population, run_trials, secmed_fix_monte_carlo, secpear_fix_monte_carlo, Poison,
    ScenarioConfig,
};
use pefl_core::verify::{verify_recovery, RecoveryVerdict};

const THREADS_ENV: &str = "PEFL_MAX_THREADS";

#[derive(Parser)]
#[command(name = "pefl", version, about = "Masked-aggregation pipeline simulator and attack runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded trials from a JSON config and write a JSON report.
    Simulate {
        /// Path to the run configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's trial count.
        #[arg(long)]
        trials: Option<u64>,
        /// Override the config's output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a single attack on a fresh instance, with verbose diagnostics.
    Attack {
        /// One of: combined, cp-user, single-known, probabilistic, secmed-diffs.
        #[arg(long)]
        which: String,
        #[arg(long)]
        seed: u64,
        /// Number of users.
        #[arg(long, default_value_t = 10)]
        m: usize,
        /// Gradient dimension.
        #[arg(long, default_value_t = 32)]
        n: usize,
        /// Encryption backend: transparent or paillier.
        #[arg(long, default_value = "transparent")]
        backend: String,
        /// Paillier key size in bits.
        #[arg(long, default_value_t = 512)]
        key_bits: u32,
        /// Force one row to a constant value (resists the combined attack).
        #[arg(long)]
        constant_row: Option<usize>,
    },
    /// Monte-Carlo demonstration that distinct pads break correctness.
    Fixcheck {
        /// One of: secmed-distinct, secpear-distinct.
        #[arg(long)]
        variant: String,
        #[arg(long)]
        seed: u64,
        /// Sample count: coordinates for secmed, instances for secpear.
        #[arg(long)]
        samples: Option<usize>,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("config error: {0}")]
    ConfigParse(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("{0}")]
    UnknownAttack(String),
    #[error("unknown fix variant '{0}' (expected secmed-distinct | secpear-distinct)")]
    UnknownVariant(String),
    #[error("run failed: {0}")]
    Run(String),
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var(THREADS_ENV) {
        match threads.parse::<usize>() {
            Ok(k) if k >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
            }
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            config,
            seed,
            trials,
            out,
        } => cmd_simulate(&config, seed, trials, out),
        Command::Attack {
            which,
            seed,
            m,
            n,
            backend,
            key_bits,
            constant_row,
        } => cmd_attack(&which, seed, m, n, &backend, key_bits, constant_row),
        Command::Fixcheck {
            variant,
            seed,
            samples,
        } => cmd_fixcheck(&variant, seed, samples),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn cmd_simulate(
    config_path: &PathBuf,
    seed: Option<u64>,
    trials: Option<u64>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let raw = fs::read_to_string(config_path)
        .map_err(|e| CliError::Io(format!("{}: {e}", config_path.display())))?;
    let mut config: RunConfig =
        serde_json::from_str(&raw).map_err(|e| CliError::ConfigParse(e.to_string()))?;
    if let Some(seed) = seed {
        config.scenario.master_seed = seed;
    }
    if let Some(trials) = trials {
        config.trials = trials;
    }
    if let Some(out) = out {
        config.out = Some(out.to_string_lossy().into_owned());
    }
    config
        .validate()
        .map_err(|e| CliError::ConfigParse(e.to_string()))?;
    let out_path = config
        .out
        .clone()
        .ok_or_else(|| CliError::ConfigParse("no output path: set --out or \"out\"".into()))?;

    let outcomes = run_trials(&config.scenario, &config.attacks, config.trials)
        .map_err(|e| CliError::Run(e.to_string()))?;
    // The echoed config carries the run semantics; where the report landed is
    // not part of it, so reruns into different paths stay byte-identical.
    let echo = RunConfig {
        out: None,
        ..config.clone()
    };
    let report = Report::from_trials(&echo, &outcomes, env!("CARGO_PKG_VERSION"), now_ms());
    fs::write(&out_path, report.to_json())
        .map_err(|e| CliError::Io(format!("{out_path}: {e}")))?;

    for line in report.summary_lines() {
        println!("{line}");
    }
    println!("report={out_path}");
    Ok(())
}

fn parse_backend(name: &str) -> Result<BackendKind, CliError> {
    match name {
        "transparent" => Ok(BackendKind::Transparent),
        "paillier" => Ok(BackendKind::Paillier),
        other => Err(CliError::ConfigParse(format!(
            "unknown backend '{other}' (expected transparent | paillier)"
        ))),
    }
}

/// Builds the focused instance for one attack run: an honest clustered
/// population, optionally with one row forced constant or with duplicate
/// values planted so the probabilistic attack has collisions to find.
fn attack_instance(
    method: AttackMethod,
    scenario: &ScenarioConfig,
    constant_row: Option<usize>,
) -> Result<GradientMatrix, CliError> {
    let population =
        gen_population(scenario, scenario.master_seed).map_err(|e| CliError::Run(e.to_string()))?;
    let mut rows = population.matrix.rows().to_vec();
    if let Some(row) = constant_row {
        if row >= rows.len() {
            return Err(CliError::ConfigParse(format!(
                "constant_row {row} out of range for m = {}",
                rows.len()
            )));
        }
        let value = rows[row][0];
        rows[row] = vec![value; rows[row].len()];
    }
    if method == AttackMethod::Probabilistic {
        // Plant collisions chaining users 0-1-2.
        rows[1][0] = rows[0][0];
        rows[2][1] = rows[1][1];
    }
    GradientMatrix::from_raw_rows(rows, scenario.scale_bits).map_err(|e| CliError::Run(e.to_string()))
}

fn first_nonzero(g: &GradientMatrix) -> Option<(usize, usize, i64)> {
    (0..g.m()).find_map(|x| {
        (0..g.n()).find_map(|i| match g.raw(x, i) {
            0 => None,
            v => Some((x, i, v)),
        })
    })
}

fn print_verdict(method: AttackMethod, report: &AttackReport, verdict: &RecoveryVerdict) {
    println!(
        "attack={method} coverage={:.6} recovered={} exact={}",
        verdict.coverage, verdict.recovered_entries, verdict.all_recovered_exact
    );
    for note in &report.diagnostics {
        println!("  note: {note}");
    }
}

fn cmd_attack(
    which: &str,
    seed: u64,
    m: usize,
    n: usize,
    backend: &str,
    key_bits: u32,
    constant_row: Option<usize>,
) -> Result<(), CliError> {
    let method = AttackMethod::from_str(which).map_err(CliError::UnknownAttack)?;
    let scenario = ScenarioConfig {
        m,
        n,
        poison: Poison::None,
        backend: parse_backend(backend)?,
        key_bits,
        master_seed: seed,
        ..ScenarioConfig::default()
    };
    scenario
        .validate()
        .map_err(|e| CliError::ConfigParse(e.to_string()))?;
    let g = attack_instance(method, &scenario, constant_row)?;
    let round: RoundResult = run_round(&g, &scenario.round_config(), seed)
        .map_err(|e| CliError::Run(e.to_string()))?;
    println!(
        "attack={method} seed={seed} m={m} n={n} backend={}",
        scenario.backend
    );

    match method {
        AttackMethod::Combined => {
            let report = attack_combined(&round.views);
            let verdict = verify_recovery(&report, &g).map_err(|e| CliError::Run(e.to_string()))?;
            print_verdict(method, &report, &verdict);
        }
        AttackMethod::CpAsUser => {
            let own = g.m() - 1;
            let side = SideInformation::OwnRow {
                user: own,
                gradient: g.rows()[own].clone(),
            };
            let report =
                attack_cp_as_user(&round.views, &side).map_err(|e| CliError::Run(e.to_string()))?;
            let verdict = verify_recovery(&report, &g).map_err(|e| CliError::Run(e.to_string()))?;
            print_verdict(method, &report, &verdict);
        }
        AttackMethod::SingleKnown => {
            let (x, i, v) = first_nonzero(&g)
                .ok_or_else(|| CliError::Run("instance has no nonzero entry".into()))?;
            let side = SideInformation::SingleEntry {
                user: x,
                coord: i,
                value: v,
            };
            let report = attack_single_known(&round.views, &side)
                .map_err(|e| CliError::Run(e.to_string()))?;
            let verdict = verify_recovery(&report, &g).map_err(|e| CliError::Run(e.to_string()))?;
            print_verdict(method, &report, &verdict);
        }
        AttackMethod::Probabilistic => {
            let anchor_coord = g.n() - 1;
            let side = SideInformation::SingleEntry {
                user: 0,
                coord: anchor_coord,
                value: g.raw(0, anchor_coord),
            };
            let out = attack_probabilistic(&round.views, Some(&side))
                .map_err(|e| CliError::Run(e.to_string()))?;
            let verdict =
                verify_recovery(&out.report, &g).map_err(|e| CliError::Run(e.to_string()))?;
            println!(
                "attack={method} equality_constraints={} ratio_constraints={}",
                out.equalities.len(),
                out.ratios.len()
            );
            print_verdict(method, &out.report, &verdict);
        }
        AttackMethod::SecmedDiffs => {
            let diffs = attack_secmed_diffs(&round.views);
            let mut exact = true;
            let mut count = 0usize;
            for (i, coord) in diffs.per_coordinate.iter().enumerate() {
                for &(x, z, d) in coord {
                    count += 1;
                    if d != g.raw(x, i) - g.raw(z, i) {
                        exact = false;
                    }
                }
            }
            println!("attack={method} differences={count} exact={exact}");
        }
    }
    Ok(())
}

fn cmd_fixcheck(variant: &str, seed: u64, samples: Option<usize>) -> Result<(), CliError> {
    match variant {
        "secmed-distinct" => {
            let coordinates = samples.unwrap_or(1000);
            // Enough users per column that the charitably-unpadded median is
            // almost never the true one.
            let users = 1000;
            let mc = secmed_fix_monte_carlo(coordinates, users, 32, seed);
            println!(
                "variant=secmed-distinct samples={coordinates} users={users} pad_bits=32 \
                 wrong_fraction={:.6} failure_rate={:.6} mean_abs_delta_raw={:.1}",
                mc.wrong_fraction, mc.wrong_fraction, mc.mean_abs_delta_raw
            );
        }
        "secpear-distinct" => {
            let instances = samples.unwrap_or(100);
            let mc = secpear_fix_monte_carlo(instances, 10, 32, 1 << 16, seed)
                .map_err(|e| CliError::Run(e.to_string()))?;
            println!(
                "variant=secpear-distinct samples={instances} m=10 n=32 pad_max=65536 \
                 mean_abs_delta_rho={:.6} min_instance_delta={:.6}",
                mc.mean_abs_delta, mc.min_instance_delta
            );
        }
        other => return Err(CliError::UnknownVariant(other.to_string())),
    }
    Ok(())
}
