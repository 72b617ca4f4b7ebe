//! Thin command-line front end: every library operation as a subcommand.
//!
//! Conventions shared by all subcommands:
//! * model parameters come from a JSON file (`--params`): `{"sigma": ..,
//!   "theta": .., "nu0": .., "measure": {"atoms": [{"mass": .., "peak":
//!   ..}]}}`, the measure being optional;
//! * fixed environments come from a JSON file (`--env`): `{"horizon": ..,
//!   "jumps": [{"t": .., "dp": ..}]}`, forward orientation;
//! * every run writes its result to `--out` and a manifest echoing the
//!   fully resolved configuration and seed to `<out>.manifest.json`;
//! * identical argv produce byte-identical outputs;
//! * exit codes: 0 success, 1 domain/configuration error or failed
//!   statistical check, 2 convergence/truncation error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use wfenv::diffusion::{run_annealed, run_quenched, DiffusionConfig};
use wfenv::duality::{
    ancestral_check, duality_check_annealed, duality_check_quenched, duality_check_reinforced,
    DualityReport,
};
use wfenv::genealogy::{chain_run_annealed, chain_run_quenched, ChainKind, DEFAULT_STATE_CAP};
use wfenv::model::env_sample;
use wfenv::moran::{moran_coupled_run, moran_run, MoranParams};
use wfenv::path::{PathSample, RunningMoments};
use wfenv::recursion::{h_series, solve_fearnhead, solve_wn};
use wfenv::rng::single_rng;
use wfenv::spectral::{
    ancestral_eval, ancestral_eval_row, build_decomposition, mixed_env_moments,
    quenched_ancestral_coeffs, quenched_ancestral_limit, quenched_moment_coeffs,
    quenched_moment_eval, quenched_wn, DecompKind,
};
use wfenv::{Environment, Error, LevyMeasure, ModelParams, Result};

#[derive(Parser)]
#[command(
    name = "wfenv",
    about = "Moran and Wright-Fisher models in a pure-jump random environment",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Model parameter JSON file.
    #[arg(long)]
    params: PathBuf,
    /// RNG seed; all randomness of the run derives from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; the manifest goes to `<out>.manifest.json`.
    #[arg(long)]
    out: PathBuf,
    /// Additionally write `<out>.plot.csv` with tidy (series, t, value)
    /// rows where the subcommand produces plottable data.
    #[arg(long, default_value_t = false)]
    plot_data: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Killed,
    Pldasg,
    Siegmund,
}

impl From<KindArg> for ChainKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Killed => ChainKind::Killed,
            KindArg::Pldasg => ChainKind::Pldasg,
            KindArg::Siegmund => ChainKind::Siegmund,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Annealed,
    Quenched,
    Reinforced,
    Ancestral,
}

#[derive(Subcommand)]
enum Command {
    /// Finite-N Moran path (CSV t,x). `sigma`/`theta` in the params file
    /// are used directly as the per-event rates sigma_N and theta_N.
    SimulateMoran {
        #[command(flatten)]
        common: Common,
        /// Population size N.
        #[arg(long)]
        pop_size: u64,
        /// Starting frequency, a multiple of 1/N.
        #[arg(long)]
        x0: f64,
        /// Run horizon.
        #[arg(long, value_name = "T")]
        horizon: f64,
        /// Fixed environment JSON file; empty environment when omitted.
        #[arg(long)]
        env: Option<PathBuf>,
    },
    /// Jump-diffusion path (CSV t,x); quenched against `--env`, otherwise
    /// annealed with the environment drawn from the measure in the params
    /// file and echoed in the manifest.
    SimulateDiffusion {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        x0: f64,
        #[arg(long, value_name = "T")]
        horizon: f64,
        #[arg(long, default_value_t = wfenv::diffusion::DEFAULT_DT)]
        dt: f64,
        #[arg(long)]
        env: Option<PathBuf>,
    },
    /// Backward line-counting chain path (CSV t,state; the cemetery prints
    /// as -1). Quenched when `--env` is given (killed/pldasg only).
    SimulateChain {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long)]
        start: u64,
        #[arg(long, value_name = "T")]
        horizon: f64,
        #[arg(long)]
        env: Option<PathBuf>,
    },
    /// Stationary moments w_n of the annealed frequency process (JSON).
    SolveWn {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 64)]
        k: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Stationary tail probabilities a_n of the pruned chain and the
    /// ancestral type distribution h on a grid (JSON).
    SolveFearnhead {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 64)]
        k: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Quenched moments E^omega[(1-X(0))^n | X(-T) = x] from the spectral
    /// expansion, sigma = 0 (JSON).
    QuenchedMoments {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        env: PathBuf,
        #[arg(long, default_value_t = 3)]
        n: u64,
        #[arg(long, default_value_t = 64)]
        kdim: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        /// Initial frequencies to evaluate at (repeatable).
        #[arg(long = "x", required = true)]
        xs: Vec<f64>,
    },
    /// Exact absorption limits W_n(omega) of the quenched moments (JSON).
    QuenchedWn {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        env: PathBuf,
        #[arg(long, default_value_t = 3)]
        n: u64,
        #[arg(long, default_value_t = 64)]
        kdim: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Quenched ancestral type distribution h^omega_T(x), or its T -> inf
    /// limit with `--limit` (JSON).
    QuenchedAncestral {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        env: PathBuf,
        #[arg(long, default_value_t = 64)]
        kdim: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = false)]
        limit: bool,
        #[arg(long = "x", required = true)]
        xs: Vec<f64>,
    },
    /// Moments under a stationary annealed past followed by the fixed
    /// recent window in `--env`, sigma = 0 (JSON).
    MixedEnv {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        env: PathBuf,
        #[arg(long, default_value_t = 2)]
        n: u64,
        #[arg(long, default_value_t = 64)]
        k: usize,
        #[arg(long, default_value_t = 64)]
        kdim: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Forward/backward duality check (JSON report). Exits 0 when the two
    /// estimates agree within three combined standard errors, 1 otherwise.
    DualityCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long, default_value_t = 1)]
        n: u64,
        #[arg(long)]
        x: f64,
        #[arg(long, value_name = "T", default_value_t = 1.0)]
        horizon: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 10_000)]
        replicates: u64,
        /// Fixed environment (quenched mode).
        #[arg(long)]
        env: Option<PathBuf>,
        /// Conditioning window `lo,hi` on the total environment increment
        /// (reinforced mode).
        #[arg(long, value_delimiter = ',')]
        window: Option<Vec<f64>>,
    },
    /// Small-jump truncation coupling experiment: mean sup-discrepancy
    /// between the full and truncated Moran paths against the analytic
    /// bound (JSON).
    CouplingExperiment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pop_size: u64,
        #[arg(long)]
        env: PathBuf,
        /// Truncation threshold: jumps with dp < delta are dropped.
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        x0: f64,
        #[arg(long, value_name = "T")]
        horizon: f64,
        #[arg(long, default_value_t = 1_000)]
        replicates: u64,
    },
    /// Draw a compound-Poisson environment from the measure in the params
    /// file (JSON).
    EnvSample {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "T")]
        horizon: f64,
    },
}

#[derive(Deserialize)]
struct ParamsFile {
    sigma: f64,
    theta: f64,
    nu0: f64,
    #[serde(default)]
    measure: Option<LevyMeasure>,
}

fn read_params(path: &PathBuf) -> Result<(ModelParams, LevyMeasure)> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Domain(format!("cannot read params file {}: {e}", path.display())))?;
    let f: ParamsFile = serde_json::from_str(&text)
        .map_err(|e| Error::Domain(format!("params file {}: {e}", path.display())))?;
    let p = ModelParams::new(f.sigma, f.theta, f.nu0)?;
    let mu = match f.measure {
        Some(m) => {
            m.validate()?;
            m
        }
        None => LevyMeasure::empty(),
    };
    Ok((p, mu))
}

fn read_env(path: &PathBuf) -> Result<Environment> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Domain(format!("cannot read env file {}: {e}", path.display())))?;
    let env: Environment = serde_json::from_str(&text)
        .map_err(|e| Error::Domain(format!("env file {}: {e}", path.display())))?;
    env.validate()?;
    Ok(env)
}

fn write_text(path: &PathBuf, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn write_json(path: &PathBuf, value: &serde_json::Value) -> Result<()> {
    write_text(path, &format!("{}\n", serde_json::to_string_pretty(value)?))
}

fn write_manifest(out: &PathBuf, command: &str, seed: u64, config: serde_json::Value) -> Result<()> {
    let path = PathBuf::from(format!("{}.manifest.json", out.display()));
    write_json(&path, &json!({ "command": command, "seed": seed, "config": config }))
}

fn write_path_csv(out: &PathBuf, path: &PathSample) -> Result<()> {
    let mut buf = Vec::new();
    path.write_csv(&mut buf)?;
    write_text(out, &String::from_utf8(buf).expect("csv is ascii"))
}

fn write_plot_csv(out: &PathBuf, series: &[(&str, Vec<(f64, f64)>)]) -> Result<()> {
    let mut text = String::from("series,t,value\n");
    for (name, points) in series {
        for (t, v) in points {
            text.push_str(&format!("{name},{t},{v}\n"));
        }
    }
    write_text(&PathBuf::from(format!("{}.plot.csv", out.display())), &text)
}

fn plot_series(path: &PathSample) -> Vec<(f64, f64)> {
    path.times.iter().copied().zip(path.values.iter().copied()).collect()
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::SimulateMoran { common, pop_size, x0, horizon, env } => {
            let (p, _) = read_params(&common.params)?;
            let mp = MoranParams::new(pop_size, p.sigma, p.theta, p.nu0)?;
            let omega = match &env {
                Some(path) => read_env(path)?,
                None => Environment::empty(horizon),
            };
            let path = moran_run(&mp, &omega, x0, horizon, &mut single_rng(common.seed))?;
            write_path_csv(&common.out, &path)?;
            if common.plot_data {
                write_plot_csv(&common.out, &[("moran", plot_series(&path))])?;
            }
            write_manifest(&common.out, "simulate-moran", common.seed, json!({
                "pop_size": pop_size, "sigma_n": p.sigma, "theta_n": p.theta, "nu0": p.nu0,
                "x0": x0, "horizon": horizon, "env": omega,
            }))?;
            Ok(true)
        }
        Command::SimulateDiffusion { common, x0, horizon, dt, env } => {
            let (p, mu) = read_params(&common.params)?;
            let cfg = DiffusionConfig::new(p, dt, horizon)?;
            let mut rng = single_rng(common.seed);
            let (path, omega) = match &env {
                Some(path) => {
                    let omega = read_env(path)?;
                    (run_quenched(&cfg, &omega, x0, &mut rng)?, omega)
                }
                None => run_annealed(&cfg, &mu, x0, &mut rng)?,
            };
            write_path_csv(&common.out, &path)?;
            if common.plot_data {
                write_plot_csv(&common.out, &[("diffusion", plot_series(&path))])?;
            }
            write_manifest(&common.out, "simulate-diffusion", common.seed, json!({
                "params": p, "measure": mu, "x0": x0, "horizon": horizon, "dt": dt,
                "quenched": env.is_some(), "env": omega,
            }))?;
            Ok(true)
        }
        Command::SimulateChain { common, kind, start, horizon, env } => {
            let (p, mu) = read_params(&common.params)?;
            let table = wfenv::SigmaTable::build(&mu, 256.max(start))?;
            let chain: ChainKind = kind.into();
            let mut rng = single_rng(common.seed);
            let (path, omega) = match &env {
                Some(path) => {
                    let omega = read_env(path)?;
                    let rev = omega.reversed();
                    (
                        chain_run_quenched(chain, start, &rev, horizon, &p, DEFAULT_STATE_CAP, &mut rng)?,
                        Some(omega),
                    )
                }
                None => (
                    chain_run_annealed(chain, start, horizon, &p, &table, DEFAULT_STATE_CAP, &mut rng)?,
                    None,
                ),
            };
            write_path_csv(&common.out, &path)?;
            if common.plot_data {
                write_plot_csv(&common.out, &[("chain", plot_series(&path))])?;
            }
            write_manifest(&common.out, "simulate-chain", common.seed, json!({
                "params": p, "measure": mu, "kind": match chain {
                    ChainKind::Killed => "killed",
                    ChainKind::Pldasg => "pldasg",
                    ChainKind::Siegmund => "siegmund",
                },
                "start": start, "horizon": horizon, "env": omega,
            }))?;
            Ok(true)
        }
        Command::SolveWn { common, k, tol } => {
            let (p, mu) = read_params(&common.params)?;
            let table = wfenv::SigmaTable::build(&mu, k as u64)?;
            let w = solve_wn(&p, &table, k, tol)?;
            write_json(&common.out, &serde_json::to_value(&w)?)?;
            if common.plot_data {
                let pts = (0..=w.k).map(|n| (n as f64, w.values[n])).collect();
                write_plot_csv(&common.out, &[("w_n", pts)])?;
            }
            write_manifest(&common.out, "solve-wn", common.seed, json!({
                "params": p, "measure": mu, "K": k, "tol": tol,
            }))?;
            Ok(true)
        }
        Command::SolveFearnhead { common, k, tol } => {
            let (p, mu) = read_params(&common.params)?;
            let table = wfenv::SigmaTable::build(&mu, k as u64)?;
            let a = solve_fearnhead(&p, &table, k, tol)?;
            let grid: Vec<serde_json::Value> = (0..=100)
                .map(|i| {
                    let x = i as f64 / 100.0;
                    let h = h_series(&a, x).expect("x in [0,1]");
                    json!({ "x": x, "h": h.value, "tail_bound": h.tail_bound })
                })
                .collect();
            write_json(&common.out, &json!({ "tails": a, "h": grid }))?;
            if common.plot_data {
                let pts = (0..=100)
                    .map(|i| {
                        let x = i as f64 / 100.0;
                        (x, h_series(&a, x).expect("x in [0,1]").value)
                    })
                    .collect();
                write_plot_csv(&common.out, &[("h", pts)])?;
            }
            write_manifest(&common.out, "solve-fearnhead", common.seed, json!({
                "params": p, "measure": mu, "K": k, "tol": tol,
            }))?;
            Ok(true)
        }
        Command::QuenchedMoments { common, env, n, kdim, tol, xs } => {
            let (p, _) = read_params(&common.params)?;
            if p.sigma != 0.0 {
                return Err(Error::Domain("quenched-moments requires sigma = 0".into()));
            }
            let omega = read_env(&env)?;
            let d = build_decomposition(DecompKind::Killed, p.theta, p.nu0, kdim)?;
            let coeffs = quenched_moment_coeffs(&d, &omega, n, tol)?;
            let mut moments = Vec::new();
            for &x in &xs {
                for m in 1..=n {
                    moments.push(json!({
                        "n": m, "x": x, "value": quenched_moment_eval(&coeffs, &d, m, x)?,
                    }));
                }
            }
            let c_n0: Vec<f64> = (1..=n).map(|m| coeffs.c[(d.idx(m as usize), d.idx(0))]).collect();
            write_json(&common.out, &json!({
                "n_max": n, "horizon": coeffs.horizon, "jumps": coeffs.jumps,
                "k_dim": kdim, "truncation_bound": coeffs.truncation_bound,
                "c_n0": c_n0, "moments": moments,
            }))?;
            write_manifest(&common.out, "quenched-moments", common.seed, json!({
                "params": p, "env": omega, "n": n, "kdim": kdim, "tol": tol, "x": xs,
            }))?;
            Ok(true)
        }
        Command::QuenchedWn { common, env, n, kdim, tol } => {
            let (p, _) = read_params(&common.params)?;
            if p.sigma != 0.0 {
                return Err(Error::Domain("quenched-wn requires sigma = 0".into()));
            }
            let omega = read_env(&env)?;
            let d = build_decomposition(DecompKind::Killed, p.theta, p.nu0, kdim)?;
            let w = quenched_wn(&d, &omega, n, tol)?;
            write_json(&common.out, &json!({ "n_max": n, "kdim": kdim, "values": w }))?;
            write_manifest(&common.out, "quenched-wn", common.seed, json!({
                "params": p, "env": omega, "n": n, "kdim": kdim, "tol": tol,
            }))?;
            Ok(true)
        }
        Command::QuenchedAncestral { common, env, kdim, tol, limit, xs } => {
            let (p, _) = read_params(&common.params)?;
            if p.sigma != 0.0 {
                return Err(Error::Domain("quenched-ancestral requires sigma = 0".into()));
            }
            let omega = read_env(&env)?;
            let d = build_decomposition(DecompKind::Pldasg, p.theta, p.nu0, kdim)?;
            let values: Vec<serde_json::Value> = if limit {
                let row = quenched_ancestral_limit(&d, &omega, tol)?;
                xs.iter()
                    .map(|&x| Ok(json!({ "x": x, "h": ancestral_eval_row(&d, &row, x)? })))
                    .collect::<Result<_>>()?
            } else {
                let coeffs = quenched_ancestral_coeffs(&d, &omega, tol)?;
                xs.iter()
                    .map(|&x| Ok(json!({ "x": x, "h": ancestral_eval(&coeffs, &d, x)? })))
                    .collect::<Result<_>>()?
            };
            write_json(&common.out, &json!({
                "limit": limit, "horizon": omega.horizon, "kdim": kdim, "values": values,
            }))?;
            write_manifest(&common.out, "quenched-ancestral", common.seed, json!({
                "params": p, "env": omega, "kdim": kdim, "tol": tol, "limit": limit, "x": xs,
            }))?;
            Ok(true)
        }
        Command::MixedEnv { common, env, n, k, kdim, tol } => {
            let (p, mu) = read_params(&common.params)?;
            if p.sigma != 0.0 {
                return Err(Error::Domain("mixed-env requires sigma = 0".into()));
            }
            let zeta = read_env(&env)?;
            let table = wfenv::SigmaTable::build(&mu, k as u64)?;
            let w = solve_wn(&p, &table, k, tol)?;
            let d = build_decomposition(DecompKind::Killed, p.theta, p.nu0, kdim)?;
            let m = mixed_env_moments(&d, &zeta, &w, n, tol)?;
            write_json(&common.out, &json!({ "n_max": n, "moments": m }))?;
            write_manifest(&common.out, "mixed-env", common.seed, json!({
                "params": p, "measure": mu, "env": zeta,
                "n": n, "K": k, "kdim": kdim, "tol": tol,
            }))?;
            Ok(true)
        }
        Command::DualityCheck { common, mode, n, x, horizon, dt, replicates, env, window } => {
            let (p, mu) = read_params(&common.params)?;
            let report: DualityReport = match mode {
                ModeArg::Annealed => {
                    duality_check_annealed(&p, &mu, n, x, horizon, dt, replicates, common.seed)?
                }
                ModeArg::Quenched => {
                    let path = env.as_ref().ok_or_else(|| {
                        Error::Domain("quenched mode needs --env".into())
                    })?;
                    duality_check_quenched(&p, &read_env(path)?, n, x, dt, replicates, common.seed)?
                }
                ModeArg::Reinforced => {
                    let w = match window.as_deref() {
                        Some([lo, hi]) => [*lo, *hi],
                        _ => {
                            return Err(Error::Domain("reinforced mode needs --window lo,hi".into()))
                        }
                    };
                    duality_check_reinforced(
                        &p, &mu, n, x, horizon, dt, (w[0], w[1]), replicates, common.seed,
                    )?
                }
                ModeArg::Ancestral => {
                    ancestral_check(&p, &mu, x, horizon, dt, replicates, common.seed)?
                }
            };
            write_json(&common.out, &serde_json::to_value(&report)?)?;
            write_manifest(&common.out, "duality-check", common.seed, json!({
                "params": p, "measure": mu, "mode": match mode {
                    ModeArg::Annealed => "annealed",
                    ModeArg::Quenched => "quenched",
                    ModeArg::Reinforced => "reinforced",
                    ModeArg::Ancestral => "ancestral",
                },
                "n": n, "x": x, "horizon": horizon, "dt": dt,
                "replicates": replicates, "window": window,
            }))?;
            Ok(report.pass)
        }
        Command::CouplingExperiment { common, pop_size, env, delta, x0, horizon, replicates } => {
            let (p, _) = read_params(&common.params)?;
            let mp = MoranParams::new(pop_size, p.sigma, p.theta, p.nu0)?;
            let omega = read_env(&env)?;
            let (_, small) = omega.split(delta);
            let omega_delta: f64 = small.total_increment();
            let mut acc = RunningMoments::new();
            for r in 0..replicates {
                let mut rng = wfenv::rng::replicate_rng(common.seed, wfenv::rng::STREAM_FORWARD, r);
                let (_, _, sup) = moran_coupled_run(&mp, &omega, delta, x0, horizon, &mut rng)?;
                acc.push(sup);
            }
            let bound = omega_delta * ((1.0 + mp.sigma_n) * horizon + omega.total_increment()).exp();
            write_json(&common.out, &json!({
                "mean_sup": acc.mean(), "stderr": acc.stderr(), "bound": bound,
                "small_jump_mass": omega_delta, "replicates": replicates,
            }))?;
            write_manifest(&common.out, "coupling-experiment", common.seed, json!({
                "pop_size": pop_size, "sigma_n": p.sigma, "theta_n": p.theta, "nu0": p.nu0,
                "env": omega, "delta": delta, "x0": x0, "horizon": horizon,
                "replicates": replicates,
            }))?;
            Ok(true)
        }
        Command::EnvSample { common, horizon } => {
            let (_, mu) = read_params(&common.params)?;
            let omega = env_sample(&mu, horizon, &mut single_rng(common.seed))?;
            write_json(&common.out, &serde_json::to_value(&omega)?)?;
            write_manifest(&common.out, "env-sample", common.seed, json!({
                "measure": mu, "horizon": horizon,
            }))?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("check FAILED: estimates differ by more than 3 combined standard errors");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
