//! stoshield: edge-importance analysis and stochastic-shielding reductions
//! for OU processes on reaction graphs.
//!
//! Node and edge indices are 0-based everywhere (command lines, CSV, JSON).
//! Published figures for the 3-state example number edges 1-4; subtract one.
//!
//! Exit codes: 0 ok, 2 configuration/schema, 3 numerical stability,
//! 4 sampling, 5 validation failure.

mod manifest;
mod validate;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use stoshield_core::channels::{
    occupancy_csv, occupancy_curves, sweep_csv, voltage_grid, voltage_sweep_importance,
    ChannelKind,
};
use stoshield_core::ensembles::{
    self, graded_experiment, moment_report, rk_cluster_experiment, s_sweep, ErConfig,
};
use stoshield_core::error::Error;
use stoshield_core::graph::{parse_network_json, MeasurementVector, NetworkInput};
use stoshield_core::importance::{
    edge_importance, importance_csv, optimal_reduction, total_deficiency, ReductionPlan,
};
use stoshield_core::ou_sim::{deficiency_stats, simulate_ensemble, SimConfig};
use stoshield_core::population::{
    discrete_multinomial, population_shielding_error_detailed, ssa_exact,
    stationary_integer_state, tau_leap, PairedPopConfig, PopMethod, ShieldingMask, Trajectory,
};
use stoshield_core::spectral::eigendecompose;

use manifest::ManifestWriter;

#[derive(Parser)]
#[command(
    name = "stoshield",
    version,
    about = "Edge importance and stochastic shielding for OU processes on reaction graphs",
    long_about = None
)]
struct Cli {
    /// Worker threads (falls back to STOSHIELD_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SimMode {
    Ou,
    Ssa,
    Tauleap,
    Multinomial,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Experiment {
    Moments,
    SStat,
    Clusters,
    Graded,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Channel {
    #[value(name = "K", alias = "k")]
    K,
    #[value(name = "Na", alias = "na")]
    Na,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Fast,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Edge importances R_k, ranking, and the optimal reduction plan.
    Importance {
        /// Network JSON file.
        network: PathBuf,
        /// Number of edges to neglect in the reported plan.
        #[arg(long, default_value_t = 0)]
        budget: usize,
        /// Measurement vector, comma separated (overrides the file's).
        #[arg(long)]
        measurement: Option<String>,
        /// Output CSV; the plan goes to `<out>.plan.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate the full/reduced pair (ou) or the population process.
    Simulate {
        network: PathBuf,
        #[arg(long, value_enum)]
        mode: SimMode,
        /// Edges neglected in the reduced OU process, comma separated.
        #[arg(long)]
        plan: Option<String>,
        /// Edges whose fluctuations are shielded in population modes.
        #[arg(long)]
        mask: Option<String>,
        /// Measurement vector override.
        #[arg(long)]
        measurement: Option<String>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        /// Multinomial step size.
        #[arg(long)]
        h: Option<f64>,
        #[arg(long, default_value_t = 100.0)]
        t_final: f64,
        #[arg(long, default_value_t = 0.0)]
        burn_in: f64,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Total population for ssa/tauleap/multinomial.
        #[arg(long)]
        ntot: Option<u64>,
        /// Stats JSON output path.
        #[arg(long)]
        out: PathBuf,
        /// Optional trajectory CSV (decimated by --stride).
        #[arg(long)]
        traj: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        stride: usize,
    },
    /// Random-graph ensemble experiments (figure data exports).
    Ensemble {
        #[arg(long, value_enum)]
        experiment: Experiment,
        /// Node count; comma list for moments / s-stat sweeps.
        #[arg(long)]
        n: String,
        /// Edge probability; comma list allowed for s-stat.
        #[arg(long)]
        p: String,
        #[arg(long, default_value_t = 10)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Ones count of the binary measurement (clusters; default n/2).
        #[arg(long)]
        n1: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Hodgkin-Huxley channel sweeps: R_k(V), current variance, occupancy.
    Hh {
        #[arg(long, value_enum)]
        channel: Channel,
        #[arg(long, default_value_t = -100.0, allow_negative_numbers = true)]
        vmin: f64,
        #[arg(long, default_value_t = 100.0, allow_negative_numbers = true)]
        vmax: f64,
        #[arg(long, default_value_t = 1.0)]
        dv: f64,
        #[arg(long, default_value_t = 1.0)]
        ntot: f64,
        /// Sweep CSV output; occupancy goes to --occupancy-out or
        /// `<out stem>_occupancy.csv`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        occupancy_out: Option<PathBuf>,
    },
    /// Run the built-in invariant suites and print pass/fail lines.
    Validate {
        #[arg(long, value_enum, default_value_t = Suite::Fast)]
        suite: Suite,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| {
        std::env::var("STOSHIELD_THREADS").ok().and_then(|v| v.parse().ok())
    });
    if let Some(t) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::SchemaError { .. }
        | Error::InvalidInput { .. }
        | Error::DimensionMismatch { .. }
        | Error::NodeOutOfRange { .. }
        | Error::SelfLoop { .. }
        | Error::DuplicateEdge { .. }
        | Error::NonPositiveRate { .. }
        | Error::IndexError { .. }
        | Error::IrreducibleViolation => 2,
        Error::StabilityError { .. } | Error::TauTooLarge { .. } | Error::StepTooLarge { .. } => 3,
        Error::ConnectivityError { .. } => 4,
        Error::DegenerateKernel | Error::DefectiveMatrix { .. } | Error::SpectralSingularity => 1,
    }
}

fn run(cmd: Command) -> Result<ExitCode, Error> {
    match cmd {
        Command::Importance { network, budget, measurement, out } => {
            cmd_importance(&network, budget, measurement.as_deref(), &out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate {
            network,
            mode,
            plan,
            mask,
            measurement,
            dt,
            tau,
            h,
            t_final,
            burn_in,
            trials,
            seed,
            ntot,
            out,
            traj,
            stride,
        } => {
            let args = SimulateArgs {
                mode,
                plan,
                mask,
                measurement,
                dt,
                tau,
                h,
                t_final,
                burn_in,
                trials,
                seed,
                ntot,
                traj,
                stride,
            };
            cmd_simulate(&network, &args, &out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Ensemble { experiment, n, p, samples, seed, n1, out } => {
            cmd_ensemble(experiment, &n, &p, samples, seed, n1, &out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Hh { channel, vmin, vmax, dv, ntot, out, occupancy_out } => {
            cmd_hh(channel, vmin, vmax, dv, ntot, &out, occupancy_out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { suite } => {
            let ok = validate::run_suite(suite == Suite::Full);
            if ok {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(5))
            }
        }
    }
}

fn load_network(path: &Path) -> Result<NetworkInput, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::SchemaError {
        context: format!("cannot read {}: {e}", path.display()),
    })?;
    parse_network_json(&text)
}

fn parse_measurement(
    input: &NetworkInput,
    flag: Option<&str>,
) -> Result<MeasurementVector, Error> {
    if let Some(text) = flag {
        let entries = parse_f64_list(text)?;
        if entries.len() != input.network.num_nodes() {
            return Err(Error::SchemaError {
                context: format!(
                    "--measurement has {} entries for {} nodes",
                    entries.len(),
                    input.network.num_nodes()
                ),
            });
        }
        return MeasurementVector::new(entries);
    }
    input.measurement.clone().ok_or_else(|| Error::SchemaError {
        context: "no measurement in the network file; pass --measurement".into(),
    })
}

fn parse_f64_list(text: &str) -> Result<Vec<f64>, Error> {
    text.split(',')
        .map(|s| {
            s.trim().parse::<f64>().map_err(|_| Error::SchemaError {
                context: format!("cannot parse {s:?} as a number"),
            })
        })
        .collect()
}

fn parse_usize_list(text: &str) -> Result<Vec<usize>, Error> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim().parse::<usize>().map_err(|_| Error::SchemaError {
                context: format!("cannot parse {s:?} as an index"),
            })
        })
        .collect()
}

fn cmd_importance(
    network: &Path,
    budget: usize,
    measurement: Option<&str>,
    out: &Path,
) -> Result<(), Error> {
    let mut manifest = ManifestWriter::start();
    let input = load_network(network)?;
    let m = parse_measurement(&input, measurement)?;
    let eig = eigendecompose(&input.network.laplacian(), false)?;
    let report = edge_importance(&input.network, &eig, &m, &input.noise)?;
    let plan = optimal_reduction(&report, budget)?;

    manifest.write_text(out, &importance_csv(&input.network, &report))?;
    let plan_path = out.with_extension("plan.json");
    let ranking = &report.ranking;
    let plan_json = serde_json::json!({
        "budget": budget,
        "neglected": plan.neglected,
        "predicted_error": plan.predicted_error,
        "ranking": ranking,
        "total_variance": report.values.iter().sum::<f64>(),
    });
    manifest.write_json(&plan_path, &plan_json)?;

    manifest.finish(
        out,
        serde_json::json!({
            "command": "importance",
            "network": network.display().to_string(),
            "budget": budget,
            "measurement": m.entries.as_slice(),
        }),
        0,
    )
}

struct SimulateArgs {
    mode: SimMode,
    plan: Option<String>,
    mask: Option<String>,
    measurement: Option<String>,
    dt: Option<f64>,
    tau: Option<f64>,
    h: Option<f64>,
    t_final: f64,
    burn_in: f64,
    trials: usize,
    seed: u64,
    ntot: Option<u64>,
    traj: Option<PathBuf>,
    stride: usize,
}

fn require<T: Copy>(v: Option<T>, what: &str) -> Result<T, Error> {
    v.ok_or_else(|| Error::SchemaError { context: format!("{what} is required for this mode") })
}

fn cmd_simulate(network: &Path, args: &SimulateArgs, out: &Path) -> Result<(), Error> {
    let mut manifest = ManifestWriter::start();
    let input = load_network(network)?;
    let net = &input.network;

    let config_echo = |mode: &str| {
        serde_json::json!({
            "command": "simulate",
            "network": network.display().to_string(),
            "mode": mode,
            "plan": args.plan, "mask": args.mask,
            "dt": args.dt, "tau": args.tau, "h": args.h,
            "t_final": args.t_final, "burn_in": args.burn_in,
            "trials": args.trials, "seed": args.seed, "ntot": args.ntot,
            "stride": args.stride,
        })
    };

    match args.mode {
        SimMode::Ou => {
            let m = parse_measurement(&input, args.measurement.as_deref())?;
            let dt = require(args.dt, "--dt")?;
            let neglected = match &args.plan {
                Some(p) => parse_usize_list(p)?,
                None => Vec::new(),
            };
            let eig = eigendecompose(&net.laplacian(), false)?;
            let report = edge_importance(net, &eig, &m, &input.noise)?;
            let mut plan = ReductionPlan { neglected, predicted_error: 0.0 };
            plan.predicted_error = total_deficiency(&report, &plan)?;

            let mut cfg = SimConfig::new(dt, args.t_final, args.burn_in, args.seed, args.trials);
            cfg.stride = args.stride.max(1);
            cfg.store_states = args.traj.is_some();
            let paths = simulate_ensemble(net, &m, &input.noise, &plan, &cfg)?;
            let stats = deficiency_stats(&paths, &m, cfg.burn_in)?;

            if let Some(traj_path) = &args.traj {
                let mut csv = String::from("t");
                for i in 0..net.num_nodes() {
                    csv.push_str(&format!(",x_{i}"));
                }
                for i in 0..net.num_nodes() {
                    csv.push_str(&format!(",x_reduced_{i}"));
                }
                csv.push('\n');
                let p0 = &paths[0];
                let (xs, xts) = (p0.x.as_ref().unwrap(), p0.x_tilde.as_ref().unwrap());
                for (i, &t) in p0.times.iter().enumerate() {
                    csv.push_str(&format!("{t:.16e}"));
                    for v in xs[i].iter() {
                        csv.push_str(&format!(",{v:.16e}"));
                    }
                    for v in xts[i].iter() {
                        csv.push_str(&format!(",{v:.16e}"));
                    }
                    csv.push('\n');
                }
                manifest.write_text(traj_path, &csv)?;
            }

            manifest.write_json(
                out,
                &serde_json::json!({
                    "mode": "ou",
                    "plan": plan.neglected,
                    "predicted": plan.predicted_error,
                    "empirical": stats.empirical_mse,
                    "stderr": stats.stderr,
                    "horizon_ok": stats.horizon_ok,
                }),
            )?;
            manifest.finish(out, config_echo("ou"), args.seed)
        }
        SimMode::Ssa => {
            let ntot = require(args.ntot, "--ntot")?;
            let n0 = stationary_integer_state(net, ntot)?;
            let sample_dt = args.dt.unwrap_or(0.1);
            let traj = ssa_exact(net, &n0, args.t_final, sample_dt, args.seed)?;
            write_population_outputs(&mut manifest, net, &traj, args, out)?;
            manifest.finish(out, config_echo("ssa"), args.seed)
        }
        SimMode::Tauleap | SimMode::Multinomial => {
            let ntot = require(args.ntot, "--ntot")?;
            let (method, step) = match args.mode {
                SimMode::Tauleap => (PopMethod::TauLeap, require(args.tau, "--tau")?),
                _ => (PopMethod::Multinomial, require(args.h, "--h")?),
            };
            let mask: ShieldingMask = match &args.mask {
                Some(t) => parse_usize_list(t)?.into_iter().collect(),
                None => BTreeSet::new(),
            };
            let n0: Vec<f64> =
                stationary_integer_state(net, ntot)?.iter().map(|&c| c as f64).collect();
            let traj = match method {
                PopMethod::TauLeap => {
                    tau_leap(net, &n0, step, args.t_final, args.seed, &mask, args.stride.max(1))?
                }
                PopMethod::Multinomial => discrete_multinomial(
                    net,
                    &n0,
                    step,
                    args.t_final,
                    args.seed,
                    &mask,
                    args.stride.max(1),
                )?,
            };

            // paired shielded-vs-full error when a mask is given
            let (predicted, empirical, stderr) = if mask.is_empty() {
                (0.0, 0.0, 0.0)
            } else {
                let m = parse_measurement(&input, args.measurement.as_deref())?;
                let eig = eigendecompose(&net.laplacian(), false)?;
                let unit = edge_importance(
                    net,
                    &eig,
                    &m,
                    &stoshield_core::graph::NoiseSpec::Unit,
                )?;
                let sigmas = stoshield_core::graph::NoiseSpec::StationaryFlux {
                    population: ntot as f64,
                }
                .sigmas(net)?;
                let predicted: f64 =
                    mask.iter().map(|&k| sigmas[k] * sigmas[k] * unit.values[k]).sum();
                let cfg = PairedPopConfig {
                    step,
                    t_final: args.t_final,
                    burn_in: args.burn_in,
                    trials: args.trials,
                    seed: args.seed,
                };
                let (emp, se) =
                    population_shielding_error_detailed(net, &m, ntot, &mask, method, &cfg)?;
                (predicted, emp, se)
            };

            let mean = traj.stationary_mean(args.burn_in);
            let variance = traj.stationary_variance(args.burn_in);
            manifest.write_json(
                out,
                &serde_json::json!({
                    "mode": if method == PopMethod::TauLeap { "tauleap" } else { "multinomial" },
                    "mask": mask.iter().copied().collect::<Vec<_>>(),
                    "predicted": predicted,
                    "empirical": empirical,
                    "stderr": stderr,
                    "stationary_mean": mean,
                    "stationary_variance": variance,
                    "clamped_steps": traj.clamped_steps,
                    "flagged_invalid": traj.flagged_invalid(),
                }),
            )?;
            if let Some(traj_path) = &args.traj {
                manifest.write_text(traj_path, &population_csv(net, &traj))?;
            }
            manifest.finish(out, config_echo("population"), args.seed)
        }
    }
}

fn write_population_outputs(
    manifest: &mut ManifestWriter,
    net: &stoshield_core::graph::ReactionNetwork,
    traj: &Trajectory,
    args: &SimulateArgs,
    out: &Path,
) -> Result<(), Error> {
    let mean = traj.stationary_mean(args.burn_in);
    let variance = traj.stationary_variance(args.burn_in);
    manifest.write_json(
        out,
        &serde_json::json!({
            "mode": "ssa",
            "stationary_mean": mean,
            "stationary_variance": variance,
            "events": traj.total_steps,
        }),
    )?;
    if let Some(traj_path) = &args.traj {
        manifest.write_text(traj_path, &population_csv(net, traj))?;
    }
    Ok(())
}

fn population_csv(net: &stoshield_core::graph::ReactionNetwork, traj: &Trajectory) -> String {
    let mut csv = String::from("t");
    for i in 0..net.num_nodes() {
        csv.push_str(&format!(",N_{i}"));
    }
    csv.push('\n');
    for (i, &t) in traj.times.iter().enumerate() {
        csv.push_str(&format!("{t:.16e}"));
        for v in &traj.states[i] {
            csv.push_str(&format!(",{v:.16e}"));
        }
        csv.push('\n');
    }
    csv
}

fn cmd_ensemble(
    experiment: Experiment,
    n_text: &str,
    p_text: &str,
    samples: usize,
    seed: u64,
    n1: Option<usize>,
    out: &Path,
) -> Result<(), Error> {
    let mut manifest = ManifestWriter::start();
    let ns = parse_usize_list(n_text)?;
    let ps = parse_f64_list(p_text)?;
    if ns.is_empty() || ps.is_empty() {
        return Err(Error::SchemaError { context: "--n and --p must be non-empty".into() });
    }
    let single = |xs: &[usize]| -> Result<usize, Error> {
        if xs.len() != 1 {
            return Err(Error::SchemaError {
                context: "this experiment takes a single --n".into(),
            });
        }
        Ok(xs[0])
    };

    let (name, summary) = match experiment {
        Experiment::Moments => {
            let report = moment_report(&ns, ps[0], samples, seed)?;
            manifest.write_text(out, &ensembles::csv::moments(&report))?;
            let summary = serde_json::json!({
                "q_fit": report.q_fit,
                "n_grid": ns,
                "p": ps[0],
                "samples": samples,
            });
            manifest.write_json(&out.with_extension("summary.json"), &summary)?;
            ("moments", summary)
        }
        Experiment::SStat => {
            let rows = s_sweep(&ns, &ps, samples, seed)?;
            manifest.write_text(out, &ensembles::csv::s_stat(&rows))?;
            let worst = rows
                .iter()
                .filter(|r| r.n == *ns.iter().max().unwrap())
                .map(|r| (r.s2pn - 1.0).abs())
                .fold(0.0f64, f64::max);
            ("s-stat", serde_json::json!({"worst_s2pn_deviation_at_max_n": worst}))
        }
        Experiment::Clusters => {
            let n = single(&ns)?;
            let cfg = ErConfig { n, p: ps[0], seed, samples };
            let report = rk_cluster_experiment(&cfg, n1.unwrap_or(n / 2))?;
            manifest.write_text(out, &ensembles::csv::clusters(&report))?;
            let summary = serde_json::json!({
                "important_mean": report.important_mean,
                "important_min": report.important_min,
                "unimportant_mean": report.unimportant_mean,
                "unimportant_max": report.unimportant_max,
                "mean_gap_ratio": report.mean_gap_ratio,
            });
            manifest.write_json(&out.with_extension("summary.json"), &summary)?;
            ("clusters", summary)
        }
        Experiment::Graded => {
            let n = single(&ns)?;
            let cfg = ErConfig { n, p: ps[0], seed, samples };
            let report = graded_experiment(&cfg)?;
            manifest.write_text(out, &ensembles::csv::graded(&report))?;
            let summary = serde_json::json!({"fit_a": report.fit_a, "points": report.points.len()});
            manifest.write_json(&out.with_extension("summary.json"), &summary)?;
            ("graded", summary)
        }
    };
    manifest.finish(
        out,
        serde_json::json!({
            "command": "ensemble",
            "experiment": name,
            "n": ns, "p": ps, "samples": samples, "n1": n1,
            "summary": summary,
        }),
        seed,
    )
}

fn cmd_hh(
    channel: Channel,
    vmin: f64,
    vmax: f64,
    dv: f64,
    ntot: f64,
    out: &Path,
    occupancy_out: Option<PathBuf>,
) -> Result<(), Error> {
    let mut manifest = ManifestWriter::start();
    let kind = match channel {
        Channel::K => ChannelKind::K,
        Channel::Na => ChannelKind::Na,
    };
    let grid = voltage_grid(vmin, vmax, dv)?;
    let sweep = voltage_sweep_importance(kind, &grid, ntot)?;
    manifest.write_text(out, &sweep_csv(&sweep))?;
    let occ = occupancy_curves(kind, &grid)?;
    let occ_path = occupancy_out.unwrap_or_else(|| {
        let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("sweep");
        out.with_file_name(format!("{stem}_occupancy.csv"))
    });
    manifest.write_text(&occ_path, &occupancy_csv(&grid, &occ))?;
    manifest.finish(
        out,
        serde_json::json!({
            "command": "hh",
            "channel": format!("{kind:?}"),
            "vmin": vmin, "vmax": vmax, "dv": dv, "ntot": ntot,
        }),
        0,
    )
}
