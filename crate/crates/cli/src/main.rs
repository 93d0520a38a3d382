//! `wflab`: config-driven experiment runner. Every subcommand resolves its
//! parameters from defaults, an optional TOML config, and command-line
//! flags (later sources win), runs the experiment, and writes CSV data, a
//! JSON summary with per-check pass/fail, and a resolved-config copy.
//!
//! Exit codes: 0 on success, 1 on validation failure, 2 when the run
//! completes but an acceptance check fails.

mod config;
mod experiments;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::{resolved_json, resolved_toml, KeyBag, Resolved};
use experiments::{Check, RunOutput};
use wf_core::engine;
use wf_core::report;

#[derive(Parser)]
#[command(name = "wflab", version, about = "Wright-Fisher simulation experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML config file; command-line flags override its keys.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replicate count.
    #[arg(long)]
    reps: Option<u64>,
    /// Worker threads (default: logical cores).
    #[arg(long)]
    threads: Option<u64>,
    /// Output directory (default: out/<experiment>).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Long-run moments of the single-host kernel against closed forms.
    KernelInvariant {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        burn_in: Option<u64>,
    },
    /// Invariant density by fixed-point solve, checked against exact moments.
    DensitySolve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        grid: Option<u64>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<u64>,
    },
    /// Forward moment against the exact block-counting dual.
    DualityNeutral {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        z: Option<f64>,
        #[arg(long)]
        m: Option<u64>,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Forward moment against the branching dual with selection and mutation.
    DualityFtw {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        z: Option<f64>,
        #[arg(long)]
        m: Option<u64>,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        theta0: Option<f64>,
        #[arg(long)]
        theta1: Option<f64>,
        /// Selection weights, comma-separated (for example "0.3,0.15").
        #[arg(long)]
        sigma: Option<String>,
    },
    /// Exact dual absorption probabilities and their small-scale ratios.
    Absorption {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        theta0: Option<f64>,
        #[arg(long)]
        theta1: Option<f64>,
        #[arg(long)]
        m_max: Option<u64>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Geometric decay of neutral heterozygosity.
    Heterozygosity {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        z0: Option<f64>,
        #[arg(long)]
        n_max: Option<u64>,
    },
    /// Fixed point and coupled-gap contraction of the measure-dependent chain.
    NonlinearErgodicity {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        a: Option<f64>,
        #[arg(long)]
        b: Option<f64>,
        #[arg(long)]
        c: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        n: Option<u64>,
    },
    /// Stationary variance of the self-referencing perturbation family.
    Perturbation {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        a: Option<f64>,
        #[arg(long)]
        b: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        n: Option<u64>,
    },
    /// Transport error of the M-host empirical law across host counts.
    ChaosRate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        a: Option<f64>,
        #[arg(long)]
        b: Option<f64>,
        #[arg(long)]
        c: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        /// Host counts, comma-separated (for example "16,64,256,1024").
        #[arg(long)]
        hosts: Option<String>,
        #[arg(long)]
        n: Option<u64>,
    },
    /// Rescaled chains against the limiting diffusion across scales.
    ScalingLimit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        theta0: Option<f64>,
        #[arg(long)]
        theta1: Option<f64>,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        /// Scales N, comma-separated (for example "100,400,1600").
        #[arg(long)]
        scales: Option<String>,
    },
    /// Interacting two-level system against its closed-form Beta law.
    CaseStudy {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        theta0: Option<f64>,
        #[arg(long)]
        theta1: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        t: Option<f64>,
    },
    /// Empirical W1 between two Beta laws against the closed form.
    BetaW1 {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        a1: Option<f64>,
        #[arg(long)]
        b1: Option<f64>,
        #[arg(long)]
        a2: Option<f64>,
        #[arg(long)]
        b2: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
    },
}

#[derive(Serialize)]
struct Summary {
    experiment: &'static str,
    build: &'static str,
    params: serde_json::Value,
    results: serde_json::Value,
    checks: Vec<Check>,
    pass: bool,
}

/// Environment keys shared by every experiment, resolved after the
/// experiment keys so `finish` can reject leftovers.
struct Env {
    seed: u64,
    threads: Option<usize>,
    out: PathBuf,
    resolved: Vec<(String, Resolved)>,
}

fn env_keys(mut bag: KeyBag, common: &Common, experiment: &'static str) -> Result<Env> {
    let seed = bag.u64("seed", common.seed, 0)?;
    let threads = bag.u64_silent("threads", common.threads)?.map(|t| t as usize);
    let out = bag
        .string_silent("out", common.out.as_ref().map(|p| p.display().to_string()))?
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new("out").join(experiment));
    let resolved = bag.finish()?;
    Ok(Env { seed, threads, out, resolved })
}

fn no_reps(common: &Common, experiment: &str) -> Result<()> {
    if common.reps.is_some() {
        bail!("experiment `{experiment}` takes no --reps");
    }
    Ok(())
}

fn emit(env: &Env, experiment: &'static str, output: &RunOutput) -> Result<()> {
    for (name, content) in &output.files {
        report::write_text(&env.out.join(name), content)?;
    }
    let summary = Summary {
        experiment,
        build: env!("WF_BUILD_ID"),
        params: resolved_json(&env.resolved),
        results: output.results.clone(),
        checks: output.checks.clone(),
        pass: output.pass(),
    };
    let json = serde_json::to_string_pretty(&summary)? + "\n";
    report::write_text(&env.out.join("summary.json"), &json)?;
    report::write_text(
        &env.out.join("resolved.toml"),
        &resolved_toml(experiment, &env.resolved),
    )?;
    Ok(())
}

fn finish(env: Env, experiment: &'static str, output: RunOutput) -> Result<bool> {
    emit(&env, experiment, &output)?;
    let pass = output.pass();
    if pass {
        println!("ok {experiment}: all checks passed -> {}", env.out.display());
    } else {
        let failed: Vec<&str> = output
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name)
            .collect();
        println!(
            "FAIL {experiment}: {} -> {}",
            failed.join(", "),
            env.out.display()
        );
    }
    Ok(pass)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::KernelInvariant { common, delta, p, burn_in } => {
            let name = "kernel-invariant";
            let mut bag = KeyBag::load(name, common.config.as_deref())?;
            let args = experiments::KernelInvariantArgs {
                delta: bag.f64("delta", delta, 0.5)?,
                p: bag.f64("p", p, 0.5)?,
                burn_in: bag.u64("burn_in", burn_in, 200)?,
                reps: bag.u64("reps", common.reps, 100_000)?,
                seed: 0,
            };
            let env = env_keys(bag, &common, name)?;
            let args = experiments::KernelInvariantArgs { seed: env.seed, ..args };
            let out = engine::run_with_threads(env.threads, || experiments::kernel_invariant(args))?;
            finish(env, name, out)
        }
        Cmd::DensitySolve { common, delta, p, grid, tol, max_iter } => {
            let name = "density-solve";
            no_reps(&common, name)?;
            let mut bag = KeyBag::load(name, common.config.as_deref())?;
            let args = experiments::DensitySolveArgs {
                delta: bag.f64("delta", delta, 0.5)?,
                p: bag.f64("p", p, 0.5)?,
                grid: bag.u64("grid", grid, wf_core::kernel::DENSITY_GRID_DEFAULT as u64)?,
                tol: bag.f64("tol", tol, wf_core::kernel::DENSITY_TOL_DEFAULT)?,
                max_iter: bag.u64("max_iter", max_iter, wf_core::kernel::DENSITY_MAX_ITER_DEFAULT)?,
            };
            let env = env_keys(bag, &common, name)?;
            let out = engine::run_with_threads(env.threads, || experiments::density_solve(args))?;
            finish(env, name, out)
        }
        Cmd::DualityNeutral { common, z, m, n, delta } => {
            let name = "duality-neutral";
            let mut bag = KeyBag::load(name, common.config.as_deref())?;
            let args = experiments::DualityNeutralArgs {
                z: bag.f64("z", z, 0.5)?,
                m: bag.u64("m", m, 3)?,
                n: bag.u64("n", n, 10)?,
                delta: bag.f64("delta", delta, 0.7)?,
                reps: bag.u64("reps", common.reps, 1_000_000)?,
                seed: 0,
            };
            let env = env_keys(bag, &common, name)?;
            let args = experiments::DualityNeutralArgs { seed: env.seed, ..args };
            let out = engine::run_with_threads(env.threads, || experiments::duality_neutral(args))?;
            finish(env, name, out)
        }
        Cmd::DualityFtw { common, z, m, n, delta, theta0, theta1, sigma } => {
            let name = "duality-ftw";
            let mut bag = KeyBag::load(name, common.config.as_deref())?;
            let args = experiments::DualityFtwArgs {
                z: bag.f64("z", z, 0.4)?,
                m: bag.u64("m", m, 2)?,
                n: bag.u64("n", n, 4)?,
                delta: bag.f64("delta", delta, 0.4)?,
                theta0: bag.f64("theta0", theta0, 0.3)?,
                theta1: bag.f64("theta1", theta1, 0.2)?,
                sigma: bag.list_f64("sigma", sigma.as_deref(), &[0.3, 0.15])?,
                reps: bag.u64("reps", common.reps, 1_000_000)?,
                seed: 0,
            };
            let env = env_keys(bag, &common, name)?;
            let args = experiments::DualityFtwArgs { seed: env.seed, ..args };
            let out = engine::run_with_threads(env.threads, || experiments::duality_ftw(args))?;
            finish(env, name, out)
        }
        Cmd::Absorption { common, delta, theta0, theta1, m_max, tol } => {
            let name = "absorption";
            no_reps(&common, name)?;
            let mut bag = KeyBag::load(name, common.config.as_deref())?;
            let args = experiments::AbsorptionArgs {
                delta: bag.f64("delta", delta, 0.025)?,
                theta0: bag.f64("theta0", theta0, 0.8)?,
                theta1: bag.f64("theta1", theta1, 0.6)?,
                m_max: bag.u64("m_max", m_max, 4)?,
                tol: bag.f64("tol", tol, 0.01)?,
            };
            let env = env_keys(bag, &common, name)?;
            let out = engine::run_with_threads(env.threads, || experiments::absorption(args))?;
            finish(env, name, out)
        }
        Cmd::Heterozygosity { common, delta, z0, n_max } => {
            let name = "heterozygosity";
            let mut bag = KeyBag::load(name, common.config.as_deref())?;
            let args = experiments::HeterozygosityArgs {
                delta: bag.f64("delta", delta, 0.3)?,
                z0: bag.f64("z0", z0, 0.5)?,
                n_max: bag.u64("n_max", n_max, 30)?,
                reps: bag.u64("reps", common.reps, 100_000)?,
                seed: 0,
            };
            let env = env_keys(bag, &common, name)?;
            let args = experiments::HeterozygosityArgs { seed: env.seed, ..args };
            let out = engine::run_with_threads(env.threads, || experiments::heterozygosity(args))?;
            finish(env, name, out)
        }
        Cmd::NonlinearErgodicity { common, a, b, c, delta, n } => {
            let name = "nonlinear-ergodicity";
            let mut bag = KeyBag::load(name, common.config.as_deref())?;
            let args = experiments::NonlinearErgodicityArgs {
                a: bag.f64("a", a, 0.2)?,
                b: bag.f64("b", b, 0.1)?,
                c: bag.f64("c", c, 0.3)?,
                delta: bag.f64("delta", delta, 0.5)?,
                n: bag.u64("n", n, 20)?,
                reps: bag.u64("reps", common.reps, 40_000)?,
                seed: 0,
            };
            let env = env_keys(bag, &common, name)?;
            let args = experiments::NonlinearErgodicityArgs { seed: env.seed, ..args };
            let out =
                engine::run_with_threads(env.threads, || experiments::nonlinear_ergodicity(args))?;
            finish(env, name, out)
        }
        Cmd::Perturbation { common, a, b, epsilon, delta, n } => {
            let name = "perturbation";
            let mut bag = KeyBag::load(name, common.config.as_deref())?;
            let args = experiments::PerturbationArgs {
                a: bag.f64("a", a, 0.3)?,
                b: bag.f64("b", b, 0.4)?,
                epsilon: bag.f64("epsilon", epsilon, 0.5)?,
                delta: bag.f64("delta", delta, 0.5)?,
                n: bag.u64("n", n, 10)?,
                reps: bag.u64("reps", common.reps, 200_000)?,
                seed: 0,
            };
            let env = env_keys(bag, &common, name)?;
            let args = experiments::PerturbationArgs { seed: env.seed, ..args };
            let out = engine::run_with_threads(env.threads, || experiments::perturbation(args))?;
            finish(env, name, out)
        }
        Cmd::ChaosRate { common, a, b, c, delta, hosts, n } => {
            let name = "chaos-rate";
            let mut bag = KeyBag::load(name, common.config.as_deref())?;
            let args = experiments::ChaosRateArgs {
                a: bag.f64("a", a, 0.1)?,
                b: bag.f64("b", b, 0.2)?,
                c: bag.f64("c", c, 0.3)?,
                delta: bag.f64("delta", delta, 0.5)?,
                hosts: bag.list_u64("hosts", hosts.as_deref(), &[16, 64, 256, 1024])?,
                n: bag.u64("n", n, 100)?,
                reps: bag.u64("reps", common.reps, 10_000)?,
                seed: 0,
            };
            let env = env_keys(bag, &common, name)?;
            let args = experiments::ChaosRateArgs { seed: env.seed, ..args };
            let out = engine::run_with_threads(env.threads, || experiments::chaos_rate(args))?;
            finish(env, name, out)
        }
        Cmd::ScalingLimit { common, theta0, theta1, t, dt, scales } => {
            let name = "scaling-limit";
            let mut bag = KeyBag::load(name, common.config.as_deref())?;
            let args = experiments::ScalingLimitArgs {
                theta0: bag.f64("theta0", theta0, 0.8)?,
                theta1: bag.f64("theta1", theta1, 0.6)?,
                t: bag.f64("t", t, 1.0)?,
                dt: bag.f64("dt", dt, 1e-4)?,
                scales: bag.list_u64("scales", scales.as_deref(), &[100, 400, 1600])?,
                reps: bag.u64("reps", common.reps, 100_000)?,
                seed: 0,
            };
            let env = env_keys(bag, &common, name)?;
            let args = experiments::ScalingLimitArgs { seed: env.seed, ..args };
            let out = engine::run_with_threads(env.threads, || experiments::scaling_limit(args))?;
            finish(env, name, out)
        }
        Cmd::CaseStudy { common, theta0, theta1, gamma, n, t } => {
            let name = "case-study";
            let mut bag = KeyBag::load(name, common.config.as_deref())?;
            let args = experiments::CaseStudyArgs {
                theta0: bag.f64("theta0", theta0, 0.8)?,
                theta1: bag.f64("theta1", theta1, 0.6)?,
                gamma: bag.f64("gamma", gamma, 3.0)?,
                n: bag.u64("n", n, 600)?,
                t: bag.f64("t", t, 10.0)?,
                reps: bag.u64("reps", common.reps, 100_000)?,
                seed: 0,
            };
            let env = env_keys(bag, &common, name)?;
            let args = experiments::CaseStudyArgs { seed: env.seed, ..args };
            let out = engine::run_with_threads(env.threads, || experiments::case_study(args))?;
            finish(env, name, out)
        }
        Cmd::BetaW1 { common, a1, b1, a2, b2, tol } => {
            let name = "beta-w1";
            let mut bag = KeyBag::load(name, common.config.as_deref())?;
            let args = experiments::BetaW1Args {
                a1: bag.f64("a1", a1, 1.0)?,
                b1: bag.f64("b1", b1, 1.0)?,
                a2: bag.f64("a2", a2, 1.5)?,
                b2: bag.f64("b2", b2, 0.5)?,
                reps: bag.u64("reps", common.reps, 1_000_000)?,
                tol: bag.f64("tol", tol, 0.003)?,
                seed: 0,
            };
            let env = env_keys(bag, &common, name)?;
            let args = experiments::BetaW1Args { seed: env.seed, ..args };
            let out = engine::run_with_threads(env.threads, || experiments::beta_w1(args))?;
            finish(env, name, out)
        }
    }
}

fn main() -> ExitCode {
    match Cli::try_parse() {
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            ExitCode::SUCCESS
        }
        Err(e) => {
            // Unknown flags and malformed values are validation failures.
            let _ = e.print();
            ExitCode::from(1)
        }
        Ok(cli) => match run(cli) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(2),
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        },
    }
}
