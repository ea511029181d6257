//! `ctree`: plan a scene, run closed-loop episodes and batches, and time the
//! solver against the number of branches. Results are CSV files.
//!
//! Exit status is 0 on success, 1 for bad usage or input, 2 when the
//! planner fails or does not converge.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use control_tree_sim::output::{self, OutputFile};
use control_tree_sim::plan::{plan_scene, PlanScene, ScenePlan};
use control_tree_sim::{
    linear_fit, run_batch, run_episode_traced, run_scale_bench, summarize, BatchConfig, Controller, ScaleBenchConfig,
    ScenarioConfig, SimError,
};
use log::{info, warn};

#[derive(Parser, Debug)]
#[command(name = "ctree", version, about = "Control-tree MPC planning and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// Input file (TOML). Its meaning depends on the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed override (base seed for batches).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Solver threads per solve.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    workers: Option<u64>,
    /// tree-full, tree-<N>, single or oracle.
    #[arg(long, global = true)]
    controller: Option<Controller>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    /// Pedestrian grid: 20 and 80 per km, several crossing fractions.
    PedestrianGrid,
    /// Slalom with 90% and 75% false positives.
    SlalomGrid,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Scenario {
    PedestrianAcc,
    Slalom,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one scene file and dump the tree and the residual history.
    Plan,
    /// Run one closed-loop episode.
    Episode {
        /// Built-in scenario used when no --config is given.
        #[arg(long, value_enum, default_value = "pedestrian-acc")]
        scenario: Scenario,
        /// Simulated seconds, overriding the scenario.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Run every (cell, seed, controller) episode of a batch file.
    Batch {
        /// Built-in grid used when no --config is given.
        #[arg(long, value_enum, default_value = "pedestrian-grid")]
        preset: Preset,
        /// Number of seeds, overriding the file.
        #[arg(long)]
        seeds: Option<usize>,
        /// Simulated seconds per episode, overriding the file.
        #[arg(long)]
        duration: Option<f64>,
        /// Episodes run concurrently (default: available cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Solve synthetic pedestrian trees of growing size, decomposed and not.
    ScaleBench {
        #[arg(long, value_delimiter = ',', default_value = "2,5,10,25,50,100")]
        counts: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        repetitions: usize,
        /// Skip the joint solve above this branch count.
        #[arg(long)]
        undecomposed_up_to: Option<usize>,
    },
}

enum Failure {
    Usage(String),
    Solve(String),
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        if e.is_solve_failure() {
            Failure::Solve(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Solve(msg)) => {
            eprintln!("solve failed: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let c = &cli.common;
    let workers = c.workers.map(|w| w as usize);
    match cli.command {
        Command::Plan => cmd_plan(c, workers),
        Command::Episode { scenario, duration } => cmd_episode(c, workers, scenario, duration),
        Command::Batch {
            preset,
            seeds,
            duration,
            jobs,
        } => cmd_batch(c, workers, preset, seeds, duration, jobs),
        Command::ScaleBench {
            counts,
            repetitions,
            undecomposed_up_to,
        } => cmd_scale_bench(c, counts, repetitions, undecomposed_up_to),
    }
}

fn write(files: &[OutputFile]) -> Result<(), Failure> {
    output::write_all(files)?;
    for f in files {
        info!("wrote {}", f.path.display());
    }
    Ok(())
}

fn cmd_plan(c: &Common, workers: Option<usize>) -> Result<(), Failure> {
    let path = c
        .config
        .as_deref()
        .ok_or_else(|| Failure::Usage("plan needs --config <scene.toml>".into()))?;
    let scene = PlanScene::from_file(path)?;
    let controller = c.controller.unwrap_or(Controller::TreeFull);
    let plan = plan_scene(&scene, controller, workers.unwrap_or(1))?;
    let tree = match &plan {
        ScenePlan::Acc(p) => output::acc_tree_csv(p)?,
        ScenePlan::Slalom(p) => output::slalom_tree_csv(p)?,
    };
    let tree_path = c.out.join("tree.csv");
    let mut files = vec![OutputFile::new(&tree_path, tree)];
    files.extend(output::report_files(&c.out.join("report.csv"), plan.report())?);
    files.push(output::metadata_file(&tree_path, "plan", 0));
    write(&files)?;
    let report = plan.report();
    let r = report.final_residuals();
    println!(
        "{} branches, {} iterations, converged {}, residuals {:.2e} {:.2e} {:.2e} {:.2e}",
        plan.num_branches(),
        report.iterations,
        report.converged,
        r.aula_primal,
        r.aula_dual,
        r.admm_primal,
        r.admm_dual
    );
    if !report.converged {
        return Err(Failure::Solve(format!("no convergence within {} iterations", report.iterations)));
    }
    Ok(())
}

fn scenario_config(c: &Common, fallback: ScenarioConfig) -> Result<ScenarioConfig, Failure> {
    match &c.config {
        Some(path) => Ok(ScenarioConfig::from_file(path)?),
        None => Ok(fallback),
    }
}

fn cmd_episode(c: &Common, workers: Option<usize>, scenario: Scenario, duration: Option<f64>) -> Result<(), Failure> {
    let preset = match scenario {
        Scenario::PedestrianAcc => ScenarioConfig::pedestrian_acc(),
        Scenario::Slalom => ScenarioConfig::slalom(),
    };
    let mut cfg = scenario_config(c, preset)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(w) = workers {
        cfg.workers = w;
    }
    if let Some(d) = duration {
        cfg.duration = d;
    }
    cfg.validate()?;
    let controller = c.controller.unwrap_or(Controller::TreeFull);
    let (metrics, trace) = run_episode_traced(&cfg, controller)?;
    let metrics_path = c.out.join("metrics.csv");
    let trace_path = c.out.join("trace.csv");
    let mut files = output::episode_files(&metrics_path, &metrics, Some((&trace_path, &trace)))?;
    files.push(output::metadata_file(&metrics_path, "episode", cfg.seed));
    write(&files)?;
    println!(
        "{} seed {} {}: cost {:.3} speed {:.2} m/s collisions {} nonconverged {}/{}",
        metrics.kind,
        metrics.seed,
        metrics.controller,
        metrics.avg_cost,
        metrics.avg_speed,
        metrics.collisions,
        metrics.nonconverged,
        metrics.cycles
    );
    Ok(())
}

fn cmd_batch(
    c: &Common,
    workers: Option<usize>,
    preset: Preset,
    seeds: Option<usize>,
    duration: Option<f64>,
    jobs: Option<usize>,
) -> Result<(), Failure> {
    let mut cfg = match &c.config {
        Some(path) => BatchConfig::from_file(path)?,
        None => match preset {
            Preset::PedestrianGrid => BatchConfig::pedestrian_grid(20),
            Preset::SlalomGrid => BatchConfig::slalom_grid(20),
        },
    };
    if let Some(s) = seeds {
        cfg.seeds = s;
    }
    if let Some(seed) = c.seed {
        cfg.scenario.seed = seed;
    }
    if let Some(w) = workers {
        cfg.scenario.workers = w;
    }
    if let Some(d) = duration {
        cfg.scenario.duration = d;
    }
    if let Some(ctl) = c.controller {
        cfg.controllers = vec![ctl];
    }
    cfg.validate()?;
    let threads = jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    let rows = run_batch(&cfg, threads)?;
    for r in &rows {
        if let Err(msg) = &r.outcome {
            warn!("{} seed {} {}: {msg}", r.cell, r.seed, r.controller);
        }
    }
    let summary = summarize(&rows);
    let metrics_path = c.out.join("metrics.csv");
    let mut files = output::batch_files(&metrics_path, &rows)?;
    files.extend(output::summary_files(&c.out.join("summary.csv"), &summary)?);
    files.push(output::metadata_file(&metrics_path, "batch", cfg.scenario.seed));
    write(&files)?;
    println!("{:<24} {:<10} {:>9} {:>9} {:>10} {:>5}", "cell", "controller", "cost", "speed", "collisions", "fail");
    for s in &summary {
        println!(
            "{:<24} {:<10} {:>9.3} {:>9.3} {:>10} {:>5}",
            s.cell, s.controller.to_string(), s.avg_cost, s.avg_speed, s.collisions, s.failed_episodes
        );
    }
    Ok(())
}

fn cmd_scale_bench(c: &Common, counts: Vec<usize>, repetitions: usize, up_to: Option<usize>) -> Result<(), Failure> {
    if counts.is_empty() || counts.contains(&0) || repetitions == 0 {
        return Err(Failure::Usage("branch counts and repetitions must be >= 1".into()));
    }
    let cfg = ScaleBenchConfig {
        undecomposed_up_to: up_to.or(counts.iter().copied().max()),
        counts,
        repetitions,
        seed: c.seed.unwrap_or(0),
    };
    let rows = run_scale_bench(&cfg)?;
    let path = c.out.join("scale.csv");
    write(&[
        OutputFile::new(&path, output::scale_csv(&rows)?),
        output::metadata_file(&path, "scale-bench", cfg.seed),
    ])?;
    println!("{:>8} {:>10} {:>14} {:>16} {:>16}", "branches", "iterations", "decomposed_ms", "per_iteration_ms", "undecomposed_ms");
    for r in &rows {
        println!(
            "{:>8} {:>10} {:>14.3} {:>16.4} {:>16}",
            r.branches,
            r.iterations,
            r.decomposed_ms,
            r.per_iteration_ms,
            r.undecomposed_ms.map_or("-".into(), |t| format!("{t:.3}"))
        );
    }
    if rows.len() >= 2 {
        let xs: Vec<f64> = rows.iter().map(|r| r.branches as f64).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.per_iteration_ms).collect();
        let (a, b, r2) = linear_fit(&xs, &ys);
        println!("per-iteration time ~ {a:.4} + {b:.4} N ms, R^2 = {r2:.4}");
    }
    Ok(())
}
