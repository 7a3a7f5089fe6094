use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use snes_core::apinn::{apply_policy, run_apinn};
use snes_core::bench::{generate_instances, pct_optimal, summarize, InstanceResult};
use snes_core::oracle::{solve_deterministic, DeterministicInstance};
use snes_core::{PolicyMode, PolicyTable, StreamSeed};

use snes::config::RunConfig;
use snes::error::{Error, Result};
use snes::harness::{relative_cost, run_bench, BenchPlan};
use snes::io::{self, DiagnosticsRow, InstanceRecord};
use snes::model_io;

/// Approximate policy iteration for single-node energy storage.
#[derive(Debug, Parser)]
#[command(name = "snes", version)]
struct Cli {
    /// TOML run configuration; missing keys take the defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the resolved configuration as TOML and exit.
    #[arg(long, global = true)]
    dump_config: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample instance files for a class.
    Gen(GenArgs),
    /// Run the policy iteration loop and save the final policy.
    Train(TrainArgs),
    /// Score a saved or naive policy against the hindsight optimum.
    Eval(EvalArgs),
    /// Solve one instance with perfect foresight.
    Oracle(OracleArgs),
    /// Reshape a benchmark summary into plot series.
    Plotdata(PlotArgs),
    /// Train and score every configured class, scenario and approach.
    Bench(BenchArgs),
}

/// Settings shared by the subcommands; each overrides the config file.
#[derive(Debug, Args, Default)]
struct Common {
    /// Class S1..S13.
    #[arg(long)]
    class: Option<String>,
    /// high or low.
    #[arg(long)]
    scenario: Option<String>,
    /// Horizon T.
    #[arg(long = "horizon", short = 'T')]
    horizon: Option<usize>,
    /// Root seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[command(flatten)]
    common: Common,
    /// Number of instances.
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Output directory; files are named `<class>_<index>.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// nn, ols or svr.
    #[arg(long)]
    arch: Option<String>,
    /// Trajectories per initial level and round (M).
    #[arg(long = "trajectories", short = 'M')]
    trajectories: Option<usize>,
    /// Improvement rounds (N).
    #[arg(long = "rounds", short = 'N')]
    rounds: Option<usize>,
    /// online_greedy or table.
    #[arg(long)]
    rollout: Option<String>,
    /// Policy table CSV to write.
    #[arg(long)]
    policy: PathBuf,
    /// Value model file to write next to the table.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Round diagnostics CSV, appended.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Value model file; without it the policy is naive or table-only.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Policy table CSV.
    #[arg(long)]
    policy: Option<PathBuf>,
    /// online_greedy or table.
    #[arg(long)]
    rollout: Option<String>,
    /// Instance CSV files; when absent, `--instances` are sampled from the class.
    #[arg(long = "instance")]
    instance_files: Vec<PathBuf>,
    /// Number of sampled instances.
    #[arg(long)]
    instances: Option<usize>,
    /// Starting battery level.
    #[arg(long)]
    initial_storage: Option<i64>,
    /// Per-instance results CSV.
    #[arg(long)]
    results: Option<PathBuf>,
    /// Decision trace CSV for the first instance.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[command(flatten)]
    common: Common,
    /// Instance CSV.
    #[arg(long)]
    instance: PathBuf,
    /// Solution trace CSV.
    #[arg(long)]
    out: PathBuf,
    /// Starting battery level.
    #[arg(long)]
    initial_storage: Option<i64>,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// Summary CSV written by `bench`.
    #[arg(long)]
    summary: PathBuf,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// Output directory for summary, per-instance and diagnostics CSVs.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; defaults to all available cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// Evaluation instances per class.
    #[arg(long)]
    instances: Option<usize>,
    /// Experimental scale: all classes, 2000 instances, M and N from the
    /// top-level config. Takes many hours.
    #[arg(long)]
    full: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

fn apply_common(cfg: &mut RunConfig, c: &Common) {
    if let Some(v) = &c.class {
        cfg.class = v.clone();
    }
    if let Some(v) = &c.scenario {
        cfg.scenario = v.clone();
    }
    if let Some(v) = c.horizon {
        cfg.horizon = v;
    }
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match &cli.command {
        Command::Gen(a) => apply_common(&mut cfg, &a.common),
        Command::Train(a) => {
            apply_common(&mut cfg, &a.common);
            if let Some(v) = &a.arch {
                cfg.architecture = v.clone();
            }
            if let Some(v) = a.trajectories {
                cfg.trajectories = v;
            }
            if let Some(v) = a.rounds {
                cfg.rounds = v;
            }
            if let Some(v) = &a.rollout {
                cfg.rollout = v.clone();
            }
        }
        Command::Eval(a) => {
            apply_common(&mut cfg, &a.common);
            if let Some(v) = &a.rollout {
                cfg.rollout = v.clone();
            }
            if let Some(v) = a.instances {
                cfg.bench.instances = v;
            }
            if let Some(v) = a.initial_storage {
                cfg.initial_storage = v;
            }
        }
        Command::Oracle(a) => {
            apply_common(&mut cfg, &a.common);
            if let Some(v) = a.initial_storage {
                cfg.initial_storage = v;
            }
        }
        Command::Plotdata(_) => {}
        Command::Bench(a) => {
            apply_common(&mut cfg, &a.common);
            if let Some(v) = a.jobs {
                cfg.bench.jobs = v;
            }
            if let Some(v) = a.instances {
                cfg.bench.instances = v;
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli)?;
    if cli.dump_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    match cli.command {
        Command::Gen(a) => gen(&cfg, &a),
        Command::Train(a) => train(&cfg, &a),
        Command::Eval(a) => eval(&cfg, &a),
        Command::Oracle(a) => oracle(&cfg, &a),
        Command::Plotdata(a) => plotdata(&a),
        Command::Bench(a) => bench(&cfg, &a),
    }
}

fn gen(cfg: &RunConfig, a: &GenArgs) -> Result<()> {
    if a.count == 0 {
        return Err(Error::config("--count must be positive"));
    }
    let class = cfg.class_id()?;
    let instances = generate_instances(&cfg.process(class)?, class, a.count, StreamSeed::new(cfg.seed));
    let width = a.count.to_string().len();
    for (i, traj) in instances.iter().enumerate() {
        io::write_instance(&a.out.join(format!("{class}_{i:0width$}.csv")), traj)?;
    }
    println!("wrote {} instances to {}", a.count, a.out.display());
    Ok(())
}

fn train(cfg: &RunConfig, a: &TrainArgs) -> Result<()> {
    let (class, scenario, arch) = (cfg.class_id()?, cfg.scenario()?, cfg.architecture()?);
    let apinn = cfg.apinn_config(class, scenario, arch)?;
    let run = run_apinn(&apinn)?;
    io::write_policy(&a.policy, &run.policy)?;
    let model_path = a.model.clone().unwrap_or_else(|| a.policy.with_extension("model"));
    if let Some(model) = &run.policy.model {
        model_io::save_model(&model_path, model)?;
    }
    if let Some(path) = &a.diagnostics {
        let rows: Vec<_> = run
            .rounds
            .iter()
            .map(|d| DiagnosticsRow::new(&class.to_string(), scenario.name(), arch.name(), cfg.seed, d))
            .collect();
        io::append_diagnostics(path, &rows)?;
    }
    for d in &run.rounds {
        println!(
            "round {}: rows={} train_loss={:.4} val_loss={:.4} test_loss={:.4} mean_revenue={:.4}",
            d.round, d.dataset_size, d.training_loss, d.validation_loss, d.test_loss, d.mean_revenue
        );
    }
    println!("final_mean_revenue={:.6}", run.final_mean_revenue);
    Ok(())
}

fn eval(cfg: &RunConfig, a: &EvalArgs) -> Result<()> {
    let (class, scenario) = (cfg.class_id()?, cfg.scenario()?);
    let params = cfg.battery_params(scenario)?;
    let mode = cfg.rollout()?;
    let mut policy = match &a.policy {
        Some(p) => io::read_policy(p, &params, cfg.horizon)?,
        None => PolicyTable::naive(),
    };
    if let Some(m) = &a.model {
        policy.model = Some(model_io::load_model(m)?);
    }
    let mode = if policy.model.is_none() && !policy.is_empty() { PolicyMode::Table } else { mode };
    let instances = if a.instance_files.is_empty() {
        generate_instances(&cfg.process(class)?, class, cfg.bench.instances, StreamSeed::new(cfg.bench.instance_seed))
    } else {
        a.instance_files.iter().map(|p| io::read_instance(p)).collect::<Result<_>>()?
    };
    let mut results = Vec::with_capacity(instances.len());
    for (i, traj) in instances.iter().enumerate() {
        let inst = DeterministicInstance::new(traj.clone(), params, cfg.initial_storage)?;
        let oracle = solve_deterministic(&inst)?.revenue;
        let rollout = apply_policy(&policy, traj, cfg.initial_storage, &params, mode);
        let r = snes_core::bench::check_result(InstanceResult {
            instance: i,
            policy_revenue: rollout.revenue,
            oracle_revenue: oracle,
            pct_optimal: pct_optimal(rollout.revenue, oracle),
        })?;
        if i == 0 {
            if let Some(path) = &a.trace {
                io::write_trace(path, &io::rollout_rows(traj, cfg.initial_storage, &rollout))?;
            }
        }
        results.push(r);
    }
    if let Some(path) = &a.results {
        let arch = policy.model.as_ref().map_or("naive", |m| m.architecture().name());
        let rows: Vec<_> =
            results.iter().map(|r| InstanceRecord::new(&class.to_string(), scenario.name(), arch, r)).collect();
        io::write_instance_results(path, &rows)?;
    }
    let s = summarize(&results, cfg.bench.threshold);
    let policy_mean = results.iter().map(|r| r.policy_revenue).sum::<f64>() / results.len() as f64;
    println!(
        "instances={} included={} excluded={} mean_pct_optimal={:.4} prop_gt_{}={:.4} mean_revenue={:.6}",
        results.len(),
        s.n_included,
        s.n_excluded,
        s.mean_pct_optimal,
        cfg.bench.threshold,
        s.prop_above,
        policy_mean
    );
    Ok(())
}

fn oracle(cfg: &RunConfig, a: &OracleArgs) -> Result<()> {
    let params = cfg.battery_params(cfg.scenario()?)?;
    let traj = io::read_instance(&a.instance)?;
    let inst = DeterministicInstance::new(traj.clone(), params, cfg.initial_storage)?;
    let sol = solve_deterministic(&inst)?;
    let mut prior = cfg.initial_storage;
    let profits: Vec<f64> = traj
        .iter()
        .zip(&sol.decisions)
        .map(|(w, d)| {
            let p = snes_core::model::stage_profit(d, prior, w, &params);
            prior = d.store;
            p
        })
        .collect();
    io::write_trace(&a.out, &io::trace_rows(&traj, cfg.initial_storage, &sol.decisions, &profits))?;
    println!("revenue={}", sol.revenue);
    Ok(())
}

fn plotdata(a: &PlotArgs) -> Result<()> {
    let rows = io::read_summary(&a.summary)?;
    match &a.out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
            io::write_plotdata(&mut f, &rows)
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            io::write_plotdata(&mut lock, &rows)?;
            lock.flush().map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn bench(cfg: &RunConfig, a: &BenchArgs) -> Result<()> {
    let mut plan = BenchPlan::from_config(cfg, a.full)?;
    if let Some(n) = a.instances {
        plan.instances = n;
    }
    if a.full {
        eprintln!("warning: full-scale sweep, about {:.0}x the desk run; expect many hours", relative_cost(&plan));
    }
    let report = run_bench(&plan)?;
    let out: &Path = &a.out;
    io::write_summary(&out.join("summary.csv"), &report.summary_rows())?;
    io::write_instance_results(&out.join("instances.csv"), &report.instance_records())?;
    let diag = out.join("diagnostics.csv");
    if diag.exists() {
        fs::remove_file(&diag).map_err(|e| Error::io(&diag, e))?;
    }
    io::append_diagnostics(&diag, &report.diagnostics_rows())?;
    for c in &report.cells {
        let s = &c.summary;
        println!(
            "{} {} {:<5} included={} excluded={} mean_pct_optimal={:.2} prop_gt_{}={:.3} ({:.1}s)",
            s.class,
            s.scenario.name(),
            s.approach.name(),
            s.stats.n_included,
            s.stats.n_excluded,
            s.stats.mean_pct_optimal,
            plan.threshold,
            s.stats.prop_above,
            c.elapsed.as_secs_f64()
        );
    }
    Ok(())
}
