//! Benchmark sweep over classes, scenarios and approaches.
//!
//! Each cell trains one policy (or uses the naive one) and scores it on a
//! shared instance set per class. Instances depend only on the instance seed
//! and the class, so every approach and scenario is compared on the same
//! trajectories. Cells run concurrently; instance scoring within a cell is
//! parallel too.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use snes_core::apinn::{run_apinn, RoundDiagnostics};
use snes_core::bench::{
    evaluate_instance, generate_instances, summarize, Approach, ClassId, ClassSummary, InstanceResult,
};
use snes_core::{PolicyMode, PolicyTable, Scenario, StreamSeed};

use crate::config::{parse_architecture, parse_class, parse_scenario, BenchSection, RunConfig};
use crate::error::{Error, Result};
use crate::io::{DiagnosticsRow, InstanceRecord, SummaryRow};

#[derive(Debug, Clone)]
pub struct BenchPlan {
    pub base: RunConfig,
    pub classes: Vec<ClassId>,
    pub scenarios: Vec<Scenario>,
    /// Always starts with the naive policy.
    pub approaches: Vec<Approach>,
    pub instances: usize,
    pub threshold: f64,
    pub instance_seed: u64,
    /// 0 means all available cores.
    pub jobs: usize,
}

impl BenchPlan {
    /// Plan from the `[bench]` section, or the experimental scale when
    /// `full` is set. The loop settings come from `bench.trajectories` and
    /// `bench.rounds`.
    pub fn from_config(cfg: &RunConfig, full: bool) -> Result<Self> {
        cfg.validate()?;
        let bench = if full { BenchSection::full(cfg) } else { cfg.bench.clone() };
        let mut base = cfg.clone();
        base.trajectories = bench.trajectories;
        base.rounds = bench.rounds;
        let mut approaches = vec![Approach::Naive];
        for a in &bench.architectures {
            let a = Approach::Learned(parse_architecture(a)?);
            if !approaches.contains(&a) {
                approaches.push(a);
            }
        }
        let plan = BenchPlan {
            classes: bench.classes.iter().map(|c| parse_class(c)).collect::<Result<_>>()?,
            scenarios: bench.scenarios.iter().map(|s| parse_scenario(s)).collect::<Result<_>>()?,
            approaches,
            instances: bench.instances,
            threshold: bench.threshold,
            instance_seed: bench.instance_seed,
            jobs: bench.jobs,
            base,
        };
        // surfaces bad loop settings before any work starts
        for &c in &plan.classes {
            for &s in &plan.scenarios {
                for a in &plan.approaches {
                    if let Approach::Learned(arch) = *a {
                        plan.base.apinn_config(c, s, arch)?;
                    }
                }
            }
        }
        Ok(plan)
    }

    pub fn cells(&self) -> Vec<(ClassId, Scenario, Approach)> {
        let mut out = Vec::new();
        for &c in &self.classes {
            for &s in &self.scenarios {
                for &a in &self.approaches {
                    out.push((c, s, a));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub summary: ClassSummary,
    pub results: Vec<InstanceResult>,
    /// Empty for the naive policy.
    pub rounds: Vec<RoundDiagnostics>,
    /// Mean simulated revenue of the final policy; `None` for naive.
    pub final_mean_revenue: Option<f64>,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub cells: Vec<CellOutcome>,
    pub seed: u64,
}

impl BenchReport {
    pub fn cell(&self, class: ClassId, scenario: Scenario, approach: Approach) -> Option<&CellOutcome> {
        self.cells
            .iter()
            .find(|c| c.summary.class == class && c.summary.scenario == scenario && c.summary.approach == approach)
    }

    pub fn summary_rows(&self) -> Vec<SummaryRow> {
        self.cells.iter().map(|c| SummaryRow::from(&c.summary)).collect()
    }

    pub fn instance_records(&self) -> Vec<InstanceRecord> {
        self.cells
            .iter()
            .flat_map(|c| {
                let s = &c.summary;
                let (class, scenario) = (s.class.to_string(), s.scenario.name());
                c.results.iter().map(move |r| InstanceRecord::new(&class, scenario, s.approach.name(), r))
            })
            .collect()
    }

    pub fn diagnostics_rows(&self) -> Vec<DiagnosticsRow> {
        self.cells
            .iter()
            .flat_map(|c| {
                let s = &c.summary;
                let class = s.class.to_string();
                c.rounds
                    .iter()
                    .map(move |d| DiagnosticsRow::new(&class, s.scenario.name(), s.approach.name(), self.seed, d))
            })
            .collect()
    }

    /// Largest percent of optimum seen across every scored instance.
    pub fn max_pct_optimal(&self) -> Option<f64> {
        self.cells.iter().flat_map(|c| c.results.iter().filter_map(|r| r.pct_optimal)).max_by(f64::total_cmp)
    }

    pub fn n_scored(&self) -> usize {
        self.cells.iter().map(|c| c.results.len()).sum()
    }
}

/// Trains (for learned approaches) and scores one cell. Every result passes
/// the hindsight check or the whole cell fails.
pub fn run_cell(plan: &BenchPlan, class: ClassId, scenario: Scenario, approach: Approach) -> Result<CellOutcome> {
    let start = Instant::now();
    let base = &plan.base;
    let process = base.process(class)?;
    let params = base.battery_params(scenario)?;
    let (policy, mode, rounds, final_mean_revenue) = match approach {
        Approach::Naive => (PolicyTable::naive(), PolicyMode::Table, Vec::new(), None),
        Approach::Learned(arch) => {
            let cfg = base.apinn_config(class, scenario, arch)?;
            let run = run_apinn(&cfg)?;
            (run.policy, cfg.rollout, run.rounds, Some(run.final_mean_revenue))
        }
    };
    let instances = generate_instances(&process, class, plan.instances, StreamSeed::new(plan.instance_seed));
    let results = instances
        .par_iter()
        .enumerate()
        .map(|(i, traj)| evaluate_instance(&policy, mode, i, traj, &params).map_err(Error::from))
        .collect::<Result<Vec<_>>>()?;
    let summary = ClassSummary { class, scenario, approach, stats: summarize(&results, plan.threshold) };
    Ok(CellOutcome { summary, results, rounds, final_mean_revenue, elapsed: start.elapsed() })
}

pub fn run_bench(plan: &BenchPlan) -> Result<BenchReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.jobs)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    let cells = pool.install(|| {
        plan.cells().into_par_iter().map(|(c, s, a)| run_cell(plan, c, s, a)).collect::<Result<Vec<_>>>()
    })?;
    Ok(BenchReport { cells, seed: plan.base.seed })
}

/// Rough wall-clock multiplier of a plan relative to the desk defaults, for
/// the runtime warning.
pub fn relative_cost(plan: &BenchPlan) -> f64 {
    let desk = BenchSection::default();
    let learned = plan.approaches.len().saturating_sub(1) as f64;
    let cells = (plan.classes.len() * plan.scenarios.len()) as f64 * learned;
    let desk_cells = (desk.classes.len() * desk.scenarios.len() * desk.architectures.len()) as f64;
    let per_cell = (plan.base.trajectories * plan.base.rounds) as f64 / (desk.trajectories * desk.rounds) as f64;
    cells / desk_cells * per_cell
}
