//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! The full-scale loss corridor (criterion 8) takes hours and only runs with
//! `cargo test --test acceptance -- --ignored` or `SNES_FULL_SCALE=1`.

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use snes::config::RunConfig;
use snes::harness::{run_bench, BenchPlan};
use snes_core::apinn::run_apinn;
use snes_core::bench::{Approach, ClassId, HINDSIGHT_TOLERANCE};
use snes_core::model::{compute_decisions, feasible_storage_range, stage_profit, validate_decision, Netting};
use snes_core::oracle::{
    brute_force_deterministic, check_ip_feasibility, solve_deterministic, solve_exact_mdp, DeterministicInstance,
    ExogenousChain,
};
use snes_core::regress::nn::msle_loss_and_gradient;
use snes_core::regress::{fit_linear_svr, fit_ols, FeatureVector, NnModel, SvrParams, TrainingSample};
use snes_core::stochastic::sample_trajectory_traced;
use snes_core::stochastic::JumpTally;
use snes_core::{ApinnConfig, Architecture, BatteryParams, Decision, ExogenousState, Scenario, StageState, StreamSeed};

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn tiny_params(scenario: Scenario, capacity: i64) -> BatteryParams {
    BatteryParams {
        capacity,
        max_inject: 2.min(capacity),
        max_withdraw: 2.min(capacity),
        hold_cost: 0.0005,
        inject_loss: scenario.loss_rate(),
        withdraw_loss: scenario.loss_rate(),
    }
}

fn random_exo<R: Rng>(rng: &mut R) -> ExogenousState {
    let c = rng.random_range(3..=13);
    let p = (c - rng.random_range(0..=10)).max(2);
    ExogenousState::new(rng.random_range(1..=7), rng.random_range(1..=15), c, p)
}

/// 200 tiny instances: DP equals enumeration and passes the IP check.
fn oracle_equivalence() -> Outcome {
    let mut rng = StreamSeed::new(1).derive("acceptance-oracle").rng();
    let mut worst: f64 = 0.0;
    for i in 0..200 {
        let scenario = if i % 2 == 0 { Scenario::High } else { Scenario::Low };
        let cap = rng.random_range(1..=4);
        let horizon = rng.random_range(1..=4);
        let traj = (0..horizon).map(|_| random_exo(&mut rng)).collect();
        let inst = DeterministicInstance::new(traj, tiny_params(scenario, cap), rng.random_range(0..=cap))
            .map_err(|e| e.to_string())?;
        let dp = solve_deterministic(&inst).map_err(|e| e.to_string())?;
        let bf = brute_force_deterministic(&inst).map_err(|e| e.to_string())?;
        let gap = (dp.revenue - bf.revenue).abs();
        worst = worst.max(gap);
        check(gap <= 1e-9, || format!("instance {i}: dp {} vs enumeration {}", dp.revenue, bf.revenue))?;
        check_ip_feasibility(&dp, &inst).map_err(|v| format!("instance {i}: {v:?}"))?;
    }
    Ok(format!("200 instances, max |dp - enumeration| = {worst:.1e}, all IP-feasible"))
}

/// Expected totals of every history-dependent decision tree from `(t, prior, w)`.
fn policy_values(
    chain: &ExogenousChain,
    params: &BatteryParams,
    horizon: usize,
    t: usize,
    prior: i64,
    w: usize,
) -> Vec<f64> {
    let state = &chain.states[w];
    let mut out = Vec::new();
    for store in feasible_storage_range(prior, params, t == horizon).unwrap() {
        let d = compute_decisions(state, store, prior, t, horizon, params).unwrap();
        let now = stage_profit(&d, prior, state, params);
        if t == horizon {
            out.push(now);
            continue;
        }
        let mut acc = vec![now];
        for (next, &p) in chain.transition[w].iter().enumerate() {
            let sub = policy_values(chain, params, horizon, t + 1, store, next);
            acc = acc.iter().flat_map(|a| sub.iter().map(move |v| a + p * v)).collect();
        }
        out.extend(acc);
    }
    out
}

fn exact_mdp() -> Outcome {
    let mut worst: f64 = 0.0;
    for scenario in [Scenario::High, Scenario::Low] {
        let params = tiny_params(scenario, 2);
        for p_stay in [[0.5, 0.5], [0.9, 0.2], [0.3, 0.7]] {
            let chain = ExogenousChain {
                states: vec![ExogenousState::new(3, 2, 5, 4), ExogenousState::new(1, 4, 12, 10)],
                transition: vec![vec![p_stay[0], 1.0 - p_stay[0]], vec![1.0 - p_stay[1], p_stay[1]]],
            };
            let sol = solve_exact_mdp(&chain, &params, 3, 1.0).map_err(|e| e.to_string())?;
            for prior in 0..=2 {
                for w in 0..2 {
                    let best =
                        policy_values(&chain, &params, 3, 1, prior, w).into_iter().fold(f64::NEG_INFINITY, f64::max);
                    let gap = (sol.value(1, prior, w) - best).abs();
                    worst = worst.max(gap);
                    check(gap <= 1e-9, || format!("{scenario:?} {p_stay:?} ({prior},{w}): gap {gap}"))?;
                }
            }
        }
        let traj =
            vec![ExogenousState::new(6, 1, 4, 3), ExogenousState::new(2, 5, 13, 12), ExogenousState::new(4, 4, 7, 2)];
        let chain = ExogenousChain::deterministic(&traj);
        let params = tiny_params(scenario, 2);
        let sol = solve_exact_mdp(&chain, &params, 3, 1.0).map_err(|e| e.to_string())?;
        for init in 0..=2 {
            let inst = DeterministicInstance::new(traj.clone(), params, init).map_err(|e| e.to_string())?;
            let det = solve_deterministic(&inst).map_err(|e| e.to_string())?;
            check(sol.value(1, init, 0) == det.revenue, || {
                format!("degenerate chain {} vs hindsight {}", sol.value(1, init, 0), det.revenue)
            })?;
        }
    }
    Ok(format!("max |mdp - enumeration| = {worst:.1e}; degenerate chain exact"))
}

fn model_layer() -> Outcome {
    const T: usize = 10;
    let params = BatteryParams::standard(Scenario::High);
    let mut cases = 0u64;
    for e in 1..=7 {
        for d in 1..=15 {
            let w = ExogenousState::new(e, d, 13, 12);
            for prior in 0..=params.capacity {
                for t in 1..=T {
                    for store in feasible_storage_range(prior, &params, t == T).map_err(|e| e.to_string())? {
                        let dec = compute_decisions(&w, store, prior, t, T, &params).map_err(|e| e.to_string())?;
                        cases += 1;
                        check(dec.buy - dec.store - dec.sell == d - e - prior, || format!("flow balance {dec:?}"))?;
                        check(dec.buy * dec.sell == 0 && dec.buy >= 0 && dec.sell >= 0, || {
                            format!("buy-xor-sell {dec:?}")
                        })?;
                        let state = StageState::new(t, prior, w);
                        validate_decision(&dec, &state, &params, T, Netting::Required)
                            .map_err(|v| format!("{dec:?}: {v:?}"))?;
                    }
                }
            }
        }
    }
    check(cases >= 100_000, || format!("only {cases} grid cases"))?;
    let low = BatteryParams::standard(Scenario::Low);
    let hand = [
        (stage_profit(&Decision::new(2, 0, 4), 3, &ExogenousState::new(5, 2, 13, 12), &params), 23.348),
        (stage_profit(&Decision::new(0, 6, 2), 0, &ExogenousState::new(1, 5, 4, 3), &low), -26.401),
        (stage_profit(&Decision::new(3, 0, 2), 5, &ExogenousState::new(1, 1, 10, 8), &low), 24.0 - 0.001 - 9.0),
    ];
    for (got, want) in hand {
        check((got - want).abs() <= 1e-12, || format!("profit {got} vs hand value {want}"))?;
    }
    Ok(format!("{cases} grid cases, {} hand-computed profits", hand.len()))
}

fn features<R: Rng>(rng: &mut R) -> FeatureVector {
    FeatureVector([
        rng.random_range(1..=10) as f64,
        rng.random_range(0..=30) as f64,
        rng.random_range(0..=15) as f64,
        rng.random_range(0..=15) as f64,
        rng.random_range(0..=30) as f64,
    ])
}

fn nn_numerics() -> Outcome {
    let mut rng = StreamSeed::new(31).derive("acceptance-nn").rng();
    let mut model = NnModel::init(0.2, &mut rng);
    let out = model.layers.len() - 1;
    model.layers[out].bias[0] = 20.0;
    let inputs: Vec<_> = (0..50).map(|_| features(&mut rng)).collect();
    let targets: Vec<f64> = (0..50).map(|_| rng.random_range(1.0..60.0)).collect();
    let (_, grad) = msle_loss_and_gradient(&model, &inputs, &targets);
    let theta = model.parameters();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..theta.len() {
        let mut probe = model.clone();
        let mut th = theta.clone();
        th[i] += h;
        probe.set_parameters(&th);
        let up = msle_loss_and_gradient(&probe, &inputs, &targets).0;
        th[i] = theta[i] - h;
        probe.set_parameters(&th);
        let down = msle_loss_and_gradient(&probe, &inputs, &targets).0;
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-6));
    }
    check(worst < 1e-4, || format!("gradient max relative error {worst:.2e}"))?;

    let truth = [1.25, -0.5, 2.0, 0.75, -1.5, 3.0];
    let exact: Vec<_> = (0..200)
        .map(|_| {
            let x = features(&mut rng);
            TrainingSample::new(x, truth[0] + (0..5).map(|j| truth[j + 1] * x.0[j]).sum::<f64>())
        })
        .collect();
    let ols = fit_ols(&exact).map_err(|e| e.to_string())?;
    let coef_err = (0..5).map(|j| (ols.coef[j] - truth[j + 1]).abs()).fold((ols.intercept - truth[0]).abs(), f64::max);
    check(coef_err < 1e-6, || format!("OLS coefficient error {coef_err:.2e}"))?;

    let noiseless: Vec<_> = (0..500)
        .map(|_| {
            let x = features(&mut rng);
            TrainingSample::new(x, 10.0 + 0.5 * x.0[0] - x.0[2] + 2.0 * x.0[3] + 0.25 * x.0[4])
        })
        .collect();
    let ols = fit_ols(&noiseless).map_err(|e| e.to_string())?;
    let svr =
        fit_linear_svr(&noiseless, &SvrParams { epsilon: 0.0, ..SvrParams::default() }).map_err(|e| e.to_string())?;
    let n = noiseless.len() as f64;
    let rmse =
        (noiseless.iter().map(|s| (svr.model.predict(&s.features) - ols.predict(&s.features)).powi(2)).sum::<f64>()
            / n)
            .sqrt();
    let mean = noiseless.iter().map(|s| s.label).sum::<f64>() / n;
    let sd = (noiseless.iter().map(|s| (s.label - mean).powi(2)).sum::<f64>() / n).sqrt();
    check(rmse <= 0.05 * sd, || format!("SVR vs OLS rmse {rmse:.3} > 5% of label sd {sd:.3}"))?;
    Ok(format!("grad rel err {worst:.1e}, OLS coef err {coef_err:.1e}, SVR-OLS rmse {:.2}% of sd", 100.0 * rmse / sd))
}

fn process_statistics() -> Outcome {
    let mut freqs = Vec::new();
    for class in ClassId::all() {
        let cfg = class.spec().process_config(10).map_err(|e| e.to_string())?;
        let mut rng = StreamSeed::new(17).derive("acceptance-process").index(u64::from(class.number())).rng();
        let mut tally = JumpTally::default();
        let mut steps = 0;
        while steps < 100_000 {
            let (traj, t) = sample_trajectory_traced(&cfg, &mut rng);
            tally.merge(t);
            for w in &traj {
                check(w.within(&cfg), || format!("{class}: {w} out of bounds"))?;
                check(w.sell_price <= w.buy_price, || format!("{class}: P > C at {w}"))?;
            }
            steps += traj.len();
        }
        let freq = tally.jumps as f64 / tally.transitions as f64;
        if class.spec().jumps {
            check((0.026..=0.036).contains(&freq), || format!("{class}: jump frequency {freq:.4}"))?;
            freqs.push(freq);
        } else {
            check(tally.jumps == 0, || format!("{class}: {} jumps in a plain chain", tally.jumps))?;
        }
    }
    let (lo, hi) = freqs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &f| (a.min(f), b.max(f)));
    Ok(format!("13 classes x 1e5 steps, jump frequency in [{lo:.4}, {hi:.4}]"))
}

struct Desk {
    criterion6: Outcome,
    criterion7: Outcome,
}

/// Desk-scale sweep shared by criteria 6 and 7.
fn desk_scale() -> Desk {
    let mut cfg = RunConfig { seed: 7, ..RunConfig::default() };
    cfg.bench.classes = vec!["S1".into(), "S12".into()];
    cfg.bench.scenarios = vec!["high".into(), "low".into()];
    cfg.bench.architectures = vec!["nn".into(), "ols".into(), "svr".into()];
    cfg.bench.instances = 200;
    cfg.bench.trajectories = 300;
    cfg.bench.rounds = 3;
    cfg.bench.instance_seed = 2024;
    let report = BenchPlan::from_config(&cfg, false).and_then(|plan| run_bench(&plan));
    let report = match report {
        Ok(r) => r,
        Err(e) => {
            let msg = e.to_string();
            return Desk { criterion6: Err(msg.clone()), criterion7: Err(msg) };
        }
    };

    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for class in ["S1", "S12"].map(|c| ClassId::parse(c).unwrap()) {
        for scenario in [Scenario::High, Scenario::Low] {
            let naive = report.cell(class, scenario, Approach::Naive).unwrap();
            let nn = report.cell(class, scenario, Approach::Learned(Architecture::Nn)).unwrap();
            let (n, l) = (naive.summary.stats.mean_pct_optimal, nn.summary.stats.mean_pct_optimal);
            let naive_rev = nn.rounds[0].mean_revenue;
            let round3 = nn.rounds.last().map_or(f64::NAN, |r| r.mean_revenue);
            let ok = l >= n + 10.0 && n < 65.0;
            lines.push(format!(
                "    {class} {:<4} naive {n:8.1}%  nn {l:8.1}%  excluded {:3}  simulated revenue naive {naive_rev:.1} round3 {round3:.1} final {:.1}",
                scenario.name(),
                naive.summary.stats.n_excluded,
                nn.final_mean_revenue.unwrap_or(f64::NAN),
            ));
            if !ok {
                failures.push(format!("{class} {}: nn {l:.1} vs naive {n:.1}", scenario.name()));
            }
        }
    }
    let detail = lines.join("\n");
    let criterion6 = if failures.is_empty() {
        Ok(format!("nn >= naive + 10 and naive < 65 in all four cells\n{detail}"))
    } else {
        Err(format!("{}\n{detail}", failures.join("; ")))
    };

    let max = report.max_pct_optimal().unwrap_or(f64::NAN);
    let criterion7 = if max <= 100.0 + HINDSIGHT_TOLERANCE {
        Ok(format!(
            "{} scored instances across {} cells, max pct_optimal {max:.6}",
            report.n_scored(),
            report.cells.len()
        ))
    } else {
        Err(format!("max pct_optimal {max}"))
    };
    Desk { criterion6, criterion7 }
}

fn full_scale_corridor() -> Outcome {
    let process = ClassId::new(1).unwrap().spec().process_config(10).map_err(|e| e.to_string())?;
    let cfg = ApinnConfig::standard(process, BatteryParams::standard(Scenario::High), Architecture::Nn);
    let run = run_apinn(&cfg).map_err(|e| e.to_string())?;
    let losses: Vec<f64> = run.rounds.iter().map(|r| r.training_loss).collect();
    let text = losses.iter().map(|l| format!("{l:.3}")).collect::<Vec<_>>().join(", ");
    check(losses.iter().all(|l| (0.3..=3.0).contains(l)), || format!("training MSLE per round: {text}"))?;
    Ok(format!("training MSLE per round: {text}"))
}

fn report(id: u32, name: &str, start: Instant, outcome: &Outcome) -> bool {
    let secs = start.elapsed().as_secs_f64();
    match outcome {
        Ok(msg) => {
            println!("PASS criterion {id} ({name}, {secs:.1}s): {msg}");
            true
        }
        Err(msg) => {
            println!("FAIL criterion {id} ({name}, {secs:.1}s): {msg}");
            false
        }
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let full = args.iter().any(|a| a == "--ignored" || a == "--include-ignored")
        || std::env::var("SNES_FULL_SCALE").is_ok_and(|v| v == "1");
    // `cargo test -- --list` and name filters probe the binary; run nothing then
    if args.iter().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }

    let mut ok = true;
    let criteria: [Criterion; 5] = [
        (1, "oracle equivalence", oracle_equivalence),
        (2, "exact MDP sanity", exact_mdp),
        (3, "model-layer correctness", model_layer),
        (4, "NN numerics", nn_numerics),
        (5, "process statistics", process_statistics),
    ];
    for (id, name, f) in criteria {
        let start = Instant::now();
        ok &= report(id, name, start, &f());
    }

    let start = Instant::now();
    let desk = desk_scale();
    ok &= report(6, "end-to-end improvement", start, &desk.criterion6);
    ok &= report(7, "hindsight bound", start, &desk.criterion7);

    if full {
        let start = Instant::now();
        ok &= report(8, "full-scale loss corridor", start, &full_scale_corridor());
    } else {
        println!("SKIP criterion 8 (full-scale loss corridor): multi-hour run, use -- --ignored or SNES_FULL_SCALE=1");
    }

    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
