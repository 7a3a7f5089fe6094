use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn snes(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snes")).current_dir(dir).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn help_lists_subcommands_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let top = stdout(&snes(dir.path(), &["--help"]));
    for word in ["gen", "train", "eval", "oracle", "plotdata", "bench", "--config", "--dump-config"] {
        assert!(top.contains(word), "{word} missing from help");
    }
    let train = stdout(&snes(dir.path(), &["train", "--help"]));
    for flag in ["--class", "--arch", "--trajectories", "--rounds", "--horizon", "--scenario", "--seed", "--policy"] {
        assert!(train.contains(flag), "{flag} missing from train help");
    }
    assert!(stdout(&snes(dir.path(), &["bench", "--help"])).contains("--jobs"));
}

#[test]
fn dump_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), "scenario = \"low\"\nseed = 12\n[bench]\ninstances = 7\n").unwrap();
    let first = snes(dir.path(), &["--config", "run.toml", "--dump-config", "gen", "--out", "x"]);
    assert_eq!(code(&first), 0);
    fs::write(dir.path().join("dumped.toml"), first.stdout.clone()).unwrap();
    let second = snes(dir.path(), &["--config", "dumped.toml", "--dump-config", "gen", "--out", "x"]);
    assert_eq!(stdout(&first), stdout(&second));
    assert!(stdout(&first).contains("instances = 7"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[battery]\nmax_inject = 0\n").unwrap();
    let o = snes(dir.path(), &["--config", "bad.toml", "gen", "--out", "x"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("rates must be positive"));
    fs::write(dir.path().join("typo.toml"), "sceanrio = \"low\"\n").unwrap();
    assert_eq!(code(&snes(dir.path(), &["--config", "typo.toml", "gen", "--out", "x"])), 1);
    assert_eq!(code(&snes(dir.path(), &["gen", "--class", "S0", "--out", "x"])), 1);
    assert_eq!(code(&snes(dir.path(), &["oracle", "--instance", "missing.csv", "--out", "y.csv"])), 1);
    // a directory where the output file should go is a runtime failure
    fs::create_dir(dir.path().join("taken.csv")).unwrap();
    fs::write(dir.path().join("i.csv"), "t,E,D,C,P\n1,3,5,7,6\n").unwrap();
    assert_eq!(code(&snes(dir.path(), &["oracle", "--instance", "i.csv", "--out", "taken.csv"])), 2);
}

#[test]
fn oracle_prints_revenue_and_writes_solution() {
    let dir = tempfile::tempdir().unwrap();
    // buy cheap, store, sell dear: one unit of demand each period
    fs::write(dir.path().join("i.csv"), "t,E,D,C,P\n1,1,2,3,2\n2,1,2,13,12\n").unwrap();
    let o = snes(dir.path(), &["oracle", "--instance", "i.csv", "--out", "sol.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let line = stdout(&o);
    let revenue: f64 = line.trim().strip_prefix("revenue=").unwrap().parse().unwrap();
    let sol = fs::read_to_string(dir.path().join("sol.csv")).unwrap();
    assert!(sol.starts_with("t,prior,E,D,C,P,xb,xs,xr,profit\n"));
    let profits: f64 = sol.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap()).sum();
    assert!((profits - revenue).abs() < 1e-9);
    // naive trading pays 3 + 13 for the two deficits
    assert!(revenue > -16.0, "{revenue}");
}

#[test]
fn gen_train_eval_pipeline_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| {
        let gen = snes(dir.path(), &["gen", "--class", "S2", "--count", "2", "--seed", "5", "--out", tag]);
        assert_eq!(code(&gen), 0);
        let pol = format!("{tag}/pol.csv");
        let train = snes(
            dir.path(),
            &["train", "--class", "S2", "--arch", "svr", "-M", "5", "-N", "2", "--seed", "3", "--policy", &pol],
        );
        assert_eq!(code(&train), 0, "{}", String::from_utf8_lossy(&train.stderr));
        let model = format!("{tag}/pol.model");
        let inst = format!("{tag}/S2_0.csv");
        let trace = format!("{tag}/trace.csv");
        let eval = snes(dir.path(), &["eval", "--model", &model, "--instance", &inst, "--trace", &trace]);
        assert_eq!(code(&eval), 0, "{}", String::from_utf8_lossy(&eval.stderr));
        let read = |f: &str| fs::read_to_string(dir.path().join(tag).join(f)).unwrap();
        (stdout(&train), stdout(&eval), read("S2_1.csv"), read("pol.csv"), read("pol.model"), read("trace.csv"))
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a, b);
    assert!(a.0.contains("round 2:"));
    assert!(a.1.contains("instances=1"));
}

#[test]
fn bench_and_plotdata() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("small.toml"),
        "improvement_samples = 5\nlevels = [0, 3]\n[bench]\nclasses = [\"S4\"]\nscenarios = [\"low\"]\n\
         architectures = [\"ols\"]\ntrajectories = 5\nrounds = 1\ninstances = 6\n",
    )
    .unwrap();
    let o = snes(dir.path(), &["--config", "small.toml", "bench", "--out", "out", "--jobs", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(dir.path().join("out/summary.csv")).unwrap();
    let lines: Vec<_> = summary.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("S4,low,naive,"));
    assert!(lines[2].starts_with("S4,low,ols,"));
    let per = fs::read_to_string(dir.path().join("out/instances.csv")).unwrap();
    assert_eq!(per.lines().count(), 1 + 12);
    let diag = fs::read_to_string(dir.path().join("out/diagnostics.csv")).unwrap();
    assert_eq!(diag.lines().count(), 2);

    let p = snes(dir.path(), &["plotdata", "--summary", "out/summary.csv"]);
    assert_eq!(code(&p), 0);
    let plot = stdout(&p);
    assert!(plot.starts_with("figure,scenario,class,naive,ols\n"));
    assert!(plot.contains("\nprop_gt_80,low,S4,"));
}
