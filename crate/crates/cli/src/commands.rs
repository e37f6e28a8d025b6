//! Command implementations.

use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::Serialize;
use stlnpc::benchmarks::{instantiate_with, ship_track_ood, IDS};
use stlnpc::config::RunConfig;
use stlnpc::deploy::{
    evaluate, CemController, Controller, EpisodeLog, EvalReport, GradController, PolicyController, ShootController,
    Status, Task,
};
use stlnpc::policy::PolicyNet;
use stlnpc::stl::{parse_formula, robustness, Trace};
use stlnpc::trainer::{train as run_training, MetricRow, TrainConfig};
use stlnpc::{Benchmark64, Error};

use crate::svg::{line_plot, Series};
use crate::{BackupEvalArgs, Cli, CliError, EvalArgs, MonitorArgs, Planner, Switch, TrainArgs};

/// Columns that hold wallclock measurements and differ between runs.
pub const WALLCLOCK_COLUMNS: [&str; 2] = ["wallclock", "step_time"];

pub fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.train.seed = s;
    }
    Ok(cfg)
}

fn benchmark_id(flag: &Option<String>, cfg: &RunConfig) -> Result<String, CliError> {
    let id = flag.clone().unwrap_or_else(|| cfg.train.benchmark.clone());
    if !IDS.contains(&id.as_str()) {
        return Err(CliError::usage(format!("unknown benchmark `{id}`; valid ids: {}", IDS.join(", "))));
    }
    Ok(id)
}

fn build(id: &str, cfg: &RunConfig, ood: bool) -> Result<Benchmark64, CliError> {
    if ood {
        if id != "ship-track" {
            return Err(CliError::usage("--ood is only defined for ship-track"));
        }
        return Ok(ship_track_ood(&cfg.benchmarks.ship_track, cfg.train.seed)?);
    }
    Ok(instantiate_with(id, &cfg.benchmarks, cfg.train.seed)?)
}

fn out_dir(cli: &Cli) -> Result<&Path, CliError> {
    fs::create_dir_all(&cli.out).map_err(|e| CliError { code: 1, message: format!("{}: {e}", cli.out.display()) })?;
    Ok(&cli.out)
}

fn write(path: PathBuf, text: &str, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    fs::write(&path, text).map_err(|e| CliError { code: 1, message: format!("{}: {e}", path.display()) })?;
    written.push(path);
    Ok(())
}

fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut s = String::from(MetricRow::HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_csv());
        s.push('\n');
    }
    s
}

pub fn train(cli: &Cli, cfg: &RunConfig, args: &TrainArgs) -> Result<Vec<PathBuf>, CliError> {
    let id = benchmark_id(&args.benchmark, cfg)?;
    let mut tc = cfg.train.clone();
    tc.benchmark = id.clone();
    if let Some(s) = args.steps {
        tc.steps = s;
    }
    tc.validate()?;
    let bench = build(&id, cfg, false)?;
    let dir = out_dir(cli)?;
    let st = run_training(&bench, &tc, |r| eprintln!("step {} loss {:.5} val_acc {:.4}", r.step, r.loss, r.val_acc))?;
    let mut written = Vec::new();
    let policy = dir.join("policy.json");
    st.best.save(&policy)?;
    written.push(policy);
    write(dir.join("metrics.csv"), &metrics_csv(&st.history), &mut written)?;
    let pts = |f: fn(&MetricRow) -> f64| st.history.iter().map(|r| (r.step as f64, f(r))).collect();
    let plot = line_plot(
        &format!("training on {id}"),
        "step",
        "value",
        &[
            Series { name: "loss".into(), points: pts(|r| r.loss) },
            Series { name: "train acc".into(), points: pts(|r| r.train_acc) },
            Series { name: "val acc".into(), points: pts(|r| r.val_acc) },
        ],
    );
    write(dir.join("loss.svg"), &plot, &mut written)?;
    Ok(written)
}

const STATUSES: [Status; 5] =
    [Status::PolicyOk, Status::BackupFullStl, Status::BackupSafetyOnly, Status::BackupLongestSafePrefix, Status::Planner];

pub fn summary_header() -> String {
    let mut h = String::from("benchmark,controller,episodes,steps,accuracy,safety_rate,step_time");
    for s in STATUSES {
        let _ = write!(h, ",{}", s.as_str());
    }
    h.push_str(",no_data");
    h
}

pub fn summary_row(benchmark: &str, r: &EvalReport) -> String {
    let mut row = format!(
        "{benchmark},{},{},{},{},{},{:.6}",
        r.controller, r.episodes, r.steps, r.accuracy, r.safety_rate, r.step_time
    );
    for s in STATUSES {
        let _ = write!(row, ",{}", r.status_counts.get(s.as_str()).copied().unwrap_or(0));
    }
    let _ = write!(row, ",{}", r.no_data);
    row
}

#[derive(Serialize)]
struct StepRecord<'a> {
    t: usize,
    state: &'a [f64],
    action: &'a [f64],
    rho: f64,
    status: &'a str,
}

#[derive(Serialize)]
struct EpisodeRecord<'a> {
    episode: usize,
    windows: usize,
    satisfied: usize,
    safe: bool,
    final_state: &'a [f64],
    steps: Vec<StepRecord<'a>>,
}

pub fn episodes_jsonl(logs: &[EpisodeLog]) -> Result<String, CliError> {
    let mut s = String::new();
    for (i, log) in logs.iter().enumerate() {
        let steps = (0..log.actions.len())
            .map(|t| StepRecord {
                t,
                state: &log.states[t],
                action: &log.actions[t],
                rho: log.robustness[t],
                status: log.status[t].as_str(),
            })
            .collect();
        let rec = EpisodeRecord {
            episode: i,
            windows: log.windows,
            satisfied: log.satisfied,
            safe: log.safe,
            final_state: log.states.last().map_or(&[][..], |v| v.as_slice()),
            steps,
        };
        s.push_str(&serde_json::to_string(&rec).map_err(|e| CliError { code: 1, message: e.to_string() })?);
        s.push('\n');
    }
    Ok(s)
}

/// Channels 0 and 1 of every episode, or channel 0 against time for
/// one-dimensional states.
fn trajectory_plot(bench: &Benchmark64, logs: &[EpisodeLog], title: &str) -> String {
    let planar = bench.system.state_dim() >= 2;
    let series: Vec<Series> = logs
        .iter()
        .enumerate()
        .map(|(i, log)| Series {
            name: format!("episode {i}"),
            points: log
                .states
                .iter()
                .enumerate()
                .map(|(t, s)| if planar { (s[0], s[1]) } else { (t as f64, s[0]) })
                .collect(),
        })
        .collect();
    let schema = bench.schema();
    let (xl, yl) = if planar { (schema[0].as_str(), schema[1].as_str()) } else { ("step", schema[0].as_str()) };
    line_plot(title, xl, yl, &series)
}

fn load_policy(path: &Path) -> Result<PolicyNet<f64>, CliError> {
    if !path.exists() {
        return Err(CliError { code: 1, message: format!("missing checkpoint {}", path.display()) });
    }
    Ok(PolicyNet::load(path)?)
}

fn check_policy(net: &PolicyNet<f64>, bench: &Benchmark64) -> Result<(), CliError> {
    let sys = &bench.system;
    if net.state_dim() != sys.state_dim() || net.control_dim != sys.control_dim() || net.horizon != sys.horizon {
        return Err(CliError {
            code: 1,
            message: format!("checkpoint does not match benchmark {} (state, control or horizon size)", bench.id),
        });
    }
    Ok(())
}

/// Runs one evaluation and writes its summary, episodes and plot.
fn run_eval(
    dir: &Path,
    bench: &Benchmark64,
    controller: &mut dyn Controller<f64, stlnpc::benchmarks::Model<f64>>,
    episodes: usize,
    len: usize,
    seed: u64,
    written: &mut Vec<PathBuf>,
) -> Result<EvalReport, CliError> {
    let task = Task::of(bench);
    let report = evaluate(controller, &task, &bench.sampler, episodes, len, seed)?;
    let stem = format!("eval-{}", report.controller.replace('+', "-"));
    let csv = format!("{}\n{}\n", summary_header(), summary_row(&bench.id, &report));
    write(dir.join(format!("{stem}.csv")), &csv, written)?;
    write(dir.join(format!("{stem}.jsonl")), &episodes_jsonl(&report.logs)?, written)?;
    let plot = trajectory_plot(bench, &report.logs, &format!("{} on {}", report.controller, bench.id));
    write(dir.join(format!("{stem}.svg")), &plot, written)?;
    Ok(report)
}

pub fn eval(cli: &Cli, cfg: &RunConfig, args: &EvalArgs) -> Result<Vec<PathBuf>, CliError> {
    let id = benchmark_id(&args.benchmark, cfg)?;
    let bench = build(&id, cfg, args.ood)?;
    let episodes = args.episodes.unwrap_or(cfg.eval.episodes);
    let len = args.len.unwrap_or(cfg.eval.length);
    let seed = cfg.train.seed;
    let mut controller: Box<dyn Controller<f64, stlnpc::benchmarks::Model<f64>>> = match (&args.policy, args.planner) {
        (Some(p), None) => {
            let net = load_policy(p)?;
            check_policy(&net, &bench)?;
            let backup = (args.backup == Switch::On).then(|| cfg.backup.clone());
            if let Some(b) = &backup {
                b.validate(bench.system.horizon)?;
            }
            Box::new(PolicyController { net, backup })
        }
        (None, Some(Planner::Cem)) => {
            Box::new(CemController::new(stlnpc::deploy::CemConfig { seed, ..cfg.planner.cem.clone() }))
        }
        (None, Some(Planner::Shoot)) => Box::new(ShootController::new(cfg.planner.shoot.samples, seed)),
        (None, Some(Planner::Grad)) => Box::new(GradController::new(cfg.planner.grad.clone())),
        _ => return Err(CliError::usage("eval needs either --policy PATH or --planner {cem, shoot, grad}")),
    };
    let dir = out_dir(cli)?;
    let mut written = Vec::new();
    run_eval(dir, &bench, controller.as_mut(), episodes, len, seed, &mut written)?;
    Ok(written)
}

pub fn backup_eval(cli: &Cli, cfg: &RunConfig, args: &BackupEvalArgs) -> Result<Vec<PathBuf>, CliError> {
    let id = benchmark_id(&Some(args.benchmark.clone()), cfg)?;
    let bench = build(&id, cfg, args.ood)?;
    let net = load_policy(&args.policy)?;
    check_policy(&net, &bench)?;
    cfg.backup.validate(bench.system.horizon)?;
    let episodes = args.episodes.unwrap_or(cfg.eval.episodes);
    let len = args.len.unwrap_or(cfg.eval.length);
    let seed = cfg.train.seed;
    let dir = out_dir(cli)?;
    let mut written = Vec::new();
    let mut rows = vec![summary_header()];
    for backup in [None, Some(cfg.backup.clone())] {
        let mut c = PolicyController { net: net.clone(), backup };
        let r = run_eval(dir, &bench, &mut c, episodes, len, seed, &mut written)?;
        rows.push(summary_row(&bench.id, &r));
    }
    write(dir.join("backup-eval.csv"), &(rows.join("\n") + "\n"), &mut written)?;
    Ok(written)
}

fn read_source(path: &str) -> Result<String, CliError> {
    if path == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        fs::read_to_string(path).map_err(|e| CliError { code: 1, message: format!("{path}: {e}") })
    }
}

/// `t,rho,verdict` for every step where the formula fits in the trace.
pub fn monitor_table(trace: &Trace<f64>, text: &str) -> Result<String, Error> {
    let f = parse_formula(text, trace.schema())?;
    // Evaluating at t = 0 reports the horizon error with the last valid step.
    robustness(trace, 0, &f)?;
    let mut s = String::from("t,rho,verdict\n");
    for t in 0..trace.len() - f.horizon() {
        let r = robustness(trace, t, &f)?;
        let _ = writeln!(s, "{t},{r},{}", r > 0.0);
    }
    Ok(s)
}

pub fn monitor(cli: &Cli, args: &MonitorArgs) -> Result<Vec<PathBuf>, CliError> {
    let formula = match (&args.formula, &args.formula_file) {
        (Some(f), None) => f.clone(),
        (None, Some(p)) => read_source(&p.to_string_lossy())?,
        _ => return Err(CliError::usage("monitor needs --formula TEXT or --formula-file PATH")),
    };
    let trace = Trace::<f64>::parse(&read_source(&args.trace)?)?;
    let table = monitor_table(&trace, formula.trim())?;
    print!("{table}");
    let dir = out_dir(cli)?;
    let mut written = Vec::new();
    write(dir.join("monitor.csv"), &table, &mut written)?;
    Ok(written)
}

/// One ablation cell: the varied factor, its value and the training config.
pub struct Cell {
    pub factor: &'static str,
    pub value: String,
    pub seed: u64,
    pub config: TrainConfig,
}

pub fn ablation_cells(cfg: &RunConfig, base: &TrainConfig) -> Vec<Cell> {
    let seeds = if cfg.ablate.seeds.is_empty() { vec![base.seed] } else { cfg.ablate.seeds.clone() };
    let mut cells = Vec::new();
    for &seed in &seeds {
        let b = TrainConfig { seed, ..base.clone() };
        for &g in &cfg.ablate.gamma {
            cells.push(Cell { factor: "gamma", value: g.to_string(), seed, config: TrainConfig { gamma: g, ..b.clone() } });
        }
        for &k in &cfg.ablate.k {
            cells.push(Cell { factor: "k", value: k.to_string(), seed, config: TrainConfig { k, ..b.clone() } });
        }
        for h in &cfg.ablate.hidden {
            let value = h.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("x");
            cells.push(Cell { factor: "hidden", value, seed, config: TrainConfig { hidden: h.clone(), ..b.clone() } });
        }
        for &n in &cfg.ablate.n_train {
            cells.push(Cell { factor: "n_train", value: n.to_string(), seed, config: TrainConfig { n_train: n, ..b.clone() } });
        }
    }
    cells
}

pub const ABLATE_HEADER: &str = "factor,value,seed,train_acc,val_acc,wallclock";

pub fn ablate(cli: &Cli, cfg: &RunConfig, args: &TrainArgs) -> Result<Vec<PathBuf>, CliError> {
    let id = benchmark_id(&args.benchmark, cfg)?;
    let mut base = cfg.train.clone();
    base.benchmark = id.clone();
    if let Some(s) = args.steps {
        base.steps = s;
    }
    let bench = build(&id, cfg, false)?;
    let cells = ablation_cells(cfg, &base);
    for c in &cells {
        c.config.validate()?;
    }
    let dir = out_dir(cli)?;
    let mut csv = format!("{ABLATE_HEADER}\n");
    for c in &cells {
        let start = std::time::Instant::now();
        let st = run_training(&bench, &c.config, |_| {})?;
        let train_acc = st.history.iter().find(|r| r.val_acc == st.best_val).map_or(0.0, |r| r.train_acc);
        eprintln!("{} = {} (seed {}): val_acc {}", c.factor, c.value, c.seed, st.best_val);
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{:.3}",
            c.factor,
            c.value,
            c.seed,
            train_acc,
            st.best_val,
            start.elapsed().as_secs_f64()
        );
    }
    let mut written = Vec::new();
    write(dir.join("ablate.csv"), &csv, &mut written)?;
    Ok(written)
}
