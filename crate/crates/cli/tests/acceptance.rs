//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::models::{backup_case, exhaustive_feasible, tiny_integrator};
use common::prims::catalog;
use common::{oracle, random_instance, Instance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stlnpc::benchmarks::{instantiate, ship_track_ood, BenchmarkConfigs};
use stlnpc::deploy::{
    backup_search, evaluate, theorem1_bound, BackupConfig, CemConfig, CemController, EvalReport, PolicyController,
    Status, Task,
};
use stlnpc::diff::{grad_check, Tape, Var, VarCtx};
use stlnpc::policy::{PolicyNet, PolicySpec};
use stlnpc::stl::{parse_formula, robustness, smooth_robustness, Formula, Trace};
use stlnpc::trainer::{loss_and_grad, train, TrainConfig};
use stlnpc::Benchmark64;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Nested min/max layers and the widest single min/max, computed directly
/// from the syntax tree. `Until` is a max over end points of mins over the
/// prefix, so it adds two layers and its inner min sees up to `hi + 2`
/// operands.
fn depth_and_width(f: &Formula) -> (usize, usize) {
    match f {
        Formula::True | Formula::Pred(_) => (0, 1),
        Formula::Not(g) => depth_and_width(g),
        Formula::And(gs) | Formula::Or(gs) => {
            let parts: Vec<_> = gs.iter().map(depth_and_width).collect();
            let d = parts.iter().map(|p| p.0).max().unwrap_or(0);
            let w = parts.iter().map(|p| p.1).max().unwrap_or(1);
            (d + 1, w.max(gs.len()))
        }
        Formula::Implies(a, b) => {
            let (da, wa) = depth_and_width(a);
            let (db, wb) = depth_and_width(b);
            (da.max(db) + 1, wa.max(wb).max(2))
        }
        Formula::Until(i, a, b) => {
            let (da, wa) = depth_and_width(a);
            let (db, wb) = depth_and_width(b);
            (da.max(db) + 2, wa.max(wb).max(i.hi() - i.lo() + 1).max(i.hi() + 2))
        }
        Formula::Eventually(i, g) | Formula::Always(i, g) => {
            let (d, w) = depth_and_width(g);
            (d + 1, w.max(i.hi() - i.lo() + 1))
        }
    }
}

fn instances() -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..10_000).map(|_| random_instance(&mut rng, 2.0)).collect()
}

fn c1_oracle_equivalence(cases: &[Instance]) -> Outcome {
    let start = Instant::now();
    let mut failures = 0;
    let mut decided = 0;
    for Instance { formula, trace, t } in cases {
        let r = robustness(trace, *t, formula).unwrap();
        if r != 0.0 {
            decided += 1;
            if (r > 0.0) != oracle(formula, trace, *t) {
                failures += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        failures == 0 && secs <= 60.0,
        format!("{} instances, {decided} with nonzero robustness, {failures} sign failures, {secs:.2}s", cases.len()),
    )
}

fn c2_smooth_bound(cases: &[Instance]) -> Outcome {
    let mut violations = 0;
    let mut worst = 0.0f64;
    for k in [10.0, 100.0, 500.0] {
        for Instance { formula, trace, t } in cases {
            let r = robustness(trace, *t, formula).unwrap();
            let s = smooth_robustness(trace, *t, formula, k, &()).unwrap();
            let (d, w) = depth_and_width(formula);
            let bound = d as f64 * (w as f64).ln() / k;
            if (s - r).abs() > bound + 1e-9 {
                violations += 1;
            }
            if bound > 0.0 {
                worst = worst.max((s - r).abs() / bound);
            }
        }
    }
    outcome(violations == 0, format!("{violations} violations over 3 x {} instances, worst error/bound {worst:.3}", cases.len()))
}

/// Formulas over `[x, y]` that fit a 3-step trace from `t = 0`.
const THREE_STEP: [&str; 6] = [
    "G[0,2] (x - 0.5 > 0)",
    "F[0,2] (x * y + 1 > 0) & G[0,1] (y > -1)",
    "(x > 0) U[0,2] (y - 1 > 0)",
    "!(F[1,2] (x^2 - y > 0)) | (x > y)",
    "(x > 0.2) -> G[1,2] (norm2(x, y) - 1 > 0)",
    "F[0,1] G[0,1] (2 * x - y + 0.3 > 0)",
];

fn smooth_grad_error(f: &Formula, x0: &[f64], k: f64) -> f64 {
    let schema = vec!["x".to_string(), "y".to_string()];
    let eval = |v: &[f64]| {
        let tape = Tape::new();
        let ctx = VarCtx::new(tape.clone(), 1);
        let leaves: Vec<Var<f64>> = v.iter().map(|&a| tape.scalar(a)).collect();
        let values = vec![leaves[..3].to_vec(), leaves[3..].to_vec()];
        let tr = Trace::new(schema.clone(), values, 1.0).unwrap();
        let y = smooth_robustness(&tr, 0, f, k, &ctx).unwrap();
        let g = tape.backward(&y).unwrap();
        (y.item(), leaves.iter().map(|l| g.wrt(l)[0]).collect())
    };
    grad_check(eval, x0, 1e-6)
}

fn c3_gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut prim = 0.0f64;
    for p in catalog() {
        for _ in 0..20 {
            let x = p.sample(&mut rng);
            prim = prim.max(grad_check(|x| p.eval(x), &x, 1e-6));
        }
    }
    let schema = ["x".to_string(), "y".to_string()];
    let mut smooth = 0.0f64;
    // Unit-range traces and k = 1 keep every soft-max weight well away from
    // zero; gradients near 1e-8 sit below the finite-difference noise floor.
    for text in THREE_STEP {
        let f = parse_formula(text, &schema).unwrap();
        for _ in 0..20 {
            let x0: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            smooth = smooth.max(smooth_grad_error(&f, &x0, 1.0));
        }
    }
    let bench = tiny_integrator();
    let cfg = TrainConfig { hidden: vec![8], k: 10.0, gamma: 1.0, n_train: 16, batch: 4, ..Default::default() };
    let mut end = 0.0f64;
    for seed in 0..3 {
        let mut spec = PolicySpec::new(1, 1, 4, vec![-1.0], vec![1.0]);
        spec.hidden = vec![8];
        let base = PolicyNet::init(&spec, seed).unwrap();
        let xs = bench.sampler.sample_n(4, 11 + seed).unwrap();
        let f = |theta: &[f64]| {
            let mut p = base.clone();
            p.params = theta.to_vec();
            let (parts, g) = loss_and_grad(&p, &bench, &cfg, &xs, 5).unwrap();
            (parts.total, g)
        };
        end = end.max(grad_check(f, &base.params, 1e-6));
    }
    outcome(
        prim <= 1e-4 && smooth <= 1e-4 && end <= 1e-3,
        format!("max relative error: primitives {prim:.2e}, 3-step smooth robustness {smooth:.2e}, end-to-end {end:.2e}"),
    )
}

fn traffic_config(seed: u64) -> TrainConfig {
    TrainConfig { n_train: 800, steps: 500, eval_every: 50, seed, ..Default::default() }
}

fn c4_traffic() -> Outcome {
    let start = Instant::now();
    let bench = instantiate::<f64>("traffic", 0).unwrap();
    let st = train(&bench, &traffic_config(0), |_| {}).unwrap();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        st.best_val >= 0.75 && secs <= 1800.0,
        format!("N=800 validation accuracy {:.3} (need >= 0.75), {secs:.1}s", st.best_val),
    )
}

fn c5_orderings() -> Outcome {
    let bench = instantiate::<f64>("traffic", 0).unwrap();
    let (mut gamma_wins, mut k_wins) = (0, 0);
    let mut rows = Vec::new();
    for seed in 0..3 {
        let run = |cfg: TrainConfig| train(&bench, &cfg, |_| {}).unwrap().best_val;
        let base = run(traffic_config(seed));
        let no_margin = run(TrainConfig { gamma: 0.0, ..traffic_config(seed) });
        let soft = run(TrainConfig { k: 1.0, ..traffic_config(seed) });
        gamma_wins += usize::from(base > no_margin);
        k_wins += usize::from(base > soft);
        rows.push(format!("seed {seed}: {base:.3}/{no_margin:.3}/{soft:.3}"));
    }
    outcome(
        gamma_wins >= 2 && k_wins >= 2,
        format!(
            "gamma 0.5 > 0 in {gamma_wins}/3, k 500 > 1 in {k_wins}/3 (val acc base/gamma0/k1: {})",
            rows.join("; ")
        ),
    )
}

fn ship_policy() -> PolicyNet<f64> {
    let bench = instantiate::<f64>("ship-track", 0).unwrap();
    let cfg = TrainConfig { benchmark: "ship-track".into(), n_train: 800, steps: 500, eval_every: 50, ..Default::default() };
    train(&bench, &cfg, |_| {}).unwrap().best
}

fn run_policy(bench: &Benchmark64, net: &PolicyNet<f64>, backup: Option<BackupConfig>, episodes: usize) -> EvalReport {
    let mut c = PolicyController { net: net.clone(), backup };
    evaluate(&mut c, &Task::of(bench), &bench.sampler, episodes, 60, 7).unwrap()
}

fn c6_backup_recovery(net: &PolicyNet<f64>) -> Outcome {
    let start = Instant::now();
    let bench = ship_track_ood::<f64>(&BenchmarkConfigs::default().ship_track, 0).unwrap();
    let off = run_policy(&bench, net, None, 20);
    let on = run_policy(&bench, net, Some(BackupConfig::default()), 20);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        on.safety_rate >= 0.95 && on.safety_rate > off.safety_rate && on.accuracy > off.accuracy && secs <= 600.0,
        format!(
            "OOD ship-track, 20 episodes: safety {:.2} -> {:.2}, accuracy {:.3} -> {:.3}, {secs:.1}s",
            off.safety_rate, on.safety_rate, off.accuracy, on.accuracy
        ),
    )
}

/// Does some grid point lie within `delta` (max-norm) of `u` at every step?
/// Grid points are enumerated explicitly rather than rounded to the nearest
/// center.
fn covered(u: &[Vec<f64>], levels: usize, delta: f64, lo: &[f64], hi: &[f64]) -> bool {
    let m = lo.len();
    let points = levels.pow(m as u32);
    u.iter().all(|step| {
        (0..points).any(|mut idx| {
            (0..m).all(|j| {
                let i = idx % levels;
                idx /= levels;
                let center = lo[j] + (i as f64 + 0.5) * (hi[j] - lo[j]) / levels as f64;
                (step[j] - center).abs() <= delta
            })
        })
    })
}

fn c7_coverage_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let trials = 100_000;
    let mut ok = true;
    let mut rows = Vec::new();
    for _ in 0..5 {
        let m = rng.random_range(1..=2);
        let t = rng.random_range(1..=3);
        let levels = rng.random_range(3..=6);
        let lo: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..0.0)).collect();
        let hi: Vec<f64> = lo.iter().map(|l| l + rng.random_range(0.5..3.0)).collect();
        let cell = lo.iter().zip(&hi).map(|(l, h)| (h - l) / levels as f64).fold(f64::INFINITY, f64::min);
        let delta = cell * rng.random_range(0.2..0.5);
        let bound = theorem1_bound(m, t, levels, delta, &lo, &hi).unwrap();
        let hits = (0..trials)
            .filter(|_| {
                let u: Vec<Vec<f64>> =
                    (0..t).map(|_| (0..m).map(|j| rng.random_range(lo[j]..hi[j])).collect()).collect();
                covered(&u, levels, delta, &lo, &hi)
            })
            .count();
        let freq = hits as f64 / trials as f64;
        let se = (freq * (1.0 - freq) / trials as f64).sqrt();
        ok &= freq >= bound - 3.0 * se;
        rows.push(format!("m={m} T={t} L={levels}: {freq:.4} vs {bound:.4}"));
    }
    outcome(ok, format!("empirical vs bound: {}", rows.join("; ")))
}

fn c8_backup_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cfg = BackupConfig { levels: 3, max_prefix: 3, batch: 64 };
    let mut disagreements = 0;
    let mut feasible = 0;
    for _ in 0..100 {
        let case = backup_case(&mut rng, 3);
        let task = Task { system: &case.system, phi: &case.phi, phi_safe: &case.phi_safe };
        let found = backup_search(&case.net, &task, &[case.x0], &cfg).unwrap().status == Status::BackupFullStl;
        let truth = exhaustive_feasible(&case, 3, 3);
        feasible += usize::from(truth);
        disagreements += usize::from(found != truth);
    }
    outcome(disagreements == 0, format!("100 instances ({feasible} feasible), {disagreements} disagreements"))
}

fn c9_speed(net: &PolicyNet<f64>) -> Outcome {
    let bench = instantiate::<f64>("ship-track", 0).unwrap();
    let task = Task::of(&bench);
    let policy = run_policy(&bench, net, None, 2).step_time;
    let cem = |population: usize| {
        let mut c = CemController::new(CemConfig { population, seed: 9, ..Default::default() });
        evaluate(&mut c, &task, &bench.sampler, 2, 60, 7).unwrap().step_time
    };
    let small = cem(100);
    let large = cem(1000);
    outcome(
        policy < small && small < large,
        format!("seconds per step: policy {policy:.2e}, cem-100 {small:.2e}, cem-1000 {large:.2e}"),
    )
}

const TINY: &str = r#"
[train]
benchmark = "ship-track"
n_train = 64
batch = 16
steps = 30
hidden = [16, 16]
eval_every = 10
train_eval = 32

[eval]
episodes = 2
length = 40

[planner.cem]
iterations = 2
population = 20

[ablate]
gamma = [0.0]
k = [1.0]
seeds = [0, 1]
"#;

const WALLCLOCK: [&str; 2] = ["wallclock", "step_time"];

/// File contents with wallclock columns blanked out (CSV files only).
fn stable_contents(path: &Path) -> Vec<u8> {
    let bytes = fs::read(path).unwrap();
    if path.extension().is_none_or(|e| e != "csv") {
        return bytes;
    }
    let text = String::from_utf8(bytes).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let mut out = header.join(",");
    for line in lines {
        let cols: Vec<&str> = line.split(',').enumerate().map(|(i, c)| if WALLCLOCK.contains(&header[i]) { "" } else { c }).collect();
        out.push('\n');
        out.push_str(&cols.join(","));
    }
    out.into_bytes()
}

fn c10_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("tiny.toml"), TINY).unwrap();
    let commands: [&[&str]; 4] = [
        &["train"],
        &["eval", "--policy", "policy.json", "--backup", "on"],
        &["eval", "--planner", "cem"],
        &["ablate"],
    ];
    for run in ["a", "b"] {
        for args in commands {
            let args: Vec<String> = args.iter().map(|a| a.replace("policy.json", &format!("{run}/policy.json"))).collect();
            let out = Command::new(env!("CARGO_BIN_EXE_stlnpc"))
                .current_dir(p)
                .args(["--config", "tiny.toml", "--out", run])
                .args(&args)
                .output()
                .unwrap();
            if !out.status.success() {
                return outcome(false, format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
            }
        }
    }
    let mut names: Vec<_> = fs::read_dir(p.join("a")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    let differing: Vec<String> = names
        .iter()
        .filter(|n| {
            let b = p.join("b").join(n);
            !b.exists() || stable_contents(&p.join("a").join(n)) != stable_contents(&b)
        })
        .map(|n| n.to_string_lossy().into_owned())
        .collect();
    outcome(differing.is_empty(), format!("{} artifacts compared, differing: {differing:?}", names.len()))
}

fn main() {
    let total = Instant::now();
    let cases = instances();
    // Trained on first use and shared by the recovery and speed checks.
    let net = std::cell::OnceCell::new();
    type Check<'a> = Box<dyn FnOnce() -> Outcome + 'a>;
    let results: Vec<(&str, Check)> = vec![
        ("semantics oracle equivalence", Box::new(|| c1_oracle_equivalence(&cases))),
        ("smooth approximation bound", Box::new(|| c2_smooth_bound(&cases))),
        ("gradient fidelity", Box::new(c3_gradients)),
        ("traffic N=800 validation accuracy", Box::new(c4_traffic)),
        ("truncation and sharpness orderings", Box::new(c5_orderings)),
        ("backup OOD recovery", Box::new(|| c6_backup_recovery(net.get_or_init(ship_policy)))),
        ("grid coverage bound", Box::new(c7_coverage_bound)),
        ("backup oracle equivalence", Box::new(c8_backup_oracle)),
        ("speed ordering", Box::new(|| c9_speed(net.get_or_init(ship_policy)))),
        ("determinism", Box::new(c10_determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in results.into_iter().enumerate() {
        let start = Instant::now();
        let o = check();
        failed += usize::from(!o.pass);
        println!(
            "acceptance {:>2} {} {name}: {} [{}]",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            fmt_secs(start.elapsed())
        );
    }
    println!("acceptance: {} of 10 passed in {}", 10 - failed, fmt_secs(total.elapsed()));
    if failed > 0 {
        std::process::exit(1);
    }
}

fn fmt_secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}
