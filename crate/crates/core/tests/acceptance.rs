//! End-to-end acceptance run. Prints one line per criterion and exits
//! nonzero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use imitanet::experiments::mean_and_std_err;
use imitanet::netgen::{child_seed, generate_instance, Instance, InstanceParams, RadiusSpec};
use imitanet::optimal::exhaustive_optimal;
use imitanet::targeted::{budgeted_control, targeted_control, DEFAULT_EPSILON};
use imitanet::uniform::{brute_force_uniform_oracle, candidate_rewards, optimal_uniform_reward, succeeds_all_a};
use imitanet::verify::{check_small_games_exhaustive, run_suite, Suite, SuiteConfig};
use imitanet::TargetingPolicy;

const SEED: u64 = 0;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        detail: detail.into(),
    }
}

fn instance(params: &InstanceParams, k: u64) -> Instance {
    generate_instance(params, child_seed(SEED, k)).expect("instance generation")
}

fn heuristics(seed: u64) -> [TargetingPolicy; 6] {
    [
        TargetingPolicy::Rand(child_seed(seed, 1)),
        TargetingPolicy::Deg,
        TargetingPolicy::Ime,
        TargetingPolicy::Ipo,
        TargetingPolicy::Iro,
        TargetingPolicy::ipro(),
    ]
}

fn theory_suite() -> Verdict {
    let reports = run_suite(Suite::Monotone, &SuiteConfig::new(200, SEED))
        .and_then(|mut a| {
            a.extend(run_suite(Suite::Unique, &SuiteConfig::new(200, SEED))?);
            Ok(a)
        })
        .expect("suite runs");
    let violations: usize = reports.iter().map(|r| r.violations.len()).sum();
    let detail = reports
        .iter()
        .map(|r| format!("{} {}/{}", r.property, r.violations.len(), r.instances))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(violations == 0, format!("violations: {detail}"))
}

fn small_games() -> Verdict {
    let r = check_small_games_exhaustive(4, 20, SEED).expect("exhaustive check runs");
    verdict(r.passed, format!("{} games, {} violations", r.instances, r.violations.len()))
}

fn uniform_correctness() -> Verdict {
    let params = InstanceParams::standard(15);
    let failures: Vec<String> = (0..100u64)
        .into_par_iter()
        .filter_map(|k| {
            let inst = instance(&params, k);
            let (g, x) = (&inst.game, &inst.x0);
            let r = optimal_uniform_reward(g, x).unwrap();
            let oracle = brute_force_uniform_oracle(g, x).unwrap();
            let mut bad = Vec::new();
            if r != oracle {
                bad.push(format!("r={r} oracle={oracle}"));
            }
            if !candidate_rewards(g, x).unwrap().contains(r) {
                bad.push("not a candidate".into());
            }
            if !succeeds_all_a(g, x, r + 1e-6).unwrap() {
                bad.push("fails above".into());
            }
            if r > 0.0 && succeeds_all_a(g, x, (r - 1e-6).max(0.0)).unwrap() {
                bad.push("succeeds below".into());
            }
            (!bad.is_empty()).then(|| format!("instance {k}: {}", bad.join("; ")))
        })
        .collect();
    let first = failures.first().map(|f| format!(", first: {f}")).unwrap_or_default();
    verdict(failures.is_empty(), format!("100 instances, {} failures{first}", failures.len()))
}

fn near_optimality() -> Verdict {
    let rows: Vec<(f64, f64, bool)> = (0..200u64)
        .into_par_iter()
        .map(|k| {
            let mut params = InstanceParams::standard(12);
            params.radius = RadiusSpec::MeanDegree((3 + k % 6) as f64);
            let inst = instance(&params, k);
            let opt = exhaustive_optimal(&inst.game, &inst.x0, DEFAULT_EPSILON).unwrap().total_cost;
            let costs: Vec<f64> = heuristics(child_seed(SEED, k))
                .iter()
                .map(|p| targeted_control(&inst.game, &inst.x0, p, DEFAULT_EPSILON).unwrap().total_cost)
                .collect();
            (opt, costs[5], costs.iter().all(|&c| opt <= c))
        })
        .collect();
    let opt: f64 = rows.iter().map(|r| r.0).sum();
    let ipro: f64 = rows.iter().map(|r| r.1).sum();
    let dominated = rows.iter().filter(|r| !r.2).count();
    let ratio = ipro / opt;
    verdict(
        ratio <= 1.05 && dominated == 0,
        format!("mean IPRO/opt = {ratio:.4}, rows where a heuristic beat opt: {dominated}"),
    )
}

fn heuristic_ordering() -> Verdict {
    const N: usize = 20;
    let costs: Vec<[f64; 6]> = (0..300u64)
        .into_par_iter()
        .map(|k| {
            let mut params = InstanceParams::standard(N);
            params.radius = RadiusSpec::MeanDegree((2 + k % 9) as f64);
            let inst = instance(&params, k);
            let policies = heuristics(child_seed(SEED, k));
            std::array::from_fn(|j| {
                targeted_control(&inst.game, &inst.x0, &policies[j], DEFAULT_EPSILON).unwrap().total_cost / N as f64
            })
        })
        .collect();
    let stat = |j: usize| mean_and_std_err(&costs.iter().map(|c| c[j]).collect::<Vec<_>>());
    let [rand, deg, ime, ipo, iro, ipro] = std::array::from_fn(stat);
    let middle = deg.0.max(ime.0).max(iro.0);
    let ordered = rand.0 > ipo.0 && ipo.0 > middle && middle >= ipro.0;
    let separated = rand.0 - 2.0 * rand.1 > ipro.0 + 2.0 * ipro.1;
    verdict(
        ordered && separated,
        format!(
            "rand {:.4}±{:.4} ipo {:.4} ime {:.4} iro {:.4} deg {:.4} ipro {:.4}±{:.4}",
            rand.0, rand.1, ipo.0, ime.0, iro.0, deg.0, ipro.0, ipro.1
        ),
    )
}

fn uniform_vs_targeted() -> Verdict {
    let mut parts = Vec::new();
    let mut passed = true;
    for n in [20usize, 40] {
        let params = InstanceParams::standard(n);
        let pairs: Vec<(f64, f64)> = (0..100u64)
            .into_par_iter()
            .map(|k| {
                let inst = instance(&params, k);
                let r0 = optimal_uniform_reward(&inst.game, &inst.x0).unwrap();
                let t = targeted_control(&inst.game, &inst.x0, &TargetingPolicy::ipro(), DEFAULT_EPSILON).unwrap();
                (t.total_cost / n as f64, r0)
            })
            .collect();
        let targeted = pairs.iter().map(|p| p.0).sum::<f64>() / 100.0;
        let uniform = pairs.iter().map(|p| p.1).sum::<f64>() / 100.0;
        passed &= targeted < uniform;
        parts.push(format!("n={n}: targeted {targeted:.4} uniform {uniform:.4}"));
    }
    verdict(passed, parts.join(", "))
}

fn budget_monotonicity() -> Verdict {
    let params = InstanceParams::standard(20);
    let violations: Vec<u64> = (0..100u64)
        .into_par_iter()
        .filter(|&k| {
            let inst = instance(&params, k);
            let p = TargetingPolicy::ipro();
            let t = targeted_control(&inst.game, &inst.x0, &p, DEFAULT_EPSILON).unwrap().total_cost;
            let counts: Vec<usize> = [0.0, 0.25 * t, 0.5 * t, 0.75 * t, t]
                .iter()
                .map(|&rho| budgeted_control(&inst.game, &inst.x0, &p, rho, DEFAULT_EPSILON).unwrap().num_a)
                .collect();
            !(counts.windows(2).all(|w| w[0] <= w[1]) && counts[4] == 20)
        })
        .collect();
    verdict(violations.is_empty(), format!("100 instances, violations {violations:?}"))
}

fn run_cli(args: &[&str], threads: &str) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_imitanet"))
        .args(args)
        .env("IMITANET_THREADS", threads)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

/// Runs the command twice (with different worker counts) and compares the
/// bytes of stdout and of any listed output files.
fn same_twice(args: &[&str], files: &[&Path]) -> Result<(), String> {
    let mut snapshots = Vec::new();
    for threads in ["1", "3"] {
        let mut snap = vec![run_cli(args, threads)?];
        for f in files {
            snap.push(std::fs::read(f).map_err(|e| format!("{}: {e}", f.display()))?);
        }
        snapshots.push(snap);
    }
    if snapshots[0] == snapshots[1] {
        Ok(())
    } else {
        Err(format!("{args:?} differs between runs"))
    }
}

fn cli_determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name);
    let game = d("game.json");
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let mut checked = 0;
    let result = (|| -> Result<(), String> {
        std::fs::write(&game, run_cli(&["gen", "--n", "14", "--seed", "9"], "1")?).unwrap();
        let g = s(&game);
        let csv = d("rows.csv");
        let meta = d("rows.csv.meta.json");
        let games = d("games");
        let cases: Vec<(Vec<String>, Vec<&Path>)> = vec![
            (vec!["gen".into(), "--n".into(), "14".into(), "--seed".into(), "9".into()], vec![]),
            (
                vec!["gen", "--n", "10", "--count", "3", "--seed", "2", "--out", &s(&games)]
                    .into_iter()
                    .map(String::from)
                    .collect(),
                vec![],
            ),
            (vec!["simulate".into(), "--game".into(), g.clone(), "--seed".into(), "4".into(), "--uniform".into(), "0.3".into()], vec![]),
            (vec!["uniform".into(), "--game".into(), g.clone()], vec![]),
            (vec!["verify".into(), "--instances".into(), "10".into(), "--small-graphs".into(), "3".into()], vec![]),
            (
                vec!["experiment", "--id", "connectivity", "--instances", "2", "--out", &s(&csv)]
                    .into_iter()
                    .map(String::from)
                    .collect(),
                vec![csv.as_path(), meta.as_path()],
            ),
        ];
        for (args, files) in &cases {
            let args: Vec<&str> = args.iter().map(String::as_str).collect();
            same_twice(&args, files)?;
            checked += 1;
        }
        let written: Vec<_> = (0..3).map(|k| games.join(format!("game_{k:04}.json"))).collect();
        let before: Vec<Vec<u8>> = written.iter().map(|p| std::fs::read(p).unwrap()).collect();
        run_cli(&["gen", "--n", "10", "--count", "3", "--seed", "2", "--out", &s(&games)], "1")?;
        if written.iter().zip(&before).any(|(p, b)| std::fs::read(p).unwrap() != *b) {
            return Err("gen --out files differ".into());
        }
        for policy in ["rand", "deg", "ime", "ipo", "iro", "ipro", "opt"] {
            same_twice(&["target", "--game", &g, "--policy", policy, "--seed", "5"], &[])?;
            checked += 1;
        }
        same_twice(&["target", "--game", &g, "--policy", "ipro", "--budget", "0.5"], &[])?;
        same_twice(&["target", "--game", &g, "--policy", "iro", "--alpha", "2", "--beta", "0.5"], &[])?;
        same_twice(&["summarize", &s(&csv)], &[])?;
        same_twice(&["summarize", &s(&csv), "--format", "csv"], &[])?;
        checked += 4;
        Ok(())
    })();
    match result {
        Ok(()) => verdict(true, format!("{checked} command lines byte-identical across reruns")),
        Err(e) => verdict(false, e),
    }
}

/// Name, check and optional runtime limit.
type Criterion = (&'static str, fn() -> Verdict, Option<Duration>);

fn main() {
    let criteria: [Criterion; 8] = [
        ("theory suite", theory_suite, Some(Duration::from_secs(60))),
        ("A-coordination on small graphs", small_games, Some(Duration::from_secs(60))),
        ("uniform reward correctness", uniform_correctness, Some(Duration::from_secs(120))),
        ("IPRO near-optimality", near_optimality, Some(Duration::from_secs(600))),
        ("heuristic ordering", heuristic_ordering, None),
        ("uniform vs targeted", uniform_vs_targeted, None),
        ("budget monotonicity", budget_monotonicity, None),
        ("CLI determinism", cli_determinism, None),
    ];
    let mut failed = 0;
    for (i, (name, check, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut v = check();
        let took = start.elapsed();
        if let Some(limit) = limit {
            if took > *limit {
                v.passed = false;
                v.detail.push_str(&format!("; over the {}s limit", limit.as_secs()));
            }
        }
        failed += usize::from(!v.passed);
        println!(
            "criterion {}: {} {name}: {} ({:.1}s)",
            i + 1,
            if v.passed { "PASS" } else { "FAIL" },
            v.detail,
            took.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
