//! Executable checks of the structural theory: A-coordination of the update
//! rule, A-monotonicity and unique convergence after rewards, and
//! membership of the optimal uniform reward in the candidate set.
//!
//! Every check takes a seed and records it next to each violation, so a
//! witness can be replayed by rerunning the check with that seed.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{relax_switchers_only, simulate, ActivationSequence, Imitation, RuleOutcome, UpdateRule};
use crate::error::{Error, Result};
use crate::game::{Graph, NetworkGame, PayoffMatrix, RewardVector, Strategy, StrategyState};
use crate::netgen::{child_seed, generate_instance, InstanceParams};
use crate::uniform::{candidate_rewards, optimal_uniform_reward, succeeds_all_a};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub seed: u64,
    pub witness: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PropertyReport {
    pub property: String,
    pub instances: usize,
    pub violations: Vec<Violation>,
    pub passed: bool,
}

impl PropertyReport {
    pub fn new(property: impl Into<String>, instances: usize, violations: Vec<Violation>) -> Self {
        PropertyReport {
            property: property.into(),
            instances,
            passed: violations.is_empty(),
            violations,
        }
    }

    /// Concatenates reports of the same property over several instances.
    pub fn merge(property: impl Into<String>, reports: impl IntoIterator<Item = PropertyReport>) -> Self {
        let mut instances = 0;
        let mut violations = Vec::new();
        for r in reports {
            instances += r.instances;
            violations.extend(r.violations);
        }
        PropertyReport::new(property, instances, violations)
    }
}

fn outcome_label(o: RuleOutcome) -> &'static str {
    match o {
        RuleOutcome::OnlyA => "{A}",
        RuleOutcome::OnlyB => "{B}",
        RuleOutcome::Both => "{A,B}",
    }
}

/// Checks both implications of A-coordination for one ordered pair
/// `y <= z` at every agent.
fn coordination_witness<R: UpdateRule + ?Sized>(
    rule: &R,
    game: &NetworkGame,
    y: &StrategyState,
    z: &StrategyState,
) -> Option<String> {
    for i in 0..game.n() {
        let fy = rule.evaluate(game, y, i);
        let fz = rule.evaluate(game, z, i);
        let bad = match fy {
            RuleOutcome::OnlyA => fz != RuleOutcome::OnlyA,
            RuleOutcome::Both => !fz.contains(Strategy::A),
            RuleOutcome::OnlyB => false,
        };
        if bad {
            return Some(format!(
                "agent {}: y={y} gives {}, z={z} gives {}",
                i + 1,
                outcome_label(fy),
                outcome_label(fz)
            ));
        }
    }
    None
}

/// Samples `samples` pairs `y <= z` (every A in `y` is an A in `z`) and
/// checks the A-coordination implications at every agent.
pub fn check_a_coordinating<R: UpdateRule + ?Sized>(
    rule: &R,
    game: &NetworkGame,
    samples: usize,
    seed: u64,
) -> PropertyReport {
    let n = game.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = Vec::new();
    for _ in 0..samples {
        let y: Vec<Strategy> = (0..n).map(|_| random_strategy(&mut rng)).collect();
        let z: Vec<Strategy> = y
            .iter()
            .map(|&s| if s == Strategy::B && rng.gen::<bool>() { Strategy::A } else { s })
            .collect();
        let (y, z) = (StrategyState::new(y), StrategyState::new(z));
        if let Some(w) = coordination_witness(rule, game, &y, &z) {
            violations.push(Violation { seed, witness: w });
        }
    }
    PropertyReport::new("a_coordinating", 1, violations)
}

/// All `3^n` ordered pairs `y <= z`. Only for tiny games.
pub fn check_a_coordinating_exhaustive<R: UpdateRule + ?Sized>(
    rule: &R,
    game: &NetworkGame,
) -> Result<PropertyReport> {
    let n = game.n();
    if n > 12 {
        return Err(Error::InvalidArgument(format!(
            "exhaustive check is limited to 12 agents, got {n}"
        )));
    }
    let mut violations = Vec::new();
    for ymask in 0u64..(1 << n) {
        let y = StrategyState::from_mask(n, ymask);
        let free = !ymask & ((1u64 << n) - 1);
        // walk every subset of the B-players of y
        let mut sub = free;
        loop {
            let z = StrategyState::from_mask(n, ymask | sub);
            if let Some(w) = coordination_witness(rule, game, &y, &z) {
                violations.push(Violation { seed: 0, witness: w });
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & free;
        }
    }
    Ok(PropertyReport::new("a_coordinating_exhaustive", 1, violations))
}

fn random_strategy<R: Rng + ?Sized>(rng: &mut R) -> Strategy {
    if rng.gen::<bool>() {
        Strategy::A
    } else {
        Strategy::B
    }
}

fn activation_budget(n: usize) -> u64 {
    1_000 * (n as u64).pow(2) + 10_000
}

/// Applies `rewards` at the equilibrium `x0` and simulates `sequences`
/// random activation orders; no agent may ever switch from A to B.
pub fn check_a_monotone(
    game: &NetworkGame,
    x0: &StrategyState,
    rewards: &RewardVector,
    sequences: usize,
    seed: u64,
) -> Result<PropertyReport> {
    let rewarded = game.apply_rewards(rewards)?;
    let rule = Imitation::new();
    let mut violations = Vec::new();
    for k in 0..sequences {
        let seq = ActivationSequence::RandomUniform(child_seed(seed, k as u64));
        let t = simulate(&rule, &rewarded, x0, &seq, activation_budget(game.n()))?;
        if let Some(e) = t.events.iter().find(|e| e.from == Strategy::A) {
            violations.push(Violation {
                seed,
                witness: format!("sequence {k}: agent {} switched A to B at activation {}", e.agent + 1, e.t),
            });
        }
    }
    Ok(PropertyReport::new("a_monotone", 1, violations))
}

/// Relaxes the rewarded game from `x0` along `sequences` random orders,
/// round robin and the switchers-only scan. All must end in the same
/// equilibrium after at most `n` switches, with the same set of switchers.
pub fn check_unique_convergence(
    game: &NetworkGame,
    x0: &StrategyState,
    rewards: &RewardVector,
    sequences: usize,
    seed: u64,
) -> Result<PropertyReport> {
    let rewarded = game.apply_rewards(rewards)?;
    let rule = Imitation::new();
    let n = game.n();
    let reference = relax_switchers_only(&rule, &rewarded, x0)?;
    let switchers = |x: &StrategyState| -> Vec<usize> { (0..n).filter(|&i| x.get(i) != x0.get(i)).collect() };
    let expected_switchers = switchers(&reference);
    let mut violations = Vec::new();
    let mut runs: Vec<(String, ActivationSequence)> = (0..sequences)
        .map(|k| {
            (
                format!("sequence {k}"),
                ActivationSequence::RandomUniform(child_seed(seed, k as u64)),
            )
        })
        .collect();
    runs.push(("round robin".into(), ActivationSequence::RoundRobin));
    for (name, seq) in runs {
        let t = simulate(&rule, &rewarded, x0, &seq, activation_budget(n))?;
        let witness = if !t.converged {
            Some(format!("{name}: no equilibrium after {} activations", t.activations))
        } else if t.final_state != reference {
            Some(format!("{name}: ended at {} instead of {reference}", t.final_state))
        } else if t.events.len() > n {
            Some(format!("{name}: {} switches for {n} agents", t.events.len()))
        } else {
            let mut flipped: Vec<usize> = t.events.iter().map(|e| e.agent).collect();
            flipped.sort_unstable();
            flipped.dedup();
            (flipped != expected_switchers).then(|| format!("{name}: switch set differs"))
        };
        if let Some(w) = witness {
            violations.push(Violation { seed, witness: w });
        }
    }
    Ok(PropertyReport::new("unique_convergence", 1, violations))
}

/// The optimal uniform reward lies in the candidate set, and probing every
/// non-negative candidate and the points half a gap either side of it finds
/// no success below the optimum and no failure above it.
pub fn check_candidate_membership(game: &NetworkGame, x0: &StrategyState, seed: u64) -> Result<PropertyReport> {
    let r_star = optimal_uniform_reward(game, x0)?;
    let candidates = candidate_rewards(game, x0)?;
    let mut violations = Vec::new();
    if !candidates.contains(r_star) {
        violations.push(Violation {
            seed,
            witness: format!("optimum {r_star} is not a candidate"),
        });
    }
    let eta = candidates.min_gap().map_or(0.5, |g| 0.5 * g);
    let v = candidates.values();
    let sentinel = v[v.len() - 1] + 1.0;
    let mut probes = Vec::new();
    for &c in v.iter().filter(|&&c| c >= 0.0).chain(std::iter::once(&sentinel)) {
        probes.extend([c - eta, c, c + eta]);
    }
    for t in probes.into_iter().filter(|&t| t >= 0.0 && t != r_star) {
        let ok = succeeds_all_a(game, x0, t)?;
        if ok != (t > r_star) {
            violations.push(Violation {
                seed,
                witness: format!(
                    "uniform reward {t} {} although the optimum is {r_star}",
                    if ok { "succeeds" } else { "fails" }
                ),
            });
        }
    }
    Ok(PropertyReport::new("candidate_membership", 1, violations))
}

/// Which checks [`run_suite`] performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    ACoord,
    Monotone,
    Unique,
    Candidates,
    All,
}

impl Suite {
    fn includes(self, other: Suite) -> bool {
        self == Suite::All || self == other
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "acoord" => Ok(Suite::ACoord),
            "monotone" => Ok(Suite::Monotone),
            "unique" => Ok(Suite::Unique),
            "candidates" => Ok(Suite::Candidates),
            "all" => Ok(Suite::All),
            other => Err(Error::InvalidArgument(format!("unknown suite '{other}'"))),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::ACoord => "acoord",
            Suite::Monotone => "monotone",
            Suite::Unique => "unique",
            Suite::Candidates => "candidates",
            Suite::All => "all",
        })
    }
}

/// Knobs for [`run_suite`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteConfig {
    pub instances: usize,
    pub seed: u64,
    pub min_n: usize,
    pub max_n: usize,
    pub sequences: usize,
    pub pairs: usize,
}

impl SuiteConfig {
    /// 5 to 30 agents, mean degree 4, `p = 1`, `v = 1/2`, 20 sequences and
    /// 1000 sampled pairs per instance.
    pub fn new(instances: usize, seed: u64) -> Self {
        SuiteConfig {
            instances,
            seed,
            min_n: 5,
            max_n: 30,
            sequences: 20,
            pairs: 1000,
        }
    }
}

/// Sparse random rewards: each agent gets a U[0, 1) bonus with probability 1/2.
pub fn random_rewards<R: Rng + ?Sized>(n: usize, rng: &mut R) -> RewardVector {
    let values = (0..n)
        .map(|_| if rng.gen::<bool>() { rng.gen::<f64>() } else { 0.0 })
        .collect();
    RewardVector::new(values).expect("rewards are finite and non-negative")
}

/// Runs the selected checks on `instances` random opponent-coordinating
/// instances, one report per property. Instance `k` uses the child seed
/// `(seed, k)` for its network, rewards and sequences.
pub fn run_suite(suite: Suite, config: &SuiteConfig) -> Result<Vec<PropertyReport>> {
    if config.instances == 0 || config.min_n == 0 || config.min_n > config.max_n {
        return Err(Error::InvalidArgument("empty verification suite".into()));
    }
    let per_instance: Vec<Vec<(usize, PropertyReport)>> = (0..config.instances)
        .into_par_iter()
        .map(|k| verify_instance(suite, config, child_seed(config.seed, k as u64)))
        .collect::<Result<_>>()?;
    let names = ["a_coordinating", "a_monotone", "unique_convergence", "candidate_membership"];
    let mut buckets: Vec<Vec<PropertyReport>> = vec![Vec::new(); names.len()];
    for reports in per_instance {
        for (slot, r) in reports {
            buckets[slot].push(r);
        }
    }
    let wanted = [Suite::ACoord, Suite::Monotone, Suite::Unique, Suite::Candidates];
    Ok(wanted
        .iter()
        .zip(names)
        .zip(buckets)
        .filter(|((s, _), _)| suite.includes(**s))
        .map(|((_, name), reports)| PropertyReport::merge(name, reports))
        .collect())
}

fn verify_instance(suite: Suite, config: &SuiteConfig, seed: u64) -> Result<Vec<(usize, PropertyReport)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(config.min_n..=config.max_n);
    let inst = generate_instance(&InstanceParams::standard(n), rng.gen())?;
    let rewards = random_rewards(n, &mut rng);
    let mut out = Vec::new();
    if suite.includes(Suite::ACoord) {
        out.push((0, check_a_coordinating(&Imitation::new(), &inst.game, config.pairs, seed)));
    }
    if suite.includes(Suite::Monotone) {
        out.push((1, check_a_monotone(&inst.game, &inst.x0, &rewards, config.sequences, seed)?));
    }
    if suite.includes(Suite::Unique) {
        out.push((2, check_unique_convergence(&inst.game, &inst.x0, &rewards, config.sequences, seed)?));
    }
    if suite.includes(Suite::Candidates) {
        out.push((3, check_candidate_membership(&inst.game, &inst.x0, seed)?));
    }
    Ok(out)
}

/// Every connected simple graph on `n` labelled vertices. Isomorphic copies
/// are kept. Only for tiny `n`.
pub fn connected_graphs(n: usize) -> Vec<Graph> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    assert!(pairs.len() < 32, "too many vertices to enumerate");
    (0u32..(1 << pairs.len()))
        .filter_map(|mask| {
            let edges = pairs.iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, &e)| e);
            let g = Graph::new(n, edges).expect("valid edges");
            g.is_connected().then_some(g)
        })
        .collect()
}

/// Random opponent-coordinating matrix. With `small_ints` the entries are
/// small integers, which makes payoff ties common.
pub fn random_coordinating_matrix<R: Rng + ?Sized>(rng: &mut R, small_ints: bool) -> PayoffMatrix {
    if small_ints {
        let b = rng.gen_range(0..3) as f64;
        let c = rng.gen_range(0..3) as f64;
        PayoffMatrix::new(b + rng.gen_range(1..3) as f64, b, c, c + rng.gen_range(1..3) as f64)
    } else {
        let b = 2.0 * rng.gen::<f64>();
        let c = 2.0 * rng.gen::<f64>();
        // gen::<f64>() is in [0, 1), so 1 - gen is in (0, 1]
        PayoffMatrix::new(b + 1.0 - rng.gen::<f64>(), b, c, c + 1.0 - rng.gen::<f64>())
    }
}

/// Exhaustive A-coordination check over every connected graph with up to
/// `max_n` agents, `draws` payoff assignments per graph (half of them small
/// integers).
pub fn check_small_games_exhaustive(max_n: usize, draws: usize, seed: u64) -> Result<PropertyReport> {
    let graphs: Vec<Graph> = (1..=max_n).flat_map(connected_graphs).collect();
    let reports = graphs
        .par_iter()
        .enumerate()
        .map(|(gi, g)| {
            let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, gi as u64));
            let mut reports = Vec::with_capacity(draws);
            for d in 0..draws {
                let payoffs = (0..g.n())
                    .map(|_| random_coordinating_matrix(&mut rng, d % 2 == 1))
                    .collect();
                let game = NetworkGame::new(g.clone(), payoffs)?;
                let mut r = check_a_coordinating_exhaustive(&Imitation::new(), &game)?;
                for v in &mut r.violations {
                    v.seed = seed;
                    v.witness = format!("graph {gi} draw {d}: {}", v.witness);
                }
                reports.push(r);
            }
            Ok(reports)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PropertyReport::merge("a_coordinating_exhaustive", reports.into_iter().flatten()))
}

/// Searches small games where some agent has `c > d` for a pair that breaks
/// A-coordination. Returns the game and the witness.
pub fn find_coordination_counterexample(
    max_n: usize,
    attempts: usize,
    seed: u64,
) -> Result<Option<(NetworkGame, String)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graphs: Vec<Graph> = (2..=max_n).flat_map(connected_graphs).collect();
    for _ in 0..attempts {
        let g = graphs[rng.gen_range(0..graphs.len())].clone();
        let payoffs = (0..g.n())
            .map(|_| {
                let (a, b) = (rng.gen_range(0..4) as f64, rng.gen_range(0..4) as f64);
                let d = rng.gen_range(0..3) as f64;
                // anti-coordinating on B
                PayoffMatrix::new(a, b, d + rng.gen_range(1..3) as f64, d)
            })
            .collect();
        let game = NetworkGame::new(g, payoffs)?;
        let report = check_a_coordinating_exhaustive(&Imitation::new(), &game)?;
        if let Some(v) = report.violations.into_iter().next() {
            return Ok(Some((game, v.witness)));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node() -> (NetworkGame, StrategyState) {
        let pm = PayoffMatrix::new(2.0, 0.0, 0.0, 2.0);
        let game = NetworkGame::homogeneous(Graph::path(2), pm).unwrap();
        (game, StrategyState::parse("AB").unwrap())
    }

    #[test]
    fn report_passes_iff_no_violations() {
        assert!(PropertyReport::new("p", 3, vec![]).passed);
        let r = PropertyReport::new("p", 3, vec![Violation { seed: 1, witness: "w".into() }]);
        assert!(!r.passed);
        let m = PropertyReport::merge("p", [r, PropertyReport::new("p", 2, vec![])]);
        assert_eq!(m.instances, 5);
        assert!(!m.passed);
    }

    #[test]
    fn connected_graph_counts() {
        // labelled connected graphs: 1, 1, 4, 38
        let counts: Vec<usize> = (1..=4).map(|n| connected_graphs(n).len()).collect();
        assert_eq!(counts, vec![1, 1, 4, 38]);
    }

    #[test]
    fn zero_rewards_change_nothing() {
        let inst = generate_instance(&InstanceParams::standard(12), 3).unwrap();
        let zero = RewardVector::zeros(12);
        assert!(check_a_monotone(&inst.game, &inst.x0, &zero, 5, 3).unwrap().passed);
        assert!(check_unique_convergence(&inst.game, &inst.x0, &zero, 5, 3).unwrap().passed);
    }

    #[test]
    fn two_node_candidates() {
        let (game, x) = two_node();
        let r = check_candidate_membership(&game, &x, 0).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn all_a_start_is_trivially_a_member() {
        let (game, _) = two_node();
        let r = check_candidate_membership(&game, &StrategyState::all_a(2), 0).unwrap();
        assert!(r.passed);
    }

    #[test]
    fn sampled_and_exhaustive_agree_on_small_coordinating_games() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = Graph::star(4);
        let payoffs = (0..4).map(|_| random_coordinating_matrix(&mut rng, true)).collect();
        let game = NetworkGame::new(g, payoffs).unwrap();
        assert!(check_a_coordinating(&Imitation::new(), &game, 500, 1).passed);
        assert!(check_a_coordinating_exhaustive(&Imitation::new(), &game).unwrap().passed);
    }

    #[test]
    fn non_coordinating_games_can_fail() {
        let found = find_coordination_counterexample(4, 2000, 11).unwrap();
        let (game, witness) = found.expect("a counterexample exists");
        assert!(!game.all_opponent_coordinating());
        assert!(witness.starts_with("agent "));
    }

    #[test]
    fn suite_on_a_few_instances() {
        let mut cfg = SuiteConfig::new(4, 21);
        cfg.pairs = 100;
        cfg.sequences = 4;
        let reports = run_suite(Suite::All, &cfg).unwrap();
        assert_eq!(reports.len(), 4);
        for r in &reports {
            assert_eq!(r.instances, 4);
            assert!(r.passed, "{r:?}");
        }
        let only = run_suite(Suite::Unique, &cfg).unwrap();
        assert_eq!(only.len(), 1);
        assert_eq!(only[0], reports[2]);
    }

    #[test]
    fn suite_names_round_trip() {
        for s in ["acoord", "monotone", "unique", "candidates", "all"] {
            assert_eq!(s.parse::<Suite>().unwrap().to_string(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }
}
