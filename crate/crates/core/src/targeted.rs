//! Targeted rewards: iteratively pick an A-player bordering B-players and
//! raise its reward just enough that one of those neighbors switches.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{is_equilibrium, relax, Imitation};
use crate::error::{Error, Result};
use crate::game::{NetworkGame, RewardVector, Strategy, StrategyState};
use crate::netgen::is_controllable;

pub const DEFAULT_EPSILON: f64 = 1e-9;

/// Rule for choosing which eligible agent receives the next reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetingPolicy {
    /// Uniformly random eligible agent.
    Rand(u64),
    /// Highest degree.
    Deg,
    /// Highest current payoff.
    Ime,
    /// Largest potential gain.
    Ipo,
    /// Smallest required reward.
    Iro,
    /// Largest `gain^alpha / reward^beta`.
    Ipro { alpha: f64, beta: f64 },
}

impl TargetingPolicy {
    pub fn ipro() -> Self {
        TargetingPolicy::Ipro { alpha: 1.0, beta: 1.0 }
    }

    /// `(alpha, beta)` for the ratio-based policies.
    pub fn ratio_weights(&self) -> Option<(f64, f64)> {
        match *self {
            TargetingPolicy::Ipo => Some((1.0, 0.0)),
            TargetingPolicy::Iro => Some((0.0, 1.0)),
            TargetingPolicy::Ipro { alpha, beta } => Some((alpha, beta)),
            _ => None,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        !matches!(self, TargetingPolicy::Rand(_))
    }

    /// Short lowercase label (`rand`, `deg`, `ime`, `ipo`, `iro`, `ipro`).
    pub fn label(&self) -> &'static str {
        match self {
            TargetingPolicy::Rand(_) => "rand",
            TargetingPolicy::Deg => "deg",
            TargetingPolicy::Ime => "ime",
            TargetingPolicy::Ipo => "ipo",
            TargetingPolicy::Iro => "iro",
            TargetingPolicy::Ipro { .. } => "ipro",
        }
    }

    fn validate(&self) -> Result<()> {
        if let TargetingPolicy::Ipro { alpha, beta } = *self {
            if !(alpha >= 0.0 && beta >= 0.0) || !alpha.is_finite() || !beta.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "IPRO weights must be finite and non-negative, got ({alpha}, {beta})"
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for TargetingPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for TargetingPolicy {
    type Err = Error;

    /// Parses a label; `rand` gets seed 0 and `ipro` weights (1, 1).
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rand" => Ok(TargetingPolicy::Rand(0)),
            "deg" => Ok(TargetingPolicy::Deg),
            "ime" => Ok(TargetingPolicy::Ime),
            "ipo" => Ok(TargetingPolicy::Ipo),
            "iro" => Ok(TargetingPolicy::Iro),
            "ipro" => Ok(TargetingPolicy::ipro()),
            other => Err(Error::InvalidArgument(format!("unknown policy '{other}'"))),
        }
    }
}

/// Result of a targeted (or budgeted, or exhaustive) control run.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutcome {
    pub rewards: RewardVector,
    pub final_state: StrategyState,
    /// Running sum of committed increments, in commit order.
    pub total_cost: f64,
    pub num_a: usize,
    pub iterations: usize,
    pub targeted_order: Vec<usize>,
}

/// A-players with at least one B-playing neighbor.
pub fn eligible_set(game: &NetworkGame, xbar: &StrategyState) -> Vec<usize> {
    let g = game.graph();
    (0..game.n())
        .filter(|&i| {
            xbar.get(i) == Strategy::A && g.neighbors(i).iter().any(|&j| xbar.get(j) == Strategy::B)
        })
        .collect()
}

/// Smallest extra reward (up to the strict inequality) after which agent `i`
/// out-earns the best B-player next to one of its B-neighbors.
///
/// `game` must already include the rewards committed so far.
pub fn min_switch_reward(game: &NetworkGame, xbar: &StrategyState, i: usize) -> Result<f64> {
    game.graph().check_agent(i)?;
    game.check_state(xbar)?;
    let g = game.graph();
    if xbar.get(i) != Strategy::A || !g.neighbors(i).iter().any(|&j| xbar.get(j) == Strategy::B) {
        return Err(Error::InvalidArgument(format!(
            "agent {i} is not an A-player with a B-playing neighbor"
        )));
    }
    Ok(min_switch_reward_unchecked(game, xbar, i))
}

fn min_switch_reward_unchecked(game: &NetworkGame, xbar: &StrategyState, i: usize) -> f64 {
    let g = game.graph();
    let is_b = |k: usize| xbar.get(k) == Strategy::B;
    let mut best_b = f64::NEG_INFINITY;
    for &j in g.neighbors(i).iter().filter(|&&j| is_b(j)) {
        let closed = std::iter::once(j).chain(g.neighbors(j).iter().copied());
        for k in closed.filter(|&k| is_b(k)) {
            best_b = best_b.max(game.payoff_unchecked(xbar, k));
        }
    }
    best_b - game.payoff_unchecked(xbar, i)
}

/// Sum over agents of their A-playing neighbor counts.
pub fn potential(game: &NetworkGame, state: &StrategyState) -> usize {
    (0..game.n())
        .map(|i| game.count_a_neighbors_unchecked(state, i))
        .sum()
}

/// Effect of offering agent `j` its minimum switching reward.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateEvaluation {
    pub agent: usize,
    pub r_check: f64,
    pub delta_phi: f64,
    pub next_state: StrategyState,
}

/// Computes `j`'s minimum switching reward on `game` with `rewards`
/// applied, tentatively adds it plus `epsilon`, and relaxes. Nothing is
/// committed.
pub fn evaluate_candidate(
    game: &NetworkGame,
    rewards: &RewardVector,
    xbar: &StrategyState,
    j: usize,
    epsilon: f64,
) -> Result<CandidateEvaluation> {
    let rewarded = game.apply_rewards(rewards)?;
    let r_check = min_switch_reward(&rewarded, xbar, j)?;
    evaluate_with(&rewarded, xbar, j, r_check, epsilon, false)
}

/// `local`: `xbar` is known to be an equilibrium of `rewarded`, so only
/// `j`'s closed neighborhood can become unstable.
fn evaluate_with(
    rewarded: &NetworkGame,
    xbar: &StrategyState,
    j: usize,
    r_check: f64,
    epsilon: f64,
    local: bool,
) -> Result<CandidateEvaluation> {
    let trial = rewarded.with_extra_reward(j, r_check + epsilon);
    let seeds: Vec<usize> = std::iter::once(j)
        .chain(rewarded.graph().neighbors(j).iter().copied())
        .collect();
    let relaxed = relax(&Imitation::new(), &trial, xbar, local.then_some(seeds.as_slice()))?;
    if let Some(agent) = relaxed.a_to_b {
        return Err(Error::MonotonicityViolated { agent });
    }
    let delta_phi = potential(&trial, &relaxed.state) as f64 - potential(rewarded, xbar) as f64;
    Ok(CandidateEvaluation {
        agent: j,
        r_check,
        delta_phi,
        next_state: relaxed.state,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Score {
    Finite(f64),
    /// Zero required reward with positive reward weight.
    Infinite { delta_phi: f64 },
}

fn score(alpha: f64, beta: f64, delta_phi: f64, r_check: f64) -> Score {
    if beta > 0.0 && r_check == 0.0 {
        Score::Infinite { delta_phi }
    } else {
        Score::Finite(delta_phi.powf(alpha) / r_check.powf(beta))
    }
}

fn cmp_score(a: Score, b: Score) -> Ordering {
    match (a, b) {
        (Score::Infinite { delta_phi: x }, Score::Infinite { delta_phi: y }) => x.total_cmp(&y),
        (Score::Infinite { .. }, Score::Finite(_)) => Ordering::Greater,
        (Score::Finite(_), Score::Infinite { .. }) => Ordering::Less,
        (Score::Finite(x), Score::Finite(y)) => x.total_cmp(&y),
    }
}

/// Index of the maximum key; the first one wins ties.
fn argmax_by<T, F: Fn(&T, &T) -> Ordering>(items: &[T], cmp: F) -> Option<usize> {
    let mut best: Option<usize> = None;
    for k in 0..items.len() {
        match best {
            Some(b) if cmp(&items[k], &items[b]) != Ordering::Greater => {}
            _ => best = Some(k),
        }
    }
    best
}

/// Picks among `(agent, r_check)` pairs, sorted by agent id. Returns the
/// index of the choice and, for ratio policies, its evaluation.
fn choose(
    policy: &TargetingPolicy,
    rewarded: &NetworkGame,
    xbar: &StrategyState,
    options: &[(usize, f64)],
    epsilon: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(usize, Option<CandidateEvaluation>)> {
    if options.is_empty() {
        return Err(Error::NoEligibleAgent);
    }
    if options.len() == 1 && policy.is_deterministic() {
        return Ok((0, None));
    }
    let g = rewarded.graph();
    let pick = match policy {
        TargetingPolicy::Rand(_) => (rng.gen_range(0..options.len()), None),
        TargetingPolicy::Deg => (
            argmax_by(options, |a, b| g.degree(a.0).cmp(&g.degree(b.0))).expect("nonempty"),
            None,
        ),
        TargetingPolicy::Ime => {
            let payoffs: Vec<f64> = options
                .iter()
                .map(|&(j, _)| rewarded.payoff_unchecked(xbar, j))
                .collect();
            (argmax_by(&payoffs, |a, b| a.total_cmp(b)).expect("nonempty"), None)
        }
        _ => {
            let (alpha, beta) = policy.ratio_weights().expect("ratio policy");
            let evals = options
                .iter()
                .map(|&(j, r)| evaluate_with(rewarded, xbar, j, r, epsilon, true))
                .collect::<Result<Vec<_>>>()?;
            let k = if alpha > 0.0 && evals.iter().all(|e| e.delta_phi == 0.0) {
                argmax_by(&evals, |a, b| b.r_check.total_cmp(&a.r_check))
            } else {
                let scores: Vec<Score> = evals
                    .iter()
                    .map(|e| score(alpha, beta, e.delta_phi, e.r_check))
                    .collect();
                argmax_by(&scores, |a, b| cmp_score(*a, *b))
            }
            .expect("nonempty");
            (k, evals.into_iter().nth(k))
        }
    };
    Ok(pick)
}

/// Agent the policy would target next at equilibrium `xbar` of `game`
/// with `rewards` applied.
pub fn select_target(
    policy: &TargetingPolicy,
    game: &NetworkGame,
    rewards: &RewardVector,
    xbar: &StrategyState,
    rng: &mut ChaCha8Rng,
) -> Result<usize> {
    policy.validate()?;
    let rewarded = game.apply_rewards(rewards)?;
    let options: Vec<(usize, f64)> = eligible_set(&rewarded, xbar)
        .into_iter()
        .map(|j| (j, min_switch_reward_unchecked(&rewarded, xbar, j)))
        .collect();
    let (k, _) = choose(policy, &rewarded, xbar, &options, DEFAULT_EPSILON, rng)?;
    Ok(options[k].0)
}

/// Unbudgeted control must be able to reach all-A: every component needs
/// an A-player to reward.
pub(crate) fn check_reachable(game: &NetworkGame, x0: &StrategyState) -> Result<()> {
    if !is_controllable(game.graph(), x0) {
        return Err(Error::Precondition(
            "some component has no A-player, so all-A is unreachable".into(),
        ));
    }
    Ok(())
}

pub(crate) fn check_control_preconditions(game: &NetworkGame, x0: &StrategyState, epsilon: f64) -> Result<()> {
    game.check_state(x0)?;
    if epsilon <= 0.0 || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive and finite, got {epsilon}"
        )));
    }
    if !game.all_opponent_coordinating() {
        return Err(Error::Precondition(
            "targeted control requires opponent-coordinating agents".into(),
        ));
    }
    if x0.is_all_b() && game.n() > 0 {
        return Err(Error::Precondition(
            "initial state must contain at least one A-player".into(),
        ));
    }
    if !is_equilibrium(&Imitation::new(), game, x0) {
        return Err(Error::Precondition(
            "initial state is not an equilibrium of the unrewarded game".into(),
        ));
    }
    Ok(())
}

/// Mutable state of one iterative control run.
#[derive(Clone)]
pub(crate) struct ControlRun {
    pub rewarded: NetworkGame,
    pub rewards: RewardVector,
    pub state: StrategyState,
    pub spent: f64,
    pub order: Vec<usize>,
}

impl ControlRun {
    pub fn new(game: &NetworkGame, x0: &StrategyState) -> Self {
        ControlRun {
            rewarded: game.clone(),
            rewards: RewardVector::zeros(game.n()),
            state: x0.clone(),
            spent: 0.0,
            order: Vec::new(),
        }
    }

    /// Eligible agents with their minimum switching rewards.
    pub fn options(&self) -> Vec<(usize, f64)> {
        eligible_set(&self.rewarded, &self.state)
            .into_iter()
            .map(|j| (j, min_switch_reward_unchecked(&self.rewarded, &self.state, j)))
            .collect()
    }

    /// Commits `r_check + epsilon` to agent `j` and moves to the new equilibrium.
    pub fn commit(&mut self, j: usize, r_check: f64, epsilon: f64, evaluated: Option<CandidateEvaluation>) -> Result<()> {
        let next = match evaluated {
            Some(e) => e.next_state,
            None => evaluate_with(&self.rewarded, &self.state, j, r_check, epsilon, true)?.next_state,
        };
        let increment = r_check + epsilon;
        self.rewards.add(j, increment)?;
        self.rewarded = self.rewarded.with_extra_reward(j, increment);
        self.spent += increment;
        self.order.push(j);
        self.state = next;
        Ok(())
    }

    pub fn finish(self) -> ControlOutcome {
        ControlOutcome {
            num_a: self.state.count_a(),
            iterations: self.order.len(),
            rewards: self.rewards,
            final_state: self.state,
            total_cost: self.spent,
            targeted_order: self.order,
        }
    }
}

fn run_iterative(
    game: &NetworkGame,
    x0: &StrategyState,
    policy: &TargetingPolicy,
    budget: Option<f64>,
    epsilon: f64,
) -> Result<ControlOutcome> {
    policy.validate()?;
    check_control_preconditions(game, x0, epsilon)?;
    if budget.is_none() {
        check_reachable(game, x0)?;
    }
    let seed = match policy {
        TargetingPolicy::Rand(seed) => *seed,
        _ => 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = game.n();
    let guard = (n * n).max(1);
    let mut run = ControlRun::new(game, x0);
    while !run.state.is_all_a() {
        if let Some(rho) = budget {
            if run.spent >= rho {
                break;
            }
        }
        if run.order.len() >= guard {
            return Err(Error::Internal(format!(
                "targeted control did not finish within {guard} iterations"
            )));
        }
        let mut options = run.options();
        if let Some(rho) = budget {
            options.retain(|&(_, r)| run.spent + (r + epsilon) <= rho);
            if options.is_empty() {
                break;
            }
        }
        let (k, evaluated) = choose(policy, &run.rewarded, &run.state, &options, epsilon, &mut rng)?;
        let (j, r_check) = options[k];
        run.commit(j, r_check, epsilon, evaluated)?;
    }
    Ok(run.finish())
}

/// Rewards agents one at a time, as chosen by `policy`, until every agent
/// plays A. Rewards accumulate when an agent is targeted repeatedly.
pub fn targeted_control(
    game: &NetworkGame,
    x0: &StrategyState,
    policy: &TargetingPolicy,
    epsilon: f64,
) -> Result<ControlOutcome> {
    run_iterative(game, x0, policy, None, epsilon)
}

/// As [`targeted_control`], but an agent is only eligible while its reward
/// increment fits in what is left of `rho`. May stop short of all-A.
pub fn budgeted_control(
    game: &NetworkGame,
    x0: &StrategyState,
    policy: &TargetingPolicy,
    rho: f64,
    epsilon: f64,
) -> Result<ControlOutcome> {
    if rho.is_nan() || rho < 0.0 {
        return Err(Error::InvalidArgument(format!("budget must be non-negative, got {rho}")));
    }
    run_iterative(game, x0, policy, Some(rho), epsilon)
}

/// JSON view of a [`ControlOutcome`] with 1-based agent ids.
#[derive(Debug, Clone, Serialize)]
pub struct ControlOutcomeJson {
    pub policy: String,
    pub rewards: Vec<f64>,
    pub final_state: Vec<Strategy>,
    pub total_cost: f64,
    pub num_a: usize,
    pub iterations: usize,
    pub targeted_order: Vec<usize>,
}

impl ControlOutcomeJson {
    pub fn new(policy: impl Into<String>, outcome: &ControlOutcome) -> Self {
        ControlOutcomeJson {
            policy: policy.into(),
            rewards: outcome.rewards.as_slice().to_vec(),
            final_state: outcome.final_state.as_slice().to_vec(),
            total_cost: outcome.total_cost,
            num_a: outcome.num_a,
            iterations: outcome.iterations,
            targeted_order: outcome.targeted_order.iter().map(|j| j + 1).collect(),
        }
    }
}
