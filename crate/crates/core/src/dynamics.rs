//! Asynchronous update rules, activation sequences and simulation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{NetworkGame, Strategy, StrategyState};

/// Set of strategies an update rule admits for the active agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuleOutcome {
    OnlyA,
    OnlyB,
    Both,
}

impl RuleOutcome {
    pub fn contains(self, s: Strategy) -> bool {
        matches!(
            (self, s),
            (RuleOutcome::Both, _) | (RuleOutcome::OnlyA, Strategy::A) | (RuleOutcome::OnlyB, Strategy::B)
        )
    }
}

/// What an agent does when its rule admits both strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TiePolicy {
    FixA,
    FixB,
    #[default]
    Keep,
}

impl TiePolicy {
    pub fn resolve(self, current: Strategy) -> Strategy {
        match self {
            TiePolicy::FixA => Strategy::A,
            TiePolicy::FixB => Strategy::B,
            TiePolicy::Keep => current,
        }
    }
}

/// A deterministic asynchronous update rule.
pub trait UpdateRule {
    fn evaluate(&self, game: &NetworkGame, state: &StrategyState, i: usize) -> RuleOutcome;

    fn tie_policy(&self, _i: usize) -> TiePolicy {
        TiePolicy::Keep
    }

    /// Hop radius outside of which a strategy switch cannot change this
    /// rule's outcome for an agent. `None` means any switch may matter.
    fn locality(&self) -> Option<usize> {
        None
    }
}

/// Imitate the highest earner in the closed neighborhood.
#[derive(Debug, Clone, Copy, Default)]
pub struct Imitation {
    pub tie: TiePolicy,
}

impl Imitation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_tie_policy(tie: TiePolicy) -> Self {
        Imitation { tie }
    }
}

impl UpdateRule for Imitation {
    fn evaluate(&self, game: &NetworkGame, state: &StrategyState, i: usize) -> RuleOutcome {
        imitation_outcome_unchecked(game, state, i)
    }

    fn tie_policy(&self, _i: usize) -> TiePolicy {
        self.tie
    }

    // Payoffs of the closed neighborhood depend on strategies up to two hops out.
    fn locality(&self) -> Option<usize> {
        Some(2)
    }
}

/// Rule backed by a closure, mainly for exercising the generic machinery.
pub struct FnRule<F> {
    f: F,
    tie: TiePolicy,
}

impl<F> FnRule<F>
where
    F: Fn(&NetworkGame, &StrategyState, usize) -> RuleOutcome,
{
    pub fn new(f: F, tie: TiePolicy) -> Self {
        FnRule { f, tie }
    }
}

impl<F> UpdateRule for FnRule<F>
where
    F: Fn(&NetworkGame, &StrategyState, usize) -> RuleOutcome,
{
    fn evaluate(&self, game: &NetworkGame, state: &StrategyState, i: usize) -> RuleOutcome {
        (self.f)(game, state, i)
    }

    fn tie_policy(&self, _i: usize) -> TiePolicy {
        self.tie
    }
}

/// Which strategies earn the maximum payoff in `i`'s closed neighborhood.
pub fn imitation_outcome(game: &NetworkGame, state: &StrategyState, i: usize) -> Result<RuleOutcome> {
    game.graph().check_agent(i)?;
    game.check_state(state)?;
    Ok(imitation_outcome_unchecked(game, state, i))
}

fn imitation_outcome_unchecked(game: &NetworkGame, state: &StrategyState, i: usize) -> RuleOutcome {
    let mut best = game.payoff_unchecked(state, i);
    let mut has_a = state.get(i) == Strategy::A;
    let mut has_b = !has_a;
    for &j in game.graph().neighbors(i) {
        let u = game.payoff_unchecked(state, j);
        let s = state.get(j);
        if u > best {
            best = u;
            has_a = s == Strategy::A;
            has_b = !has_a;
        } else if u == best {
            match s {
                Strategy::A => has_a = true,
                Strategy::B => has_b = true,
            }
        }
    }
    match (has_a, has_b) {
        (true, false) => RuleOutcome::OnlyA,
        (false, true) => RuleOutcome::OnlyB,
        _ => RuleOutcome::Both,
    }
}

pub(crate) fn next_strategy<R: UpdateRule + ?Sized>(
    rule: &R,
    game: &NetworkGame,
    state: &StrategyState,
    i: usize,
) -> Strategy {
    match rule.evaluate(game, state, i) {
        RuleOutcome::OnlyA => Strategy::A,
        RuleOutcome::OnlyB => Strategy::B,
        RuleOutcome::Both => rule.tie_policy(i).resolve(state.get(i)),
    }
}

/// Strategy agent `i` adopts when activated at `state`.
pub fn update_agent<R: UpdateRule + ?Sized>(
    rule: &R,
    game: &NetworkGame,
    state: &StrategyState,
    i: usize,
) -> Result<Strategy> {
    game.graph().check_agent(i)?;
    game.check_state(state)?;
    Ok(next_strategy(rule, game, state, i))
}

/// Activates agent `i` once.
pub fn step<R: UpdateRule + ?Sized>(
    rule: &R,
    game: &NetworkGame,
    state: &StrategyState,
    i: usize,
) -> Result<(StrategyState, bool)> {
    let s = update_agent(rule, game, state, i)?;
    let mut next = state.clone();
    let switched = s != state.get(i);
    next.set(i, s);
    Ok((next, switched))
}

pub fn is_equilibrium<R: UpdateRule + ?Sized>(
    rule: &R,
    game: &NetworkGame,
    state: &StrategyState,
) -> bool {
    state.len() == game.n() && (0..game.n()).all(|i| next_strategy(rule, game, state, i) == state.get(i))
}

/// Order in which agents activate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ActivationSequence {
    /// I.i.d. uniform agent ids drawn from ChaCha8 seeded with the given value.
    RandomUniform(u64),
    /// 0, 1, ..., n-1, 0, 1, ...
    RoundRobin,
    /// Finite list; the simulation stops when it runs out.
    Explicit(Vec<usize>),
}

impl ActivationSequence {
    /// Iterator over activations for a network of `n` agents.
    pub fn activations(&self, n: usize) -> Box<dyn Iterator<Item = usize> + '_> {
        match self {
            ActivationSequence::RandomUniform(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Box::new(std::iter::from_fn(move || (n > 0).then(|| rng.gen_range(0..n))))
            }
            ActivationSequence::RoundRobin => Box::new((0..n).cycle()),
            ActivationSequence::Explicit(list) => Box::new(list.iter().copied()),
        }
    }
}

/// A recorded strategy switch. `t` is the index of the activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SwitchEvent {
    pub t: u64,
    pub agent: usize,
    pub from: Strategy,
    pub to: Strategy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial: StrategyState,
    pub events: Vec<SwitchEvent>,
    pub final_state: StrategyState,
    pub converged: bool,
    pub activations: u64,
}

impl Trajectory {
    /// Replays the events on top of the initial state.
    pub fn replay(&self) -> StrategyState {
        let mut x = self.initial.clone();
        for e in &self.events {
            x.set(e.agent, e.to);
        }
        x
    }

    pub fn count_switches(&self, from: Strategy) -> usize {
        self.events.iter().filter(|e| e.from == from).count()
    }

    /// One JSON object per line with 1-based agent ids.
    pub fn to_json_lines(&self) -> String {
        #[derive(Serialize)]
        struct Line {
            t: u64,
            agent: usize,
            from: Strategy,
            to: Strategy,
        }
        let mut out = String::new();
        for e in &self.events {
            let line = Line {
                t: e.t,
                agent: e.agent + 1,
                from: e.from,
                to: e.to,
            };
            out.push_str(&serde_json::to_string(&line).expect("plain struct serializes"));
            out.push('\n');
        }
        out
    }
}

/// Tracks which agents would switch if activated, re-evaluating only the
/// agents a switch can influence.
struct Unstable<'a, R: ?Sized> {
    rule: &'a R,
    game: &'a NetworkGame,
    flags: Vec<bool>,
    count: usize,
}

impl<'a, R: UpdateRule + ?Sized> Unstable<'a, R> {
    fn new(rule: &'a R, game: &'a NetworkGame, state: &StrategyState) -> Self {
        let flags: Vec<bool> = (0..game.n())
            .map(|i| next_strategy(rule, game, state, i) != state.get(i))
            .collect();
        let count = flags.iter().filter(|&&f| f).count();
        Unstable { rule, game, flags, count }
    }

    fn refresh(&mut self, state: &StrategyState, i: usize) {
        let now = next_strategy(self.rule, self.game, state, i) != state.get(i);
        if now != self.flags[i] {
            self.flags[i] = now;
            if now {
                self.count += 1;
            } else {
                self.count -= 1;
            }
        }
    }

    fn after_switch(&mut self, state: &StrategyState, agent: usize) {
        match self.rule.locality() {
            Some(radius) => {
                for k in self.game.graph().ball(agent, radius) {
                    self.refresh(state, k);
                }
            }
            None => {
                for k in 0..self.game.n() {
                    self.refresh(state, k);
                }
            }
        }
    }

    fn is_empty(&self) -> bool {
        self.count == 0
    }
}

/// Runs the asynchronous process until equilibrium or until
/// `max_activations` agents have been activated.
pub fn simulate<R: UpdateRule + ?Sized>(
    rule: &R,
    game: &NetworkGame,
    state: &StrategyState,
    seq: &ActivationSequence,
    max_activations: u64,
) -> Result<Trajectory> {
    game.check_state(state)?;
    if max_activations == 0 {
        return Err(Error::InvalidArgument("max_activations must be positive".into()));
    }
    let n = game.n();
    let mut x = state.clone();
    let mut events = Vec::new();
    let mut unstable = Unstable::new(rule, game, &x);
    let mut activations = 0u64;
    let mut converged = unstable.is_empty();
    if !converged {
        for i in seq.activations(n) {
            if activations >= max_activations {
                break;
            }
            game.graph().check_agent(i)?;
            let t = activations;
            activations += 1;
            if !unstable.flags[i] {
                continue;
            }
            let from = x.get(i);
            let to = next_strategy(rule, game, &x, i);
            x.set(i, to);
            events.push(SwitchEvent { t, agent: i, from, to });
            unstable.after_switch(&x, i);
            if unstable.is_empty() {
                converged = true;
                break;
            }
        }
    }
    Ok(Trajectory {
        initial: state.clone(),
        events,
        final_state: x,
        converged,
        activations,
    })
}

/// Result of relaxing a state by activating only would-be switchers.
#[derive(Debug, Clone, PartialEq)]
pub struct Relaxation {
    pub state: StrategyState,
    /// Agents in the order they switched.
    pub switched: Vec<usize>,
    /// First agent observed switching A to B, if any.
    pub a_to_b: Option<usize>,
}

/// Relaxes to an equilibrium by repeated ascending scans that activate only
/// agents whose update differs from their current strategy.
///
/// Fails with [`Error::NonConvergence`] after `n^2` switches.
pub fn relax_switchers_only<R: UpdateRule + ?Sized>(
    rule: &R,
    game: &NetworkGame,
    state: &StrategyState,
) -> Result<StrategyState> {
    game.check_state(state)?;
    relax(rule, game, state, None).map(|r| r.state)
}

/// `seeds`: when `Some`, `state` must be an equilibrium of the game except
/// possibly at the listed agents (e.g. the closed neighborhood of an agent
/// whose payoffs just changed).
pub(crate) fn relax<R: UpdateRule + ?Sized>(
    rule: &R,
    game: &NetworkGame,
    state: &StrategyState,
    seeds: Option<&[usize]>,
) -> Result<Relaxation> {
    let n = game.n();
    let cap = (n * n).max(1);
    let mut dirty = match seeds {
        Some(list) => {
            let mut d = vec![false; n];
            for &i in list {
                d[i] = true;
            }
            d
        }
        None => vec![true; n],
    };
    let mut x = state.clone();
    let mut switched = Vec::new();
    let mut a_to_b = None;
    let mut pending = dirty.iter().any(|&d| d);
    while pending {
        pending = false;
        for i in 0..n {
            if !dirty[i] {
                continue;
            }
            dirty[i] = false;
            let next = next_strategy(rule, game, &x, i);
            if next == x.get(i) {
                continue;
            }
            if next == Strategy::B && a_to_b.is_none() {
                a_to_b = Some(i);
            }
            x.set(i, next);
            switched.push(i);
            if switched.len() > cap {
                return Err(Error::NonConvergence { cap });
            }
            match rule.locality() {
                Some(radius) => {
                    for k in game.graph().ball(i, radius) {
                        dirty[k] = true;
                    }
                }
                None => dirty.iter_mut().for_each(|d| *d = true),
            }
            pending = true;
        }
    }
    Ok(Relaxation {
        state: x,
        switched,
        a_to_b,
    })
}
