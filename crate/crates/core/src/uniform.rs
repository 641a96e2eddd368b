//! Optimal uniform reward: the smallest bonus offered to every A-player that
//! drives an equilibrium to all-A.
//!
//! The infimum is attained at one of finitely many payoff-difference
//! quotients (the candidate set), and success is monotone in the reward, so
//! a binary search over the sorted candidates finds it. Each test is a single
//! relaxation because the post-incentive equilibrium does not depend on the
//! activation order.

use serde::Serialize;

use crate::dynamics::{is_equilibrium, relax, Imitation};
use crate::error::{Error, Result};
use crate::game::{NetworkGame, Strategy, StrategyState};
use crate::netgen::is_controllable;

/// Payoffs agent `i` can earn as A-player and as B-player once any subset of
/// its initially-B neighbors has switched to A. Indexed by how many switched.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffSupport {
    pub pi_a: Vec<f64>,
    pub pi_b: Vec<f64>,
}

pub fn payoff_support(game: &NetworkGame, x0: &StrategyState, i: usize) -> Result<PayoffSupport> {
    let n_a = game.count_a_neighbors(x0, i)?;
    let deg = game.graph().degree(i);
    let pm = game.payoff_matrix(i);
    let (pi_a, pi_b) = (0..=deg - n_a)
        .map(|delta| {
            let a_side = n_a + delta;
            let b_side = deg - a_side;
            (pm.total(Strategy::A, a_side, b_side), pm.total(Strategy::B, a_side, b_side))
        })
        .unzip();
    Ok(PayoffSupport { pi_a, pi_b })
}

/// Sorted, deduplicated candidate rewards; always contains 0.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateRewards {
    values: Vec<f64>,
}

impl CandidateRewards {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn contains(&self, v: f64) -> bool {
        self.values.binary_search_by(|x| x.total_cmp(&v)).is_ok()
    }

    /// Index of the (always present) zero candidate.
    pub fn zero_index(&self) -> usize {
        self.values
            .binary_search_by(|x| x.total_cmp(&0.0))
            .expect("candidate set contains 0")
    }

    /// Smallest gap between consecutive candidates, or `None` for one value.
    pub fn min_gap(&self) -> Option<f64> {
        self.values
            .windows(2)
            .map(|w| w[1] - w[0])
            .min_by(f64::total_cmp)
    }
}

/// All quotients `(y_B - y_A) / deg_j` where `s` plays B initially,
/// `j` neighbors `s`, `i` is an initially-B member of `s`'s closed
/// neighborhood, `y_B` a possible B-payoff of `i`, `y_A` a possible
/// A-payoff of `j`; plus 0.
pub fn candidate_rewards(game: &NetworkGame, x0: &StrategyState) -> Result<CandidateRewards> {
    game.check_state(x0)?;
    if x0.is_all_b() {
        return Err(Error::Precondition(
            "initial state must contain at least one A-player".into(),
        ));
    }
    let graph = game.graph();
    let supports = (0..game.n())
        .map(|i| payoff_support(game, x0, i))
        .collect::<Result<Vec<_>>>()?;
    let mut values = vec![0.0];
    for s in (0..game.n()).filter(|&s| x0.get(s) == Strategy::B) {
        let closed = std::iter::once(s).chain(graph.neighbors(s).iter().copied());
        let b_players: Vec<usize> = closed.filter(|&i| x0.get(i) == Strategy::B).collect();
        for &j in graph.neighbors(s) {
            let deg_j = graph.degree(j) as f64;
            for &i in &b_players {
                for &y_b in &supports[i].pi_b {
                    for &y_a in &supports[j].pi_a {
                        values.push((y_b - y_a) / deg_j);
                    }
                }
            }
        }
    }
    values.sort_by(f64::total_cmp);
    // -0.0 and 0.0 collapse here; keep the positive zero.
    for v in &mut values {
        if *v == 0.0 {
            *v = 0.0;
        }
    }
    values.dedup();
    Ok(CandidateRewards { values })
}

fn check_uniform_preconditions(game: &NetworkGame, x0: &StrategyState) -> Result<()> {
    game.check_state(x0)?;
    if !x0.is_all_b() && !is_controllable(game.graph(), x0) {
        return Err(Error::Precondition(
            "some component has no A-player, so all-A is unreachable".into(),
        ));
    }
    if !is_equilibrium(&Imitation::new(), game, x0) {
        return Err(Error::Precondition(
            "initial state is not an equilibrium of the unrewarded game".into(),
        ));
    }
    Ok(())
}

fn reaches_all_a(game: &NetworkGame, x0: &StrategyState, r0: f64) -> Result<bool> {
    let rewarded = game.apply_uniform_reward(r0)?;
    let relaxed = relax(&Imitation::new(), &rewarded, x0, None)?;
    if let Some(agent) = relaxed.a_to_b {
        return Err(Error::MonotonicityViolated { agent });
    }
    Ok(relaxed.state.is_all_a())
}

/// Whether offering `r0` to every agent from the equilibrium `x0` ends in all-A.
pub fn succeeds_all_a(game: &NetworkGame, x0: &StrategyState, r0: f64) -> Result<bool> {
    check_uniform_preconditions(game, x0)?;
    reaches_all_a(game, x0, r0)
}

/// Optimal uniform reward together with search statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniformSolution {
    pub r0_star: f64,
    pub candidates: usize,
    pub simulations: usize,
}

/// Binary search over the candidate set for the infimum uniform reward.
pub fn optimal_uniform_reward(game: &NetworkGame, x0: &StrategyState) -> Result<f64> {
    solve_uniform(game, x0).map(|s| s.r0_star)
}

pub fn solve_uniform(game: &NetworkGame, x0: &StrategyState) -> Result<UniformSolution> {
    check_uniform_preconditions(game, x0)?;
    if !game.all_opponent_coordinating() {
        return Err(Error::Precondition(
            "uniform control requires opponent-coordinating agents".into(),
        ));
    }
    let candidates = candidate_rewards(game, x0)?;
    let mut simulations = 0usize;
    let mut test = |r: f64| {
        simulations += 1;
        reaches_all_a(game, x0, r)
    };

    if x0.is_all_a() || candidates.len() == 1 {
        return Ok(UniformSolution {
            r0_star: 0.0,
            candidates: candidates.len(),
            simulations,
        });
    }

    let v = candidates.values();
    let sentinel = v[v.len() - 1] + 1.0;
    let at = |k: usize| if k == v.len() { sentinel } else { v[k] };

    // Invariant: at(lo) fails, at(hi) succeeds.
    let mut lo = candidates.zero_index();
    let mut hi = v.len();
    if !test(sentinel)? {
        return Err(Error::Internal(format!(
            "uniform reward {sentinel} above every candidate fails to reach all-A"
        )));
    }
    while hi - lo > 1 {
        let mid = (lo + hi).div_ceil(2);
        if test(at(mid))? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // At the binding candidate the switch condition holds with equality, so
    // whether that endpoint itself passes is decided by rounding; the
    // midpoint of the bracket tells which endpoint is the infimum.
    let (lower, upper) = (at(lo), at(hi));
    let r0_star = if test(0.5 * (lower + upper))? {
        lower
    } else if hi == v.len() {
        return Err(Error::Internal(
            "infimum uniform reward lies above every candidate".into(),
        ));
    } else {
        upper
    };
    Ok(UniformSolution {
        r0_star,
        candidates: candidates.len(),
        simulations,
    })
}

/// Linear-scan reference for [`optimal_uniform_reward`]; O(|candidates| n m).
///
/// Tests every non-negative candidate and the point `eta` above it, where
/// `eta` is half the smallest candidate gap, and returns the smallest
/// candidate above which every tested point succeeds.
pub fn brute_force_uniform_oracle(game: &NetworkGame, x0: &StrategyState) -> Result<f64> {
    check_uniform_preconditions(game, x0)?;
    let candidates = candidate_rewards(game, x0)?;
    if x0.is_all_a() || candidates.len() == 1 {
        return Ok(0.0);
    }
    let eta = 0.5 * candidates.min_gap().expect("at least two candidates");
    let v = &candidates.values()[candidates.zero_index()..];
    let sentinel = v[v.len() - 1] + 1.0;
    let mut points = Vec::with_capacity(2 * v.len() + 1);
    for &c in v {
        points.push(c);
        points.push(c + eta);
    }
    points.push(sentinel);
    let mut last_failure = None;
    for &t in &points {
        if !reaches_all_a(game, x0, t)? {
            last_failure = Some(t);
        }
    }
    match last_failure {
        None => Ok(v[0]),
        Some(t) => v.iter().copied().find(|&c| c >= t).ok_or_else(|| {
            Error::Internal("uniform reward above every candidate fails to reach all-A".into())
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{Graph, PayoffMatrix};
    use Strategy::{A, B};

    fn edge_2i() -> (NetworkGame, StrategyState) {
        let game =
            NetworkGame::homogeneous(Graph::path(2), PayoffMatrix::new(2.0, 0.0, 0.0, 2.0)).unwrap();
        (game, StrategyState::new(vec![A, B]))
    }

    #[test]
    fn support_single_b_neighbor() {
        let game = NetworkGame::homogeneous(Graph::path(2), PayoffMatrix::identity()).unwrap();
        let x = StrategyState::new(vec![A, B]);
        let s = payoff_support(&game, &x, 0).unwrap();
        assert_eq!(s.pi_a, vec![0.0, 1.0]);
        assert_eq!(s.pi_b, vec![1.0, 0.0]);
    }

    #[test]
    fn support_without_b_neighbors() {
        let pm = PayoffMatrix::new(1.5, 0.2, 0.3, 1.1);
        let game = NetworkGame::homogeneous(Graph::path(3), pm).unwrap();
        let s = payoff_support(&game, &StrategyState::all_a(3), 1).unwrap();
        assert_eq!(s.pi_a, vec![2.0 * pm.a]);
        assert_eq!(s.pi_b, vec![2.0 * pm.c]);
    }

    #[test]
    fn support_two_node_example() {
        let (game, x) = edge_2i();
        assert_eq!(payoff_support(&game, &x, 0).unwrap().pi_a, vec![0.0, 2.0]);
        // Agent 2's only neighbor already plays A, so nothing can flip.
        assert_eq!(payoff_support(&game, &x, 1).unwrap().pi_b, vec![0.0]);
    }

    #[test]
    fn candidates_all_a_is_zero_only() {
        let (game, _) = edge_2i();
        let c = candidate_rewards(&game, &StrategyState::all_a(2)).unwrap();
        assert_eq!(c.values(), &[0.0]);
    }

    #[test]
    fn candidates_two_node_example() {
        let (game, x) = edge_2i();
        let c = candidate_rewards(&game, &x).unwrap();
        assert_eq!(c.values(), &[-2.0, 0.0]);
        assert_eq!(c.zero_index(), 1);
    }

    #[test]
    fn candidates_reject_all_b() {
        let (game, _) = edge_2i();
        assert!(matches!(
            candidate_rewards(&game, &StrategyState::all_b(2)),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn candidate_count_bound() {
        let game = NetworkGame::new(
            Graph::new(5, [(0, 1), (1, 2), (2, 3), (3, 4), (1, 3)]).unwrap(),
            vec![
                PayoffMatrix::new(1.3, 0.1, 0.2, 1.4),
                PayoffMatrix::new(1.1, 0.4, 0.3, 1.2),
                PayoffMatrix::new(1.2, 0.2, 0.1, 1.5),
                PayoffMatrix::new(1.4, 0.3, 0.4, 1.1),
                PayoffMatrix::new(1.0, 0.2, 0.3, 1.3),
            ],
        )
        .unwrap();
        let x = StrategyState::parse("ABBAB").unwrap();
        let c = candidate_rewards(&game, &x).unwrap();
        let g = game.graph();
        let mut bound = 1;
        for s in (0..5).filter(|&s| x.get(s) == B) {
            for &j in g.neighbors(s) {
                let pa = payoff_support(&game, &x, j).unwrap().pi_a.len();
                for i in std::iter::once(s).chain(g.neighbors(s).iter().copied()) {
                    if x.get(i) == B {
                        bound += pa * payoff_support(&game, &x, i).unwrap().pi_b.len();
                    }
                }
            }
        }
        assert!(c.len() <= bound);
        assert!(c.values().windows(2).all(|w| w[0] < w[1]));
        assert!(c.contains(0.0));
    }

    #[test]
    fn success_with_dominating_reward() {
        let (game, x) = edge_2i();
        assert!(succeeds_all_a(&game, &x, 10.0).unwrap());
    }

    #[test]
    fn two_node_threshold_is_zero() {
        let (game, x) = edge_2i();
        assert!(!succeeds_all_a(&game, &x, 0.0).unwrap());
        for r in [1e-9, 0.3, 2.0] {
            assert!(succeeds_all_a(&game, &x, r).unwrap());
        }
        assert_eq!(optimal_uniform_reward(&game, &x).unwrap(), 0.0);
        assert_eq!(brute_force_uniform_oracle(&game, &x).unwrap(), 0.0);
    }

    #[test]
    fn all_a_needs_no_reward() {
        let (game, _) = edge_2i();
        let x = StrategyState::all_a(2);
        assert_eq!(optimal_uniform_reward(&game, &x).unwrap(), 0.0);
        assert_eq!(brute_force_uniform_oracle(&game, &x).unwrap(), 0.0);
    }

    #[test]
    fn non_equilibrium_start_is_rejected() {
        let game =
            NetworkGame::homogeneous(Graph::path(3), PayoffMatrix::new(2.0, 0.0, 0.0, 2.0)).unwrap();
        let x = StrategyState::parse("AAB").unwrap();
        assert!(matches!(succeeds_all_a(&game, &x, 1.0), Err(Error::Precondition(_))));
        assert!(matches!(optimal_uniform_reward(&game, &x), Err(Error::Precondition(_))));
    }

    #[test]
    fn positive_threshold() {
        // 0-1, 1-4, 1-2, 2-3, 3-5 with x = AABBAB. Agent 3 (B) earns 3 and
        // holds agent 2 at B; agent 1 earns 2 and needs 3r > 1.
        let id = PayoffMatrix::identity();
        let game = NetworkGame::new(
            Graph::new(6, [(0, 1), (1, 4), (1, 2), (2, 3), (3, 5)]).unwrap(),
            vec![id, id, id, PayoffMatrix::new(1.0, 0.0, 0.0, 1.5), id, id],
        )
        .unwrap();
        let x = StrategyState::parse("AABBAB").unwrap();
        assert!(is_equilibrium(&Imitation::new(), &game, &x));
        let third = 1.0 / 3.0;
        assert!(candidate_rewards(&game, &x).unwrap().contains(third));
        assert_eq!(optimal_uniform_reward(&game, &x).unwrap(), third);
        assert_eq!(brute_force_uniform_oracle(&game, &x).unwrap(), third);
        assert!(!succeeds_all_a(&game, &x, third - 1e-9).unwrap());
        assert!(succeeds_all_a(&game, &x, third + 1e-9).unwrap());
        let sol = solve_uniform(&game, &x).unwrap();
        assert!(sol.simulations >= 2);
    }
}
