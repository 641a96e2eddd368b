//! Networks, payoff matrices, strategy states and payoff accounting.
//!
//! Agents are 0-based everywhere in the library. The JSON format in
//! [`crate::io`] converts to 1-based ids at the boundary.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Undirected simple graph with sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from an edge list. Pairs may be given in either order;
    /// self-loops, duplicates and out-of-range ids are rejected.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n];
        let mut normalized = Vec::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidAgent { agent: u.max(v), n });
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop at agent {u}")));
            }
            normalized.push((u.min(v), u.max(v)));
        }
        normalized.sort_unstable();
        for pair in normalized.windows(2) {
            if pair[0] == pair[1] {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge ({}, {})",
                    pair[0].0, pair[0].1
                )));
            }
        }
        for &(u, v) in &normalized {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Graph {
            n,
            edges: normalized,
            adjacency,
        })
    }

    /// Graph on `n` agents without edges.
    pub fn empty(n: usize) -> Self {
        Graph {
            n,
            edges: Vec::new(),
            adjacency: vec![Vec::new(); n],
        }
    }

    pub fn path(n: usize) -> Self {
        Self::new(n, (1..n).map(|i| (i - 1, i))).expect("path graph is simple")
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
        Self::new(n, edges).expect("complete graph is simple")
    }

    /// Star with agent 0 at the center.
    pub fn star(n: usize) -> Self {
        Self::new(n, (1..n).map(|i| (0, i))).expect("star graph is simple")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Edges as `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn check_agent(&self, i: usize) -> Result<()> {
        if i < self.n {
            Ok(())
        } else {
            Err(Error::InvalidAgent { agent: i, n: self.n })
        }
    }

    /// Connected-component label per agent, labels assigned in order of the
    /// smallest member.
    pub fn component_labels(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.n];
        let mut next = 0;
        let mut stack = Vec::new();
        for root in 0..self.n {
            if label[root] != usize::MAX {
                continue;
            }
            label[root] = next;
            stack.push(root);
            while let Some(u) = stack.pop() {
                for &v in &self.adjacency[u] {
                    if label[v] == usize::MAX {
                        label[v] = next;
                        stack.push(v);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn num_components(&self) -> usize {
        self.component_labels().into_iter().max().map_or(0, |m| m + 1)
    }

    pub fn is_connected(&self) -> bool {
        self.num_components() <= 1
    }

    /// Agents within `radius` hops of `i`, including `i`, in ascending order.
    pub fn ball(&self, i: usize, radius: usize) -> Vec<usize> {
        let mut seen = vec![false; self.n];
        seen[i] = true;
        let mut frontier = vec![i];
        let mut out = vec![i];
        for _ in 0..radius {
            let mut next = Vec::new();
            for &u in &frontier {
                for &v in &self.adjacency[u] {
                    if !seen[v] {
                        seen[v] = true;
                        next.push(v);
                        out.push(v);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        out.sort_unstable();
        out
    }
}

/// One of the two pure strategies. `A` is the controller's target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    A,
    B,
}

impl Strategy {
    pub fn other(self) -> Strategy {
        match self {
            Strategy::A => Strategy::B,
            Strategy::B => Strategy::A,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::A => "A",
            Strategy::B => "B",
        })
    }
}

/// 2x2 payoff matrix; row is the agent's own strategy, column the neighbor's.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PayoffMatrix {
    /// A against A.
    pub a: f64,
    /// A against B.
    pub b: f64,
    /// B against A.
    pub c: f64,
    /// B against B.
    pub d: f64,
}

impl PayoffMatrix {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        PayoffMatrix { a, b, c, d }
    }

    pub fn identity() -> Self {
        Self::new(1.0, 0.0, 0.0, 1.0)
    }

    pub fn entry(&self, own: Strategy, other: Strategy) -> f64 {
        match (own, other) {
            (Strategy::A, Strategy::A) => self.a,
            (Strategy::A, Strategy::B) => self.b,
            (Strategy::B, Strategy::A) => self.c,
            (Strategy::B, Strategy::B) => self.d,
        }
    }

    /// Payoff for playing `own` against `n_a` A-neighbors and `n_b` B-neighbors.
    pub fn total(&self, own: Strategy, n_a: usize, n_b: usize) -> f64 {
        match own {
            Strategy::A => self.a * n_a as f64 + self.b * n_b as f64,
            Strategy::B => self.c * n_a as f64 + self.d * n_b as f64,
        }
    }

    /// Each row's diagonal strictly beats its off-diagonal: `a > b` and `d > c`.
    pub fn is_opponent_coordinating(&self) -> bool {
        self.a > self.b && self.d > self.c
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite() && self.d.is_finite()
    }

    /// Adds `reward` to the A row.
    pub fn rewarded(&self, reward: f64) -> Self {
        PayoffMatrix {
            a: self.a + reward,
            b: self.b + reward,
            c: self.c,
            d: self.d,
        }
    }
}

/// Free-function form of [`PayoffMatrix::is_opponent_coordinating`].
pub fn is_opponent_coordinating(pm: &PayoffMatrix) -> bool {
    pm.is_opponent_coordinating()
}

/// Strategy profile over all agents.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StrategyState(Vec<Strategy>);

impl StrategyState {
    pub fn new(strategies: Vec<Strategy>) -> Self {
        StrategyState(strategies)
    }

    pub fn all(n: usize, s: Strategy) -> Self {
        StrategyState(vec![s; n])
    }

    pub fn all_a(n: usize) -> Self {
        Self::all(n, Strategy::A)
    }

    pub fn all_b(n: usize) -> Self {
        Self::all(n, Strategy::B)
    }

    /// Parses a string such as `"AAB"`.
    pub fn parse(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                'A' | 'a' => Ok(Strategy::A),
                'B' | 'b' => Ok(Strategy::B),
                other => Err(Error::InvalidArgument(format!("unknown strategy '{other}'"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(StrategyState)
    }

    /// Bit `i` set means agent `i` plays A. Only meaningful for `n <= 64`.
    pub fn from_mask(n: usize, mask: u64) -> Self {
        StrategyState(
            (0..n)
                .map(|i| if mask >> i & 1 == 1 { Strategy::A } else { Strategy::B })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> Strategy {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, s: Strategy) {
        self.0[i] = s;
    }

    pub fn as_slice(&self) -> &[Strategy] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = Strategy> + '_ {
        self.0.iter().copied()
    }

    pub fn count(&self, s: Strategy) -> usize {
        self.0.iter().filter(|&&x| x == s).count()
    }

    pub fn count_a(&self) -> usize {
        self.count(Strategy::A)
    }

    pub fn is_all(&self, s: Strategy) -> bool {
        self.0.iter().all(|&x| x == s)
    }

    pub fn is_all_a(&self) -> bool {
        self.is_all(Strategy::A)
    }

    pub fn is_all_b(&self) -> bool {
        self.is_all(Strategy::B)
    }

    /// Every A-player here also plays A in `other`.
    pub fn dominated_by(&self, other: &StrategyState) -> bool {
        self.0.len() == other.0.len()
            && self
                .0
                .iter()
                .zip(&other.0)
                .all(|(&y, &z)| y == Strategy::B || z == Strategy::A)
    }
}

impl fmt::Display for StrategyState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.0 {
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// Non-negative per-agent incentives added to the A row of payoff matrices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RewardVector(Vec<f64>);

impl RewardVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for (i, &r) in values.iter().enumerate() {
            if r < 0.0 || !r.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "reward for agent {i} must be finite and non-negative, got {r}"
                )));
            }
        }
        Ok(RewardVector(values))
    }

    pub fn zeros(n: usize) -> Self {
        RewardVector(vec![0.0; n])
    }

    pub fn uniform(n: usize, r0: f64) -> Result<Self> {
        Self::new(vec![r0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Adds a non-negative increment to agent `i`.
    pub fn add(&mut self, i: usize, amount: f64) -> Result<()> {
        if amount < 0.0 || !amount.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "reward increment must be finite and non-negative, got {amount}"
            )));
        }
        self.0[i] += amount;
        Ok(())
    }

    pub fn sum_with(&self, other: &RewardVector) -> Result<RewardVector> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok(RewardVector(
            self.0.iter().zip(&other.0).map(|(x, y)| x + y).collect(),
        ))
    }
}

/// A network together with one payoff matrix per agent.
///
/// The graph sits behind an `Arc` so that reward transformations, which
/// only touch payoffs, stay cheap.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGame {
    graph: Arc<Graph>,
    payoffs: Vec<PayoffMatrix>,
}

impl NetworkGame {
    pub fn new(graph: Graph, payoffs: Vec<PayoffMatrix>) -> Result<Self> {
        Self::from_shared(Arc::new(graph), payoffs)
    }

    pub fn from_shared(graph: Arc<Graph>, payoffs: Vec<PayoffMatrix>) -> Result<Self> {
        if payoffs.len() != graph.n() {
            return Err(Error::LengthMismatch {
                expected: graph.n(),
                got: payoffs.len(),
            });
        }
        if let Some(i) = payoffs.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "payoff matrix of agent {i} has a non-finite entry"
            )));
        }
        Ok(NetworkGame { graph, payoffs })
    }

    /// Every agent gets the same matrix.
    pub fn homogeneous(graph: Graph, pm: PayoffMatrix) -> Result<Self> {
        let n = graph.n();
        Self::new(graph, vec![pm; n])
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn shared_graph(&self) -> Arc<Graph> {
        Arc::clone(&self.graph)
    }

    pub fn payoffs(&self) -> &[PayoffMatrix] {
        &self.payoffs
    }

    pub fn payoff_matrix(&self, i: usize) -> &PayoffMatrix {
        &self.payoffs[i]
    }

    pub fn all_opponent_coordinating(&self) -> bool {
        self.payoffs.iter().all(PayoffMatrix::is_opponent_coordinating)
    }

    pub fn check_state(&self, state: &StrategyState) -> Result<()> {
        if state.len() == self.n() {
            Ok(())
        } else {
            Err(Error::LengthMismatch {
                expected: self.n(),
                got: state.len(),
            })
        }
    }

    /// Number of `i`'s neighbors playing A under `state`.
    pub fn count_a_neighbors(&self, state: &StrategyState, i: usize) -> Result<usize> {
        self.graph.check_agent(i)?;
        self.check_state(state)?;
        Ok(self.count_a_neighbors_unchecked(state, i))
    }

    pub(crate) fn count_a_neighbors_unchecked(&self, state: &StrategyState, i: usize) -> usize {
        self.graph
            .neighbors(i)
            .iter()
            .filter(|&&j| state.get(j) == Strategy::A)
            .count()
    }

    /// Total payoff of agent `i` against all of its neighbors.
    pub fn agent_payoff(&self, state: &StrategyState, i: usize) -> Result<f64> {
        self.graph.check_agent(i)?;
        self.check_state(state)?;
        Ok(self.payoff_unchecked(state, i))
    }

    pub(crate) fn payoff_unchecked(&self, state: &StrategyState, i: usize) -> f64 {
        let n_a = self.count_a_neighbors_unchecked(state, i);
        let n_b = self.graph.degree(i) - n_a;
        self.payoffs[i].total(state.get(i), n_a, n_b)
    }

    pub fn all_payoffs(&self, state: &StrategyState) -> Result<Vec<f64>> {
        self.check_state(state)?;
        Ok((0..self.n()).map(|i| self.payoff_unchecked(state, i)).collect())
    }

    /// Returns a copy whose agent-`i` matrix has `r[i]` added to its A row.
    pub fn apply_rewards(&self, rewards: &RewardVector) -> Result<NetworkGame> {
        if rewards.len() != self.n() {
            return Err(Error::LengthMismatch {
                expected: self.n(),
                got: rewards.len(),
            });
        }
        if let Some(r) = rewards.as_slice().iter().find(|r| r.is_nan() || **r < 0.0) {
            return Err(Error::InvalidArgument(format!("negative reward {r}")));
        }
        Ok(NetworkGame {
            graph: Arc::clone(&self.graph),
            payoffs: self
                .payoffs
                .iter()
                .zip(rewards.as_slice())
                .map(|(pm, &r)| pm.rewarded(r))
                .collect(),
        })
    }

    /// Same as [`apply_rewards`](Self::apply_rewards) with `r0` for everyone.
    pub fn apply_uniform_reward(&self, r0: f64) -> Result<NetworkGame> {
        self.apply_rewards(&RewardVector::uniform(self.n(), r0)?)
    }

    /// Adds `amount` to a single agent's A row.
    pub(crate) fn with_extra_reward(&self, i: usize, amount: f64) -> NetworkGame {
        let mut payoffs = self.payoffs.clone();
        payoffs[i] = payoffs[i].rewarded(amount);
        NetworkGame {
            graph: Arc::clone(&self.graph),
            payoffs,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Strategy::{A, B};

    fn path3(pm: PayoffMatrix) -> NetworkGame {
        NetworkGame::homogeneous(Graph::path(3), pm).unwrap()
    }

    #[test]
    fn graph_rejects_self_loops_and_duplicates() {
        assert!(matches!(Graph::new(3, [(1, 1)]), Err(Error::InvalidGraph(_))));
        assert!(matches!(
            Graph::new(3, [(0, 1), (1, 0)]),
            Err(Error::InvalidGraph(_))
        ));
        assert!(matches!(
            Graph::new(2, [(0, 2)]),
            Err(Error::InvalidAgent { agent: 2, n: 2 })
        ));
    }

    #[test]
    fn graph_adjacency_is_symmetric_and_sorted() {
        let g = Graph::new(4, [(3, 0), (0, 1), (2, 1)]).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (0, 3), (1, 2)]);
        assert_eq!(g.neighbors(0), &[1, 3]);
        assert_eq!(g.neighbors(1), &[0, 2]);
        for i in 0..4 {
            assert_eq!(g.degree(i), g.neighbors(i).len());
            for &j in g.neighbors(i) {
                assert!(g.neighbors(j).contains(&i));
            }
        }
    }

    #[test]
    fn components_and_balls() {
        let g = Graph::new(5, [(0, 1), (1, 2)]).unwrap();
        assert_eq!(g.num_components(), 3);
        assert_eq!(g.component_labels(), vec![0, 0, 0, 1, 2]);
        assert_eq!(g.ball(0, 1), vec![0, 1]);
        assert_eq!(g.ball(0, 2), vec![0, 1, 2]);
        assert_eq!(g.ball(3, 2), vec![3]);
    }

    #[test]
    fn payoff_single_aa_edge() {
        let game = NetworkGame::homogeneous(Graph::path(2), PayoffMatrix::identity()).unwrap();
        let x = StrategyState::all_a(2);
        assert_eq!(game.agent_payoff(&x, 0).unwrap(), 1.0);
    }

    #[test]
    fn payoff_triangle_all_b() {
        let game =
            NetworkGame::homogeneous(Graph::complete(3), PayoffMatrix::new(0.0, 0.0, 0.0, 2.0))
                .unwrap();
        let x = StrategyState::all_b(3);
        for i in 0..3 {
            assert_eq!(game.agent_payoff(&x, i).unwrap(), 4.0);
        }
    }

    #[test]
    fn payoff_path_aab() {
        let game = path3(PayoffMatrix::new(2.0, 0.0, 0.0, 2.0));
        let x = StrategyState::new(vec![A, A, B]);
        assert_eq!(game.all_payoffs(&x).unwrap(), vec![2.0, 2.0, 0.0]);
    }

    #[test]
    fn payoff_isolated_agent_is_zero() {
        let game = NetworkGame::homogeneous(Graph::empty(2), PayoffMatrix::identity()).unwrap();
        assert_eq!(game.agent_payoff(&StrategyState::all_a(2), 1).unwrap(), 0.0);
    }

    #[test]
    fn payoff_rejects_bad_agent() {
        let game = path3(PayoffMatrix::identity());
        assert!(matches!(
            game.agent_payoff(&StrategyState::all_a(3), 3),
            Err(Error::InvalidAgent { .. })
        ));
        assert!(game.count_a_neighbors(&StrategyState::all_a(3), 7).is_err());
    }

    #[test]
    fn opponent_coordinating_predicate() {
        assert!(is_opponent_coordinating(&PayoffMatrix::new(1.0, 0.0, 0.0, 1.0)));
        assert!(!is_opponent_coordinating(&PayoffMatrix::new(1.0, 2.0, 0.0, 3.0)));
        assert!(!is_opponent_coordinating(&PayoffMatrix::new(1.0, 1.0, 0.0, 3.0)));
        for p in [1.0, 1.5, 7.0] {
            assert!(PayoffMatrix::new(p, 0.0, 0.0, p).is_opponent_coordinating());
        }
    }

    #[test]
    fn count_a_neighbors_cases() {
        let game = path3(PayoffMatrix::identity());
        let all_a = StrategyState::all_a(3);
        let all_b = StrategyState::all_b(3);
        for i in 0..3 {
            assert_eq!(game.count_a_neighbors(&all_a, i).unwrap(), game.graph().degree(i));
            assert_eq!(game.count_a_neighbors(&all_b, i).unwrap(), 0);
        }
        let aba = StrategyState::new(vec![A, B, A]);
        assert_eq!(game.count_a_neighbors(&aba, 1).unwrap(), 2);
    }

    #[test]
    fn apply_rewards_cases() {
        let game = path3(PayoffMatrix::identity());
        assert_eq!(game.apply_rewards(&RewardVector::zeros(3)).unwrap(), game);

        let rewarded = game.apply_uniform_reward(1.0).unwrap();
        assert_eq!(
            *rewarded.payoff_matrix(1),
            PayoffMatrix::new(2.0, 1.0, 0.0, 1.0)
        );
        // original untouched
        assert_eq!(*game.payoff_matrix(1), PayoffMatrix::identity());

        let r1 = RewardVector::new(vec![0.5, 0.0, 2.0]).unwrap();
        let r2 = RewardVector::new(vec![0.25, 1.0, 0.0]).unwrap();
        let twice = game.apply_rewards(&r1).unwrap().apply_rewards(&r2).unwrap();
        let once = game.apply_rewards(&r1.sum_with(&r2).unwrap()).unwrap();
        assert_eq!(twice, once);
    }

    #[test]
    fn negative_rewards_rejected() {
        assert!(RewardVector::new(vec![0.0, -1.0]).is_err());
        assert!(RewardVector::new(vec![f64::NAN]).is_err());
        let game = path3(PayoffMatrix::identity());
        assert!(game.apply_uniform_reward(-0.5).is_err());
        assert!(game.apply_rewards(&RewardVector::zeros(2)).is_err());
    }

    #[test]
    fn state_helpers() {
        let x = StrategyState::parse("ABBA").unwrap();
        assert_eq!(x.to_string(), "ABBA");
        assert_eq!(x.count_a(), 2);
        assert_eq!(StrategyState::from_mask(4, 0b1001), x);
        let z = StrategyState::parse("ABAA").unwrap();
        assert!(x.dominated_by(&z));
        assert!(!z.dominated_by(&x));
        assert!(StrategyState::parse("AC").is_err());
    }
}
