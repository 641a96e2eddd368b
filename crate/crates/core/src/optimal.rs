//! Exhaustive search over every targeting sequence of the iterative scheme.
//!
//! Each node is an equilibrium together with the rewards committed so far;
//! children target one of the currently eligible agents. Branches whose
//! spend cannot beat the incumbent are cut, and nodes already reached at no
//! greater cost are skipped.

use std::collections::HashMap;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::game::{NetworkGame, StrategyState};
use crate::targeted::{check_control_preconditions, check_reachable, targeted_control, ControlOutcome, ControlRun, TargetingPolicy};

/// Minimum-cost outcome over all targeting sequences. Intended for about
/// 20 agents or fewer.
pub fn exhaustive_optimal(game: &NetworkGame, x0: &StrategyState, epsilon: f64) -> Result<ControlOutcome> {
    exhaustive_optimal_until(game, x0, epsilon, None)
}

/// Same as [`exhaustive_optimal`] but gives up with [`Error::Timeout`] once
/// `deadline` passes.
pub fn exhaustive_optimal_until(
    game: &NetworkGame,
    x0: &StrategyState,
    epsilon: f64,
    deadline: Option<Instant>,
) -> Result<ControlOutcome> {
    check_control_preconditions(game, x0, epsilon)?;
    check_reachable(game, x0)?;
    let incumbent = targeted_control(game, x0, &TargetingPolicy::ipro(), epsilon)?;
    let mut search = Search {
        epsilon,
        deadline,
        best_cost: incumbent.total_cost,
        best: None,
        seen: HashMap::new(),
        nodes: 0,
    };
    search.visit(ControlRun::new(game, x0))?;
    Ok(match search.best {
        Some(run) => run.finish(),
        None => incumbent,
    })
}

type NodeKey = (StrategyState, Vec<u64>);

struct Search {
    epsilon: f64,
    deadline: Option<Instant>,
    best_cost: f64,
    best: Option<ControlRun>,
    seen: HashMap<NodeKey, f64>,
    nodes: u64,
}

impl Search {
    fn visit(&mut self, run: ControlRun) -> Result<()> {
        self.nodes += 1;
        if self.nodes.is_multiple_of(1024) {
            if let Some(deadline) = self.deadline {
                if Instant::now() >= deadline {
                    return Err(Error::Timeout);
                }
            }
        }
        if run.state.is_all_a() {
            if run.spent < self.best_cost {
                self.best_cost = run.spent;
                self.best = Some(run);
            }
            return Ok(());
        }
        let n = run.state.len();
        if run.order.len() >= (n * n).max(1) {
            return Err(Error::Internal("exhaustive search exceeded the iteration guard".into()));
        }
        let mut children: Vec<(f64, usize, f64)> = run
            .options()
            .into_iter()
            .map(|(j, r)| (run.spent + (r + self.epsilon), j, r))
            .collect();
        if children.is_empty() {
            return Err(Error::NoEligibleAgent);
        }
        children.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (cost, j, r_check) in children {
            if cost >= self.best_cost {
                // sorted by cost; the rest are no better
                break;
            }
            let mut child = run.clone();
            child.commit(j, r_check, self.epsilon, None)?;
            if !child.state.is_all_a() && child.spent + self.epsilon >= self.best_cost {
                continue;
            }
            let key = (
                child.state.clone(),
                child.rewards.as_slice().iter().map(|r| r.to_bits()).collect(),
            );
            match self.seen.get(&key) {
                Some(&prev) if prev <= child.spent => continue,
                _ => {
                    self.seen.insert(key, child.spent);
                }
            }
            self.visit(child)?;
        }
        Ok(())
    }
}
