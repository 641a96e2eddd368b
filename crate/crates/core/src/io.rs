//! JSON exchange format for games.
//!
//! ```json
//! {"n": 3, "edges": [[1, 2], [2, 3]], "payoffs": [[1, 0, 0, 1], ...], "state": ["A", "B", "B"]}
//! ```
//!
//! Agent ids are 1-based and each edge is written with `i < j`. `state` may
//! be omitted on input.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Graph, NetworkGame, PayoffMatrix, Strategy, StrategyState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameFile {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
    pub payoffs: Vec<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<Vec<Strategy>>,
}

impl GameFile {
    pub fn from_game(game: &NetworkGame, state: Option<&StrategyState>) -> Self {
        GameFile {
            n: game.n(),
            edges: game.graph().edges().iter().map(|&(i, j)| [i + 1, j + 1]).collect(),
            payoffs: game.payoffs().iter().map(|p| [p.a, p.b, p.c, p.d]).collect(),
            state: state.map(|s| s.as_slice().to_vec()),
        }
    }

    pub fn to_game(&self) -> Result<(NetworkGame, Option<StrategyState>)> {
        let mut edges = Vec::with_capacity(self.edges.len());
        for &[i, j] in &self.edges {
            if i == 0 || j == 0 {
                return Err(Error::InvalidGraph("agent ids are 1-based".into()));
            }
            edges.push((i - 1, j - 1));
        }
        let graph = Graph::new(self.n, edges)?;
        let payoffs = self
            .payoffs
            .iter()
            .map(|&[a, b, c, d]| PayoffMatrix::new(a, b, c, d))
            .collect();
        let game = NetworkGame::new(graph, payoffs)?;
        let state = match &self.state {
            Some(s) => {
                let s = StrategyState::new(s.clone());
                game.check_state(&s)?;
                Some(s)
            }
            None => None,
        };
        Ok((game, state))
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("bad game JSON: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("game file serializes")
    }
}
