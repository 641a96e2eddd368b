//! Asynchronous two-strategy imitation dynamics on networks and payoff
//! incentives that drive them to the all-A equilibrium.
//!
//! * [`game`]: networks, payoff matrices, strategy states, rewards
//! * [`dynamics`]: update rules, activation sequences, simulation
//! * [`uniform`]: optimal uniform reward by candidate-set binary search
//! * [`targeted`]: iterative targeted and budgeted rewards
//! * [`optimal`]: exhaustive baseline for targeted rewards
//! * [`netgen`]: random geometric instances
//! * [`verify`]: executable checks of the monotonicity and uniqueness theory
//! * [`experiments`]: batch studies and summaries

pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod game;
pub mod io;
pub mod netgen;
pub mod optimal;
pub mod targeted;
pub mod uniform;
pub mod verify;

pub use dynamics::{ActivationSequence, Imitation, RuleOutcome, TiePolicy, Trajectory, UpdateRule};
pub use error::{Error, Result};
pub use game::{Graph, NetworkGame, PayoffMatrix, RewardVector, Strategy, StrategyState};
pub use targeted::{ControlOutcome, TargetingPolicy};
