//! Random geometric networks, heterogeneous coordination payoffs and
//! initial equilibria.
//!
//! All generators draw from a caller-supplied ChaCha8 stream, so a seed
//! fixes the graph, the payoffs and the initial state bit for bit.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{simulate, ActivationSequence, Imitation};
use crate::error::{Error, Result};
use crate::game::{Graph, NetworkGame, PayoffMatrix, Strategy, StrategyState};

/// Give up on finding a usable initial equilibrium after this many draws.
pub const MAX_STATE_ATTEMPTS: usize = 1000;

/// `n` uniform points in the unit square, joined when within `radius`.
pub fn geometric_random_graph<R: Rng + ?Sized>(n: usize, radius: f64, rng: &mut R) -> Result<Graph> {
    if n == 0 {
        return Err(Error::InvalidArgument("network needs at least one agent".into()));
    }
    if radius.is_nan() || radius <= 0.0 {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
    }
    let points: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen::<f64>(), rng.gen::<f64>())).collect();
    let r2 = radius * radius;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let dx = points[i].0 - points[j].0;
            let dy = points[i].1 - points[j].1;
            if dx * dx + dy * dy <= r2 {
                edges.push((i, j));
            }
        }
    }
    Graph::new(n, edges)
}

/// Connection radius giving a mean degree of roughly `deg_exp`.
pub fn radius_for_mean_degree(n: usize, deg_exp: f64) -> f64 {
    ((1.0 + deg_exp) / (PI * n as f64)).sqrt()
}

/// `p I + v W` per agent with `W` entries i.i.d. uniform on [0, 1].
pub fn random_payoffs<R: Rng + ?Sized>(n: usize, p: f64, v: f64, rng: &mut R) -> Result<Vec<PayoffMatrix>> {
    if p < 1.0 || !p.is_finite() {
        return Err(Error::InvalidArgument(format!("coordination level p must be >= 1, got {p}")));
    }
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::InvalidArgument(format!("payoff variance v must lie in [0, 1], got {v}")));
    }
    Ok((0..n)
        .map(|_| {
            let w: [f64; 4] = [rng.gen(), rng.gen(), rng.gen(), rng.gen()];
            PayoffMatrix::new(p + v * w[0], v * w[1], v * w[2], p + v * w[3])
        })
        .collect())
}

/// Every connected component holds at least one A-player, so all-A is
/// reachable by rewarding A-players.
pub fn is_controllable(graph: &Graph, state: &StrategyState) -> bool {
    let labels = graph.component_labels();
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut has_a = vec![false; k];
    for (i, &c) in labels.iter().enumerate() {
        if state.get(i) == Strategy::A {
            has_a[c] = true;
        }
    }
    has_a.into_iter().all(|x| x)
}

/// Uniformly random strategies relaxed under imitation along a random
/// activation sequence. Draws that end all-A, or with a component that has
/// no A-player (including all-B), are rejected.
pub fn random_equilibrium_state<R: Rng + ?Sized>(game: &NetworkGame, rng: &mut R) -> Result<StrategyState> {
    random_equilibrium_state_within(game, rng, MAX_STATE_ATTEMPTS)
}

fn random_equilibrium_state_within<R: Rng + ?Sized>(
    game: &NetworkGame,
    rng: &mut R,
    attempts: usize,
) -> Result<StrategyState> {
    let n = game.n();
    let budget = 1_000 * (n as u64).pow(2) + 10_000;
    for _ in 0..attempts {
        let x: Vec<Strategy> = (0..n)
            .map(|_| if rng.gen::<bool>() { Strategy::A } else { Strategy::B })
            .collect();
        let seq = ActivationSequence::RandomUniform(rng.gen());
        let t = simulate(&Imitation::new(), game, &StrategyState::new(x), &seq, budget)?;
        if !t.converged {
            continue;
        }
        let x = t.final_state;
        if x.is_all_a() || !is_controllable(game.graph(), &x) {
            continue;
        }
        return Ok(x);
    }
    Err(Error::Generation(format!(
        "no usable initial equilibrium after {attempts} attempts"
    )))
}

/// How the connection radius is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadiusSpec {
    MeanDegree(f64),
    Radius(f64),
}

impl RadiusSpec {
    pub fn radius(&self, n: usize) -> f64 {
        match *self {
            RadiusSpec::MeanDegree(d) => radius_for_mean_degree(n, d),
            RadiusSpec::Radius(r) => r,
        }
    }
}

/// Parameters for one random instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceParams {
    pub n: usize,
    pub radius: RadiusSpec,
    pub p: f64,
    pub v: f64,
    pub require_connected: bool,
}

impl InstanceParams {
    /// Mean degree 4, `p = 1`, `v = 1/2`.
    pub fn standard(n: usize) -> Self {
        InstanceParams {
            n,
            radius: RadiusSpec::MeanDegree(4.0),
            p: 1.0,
            v: 0.5,
            require_connected: false,
        }
    }
}

/// A generated network game with its initial equilibrium.
#[derive(Debug, Clone)]
pub struct Instance {
    pub seed: u64,
    pub radius: f64,
    pub game: NetworkGame,
    pub x0: StrategyState,
    pub components: usize,
}

/// Network draws per instance before giving up.
pub const MAX_NETWORK_ATTEMPTS: usize = 200;

/// State draws per network before the network itself is redrawn.
const STATE_ATTEMPTS_PER_NETWORK: usize = 100;

/// Builds graph, payoffs and initial equilibrium from a single seed.
///
/// Imitation from a random start usually reaches consensus inside each
/// component, so some networks have no equilibrium that is mixed yet
/// controllable. Such networks are redrawn from the same stream.
pub fn generate_instance(params: &InstanceParams, seed: u64) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = params.radius.radius(params.n);
    for _ in 0..MAX_NETWORK_ATTEMPTS {
        let graph = geometric_random_graph(params.n, radius, &mut rng)?;
        if params.require_connected && !graph.is_connected() {
            continue;
        }
        let payoffs = random_payoffs(params.n, params.p, params.v, &mut rng)?;
        let components = graph.num_components();
        let game = NetworkGame::new(graph, payoffs)?;
        match random_equilibrium_state_within(&game, &mut rng, STATE_ATTEMPTS_PER_NETWORK) {
            Ok(x0) => {
                return Ok(Instance {
                    seed,
                    radius,
                    game,
                    x0,
                    components,
                })
            }
            Err(Error::Generation(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Generation(format!(
        "no usable instance after {MAX_NETWORK_ATTEMPTS} network draws"
    )))
}

/// Deterministic child seed for item `index` of a batch seeded with `seed`.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x9E37_79B9_7F4A_7C15)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::is_equilibrium;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn large_radius_gives_complete_graph() {
        let g = geometric_random_graph(12, 2f64.sqrt(), &mut rng(1)).unwrap();
        assert_eq!(g.num_edges(), 12 * 11 / 2);
    }

    #[test]
    fn tiny_radius_gives_no_edges() {
        let g = geometric_random_graph(30, 1e-12, &mut rng(2)).unwrap();
        assert_eq!(g.num_edges(), 0);
    }

    #[test]
    fn graph_arguments_are_checked() {
        assert!(geometric_random_graph(0, 0.3, &mut rng(0)).is_err());
        assert!(geometric_random_graph(5, 0.0, &mut rng(0)).is_err());
    }

    #[test]
    fn radius_formula() {
        let n = 50;
        let deg = PI * n as f64 - 1.0;
        assert!((radius_for_mean_degree(n, deg) - 1.0).abs() < 1e-12);
        assert!((radius_for_mean_degree(100, 4.0) - 0.126_156_626_101_008).abs() < 1e-12);
        assert!(radius_for_mean_degree(200, 4.0) < radius_for_mean_degree(100, 4.0));
    }

    #[test]
    fn zero_variance_payoffs_are_scaled_identity() {
        for pm in random_payoffs(10, 1.5, 0.0, &mut rng(3)).unwrap() {
            assert_eq!(pm, PayoffMatrix::new(1.5, 0.0, 0.0, 1.5));
        }
    }

    #[test]
    fn payoffs_are_opponent_coordinating() {
        for (p, v) in [(1.0, 1.0), (1.0, 0.5), (2.0, 1.0)] {
            for pm in random_payoffs(200, p, v, &mut rng(4)).unwrap() {
                assert!(pm.is_opponent_coordinating());
                assert!(pm.a >= p && pm.b <= v && pm.c <= v && pm.d >= p);
            }
        }
        assert!(random_payoffs(3, 0.5, 0.5, &mut rng(0)).is_err());
        assert!(random_payoffs(3, 1.0, 1.5, &mut rng(0)).is_err());
    }

    #[test]
    fn random_equilibria_are_usable() {
        for seed in 0..20 {
            let inst = generate_instance(&InstanceParams::standard(15), seed).unwrap();
            assert!(is_equilibrium(&Imitation::new(), &inst.game, &inst.x0));
            assert!(!inst.x0.is_all_a());
            assert!(!inst.x0.is_all_b());
            assert!(is_controllable(inst.game.graph(), &inst.x0));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_instance(&InstanceParams::standard(20), 99).unwrap();
        let b = generate_instance(&InstanceParams::standard(20), 99).unwrap();
        assert_eq!(a.game, b.game);
        assert_eq!(a.x0, b.x0);
        assert_ne!(child_seed(1, 0), child_seed(1, 1));
        assert_eq!(child_seed(7, 3), child_seed(7, 3));
    }

    #[test]
    fn require_connected_filters() {
        let mut params = InstanceParams::standard(20);
        params.require_connected = true;
        let inst = generate_instance(&params, 5).unwrap();
        assert_eq!(inst.components, 1);
    }
}
