//! Shared test oracles: brute-force expectation and Nash checks computed
//! from raw game data, independent of the library's closed forms, plus
//! random game generators.

#![allow(dead_code)]

use rand::Rng;

use replicator_core::game::{
    CongestionGame, CoordinationEdge, Game, NetworkCoordinationGame, ObjectiveSense,
};
use replicator_core::profile::MixedProfile;

/// Expected cost of `player` playing `strategy` in a congestion game,
/// averaging the pure-outcome cost over all opponent pure profiles weighted
/// by their probabilities.
pub fn brute_force_congestion_value(
    game: &CongestionGame,
    p: &MixedProfile,
    player: usize,
    strategy: usize,
) -> f64 {
    let n = game.player_count();
    let others: Vec<usize> = (0..n).filter(|&j| j != player).collect();
    let mut ids = vec![0usize; others.len()];
    let mut total = 0.0;
    loop {
        let mut weight = 1.0;
        for (slot, &j) in ids.iter().zip(&others) {
            weight *= p.get(j, *slot);
        }
        if weight > 0.0 {
            let mut load = vec![0usize; game.resources().len()];
            for &e in &game.strategies(player)[strategy] {
                load[e] += 1;
            }
            for (slot, &j) in ids.iter().zip(&others) {
                for &e in &game.strategies(j)[*slot] {
                    load[e] += 1;
                }
            }
            let cost: f64 = game.strategies(player)[strategy]
                .iter()
                .map(|&e| {
                    let r = game.resources()[e];
                    r.a * load[e] as f64 + r.b
                })
                .sum();
            total += weight * cost;
        }
        let mut done = true;
        for (slot, &j) in ids.iter_mut().zip(&others) {
            *slot += 1;
            if *slot < game.strategy_count(j) {
                done = false;
                break;
            }
            *slot = 0;
        }
        if done {
            break;
        }
    }
    total
}

/// Expected utility of `player` playing `strategy` in a coordination game,
/// straight from the edge matrices.
pub fn brute_force_coordination_value(
    game: &NetworkCoordinationGame,
    p: &MixedProfile,
    player: usize,
    strategy: usize,
) -> f64 {
    let mut total = 0.0;
    for e in game.edges() {
        let (other, payoff): (usize, Box<dyn Fn(usize) -> f64>) = if e.i == player {
            (e.j, Box::new(|d| e.matrix[strategy][d]))
        } else if e.j == player {
            (e.i, Box::new(|d| e.matrix[d][strategy]))
        } else {
            continue;
        };
        for d in 0..game.strategy_count(other) {
            total += payoff(d) * p.get(other, d);
        }
    }
    total
}

/// Nash check by explicit best response over pure deviations: every support
/// strategy's value must be within `tol` of the best pure deviation.
pub fn brute_force_is_nash(game: &dyn Game, p: &MixedProfile, tol: f64) -> bool {
    let table = game.expectations(p).unwrap();
    for i in 0..game.player_count() {
        let best = (0..game.strategy_count(i))
            .map(|g| table.values[i][g])
            .fold(
                match game.sense() {
                    ObjectiveSense::Cost => f64::INFINITY,
                    ObjectiveSense::Utility => f64::NEG_INFINITY,
                },
                |acc, v| match game.sense() {
                    ObjectiveSense::Cost => acc.min(v),
                    ObjectiveSense::Utility => acc.max(v),
                },
            );
        for g in 0..game.strategy_count(i) {
            if p.get(i, g) <= 0.0 {
                continue;
            }
            let gap = match game.sense() {
                ObjectiveSense::Cost => table.values[i][g] - best,
                ObjectiveSense::Utility => best - table.values[i][g],
            };
            if gap > tol {
                return false;
            }
        }
    }
    true
}

/// Random linear congestion game: up to `max_players` players over up to
/// `max_resources` resources, 2-3 distinct nonempty strategies each.
pub fn random_congestion_game<R: Rng>(
    rng: &mut R,
    max_players: usize,
    max_resources: usize,
) -> CongestionGame {
    loop {
        let players = rng.gen_range(2..=max_players);
        let resources = rng.gen_range(2..=max_resources);
        let costs: Vec<replicator_core::game::ResourceCost> = (0..resources)
            .map(|_| replicator_core::game::ResourceCost {
                a: rng.gen_range(0.1..2.0),
                b: rng.gen_range(0.0..1.0),
            })
            .collect();
        // All nonempty subsets of the resource set.
        let subsets: Vec<Vec<usize>> = (1..(1u32 << resources))
            .map(|mask| (0..resources).filter(|&b| mask & (1 << b) != 0).collect())
            .collect();
        let strategies: Vec<Vec<Vec<usize>>> = (0..players)
            .map(|_| {
                let count = rng.gen_range(2..=3.min(subsets.len()));
                let mut picked: Vec<Vec<usize>> = Vec::new();
                while picked.len() < count {
                    let s = subsets[rng.gen_range(0..subsets.len())].clone();
                    if !picked.contains(&s) {
                        picked.push(s);
                    }
                }
                picked
            })
            .collect();
        if let Ok(game) = CongestionGame::new(costs, strategies) {
            return game;
        }
    }
}

/// Random coordination game on 2-4 vertices with a connected random graph
/// and generic payoff entries.
pub fn random_coordination_game<R: Rng>(rng: &mut R, max_vertices: usize) -> NetworkCoordinationGame {
    let vertices = rng.gen_range(2..=max_vertices);
    let strategy_count = rng.gen_range(2..=3);
    let mut edges = Vec::new();
    for i in 0..vertices {
        for j in (i + 1)..vertices {
            // Spanning chain plus random extras keeps the graph connected.
            if j == i + 1 || rng.gen_bool(0.4) {
                let matrix: Vec<Vec<f64>> = (0..strategy_count)
                    .map(|_| (0..strategy_count).map(|_| rng.gen_range(0.0..2.0)).collect())
                    .collect();
                edges.push(CoordinationEdge { i, j, matrix });
            }
        }
    }
    NetworkCoordinationGame::new(vertices, strategy_count, edges).unwrap()
}

/// Random interior profile for a game shape.
pub fn random_profile<R: Rng>(rng: &mut R, shape: &[usize]) -> MixedProfile {
    let rows = shape
        .iter()
        .map(|&k| {
            let mut row: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
            let sum: f64 = row.iter().sum();
            for v in row.iter_mut() {
                *v /= sum;
            }
            row
        })
        .collect();
    MixedProfile::new(rows).unwrap()
}
