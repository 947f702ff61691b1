//! Fixtures and brute-force oracles shared by the integration tests. The
//! oracles enumerate profiles through `profile_from_index` only and never
//! touch the graph or replicator code they check.

#![allow(dead_code)]

use potgame::game::{profile_from_index, profile_index};
use potgame::graph::{DeviationGraph, Edge};
use potgame::{Game, Policy, Profile};

pub fn fig2() -> Game {
    Game::bimatrix(
        &[vec![3., 2., 1.], vec![0., 2., 1.], vec![0., 0., 1.]],
        &[vec![3., 0., 0.], vec![2., 2., 0.], vec![1., 1., 1.]],
    )
    .unwrap()
}

pub fn fig3() -> Game {
    Game::bimatrix(
        &[vec![0., 1., 0.], vec![1., 0., 0.], vec![0., 0., 1.]],
        &[vec![1., 2., 0.], vec![1., 0., 0.], vec![0., 0., 1.]],
    )
    .unwrap()
}

pub fn h_family(h: f64) -> Game {
    Game::bimatrix(&[vec![h, 0.], vec![0., 1.]], &[vec![0., 1.], vec![1., 0.]]).unwrap()
}

/// Five-vertex DAG a..e with the worked weights.
pub fn chain() -> DeviationGraph {
    let e = |tail, head, weight| Edge {
        tail,
        head,
        weight,
        deviator: 0,
    };
    DeviationGraph::from_edges(
        5,
        vec![e(0, 1, 1.), e(0, 2, 3.), e(1, 2, 2.), e(1, 3, 4.), e(2, 3, 5.), e(3, 4, 1.)],
    )
    .unwrap()
}

/// Small deterministic generator for test-only game families.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next(&mut self) -> u64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        self.0 >> 33
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next() % n
    }
}

/// Game with utilities drawn from `{0, ..., levels - 1}`; many ties.
pub fn coarse_game(shape: &[usize], levels: u64, seed: u64) -> Game {
    let mut rng = Lcg(seed.wrapping_mul(2654435761).wrapping_add(17));
    let size: usize = shape.iter().product();
    let utilities = (0..shape.len())
        .map(|_| (0..size).map(|_| rng.below(levels) as f64).collect())
        .collect();
    Game::new(shape.len(), shape.to_vec(), utilities).unwrap()
}

fn profiles(game: &Game) -> Vec<Profile> {
    (0..game.num_profiles())
        .map(|i| profile_from_index(i, game.action_counts()).unwrap())
        .collect()
}

/// Nonnegative deviation edges as (tail, head, weight), built from profiles.
pub fn brute_nonnegative_edges(game: &Game) -> Vec<(usize, usize, f64)> {
    let counts = game.action_counts();
    let mut out = Vec::new();
    for p in profiles(game) {
        let a = profile_index(&p, counts).unwrap();
        for i in 0..game.num_players() {
            for b in 0..counts[i] {
                if b == p.0[i] {
                    continue;
                }
                let mut q = p.clone();
                q.0[i] = b;
                let h = profile_index(&q, counts).unwrap();
                let w = game.utility(i)[h] - game.utility(i)[a];
                if w >= 0.0 {
                    out.push((a, h, w));
                }
            }
        }
    }
    out
}

/// True if some simple cycle of the nonnegative deviation graph has positive
/// total weight. Every cycle is enumerated from its smallest vertex.
pub fn has_weak_improvement_cycle(game: &Game) -> bool {
    let n = game.num_profiles();
    let edges = brute_nonnegative_edges(game);
    let mut adj = vec![Vec::new(); n];
    for &(t, h, w) in &edges {
        adj[t].push((h, w));
    }
    fn dfs(
        start: usize,
        v: usize,
        weight: f64,
        adj: &[Vec<(usize, f64)>],
        on_path: &mut Vec<bool>,
    ) -> bool {
        for &(w, ew) in &adj[v] {
            if w == start && weight + ew > 0.0 {
                return true;
            }
            if w > start && !on_path[w] {
                on_path[w] = true;
                let found = dfs(start, w, weight + ew, adj, on_path);
                on_path[w] = false;
                if found {
                    return true;
                }
            }
        }
        false
    }
    (0..n).any(|s| {
        let mut on_path = vec![false; n];
        on_path[s] = true;
        dfs(s, s, 0.0, &adj, &mut on_path)
    })
}

pub fn brute_dominated(game: &Game, player: usize) -> Vec<usize> {
    let counts = game.action_counts();
    let all = profiles(game);
    let u = game.utility(player);
    let value = |p: &Profile, action: usize| {
        let mut q = p.clone();
        q.0[player] = action;
        u[profile_index(&q, counts).unwrap()]
    };
    (0..counts[player])
        .filter(|&x| {
            (0..counts[player])
                .any(|y| y != x && all.iter().all(|p| value(p, y) > value(p, x)))
        })
        .collect()
}

pub fn brute_pure_nash(game: &Game) -> Vec<Profile> {
    let counts = game.action_counts();
    profiles(game)
        .into_iter()
        .filter(|p| {
            let a = profile_index(p, counts).unwrap();
            (0..game.num_players()).all(|i| {
                (0..counts[i]).all(|b| {
                    let mut q = p.clone();
                    q.0[i] = b;
                    game.utility(i)[profile_index(&q, counts).unwrap()] <= game.utility(i)[a]
                })
            })
        })
        .collect()
}

/// Replicator field from the two expectation sums, each enumerated directly.
pub fn brute_field(game: &Game, policy: &Policy) -> Vec<Vec<f64>> {
    let n = game.num_players();
    let all = profiles(game);
    let prob = |p: &Profile, skip: Option<usize>| -> f64 {
        (0..n)
            .filter(|&j| Some(j) != skip)
            .map(|j| policy.player(j)[p.0[j]])
            .product()
    };
    (0..n)
        .map(|i| {
            let u = game.utility(i);
            let mean: f64 = all
                .iter()
                .enumerate()
                .map(|(a, p)| u[a] * prob(p, None))
                .sum();
            (0..game.action_counts()[i])
                .map(|k| {
                    let given: f64 = all
                        .iter()
                        .enumerate()
                        .filter(|(_, p)| p.0[i] == k)
                        .map(|(a, p)| u[a] * prob(p, Some(i)))
                        .sum();
                    policy.player(i)[k] * (given - mean)
                })
                .collect()
        })
        .collect()
}

/// Brute-force expected value of a per-profile tensor.
pub fn brute_expectation(game: &Game, values: &[f64], policy: &Policy) -> f64 {
    profiles(game)
        .iter()
        .enumerate()
        .map(|(a, p)| {
            values[a]
                * (0..game.num_players())
                    .map(|j| policy.player(j)[p.0[j]])
                    .product::<f64>()
        })
        .sum()
}
