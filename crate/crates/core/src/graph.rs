//! Deviation graphs, their strongly connected components, and the weighted
//! condensation.
//!
//! Vertices are flat profile indices. An edge `a -> a'` exists whenever `a'`
//! differs from `a` in exactly one player's action, and carries that player's
//! utility gain `u_i(a') - u_i(a)`.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Game, Profile};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
    pub weight: f64,
    pub deviator: usize,
}

/// Weighted directed graph on profiles, edges grouped by tail vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviationGraph {
    num_vertices: usize,
    edges: Vec<Edge>,
    // edges[offsets[v]..offsets[v + 1]] leave v
    offsets: Vec<usize>,
}

impl DeviationGraph {
    /// Full deviation graph of `game`, with both directions of every
    /// unilateral deviation.
    pub fn build(game: &Game) -> Self {
        let size = game.num_profiles();
        let counts = game.action_counts();
        let per_vertex: usize = counts.iter().map(|c| c - 1).sum();
        let mut edges = Vec::with_capacity(size * per_vertex);
        let mut offsets = Vec::with_capacity(size + 1);
        for tail in 0..size {
            offsets.push(edges.len());
            for (player, &count) in counts.iter().enumerate() {
                let utility = game.utility(player);
                let current = game.action_at(tail, player);
                for action in (0..count).filter(|&b| b != current) {
                    let head = game.deviate(tail, player, action);
                    edges.push(Edge {
                        tail,
                        head,
                        weight: utility[head] - utility[tail],
                        deviator: player,
                    });
                }
            }
        }
        offsets.push(edges.len());
        DeviationGraph {
            num_vertices: size,
            edges,
            offsets,
        }
    }

    /// Arbitrary weighted digraph, e.g. a hand-drawn condensation. Edges are
    /// regrouped by tail, preserving their relative order.
    pub fn from_edges(num_vertices: usize, mut edges: Vec<Edge>) -> Result<Self> {
        for e in &edges {
            let bad = [e.tail, e.head].into_iter().find(|&v| v >= num_vertices);
            if let Some(index) = bad {
                return Err(Error::IndexOutOfRange {
                    index,
                    size: num_vertices,
                });
            }
            if !e.weight.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "edge {} -> {} has non-finite weight",
                    e.tail, e.head
                )));
            }
        }
        edges.sort_by_key(|e| e.tail);
        let mut offsets = vec![0; num_vertices + 1];
        for e in &edges {
            offsets[e.tail + 1] += 1;
        }
        for v in 0..num_vertices {
            offsets[v + 1] += offsets[v];
        }
        Ok(DeviationGraph {
            num_vertices,
            edges,
            offsets,
        })
    }

    /// Keeps only the edges of nonnegative weight.
    pub fn nonnegative(&self) -> Self {
        let mut edges = Vec::with_capacity(self.edges.len());
        let mut offsets = Vec::with_capacity(self.num_vertices + 1);
        for v in 0..self.num_vertices {
            offsets.push(edges.len());
            edges.extend(self.out_edges(v).iter().filter(|e| e.weight >= 0.0));
        }
        offsets.push(edges.len());
        DeviationGraph {
            num_vertices: self.num_vertices,
            edges,
            offsets,
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn out_edges(&self, v: usize) -> &[Edge] {
        &self.edges[self.offsets[v]..self.offsets[v + 1]]
    }

    /// DOT rendering; vertices are labelled with profile tuples when a game
    /// is supplied.
    pub fn to_dot(&self, game: Option<&Game>) -> String {
        let mut out = String::from("digraph deviation {\n");
        for v in 0..self.num_vertices {
            let label = game
                .and_then(|g| g.profile_at(v).ok())
                .map_or_else(|| v.to_string(), |p| p.to_string());
            let _ = writeln!(out, "  {v} [label=\"{label}\"];");
        }
        for e in &self.edges {
            let _ = writeln!(out, "  {} -> {} [label=\"{}\"];", e.tail, e.head, e.weight);
        }
        out.push_str("}\n");
        out
    }
}

pub fn build_deviation_graph(game: &Game) -> DeviationGraph {
    DeviationGraph::build(game)
}

pub fn nonnegative_subgraph(graph: &DeviationGraph) -> DeviationGraph {
    graph.nonnegative()
}

/// Strongly connected components by Tarjan's algorithm (iterative, one pass).
///
/// Each component is sorted ascending and components are ordered by their
/// smallest vertex, so a component's position is its id.
pub fn strongly_connected_components(graph: &DeviationGraph) -> Vec<Vec<usize>> {
    const UNSEEN: usize = usize::MAX;
    let n = graph.num_vertices;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut frames: Vec<(usize, usize)> = Vec::new();
    let mut counter = 0;
    let mut components = Vec::new();

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;
        frames.push((root, graph.offsets[root]));

        while let Some(frame) = frames.last_mut() {
            let v = frame.0;
            if frame.1 < graph.offsets[v + 1] {
                let w = graph.edges[frame.1].head;
                frame.1 += 1;
                if index[w] == UNSEEN {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    frames.push((w, graph.offsets[w]));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            frames.pop();
            if let Some(&(parent, _)) = frames.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut component = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    component.push(w);
                    if w == v {
                        break;
                    }
                }
                component.sort_unstable();
                components.push(component);
            }
        }
    }
    components.sort_unstable_by_key(|c| c[0]);
    components
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DagEdge {
    pub tail: usize,
    pub head: usize,
    pub weight: f64,
}

/// Quotient of a weighted digraph by its strongly connected components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condensation {
    pub component_of: Vec<usize>,
    pub components: Vec<Vec<usize>>,
    /// One edge per connected component pair, carrying the maximum weight of
    /// the crossing edges. Sorted by (tail, head).
    pub dag_edges: Vec<DagEdge>,
    /// Largest weight of an edge inside each component, 0 if there is none.
    pub internal_max_weight: Vec<f64>,
}

/// Order in which ready components are taken during topological sorting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TieBreak {
    #[default]
    LowestFirst,
    HighestFirst,
}

pub fn condense(graph: &DeviationGraph) -> Condensation {
    let components = strongly_connected_components(graph);
    let mut component_of = vec![0; graph.num_vertices];
    for (id, members) in components.iter().enumerate() {
        for &v in members {
            component_of[v] = id;
        }
    }
    let mut internal_max_weight = vec![0.0f64; components.len()];
    let mut crossing: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for e in &graph.edges {
        let (c, k) = (component_of[e.tail], component_of[e.head]);
        if c == k {
            internal_max_weight[c] = internal_max_weight[c].max(e.weight);
        } else {
            crossing
                .entry((c, k))
                .and_modify(|w| *w = w.max(e.weight))
                .or_insert(e.weight);
        }
    }
    let dag_edges = crossing
        .into_iter()
        .map(|((tail, head), weight)| DagEdge { tail, head, weight })
        .collect();
    Condensation {
        component_of,
        components,
        dag_edges,
        internal_max_weight,
    }
}

impl Condensation {
    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    /// Indices into `dag_edges` grouped by head component.
    pub fn incoming(&self) -> Vec<Vec<usize>> {
        let mut incoming = vec![Vec::new(); self.components.len()];
        for (i, e) in self.dag_edges.iter().enumerate() {
            incoming[e.head].push(i);
        }
        incoming
    }

    /// Kahn's algorithm over the component DAG.
    pub fn topological_order(&self, tie_break: TieBreak) -> Result<Vec<usize>> {
        let k = self.components.len();
        let mut indegree = vec![0usize; k];
        let mut outgoing = vec![Vec::new(); k];
        for e in &self.dag_edges {
            indegree[e.head] += 1;
            outgoing[e.tail].push(e.head);
        }
        // Reverse(id) pops the lowest id; the raw id pops the highest.
        let key = |c: usize| match tie_break {
            TieBreak::LowestFirst => Reverse(c),
            TieBreak::HighestFirst => Reverse(usize::MAX - c),
        };
        let mut ready: BinaryHeap<_> = (0..k).filter(|&c| indegree[c] == 0).map(key).collect();
        let mut order = Vec::with_capacity(k);
        while let Some(Reverse(tagged)) = ready.pop() {
            let c = match tie_break {
                TieBreak::LowestFirst => tagged,
                TieBreak::HighestFirst => usize::MAX - tagged,
            };
            order.push(c);
            for &next in &outgoing[c] {
                indegree[next] -= 1;
                if indegree[next] == 0 {
                    ready.push(key(next));
                }
            }
        }
        if order.len() != k {
            return Err(Error::CyclicCondensation {
                remaining: k - order.len(),
            });
        }
        Ok(order)
    }
}

pub fn topological_sort(condensation: &Condensation) -> Result<Vec<usize>> {
    condensation.topological_order(TieBreak::LowestFirst)
}

/// True iff the game has an ordinal potential: no edge inside a strongly
/// connected component of the nonnegative deviation graph has positive weight.
pub fn admits_ordinal_potential(game: &Game) -> bool {
    let condensation = condense(&DeviationGraph::build(game).nonnegative());
    condensation.internal_max_weight.iter().all(|&w| w == 0.0)
}

fn nash_profiles(game: &Game, strict: bool) -> Vec<Profile> {
    (0..game.num_profiles())
        .filter(|&idx| {
            (0..game.num_players()).all(|player| {
                let u = game.utility(player);
                let current = game.action_at(idx, player);
                (0..game.action_counts()[player])
                    .filter(|&b| b != current)
                    .all(|b| {
                        let alt = u[game.deviate(idx, player, b)];
                        if strict {
                            alt < u[idx]
                        } else {
                            alt <= u[idx]
                        }
                    })
            })
        })
        .map(|idx| game.profile_at(idx).expect("index in range"))
        .collect()
}

/// Profiles with no strictly improving unilateral deviation, in index order.
pub fn pure_nash(game: &Game) -> Vec<Profile> {
    nash_profiles(game, false)
}

/// Profiles where every unilateral deviation is strictly worse; these are the
/// sinks of the nonnegative deviation graph.
pub fn strict_nash(game: &Game) -> Vec<Profile> {
    nash_profiles(game, true)
}

/// Actions of `player` beaten by a single alternative action against every
/// opponent profile.
pub fn strictly_dominated_actions(game: &Game, player: usize) -> Vec<usize> {
    let count = game.action_counts()[player];
    let u = game.utility(player);
    // profiles where `player` plays action 0, one per opponent profile
    let base: Vec<usize> = (0..game.num_profiles())
        .filter(|&idx| game.action_at(idx, player) == 0)
        .collect();
    (0..count)
        .filter(|&x| {
            (0..count).filter(|&y| y != x).any(|y| {
                base.iter().all(|&idx| {
                    u[game.deviate(idx, player, y)] > u[game.deviate(idx, player, x)]
                })
            })
        })
        .collect()
}
