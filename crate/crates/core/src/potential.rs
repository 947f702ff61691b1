//! Potential propagation over the condensed nonnegative deviation graph.
//!
//! Components are visited in topological order. A component without incoming
//! edges gets value 0; any other component gets the maximum, over incoming
//! condensation edges, of the predecessor's value plus the edge weight. The
//! per-component values are then broadcast to every profile.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::game::{Game, Profile};
use crate::graph::{
    condense, pure_nash, strict_nash, strictly_dominated_actions, Condensation, DeviationGraph,
    TieBreak,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialFunction {
    /// One value per flat profile index.
    pub values: Vec<f64>,
    pub component_of: Vec<usize>,
    pub component_values: Vec<f64>,
}

impl PotentialFunction {
    pub fn value(&self, vertex: usize) -> f64 {
        self.values[vertex]
    }
}

/// Propagates values along `tie_break`'s topological order of `condensation`.
pub fn propagate(condensation: &Condensation, tie_break: TieBreak) -> Result<PotentialFunction> {
    let order = condensation.topological_order(tie_break)?;
    let incoming = condensation.incoming();
    let mut component_values = vec![0.0; condensation.num_components()];
    for c in order {
        component_values[c] = incoming[c]
            .iter()
            .map(|&i| {
                let e = &condensation.dag_edges[i];
                component_values[e.tail] + e.weight
            })
            .reduce(f64::max)
            .unwrap_or(0.0);
    }
    let values = condensation
        .component_of
        .iter()
        .map(|&c| component_values[c])
        .collect();
    Ok(PotentialFunction {
        values,
        component_of: condensation.component_of.clone(),
        component_values,
    })
}

/// Condensation of a nonnegative graph together with the propagated potential.
#[derive(Clone, Debug)]
pub struct Potentialization {
    pub condensation: Condensation,
    pub potential: PotentialFunction,
}

/// Runs the pipeline on an already nonnegative weighted graph.
pub fn potentialize_graph(nonnegative: &DeviationGraph, tie_break: TieBreak) -> Result<Potentialization> {
    let condensation = condense(nonnegative);
    let potential = propagate(&condensation, tie_break)?;
    Ok(Potentialization {
        condensation,
        potential,
    })
}

pub fn potentialize(game: &Game) -> Potentialization {
    potentialize_graph(&DeviationGraph::build(game).nonnegative(), TieBreak::LowestFirst)
        .expect("condensation of a finite graph is acyclic")
}

pub fn compute_potential(game: &Game) -> PotentialFunction {
    potentialize(game).potential
}

/// Common-interest game in which every player receives the potential.
pub fn potentialized_game(game: &Game) -> Game {
    let phi = compute_potential(game);
    Game::common_interest(game.action_counts().to_vec(), phi.values)
        .expect("potential has one finite value per profile")
}

/// Counterexample attached to a failed check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    Edge {
        tail: usize,
        head: usize,
        weight: f64,
        potential_tail: f64,
        potential_head: f64,
    },
    Component {
        component: usize,
        value: f64,
    },
    Profile {
        profile: Profile,
        player: Option<usize>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub passed: bool,
    pub witness: Option<Witness>,
}

impl CheckOutcome {
    fn from_witness(witness: Option<Witness>) -> Self {
        CheckOutcome {
            passed: witness.is_none(),
            witness,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// The potential is constant on every strongly connected component.
    pub scc_constancy: CheckOutcome,
    /// Crossing edges gain at least their weight.
    pub edge_slack: CheckOutcome,
    /// Sources are 0 and every other component is attained by some edge.
    pub minimality: CheckOutcome,
    /// The potential is an ordinal potential of the original game.
    pub ordinal_potential: CheckOutcome,
}

impl VerificationReport {
    /// Checks that hold for every game.
    pub fn structural_passed(&self) -> bool {
        self.scc_constancy.passed && self.edge_slack.passed && self.minimality.passed
    }

    pub fn all_passed(&self) -> bool {
        self.structural_passed() && self.ordinal_potential.passed
    }
}

fn edge_witness(e: &crate::graph::Edge, phi: &PotentialFunction) -> Witness {
    Witness::Edge {
        tail: e.tail,
        head: e.head,
        weight: e.weight,
        potential_tail: phi.values[e.tail],
        potential_head: phi.values[e.head],
    }
}

/// Verifies `phi` against a full weighted graph. Components are recomputed
/// from scratch; `phi`'s own component map is not trusted.
pub fn verify_on_graph(full: &DeviationGraph, phi: &PotentialFunction) -> VerificationReport {
    let nonnegative = full.nonnegative();
    let condensation = condense(&nonnegative);
    let comp = &condensation.component_of;
    let values = &phi.values;

    let scc_constancy = condensation
        .components
        .iter()
        .enumerate()
        .find(|(_, members)| members.iter().any(|&v| values[v] != values[members[0]]))
        .map(|(component, members)| Witness::Component {
            component,
            value: values[members[0]],
        });

    let crossing = || {
        nonnegative
            .edges()
            .iter()
            .filter(|e| comp[e.tail] != comp[e.head])
    };

    let edge_slack = crossing()
        .find(|e| values[e.head] < values[e.tail] + e.weight)
        .map(|e| edge_witness(e, phi));

    let mut attained = vec![false; condensation.num_components()];
    let mut has_incoming = vec![false; condensation.num_components()];
    for e in crossing() {
        let k = comp[e.head];
        has_incoming[k] = true;
        if values[e.head] == values[e.tail] + e.weight {
            attained[k] = true;
        }
    }
    let minimality = (0..condensation.num_components())
        .find(|&k| {
            let value = values[condensation.components[k][0]];
            if has_incoming[k] {
                !attained[k]
            } else {
                value != 0.0
            }
        })
        .map(|component| Witness::Component {
            component,
            value: values[condensation.components[component][0]],
        });

    let ordinal_potential = full
        .edges()
        .iter()
        .find(|e| (values[e.head] > values[e.tail]) != (e.weight > 0.0))
        .map(|e| edge_witness(e, phi));

    VerificationReport {
        scc_constancy: CheckOutcome::from_witness(scc_constancy),
        edge_slack: CheckOutcome::from_witness(edge_slack),
        minimality: CheckOutcome::from_witness(minimality),
        ordinal_potential: CheckOutcome::from_witness(ordinal_potential),
    }
}

pub fn verify_potential(game: &Game, phi: &PotentialFunction) -> VerificationReport {
    verify_on_graph(&DeviationGraph::build(game), phi)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropositionReport {
    /// Strict equilibria of the original game stay equilibria.
    pub strict_nash_retained: CheckOutcome,
    /// No equilibrium of the potentialized game uses a strictly dominated action.
    pub dominated_excluded: CheckOutcome,
}

impl PropositionReport {
    pub fn passed(&self) -> bool {
        self.strict_nash_retained.passed && self.dominated_excluded.passed
    }
}

pub fn check_proposition(game: &Game) -> PropositionReport {
    let potentialized = potentialized_game(game);
    let equilibria = pure_nash(&potentialized);

    let strict_nash_retained = strict_nash(game)
        .into_iter()
        .find(|p| equilibria.binary_search(p).is_err())
        .map(|profile| Witness::Profile {
            profile,
            player: None,
        });

    let dominated: Vec<Vec<usize>> = (0..game.num_players())
        .map(|i| strictly_dominated_actions(game, i))
        .collect();
    let dominated_excluded = equilibria.iter().find_map(|p| {
        p.actions()
            .iter()
            .enumerate()
            .find(|&(i, a)| dominated[i].contains(a))
            .map(|(i, _)| Witness::Profile {
                profile: p.clone(),
                player: Some(i),
            })
    });

    PropositionReport {
        strict_nash_retained: CheckOutcome::from_witness(strict_nash_retained),
        dominated_excluded: CheckOutcome::from_witness(dominated_excluded),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{admits_ordinal_potential, Edge};

    fn fig2() -> Game {
        Game::bimatrix(
            &[vec![3., 2., 1.], vec![0., 2., 1.], vec![0., 0., 1.]],
            &[vec![3., 0., 0.], vec![2., 2., 0.], vec![1., 1., 1.]],
        )
        .unwrap()
    }

    fn fig3() -> Game {
        Game::bimatrix(
            &[vec![0., 1., 0.], vec![1., 0., 0.], vec![0., 0., 1.]],
            &[vec![1., 2., 0.], vec![1., 0., 0.], vec![0., 0., 1.]],
        )
        .unwrap()
    }

    fn h_family(h: f64) -> Game {
        Game::bimatrix(&[vec![h, 0.], vec![0., 1.]], &[vec![0., 1.], vec![1., 0.]]).unwrap()
    }

    fn chain() -> DeviationGraph {
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

    #[test]
    fn chain_potential() {
        let p = potentialize_graph(&chain(), TieBreak::LowestFirst).unwrap();
        assert_eq!(p.potential.values, vec![0., 1., 3., 8., 9.]);
        let report = verify_on_graph(&chain(), &p.potential);
        assert!(report.all_passed(), "{report:?}");
    }

    #[test]
    fn constant_game_potential_is_zero() {
        let g = Game::new(3, vec![2, 2, 2], vec![vec![4.0; 8]; 3]).unwrap();
        let phi = compute_potential(&g);
        assert!(phi.values.iter().all(|&v| v == 0.0));
        assert_eq!(phi.component_values, vec![0.0]);
    }

    #[test]
    fn figure_games() {
        let phi = compute_potential(&fig3());
        assert_eq!(phi.values, vec![0., 2., 0., 1., 0., 0., 0., 0., 1.]);

        let pg = potentialized_game(&fig2());
        let mut expected = vec![0.0; 9];
        expected[0] = 3.0;
        assert_eq!(pg.utilities(), &[expected.clone(), expected]);

        let pg = potentialized_game(&fig3());
        let expected = vec![0., 2., 0., 1., 0., 0., 0., 0., 1.];
        assert_eq!(pg.utilities(), &[expected.clone(), expected]);
    }

    #[test]
    fn h_family_collapses() {
        for h in [1.5, 2.0, 10.0, 100.0] {
            let g = h_family(h);
            let pg = potentialized_game(&g);
            assert!(pg.utilities().iter().flatten().all(|&u| u == 0.0));

            let report = verify_potential(&g, &compute_potential(&g));
            assert!(report.structural_passed());
            match report.ordinal_potential.witness {
                Some(Witness::Edge {
                    weight,
                    potential_tail,
                    potential_head,
                    ..
                }) => {
                    assert!(weight > 0.0);
                    assert_eq!(potential_tail, potential_head);
                }
                other => panic!("expected an edge witness, got {other:?}"),
            }
        }
    }

    #[test]
    fn ordinal_check_matches_admissibility() {
        for seed in 0..50 {
            let g = crate::game::random_game(&[2, 3], seed).unwrap();
            let report = verify_potential(&g, &compute_potential(&g));
            assert!(report.structural_passed());
            assert_eq!(report.ordinal_potential.passed, admits_ordinal_potential(&g));
        }
    }

    #[test]
    fn verification_catches_tampering() {
        let g = fig3();
        let mut phi = compute_potential(&g);
        phi.values[1] = 5.0;
        let report = verify_potential(&g, &phi);
        assert!(!report.minimality.passed);
        assert_eq!(
            report.minimality.witness,
            Some(Witness::Component { component: 1, value: 5.0 })
        );

        let mut phi = compute_potential(&g);
        phi.values[1] = 1.0;
        let report = verify_potential(&g, &phi);
        assert!(!report.edge_slack.passed);

        let mut phi = compute_potential(&g);
        phi.values[0] = 0.5;
        assert!(!verify_potential(&g, &phi).scc_constancy.passed);

        let mut phi = compute_potential(&g);
        phi.values.iter_mut().for_each(|v| *v += 1.0);
        assert!(!verify_potential(&g, &phi).minimality.passed);
    }

    #[test]
    fn proposition_on_figures() {
        let r = check_proposition(&fig2());
        assert!(r.passed(), "{r:?}");
        let r = check_proposition(&fig3());
        assert!(r.passed());
        let pg = potentialized_game(&fig3());
        for p in pure_nash(&fig3()) {
            assert!(pure_nash(&pg).contains(&p));
        }
    }

    #[test]
    fn reversed_tie_break_gives_same_values() {
        for seed in 0..30 {
            let g = crate::game::random_game(&[3, 3], seed).unwrap();
            let nn = DeviationGraph::build(&g).nonnegative();
            let a = potentialize_graph(&nn, TieBreak::LowestFirst).unwrap();
            let b = potentialize_graph(&nn, TieBreak::HighestFirst).unwrap();
            assert_eq!(a.potential.values, b.potential.values);
        }
    }
}
