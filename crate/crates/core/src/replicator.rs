//! Replicator dynamics on mixed policies, integrated with classical RK4.
//!
//! For player `i` and action `k` the field is
//! `pi_ik * (E[u_i | a_i = k] - E[u_i])`, with both expectations taken
//! exactly over every joint profile.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Game, Profile};

const SUM_TOLERANCE: f64 = 1e-9;

/// Independent mixed strategies, one probability vector per player.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Policy {
    probs: Vec<f64>,
    offsets: Vec<usize>,
}

impl TryFrom<Vec<Vec<f64>>> for Policy {
    type Error = Error;

    fn try_from(per_player: Vec<Vec<f64>>) -> Result<Self> {
        Policy::new(per_player)
    }
}

impl From<Policy> for Vec<Vec<f64>> {
    fn from(policy: Policy) -> Self {
        policy.to_nested()
    }
}

impl Policy {
    pub fn new(per_player: Vec<Vec<f64>>) -> Result<Self> {
        let mut offsets = vec![0];
        let mut probs = Vec::new();
        for v in &per_player {
            probs.extend_from_slice(v);
            offsets.push(probs.len());
        }
        let policy = Policy { probs, offsets };
        policy.validate()?;
        Ok(policy)
    }

    pub fn uniform(action_counts: &[usize]) -> Self {
        Policy::new(
            action_counts
                .iter()
                .map(|&c| vec![1.0 / c as f64; c])
                .collect(),
        )
        .expect("uniform vectors are valid")
    }

    /// All mass on the actions of `profile`.
    pub fn vertex(action_counts: &[usize], profile: &Profile) -> Result<Self> {
        crate::game::profile_index(profile, action_counts)?;
        Policy::new(
            action_counts
                .iter()
                .zip(profile.actions())
                .map(|(&c, &a)| (0..c).map(|k| if k == a { 1.0 } else { 0.0 }).collect())
                .collect(),
        )
    }

    fn validate(&self) -> Result<()> {
        if self.num_players() == 0 {
            return Err(Error::NoPlayers);
        }
        for i in 0..self.num_players() {
            let v = self.player(i);
            let invalid = |reason: String| Err(Error::InvalidPolicy { player: i, reason });
            if v.is_empty() {
                return invalid("empty vector".into());
            }
            if let Some(p) = v.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return invalid(format!("entry {p} outside [0, 1]"));
            }
            let sum: f64 = v.iter().sum();
            if (sum - 1.0).abs() > SUM_TOLERANCE {
                return invalid(format!("entries sum to {sum}"));
            }
        }
        Ok(())
    }

    fn check_shape(&self, game: &Game) -> Result<()> {
        let counts = self.action_counts();
        if counts != game.action_counts() {
            return Err(Error::ShapeMismatch {
                left: game.action_counts().to_vec(),
                right: counts,
            });
        }
        Ok(())
    }

    pub fn num_players(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn player(&self, i: usize) -> &[f64] {
        &self.probs[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn action_counts(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn to_nested(&self) -> Vec<Vec<f64>> {
        (0..self.num_players()).map(|i| self.player(i).to_vec()).collect()
    }

    /// Largest Euclidean distance between corresponding player vectors.
    pub fn max_player_distance(&self, other: &Policy) -> f64 {
        player_distance(&self.offsets, &self.probs, &other.probs)
    }
}

fn player_distance(offsets: &[usize], a: &[f64], b: &[f64]) -> f64 {
    offsets
        .windows(2)
        .map(|w| {
            (w[0]..w[1])
                .map(|j| (a[j] - b[j]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

/// Calls `visit(index, joint_probability)` for every profile, in index order.
fn for_each_joint(game: &Game, offsets: &[usize], x: &[f64], mut visit: impl FnMut(usize, f64)) {
    let n = game.num_players();
    let counts = game.action_counts();
    let mut actions = vec![0usize; n];
    for idx in 0..game.num_profiles() {
        let p = (0..n).map(|i| x[offsets[i] + actions[i]]).product();
        visit(idx, p);
        for i in (0..n).rev() {
            actions[i] += 1;
            if actions[i] < counts[i] {
                break;
            }
            actions[i] = 0;
        }
    }
}

/// Reusable buffers for repeated field evaluations on one game.
struct FieldEval<'a> {
    game: &'a Game,
    offsets: Vec<usize>,
    payoff: Vec<f64>,
    prefix: Vec<f64>,
    actions: Vec<usize>,
}

impl<'a> FieldEval<'a> {
    fn new(game: &'a Game) -> Self {
        let mut offsets = vec![0];
        for &c in game.action_counts() {
            offsets.push(offsets.last().unwrap() + c);
        }
        let dim = *offsets.last().unwrap();
        let n = game.num_players();
        FieldEval {
            game,
            offsets,
            payoff: vec![0.0; dim],
            prefix: vec![1.0; n + 1],
            actions: vec![0; n],
        }
    }

    /// Fills `self.payoff` with `E[u_i | a_i = k]` for every (i, k).
    fn action_payoffs(&mut self, x: &[f64]) {
        let game = self.game;
        let n = game.num_players();
        let counts = game.action_counts();
        self.payoff.iter_mut().for_each(|p| *p = 0.0);
        self.actions.iter_mut().for_each(|a| *a = 0);
        for idx in 0..game.num_profiles() {
            for i in 0..n {
                self.prefix[i + 1] = self.prefix[i] * x[self.offsets[i] + self.actions[i]];
            }
            let mut suffix = 1.0;
            for i in (0..n).rev() {
                let slot = self.offsets[i] + self.actions[i];
                self.payoff[slot] += game.utility(i)[idx] * self.prefix[i] * suffix;
                suffix *= x[slot];
            }
            for i in (0..n).rev() {
                self.actions[i] += 1;
                if self.actions[i] < counts[i] {
                    break;
                }
                self.actions[i] = 0;
            }
        }
    }

    fn field(&mut self, x: &[f64], out: &mut [f64]) {
        self.action_payoffs(x);
        for w in self.offsets.windows(2) {
            let range = w[0]..w[1];
            let average: f64 = range.clone().map(|j| x[j] * self.payoff[j]).sum();
            for j in range {
                out[j] = x[j] * (self.payoff[j] - average);
            }
        }
    }
}

/// Replicator vector field at `policy`, one tangent vector per player.
pub fn replicator_field(game: &Game, policy: &Policy) -> Result<Vec<Vec<f64>>> {
    policy.check_shape(game)?;
    policy.validate()?;
    let mut eval = FieldEval::new(game);
    let mut out = vec![0.0; policy.probs.len()];
    eval.field(&policy.probs, &mut out);
    Ok(policy
        .offsets
        .windows(2)
        .map(|w| out[w[0]..w[1]].to_vec())
        .collect())
}

/// Expected value of a per-profile tensor under the joint policy.
pub fn expected_value(game: &Game, values: &[f64], policy: &Policy) -> Result<f64> {
    policy.check_shape(game)?;
    let mut total = 0.0;
    for_each_joint(game, &policy.offsets, &policy.probs, |idx, p| total += values[idx] * p);
    Ok(total)
}

/// Players' mean expected utility under the joint policy.
pub fn average_reward(game: &Game, policy: &Policy) -> Result<f64> {
    let mean = mean_utility(game);
    expected_value(game, &mean, policy)
}

fn mean_utility(game: &Game) -> Vec<f64> {
    let n = game.num_players() as f64;
    (0..game.num_profiles())
        .map(|idx| game.utilities().iter().map(|u| u[idx]).sum::<f64>() / n)
        .collect()
}

/// RK4 integrator state reused across steps.
struct Integrator<'a> {
    eval: FieldEval<'a>,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl<'a> Integrator<'a> {
    fn new(game: &'a Game) -> Self {
        let eval = FieldEval::new(game);
        let dim = eval.payoff.len();
        Integrator {
            eval,
            k: std::array::from_fn(|_| vec![0.0; dim]),
            tmp: vec![0.0; dim],
        }
    }

    /// Advances `x` in place by one step of size `h`, then repairs it.
    fn step(&mut self, x: &mut [f64], h: f64, step: usize) -> Result<()> {
        let dim = x.len();
        let [k1, k2, k3, k4] = &mut self.k;

        self.eval.field(x, k1);
        for j in 0..dim {
            self.tmp[j] = x[j] + 0.5 * h * k1[j];
        }
        self.eval.field(&self.tmp, k2);
        for j in 0..dim {
            self.tmp[j] = x[j] + 0.5 * h * k2[j];
        }
        self.eval.field(&self.tmp, k3);
        for j in 0..dim {
            self.tmp[j] = x[j] + h * k3[j];
        }
        self.eval.field(&self.tmp, k4);
        for j in 0..dim {
            x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        debug_assert!(
            self.eval.offsets.windows(2).all(|w| {
                let raw: f64 = x[w[0]..w[1]].iter().sum();
                !raw.is_finite() || (raw - 1.0).abs() < 1e-6
            }),
            "simplex drift above 1e-6 at step {step}"
        );
        repair(&self.eval.offsets, x, step)
    }
}

/// Clamps negative entries to zero and renormalizes each player's vector.
fn repair(offsets: &[usize], x: &mut [f64], step: usize) -> Result<()> {
    for (player, w) in offsets.windows(2).enumerate() {
        let v = &mut x[w[0]..w[1]];
        v.iter_mut().for_each(|p| *p = p.max(0.0));
        let sum: f64 = v.iter().sum();
        if !(sum.is_finite() && sum > 0.0) {
            return Err(Error::NumericalFailure { step, player, sum });
        }
        v.iter_mut().for_each(|p| *p /= sum);
    }
    Ok(())
}

/// One classical Runge-Kutta step followed by simplex repair.
pub fn rk4_step(game: &Game, policy: &Policy, h: f64) -> Result<Policy> {
    policy.check_shape(game)?;
    policy.validate()?;
    let mut next = policy.clone();
    Integrator::new(game).step(&mut next.probs, h, 1)?;
    Ok(next)
}

/// Draws each player's vector uniformly from its simplex.
pub fn random_policy(action_counts: &[usize], seed: u64) -> Result<Policy> {
    crate::game::num_profiles(action_counts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_player = action_counts
        .iter()
        .map(|&c| {
            let draws: Vec<f64> = (0..c).map(|_| Exp1.sample(&mut rng)).collect();
            let total: f64 = draws.iter().sum();
            draws.into_iter().map(|d| d / total).collect()
        })
        .collect();
    Policy::new(per_player)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub step_size: f64,
    /// Steps with policy movement at or below this count toward convergence.
    pub beta_threshold: f64,
    /// Convergence requires more than this many consecutive quiet steps.
    pub patience_steps: usize,
    pub max_steps: usize,
    /// Record every `policy_stride`-th policy in the trace.
    pub policy_stride: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            step_size: 1e-2,
            beta_threshold: 1e-9,
            patience_steps: 1000,
            max_steps: 100_000,
            policy_stride: 10,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.step_size > 0.0
            && self.step_size.is_finite()
            && self.beta_threshold > 0.0
            && self.patience_steps > 0
            && self.max_steps > 0
            && self.policy_stride > 0;
        if positive {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "simulation parameters must be strictly positive: {self:?}"
            )))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    /// `(step, policy)` at step 0, every `policy_stride` steps, and the last step.
    pub policies: Vec<(usize, Policy)>,
    /// Policy movement after steps `1..=steps_run`.
    pub beta_series: Vec<f64>,
    /// Average reward after steps `1..=steps_run`.
    pub rho_series: Vec<f64>,
    pub converged: bool,
    pub steps_run: usize,
}

impl SimulationTrace {
    pub fn final_policy(&self) -> &Policy {
        &self.policies.last().expect("trace holds the start policy").1
    }

    pub fn final_rho(&self) -> Option<f64> {
        self.rho_series.last().copied()
    }
}

/// Integrates the dynamics of `game` from `start`, measuring rewards in
/// `reward_game`.
pub fn simulate(
    game: &Game,
    reward_game: &Game,
    start: &Policy,
    config: &SimulationConfig,
) -> Result<SimulationTrace> {
    config.validate()?;
    game.same_shape(reward_game)?;
    start.check_shape(game)?;
    start.validate()?;

    let reward = mean_utility(reward_game);
    let mut integrator = Integrator::new(game);
    let offsets = start.offsets.clone();
    let mut prev = start.probs.clone();
    let mut current = start.probs.clone();

    let mut policies = vec![(0, start.clone())];
    let mut beta_series = Vec::new();
    let mut rho_series = Vec::new();
    let mut quiet = 0usize;
    let mut converged = false;
    let mut steps_run = 0;

    for step in 1..=config.max_steps {
        integrator.step(&mut current, config.step_size, step)?;
        let beta = player_distance(&offsets, &current, &prev);
        let mut rho = 0.0;
        for_each_joint(reward_game, &offsets, &current, |idx, p| rho += reward[idx] * p);
        beta_series.push(beta);
        rho_series.push(rho);
        prev.copy_from_slice(&current);
        steps_run = step;

        quiet = if beta <= config.beta_threshold { quiet + 1 } else { 0 };
        if quiet > config.patience_steps {
            converged = true;
        }
        if step % config.policy_stride == 0 || converged || step == config.max_steps {
            policies.push((
                step,
                Policy {
                    probs: current.clone(),
                    offsets: offsets.clone(),
                },
            ));
        }
        if converged {
            break;
        }
    }

    Ok(SimulationTrace {
        policies,
        beta_series,
        rho_series,
        converged,
        steps_run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::normalize_rewards;

    fn pennies() -> Game {
        Game::bimatrix(&[vec![1., 0.], vec![0., 1.]], &[vec![0., 1.], vec![1., 0.]]).unwrap()
    }

    /// Brute-force field: both expectation sums enumerated separately.
    fn brute_field(game: &Game, policy: &Policy) -> Vec<Vec<f64>> {
        let n = game.num_players();
        let joint = |idx: usize, skip: Option<usize>| -> f64 {
            (0..n)
                .filter(|&j| Some(j) != skip)
                .map(|j| policy.player(j)[game.action_at(idx, j)])
                .product()
        };
        (0..n)
            .map(|i| {
                let u = game.utility(i);
                let mean: f64 = (0..game.num_profiles()).map(|a| u[a] * joint(a, None)).sum();
                (0..game.action_counts()[i])
                    .map(|k| {
                        let given: f64 = (0..game.num_profiles())
                            .filter(|&a| game.action_at(a, i) == k)
                            .map(|a| u[a] * joint(a, Some(i)))
                            .sum();
                        policy.player(i)[k] * (given - mean)
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn policy_validation() {
        assert!(Policy::new(vec![vec![0.5, 0.5], vec![1.0]]).is_ok());
        assert!(matches!(
            Policy::new(vec![vec![0.5, 0.6]]),
            Err(Error::InvalidPolicy { player: 0, .. })
        ));
        assert!(Policy::new(vec![vec![1.5, -0.5]]).is_err());
        assert!(Policy::new(vec![vec![]]).is_err());
        assert!(Policy::new(vec![]).is_err());
        let p: Policy = serde_json::from_str("[[0.25,0.75],[1.0]]").unwrap();
        assert_eq!(p.action_counts(), vec![2, 1]);
        assert!(serde_json::from_str::<Policy>("[[0.2,0.2]]").is_err());
    }

    #[test]
    fn vertices_are_rest_points() {
        let g = crate::game::random_game(&[3, 2, 2], 4).unwrap();
        for idx in 0..g.num_profiles() {
            let v = Policy::vertex(g.action_counts(), &g.profile_at(idx).unwrap()).unwrap();
            let f = replicator_field(&g, &v).unwrap();
            assert!(f.iter().flatten().all(|&d| d == 0.0));
            assert_eq!(rk4_step(&g, &v, 0.01).unwrap(), v);
        }
    }

    #[test]
    fn constant_game_has_zero_field() {
        let g = Game::new(2, vec![3, 2], vec![vec![2.0; 6]; 2]).unwrap();
        let p = random_policy(&[3, 2], 9).unwrap();
        assert!(replicator_field(&g, &p).unwrap().iter().flatten().all(|&d| d.abs() < 1e-15));
        let next = rk4_step(&g, &p, 0.01).unwrap();
        assert!(next.max_player_distance(&p) < 1e-15);
    }

    #[test]
    fn pennies_field() {
        let g = pennies();
        let f = replicator_field(&g, &Policy::uniform(&[2, 2])).unwrap();
        assert!(f.iter().flatten().all(|&d| d == 0.0));

        let p = Policy::new(vec![vec![0.6, 0.4], vec![0.45, 0.55]]).unwrap();
        let f = replicator_field(&g, &p).unwrap();
        let b = brute_field(&g, &p);
        for (x, y) in f.iter().flatten().zip(b.iter().flatten()) {
            assert!((x - y).abs() < 1e-15);
        }
        // both players drift toward their second action from here
        assert!(f[0][1] > 0.0);
        assert!(f[1][1] > 0.0);
    }

    #[test]
    fn field_matches_brute_force() {
        for seed in 0..20 {
            for shape in [&[3usize, 3][..], &[2, 2, 2]] {
                let g = normalize_rewards(&crate::game::random_game(shape, seed).unwrap());
                let p = random_policy(shape, seed + 100).unwrap();
                let f = replicator_field(&g, &p).unwrap();
                for (fi, bi) in f.iter().zip(brute_field(&g, &p)) {
                    for (x, y) in fi.iter().zip(bi) {
                        assert!((x - y).abs() < 1e-12);
                    }
                    assert!(fi.iter().sum::<f64>().abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let g = pennies();
        assert!(replicator_field(&g, &Policy::uniform(&[3, 2])).is_err());
        assert!(rk4_step(&g, &Policy::uniform(&[2]), 0.01).is_err());
    }

    #[test]
    fn random_policy_examples() {
        assert_eq!(random_policy(&[1], 3).unwrap().to_nested(), vec![vec![1.0]]);
        assert_eq!(random_policy(&[4, 3], 8).unwrap(), random_policy(&[4, 3], 8).unwrap());
        assert_ne!(random_policy(&[4, 3], 8).unwrap(), random_policy(&[4, 3], 9).unwrap());
    }

    #[test]
    fn constant_game_converges_after_patience() {
        let g = Game::new(2, vec![2, 2], vec![vec![0.0; 4]; 2]).unwrap();
        let cfg = SimulationConfig::default();
        let t = simulate(&g, &g, &random_policy(&[2, 2], 1).unwrap(), &cfg).unwrap();
        assert!(t.converged);
        assert_eq!(t.steps_run, cfg.patience_steps + 1);
        assert!(t.beta_series.iter().all(|&b| b == 0.0));
        assert_eq!(t.beta_series.len(), t.steps_run);
        assert_eq!(t.rho_series.len(), t.steps_run);
        assert_eq!(t.policies.first().unwrap().0, 0);
        assert_eq!(t.policies.last().unwrap().0, t.steps_run);
    }

    #[test]
    fn simulate_rejects_bad_input() {
        let g = pennies();
        let other = Game::new(2, vec![2, 3], vec![vec![0.0; 6]; 2]).unwrap();
        let start = Policy::uniform(&[2, 2]);
        let cfg = SimulationConfig::default();
        assert!(simulate(&g, &other, &start, &cfg).is_err());
        let bad = SimulationConfig {
            step_size: 0.0,
            ..cfg
        };
        assert!(matches!(simulate(&g, &g, &start, &bad), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn repair_reports_collapse() {
        let mut x = vec![-0.5, -0.5, 1.0];
        let err = repair(&[0, 2, 3], &mut x, 7);
        assert!(matches!(err, Err(Error::NumericalFailure { step: 7, player: 0, .. })));
    }

    #[test]
    fn expectations() {
        let g = pennies();
        let p = Policy::new(vec![vec![1.0, 0.0], vec![0.25, 0.75]]).unwrap();
        assert_eq!(average_reward(&g, &p).unwrap(), 0.5 * (0.25 + 0.75));
        assert_eq!(expected_value(&g, &[4., 0., 0., 0.], &p).unwrap(), 1.0);
    }
}
