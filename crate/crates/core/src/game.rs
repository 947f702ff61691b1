//! Finite normal-form games stored as flat utility tensors.
//!
//! Joint action profiles are indexed in mixed radix with player 0 as the most
//! significant digit: `index = sum_i actions[i] * prod_{j>i} action_counts[j]`.
//! The same layout is used by the JSON file format and every other module.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the generator behind [`random_game`] and the other seeded draws.
pub const GENERATOR: &str = "ChaCha8Rng";

/// One action per player.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Profile(pub Vec<usize>);

impl Profile {
    pub fn new(actions: Vec<usize>) -> Self {
        Profile(actions)
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for Profile {
    fn from(actions: Vec<usize>) -> Self {
        Profile(actions)
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

/// Number of joint profiles for a shape, rejecting empty action sets.
pub fn num_profiles(action_counts: &[usize]) -> Result<usize> {
    let mut size = 1usize;
    for (player, &count) in action_counts.iter().enumerate() {
        if count == 0 {
            return Err(Error::EmptyActionSet { player });
        }
        size = size
            .checked_mul(count)
            .ok_or_else(|| Error::InvalidConfig("number of profiles overflows usize".into()))?;
    }
    Ok(size)
}

fn strides_for(action_counts: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; action_counts.len()];
    for i in (0..action_counts.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * action_counts[i + 1];
    }
    strides
}

fn check_profile(actions: &[usize], action_counts: &[usize]) -> Result<()> {
    if actions.len() != action_counts.len() {
        return Err(Error::ProfileLength {
            expected: action_counts.len(),
            found: actions.len(),
        });
    }
    for (player, (&action, &count)) in actions.iter().zip(action_counts).enumerate() {
        if action >= count {
            return Err(Error::ActionOutOfRange {
                player,
                action,
                count,
            });
        }
    }
    Ok(())
}

/// Flat index of a profile, player 0 most significant.
pub fn profile_index(profile: &Profile, action_counts: &[usize]) -> Result<usize> {
    check_profile(&profile.0, action_counts)?;
    Ok(profile
        .0
        .iter()
        .zip(action_counts)
        .fold(0, |acc, (&a, &count)| acc * count + a))
}

/// Inverse of [`profile_index`].
pub fn profile_from_index(index: usize, action_counts: &[usize]) -> Result<Profile> {
    let size = num_profiles(action_counts)?;
    if index >= size {
        return Err(Error::IndexOutOfRange { index, size });
    }
    let mut actions = vec![0; action_counts.len()];
    let mut rest = index;
    for (slot, &count) in actions.iter_mut().zip(action_counts).rev() {
        *slot = rest % count;
        rest /= count;
    }
    Ok(Profile(actions))
}

#[derive(Serialize, Deserialize)]
struct GameFile {
    num_players: usize,
    action_counts: Vec<usize>,
    utilities: Vec<Vec<f64>>,
}

/// A finite game in normal form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GameFile", into = "GameFile")]
pub struct Game {
    action_counts: Vec<usize>,
    utilities: Vec<Vec<f64>>,
    strides: Vec<usize>,
    size: usize,
}

impl TryFrom<GameFile> for Game {
    type Error = Error;

    fn try_from(file: GameFile) -> Result<Self> {
        Game::new(file.num_players, file.action_counts, file.utilities)
    }
}

impl From<Game> for GameFile {
    fn from(game: Game) -> Self {
        GameFile {
            num_players: game.action_counts.len(),
            action_counts: game.action_counts,
            utilities: game.utilities,
        }
    }
}

impl Game {
    /// Validates and wraps a game. Utilities are stored as given.
    pub fn new(
        num_players: usize,
        action_counts: Vec<usize>,
        utilities: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if num_players == 0 {
            return Err(Error::NoPlayers);
        }
        if action_counts.len() != num_players {
            return Err(Error::ActionCountsLength {
                expected: num_players,
                found: action_counts.len(),
            });
        }
        let size = num_profiles(&action_counts)?;
        if utilities.len() != num_players {
            return Err(Error::TensorCount {
                expected: num_players,
                found: utilities.len(),
            });
        }
        for (player, tensor) in utilities.iter().enumerate() {
            if tensor.len() != size {
                return Err(Error::TensorLength {
                    player,
                    expected: size,
                    found: tensor.len(),
                });
            }
            if let Some(index) = tensor.iter().position(|u| !u.is_finite()) {
                return Err(Error::NonFinite { player, index });
            }
        }
        let strides = strides_for(&action_counts);
        Ok(Game {
            action_counts,
            utilities,
            strides,
            size,
        })
    }

    /// Game where every player receives `values`.
    pub fn common_interest(action_counts: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let n = action_counts.len();
        Game::new(n, action_counts, vec![values; n])
    }

    /// Two-player game from row-major payoff matrices.
    pub fn bimatrix(row: &[Vec<f64>], col: &[Vec<f64>]) -> Result<Self> {
        let rows = row.len();
        let cols = row.first().map_or(0, Vec::len);
        let flat = |m: &[Vec<f64>]| m.iter().flatten().copied().collect::<Vec<_>>();
        Game::new(2, vec![rows, cols], vec![flat(row), flat(col)])
    }

    pub fn num_players(&self) -> usize {
        self.action_counts.len()
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn num_profiles(&self) -> usize {
        self.size
    }

    pub fn utilities(&self) -> &[Vec<f64>] {
        &self.utilities
    }

    pub fn utility(&self, player: usize) -> &[f64] {
        &self.utilities[player]
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn index_of(&self, profile: &Profile) -> Result<usize> {
        profile_index(profile, &self.action_counts)
    }

    pub fn profile_at(&self, index: usize) -> Result<Profile> {
        profile_from_index(index, &self.action_counts)
    }

    /// Action of `player` in the profile with flat index `index`.
    #[inline]
    pub fn action_at(&self, index: usize, player: usize) -> usize {
        (index / self.strides[player]) % self.action_counts[player]
    }

    /// Flat index reached when `player` switches to `action` from `index`.
    #[inline]
    pub fn deviate(&self, index: usize, player: usize, action: usize) -> usize {
        let current = self.action_at(index, player);
        index - current * self.strides[player] + action * self.strides[player]
    }

    pub fn same_shape(&self, other: &Game) -> Result<()> {
        if self.action_counts != other.action_counts {
            return Err(Error::ShapeMismatch {
                left: self.action_counts.clone(),
                right: other.action_counts.clone(),
            });
        }
        Ok(())
    }

    /// Joint minimum and maximum over all players and profiles.
    pub fn utility_range(&self) -> (f64, f64) {
        self.utilities
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &u| {
                (lo.min(u), hi.max(u))
            })
    }

    /// Multiplies every utility by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Game> {
        let utilities = self
            .utilities
            .iter()
            .map(|t| t.iter().map(|u| u * factor).collect())
            .collect();
        Game::new(self.num_players(), self.action_counts.clone(), utilities)
    }

    pub fn from_json(text: &str) -> Result<Game> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Game> {
        Game::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Draws every utility independently and uniformly from `{1, ..., |A|}`.
///
/// Player 0's tensor is filled first, in flat index order, then player 1's,
/// and so on, all from one [`GENERATOR`] stream seeded with `seed`.
pub fn random_game(action_counts: &[usize], seed: u64) -> Result<Game> {
    if action_counts.is_empty() {
        return Err(Error::NoPlayers);
    }
    let size = num_profiles(action_counts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let utilities = (0..action_counts.len())
        .map(|_| {
            (0..size)
                .map(|_| rng.random_range(1..=size as u64) as f64)
                .collect()
        })
        .collect();
    Game::new(action_counts.len(), action_counts.to_vec(), utilities)
}

/// Jointly rescales all rewards to `[0, 1]`; constant games map to zero.
pub fn normalize_rewards(game: &Game) -> Game {
    let (lo, hi) = game.utility_range();
    let utilities = game
        .utilities
        .iter()
        .map(|tensor| {
            tensor
                .iter()
                .map(|&u| if lo < hi { (u - lo) / (hi - lo) } else { 0.0 })
                .collect()
        })
        .collect();
    Game {
        utilities,
        ..game.clone()
    }
}
