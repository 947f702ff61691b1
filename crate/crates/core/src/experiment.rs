//! Paired convergence experiments on random games.
//!
//! For every generated game the potentialized version is simulated first,
//! until convergence or `max_steps`. The original game then gets exactly as
//! many steps as the potentialized run used. Both arms start from normalized
//! rewards and measure average reward in the normalized original game.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{normalize_rewards, random_game, Game, GENERATOR};
use crate::potential::potentialized_game;
use crate::replicator::{random_policy, simulate, Policy, SimulationConfig};

/// How curves of different lengths are aligned before averaging.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// Finished runs contribute beta = 0 and their final rho at later steps.
    #[default]
    HoldFinal,
    /// Only runs still active at a step contribute to it.
    ActiveOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub shape: Vec<usize>,
    pub num_games: usize,
    pub master_seed: u64,
    pub sim_config: SimulationConfig,
    /// Draw the original arm's start policy separately instead of sharing it.
    pub independent_starts: bool,
    pub padding: Padding,
}

impl ExperimentSpec {
    pub fn new(shape: Vec<usize>, num_games: usize, master_seed: u64) -> Self {
        ExperimentSpec {
            shape,
            num_games,
            master_seed,
            sim_config: SimulationConfig::default(),
            independent_starts: false,
            padding: Padding::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_games == 0 {
            return Err(Error::InvalidConfig("num_games must be at least 1".into()));
        }
        crate::game::num_profiles(&self.shape)?;
        if self.shape.is_empty() {
            return Err(Error::NoPlayers);
        }
        self.sim_config.validate()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for `role` of game `index`: `splitmix64(master ^ splitmix64(4 * index + role))`.
pub fn derive_seed(master: u64, index: u64, role: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_mul(4).wrapping_add(role)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSeeds {
    pub game_seed: u64,
    pub start_seed: u64,
    /// Start seed of the original arm when starts are drawn independently.
    pub original_start_seed: Option<u64>,
}

impl PairSeeds {
    pub fn derive(master: u64, index: usize, independent_starts: bool) -> Self {
        let index = index as u64;
        PairSeeds {
            game_seed: derive_seed(master, index, 0),
            start_seed: derive_seed(master, index, 1),
            original_start_seed: independent_starts.then(|| derive_seed(master, index, 2)),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmCurves {
    pub beta: Vec<f64>,
    pub rho: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedResult {
    pub index: usize,
    pub seeds: Option<PairSeeds>,
    pub admits_ordinal_potential: bool,
    pub potentialized_converged: bool,
    pub potentialized_steps: usize,
    pub original_converged: bool,
    pub original_steps: usize,
    pub final_rho_potentialized: f64,
    pub final_rho_original: f64,
    #[serde(skip)]
    pub potentialized_curves: ArmCurves,
    #[serde(skip)]
    pub original_curves: ArmCurves,
}

/// Runs both arms on `game`. `original_start` defaults to `start`.
pub fn run_paired(
    game: &Game,
    start: &Policy,
    original_start: Option<&Policy>,
    config: &SimulationConfig,
) -> Result<PairedResult> {
    let original = normalize_rewards(game);
    let potentialized = normalize_rewards(&potentialized_game(game));

    let pot = simulate(&potentialized, &original, start, config)?;
    let matched = SimulationConfig {
        max_steps: pot.steps_run,
        ..config.clone()
    };
    let orig = simulate(&original, &original, original_start.unwrap_or(start), &matched)?;

    Ok(PairedResult {
        index: 0,
        seeds: None,
        admits_ordinal_potential: crate::graph::admits_ordinal_potential(game),
        potentialized_converged: pot.converged,
        potentialized_steps: pot.steps_run,
        original_converged: orig.converged,
        original_steps: orig.steps_run,
        final_rho_potentialized: pot.final_rho().unwrap_or(0.0),
        final_rho_original: orig.final_rho().unwrap_or(0.0),
        potentialized_curves: ArmCurves {
            beta: pot.beta_series,
            rho: pot.rho_series,
        },
        original_curves: ArmCurves {
            beta: orig.beta_series,
            rho: orig.rho_series,
        },
    })
}

/// Generates game `index` of `spec` and runs the pair on it.
pub fn run_paired_seeded(spec: &ExperimentSpec, index: usize) -> Result<PairedResult> {
    let seeds = PairSeeds::derive(spec.master_seed, index, spec.independent_starts);
    let game = random_game(&spec.shape, seeds.game_seed)?;
    let start = random_policy(&spec.shape, seeds.start_seed)?;
    let original_start = seeds
        .original_start_seed
        .map(|s| random_policy(&spec.shape, s))
        .transpose()?;
    let mut result = run_paired(&game, &start, original_start.as_ref(), &spec.sim_config)?;
    result.index = index;
    result.seeds = Some(seeds);
    Ok(result)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CurveStats {
    pub beta_mean: Vec<f64>,
    pub beta_std: Vec<f64>,
    pub rho_mean: Vec<f64>,
    pub rho_std: Vec<f64>,
}

impl CurveStats {
    pub fn len(&self) -> usize {
        self.beta_mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta_mean.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub converged: usize,
    pub convergence_rate: f64,
    pub mean_steps: f64,
    pub final_rho_mean: f64,
    pub final_rho_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub num_results: usize,
    pub potentialized: ArmSummary,
    pub original: ArmSummary,
    /// Potentialized over original final mean reward.
    pub rho_ratio: f64,
    /// Share of games that already had an ordinal potential.
    pub admissible_fraction: f64,
}

#[derive(Default)]
struct ArmAccumulator {
    beta_sum: Vec<f64>,
    beta_sq: Vec<f64>,
    rho_sum: Vec<f64>,
    rho_sq: Vec<f64>,
    active: Vec<usize>,
    // (length, final rho) of every run, for padding
    ends: Vec<(usize, f64)>,
    converged: usize,
    steps: Vec<usize>,
    final_rho: Vec<f64>,
}

fn grow(v: &mut Vec<f64>, len: usize) {
    if v.len() < len {
        v.resize(len, 0.0);
    }
}

impl ArmAccumulator {
    fn push(&mut self, curves: &ArmCurves, converged: bool, steps: usize, final_rho: f64) {
        let len = curves.beta.len();
        for v in [&mut self.beta_sum, &mut self.beta_sq, &mut self.rho_sum, &mut self.rho_sq] {
            grow(v, len);
        }
        if self.active.len() < len {
            self.active.resize(len, 0);
        }
        for (t, (&b, &r)) in curves.beta.iter().zip(&curves.rho).enumerate() {
            self.beta_sum[t] += b;
            self.beta_sq[t] += b * b;
            self.rho_sum[t] += r;
            self.rho_sq[t] += r * r;
            self.active[t] += 1;
        }
        self.ends.push((len, final_rho));
        self.converged += usize::from(converged);
        self.steps.push(steps);
        self.final_rho.push(final_rho);
    }

    fn finish(mut self, padding: Padding, horizon: usize) -> (ArmSummary, CurveStats) {
        let n = self.ends.len();
        for v in [&mut self.beta_sum, &mut self.beta_sq, &mut self.rho_sum, &mut self.rho_sq] {
            grow(v, horizon);
        }
        self.active.resize(horizon.max(self.active.len()), 0);
        if padding == Padding::HoldFinal {
            for &(len, rho) in &self.ends {
                for t in len..horizon {
                    self.rho_sum[t] += rho;
                    self.rho_sq[t] += rho * rho;
                }
            }
        }
        let count = |t: usize| match padding {
            Padding::HoldFinal => n,
            Padding::ActiveOnly => self.active[t],
        };
        let mut stats = CurveStats::default();
        for t in 0..horizon {
            let k = count(t);
            let (bm, bs) = mean_std(self.beta_sum[t], self.beta_sq[t], k);
            let (rm, rs) = mean_std(self.rho_sum[t], self.rho_sq[t], k);
            stats.beta_mean.push(bm);
            stats.beta_std.push(bs);
            stats.rho_mean.push(rm);
            stats.rho_std.push(rs);
        }
        let rho_sum: f64 = self.final_rho.iter().sum();
        let rho_sq: f64 = self.final_rho.iter().map(|r| r * r).sum();
        let (final_rho_mean, final_rho_std) = mean_std(rho_sum, rho_sq, n);
        let summary = ArmSummary {
            converged: self.converged,
            convergence_rate: self.converged as f64 / n as f64,
            mean_steps: self.steps.iter().sum::<usize>() as f64 / n as f64,
            final_rho_mean,
            final_rho_std,
        };
        (summary, stats)
    }
}

/// Mean and empirical (n - 1) standard deviation from running sums.
fn mean_std(sum: f64, sum_sq: f64, n: usize) -> (f64, f64) {
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = sum / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = (sum_sq - n as f64 * mean * mean) / (n as f64 - 1.0);
    (mean, var.max(0.0).sqrt())
}

/// Streaming fold over paired results; curves can be dropped after `push`.
#[derive(Default)]
pub struct Aggregator {
    padding: Padding,
    potentialized: ArmAccumulator,
    original: ArmAccumulator,
    admissible: usize,
    horizon: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub potentialized: CurveStats,
    pub original: CurveStats,
}

impl Curves {
    /// Fraction of steps at or after `from_step` (1-based) where the
    /// potentialized mean beta is strictly below the original one.
    pub fn potentialized_beta_below_fraction(&self, from_step: usize) -> f64 {
        let start = from_step.saturating_sub(1);
        let pairs: Vec<_> = self
            .potentialized
            .beta_mean
            .iter()
            .zip(&self.original.beta_mean)
            .skip(start)
            .collect();
        if pairs.is_empty() {
            return f64::NAN;
        }
        pairs.iter().filter(|(p, o)| p < o).count() as f64 / pairs.len() as f64
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "step",
            "potentialized_beta_mean",
            "potentialized_beta_std",
            "potentialized_rho_mean",
            "potentialized_rho_std",
            "original_beta_mean",
            "original_beta_std",
            "original_rho_mean",
            "original_rho_std",
        ])?;
        let (p, o) = (&self.potentialized, &self.original);
        for t in 0..p.len() {
            let row = [
                p.beta_mean[t],
                p.beta_std[t],
                p.rho_mean[t],
                p.rho_std[t],
                o.beta_mean[t],
                o.beta_std[t],
                o.rho_mean[t],
                o.rho_std[t],
            ];
            let mut record = vec![(t + 1).to_string()];
            record.extend(row.iter().map(f64::to_string));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

impl Aggregator {
    pub fn new(padding: Padding) -> Self {
        Aggregator {
            padding,
            ..Default::default()
        }
    }

    pub fn push(&mut self, r: &PairedResult) {
        self.potentialized.push(
            &r.potentialized_curves,
            r.potentialized_converged,
            r.potentialized_steps,
            r.final_rho_potentialized,
        );
        self.original.push(
            &r.original_curves,
            r.original_converged,
            r.original_steps,
            r.final_rho_original,
        );
        self.admissible += usize::from(r.admits_ordinal_potential);
        self.horizon = self
            .horizon
            .max(r.potentialized_curves.beta.len())
            .max(r.original_curves.beta.len());
    }

    pub fn finish(self) -> Result<(Summary, Curves)> {
        let n = self.potentialized.ends.len();
        if n == 0 {
            return Err(Error::EmptyResults);
        }
        let (pot, pot_curves) = self.potentialized.finish(self.padding, self.horizon);
        let (orig, orig_curves) = self.original.finish(self.padding, self.horizon);
        let summary = Summary {
            num_results: n,
            rho_ratio: pot.final_rho_mean / orig.final_rho_mean,
            potentialized: pot,
            original: orig,
            admissible_fraction: self.admissible as f64 / n as f64,
        };
        Ok((
            summary,
            Curves {
                potentialized: pot_curves,
                original: orig_curves,
            },
        ))
    }
}

pub fn aggregate(results: &[PairedResult], padding: Padding) -> Result<(Summary, Curves)> {
    let mut agg = Aggregator::new(padding);
    results.iter().for_each(|r| agg.push(r));
    agg.finish()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub index: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub generator: String,
    pub seed_derivation: String,
    pub summary: Summary,
    pub excluded: Vec<Exclusion>,
}

pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub curves: Curves,
    /// Per-game results with curves stripped.
    pub results: Vec<PairedResult>,
}

impl ExperimentOutput {
    /// Writes `summary.json`, `curves.csv`, and `results.jsonl` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(
            dir.join("summary.json"),
            serde_json::to_string_pretty(&self.report)?,
        )?;
        self.curves.write_csv(dir.join("curves.csv"))?;
        let mut jsonl = BufWriter::new(File::create(dir.join("results.jsonl"))?);
        for r in &self.results {
            serde_json::to_writer(&mut jsonl, r)?;
            jsonl.write_all(b"\n")?;
        }
        jsonl.flush()?;
        Ok(())
    }
}

/// Runs every game of `spec` in parallel batches, folding results in index
/// order so the output depends only on `spec`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let batch = rayon::current_num_threads().max(1) * 4;
    let mut agg = Aggregator::new(spec.padding);
    let mut results = Vec::with_capacity(spec.num_games);
    let mut excluded = Vec::new();

    for start in (0..spec.num_games).step_by(batch) {
        let end = (start + batch).min(spec.num_games);
        let outcomes: Vec<_> = (start..end)
            .into_par_iter()
            .map(|i| (i, run_paired_seeded(spec, i)))
            .collect();
        for (index, outcome) in outcomes {
            match outcome {
                Ok(mut r) => {
                    agg.push(&r);
                    r.potentialized_curves = ArmCurves::default();
                    r.original_curves = ArmCurves::default();
                    results.push(r);
                }
                Err(e) => {
                    warn!("game {index} excluded: {e}");
                    excluded.push(Exclusion {
                        index,
                        error: e.to_string(),
                    });
                }
            }
        }
        info!("{end}/{} games done", spec.num_games);
    }

    let (summary, curves) = agg.finish()?;
    Ok(ExperimentOutput {
        report: ExperimentReport {
            spec: spec.clone(),
            generator: GENERATOR.to_string(),
            seed_derivation: "splitmix64(master ^ splitmix64(4 * index + role)), \
                              role 0 = game, 1 = start, 2 = independent original start"
                .to_string(),
            summary,
            excluded,
        },
        curves,
        results,
    })
}
