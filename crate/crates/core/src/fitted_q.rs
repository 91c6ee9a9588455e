//! Neural fitted-Q solver over belief-state transitions.
//!
//! Each outer iteration regenerates the pattern set from the frozen previous
//! network (one pattern per transition triple, target = reward plus the
//! discounted, transition-weighted value of sampled successor beliefs),
//! shuffles it, and runs stochastic gradient descent on the squared error.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::TransitionTriple;
use crate::error::{Error, Result};
use crate::pmf::{belief, BeliefState, FactorModel};
use crate::transition::{tau, LogisticModel};

/// Network parameters initialize uniformly in this symmetric range.
const INIT_SCALE: f64 = 0.05;

/// One-hidden-layer rectifier network mapping a concatenated belief pair to
/// a scalar value.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    input_dim: usize,
    hidden_dim: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
}

impl QNetwork {
    pub fn init(input_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |len: usize| -> Vec<f64> {
            (0..len)
                .map(|_| rng.gen_range(-INIT_SCALE..INIT_SCALE))
                .collect()
        };
        let w1 = draw(hidden_dim * input_dim);
        let b1 = draw(hidden_dim);
        let w2 = draw(hidden_dim);
        let b2 = 0.0;
        Self {
            input_dim,
            hidden_dim,
            w1,
            b1,
            w2,
            b2,
        }
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            w1: vec![0.0; hidden_dim * input_dim],
            b1: vec![0.0; hidden_dim],
            w2: vec![0.0; hidden_dim],
            b2: 0.0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim {
            return Err(Error::Shape(format!(
                "network expects input dim {}, got {}",
                self.input_dim,
                x.len()
            )));
        }
        Ok(self.forward_slices(x, &[]))
    }

    /// Forward pass over the concatenation of two slices; dimensions must
    /// have been checked by the caller.
    fn forward_slices(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len() + b.len(), self.input_dim);
        let mut out = self.b2;
        for i in 0..self.hidden_dim {
            let row = &self.w1[i * self.input_dim..(i + 1) * self.input_dim];
            let mut z = self.b1[i];
            for (w, x) in row[..a.len()].iter().zip(a) {
                z += w * x;
            }
            for (w, x) in row[a.len()..].iter().zip(b) {
                z += w * x;
            }
            if z > 0.0 {
                out += self.w2[i] * z;
            }
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    /// Parameters flattened as w1, b1, w2, b2.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.n_params());
        flat.extend_from_slice(&self.w1);
        flat.extend_from_slice(&self.b1);
        flat.extend_from_slice(&self.w2);
        flat.push(self.b2);
        flat
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                flat.len()
            )));
        }
        let (w1, rest) = flat.split_at(self.w1.len());
        let (b1, rest) = rest.split_at(self.b1.len());
        let (w2, b2) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(w1);
        self.b1.copy_from_slice(b1);
        self.w2.copy_from_slice(w2);
        self.b2 = b2[0];
        Ok(())
    }

    fn params_finite(&self) -> bool {
        self.w1.iter().all(|v| v.is_finite())
            && self.b1.iter().all(|v| v.is_finite())
            && self.w2.iter().all(|v| v.is_finite())
            && self.b2.is_finite()
    }

    /// Text dump: `input_dim hidden_dim` header, W1 rows, then b1, w2 and b2
    /// lines.
    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "{} {}", self.input_dim, self.hidden_dim)?;
        for row in self.w1.chunks(self.input_dim) {
            writeln!(out, "{}", join(row))?;
        }
        writeln!(out, "{}", join(&self.b1))?;
        writeln!(out, "{}", join(&self.w2))?;
        writeln!(out, "{}", self.b2)?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input
            .lines()
            .map(|l| l.map_err(Error::from))
            .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty() || s.trim_start().starts_with('#')));
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty network dump".into()))??;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::Parse("bad network header".into())))
            .collect::<Result<_>>()?;
        if dims.len() != 2 {
            return Err(Error::Parse("network header needs 2 fields".into()));
        }
        let (input_dim, hidden_dim) = (dims[0], dims[1]);
        let mut parse_row = |expected: usize| -> Result<Vec<f64>> {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse("network dump truncated".into()))??;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| Error::Parse("bad weight".into())))
                .collect::<Result<_>>()?;
            if row.len() != expected {
                return Err(Error::Parse(format!(
                    "expected {expected} weights per row, got {}",
                    row.len()
                )));
            }
            Ok(row)
        };
        let mut w1 = Vec::with_capacity(hidden_dim * input_dim);
        for _ in 0..hidden_dim {
            w1.extend(parse_row(input_dim)?);
        }
        let b1 = parse_row(hidden_dim)?;
        let w2 = parse_row(hidden_dim)?;
        let b2 = parse_row(1)?[0];
        Ok(Self {
            input_dim,
            hidden_dim,
            w1,
            b1,
            w2,
            b2,
        })
    }
}

fn join(row: &[f64]) -> String {
    row.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Value of the transition `<b, b_prime>` under `net`.
pub fn q_value(net: &QNetwork, b: &BeliefState, b_prime: &BeliefState) -> Result<f64> {
    if b.dim() + b_prime.dim() != net.input_dim {
        return Err(Error::Shape(format!(
            "belief pair dim {} + {} does not match network input {}",
            b.dim(),
            b_prime.dim(),
            net.input_dim
        )));
    }
    Ok(net.forward_slices(&b.vector, &b_prime.vector))
}

/// One regression example: the concatenated belief pair and its Bellman
/// target.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    pub input: Vec<f64>,
    pub target: f64,
}

/// Settings for the fitted-Q loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QTrainConfig {
    pub gamma: f64,
    /// Outer iterations (pattern regeneration rounds).
    pub iterations: usize,
    pub epochs_per_iteration: usize,
    pub learning_rate: f64,
    pub hidden_dim: usize,
    /// Successor beliefs sampled per pattern for the Bellman expectation.
    pub successor_samples: usize,
    /// Emit a diagnostics checkpoint every this many training samples.
    pub diagnostic_interval: u64,
    pub seed: u64,
}

impl Default for QTrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            iterations: 12,
            epochs_per_iteration: 3,
            learning_rate: 0.005,
            hidden_dim: 64,
            successor_samples: 16,
            diagnostic_interval: 10_000,
            seed: 0,
        }
    }
}

impl QTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma must be in [0, 1], got {}", self.gamma)));
        }
        if self.epochs_per_iteration == 0 {
            return Err(Error::Config("epochs_per_iteration must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if self.hidden_dim == 0 {
            return Err(Error::Config("hidden_dim must be >= 1".into()));
        }
        if self.successor_samples == 0 {
            return Err(Error::Config("successor_samples must be >= 1".into()));
        }
        if self.diagnostic_interval == 0 {
            return Err(Error::Config("diagnostic_interval must be >= 1".into()));
        }
        Ok(())
    }
}

/// Everything pattern generation needs: the triples, a factor model per
/// window, the transition model, one precomputed reward per triple, and the
/// observed pairs of each window to sample successors from.
pub struct PatternSource<'a> {
    pub triples: &'a [TransitionTriple],
    pub models: &'a BTreeMap<usize, FactorModel>,
    pub transition: &'a LogisticModel,
    pub rewards: &'a [f64],
    pub successor_pools: &'a BTreeMap<usize, Vec<(u32, u32)>>,
}

impl PatternSource<'_> {
    fn validate(&self) -> Result<()> {
        if self.triples.is_empty() {
            return Err(Error::EmptyData("no transition triples".into()));
        }
        if self.rewards.len() != self.triples.len() {
            return Err(Error::Shape(format!(
                "{} rewards for {} triples",
                self.rewards.len(),
                self.triples.len()
            )));
        }
        let mut dims = self.models.values().map(|m| m.latent_dim());
        let first = dims
            .next()
            .ok_or_else(|| Error::State("no factor models".into()))?;
        if dims.any(|k| k != first) {
            return Err(Error::State("factor models disagree on latent dim".into()));
        }
        Ok(())
    }

    /// Network input dimension implied by the factor models (`4k`).
    pub fn input_dim(&self) -> Result<usize> {
        let model = self
            .models
            .values()
            .next()
            .ok_or_else(|| Error::State("no factor models".into()))?;
        Ok(4 * model.latent_dim())
    }
}

/// SplitMix64 finalizer over combined stream identifiers; used to derive
/// independent per-pattern random streams.
fn mix_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(stream)
        .wrapping_mul(0xbf58_476d_1ce4_e5b9)
        .wrapping_add(index);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const STREAM_INIT: u64 = 1;
const STREAM_PATTERNS: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;
const STREAM_TRAIN: u64 = 4;

/// Generates the pattern set for one iteration from the frozen `q_prev`.
pub fn generate_patterns(
    src: &PatternSource,
    q_prev: &QNetwork,
    cfg: &QTrainConfig,
    iteration: usize,
) -> Result<Vec<Pattern>> {
    Ok(generate_patterns_with_max_q(src, q_prev, cfg, iteration)?.0)
}

/// As [`generate_patterns`], additionally returning the maximum successor
/// value seen per pattern (0 for terminal patterns) for stability
/// diagnostics.
pub fn generate_patterns_with_max_q(
    src: &PatternSource,
    q_prev: &QNetwork,
    cfg: &QTrainConfig,
    iteration: usize,
) -> Result<(Vec<Pattern>, Vec<f64>)> {
    src.validate()?;
    cfg.validate()?;
    let generated: Vec<(Pattern, f64)> = src
        .triples
        .par_iter()
        .enumerate()
        .map(|(idx, triple)| generate_one(src, q_prev, cfg, iteration, idx, triple))
        .collect::<Result<_>>()?;
    Ok(generated.into_iter().unzip())
}

fn generate_one(
    src: &PatternSource,
    q_prev: &QNetwork,
    cfg: &QTrainConfig,
    iteration: usize,
    idx: usize,
    triple: &TransitionTriple,
) -> Result<(Pattern, f64)> {
    let model_before = src
        .models
        .get(&triple.o_window)
        .ok_or_else(|| Error::State(format!("no factor model for window {}", triple.o_window)))?;
    let model_after = src.models.get(&triple.o_next_window).ok_or_else(|| {
        Error::State(format!(
            "no factor model for window {}",
            triple.o_next_window
        ))
    })?;
    let b = belief(model_before, triple.user_id, triple.item_id)?;
    let b_prime = belief(model_after, triple.user_id, triple.item_id)?;
    let mut input = Vec::with_capacity(b.dim() + b_prime.dim());
    input.extend_from_slice(&b.vector);
    input.extend_from_slice(&b_prime.vector);

    let reward = src.rewards[idx];
    let successor_window = triple.o_next_window + 1;
    let pool = src
        .successor_pools
        .get(&successor_window)
        .filter(|pool| !pool.is_empty());

    // Terminal when no successor pool exists, and skipped entirely at
    // gamma = 0 so the reward passes through bit-exactly.
    let (target, max_q) = match pool {
        Some(pool) if cfg.gamma > 0.0 => {
            let successor_model = src.models.get(&successor_window).ok_or_else(|| {
                Error::State(format!("no factor model for window {successor_window}"))
            })?;
            let mut rng =
                ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, STREAM_PATTERNS, (iteration as u64) << 32 | idx as u64));
            // Distinct draws; a pool smaller than the sample budget is used
            // whole.
            let n_samples = cfg.successor_samples.min(pool.len());
            let picks = rand::seq::index::sample(&mut rng, pool.len(), n_samples);
            let mut weights = Vec::with_capacity(n_samples);
            let mut values = Vec::with_capacity(n_samples);
            let mut max_q = f64::NEG_INFINITY;
            for pick in picks {
                let (user, item) = pool[pick];
                let successor = belief(successor_model, user, item)?;
                weights.push(tau(src.transition, &b_prime, &successor)?);
                let q = q_value(q_prev, &b_prime, &successor)?;
                values.push(q);
                max_q = max_q.max(q);
            }
            let total: f64 = weights.iter().sum();
            let expectation: f64 = weights
                .iter()
                .zip(&values)
                .map(|(w, q)| (w / total) * q)
                .sum();
            (reward + cfg.gamma * expectation, max_q)
        }
        _ => (reward, 0.0),
    };
    if !target.is_finite() {
        return Err(Error::Divergence(format!(
            "non-finite target for triple {idx}"
        )));
    }
    Ok((Pattern { input, target }, max_q))
}

fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates.
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    order
}

/// Deterministic seeded shuffle of a pattern set.
pub fn shuffle_patterns(patterns: Vec<Pattern>, seed: u64) -> Vec<Pattern> {
    let order = permutation(patterns.len(), seed);
    apply_permutation(patterns, &order)
}

fn apply_permutation<T>(items: Vec<T>, order: &[usize]) -> Vec<T> {
    let mut slots: Vec<Option<T>> = items.into_iter().map(Some).collect();
    order.iter().map(|&i| slots[i].take().unwrap()).collect()
}

/// Runs seeded SGD epochs over the patterns, invoking `on_sample` with the
/// pattern index after every step.
fn sgd_epochs(
    net: &mut QNetwork,
    patterns: &[Pattern],
    epochs: usize,
    learning_rate: f64,
    seed: u64,
    mut on_sample: impl FnMut(usize, &QNetwork),
) -> Result<()> {
    let mut hidden = vec![0.0; net.hidden_dim];
    for epoch in 0..epochs {
        let order = permutation(patterns.len(), mix_seed(seed, STREAM_TRAIN, epoch as u64));
        for &idx in &order {
            let pattern = &patterns[idx];
            if pattern.input.len() != net.input_dim {
                return Err(Error::Shape(format!(
                    "pattern input dim {} does not match network input {}",
                    pattern.input.len(),
                    net.input_dim
                )));
            }
            let x = &pattern.input;
            let mut pred = net.b2;
            for i in 0..net.hidden_dim {
                let row = &net.w1[i * net.input_dim..(i + 1) * net.input_dim];
                let mut z = net.b1[i];
                for (w, xi) in row.iter().zip(x) {
                    z += w * xi;
                }
                hidden[i] = z;
                if z > 0.0 {
                    pred += net.w2[i] * z;
                }
            }
            let err2 = 2.0 * (pred - pattern.target);
            for i in 0..net.hidden_dim {
                let z = hidden[i];
                let h = if z > 0.0 { z } else { 0.0 };
                // dz uses the pre-update w2.
                let dz = if z > 0.0 { err2 * net.w2[i] } else { 0.0 };
                net.w2[i] -= learning_rate * err2 * h;
                if dz != 0.0 {
                    net.b1[i] -= learning_rate * dz;
                    let row = &mut net.w1[i * net.input_dim..(i + 1) * net.input_dim];
                    for (w, xi) in row.iter_mut().zip(x) {
                        *w -= learning_rate * dz * xi;
                    }
                }
            }
            net.b2 -= learning_rate * err2;
            on_sample(idx, net);
        }
        if !net.params_finite() {
            return Err(Error::Divergence(format!(
                "non-finite network parameters after epoch {epoch}"
            )));
        }
    }
    Ok(())
}

/// Trains a copy of `start` on the pattern set and returns it.
pub fn train_network(
    start: &QNetwork,
    patterns: &[Pattern],
    cfg: &QTrainConfig,
) -> Result<QNetwork> {
    cfg.validate()?;
    if patterns.is_empty() {
        return Err(Error::EmptyData("no patterns to train on".into()));
    }
    let mut net = start.clone();
    sgd_epochs(
        &mut net,
        patterns,
        cfg.epochs_per_iteration,
        cfg.learning_rate,
        cfg.seed,
        |_, _| {},
    )?;
    Ok(net)
}

/// Sum of squared errors of `net` on the patterns.
pub fn q_loss(net: &QNetwork, patterns: &[Pattern]) -> f64 {
    patterns
        .iter()
        .map(|p| {
            let err = net.forward_slices(&p.input, &[]) - p.target;
            err * err
        })
        .sum()
}

/// Analytic gradient of [`q_loss`], flattened in [`QNetwork::params_flat`]
/// order.
pub fn q_loss_gradient(net: &QNetwork, patterns: &[Pattern]) -> Vec<f64> {
    let mut gw1 = vec![0.0; net.w1.len()];
    let mut gb1 = vec![0.0; net.b1.len()];
    let mut gw2 = vec![0.0; net.w2.len()];
    let mut gb2 = 0.0;
    for pattern in patterns {
        let x = &pattern.input;
        let mut pred = net.b2;
        let mut z_buf = vec![0.0; net.hidden_dim];
        for i in 0..net.hidden_dim {
            let row = &net.w1[i * net.input_dim..(i + 1) * net.input_dim];
            let mut z = net.b1[i];
            for (w, xi) in row.iter().zip(x) {
                z += w * xi;
            }
            z_buf[i] = z;
            if z > 0.0 {
                pred += net.w2[i] * z;
            }
        }
        let err2 = 2.0 * (pred - pattern.target);
        gb2 += err2;
        for i in 0..net.hidden_dim {
            let z = z_buf[i];
            if z > 0.0 {
                gw2[i] += err2 * z;
                let dz = err2 * net.w2[i];
                gb1[i] += dz;
                for (g, xi) in gw1[i * net.input_dim..(i + 1) * net.input_dim]
                    .iter_mut()
                    .zip(x)
                {
                    *g += dz * xi;
                }
            }
        }
    }
    let mut flat = Vec::with_capacity(net.n_params());
    flat.extend(gw1);
    flat.extend(gb1);
    flat.extend(gw2);
    flat.push(gb2);
    flat
}

/// One diagnostics checkpoint, emitted every `diagnostic_interval` training
/// samples and at every iteration boundary. Reward and max-Q are cumulative
/// means over all samples presented so far.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointRow {
    pub iteration: usize,
    pub samples_seen: u64,
    pub avg_reward: f64,
    pub avg_max_q: f64,
    pub holdout_rmse: f64,
}

/// Per-iteration summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRow {
    pub iteration: usize,
    pub holdout_rmse: f64,
    pub n_patterns: usize,
    pub mean_target: f64,
    pub max_abs_target: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct QDiagnostics {
    pub checkpoints: Vec<CheckpointRow>,
    pub iterations: Vec<IterationRow>,
}

/// Runs the full fitted-Q loop: generate patterns from the frozen previous
/// network, shuffle, train, repeat. `holdout` (when given) is evaluated on
/// the freshly trained network after every iteration and its result carried
/// into the diagnostics rows.
pub fn fitted_q_loop(
    src: &PatternSource,
    cfg: &QTrainConfig,
    holdout: Option<&dyn Fn(&QNetwork) -> f64>,
) -> Result<(QNetwork, QDiagnostics)> {
    cfg.validate()?;
    src.validate()?;
    let input_dim = src.input_dim()?;
    let mut net = QNetwork::init(input_dim, cfg.hidden_dim, mix_seed(cfg.seed, STREAM_INIT, 0));
    let mut diagnostics = QDiagnostics::default();
    if cfg.iterations == 0 {
        return Ok((net, diagnostics));
    }

    let bounded_rewards = src.rewards.iter().all(|&r| r > 0.0 && r <= 0.5);
    let target_bound = if cfg.gamma < 1.0 {
        0.5 / (1.0 - cfg.gamma)
    } else {
        f64::INFINITY
    };

    let mut latest_holdout = match holdout {
        Some(eval) => eval(&net),
        None => f64::NAN,
    };
    let mut samples_seen: u64 = 0;
    let mut reward_sum = 0.0;
    let mut max_q_sum = 0.0;

    for iteration in 1..=cfg.iterations {
        let (patterns, max_qs) = generate_patterns_with_max_q(src, &net, cfg, iteration)?;
        let order = permutation(
            patterns.len(),
            mix_seed(cfg.seed, STREAM_SHUFFLE, iteration as u64),
        );
        let patterns = apply_permutation(patterns, &order);
        let max_qs = apply_permutation(max_qs, &order);
        let rewards: Vec<f64> = order.iter().map(|&i| src.rewards[i]).collect();

        let mean_target = patterns.iter().map(|p| p.target).sum::<f64>() / patterns.len() as f64;
        let max_abs_target = patterns
            .iter()
            .map(|p| p.target.abs())
            .fold(0.0, f64::max);
        if bounded_rewards {
            debug_assert!(
                max_abs_target <= target_bound + 1e-9,
                "iteration {iteration}: target {max_abs_target} exceeds bound {target_bound}"
            );
        }

        sgd_epochs(
            &mut net,
            &patterns,
            cfg.epochs_per_iteration,
            cfg.learning_rate,
            mix_seed(cfg.seed, STREAM_TRAIN, iteration as u64),
            |idx, _| {
                samples_seen += 1;
                reward_sum += rewards[idx];
                max_q_sum += max_qs[idx];
                if samples_seen % cfg.diagnostic_interval == 0 {
                    diagnostics.checkpoints.push(CheckpointRow {
                        iteration,
                        samples_seen,
                        avg_reward: reward_sum / samples_seen as f64,
                        avg_max_q: max_q_sum / samples_seen as f64,
                        holdout_rmse: latest_holdout,
                    });
                }
            },
        )?;

        if let Some(eval) = holdout {
            latest_holdout = eval(&net);
        }
        diagnostics.checkpoints.push(CheckpointRow {
            iteration,
            samples_seen,
            avg_reward: reward_sum / samples_seen as f64,
            avg_max_q: max_q_sum / samples_seen as f64,
            holdout_rmse: latest_holdout,
        });
        diagnostics.iterations.push(IterationRow {
            iteration,
            holdout_rmse: latest_holdout,
            n_patterns: patterns.len(),
            mean_target,
            max_abs_target,
        });
    }
    Ok((net, diagnostics))
}
