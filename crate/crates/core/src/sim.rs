//! Synthetic drifting-preference world and the recurrent
//! train-recommend-collect-retrain loop, for measuring how retraining
//! strategies degrade when feedback is positive-only and interests drift.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::{derive_seed, GroundTruth};
use crate::data::{MatrixDims, ObservationMatrix, RatingScale};
use crate::error::{Error, Result};
use crate::fitted_q::QTrainConfig;
use crate::pipeline::{prepare_stack, run_q, StackOptions};
use crate::pmf::{fit_pmf, FactorModel, PmfHyperparams};
use crate::policy::generate_candidates;
use crate::reward::RewardConfig;
use crate::transition::TransitionHyper;

/// Ground-truth world: latent user and item factors, observation noise, a
/// variance-preserving drift on user interests, and a positive-feedback
/// threshold.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    n_users: u32,
    n_items: u32,
    k_true: usize,
    u_true: Vec<f64>,
    v_true: Vec<f64>,
    pub noise_sd: f64,
    pub drift_rate: f64,
    pub accept_threshold: f64,
    pub scale: RatingScale,
    factor_sd: f64,
    rng: ChaCha8Rng,
}

/// Seeded world on the default 5-star scale.
pub fn make_world(
    n_users: u32,
    n_items: u32,
    k_true: usize,
    noise_sd: f64,
    drift_rate: f64,
    seed: u64,
) -> Result<SyntheticWorld> {
    make_world_scaled(
        n_users,
        n_items,
        k_true,
        noise_sd,
        drift_rate,
        seed,
        RatingScale::five_star(),
    )
}

/// Seeded world on an explicit rating scale. Factor variance is chosen so
/// the latent affinities span about half the scale around its midpoint.
pub fn make_world_scaled(
    n_users: u32,
    n_items: u32,
    k_true: usize,
    noise_sd: f64,
    drift_rate: f64,
    seed: u64,
    scale: RatingScale,
) -> Result<SyntheticWorld> {
    if n_users == 0 || n_items == 0 || k_true == 0 {
        return Err(Error::Config("world dimensions must be >= 1".into()));
    }
    if noise_sd < 0.0 {
        return Err(Error::Config("noise_sd must be >= 0".into()));
    }
    if !(0.0..=1.0).contains(&drift_rate) {
        return Err(Error::Config("drift_rate must be in [0, 1]".into()));
    }
    // Entries ~ N(0, s^2) give affinities with variance k s^4; aim the
    // affinity standard deviation at a quarter of the scale range.
    let target_sd = scale.range() / 4.0;
    let factor_sd = target_sd.sqrt() / (k_true as f64).powf(0.25);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |len: usize| -> Vec<f64> {
        (0..len)
            .map(|_| factor_sd * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    let u_true = draw(n_users as usize * k_true);
    let v_true = draw(n_items as usize * k_true);
    Ok(SyntheticWorld {
        n_users,
        n_items,
        k_true,
        u_true,
        v_true,
        noise_sd,
        drift_rate,
        accept_threshold: f64::NEG_INFINITY,
        scale,
        factor_sd,
        rng,
    })
}

impl SyntheticWorld {
    pub fn with_accept_threshold(mut self, threshold: f64) -> Self {
        self.accept_threshold = threshold;
        self
    }

    /// Replaces the latent factors; for handcrafted deterministic worlds.
    pub fn with_true_factors(mut self, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != self.n_users as usize * self.k_true
            || v.len() != self.n_items as usize * self.k_true
        {
            return Err(Error::Shape("factor lengths do not match world dims".into()));
        }
        self.u_true = u;
        self.v_true = v;
        Ok(self)
    }

    pub fn dims(&self) -> MatrixDims {
        MatrixDims {
            n_users: self.n_users,
            n_items: self.n_items,
        }
    }

    fn user_row(&self, user_id: u32) -> &[f64] {
        let start = (user_id as usize - 1) * self.k_true;
        &self.u_true[start..start + self.k_true]
    }

    fn item_row(&self, item_id: u32) -> &[f64] {
        let start = (item_id as usize - 1) * self.k_true;
        &self.v_true[start..start + self.k_true]
    }

    /// Latent affinity of a pair, before midpoint shift and clamping.
    pub fn true_affinity(&self, user_id: u32, item_id: u32) -> f64 {
        self.user_row(user_id)
            .iter()
            .zip(self.item_row(item_id))
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Current true rating: the affinity shifted to the scale midpoint and
    /// clamped to the scale.
    pub fn true_rating(&self, user_id: u32, item_id: u32) -> f64 {
        self.scale
            .clip(self.scale.midpoint() + self.true_affinity(user_id, item_id))
    }

    /// One noisy, clamped observation of a pair.
    pub fn observe(&mut self, user_id: u32, item_id: u32) -> f64 {
        let noise = if self.noise_sd > 0.0 {
            self.noise_sd * self.rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        self.scale.clip(self.true_rating(user_id, item_id) + noise)
    }

    /// Empirical variance of the user-factor entries.
    pub fn user_factor_variance(&self) -> f64 {
        let n = self.u_true.len() as f64;
        let mean: f64 = self.u_true.iter().sum::<f64>() / n;
        self.u_true.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
    }

    /// The variance the drift process preserves.
    pub fn stationary_factor_variance(&self) -> f64 {
        self.factor_sd * self.factor_sd
    }
}

/// Variance-preserving random-walk step on the user factors; item factors
/// stay fixed.
pub fn drift_step(world: &mut SyntheticWorld) {
    if world.drift_rate == 0.0 {
        return;
    }
    let keep = (1.0 - world.drift_rate).sqrt();
    let fresh = world.drift_rate.sqrt();
    for entry in &mut world.u_true {
        let noise: f64 = world.rng.sample(StandardNormal);
        *entry = keep * *entry + fresh * world.factor_sd * noise;
    }
}

/// Presents the recommendations to the world and logs the positive
/// feedback: a noisy observation is recorded only when it reaches the
/// accept threshold.
pub fn simulate_feedback(
    world: &mut SyntheticWorld,
    recommendations: &[(u32, Vec<u32>)],
    window_index: usize,
) -> Result<ObservationMatrix> {
    let mut feedback = ObservationMatrix::new(window_index, world.dims());
    for (user, items) in recommendations {
        for item in items {
            if *user == 0 || *user > world.n_users || *item == 0 || *item > world.n_items {
                return Err(Error::Index(format!(
                    "recommendation ({user}, {item}) outside world dims"
                )));
            }
            let observed = world.observe(*user, *item);
            if observed >= world.accept_threshold {
                feedback.insert(*user, *item, observed)?;
            }
        }
    }
    Ok(feedback)
}

/// A retraining strategy plugged into the recurrent loop.
pub trait LoopStrategy {
    fn name(&self) -> &str;
    /// Retrains on the per-epoch feedback history collected so far.
    fn retrain(&mut self, history: &[ObservationMatrix], epoch: usize) -> Result<()>;
    /// Predicted rating; must be total (fall back to a constant when
    /// untrained).
    fn predict(&self, user: u32, item: u32) -> f64;
}

/// Refits a plain factorization from scratch on all logged positives.
/// Ratings are centered at the scale midpoint (not the logged mean, which
/// under positive-only feedback sits far above it), so an untrained model
/// predicts the midpoint.
pub struct NaiveMfStrategy {
    hyper: PmfHyperparams,
    scale: RatingScale,
    model: Option<FactorModel>,
}

impl NaiveMfStrategy {
    pub fn new(hyper: PmfHyperparams, scale: RatingScale) -> Self {
        Self {
            hyper: PmfHyperparams {
                center: false,
                ..hyper
            },
            scale,
            model: None,
        }
    }
}

fn merge_history(history: &[ObservationMatrix]) -> Option<ObservationMatrix> {
    let first = history.first()?;
    let mut merged = ObservationMatrix::new(history.len() - 1, first.dims());
    for window in history {
        merged.absorb(window);
    }
    Some(merged)
}

impl LoopStrategy for NaiveMfStrategy {
    fn name(&self) -> &str {
        "naive-mf"
    }

    fn retrain(&mut self, history: &[ObservationMatrix], epoch: usize) -> Result<()> {
        let merged = merge_history(history);
        self.model = match merged {
            Some(m) if !m.is_empty() => {
                // Shift to the scale midpoint before fitting.
                let mut centered = ObservationMatrix::new(m.window_index, m.dims());
                for (user, item, value) in m.entries() {
                    centered.insert(user, item, value - self.scale.midpoint())?;
                }
                let hyper = PmfHyperparams {
                    seed: derive_seed(self.hyper.seed, &format!("epoch-{epoch}")),
                    ..self.hyper
                };
                Some(fit_pmf(&centered, &hyper)?)
            }
            _ => None,
        };
        Ok(())
    }

    fn predict(&self, user: u32, item: u32) -> f64 {
        match &self.model {
            Some(model) => match model.predict(user, item) {
                Ok(value) => self.scale.clip(value + self.scale.midpoint()),
                Err(_) => self.scale.midpoint(),
            },
            None => self.scale.midpoint(),
        }
    }
}

/// Runs the full belief-transition pipeline on the logged history each
/// epoch and adopts the Q-selected candidate. Falls back to a plain fit
/// while the history is too thin for transitions.
pub struct PomdpRecStrategy {
    base: PmfHyperparams,
    transition: TransitionHyper,
    qtrain: QTrainConfig,
    reward: RewardConfig,
    ground_truth: GroundTruth,
    n_candidates: usize,
    scale: RatingScale,
    adopted: Option<FactorModel>,
}

impl PomdpRecStrategy {
    pub fn new(
        base: PmfHyperparams,
        transition: TransitionHyper,
        qtrain: QTrainConfig,
        reward: RewardConfig,
        ground_truth: GroundTruth,
        n_candidates: usize,
        scale: RatingScale,
    ) -> Self {
        Self {
            base,
            transition,
            qtrain,
            reward,
            ground_truth,
            n_candidates,
            scale,
            adopted: None,
        }
    }

    fn q_guided_fit(
        &mut self,
        history: &[ObservationMatrix],
        merged: &ObservationMatrix,
        epoch: usize,
    ) -> Result<FactorModel> {
        let epoch_seed = derive_seed(self.base.seed, &format!("epoch-{epoch}"));
        let opts = StackOptions {
            pmf: PmfHyperparams {
                seed: derive_seed(epoch_seed, "beliefs"),
                ..self.base
            },
            transition: TransitionHyper {
                seed: derive_seed(epoch_seed, "transition"),
                ..self.transition
            },
            reward: self.reward,
            ground_truth: self.ground_truth,
            stack: true,
            max_patterns: 20_000,
            seed: derive_seed(epoch_seed, "stack"),
        };
        let prepared = prepare_stack(history, &opts)?;
        let qcfg = QTrainConfig {
            seed: derive_seed(epoch_seed, "qtrain"),
            ..self.qtrain
        };
        let (qnet, _) = run_q(&prepared, &qcfg, None)?;

        let candidates = generate_candidates(
            merged,
            &PmfHyperparams {
                seed: derive_seed(epoch_seed, "candidates"),
                ..self.base
            },
            self.n_candidates,
            derive_seed(epoch_seed, "policy"),
        )?;
        let current = match &self.adopted {
            Some(model) => model.clone(),
            None => candidates[0].model.clone(),
        };
        let eval_pairs: Vec<(u32, u32)> = history
            .iter()
            .rev()
            .find(|w| !w.is_empty())
            .map(|w| w.pairs().collect())
            .unwrap_or_default();
        if eval_pairs.is_empty() {
            return Err(Error::EmptyData("no recent pairs to score selection".into()));
        }
        let outcome = crate::policy::select_by_q(&candidates, &qnet, &current, &eval_pairs)?;
        Ok(candidates[outcome.index].model.clone())
    }
}

impl LoopStrategy for PomdpRecStrategy {
    fn name(&self) -> &str {
        "pomdp-rec"
    }

    fn retrain(&mut self, history: &[ObservationMatrix], epoch: usize) -> Result<()> {
        let merged = match merge_history(history) {
            Some(m) if !m.is_empty() => m,
            _ => {
                self.adopted = None;
                return Ok(());
            }
        };
        let non_empty = history.iter().filter(|w| !w.is_empty()).count();
        if non_empty >= 2 {
            match self.q_guided_fit(history, &merged, epoch) {
                Ok(model) => {
                    self.adopted = Some(model);
                    return Ok(());
                }
                // Thin histories legitimately fail transition or pattern
                // assembly; fall through to the plain fit.
                Err(Error::EmptyData(_))
                | Err(Error::ClassImbalance(_))
                | Err(Error::State(_)) => {}
                Err(other) => return Err(other),
            }
        }
        let hyper = PmfHyperparams {
            seed: derive_seed(self.base.seed, &format!("fallback-{epoch}")),
            ..self.base
        };
        self.adopted = Some(fit_pmf(&merged, &hyper)?);
        Ok(())
    }

    fn predict(&self, user: u32, item: u32) -> f64 {
        match &self.adopted {
            Some(model) => match model.predict(user, item) {
                Ok(value) => self.scale.clip(value),
                Err(_) => self.scale.midpoint(),
            },
            None => self.scale.midpoint(),
        }
    }
}

/// One epoch's trajectory entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// RMSE of the strategy's predictions against the current true ratings
    /// on the fixed probe set.
    pub probe_rmse: f64,
    /// Fraction of the catalog ever recommended.
    pub coverage: f64,
    /// Positive feedback events logged this epoch.
    pub positives_logged: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoopTrajectory {
    pub records: Vec<EpochRecord>,
}

#[derive(Debug, Clone, Copy)]
pub struct LoopConfig {
    pub epochs: usize,
    pub top_n: usize,
    /// Fraction of all (user, item) pairs in the fixed probe set.
    pub probe_fraction: f64,
    pub seed: u64,
}

/// Runs the recurrent loop: retrain on logged positives, recommend top-n
/// per user, drift the world, log the positive feedback, measure probe
/// RMSE against the drifted truth.
pub fn run_recurrent_loop(
    mut world: SyntheticWorld,
    strategy: &mut dyn LoopStrategy,
    cfg: &LoopConfig,
) -> Result<LoopTrajectory> {
    if cfg.epochs == 0 {
        return Err(Error::Config("loop needs at least one epoch".into()));
    }
    if cfg.top_n == 0 || cfg.top_n as u32 > world.n_items {
        return Err(Error::Config(format!(
            "top_n must be in 1..={}",
            world.n_items
        )));
    }
    let n_users = world.n_users;
    let n_items = world.n_items;

    // Probe pairs are fixed up front and scored against the drifting truth.
    let total_pairs = n_users as usize * n_items as usize;
    let n_probe = ((cfg.probe_fraction * total_pairs as f64).floor() as usize).clamp(1, total_pairs);
    let mut probe_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "probe"));
    let probe: Vec<(u32, u32)> = rand::seq::index::sample(&mut probe_rng, total_pairs, n_probe)
        .into_iter()
        .map(|flat| {
            (
                (flat / n_items as usize) as u32 + 1,
                (flat % n_items as usize) as u32 + 1,
            )
        })
        .collect();

    let mut history: Vec<ObservationMatrix> = Vec::new();
    let mut logged_pairs: BTreeSet<(u32, u32)> = BTreeSet::new();
    let mut recommended_items: BTreeSet<u32> = BTreeSet::new();
    let mut trajectory = LoopTrajectory::default();

    for epoch in 0..cfg.epochs {
        strategy
            .retrain(&history, epoch)
            .map_err(|e| Error::State(format!("strategy {} failed at epoch {epoch}: {e}", strategy.name())))?;

        let mut slates: Vec<(u32, Vec<u32>)> = Vec::with_capacity(n_users as usize);
        let mut scored: Vec<(f64, u32)> = Vec::with_capacity(n_items as usize);
        for user in 1..=n_users {
            scored.clear();
            for item in 1..=n_items {
                if !logged_pairs.contains(&(user, item)) {
                    scored.push((strategy.predict(user, item), item));
                }
            }
            scored.sort_unstable_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.1.cmp(&b.1))
            });
            let slate: Vec<u32> = scored.iter().take(cfg.top_n).map(|(_, item)| *item).collect();
            recommended_items.extend(slate.iter().copied());
            slates.push((user, slate));
        }

        drift_step(&mut world);
        let feedback = simulate_feedback(&mut world, &slates, epoch)?;
        let positives_logged = feedback.len();
        for (user, item) in feedback.pairs() {
            logged_pairs.insert((user, item));
        }

        let mut sse = 0.0;
        for &(user, item) in &probe {
            let err = strategy.predict(user, item) - world.true_rating(user, item);
            sse += err * err;
        }
        trajectory.records.push(EpochRecord {
            epoch,
            probe_rmse: (sse / probe.len() as f64).sqrt(),
            coverage: recommended_items.len() as f64 / n_items as f64,
            positives_logged,
        });
        history.push(feedback);
    }
    Ok(trajectory)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_builds_identical_worlds() {
        let a = make_world(20, 15, 4, 0.3, 0.1, 99).unwrap();
        let b = make_world(20, 15, 4, 0.3, 0.1, 99).unwrap();
        assert_eq!(a.u_true, b.u_true);
        assert_eq!(a.v_true, b.v_true);
    }

    #[test]
    fn noiseless_observations_equal_true_ratings() {
        let mut world = make_world(5, 5, 2, 0.0, 0.0, 3).unwrap();
        for user in 1..=5 {
            for item in 1..=5 {
                assert_eq!(world.observe(user, item), world.true_rating(user, item));
            }
        }
    }

    #[test]
    fn single_latent_dimension_gives_rank_one_affinities() {
        let world = make_world(6, 6, 1, 0.0, 0.0, 7).unwrap();
        // Every 2x2 minor of a rank-1 matrix vanishes.
        for u in 1..=5u32 {
            for i in 1..=5u32 {
                let det = world.true_affinity(u, i) * world.true_affinity(u + 1, i + 1)
                    - world.true_affinity(u, i + 1) * world.true_affinity(u + 1, i);
                assert!(det.abs() < 1e-12, "minor ({u},{i}) = {det}");
            }
        }
    }

    #[test]
    fn zero_drift_leaves_the_world_bitwise_unchanged() {
        let mut world = make_world(10, 10, 3, 0.5, 0.0, 11).unwrap();
        let before = world.u_true.clone();
        drift_step(&mut world);
        assert_eq!(world.u_true, before);
    }

    #[test]
    fn full_drift_resamples_user_factors() {
        let mut world = make_world(10, 10, 3, 0.5, 1.0, 13).unwrap();
        let before = world.u_true.clone();
        let items_before = world.v_true.clone();
        drift_step(&mut world);
        assert_ne!(world.u_true, before);
        assert_eq!(world.v_true, items_before);
        // Fully resampled factors keep the stationary variance.
        let variance = world.user_factor_variance();
        let target = world.stationary_factor_variance();
        assert!((variance / target - 1.0).abs() < 0.2);
    }

    #[test]
    fn drift_preserves_factor_variance_over_many_steps() {
        let mut world = make_world(500, 10, 8, 0.5, 0.05, 17).unwrap();
        let target = world.stationary_factor_variance();
        for _ in 0..100 {
            drift_step(&mut world);
        }
        let variance = world.user_factor_variance();
        assert!(
            (variance / target - 1.0).abs() < 0.05,
            "variance {variance} vs target {target}"
        );
    }

    #[test]
    fn threshold_boundaries_log_everything_or_nothing() {
        let mut world = make_world(4, 4, 2, 0.2, 0.0, 5).unwrap();
        let slates = vec![(1, vec![1, 2]), (2, vec![3])];
        let all = simulate_feedback(&mut world, &slates, 0).unwrap();
        assert_eq!(all.len(), 3);

        let mut closed = make_world(4, 4, 2, 0.2, 0.0, 5)
            .unwrap()
            .with_accept_threshold(f64::INFINITY);
        let none = simulate_feedback(&mut closed, &slates, 0).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn threshold_keeps_exactly_the_ratings_above_it() {
        // Affinities 0.9 and 1.1 around midpoint 3 give true ratings 3.9
        // and 4.1; a noiseless world with threshold 4 logs only the second.
        let world = make_world(1, 2, 1, 0.0, 0.0, 1)
            .unwrap()
            .with_true_factors(vec![1.0], vec![0.9, 1.1])
            .unwrap()
            .with_accept_threshold(4.0);
        let mut world = world;
        assert!((world.true_rating(1, 1) - 3.9).abs() < 1e-12);
        assert!((world.true_rating(1, 2) - 4.1).abs() < 1e-12);
        let feedback = simulate_feedback(&mut world, &[(1, vec![1, 2])], 0).unwrap();
        assert_eq!(feedback.len(), 1);
        assert!((feedback.get(1, 2).unwrap() - 4.1).abs() < 1e-12);
        assert!(feedback.get(1, 1).is_none());
    }

    fn small_strategy(seed: u64) -> NaiveMfStrategy {
        NaiveMfStrategy::new(
            PmfHyperparams {
                latent_dim: 4,
                epochs: 15,
                seed,
                ..PmfHyperparams::default()
            },
            RatingScale::five_star(),
        )
    }

    #[test]
    fn single_epoch_gives_single_record() {
        let world = make_world(20, 20, 2, 0.3, 0.0, 2).unwrap();
        let mut strategy = small_strategy(1);
        let trajectory = run_recurrent_loop(
            world,
            &mut strategy,
            &LoopConfig {
                epochs: 1,
                top_n: 3,
                probe_fraction: 0.05,
                seed: 4,
            },
        )
        .unwrap();
        assert_eq!(trajectory.records.len(), 1);
        assert_eq!(trajectory.records[0].epoch, 0);
    }

    #[test]
    fn coverage_is_monotone_and_feedback_respects_threshold() {
        let world = make_world(30, 25, 3, 0.4, 0.02, 6)
            .unwrap()
            .with_accept_threshold(3.5);
        let mut strategy = small_strategy(3);
        let trajectory = run_recurrent_loop(
            world,
            &mut strategy,
            &LoopConfig {
                epochs: 6,
                top_n: 4,
                probe_fraction: 0.05,
                seed: 8,
            },
        )
        .unwrap();
        assert_eq!(trajectory.records.len(), 6);
        for pair in trajectory.records.windows(2) {
            assert!(pair[1].coverage >= pair[0].coverage);
        }
        let epochs: Vec<usize> = trajectory.records.iter().map(|r| r.epoch).collect();
        assert_eq!(epochs, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn logged_values_never_fall_below_the_threshold() {
        let mut world = make_world(15, 15, 2, 0.6, 0.0, 9)
            .unwrap()
            .with_accept_threshold(4.0);
        let slates: Vec<(u32, Vec<u32>)> =
            (1..=15).map(|u| (u, (1..=15).collect())).collect();
        let feedback = simulate_feedback(&mut world, &slates, 0).unwrap();
        for (_, _, value) in feedback.entries() {
            assert!(value >= 4.0);
        }
    }

    #[test]
    fn loop_runs_are_deterministic() {
        let config = LoopConfig {
            epochs: 4,
            top_n: 3,
            probe_fraction: 0.05,
            seed: 21,
        };
        let run = |_| {
            let world = make_world(25, 20, 2, 0.3, 0.05, 31)
                .unwrap()
                .with_accept_threshold(3.8);
            let mut strategy = small_strategy(7);
            run_recurrent_loop(world, &mut strategy, &config).unwrap()
        };
        assert_eq!(run(0), run(1));
    }

    #[test]
    fn pomdp_strategy_runs_through_the_loop() {
        let world = make_world(15, 12, 2, 0.3, 0.05, 41)
            .unwrap()
            .with_accept_threshold(3.0);
        let base = PmfHyperparams {
            latent_dim: 3,
            epochs: 10,
            seed: 5,
            ..PmfHyperparams::default()
        };
        let mut strategy = PomdpRecStrategy::new(
            base,
            TransitionHyper {
                epochs: 5,
                ..TransitionHyper::default()
            },
            QTrainConfig {
                iterations: 2,
                epochs_per_iteration: 2,
                hidden_dim: 8,
                successor_samples: 4,
                diagnostic_interval: 100_000,
                ..QTrainConfig::default()
            },
            RewardConfig::for_scale(&RatingScale::five_star()),
            GroundTruth::Logged,
            2,
            RatingScale::five_star(),
        );
        let trajectory = run_recurrent_loop(
            world,
            &mut strategy,
            &LoopConfig {
                epochs: 4,
                top_n: 3,
                probe_fraction: 0.05,
                seed: 12,
            },
        )
        .unwrap();
        assert_eq!(trajectory.records.len(), 4);
        for record in &trajectory.records {
            assert!(record.probe_rmse.is_finite());
        }
    }
}
