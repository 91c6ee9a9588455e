//! End-to-end orchestration: ingestion to windowed artifacts, the full
//! training assembly (per-window factor models, transition model, fitted-Q
//! loop), rolling evaluation against the plain-factorization baseline, and
//! the feedback-loop simulation battery. Every command is a pure function of
//! its configuration; output files carry the configuration hash.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{derive_seed, DataFormat, GroundTruth, RunConfig};
use crate::data::{
    self, build_action_transitions, cumulative_stacks, parse_csv_rating_line, parse_rating_line,
    read_windows_csv, split_by_time, stack_windows, window_partition, write_windows_csv,
    MatrixDims, ObservationMatrix, PairMap, RatingRecord, RatingScale,
};
use crate::error::{Error, Result};
use crate::eval::{self, evaluate_windows, WindowEval, WindowReport};
use crate::fitted_q::{
    fitted_q_loop, PatternSource, QDiagnostics, QNetwork, QTrainConfig,
};
use crate::pmf::{belief, fit_pmf, FactorModel, PmfHyperparams};
use crate::policy::{generate_candidates, predict_matrix, select_by_q};
use crate::reward::RewardConfig;
use crate::sim::{self, LoopStrategy, LoopTrajectory, NaiveMfStrategy, PomdpRecStrategy};
use crate::transition::{fit_transition, LogisticModel, TransitionHyper};

const WINDOWS_FILE: &str = "windows.csv";
const MANIFEST_FILE: &str = "manifest.csv";
const TRANSITION_FILE: &str = "transition.txt";
const QNET_FILE: &str = "qnet.txt";

// ---------------------------------------------------------------------------
// Shared training assembly
// ---------------------------------------------------------------------------

/// Inputs for preparing one training stack.
pub struct StackOptions {
    /// Base hyperparameters for the per-window factor fits; each window gets
    /// a seed derived from this one's.
    pub pmf: PmfHyperparams,
    pub transition: TransitionHyper,
    pub reward: RewardConfig,
    /// What the per-triple reward compares the action against.
    pub ground_truth: GroundTruth,
    /// Fit beliefs on cumulative windows instead of per-interval ones.
    pub stack: bool,
    /// Cap on the transition triples used (0 = uncapped).
    pub max_patterns: usize,
    pub seed: u64,
}

/// Everything the fitted-Q loop consumes, assembled from windowed
/// observations.
pub struct PreparedStack {
    pub matrices: Vec<ObservationMatrix>,
    pub models: BTreeMap<usize, FactorModel>,
    pub triples: Vec<data::TransitionTriple>,
    pub rewards: Vec<f64>,
    pub pools: BTreeMap<usize, Vec<(u32, u32)>>,
    pub transition: LogisticModel,
}

/// Fits per-window factor models, builds (and optionally caps) the
/// action-only transition triples, computes per-triple rewards and fits the
/// transition model. Window indices must be consecutive.
pub fn prepare_stack(windows: &[ObservationMatrix], opts: &StackOptions) -> Result<PreparedStack> {
    if windows.len() < 2 {
        return Err(Error::EmptyData(format!(
            "need at least 2 windows to build transitions, got {}",
            windows.len()
        )));
    }
    let matrices = if opts.stack {
        cumulative_stacks(windows)
    } else {
        windows.to_vec()
    };

    // Every window model starts from the same seeded init so belief
    // coordinates stay comparable across windows.
    let models: BTreeMap<usize, FactorModel> = matrices
        .par_iter()
        .filter(|m| !m.is_empty())
        .map(|m| Ok((m.window_index, fit_pmf(m, &opts.pmf)?)))
        .collect::<Result<_>>()?;

    // Successor candidates are the pairs with feedback in each interval.
    let pools: BTreeMap<usize, Vec<(u32, u32)>> = windows
        .iter()
        .filter(|m| !m.is_empty())
        .map(|m| (m.window_index, m.pairs().collect()))
        .collect();

    // One triple per logged event, keyed to the window before it; both
    // belief models must exist.
    let mut triples: Vec<data::TransitionTriple> = build_action_transitions(windows)
        .into_iter()
        .filter(|t| models.contains_key(&t.o_window) && models.contains_key(&t.o_next_window))
        .collect();
    if triples.is_empty() {
        return Err(Error::EmptyData(
            "no transition triples across consecutive windows".into(),
        ));
    }
    if opts.max_patterns > 0 && triples.len() > opts.max_patterns {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, "triple-cap"));
        let mut picks =
            rand::seq::index::sample(&mut rng, triples.len(), opts.max_patterns).into_vec();
        picks.sort_unstable();
        triples = picks.into_iter().map(|i| triples[i]).collect();
    }

    let rewards = transition_rewards(&triples, &models, opts)?;
    let transition = fit_stack_transition(&triples, &models, &pools, opts)?;

    Ok(PreparedStack {
        matrices,
        models,
        triples,
        rewards,
        pools,
        transition,
    })
}

/// One pooled reward per window transition: the action values of all its
/// triples are graded against the ground truth over the whole transition
/// mask, and every pattern of that transition shares the result. In logged
/// mode the action is the prediction the prior-window model would have
/// recommended with and the logged ratings grade it; in belief mode the
/// logged values are the actions and the next window's belief-inferred
/// interactions serve as ground truth.
fn transition_rewards(
    triples: &[data::TransitionTriple],
    models: &BTreeMap<usize, FactorModel>,
    opts: &StackOptions,
) -> Result<Vec<f64>> {
    let mut by_transition: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (idx, triple) in triples.iter().enumerate() {
        by_transition.entry(triple.o_window).or_default().push(idx);
    }
    let mut rewards = vec![0.0; triples.len()];
    for (window, indices) in by_transition {
        let prior = models
            .get(&window)
            .ok_or_else(|| Error::State(format!("no factor model for window {window}")))?;
        let next = models
            .get(&(window + 1))
            .ok_or_else(|| Error::State(format!("no factor model for window {}", window + 1)))?;
        let mut action_values = PairMap::new();
        let mut ground_truth = PairMap::new();
        for &idx in &indices {
            let t = &triples[idx];
            let key = (t.user_id, t.item_id);
            match opts.ground_truth {
                GroundTruth::Logged => {
                    action_values.insert(key, prior.predict(t.user_id, t.item_id)?);
                    ground_truth.insert(key, t.action_value);
                }
                GroundTruth::Belief => {
                    action_values.insert(key, t.action_value);
                    ground_truth.insert(key, next.predict(t.user_id, t.item_id)?);
                }
            }
        }
        let mask: crate::data::PairSet = action_values.keys().copied().collect();
        let r = crate::reward::reward(&action_values, &ground_truth, &mask, &opts.reward)?;
        for idx in indices {
            rewards[idx] = r;
        }
    }
    Ok(rewards)
}

/// Positive pairs are the observed belief transitions; each gets one
/// negative whose successor is a different pair sampled from the same next
/// window.
fn fit_stack_transition(
    triples: &[data::TransitionTriple],
    models: &BTreeMap<usize, FactorModel>,
    pools: &BTreeMap<usize, Vec<(u32, u32)>>,
    opts: &StackOptions,
) -> Result<LogisticModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, "negatives"));
    let mut positives = Vec::with_capacity(triples.len());
    let mut negatives = Vec::with_capacity(triples.len());
    for triple in triples {
        let before = models
            .get(&triple.o_window)
            .ok_or_else(|| Error::State(format!("no factor model for window {}", triple.o_window)))?;
        let after = models.get(&triple.o_next_window).ok_or_else(|| {
            Error::State(format!("no factor model for window {}", triple.o_next_window))
        })?;
        let b = belief(before, triple.user_id, triple.item_id)?;
        let b_next = belief(after, triple.user_id, triple.item_id)?;

        if let Some(pool) = pools.get(&triple.o_next_window) {
            if pool.len() >= 2 {
                // Draw from the pool minus the positive pair in O(1): pick
                // among len-1 slots and remap a collision to the last slot.
                let j = rand::Rng::gen_range(&mut rng, 0..pool.len() - 1);
                let pick = if pool[j] == (triple.user_id, triple.item_id) {
                    pool[pool.len() - 1]
                } else {
                    pool[j]
                };
                negatives.push((b.clone(), belief(after, pick.0, pick.1)?));
            }
        }
        positives.push((b, b_next));
    }
    fit_transition(&positives, &negatives, &opts.transition)
}

/// Runs the fitted-Q loop over a prepared stack.
pub fn run_q(
    prepared: &PreparedStack,
    cfg: &QTrainConfig,
    holdout: Option<&dyn Fn(&QNetwork) -> f64>,
) -> Result<(QNetwork, QDiagnostics)> {
    let src = PatternSource {
        triples: &prepared.triples,
        models: &prepared.models,
        transition: &prepared.transition,
        rewards: &prepared.rewards,
        successor_pools: &prepared.pools,
    };
    fitted_q_loop(&src, cfg, holdout)
}

// ---------------------------------------------------------------------------
// Ingest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct WindowStat {
    pub window_index: usize,
    pub role: &'static str,
    pub n_records: usize,
    pub interval_start: f64,
    pub interval_end: f64,
    pub sparsity: f64,
}

#[derive(Debug, Clone)]
pub struct IngestSummary {
    pub total_records: usize,
    pub kept_records: usize,
    pub n_users: u32,
    pub n_items: u32,
    pub n_train_windows: usize,
    pub n_test_windows: usize,
    pub windows: Vec<WindowStat>,
}

fn parse_dataset(path: &Path, format: DataFormat, scale: &RatingScale) -> Result<Vec<RatingRecord>> {
    let file = fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = match format {
            DataFormat::Movielens => parse_rating_line(&line, scale),
            DataFormat::Csv => parse_csv_rating_line(&line, scale),
        };
        records.push(parsed.map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("line {}: {msg}", line_no + 1)),
            Error::Range { value, min, max } => Error::Parse(format!(
                "line {}: rating {value} outside scale [{min}, {max}]",
                line_no + 1
            )),
            other => other,
        })?);
    }
    if records.is_empty() {
        return Err(Error::EmptyData(format!("{} holds no records", path.display())));
    }
    Ok(records)
}

fn subsample_users(records: Vec<RatingRecord>, fraction: f64, seed: u64) -> Vec<RatingRecord> {
    if fraction >= 1.0 {
        return records;
    }
    let mut users: Vec<u32> = records.iter().map(|r| r.user_id).collect();
    users.sort_unstable();
    users.dedup();
    let keep = ((users.len() as f64 * fraction).ceil() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    users.shuffle(&mut rng);
    let kept: std::collections::BTreeSet<u32> = users.into_iter().take(keep).collect();
    records
        .into_iter()
        .filter(|r| kept.contains(&r.user_id))
        .collect()
}

/// Number of test windows: the train window count scaled by the test/train
/// fraction ratio, at least 2.
fn test_window_count(n_train_windows: usize, train_fraction: f64) -> usize {
    let ratio = (1.0 - train_fraction) / train_fraction;
    ((n_train_windows as f64 * ratio).round() as usize).max(2)
}

/// Parses the input log, splits it by time, partitions both parts into
/// windows and writes the windowed artifact plus its manifest.
pub fn run_ingest(config: &RunConfig) -> Result<IngestSummary> {
    config.validate()?;
    let scale = config.dataset.scale()?;
    let records = parse_dataset(&config.dataset.path, config.dataset.format, &scale)?;
    let total_records = records.len();
    let records = subsample_users(
        records,
        config.dataset.user_sample_fraction,
        derive_seed(config.seed, "subsample"),
    );
    let kept_records = records.len();
    let dims = MatrixDims::from_records(&records)?;

    let (train, test) = split_by_time(&records, config.windows.train_fraction)?;
    let train_windows = window_partition(&train, config.windows.count, dims)?;
    let mut all_windows = train_windows;
    let n_train_windows = all_windows.len();
    let mut n_test_windows = 0;
    if !test.is_empty() {
        let n_test = test_window_count(n_train_windows, config.windows.train_fraction);
        let mut test_windows = window_partition(&test, n_test, dims)?;
        for window in &mut test_windows {
            window.window_index += n_train_windows;
        }
        n_test_windows = test_windows.len();
        all_windows.extend(test_windows);
    }

    let stat_for = |windows: &[ObservationMatrix], records: &[RatingRecord], role: &'static str| {
        if records.is_empty() {
            return Vec::new();
        }
        let t_min = records.iter().map(|r| r.timestamp).min().unwrap() as f64;
        let t_max = records.iter().map(|r| r.timestamp).max().unwrap() as f64;
        let span = t_max - t_min + 1.0;
        let n = windows.len() as f64;
        windows
            .iter()
            .map(|w| {
                let local = (w.window_index as f64)
                    - if role == "test" { n_train_windows as f64 } else { 0.0 };
                WindowStat {
                    window_index: w.window_index,
                    role,
                    n_records: w.len(),
                    interval_start: t_min + local * span / n,
                    interval_end: t_min + (local + 1.0) * span / n,
                    sparsity: w.sparsity(),
                }
            })
            .collect()
    };
    let mut stats = stat_for(&all_windows[..n_train_windows], &train, "train");
    stats.extend(stat_for(&all_windows[n_train_windows..], &test, "test"));

    fs::create_dir_all(&config.output.dir)?;
    let hash = config.hash();
    let mut body = Vec::new();
    write_windows_csv(&mut body, &all_windows)?;
    write_with_hash(
        &config.output.dir.join(WINDOWS_FILE),
        &hash,
        std::str::from_utf8(&body).expect("csv is utf-8"),
    )?;

    let mut manifest = String::new();
    manifest.push_str(&format!("# total_records={total_records}\n"));
    manifest.push_str(&format!("# kept_records={kept_records}\n"));
    manifest.push_str(&format!("# n_users={}\n", dims.n_users));
    manifest.push_str(&format!("# n_items={}\n", dims.n_items));
    manifest.push_str(&format!("# n_train_windows={n_train_windows}\n"));
    manifest.push_str(&format!("# n_test_windows={n_test_windows}\n"));
    manifest.push_str("window,role,n_records,interval_start,interval_end,sparsity\n");
    for stat in &stats {
        manifest.push_str(&format!(
            "{},{},{},{},{},{}\n",
            stat.window_index,
            stat.role,
            stat.n_records,
            stat.interval_start,
            stat.interval_end,
            stat.sparsity
        ));
    }
    write_with_hash(&config.output.dir.join(MANIFEST_FILE), &hash, &manifest)?;

    Ok(IngestSummary {
        total_records,
        kept_records,
        n_users: dims.n_users,
        n_items: dims.n_items,
        n_train_windows,
        n_test_windows,
        windows: stats,
    })
}

// ---------------------------------------------------------------------------
// Artifact loading
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
struct Manifest {
    dims: MatrixDims,
    n_train_windows: usize,
    n_test_windows: usize,
}

fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Err(Error::State(format!(
            "missing ingest artifact {}; run ingest first",
            path.display()
        )));
    }
    let text = fs::read_to_string(&path)?;
    let mut fields: BTreeMap<&str, u64> = BTreeMap::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("# ") {
            if let Some((key, value)) = rest.split_once('=') {
                if let Ok(v) = value.trim().parse::<u64>() {
                    fields.insert(key.trim(), v);
                }
            }
        }
    }
    let get = |key: &str| -> Result<u64> {
        fields
            .get(key)
            .copied()
            .ok_or_else(|| Error::Parse(format!("manifest missing {key}")))
    };
    Ok(Manifest {
        dims: MatrixDims {
            n_users: get("n_users")? as u32,
            n_items: get("n_items")? as u32,
        },
        n_train_windows: get("n_train_windows")? as usize,
        n_test_windows: get("n_test_windows")? as usize,
    })
}

fn load_windows(dir: &Path, dims: MatrixDims) -> Result<Vec<ObservationMatrix>> {
    let path = dir.join(WINDOWS_FILE);
    if !path.exists() {
        return Err(Error::State(format!(
            "missing ingest artifact {}; run ingest first",
            path.display()
        )));
    }
    let reader = BufReader::new(fs::File::open(&path)?);
    read_windows_csv(reader, dims)
}

/// Splits loaded windows into train and test parts, padding missing train
/// windows with empty matrices so indices stay consecutive.
fn split_windows(
    windows: Vec<ObservationMatrix>,
    manifest: &Manifest,
) -> (Vec<ObservationMatrix>, Vec<ObservationMatrix>) {
    let mut by_index: BTreeMap<usize, ObservationMatrix> =
        windows.into_iter().map(|w| (w.window_index, w)).collect();
    let train = (0..manifest.n_train_windows)
        .map(|w| {
            by_index
                .remove(&w)
                .unwrap_or_else(|| ObservationMatrix::new(w, manifest.dims))
        })
        .collect();
    let test = (manifest.n_train_windows..manifest.n_train_windows + manifest.n_test_windows)
        .map(|w| {
            by_index
                .remove(&w)
                .unwrap_or_else(|| ObservationMatrix::new(w, manifest.dims))
        })
        .collect();
    (train, test)
}

fn write_with_hash(path: &Path, hash: &str, body: &str) -> Result<()> {
    let mut file = fs::File::create(path)?;
    writeln!(file, "# config_hash={hash}")?;
    file.write_all(body.as_bytes())?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Train
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub diagnostics: QDiagnostics,
    pub n_triples: usize,
    pub n_window_models: usize,
}

/// Fixed ingredients of the training-time hold-out evaluation.
struct HoldoutParts {
    candidates: Vec<crate::policy::CandidateModel>,
    current: FactorModel,
    eval_pairs: Vec<(u32, u32)>,
    truth: PairMap,
}

fn stack_options(config: &RunConfig, scale: &RatingScale) -> Result<StackOptions> {
    Ok(StackOptions {
        pmf: config.pmf.to_hyper(derive_seed(config.seed, "pmf")),
        transition: config
            .transition
            .to_hyper(derive_seed(config.seed, "transition")),
        reward: config.reward.to_config(scale)?,
        ground_truth: config.reward.ground_truth,
        stack: config.windows.stack,
        max_patterns: config.qtrain.max_patterns,
        seed: derive_seed(config.seed, "stack"),
    })
}

/// Trains the full pipeline on the train windows: per-window factor models,
/// the transition model and the fitted-Q network. The hold-out curve refits
/// candidates on all but the last train window and measures the selected
/// candidate's RMSE on that last window after every iteration.
pub fn run_train(config: &RunConfig) -> Result<TrainSummary> {
    config.validate()?;
    let scale = config.dataset.scale()?;
    let manifest = read_manifest(&config.output.dir)?;
    let windows = load_windows(&config.output.dir, manifest.dims)?;
    let (train_windows, _) = split_windows(windows, &manifest);

    let opts = stack_options(config, &scale)?;
    let prepared = prepare_stack(&train_windows, &opts)?;

    // Hold-out evaluation: candidates trained without the last train window,
    // selection scored on the newest observed window before it.
    let n_train = train_windows.len();
    let holdout_parts: Option<HoldoutParts> =
        if n_train >= 2 && !train_windows[n_train - 1].is_empty() {
            let candidate_obs = stack_windows(&train_windows, n_train - 2)?;
            if candidate_obs.is_empty() || train_windows[n_train - 2].is_empty() {
                None
            } else {
                // The unperturbed candidate shares the window models' init
                // seed, keeping its belief coordinates in the same frame.
                let base = config.pmf.to_hyper(derive_seed(config.seed, "pmf"));
                let candidates = generate_candidates(
                    &candidate_obs,
                    &base,
                    config.policy.n_candidates,
                    derive_seed(config.seed, "holdout-policy"),
                )?;
                let current = prepared
                    .models
                    .get(&(n_train - 2))
                    .ok_or_else(|| Error::State("no belief model for the selection window".into()))?
                    .clone();
                let eval_pairs: Vec<(u32, u32)> = train_windows[n_train - 2].pairs().collect();
                let truth: PairMap = train_windows[n_train - 1]
                    .entries()
                    .map(|(u, i, v)| ((u, i), v))
                    .collect();
                Some(HoldoutParts {
                    candidates,
                    current,
                    eval_pairs,
                    truth,
                })
            }
        } else {
            None
        };

    let holdout_fn = holdout_parts.as_ref().map(|parts| {
        move |net: &QNetwork| -> f64 {
            let outcome = select_by_q(&parts.candidates, net, &parts.current, &parts.eval_pairs)
                .expect("holdout selection");
            let pairs: Vec<(u32, u32)> = parts.truth.keys().copied().collect();
            let predictions = predict_matrix(&parts.candidates[outcome.index], &pairs, &scale)
                .expect("holdout predictions");
            let mask = parts.truth.keys().copied().collect();
            eval::rmse(&predictions, &parts.truth, &mask).expect("holdout rmse")
        }
    });

    let qcfg = config.qtrain.to_config(derive_seed(config.seed, "qtrain"));
    let (qnet, diagnostics) = match &holdout_fn {
        Some(f) => run_q(&prepared, &qcfg, Some(f))?,
        None => run_q(&prepared, &qcfg, None)?,
    };

    let hash = config.hash();
    let dir = &config.output.dir;
    for (window, model) in &prepared.models {
        let mut body = Vec::new();
        model.write_to(&mut body)?;
        write_with_hash(
            &dir.join(format!("factors_w{window:03}.txt")),
            &hash,
            std::str::from_utf8(&body).expect("utf-8"),
        )?;
    }
    {
        let mut body = Vec::new();
        prepared.transition.write_to(&mut body)?;
        write_with_hash(
            &dir.join(TRANSITION_FILE),
            &hash,
            std::str::from_utf8(&body).expect("utf-8"),
        )?;
    }
    {
        let mut body = Vec::new();
        qnet.write_to(&mut body)?;
        write_with_hash(
            &dir.join(QNET_FILE),
            &hash,
            std::str::from_utf8(&body).expect("utf-8"),
        )?;
    }
    write_with_hash(&dir.join("diagnostics.csv"), &hash, &eval::diagnostics_csv(&diagnostics))?;
    write_with_hash(
        &dir.join("iteration_curve.csv"),
        &hash,
        &eval::iteration_curve(&diagnostics),
    )?;
    write_with_hash(
        &dir.join("stability.csv"),
        &hash,
        &eval::stability_curves(&diagnostics),
    )?;

    Ok(TrainSummary {
        diagnostics,
        n_triples: prepared.triples.len(),
        n_window_models: prepared.models.len(),
    })
}

// ---------------------------------------------------------------------------
// Evaluate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct EvaluateSummary {
    pub pomdp_reports: Vec<WindowReport>,
    pub pomdp_pooled_rmse: Option<f64>,
    pub baseline_reports: Vec<WindowReport>,
    pub baseline_pooled_rmse: f64,
    pub window_rewards: Vec<(usize, usize, f64)>,
}

/// Rolling evaluation over the test windows. For each test window the
/// training pool is everything observed before it; candidates are refit on
/// the pool, scored by the learned Q function against the currently adopted
/// model, and the winner predicts that window. The plain-factorization
/// baseline refits on the same pool.
pub fn run_evaluate(config: &RunConfig) -> Result<EvaluateSummary> {
    config.validate()?;
    let scale = config.dataset.scale()?;
    let manifest = read_manifest(&config.output.dir)?;
    let windows = load_windows(&config.output.dir, manifest.dims)?;
    let (train_windows, test_windows) = split_windows(windows, &manifest);
    if test_windows.iter().all(|w| w.is_empty()) {
        return Err(Error::EmptyData("no test windows to evaluate".into()));
    }

    let baseline_only = config.policy.baseline_only;
    let qnet = if baseline_only {
        None
    } else {
        let path = config.output.dir.join(QNET_FILE);
        if !path.exists() {
            return Err(Error::State(format!(
                "missing trained artifact {}; run train first",
                path.display()
            )));
        }
        Some(QNetwork::read_from(BufReader::new(fs::File::open(&path)?))?)
    };
    let reward_cfg = config.reward.to_config(&scale)?;

    if train_windows.is_empty() {
        return Err(Error::State("artifact holds no train windows".into()));
    }
    let mut pool = stack_windows(&train_windows, train_windows.len() - 1)?;
    if pool.is_empty() {
        return Err(Error::EmptyData("training pool is empty".into()));
    }
    let mut recent_pairs: Vec<(u32, u32)> = train_windows
        .iter()
        .rev()
        .find(|w| !w.is_empty())
        .map(|w| w.pairs().collect())
        .unwrap_or_default();

    let base_hyper = config.pmf.to_hyper(derive_seed(config.seed, "pmf"));
    let mut current: Option<FactorModel> = None;

    let mut pomdp_evals: Vec<(usize, PairMap, PairMap)> = Vec::new();
    let mut baseline_evals: Vec<(usize, PairMap, PairMap)> = Vec::new();
    let mut window_rewards: Vec<(usize, usize, f64)> = Vec::new();

    for window in &test_windows {
        if window.is_empty() {
            continue;
        }
        let truth: PairMap = window.entries().map(|(u, i, v)| ((u, i), v)).collect();
        let pairs: Vec<(u32, u32)> = truth.keys().copied().collect();
        let w = window.window_index;

        // Baseline: one unperturbed fit on the pool.
        let baseline_model = fit_pmf(
            &pool,
            &PmfHyperparams {
                seed: derive_seed(config.seed, &format!("baseline-{w}")),
                ..base_hyper
            },
        )?;
        let mut baseline_predictions = PairMap::new();
        for &(u, i) in &pairs {
            baseline_predictions.insert((u, i), scale.clip(baseline_model.predict(u, i)?));
        }
        baseline_evals.push((w, baseline_predictions, truth.clone()));

        if let Some(qnet) = &qnet {
            let candidates = generate_candidates(
                &pool,
                &PmfHyperparams {
                    seed: derive_seed(config.seed, &format!("candidates-{w}")),
                    ..base_hyper
                },
                config.policy.n_candidates,
                derive_seed(config.seed, &format!("policy-{w}")),
            )?;
            let current_model = match &current {
                Some(model) => model.clone(),
                None => baseline_model.clone(),
            };
            if recent_pairs.is_empty() {
                return Err(Error::State("no observed pairs to score selection on".into()));
            }
            let outcome = select_by_q(&candidates, qnet, &current_model, &recent_pairs)?;
            let selected = &candidates[outcome.index];
            let predictions = predict_matrix(selected, &pairs, &scale)?;

            // Reward of the adopted action over this window.
            let ground_truth: PairMap = match config.reward.ground_truth {
                GroundTruth::Logged => truth.clone(),
                GroundTruth::Belief => {
                    let mut inferred = PairMap::new();
                    for &(u, i) in &pairs {
                        inferred.insert((u, i), current_model.predict(u, i)?);
                    }
                    inferred
                }
            };
            let mask = truth.keys().copied().collect();
            let r = crate::reward::reward(&predictions, &ground_truth, &mask, &reward_cfg)?;
            window_rewards.push((w, pairs.len(), r));

            pomdp_evals.push((w, predictions, truth.clone()));
            current = Some(selected.model.clone());
        }

        pool.absorb(window);
        pool.window_index = w;
        recent_pairs = pairs;
    }

    let baseline_views: Vec<WindowEval> = baseline_evals
        .iter()
        .map(|(w, p, t)| WindowEval {
            window_index: *w,
            predictions: p,
            truth: t,
        })
        .collect();
    let (baseline_reports, baseline_pooled) = evaluate_windows(&baseline_views)?;

    let (pomdp_reports, pomdp_pooled) = if baseline_only {
        (Vec::new(), None)
    } else {
        let views: Vec<WindowEval> = pomdp_evals
            .iter()
            .map(|(w, p, t)| WindowEval {
                window_index: *w,
                predictions: p,
                truth: t,
            })
            .collect();
        let (reports, pooled) = evaluate_windows(&views)?;
        (reports, Some(pooled))
    };

    let hash = config.hash();
    let dir = &config.output.dir;
    {
        let mut body = eval::window_reports_csv(&baseline_reports);
        body.push_str(&format!("# pooled_rmse={baseline_pooled}\n"));
        write_with_hash(&dir.join("baseline_windows.csv"), &hash, &body)?;
    }
    if let Some(pooled) = pomdp_pooled {
        let mut body = eval::window_reports_csv(&pomdp_reports);
        body.push_str(&format!("# pooled_rmse={pooled}\n"));
        write_with_hash(&dir.join("pomdp_windows.csv"), &hash, &body)?;

        let mut rewards_body = String::from("window,n_pairs,reward\n");
        for (w, n, r) in &window_rewards {
            rewards_body.push_str(&format!("{w},{n},{r}\n"));
        }
        write_with_hash(&dir.join("window_rewards.csv"), &hash, &rewards_body)?;
    }

    Ok(EvaluateSummary {
        pomdp_reports,
        pomdp_pooled_rmse: pomdp_pooled,
        baseline_reports,
        baseline_pooled_rmse: baseline_pooled,
        window_rewards,
    })
}

// ---------------------------------------------------------------------------
// Simulate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SimulateSummary {
    /// Strategy name to per-seed trajectories.
    pub trajectories: BTreeMap<String, Vec<LoopTrajectory>>,
}

fn build_strategy(name: &str, config: &RunConfig, scale: RatingScale, seed: u64) -> Result<Box<dyn LoopStrategy>> {
    let hyper = PmfHyperparams {
        latent_dim: config.sim.strategy_latent_dim,
        epochs: config.sim.strategy_epochs,
        seed,
        ..config.pmf.to_hyper(seed)
    };
    match name {
        "naive-mf" => Ok(Box::new(NaiveMfStrategy::new(hyper, scale))),
        "pomdp-rec" => Ok(Box::new(PomdpRecStrategy::new(
            hyper,
            config.transition.to_hyper(derive_seed(seed, "transition")),
            QTrainConfig {
                iterations: 4,
                epochs_per_iteration: 2,
                hidden_dim: 32,
                successor_samples: 8,
                ..config.qtrain.to_config(derive_seed(seed, "qtrain"))
            },
            config.reward.to_config(&scale)?,
            config.reward.ground_truth,
            4,
            scale,
        ))),
        other => Err(Error::Config(format!("unknown strategy {other:?}"))),
    }
}

/// Runs the recurrent retrain loop for every configured strategy across the
/// seed battery and writes per-seed trajectories plus a per-epoch
/// median/interquartile summary.
pub fn run_simulate(config: &RunConfig) -> Result<SimulateSummary> {
    config.validate()?;
    let scale = config.dataset.scale()?;
    fs::create_dir_all(&config.output.dir)?;
    let hash = config.hash();
    let mut trajectories: BTreeMap<String, Vec<LoopTrajectory>> = BTreeMap::new();

    for name in &config.sim.strategies {
        let mut runs = Vec::with_capacity(config.sim.n_seeds);
        for seed_index in 0..config.sim.n_seeds {
            let world_seed = derive_seed(config.seed, &format!("world-{seed_index}"));
            let loop_seed = derive_seed(config.seed, &format!("loop-{name}-{seed_index}"));
            let world = sim::make_world_scaled(
                config.sim.n_users,
                config.sim.n_items,
                config.sim.k_true,
                config.sim.noise_sd,
                config.sim.drift_rate,
                world_seed,
                scale,
            )?
            .with_accept_threshold(config.sim.accept_threshold);
            let mut strategy = build_strategy(name, config, scale, loop_seed)?;
            let trajectory = sim::run_recurrent_loop(
                world,
                strategy.as_mut(),
                &sim::LoopConfig {
                    epochs: config.sim.epochs,
                    top_n: config.sim.top_n,
                    probe_fraction: config.sim.probe_fraction,
                    seed: loop_seed,
                },
            )?;

            let mut body = String::from("epoch,probe_rmse,coverage,positives_logged\n");
            for record in &trajectory.records {
                body.push_str(&format!(
                    "{},{},{},{}\n",
                    record.epoch, record.probe_rmse, record.coverage, record.positives_logged
                ));
            }
            write_with_hash(
                &config
                    .output
                    .dir
                    .join(format!("trajectory_{name}_seed{seed_index:02}.csv")),
                &hash,
                &body,
            )?;
            runs.push(trajectory);
        }

        let mut summary = String::from("epoch,probe_rmse_median,probe_rmse_q1,probe_rmse_q3\n");
        for epoch in 0..config.sim.epochs {
            let mut values: Vec<f64> = runs
                .iter()
                .filter_map(|t| t.records.get(epoch).map(|r| r.probe_rmse))
                .collect();
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if values.is_empty() {
                continue;
            }
            summary.push_str(&format!(
                "{},{},{},{}\n",
                epoch,
                quantile(&values, 0.5),
                quantile(&values, 0.25),
                quantile(&values, 0.75)
            ));
        }
        write_with_hash(
            &config.output.dir.join(format!("summary_{name}.csv")),
            &hash,
            &summary,
        )?;
        trajectories.insert(name.clone(), runs);
    }
    Ok(SimulateSummary { trajectories })
}

/// Linear-interpolation quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.len() == 1 {
        return sorted[0];
    }
    let position = q * (sorted.len() - 1) as f64;
    let lower = position.floor() as usize;
    let upper = position.ceil() as usize;
    let weight = position - lower as f64;
    sorted[lower] * (1.0 - weight) + sorted[upper] * weight
}

/// Where the windowed artifact for a config lives.
pub fn artifact_paths(config: &RunConfig) -> (PathBuf, PathBuf) {
    (
        config.output.dir.join(WINDOWS_FILE),
        config.output.dir.join(MANIFEST_FILE),
    )
}
