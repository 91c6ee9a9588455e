#![allow(dead_code)]

//! Shared helpers for the integration and acceptance suites: a synthetic
//! rating-log generator backed by the drifting world, plus small statistics
//! used by the acceptance checks.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use pomdp_rec_core::config::RunConfig;
use pomdp_rec_core::data::{RatingRecord, RatingScale};
use pomdp_rec_core::sim::{drift_step, make_world_scaled};

/// Shape of a generated synthetic rating log.
#[derive(Clone, Copy)]
pub struct SyntheticSpec {
    pub n_users: u32,
    pub n_items: u32,
    pub k_true: usize,
    pub noise_sd: f64,
    /// Drift applied between consecutive generation windows.
    pub drift_rate: f64,
    pub ratings_per_window: usize,
    pub n_windows: usize,
    pub scale: RatingScale,
    pub seed: u64,
}

/// Draws timestamped ratings from a drifting synthetic world: each window
/// samples pairs uniformly, observes them with noise, rounds to the integer
/// grid, then the world drifts.
pub fn synthetic_ratings(spec: &SyntheticSpec) -> Vec<RatingRecord> {
    let mut world = make_world_scaled(
        spec.n_users,
        spec.n_items,
        spec.k_true,
        spec.noise_sd,
        spec.drift_rate,
        spec.seed,
        spec.scale,
    )
    .expect("valid world spec");
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed);
    let mut records = Vec::with_capacity(spec.n_windows * spec.ratings_per_window);
    for window in 0..spec.n_windows {
        for step in 0..spec.ratings_per_window {
            let user = rng.gen_range(1..=spec.n_users);
            let item = rng.gen_range(1..=spec.n_items);
            let value = spec.scale.clip(world.observe(user, item).round());
            records.push(RatingRecord {
                user_id: user,
                item_id: item,
                value,
                timestamp: (window * spec.ratings_per_window + step) as i64,
            });
        }
        drift_step(&mut world);
    }
    records
}

/// Writes records in the MovieLens `::` format.
pub fn write_movielens(path: &Path, records: &[RatingRecord]) {
    let mut body = String::new();
    for r in records {
        writeln!(body, "{}::{}::{}::{}", r.user_id, r.item_id, r.value, r.timestamp).unwrap();
    }
    std::fs::write(path, body).expect("write dataset");
}

/// Minimal config pointing at a dataset and output directory; callers adjust
/// the sections they care about.
pub fn base_config(dataset: PathBuf, out: PathBuf, seed: u64) -> RunConfig {
    let text = format!(
        r#"
seed = {seed}

[dataset]
path = {dataset:?}

[output]
dir = {out:?}
"#
    );
    RunConfig::from_toml_str(&text).expect("valid base config")
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rank = |values: &[f64]| -> Vec<f64> {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        let mut ranks = vec![0.0; values.len()];
        let mut i = 0;
        while i < order.len() {
            let mut j = i;
            while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &idx in &order[i..=j] {
                ranks[idx] = avg;
            }
            i = j + 1;
        }
        ranks
    };
    let rx = rank(xs);
    let ry = rank(ys);
    pearson(&rx, &ry)
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

/// Least-squares slope of y over x.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}
