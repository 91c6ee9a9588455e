//! Latent-factor estimation from a partially observed rating matrix and the
//! belief states derived from it.
//!
//! Factors are fit by seeded stochastic gradient descent on the regularized
//! squared-error objective
//! `sum_observed (O_ij - U_i . V_j)^2 + lambda_u ||U||^2 + lambda_v ||V||^2`.
//! The belief state of a (user, item) pair is the concatenation of the
//! user's and item's latent rows, and `h` recovers the predicted interaction
//! as the dot product of the two halves.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::ObservationMatrix;
use crate::error::{Error, Result};

/// Hyperparameters for one factorization fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmfHyperparams {
    /// Latent dimension `k`.
    pub latent_dim: usize,
    /// User-side regularization weight.
    pub lambda_u: f64,
    /// Item-side regularization weight.
    pub lambda_v: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Factors initialize uniformly in `[-init_scale, init_scale]`.
    pub init_scale: f64,
    /// Subtract the global mean before fitting and add it back on predict.
    pub center: bool,
    pub seed: u64,
}

impl Default for PmfHyperparams {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            lambda_u: 0.05,
            lambda_v: 0.05,
            learning_rate: 0.01,
            epochs: 30,
            init_scale: 0.1,
            center: true,
            seed: 0,
        }
    }
}

impl PmfHyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::Config("latent_dim must be >= 1".into()));
        }
        if self.lambda_u < 0.0 || self.lambda_v < 0.0 {
            return Err(Error::Config("regularization must be >= 0".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if !(self.init_scale > 0.0) {
            return Err(Error::Config("init_scale must be > 0".into()));
        }
        Ok(())
    }
}

/// Learned latent factor pair. Row `i-1` of `u` holds user `i`'s latent
/// interests; row `j-1` of `v` holds item `j`'s latent features.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    u: Vec<f64>,
    v: Vec<f64>,
    n_users: usize,
    n_items: usize,
    pub global_mean: f64,
    pub hyper: PmfHyperparams,
}

impl FactorModel {
    pub fn latent_dim(&self) -> usize {
        self.hyper.latent_dim
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn user_factors(&self, user_id: u32) -> Result<&[f64]> {
        let k = self.hyper.latent_dim;
        if user_id == 0 || user_id as usize > self.n_users {
            return Err(Error::Index(format!(
                "user {user_id} outside 1..={}",
                self.n_users
            )));
        }
        let row = (user_id as usize - 1) * k;
        Ok(&self.u[row..row + k])
    }

    pub fn item_factors(&self, item_id: u32) -> Result<&[f64]> {
        let k = self.hyper.latent_dim;
        if item_id == 0 || item_id as usize > self.n_items {
            return Err(Error::Index(format!(
                "item {item_id} outside 1..={}",
                self.n_items
            )));
        }
        let row = (item_id as usize - 1) * k;
        Ok(&self.v[row..row + k])
    }

    /// Predicted interaction `U_i . V_j` plus the global mean when centering
    /// was active. Unclipped.
    pub fn predict(&self, user_id: u32, item_id: u32) -> Result<f64> {
        let u = self.user_factors(user_id)?;
        let v = self.item_factors(item_id)?;
        Ok(dot(u, v) + self.global_mean)
    }

    /// Writes the model as a text dump: a header line
    /// `k n_users n_items global_mean` followed by U rows then V rows.
    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(
            out,
            "{} {} {} {}",
            self.hyper.latent_dim, self.n_users, self.n_items, self.global_mean
        )?;
        for row in self.u.chunks(self.hyper.latent_dim) {
            writeln!(out, "{}", join_floats(row))?;
        }
        for row in self.v.chunks(self.hyper.latent_dim) {
            writeln!(out, "{}", join_floats(row))?;
        }
        Ok(())
    }

    /// Reads a model written by [`FactorModel::write_to`]. Hyperparameters
    /// other than the latent dimension are not stored and come back as
    /// defaults.
    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input
            .lines()
            .map(|l| l.map_err(Error::from))
            .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty() || s.trim_start().starts_with('#')));
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty factor dump".into()))??;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(Error::Parse("factor dump header needs 4 fields".into()));
        }
        let k: usize = parts[0]
            .parse()
            .map_err(|_| Error::Parse("bad latent dim".into()))?;
        let n_users: usize = parts[1]
            .parse()
            .map_err(|_| Error::Parse("bad user count".into()))?;
        let n_items: usize = parts[2]
            .parse()
            .map_err(|_| Error::Parse("bad item count".into()))?;
        let global_mean: f64 = parts[3]
            .parse()
            .map_err(|_| Error::Parse("bad global mean".into()))?;

        let mut read_rows = |count: usize| -> Result<Vec<f64>> {
            let mut flat = Vec::with_capacity(count * k);
            for _ in 0..count {
                let line = lines
                    .next()
                    .ok_or_else(|| Error::Parse("factor dump truncated".into()))??;
                let row: Vec<f64> = line
                    .split_whitespace()
                    .map(|t| t.parse().map_err(|_| Error::Parse("bad factor value".into())))
                    .collect::<Result<_>>()?;
                if row.len() != k {
                    return Err(Error::Parse(format!(
                        "factor row has {} values, expected {k}",
                        row.len()
                    )));
                }
                flat.extend(row);
            }
            Ok(flat)
        };
        let u = read_rows(n_users)?;
        let v = read_rows(n_items)?;
        Ok(Self {
            u,
            v,
            n_users,
            n_items,
            global_mean,
            hyper: PmfHyperparams {
                latent_dim: k,
                ..PmfHyperparams::default()
            },
        })
    }

    /// Builds a model directly from factor rows; intended for tests and
    /// simulators that need handcrafted factors.
    pub fn from_parts(
        u: Vec<f64>,
        v: Vec<f64>,
        latent_dim: usize,
        global_mean: f64,
    ) -> Result<Self> {
        if latent_dim == 0 || u.len() % latent_dim != 0 || v.len() % latent_dim != 0 {
            return Err(Error::Shape(format!(
                "factor lengths {} / {} not divisible by k={latent_dim}",
                u.len(),
                v.len()
            )));
        }
        let n_users = u.len() / latent_dim;
        let n_items = v.len() / latent_dim;
        Ok(Self {
            u,
            v,
            n_users,
            n_items,
            global_mean,
            hyper: PmfHyperparams {
                latent_dim,
                ..PmfHyperparams::default()
            },
        })
    }
}

/// Belief state of one (user, item) pair: the user row followed by the item
/// row, `2k` values in total.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    pub vector: Vec<f64>,
    pub user_id: u32,
    pub item_id: u32,
}

impl BeliefState {
    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn join_floats(row: &[f64]) -> String {
    row.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Fits latent factors to the observed entries by seeded SGD.
pub fn fit_pmf(obs: &ObservationMatrix, hyper: &PmfHyperparams) -> Result<FactorModel> {
    hyper.validate()?;
    if obs.is_empty() {
        return Err(Error::EmptyData("no observed entries to fit".into()));
    }
    let k = hyper.latent_dim;
    let n_users = obs.n_users as usize;
    let n_items = obs.n_items as usize;

    let global_mean = if hyper.center {
        obs.entries().map(|(_, _, v)| v).sum::<f64>() / obs.len() as f64
    } else {
        0.0
    };
    let mut samples: Vec<(usize, usize, f64)> = obs
        .entries()
        .map(|(u, i, v)| (u as usize - 1, i as usize - 1, v - global_mean))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut u = init_factors(n_users * k, hyper.init_scale, &mut rng);
    let mut v = init_factors(n_items * k, hyper.init_scale, &mut rng);

    for epoch in 0..hyper.epochs {
        samples.shuffle(&mut rng);
        for &(ui, ii, value) in &samples {
            let urow = ui * k;
            let irow = ii * k;
            let err = value - dot(&u[urow..urow + k], &v[irow..irow + k]);
            for f in 0..k {
                let uf = u[urow + f];
                let vf = v[irow + f];
                u[urow + f] += hyper.learning_rate * (err * vf - hyper.lambda_u * uf);
                v[irow + f] += hyper.learning_rate * (err * uf - hyper.lambda_v * vf);
            }
        }
        if !all_finite(&u) || !all_finite(&v) {
            return Err(Error::Divergence(format!(
                "non-finite factor after epoch {epoch}"
            )));
        }
    }

    Ok(FactorModel {
        u,
        v,
        n_users,
        n_items,
        global_mean,
        hyper: *hyper,
    })
}

fn init_factors(len: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-scale..scale)).collect()
}

fn all_finite(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}

/// Belief state `<U_i, V_j>` for one pair.
pub fn belief(model: &FactorModel, user_id: u32, item_id: u32) -> Result<BeliefState> {
    let u = model.user_factors(user_id)?;
    let v = model.item_factors(item_id)?;
    let mut vector = Vec::with_capacity(u.len() + v.len());
    vector.extend_from_slice(u);
    vector.extend_from_slice(v);
    Ok(BeliefState {
        vector,
        user_id,
        item_id,
    })
}

/// Prediction `h(b)`: the dot product of the first and second halves of the
/// belief vector.
pub fn predict_h(b: &BeliefState) -> Result<f64> {
    if b.vector.len() % 2 != 0 {
        return Err(Error::Shape(format!(
            "belief vector length {} is odd",
            b.vector.len()
        )));
    }
    let half = b.vector.len() / 2;
    Ok(dot(&b.vector[..half], &b.vector[half..]))
}

/// Full objective on explicit factor vectors; entries hold 0-based
/// `(user_row, item_row, value)`.
pub fn pmf_objective(
    u: &[f64],
    v: &[f64],
    k: usize,
    entries: &[(usize, usize, f64)],
    lambda_u: f64,
    lambda_v: f64,
) -> f64 {
    let data: f64 = entries
        .iter()
        .map(|&(ui, ii, value)| {
            let err = value - dot(&u[ui * k..(ui + 1) * k], &v[ii * k..(ii + 1) * k]);
            err * err
        })
        .sum();
    data + lambda_u * dot(u, u) + lambda_v * dot(v, v)
}

/// Analytic gradient of [`pmf_objective`] with respect to every factor
/// entry, returned as `(grad_u, grad_v)`.
pub fn pmf_gradient(
    u: &[f64],
    v: &[f64],
    k: usize,
    entries: &[(usize, usize, f64)],
    lambda_u: f64,
    lambda_v: f64,
) -> (Vec<f64>, Vec<f64>) {
    let mut gu: Vec<f64> = u.iter().map(|x| 2.0 * lambda_u * x).collect();
    let mut gv: Vec<f64> = v.iter().map(|x| 2.0 * lambda_v * x).collect();
    for &(ui, ii, value) in entries {
        let urow = ui * k;
        let irow = ii * k;
        let err = value - dot(&u[urow..urow + k], &v[irow..irow + k]);
        for f in 0..k {
            gu[urow + f] += -2.0 * err * v[irow + f];
            gv[irow + f] += -2.0 * err * u[urow + f];
        }
    }
    (gu, gv)
}
