//! Belief-transition estimation: a logistic model on concatenated belief
//! pairs whose output serves as the transition probability, plus normalized
//! successor distributions for Bellman targets.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::pmf::BeliefState;

/// Sigmoid inputs are clamped here so the output stays strictly inside
/// (0, 1) in f64.
const LOGIT_CLAMP: f64 = 36.0;

/// Training settings for the transition model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionHyper {
    pub learning_rate: f64,
    pub epochs: usize,
    /// L2 weight on everything except the bias.
    pub l2: f64,
    pub seed: u64,
}

impl Default for TransitionHyper {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 20,
            l2: 1e-4,
            seed: 0,
        }
    }
}

/// Logistic model over `[b; b'; 1]` features; the bias is the last weight.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    weights: Vec<f64>,
    /// (positive, negative) pair counts seen at fit time.
    pub trained_on: (usize, usize),
}

impl LogisticModel {
    pub fn from_weights(weights: Vec<f64>) -> Self {
        Self {
            weights,
            trained_on: (0, 0),
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Dimension of each belief vector this model accepts (`2k`).
    pub fn belief_dim(&self) -> usize {
        (self.weights.len() - 1) / 2
    }

    /// Text dump: the weight count on the first line, then one weight per
    /// line (bias last).
    pub fn write_to<W: std::io::Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "{}", self.weights.len())?;
        for w in &self.weights {
            writeln!(out, "{w}")?;
        }
        Ok(())
    }

    pub fn read_from<R: std::io::BufRead>(input: R) -> Result<Self> {
        let mut lines = input
            .lines()
            .map(|l| l.map_err(Error::from))
            .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty() || s.trim_start().starts_with('#')));
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty transition dump".into()))??;
        let count: usize = header
            .trim()
            .parse()
            .map_err(|_| Error::Parse("bad transition weight count".into()))?;
        let mut weights = Vec::with_capacity(count);
        for _ in 0..count {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse("transition dump truncated".into()))??;
            weights.push(
                line.trim()
                    .parse()
                    .map_err(|_| Error::Parse("bad transition weight".into()))?,
            );
        }
        Ok(Self::from_weights(weights))
    }

    fn logit(&self, b: &BeliefState, b_next: &BeliefState) -> Result<f64> {
        let d = self.belief_dim();
        if b.dim() != d || b_next.dim() != d {
            return Err(Error::Shape(format!(
                "model expects belief dim {d}, got {} and {}",
                b.dim(),
                b_next.dim()
            )));
        }
        let mut z = self.weights[2 * d];
        for (w, x) in self.weights[..d].iter().zip(&b.vector) {
            z += w * x;
        }
        for (w, x) in self.weights[d..2 * d].iter().zip(&b_next.vector) {
            z += w * x;
        }
        Ok(z)
    }
}

fn sigmoid(z: f64) -> f64 {
    let z = z.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
    1.0 / (1.0 + (-z).exp())
}

/// Fits the transition model on labelled belief pairs. Positives are
/// observed transitions (y = 1); negatives are sampled non-transitions.
pub fn fit_transition(
    positives: &[(BeliefState, BeliefState)],
    negatives: &[(BeliefState, BeliefState)],
    hyper: &TransitionHyper,
) -> Result<LogisticModel> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::ClassImbalance(format!(
            "{} positive, {} negative pairs",
            positives.len(),
            negatives.len()
        )));
    }
    let d = positives[0].0.dim();
    let mut samples: Vec<(&BeliefState, &BeliefState, f64)> = Vec::new();
    for (b, bn) in positives {
        samples.push((b, bn, 1.0));
    }
    for (b, bn) in negatives {
        samples.push((b, bn, 0.0));
    }
    for (b, bn, _) in &samples {
        if b.dim() != d || bn.dim() != d {
            return Err(Error::Shape("inconsistent belief dimensions".into()));
        }
    }

    let mut model = LogisticModel {
        weights: vec![0.0; 2 * d + 1],
        trained_on: (positives.len(), negatives.len()),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    for _ in 0..hyper.epochs {
        samples.shuffle(&mut rng);
        for &(b, bn, y) in &samples {
            let err = sigmoid(model.logit(b, bn)?) - y;
            let lr = hyper.learning_rate;
            for (w, x) in model.weights[..d].iter_mut().zip(&b.vector) {
                *w -= lr * (err * x + hyper.l2 * *w);
            }
            for (w, x) in model.weights[d..2 * d].iter_mut().zip(&bn.vector) {
                *w -= lr * (err * x + hyper.l2 * *w);
            }
            model.weights[2 * d] -= lr * err;
        }
    }
    if !model.weights.iter().all(|w| w.is_finite()) {
        return Err(Error::Divergence("non-finite transition weights".into()));
    }
    Ok(model)
}

/// Estimated transition probability from `b` to `b_next`, strictly in (0, 1).
pub fn tau(model: &LogisticModel, b: &BeliefState, b_next: &BeliefState) -> Result<f64> {
    Ok(sigmoid(model.logit(b, b_next)?))
}

/// Transition weights from `b_prime` to each candidate, normalized to sum
/// to one.
pub fn successor_distribution(
    model: &LogisticModel,
    b_prime: &BeliefState,
    candidates: &[BeliefState],
) -> Result<Vec<f64>> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let mut weights = Vec::with_capacity(candidates.len());
    for candidate in candidates {
        weights.push(tau(model, b_prime, candidate)?);
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(weights)
}

/// Regularized negative log-likelihood on explicit feature rows (without the
/// implicit bias input). Exposed so tests can difference it numerically.
pub fn logistic_loss(weights: &[f64], xs: &[Vec<f64>], ys: &[f64], l2: f64) -> f64 {
    let d = weights.len() - 1;
    let mut loss = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let z: f64 = weights[d] + x.iter().zip(&weights[..d]).map(|(xi, wi)| xi * wi).sum::<f64>();
        // log(1 + e^z) - y z, computed stably for both signs of z.
        loss += if z > 0.0 {
            z + (-z).exp().ln_1p() - y * z
        } else {
            z.exp().ln_1p() - y * z
        };
    }
    loss + 0.5 * l2 * weights[..d].iter().map(|w| w * w).sum::<f64>()
}

/// Analytic gradient of [`logistic_loss`].
pub fn logistic_gradient(weights: &[f64], xs: &[Vec<f64>], ys: &[f64], l2: f64) -> Vec<f64> {
    let d = weights.len() - 1;
    let mut grad = vec![0.0; weights.len()];
    for (x, &y) in xs.iter().zip(ys) {
        let z: f64 = weights[d] + x.iter().zip(&weights[..d]).map(|(xi, wi)| xi * wi).sum::<f64>();
        let err = sigmoid(z) - y;
        for (g, xi) in grad[..d].iter_mut().zip(x) {
            *g += err * xi;
        }
        grad[d] += err;
    }
    for (g, w) in grad[..d].iter_mut().zip(&weights[..d]) {
        *g += l2 * w;
    }
    grad
}
