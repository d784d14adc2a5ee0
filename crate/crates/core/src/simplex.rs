//! Points of the probability simplex and the reinforcement update shared by
//! the model-level and partition-level learners.
//!
//! The update moves a strategy vector toward the vertex of the action that was
//! played, with a step proportional to the realized performance:
//!
//! ```text
//! v' = v + gain * (e_chosen - v),   gain = step_size * performance
//! ```
//!
//! `gain` is clamped to `[0, 1]`, which is exactly the range over which the
//! update maps the simplex into itself.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Absolute tolerance on the unit-mass constraint.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Drift threshold above which an updated vector is renormalized.
pub const RENORM_TOL: f64 = 1e-12;

/// A probability vector: nonnegative entries summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct StrategyVector {
    weights: Vec<f64>,
}

impl StrategyVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid(
                "strategy vector must have at least one entry",
            ));
        }
        if let Some(w) = weights
            .iter()
            .find(|w| !w.is_finite() || **w < 0.0 || **w > 1.0)
        {
            return Err(Error::invalid(format!("strategy entry {w} outside [0, 1]")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::invalid(format!(
                "strategy entries sum to {sum}, not 1"
            )));
        }
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform strategy needs n >= 1");
        Self {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn vertex(n: usize, index: usize) -> Self {
        assert!(
            index < n,
            "vertex index {index} out of range for dimension {n}"
        );
        let mut weights = vec![0.0; n];
        weights[index] = 1.0;
        Self { weights }
    }

    /// Projects an arbitrary finite vector onto the simplex by clipping
    /// negatives and rescaling. Falls back to uniform if nothing survives.
    pub fn from_unnormalized(raw: &[f64]) -> Self {
        let clipped: Vec<f64> = raw
            .iter()
            .map(|x| if x.is_finite() && *x > 0.0 { *x } else { 0.0 })
            .collect();
        let sum: f64 = clipped.iter().sum();
        if sum <= 0.0 {
            return Self::uniform(raw.len());
        }
        Self {
            weights: clipped.iter().map(|x| (x / sum).min(1.0)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn get(&self, i: usize) -> f64 {
        self.weights[i]
    }

    /// Index of the largest entry, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, w) in self.weights.iter().enumerate() {
            if *w > self.weights[best] {
                best = i;
            }
        }
        best
    }

    /// Distance to the nearest vertex in the Euclidean norm.
    pub fn distance_to_vertex(&self, index: usize) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let e = if i == index { 1.0 } else { 0.0 };
                (w - e) * (w - e)
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        let sum: f64 = self.weights.iter().sum();
        (sum - 1.0).abs() <= tol && self.weights.iter().all(|w| *w >= -tol && *w <= 1.0 + tol)
    }

    /// The mixture `(1 - lambda) v + lambda / n`.
    pub fn perturbed(&self, lambda: f64) -> Vec<f64> {
        let n = self.len() as f64;
        self.weights
            .iter()
            .map(|w| (1.0 - lambda) * w + lambda / n)
            .collect()
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.weights)
    }
}

impl TryFrom<Vec<f64>> for StrategyVector {
    type Error = Error;
    fn try_from(value: Vec<f64>) -> Result<Self> {
        Self::new(value)
    }
}

impl From<StrategyVector> for Vec<f64> {
    fn from(value: StrategyVector) -> Self {
        value.weights
    }
}

/// A vertex of the simplex, identified by dimension and coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UnitVector {
    dimension: usize,
    index: usize,
}

impl UnitVector {
    pub fn new(dimension: usize, index: usize) -> Result<Self> {
        if index >= dimension {
            return Err(Error::invalid(format!(
                "unit vector index {index} out of range for dimension {dimension}"
            )));
        }
        Ok(Self { dimension, index })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn index(&self) -> usize {
        self.index
    }
}

/// Result of one reinforcement step.
#[derive(Clone, Debug)]
pub struct Reinforced {
    pub vector: StrategyVector,
    /// The requested gain exceeded one and was clamped.
    pub clamped: bool,
}

/// Computes `(1 - g) v + g e_chosen` with `g = min(gain, 1)`.
pub fn replicator_update(v: &StrategyVector, chosen: UnitVector, gain: f64) -> Result<Reinforced> {
    if chosen.dimension() != v.len() {
        return Err(Error::Dimension {
            what: "replicator update",
            expected: v.len(),
            got: chosen.dimension(),
        });
    }
    if !(gain >= 0.0) || !gain.is_finite() {
        return Err(Error::invalid(format!(
            "gain must be finite and nonnegative, got {gain}"
        )));
    }
    let clamped = gain > 1.0;
    let g = gain.min(1.0);
    let mut weights: Vec<f64> = v
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let e = if i == chosen.index() { 1.0 } else { 0.0 };
            w + g * (e - w)
        })
        .collect();
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > RENORM_TOL {
        for w in &mut weights {
            *w /= sum;
        }
    }
    for w in &mut weights {
        *w = w.clamp(0.0, 1.0);
    }
    Ok(Reinforced {
        vector: StrategyVector { weights },
        clamped,
    })
}

/// Draws an index from the law `(1 - lambda) v[i] + lambda / n` with a single
/// uniform draw over the cumulative sums. A draw landing exactly on a boundary
/// goes to the lower index.
pub fn perturbed_sample(v: &StrategyVector, lambda: f64, rng: &mut RngStream) -> Result<usize> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!(
            "perturbation lambda must lie in [0, 1], got {lambda}"
        )));
    }
    let probs = v.perturbed(lambda);
    Ok(categorical(&probs, rng.uniform()))
}

/// Inverse-CDF lookup of `u` in `probs`. Zero-probability entries are never
/// returned.
pub(crate) fn categorical(probs: &[f64], u: f64) -> usize {
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p <= 0.0 {
            continue;
        }
        last_positive = i;
        cumulative += p;
        if u <= cumulative {
            return i;
        }
    }
    last_positive
}

/// The matrix with `v[j](1 - v[j])` on the diagonal and `-v[j] v[i]` off it.
/// Multiplying it by a reward vector gives the unperturbed mean field.
pub fn v_matrix(v: &StrategyVector) -> DMatrix<f64> {
    let n = v.len();
    DMatrix::from_fn(n, n, |j, i| {
        if i == j {
            v.get(j) * (1.0 - v.get(j))
        } else {
            -v.get(j) * v.get(i)
        }
    })
}

/// Same structure as [`v_matrix`], over the partition-profile simplex.
pub fn w_matrix(w: &StrategyVector) -> DMatrix<f64> {
    v_matrix(w)
}

/// `r^T M(v) r` for the matrix built by [`v_matrix`].
pub fn quadratic_form(v: &StrategyVector, r: &[f64]) -> f64 {
    let r = DVector::from_column_slice(r);
    (r.transpose() * v_matrix(v) * &r)[(0, 0)]
}
