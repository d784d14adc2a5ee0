//! Fixed mean-reward tables and the noisy reward environment built on them.
//!
//! `rewards[p][a][m]` is the long-run mean performance of model `m` on
//! subset `a` of profile `p`. The same table drives synthetic supervisor runs
//! and the mean-field oracle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardTable {
    rewards: Vec<Vec<Vec<f64>>>,
}

/// Which structural assumptions a reward table satisfies.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AssumptionReport {
    /// Rewards within every subset are pairwise distinct.
    pub distinct: bool,
    /// Every subset has a unique best model.
    pub unique_best_models: bool,
    /// With best models everywhere, a unique profile has the largest aggregate.
    pub unique_best_profile: bool,
}

impl AssumptionReport {
    pub fn holds(&self) -> bool {
        self.distinct && self.unique_best_models && self.unique_best_profile
    }
}

impl RewardTable {
    pub fn new(rewards: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if rewards.is_empty() {
            return Err(Error::invalid("a reward table needs at least one profile"));
        }
        let models = rewards[0].first().map_or(0, Vec::len);
        if models == 0 {
            return Err(Error::invalid(
                "a reward table needs at least one subset and one model",
            ));
        }
        for (p, profile) in rewards.iter().enumerate() {
            if profile.is_empty() {
                return Err(Error::invalid(format!("profile {p} has no subsets")));
            }
            for (a, subset) in profile.iter().enumerate() {
                if subset.len() != models {
                    return Err(Error::Dimension {
                        what: "models per subset",
                        expected: models,
                        got: subset.len(),
                    });
                }
                if let Some(r) = subset.iter().find(|r| !(**r > 0.0) || !r.is_finite()) {
                    return Err(Error::invalid(format!(
                        "reward {r} at profile {p}, subset {a} is not positive"
                    )));
                }
            }
        }
        Ok(Self { rewards })
    }

    /// Every subset of every profile gets the same per-model rewards.
    pub fn replicated(layout: &[usize], per_model: &[f64]) -> Result<Self> {
        Self::new(
            layout
                .iter()
                .map(|n| vec![per_model.to_vec(); *n])
                .collect(),
        )
    }

    pub fn profiles(&self) -> usize {
        self.rewards.len()
    }

    pub fn models(&self) -> usize {
        self.rewards[0][0].len()
    }

    /// Subset count per profile.
    pub fn layout(&self) -> Vec<usize> {
        self.rewards.iter().map(Vec::len).collect()
    }

    pub fn reward(&self, profile: usize, subset: usize, model: usize) -> f64 {
        self.rewards[profile][subset][model]
    }

    pub fn subset_rewards(&self, profile: usize, subset: usize) -> &[f64] {
        &self.rewards[profile][subset]
    }

    pub fn as_nested(&self) -> &[Vec<Vec<f64>>] {
        &self.rewards
    }

    /// Best model of each subset of `profile` (lowest index on ties).
    pub fn best_models(&self, profile: usize) -> Vec<usize> {
        self.rewards[profile].iter().map(|r| argmax(r)).collect()
    }

    /// Aggregate reward of `profile` when every subset uses its best model.
    pub fn best_aggregate(&self, profile: usize) -> f64 {
        self.rewards[profile].iter().map(|r| r[argmax(r)]).sum()
    }

    pub fn best_profile(&self) -> usize {
        let aggregates: Vec<f64> = (0..self.profiles())
            .map(|p| self.best_aggregate(p))
            .collect();
        argmax(&aggregates)
    }

    pub fn check(&self) -> AssumptionReport {
        let distinct = self.rewards.iter().flatten().all(|r| {
            let mut s = r.clone();
            s.sort_by(f64::total_cmp);
            s.windows(2).all(|w| w[0] != w[1])
        });
        let unique_best_models = self.rewards.iter().flatten().all(|r| unique_max(r));
        let aggregates: Vec<f64> = (0..self.profiles())
            .map(|p| self.best_aggregate(p))
            .collect();
        AssumptionReport {
            distinct,
            unique_best_models,
            unique_best_profile: unique_max(&aggregates),
        }
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

fn unique_max(xs: &[f64]) -> bool {
    let best = xs[argmax(xs)];
    xs.iter().filter(|x| **x == best).count() == 1
}

/// Draws noisy realizations `r * exp(sigma Z - sigma^2 / 2)` of table
/// rewards; the factor has unit mean, so the table holds the expectations.
#[derive(Clone, Debug)]
pub struct RewardEnvironment {
    table: RewardTable,
    sigma: f64,
    rng: RngStream,
}

impl RewardEnvironment {
    pub fn new(table: RewardTable, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::invalid(format!(
                "reward noise must be nonnegative, got {sigma}"
            )));
        }
        Ok(Self {
            table,
            sigma,
            rng: RngStream::new(seed),
        })
    }

    pub fn table(&self) -> &RewardTable {
        &self.table
    }

    /// Swaps the mean rewards mid-run; the layout must not change.
    pub fn set_table(&mut self, table: RewardTable) -> Result<()> {
        if table.layout() != self.table.layout() || table.models() != self.table.models() {
            return Err(Error::invalid(
                "replacement reward table changes the layout",
            ));
        }
        self.table = table;
        Ok(())
    }

    pub fn realize(&mut self, profile: usize, subset: usize, model: usize) -> f64 {
        let mean = self.table.reward(profile, subset, model);
        if self.sigma == 0.0 {
            return mean;
        }
        let z = self.rng.standard_normal();
        mean * (self.sigma * z - 0.5 * self.sigma * self.sigma).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(RewardTable::new(vec![]).is_err());
        assert!(RewardTable::new(vec![vec![vec![1.0, 0.0]]]).is_err());
        assert!(RewardTable::new(vec![vec![vec![1.0, 2.0]], vec![vec![1.0]]]).is_err());
        let t = RewardTable::new(vec![
            vec![vec![1.0, 2.0]],
            vec![vec![3.0, 1.0], vec![0.5, 0.7]],
        ])
        .unwrap();
        assert_eq!(t.layout(), vec![1, 2]);
        assert_eq!(t.best_models(1), vec![0, 1]);
        assert_eq!(t.best_aggregate(1), 3.7);
        assert_eq!(t.best_profile(), 1);
        assert!(t.check().holds());
    }

    #[test]
    fn ties_are_reported() {
        let t =
            RewardTable::new(vec![vec![vec![2.0, 2.0, 1.0]], vec![vec![1.0, 2.0, 3.0]]]).unwrap();
        let report = t.check();
        assert!(!report.distinct && !report.unique_best_models && report.unique_best_profile);
        let t = RewardTable::replicated(&[1, 1], &[1.0, 2.0]).unwrap();
        assert!(!t.check().unique_best_profile);
    }

    #[test]
    fn noise_preserves_the_mean() {
        let t = RewardTable::new(vec![vec![vec![2.0]]]).unwrap();
        let mut env = RewardEnvironment::new(t, 0.5, 3).unwrap();
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| env.realize(0, 0, 0)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 2.0).abs() < 4.0 * se, "mean {mean}, se {se}");
        assert!(draws.iter().all(|x| *x > 0.0));
    }
}
