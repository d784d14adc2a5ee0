//! Joint partition/model supervisor.
//!
//! The state keeps one strategy vector over partition profiles and one
//! strategy vector over models per (profile, subset) pair. Each evaluation
//! reinforces the profile that was in use with its aggregate performance,
//! reinforces every subset's model with its own performance, then draws the
//! next profile and the models serving its subsets. Only drawn models are
//! trained.
//!
//! Performances arrive through [`Performance`], so the same state machine
//! serves prediction experiments and synthetic reward tables.

use std::ops::Range;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{predict, PredictorSpec};
use crate::partition::PartitionProfile;
use crate::plant::History;
use crate::rng::RngStream;
use crate::scenario::RewardEnvironment;
use crate::simplex::{perturbed_sample, replicator_update, StrategyVector, UnitVector};

pub const DEFAULT_R_MAX: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupervisorConfig {
    pub epsilon: f64,
    pub lambda: f64,
    #[serde(default = "default_r_max")]
    pub r_max: f64,
}

fn default_r_max() -> f64 {
    DEFAULT_R_MAX
}

impl SupervisorConfig {
    pub fn new(epsilon: f64, lambda: f64) -> Result<Self> {
        let config = Self {
            epsilon,
            lambda,
            r_max: DEFAULT_R_MAX,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_r_max(mut self, r_max: f64) -> Result<Self> {
        self.r_max = r_max;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::invalid(format!(
                "step size must be positive, got {}",
                self.epsilon
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid(format!(
                "perturbation must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if !(self.r_max > 0.0) {
            return Err(Error::invalid(format!(
                "performance cap must be positive, got {}",
                self.r_max
            )));
        }
        Ok(())
    }
}

/// Performance of one subset over one evaluation interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Performance {
    Value {
        r: f64,
        eta: usize,
        capped: bool,
    },
    /// No sample of the interval fell in the subset.
    NoData,
}

impl Performance {
    /// A realized performance reported directly (synthetic environments).
    pub fn reward(r: f64) -> Self {
        Performance::Value {
            r,
            eta: 1,
            capped: false,
        }
    }

    /// Contribution to the aggregate; zero without data.
    pub fn value(&self) -> f64 {
        match self {
            Performance::Value { r, .. } => *r,
            Performance::NoData => 0.0,
        }
    }

    pub fn eta(&self) -> usize {
        match self {
            Performance::Value { eta, .. } => *eta,
            Performance::NoData => 0,
        }
    }
}

/// `eta / sum_sq`, capped at `r_max`.
pub fn performance_from_errors(sum_sq: f64, eta: usize, r_max: f64) -> Performance {
    if eta == 0 {
        return Performance::NoData;
    }
    let raw = eta as f64 / sum_sq;
    if !(raw < r_max) {
        debug!("performance cap engaged: {eta} samples with squared error {sum_sq:e}");
        return Performance::Value {
            r: r_max,
            eta,
            capped: true,
        };
    }
    Performance::Value {
        r: raw,
        eta,
        capped: false,
    }
}

/// Inverse mean squared one-step error over the samples of `interval` whose
/// input falls in `subset` of `profile`. `predictions[i]` is the prediction
/// of `y(interval.start + i + 1)`.
pub fn evaluate_model(
    h: &History,
    predictions: &[Vec<f64>],
    interval: Range<usize>,
    profile: &PartitionProfile,
    subset: usize,
    r_max: f64,
) -> Result<Performance> {
    if predictions.len() != interval.len() {
        return Err(Error::Dimension {
            what: "interval predictions",
            expected: interval.len(),
            got: predictions.len(),
        });
    }
    if interval.end >= h.len() {
        return Err(Error::invalid(format!(
            "interval {interval:?} needs samples beyond the history"
        )));
    }
    let mut sum_sq = 0.0;
    let mut eta = 0;
    for (j, pred) in interval.zip(predictions) {
        if profile.locate_index(h.u(j))? != subset {
            continue;
        }
        sum_sq += squared_error(h.y(j + 1), pred);
        eta += 1;
    }
    Ok(performance_from_errors(sum_sq, eta, r_max))
}

pub fn squared_error(y: &[f64], yhat: &[f64]) -> f64 {
    y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum()
}

/// Operation counts kept for the complexity checks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    pub evaluations: u64,
    pub profile_updates: u64,
    pub model_updates: u64,
    pub trainings: u64,
    /// Strategy-vector coordinate operations (one per coordinate touched by
    /// an update or a draw).
    pub basic_ops: u64,
    pub profile_clamps: u64,
    pub model_clamps: u64,
    pub no_data: u64,
}

/// What one joint evaluation did.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub k: usize,
    /// Profile that served the evaluated interval.
    pub profile: usize,
    /// Models that served its subsets.
    pub models: Vec<usize>,
    pub performances: Vec<Performance>,
    pub aggregate: f64,
    /// Profile drawn for the next interval.
    pub next_profile: usize,
    pub next_models: Vec<usize>,
    pub trainings: usize,
    pub basic_ops: u64,
}

#[derive(Clone, Debug)]
pub struct SupervisorState {
    config: SupervisorConfig,
    layout: Vec<usize>,
    models: usize,
    w: StrategyVector,
    v: Vec<Vec<StrategyVector>>,
    profile: usize,
    assignment: Vec<Vec<usize>>,
    rng: RngStream,
    k: usize,
    counters: Counters,
}

impl SupervisorState {
    /// Uniform strategies, profile 0 and model 0 everywhere. `layout[p]` is
    /// the subset count of profile `p`.
    pub fn new(
        config: SupervisorConfig,
        layout: Vec<usize>,
        models: usize,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if layout.is_empty() || layout.contains(&0) || models == 0 {
            return Err(Error::invalid(
                "supervisor needs at least one profile, subset and model",
            ));
        }
        Ok(Self {
            config,
            w: StrategyVector::uniform(layout.len()),
            v: layout
                .iter()
                .map(|n| vec![StrategyVector::uniform(models); *n])
                .collect(),
            profile: 0,
            assignment: layout.iter().map(|n| vec![0; *n]).collect(),
            layout,
            models,
            rng: RngStream::new(seed),
            k: 0,
            counters: Counters::default(),
        })
    }

    pub fn config(&self) -> &SupervisorConfig {
        &self.config
    }

    pub fn layout(&self) -> &[usize] {
        &self.layout
    }

    pub fn model_count(&self) -> usize {
        self.models
    }

    pub fn w(&self) -> &StrategyVector {
        &self.w
    }

    pub fn v(&self, profile: usize, subset: usize) -> &StrategyVector {
        &self.v[profile][subset]
    }

    pub fn all_v(&self) -> &[Vec<StrategyVector>] {
        &self.v
    }

    /// Profile serving the current interval.
    pub fn profile(&self) -> usize {
        self.profile
    }

    /// Models currently assigned to the subsets of `profile`.
    pub fn assignment(&self, profile: usize) -> &[usize] {
        &self.assignment[profile]
    }

    /// Evaluations completed so far.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    /// Number of strategy vectors held: one per (profile, subset) plus `w`.
    pub fn stored_vectors(&self) -> usize {
        self.v.iter().map(Vec::len).sum::<usize>() + 1
    }

    /// Overrides the starting profile and strategies (used by consistency
    /// checks that start away from the uniform point).
    pub fn set_strategies(&mut self, w: StrategyVector, v: Vec<Vec<StrategyVector>>) -> Result<()> {
        if w.len() != self.layout.len() {
            return Err(Error::Dimension {
                what: "profile strategy",
                expected: self.layout.len(),
                got: w.len(),
            });
        }
        let shape_ok = v.len() == self.layout.len()
            && v.iter()
                .zip(&self.layout)
                .all(|(b, n)| b.len() == *n && b.iter().all(|s| s.len() == self.models));
        if !shape_ok {
            return Err(Error::invalid(
                "model strategies do not match the supervisor layout",
            ));
        }
        self.w = w;
        self.v = v;
        Ok(())
    }

    fn check_performances(&self, profile: usize, perfs: &[Performance]) -> Result<()> {
        if perfs.len() != self.layout[profile] {
            return Err(Error::Dimension {
                what: "subset performances",
                expected: self.layout[profile],
                got: perfs.len(),
            });
        }
        Ok(())
    }

    fn reinforce_model(&mut self, profile: usize, subset: usize, perf: Performance) -> Result<()> {
        match perf {
            Performance::NoData => {
                self.counters.no_data += 1;
            }
            Performance::Value { r, .. } => {
                let chosen = UnitVector::new(self.models, self.assignment[profile][subset])?;
                let out =
                    replicator_update(&self.v[profile][subset], chosen, self.config.epsilon * r)?;
                if out.clamped {
                    self.counters.model_clamps += 1;
                    warn!("model gain clamped at profile {profile}, subset {subset} (r = {r})");
                }
                self.v[profile][subset] = out.vector;
                self.counters.model_updates += 1;
                self.counters.basic_ops += self.models as u64;
            }
        }
        Ok(())
    }

    fn draw_model<T>(&mut self, profile: usize, subset: usize, train: &mut T) -> Result<usize>
    where
        T: FnMut(usize, usize, usize) -> Result<()>,
    {
        let m = perturbed_sample(&self.v[profile][subset], self.config.lambda, &mut self.rng)?;
        self.counters.basic_ops += self.models as u64;
        self.assignment[profile][subset] = m;
        train(profile, subset, m)?;
        self.counters.trainings += 1;
        Ok(m)
    }

    /// Model selection on one subset: reinforce the model that served it,
    /// draw its successor and train only that model.
    pub fn step_model<T>(
        &mut self,
        profile: usize,
        subset: usize,
        perf: Performance,
        train: &mut T,
    ) -> Result<usize>
    where
        T: FnMut(usize, usize, usize) -> Result<()>,
    {
        if profile >= self.layout.len() || subset >= self.layout[profile] {
            return Err(Error::invalid(format!(
                "no subset {subset} in profile {profile}"
            )));
        }
        self.reinforce_model(profile, subset, perf)?;
        self.draw_model(profile, subset, train)
    }

    /// Profile selection: reinforce the current profile with the summed
    /// subset performances and draw the next one. Returns the new profile.
    pub fn step_profile(&mut self, perfs: &[Performance]) -> Result<usize> {
        self.check_performances(self.profile, perfs)?;
        let aggregate: f64 = perfs.iter().map(Performance::value).sum();
        let chosen = UnitVector::new(self.layout.len(), self.profile)?;
        let out = replicator_update(&self.w, chosen, self.config.epsilon * aggregate)?;
        if out.clamped {
            self.counters.profile_clamps += 1;
            warn!("profile gain clamped (R = {aggregate})");
        }
        self.w = out.vector;
        self.counters.profile_updates += 1;
        let next = perturbed_sample(&self.w, self.config.lambda, &mut self.rng)?;
        self.counters.basic_ops += 2 * self.layout.len() as u64;
        self.profile = next;
        Ok(next)
    }

    /// One joint evaluation. `perfs` holds the performance of every subset of
    /// the profile that served the interval; `train(p, a, m)` is called once
    /// per subset of the newly drawn profile.
    pub fn step_joint<T>(&mut self, perfs: &[Performance], train: &mut T) -> Result<StepRecord>
    where
        T: FnMut(usize, usize, usize) -> Result<()>,
    {
        let ops_before = self.counters.basic_ops;
        let trainings_before = self.counters.trainings;
        let served = self.profile;
        self.check_performances(served, perfs)?;
        let models = self.assignment[served].clone();
        let aggregate = perfs.iter().map(Performance::value).sum();
        let next = self.step_profile(perfs)?;
        for (a, perf) in perfs.iter().enumerate() {
            self.reinforce_model(served, a, *perf)?;
        }
        let next_models = (0..self.layout[next])
            .map(|a| self.draw_model(next, a, train))
            .collect::<Result<Vec<_>>>()?;
        self.k += 1;
        self.counters.evaluations += 1;
        Ok(StepRecord {
            k: self.k,
            profile: served,
            models,
            performances: perfs.to_vec(),
            aggregate,
            next_profile: next,
            next_models,
            trainings: (self.counters.trainings - trainings_before) as usize,
            basic_ops: self.counters.basic_ops - ops_before,
        })
    }

    /// Largest sup-norm distance of `w` and of the `v` blocks of `profile`
    /// from the pure strategies `(profile, best)`.
    pub fn distance_to_pure(&self, profile: usize, best: &[usize]) -> f64 {
        self.v[profile]
            .iter()
            .zip(best)
            .map(|(v, m)| v.distance_to_vertex(*m))
            .fold(self.w.distance_to_vertex(profile), f64::max)
    }

    /// Most probable model of every subset of `profile`.
    pub fn modal_models(&self, profile: usize) -> Vec<usize> {
        self.v[profile].iter().map(StrategyVector::argmax).collect()
    }
}

/// One joint evaluation against a synthetic reward environment: the serving
/// profile and models receive noisy realizations of their table rewards.
pub fn synthetic_step(
    state: &mut SupervisorState,
    env: &mut RewardEnvironment,
) -> Result<StepRecord> {
    let p = state.profile();
    let perfs: Vec<Performance> = state
        .assignment(p)
        .to_vec()
        .into_iter()
        .enumerate()
        .map(|(a, m)| Performance::reward(env.realize(p, a, m).min(state.config().r_max)))
        .collect();
    state.step_joint(&perfs, &mut |_, _, _| Ok(()))
}

/// Runs `evaluations` synthetic steps, handing every record to `observe`.
pub fn run_synthetic<F>(
    config: SupervisorConfig,
    env: &mut RewardEnvironment,
    evaluations: usize,
    seed: u64,
    mut observe: F,
) -> Result<SupervisorState>
where
    F: FnMut(&SupervisorState, &StepRecord),
{
    let table = env.table();
    let mut state = SupervisorState::new(config, table.layout(), table.models(), seed)?;
    for _ in 0..evaluations {
        let record = synthetic_step(&mut state, env)?;
        observe(&state, &record);
    }
    Ok(state)
}

/// Index of the smallest total error; the lowest index wins ties.
pub fn argmin_error(totals: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, t) in totals.iter().enumerate() {
        if best.is_none_or(|b| *t < totals[b]) {
            best = Some(i);
        }
    }
    best
}

/// Best model over the sample set `q`: the trained model with the smallest
/// summed squared one-step error `|y(j+1) - S(H_j)|^2`, `j` in `q`.
pub fn exhaustive_baseline(models: &[PredictorSpec], h: &History, q: &[usize]) -> Result<usize> {
    if models.is_empty() {
        return Err(Error::invalid("the model menu is empty"));
    }
    let mut totals = vec![0.0; models.len()];
    for (m, spec) in models.iter().enumerate() {
        for &j in q {
            if j + 1 >= h.len() {
                return Err(Error::invalid(format!(
                    "sample {j} has no successor in the history"
                )));
            }
            totals[m] += squared_error(h.y(j + 1), &predict(spec, h, j)?);
        }
    }
    Ok(argmin_error(&totals).expect("menu is nonempty"))
}
