//! Experiment runs, per-evaluation logs, metric series, sweeps, plot data and
//! the trace audit.
//!
//! Every metric is derived from the per-evaluation log records alone, so the
//! CSV outputs can be recomputed from `trace.jsonl`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ScenarioConfig, SyntheticConfig, ThermalConfig};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::model::{predict_with_source, train_upto, PredictionSource, PredictorSpec};
use crate::partition::PartitionProfile;
use crate::plant::{
    run_plant, thermal_disturbances, thermal_zone_preset, History, RunOptions, SignalGenerator,
};
use crate::rng::derive_seed;
use crate::scenario::RewardEnvironment;
use crate::supervisor::{
    argmin_error, performance_from_errors, squared_error, synthetic_step, Performance, StepRecord,
    SupervisorState,
};

const INPUT_STREAM: u64 = 0;
const DISTURBANCE_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const SUPERVISOR_STREAM: u64 = 3;
const REWARD_STREAM: u64 = 4;

/// One line of `trace.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationLog {
    pub k: usize,
    /// Profile that served interval `k`.
    pub profile: usize,
    /// Subset -> model that served it.
    pub models: BTreeMap<String, usize>,
    /// Subset -> performance; `null` when the subset saw no samples.
    pub r: BTreeMap<String, Option<f64>>,
    #[serde(rename = "R")]
    pub aggregate: f64,
    /// Strategies after the update at `k`.
    pub w: Vec<f64>,
    pub v: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
    /// Mean squared one-step error over the interval (synthetic runs: mean
    /// of the inverse realized rewards).
    pub mse: f64,
    pub trainings: usize,
    pub next_profile: usize,
    /// Profile -> subset -> best model on interval `k` by exhaustive search.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BTreeMap<String, BTreeMap<String, Option<usize>>>>,
}

impl EvaluationLog {
    fn from_step(state: &SupervisorState, step: &StepRecord, mse: f64) -> Self {
        let key = |i: usize| i.to_string();
        Self {
            k: step.k,
            profile: step.profile,
            models: step
                .models
                .iter()
                .enumerate()
                .map(|(a, m)| (key(a), *m))
                .collect(),
            r: step
                .performances
                .iter()
                .enumerate()
                .map(|(a, p)| {
                    (
                        key(a),
                        matches!(p, Performance::Value { .. }).then(|| p.value()),
                    )
                })
                .collect(),
            aggregate: step.aggregate,
            w: state.w().as_slice().to_vec(),
            v: state
                .all_v()
                .iter()
                .enumerate()
                .map(|(p, blocks)| {
                    (
                        key(p),
                        blocks
                            .iter()
                            .enumerate()
                            .map(|(a, v)| (key(a), v.as_slice().to_vec()))
                            .collect(),
                    )
                })
                .collect(),
            mse,
            trainings: step.trainings,
            next_profile: step.next_profile,
            baseline: None,
        }
    }

    pub fn v_block(&self, profile: usize, subset: usize) -> Option<&[f64]> {
        self.v
            .get(&profile.to_string())?
            .get(&subset.to_string())
            .map(Vec::as_slice)
    }

    /// Most probable model per subset of `profile`.
    pub fn modal_models(&self, profile: usize) -> Vec<usize> {
        let Some(blocks) = self.v.get(&profile.to_string()) else {
            return vec![];
        };
        let mut out: Vec<(usize, usize)> = blocks
            .iter()
            .map(|(a, v)| {
                let mut best = 0;
                for (i, x) in v.iter().enumerate() {
                    if *x > v[best] {
                        best = i;
                    }
                }
                (a.parse().unwrap_or(usize::MAX), best)
            })
            .collect();
        out.sort();
        out.into_iter().map(|(_, m)| m).collect()
    }
}

/// Series derived from the evaluation logs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricSeries {
    pub k: Vec<usize>,
    pub mse: Vec<f64>,
    /// Cumulative mean of `mse`.
    pub running_mse: Vec<f64>,
    pub w: Vec<Vec<f64>>,
    /// Column labels `v{p}_{a}_{m}` and their values per evaluation.
    pub v_labels: Vec<String>,
    pub v: Vec<Vec<f64>>,
    /// Running average of the performance each (profile, subset, model)
    /// received while serving; NaN until it first served.
    pub performance_labels: Vec<String>,
    pub running_performance: Vec<Vec<f64>>,
    /// Cumulative fraction of evaluations whose strategies were within
    /// `delta` of the reference pure pair.
    pub fraction_in_neighbourhood: Vec<f64>,
    /// Reference pair (profile, model per subset).
    pub reference: (usize, Vec<usize>),
}

impl MetricSeries {
    /// `reference` is the pure pair for the neighbourhood fraction; when
    /// absent the modal pair of the final record is used.
    pub fn from_logs(
        logs: &[EvaluationLog],
        reference: Option<(usize, Vec<usize>)>,
        delta: f64,
    ) -> Result<Self> {
        let Some(last) = logs.last() else {
            return Ok(Self {
                k: vec![],
                mse: vec![],
                running_mse: vec![],
                w: vec![],
                v_labels: vec![],
                v: vec![],
                performance_labels: vec![],
                running_performance: vec![],
                fraction_in_neighbourhood: vec![],
                reference: reference.unwrap_or((0, vec![])),
            });
        };
        let reference = reference.unwrap_or_else(|| {
            let p = argmax(&last.w);
            (p, last.modal_models(p))
        });
        let mut v_labels = Vec::new();
        let mut keys = Vec::new();
        for (p, blocks) in &last.v {
            for (a, v) in blocks {
                for m in 0..v.len() {
                    v_labels.push(format!("v{p}_{a}_{m}"));
                    keys.push((p.clone(), a.clone(), m));
                }
            }
        }
        let performance_labels: Vec<String> =
            v_labels.iter().map(|l| format!("r{}", &l[1..])).collect();
        let mut running_mse = Vec::with_capacity(logs.len());
        let mut total = 0.0;
        let mut sums = vec![0.0; keys.len()];
        let mut counts = vec![0usize; keys.len()];
        let mut running_performance = Vec::with_capacity(logs.len());
        let mut v_rows = Vec::with_capacity(logs.len());
        let mut fraction = Vec::with_capacity(logs.len());
        let mut hits = 0usize;
        for (n, log) in logs.iter().enumerate() {
            total += log.mse;
            running_mse.push(total / (n + 1) as f64);
            let mut row = Vec::with_capacity(keys.len());
            for (c, (p, a, m)) in keys.iter().enumerate() {
                let v = log.v.get(p).and_then(|b| b.get(a)).ok_or_else(|| {
                    Error::Format(format!("record {} lacks strategy block {p}/{a}", log.k))
                })?;
                row.push(v[*m]);
                if log.profile.to_string() == *p && log.models.get(a) == Some(m) {
                    if let Some(Some(r)) = log.r.get(a) {
                        sums[c] += r;
                        counts[c] += 1;
                    }
                }
            }
            v_rows.push(row);
            running_performance.push(
                sums.iter()
                    .zip(&counts)
                    .map(|(s, c)| if *c == 0 { f64::NAN } else { s / *c as f64 })
                    .collect(),
            );
            if distance_to_pure(log, &reference) < delta {
                hits += 1;
            }
            fraction.push(hits as f64 / (n + 1) as f64);
        }
        Ok(Self {
            k: logs.iter().map(|l| l.k).collect(),
            mse: logs.iter().map(|l| l.mse).collect(),
            running_mse,
            w: logs.iter().map(|l| l.w.clone()).collect(),
            v_labels,
            v: v_rows,
            performance_labels,
            running_performance,
            fraction_in_neighbourhood: fraction,
            reference,
        })
    }

    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
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

/// Sup-norm distance of `w` and the reference profile's blocks from the pure pair.
pub fn distance_to_pure(log: &EvaluationLog, reference: &(usize, Vec<usize>)) -> f64 {
    let (p, models) = reference;
    let vertex_gap = |v: &[f64], i: usize| {
        v.iter()
            .enumerate()
            .map(|(j, x)| (x - if i == j { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max)
    };
    let mut d = vertex_gap(&log.w, *p);
    for (a, m) in models.iter().enumerate() {
        if let Some(v) = log.v_block(*p, a) {
            d = d.max(vertex_gap(v, *m));
        }
    }
    d
}

/// Result of one run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub logs: Vec<EvaluationLog>,
    pub series: MetricSeries,
    pub state: SupervisorState,
    /// Plant history of thermal runs.
    pub history: Option<History>,
    /// Predictions that fell back to persistence.
    pub persistence_fallbacks: usize,
}

/// Runs the configured experiment with `config.seed`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    match &config.scenario {
        ScenarioConfig::Thermal(t) => run_thermal(config, t),
        ScenarioConfig::Synthetic(s) => run_synthetic_experiment(config, s),
    }
}

fn run_synthetic_experiment(config: &ExperimentConfig, s: &SyntheticConfig) -> Result<RunOutput> {
    let table = s.table()?;
    let reference = (
        table.best_profile(),
        table.best_models(table.best_profile()),
    );
    let mut env = RewardEnvironment::new(
        table.clone(),
        s.noise_sigma,
        derive_seed(config.seed, REWARD_STREAM),
    )?;
    let mut state = SupervisorState::new(
        config.supervisor,
        table.layout(),
        table.models(),
        derive_seed(config.seed, SUPERVISOR_STREAM),
    )?;
    let mut logs = Vec::with_capacity(config.evaluations);
    for _ in 0..config.evaluations {
        let step = synthetic_step(&mut state, &mut env)?;
        let mse = step
            .performances
            .iter()
            .map(|p| 1.0 / p.value())
            .sum::<f64>()
            / step.performances.len() as f64;
        logs.push(EvaluationLog::from_step(&state, &step, mse));
    }
    let series = MetricSeries::from_logs(&logs, Some(reference), s.delta)?;
    Ok(RunOutput {
        logs,
        series,
        state,
        history: None,
        persistence_fallbacks: 0,
    })
}

/// Plant history for a thermal configuration and seed, long enough for the
/// warm-up plus `evaluations` intervals.
pub fn thermal_history(t: &ThermalConfig, evaluations: usize, seed: u64) -> Result<History> {
    let grid = t.grid()?;
    let horizon = (t.warmup_intervals + evaluations) * t.samples_per_evaluation;
    let inputs = SignalGenerator::PiecewiseConstantRandom {
        lo: vec![0.0, 0.0],
        hi: vec![1.0, 1.0],
        hold_samples: t.hold_samples,
        seed: derive_seed(seed, INPUT_STREAM),
    };
    let options = RunOptions {
        initial_state: None,
        noise_sd: t.noise_sd,
        noise_seed: derive_seed(seed, NOISE_STREAM),
    };
    run_plant(
        &thermal_zone_preset(),
        &grid,
        &inputs,
        &thermal_disturbances(derive_seed(seed, DISTURBANCE_STREAM)),
        horizon,
        &options,
    )
}

/// Trained predictors per (profile, subset, model).
struct ModelStore<'a> {
    h: &'a History,
    profiles: &'a [PartitionProfile],
    window: crate::model::TrainingWindow,
    specs: Vec<Vec<Vec<PredictorSpec>>>,
    /// Cell of every sample under every profile.
    cells: Vec<Vec<usize>>,
}

impl<'a> ModelStore<'a> {
    fn new(
        h: &'a History,
        profiles: &'a [PartitionProfile],
        menu: &[PredictorSpec],
        window: crate::model::TrainingWindow,
    ) -> Result<Self> {
        let cells = profiles
            .iter()
            .map(|p| {
                h.samples()
                    .iter()
                    .map(|s| p.locate_index(&s.u))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let specs = profiles
            .iter()
            .map(|p| vec![menu.to_vec(); p.subset_count()])
            .collect();
        Ok(Self {
            h,
            profiles,
            window,
            specs,
            cells,
        })
    }

    /// Trains model `m` of subset `a` of profile `p` on the in-subset pairs
    /// of the first `len` samples; without such pairs the whole window is used.
    fn fit(&self, p: usize, a: usize, m: usize, len: usize) -> Result<PredictorSpec> {
        let spec = &self.specs[p][a][m];
        let cells = &self.cells[p];
        match train_upto(spec, self.h, len, self.window, |j| cells[j] == a) {
            Ok(s) => Ok(s),
            Err(Error::InvalidArgument(_)) => {
                debug!(
                    "no in-subset pairs for profile {p}, subset {a}; training on the full window"
                );
                train_upto(spec, self.h, len, self.window, |_| true)
            }
            Err(e) => Err(e),
        }
    }

    fn train(&mut self, p: usize, a: usize, m: usize, len: usize) -> Result<()> {
        self.specs[p][a][m] = self.fit(p, a, m, len)?;
        Ok(())
    }

    /// Squared one-step errors of `spec` at samples `js`.
    fn errors(
        &self,
        spec: &PredictorSpec,
        js: impl Iterator<Item = usize>,
        fallbacks: &mut usize,
    ) -> Result<Vec<f64>> {
        js.map(|j| {
            let (yhat, src) = predict_with_source(spec, self.h, j)?;
            if src == PredictionSource::Persistence {
                *fallbacks += 1;
            }
            Ok(squared_error(self.h.y(j + 1), &yhat))
        })
        .collect()
    }
}

fn run_thermal(config: &ExperimentConfig, t: &ThermalConfig) -> Result<RunOutput> {
    let history = thermal_history(t, config.evaluations, config.seed)?;
    let profiles = t.partition_profiles()?;
    let menu = t.menu()?;
    let n = t.samples_per_evaluation;
    let start = t.warmup_intervals * n;
    let layout: Vec<usize> = profiles
        .iter()
        .map(PartitionProfile::subset_count)
        .collect();
    let mut state = SupervisorState::new(
        config.supervisor,
        layout,
        menu.len(),
        derive_seed(config.seed, SUPERVISOR_STREAM),
    )?;
    let mut store = ModelStore::new(&history, &profiles, &menu, t.window())?;
    let mut fallbacks = 0;

    // initial assignment, trained on the warm-up samples
    let p0 = state.profile();
    for a in 0..profiles[p0].subset_count() {
        store.train(p0, a, state.assignment(p0)[a], start + 1)?;
    }

    let mut logs = Vec::with_capacity(config.evaluations);
    for k in 1..=config.evaluations {
        let lo = start + (k - 1) * n;
        let hi = lo + n;
        let p = state.profile();
        let cells = &store.cells[p];
        let mut sums = vec![0.0; layout_of(&state, p)];
        let mut etas = vec![0usize; sums.len()];
        let mut total = 0.0;
        for j in lo..hi {
            let a = cells[j];
            let spec = &store.specs[p][a][state.assignment(p)[a]];
            let e = store.errors(spec, std::iter::once(j), &mut fallbacks)?[0];
            sums[a] += e;
            etas[a] += 1;
            total += e;
        }
        let perfs: Vec<Performance> = sums
            .iter()
            .zip(&etas)
            .map(|(s, eta)| performance_from_errors(*s, *eta, config.supervisor.r_max))
            .collect();
        let baseline = match t.baseline_from {
            Some(from) if k >= from => Some(baseline_for_interval(&store, lo..hi, &mut fallbacks)?),
            _ => None,
        };
        let step = state.step_joint(&perfs, &mut |p, a, m| store.train(p, a, m, hi + 1))?;
        let mut log = EvaluationLog::from_step(&state, &step, total / n as f64);
        log.baseline = baseline;
        if k % 100 == 0 {
            info!("evaluation {k}: profile {p}, mse {:.4}", log.mse);
        }
        logs.push(log);
    }
    let series = MetricSeries::from_logs(&logs, None, 0.1)?;
    Ok(RunOutput {
        logs,
        series,
        state,
        history: Some(history),
        persistence_fallbacks: fallbacks,
    })
}

fn layout_of(state: &SupervisorState, p: usize) -> usize {
    state.layout()[p]
}

/// Best model per subset of every profile on the samples of `interval`,
/// with every model trained on the history before the interval.
fn baseline_for_interval(
    store: &ModelStore,
    interval: std::ops::Range<usize>,
    fallbacks: &mut usize,
) -> Result<BTreeMap<String, BTreeMap<String, Option<usize>>>> {
    let mut out = BTreeMap::new();
    for (p, profile) in store.profiles.iter().enumerate() {
        let mut per_subset = BTreeMap::new();
        for a in 0..profile.subset_count() {
            let q: Vec<usize> = interval
                .clone()
                .filter(|j| store.cells[p][*j] == a)
                .collect();
            let best = if q.is_empty() {
                None
            } else {
                let totals = (0..store.specs[p][a].len())
                    .map(|m| {
                        let spec = store.fit(p, a, m, interval.start + 1)?;
                        Ok(store
                            .errors(&spec, q.iter().copied(), fallbacks)?
                            .iter()
                            .sum())
                    })
                    .collect::<Result<Vec<f64>>>()?;
                argmin_error(&totals)
            };
            per_subset.insert(a.to_string(), best);
        }
        out.insert(p.to_string(), per_subset);
    }
    Ok(out)
}

/// Runs `config` with its `seed` replaced.
pub fn run_with_seed(config: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    let mut c = config.clone();
    c.seed = seed;
    run_experiment(&c)
}

pub fn write_logs<W: Write>(mut out: W, logs: &[EvaluationLog]) -> Result<()> {
    for log in logs {
        serde_json::to_writer(&mut out, log)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_logs<R: BufRead>(input: R) -> Result<Vec<EvaluationLog>> {
    let mut logs = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let log: EvaluationLog = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?;
        logs.push(log);
    }
    Ok(logs)
}

fn fmt(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        x.to_string()
    }
}

/// `metrics.csv`: one row per evaluation.
pub fn metrics_csv(logs: &[EvaluationLog], series: &MetricSeries) -> String {
    let mut s = String::from("k,profile,R,mse,running_mse,fraction_in_neighbourhood,trainings\n");
    for (i, log) in logs.iter().enumerate() {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            log.k,
            log.profile,
            fmt(log.aggregate),
            fmt(log.mse),
            fmt(series.running_mse[i]),
            fmt(series.fraction_in_neighbourhood[i]),
            log.trainings
        ));
    }
    s
}

/// Plot-data tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Figure {
    /// Profile probabilities.
    ProfileProbabilities,
    /// Running-average prediction error.
    RunningError,
    /// Model probabilities per (profile, subset).
    ModelProbabilities,
    /// Running-average performance per (profile, subset, model).
    RunningPerformance,
}

impl Figure {
    pub const ALL: [Figure; 4] = [
        Figure::ProfileProbabilities,
        Figure::RunningError,
        Figure::ModelProbabilities,
        Figure::RunningPerformance,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Figure::ProfileProbabilities => "profile-probabilities",
            Figure::RunningError => "running-error",
            Figure::ModelProbabilities => "model-probabilities",
            Figure::RunningPerformance => "running-performance",
        }
    }
}

impl std::str::FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Figure::ALL
            .into_iter()
            .find(|f| f.id() == s)
            .ok_or_else(|| Error::invalid(format!("unknown figure '{s}' (expected profile-probabilities, running-error, model-probabilities or running-performance)")))
    }
}

/// One tidy CSV: `k` and one column per series.
pub fn emit_plot_data(series: &MetricSeries, which: Figure) -> String {
    let (header, rows): (Vec<String>, Vec<Vec<f64>>) = match which {
        Figure::ProfileProbabilities => {
            let p = series.w.first().map_or(0, Vec::len);
            ((0..p).map(|i| format!("w{i}")).collect(), series.w.clone())
        }
        Figure::RunningError => (
            vec!["running_mse".into()],
            series.running_mse.iter().map(|x| vec![*x]).collect(),
        ),
        Figure::ModelProbabilities => (series.v_labels.clone(), series.v.clone()),
        Figure::RunningPerformance => (
            series.performance_labels.clone(),
            series.running_performance.clone(),
        ),
    };
    let mut s = String::from("k");
    for h in &header {
        s.push(',');
        s.push_str(h);
    }
    s.push('\n');
    for (k, row) in series.k.iter().zip(rows) {
        s.push_str(&k.to_string());
        for x in row {
            s.push(',');
            s.push_str(&fmt(x));
        }
        s.push('\n');
    }
    s
}

/// Files written by [`write_run`].
pub const TRACE_FILE: &str = "trace.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const HISTORY_FILE: &str = "history.jsonl";

/// Best profile and its best model per subset.
type BestPair = (usize, Vec<usize>);

fn reference_for(config: &ExperimentConfig) -> Result<(Option<BestPair>, f64)> {
    Ok(match &config.scenario {
        ScenarioConfig::Synthetic(s) => {
            let t = s.table()?;
            (
                Some((t.best_profile(), t.best_models(t.best_profile()))),
                s.delta,
            )
        }
        ScenarioConfig::Thermal(_) => (None, 0.1),
    })
}

/// Writes the trace, metrics, plot data and config copy into `dir`.
pub fn write_run(dir: &Path, config: &ExperimentConfig, out: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut trace = BufWriter::new(File::create(dir.join(TRACE_FILE))?);
    write_logs(&mut trace, &out.logs)?;
    trace.flush()?;
    fs::write(dir.join(METRICS_FILE), metrics_csv(&out.logs, &out.series))?;
    for fig in Figure::ALL {
        fs::write(
            dir.join(format!("{}.csv", fig.id())),
            emit_plot_data(&out.series, fig),
        )?;
    }
    fs::write(dir.join(CONFIG_FILE), config.to_toml_string()?)?;
    Ok(())
}

/// Reads the config and trace of a run directory and rebuilds its series.
pub fn load_run(dir: &Path) -> Result<(ExperimentConfig, Vec<EvaluationLog>, MetricSeries)> {
    let config = ExperimentConfig::load(&dir.join(CONFIG_FILE))?;
    let logs = read_logs(BufReader::new(File::open(dir.join(TRACE_FILE))?))?;
    let (reference, delta) = reference_for(&config)?;
    let series = MetricSeries::from_logs(&logs, reference, delta)?;
    Ok((config, logs, series))
}

/// Discrepancies found by [`audit`]; empty when the outputs match the trace.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AuditReport {
    pub checked: Vec<String>,
    pub mismatches: Vec<String>,
}

impl AuditReport {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Recomputes every CSV in `dir` from its trace and config, and checks the
/// running averages against the cumulative-mean recurrence.
pub fn audit(dir: &Path) -> Result<AuditReport> {
    let (_, logs, series) = load_run(dir)?;
    let mut report = AuditReport::default();
    let mut expected = vec![(METRICS_FILE.to_string(), metrics_csv(&logs, &series))];
    for fig in Figure::ALL {
        expected.push((format!("{}.csv", fig.id()), emit_plot_data(&series, fig)));
    }
    for (name, text) in expected {
        let path = dir.join(&name);
        if !path.exists() {
            continue;
        }
        report.checked.push(name.clone());
        if fs::read_to_string(&path)? != text {
            report
                .mismatches
                .push(format!("{name} differs from its recomputation"));
        }
    }
    for i in 1..series.len() {
        let recur = series.running_mse[i - 1]
            + (series.mse[i] - series.running_mse[i - 1]) / (i + 1) as f64;
        if (recur - series.running_mse[i]).abs() > 1e-12 * series.running_mse[i].abs().max(1.0) {
            report.mismatches.push(format!(
                "running average breaks the recurrence at k = {}",
                series.k[i]
            ));
            break;
        }
    }
    Ok(report)
}

/// One line of a sweep summary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub name: String,
    pub epsilon: f64,
    pub lambda: f64,
    pub seeds: usize,
    /// Median over seeds of the final cumulative neighbourhood fraction.
    pub median_fraction: f64,
    /// Median over seeds of the neighbourhood fraction over the last half.
    pub median_fraction_last_half: f64,
    pub median_final_running_mse: f64,
}

/// Runs every config under every seed of `seeds` (or the config's own
/// seeds when `seeds` is empty); runs execute under `exec`, aggregation is
/// sequential.
pub fn sweep(
    configs: &[ExperimentConfig],
    seeds: &[u64],
    exec: Execution,
) -> Result<Vec<SweepRow>> {
    let jobs: Vec<(usize, u64)> = configs
        .iter()
        .enumerate()
        .flat_map(|(i, c)| {
            let s = if seeds.is_empty() {
                if c.seeds.is_empty() {
                    vec![c.seed]
                } else {
                    c.seeds.clone()
                }
            } else {
                seeds.to_vec()
            };
            s.into_iter().map(move |seed| (i, seed))
        })
        .collect();
    let results = map_indexed(jobs.len(), exec, |j| {
        let (i, seed) = jobs[j];
        run_with_seed(&configs[i], seed).map(|out| {
            let s = &out.series;
            let n = s.len();
            let half = n / 2;
            let hits_end = s.fraction_in_neighbourhood[n - 1] * n as f64;
            let hits_half = if half == 0 {
                0.0
            } else {
                s.fraction_in_neighbourhood[half - 1] * half as f64
            };
            let last_half = (hits_end - hits_half) / (n - half) as f64;
            (
                i,
                s.fraction_in_neighbourhood[n - 1],
                last_half,
                s.running_mse[n - 1],
            )
        })
    });
    let mut per_config: Vec<Vec<(f64, f64, f64)>> = vec![Vec::new(); configs.len()];
    for r in results {
        let (i, a, b, c) = r?;
        per_config[i].push((a, b, c));
    }
    Ok(configs
        .iter()
        .zip(per_config)
        .map(|(c, vals)| SweepRow {
            name: c.name.clone(),
            epsilon: c.supervisor.epsilon,
            lambda: c.supervisor.lambda,
            seeds: vals.len(),
            median_fraction: median(vals.iter().map(|v| v.0).collect()),
            median_fraction_last_half: median(vals.iter().map(|v| v.1).collect()),
            median_final_running_mse: median(vals.iter().map(|v| v.2).collect()),
        })
        .collect())
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("name,epsilon,lambda,seeds,median_fraction,median_fraction_last_half,median_final_running_mse\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.name,
            r.epsilon,
            r.lambda,
            r.seeds,
            fmt(r.median_fraction),
            fmt(r.median_fraction_last_half),
            fmt(r.median_final_running_mse)
        ));
    }
    s
}

/// Default output directory for a config: its own setting, else `base/name`.
pub fn output_dir(config: &ExperimentConfig, base: &Path) -> PathBuf {
    config
        .output_dir
        .clone()
        .unwrap_or_else(|| base.join(&config.name))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SyntheticConfig;
    use crate::supervisor::SupervisorConfig;

    fn small_synthetic(evaluations: usize) -> ExperimentConfig {
        let mut c = ExperimentConfig::synthetic_preset();
        c.evaluations = evaluations;
        c
    }

    #[test]
    fn running_mse_is_the_cumulative_mean() {
        let out = run_experiment(&small_synthetic(200)).unwrap();
        let s = &out.series;
        let mut total = 0.0;
        for i in 0..s.len() {
            total += s.mse[i];
            assert!((s.running_mse[i] - total / (i + 1) as f64).abs() < 1e-12);
        }
        assert_eq!(s.w.len(), 200);
        assert_eq!(s.fraction_in_neighbourhood.len(), 200);
    }

    #[test]
    fn same_seed_same_logs() {
        let a = run_experiment(&small_synthetic(300)).unwrap();
        let b = run_experiment(&small_synthetic(300)).unwrap();
        assert_eq!(a.logs, b.logs);
        let c = run_with_seed(&small_synthetic(300), 99).unwrap();
        assert_ne!(a.logs, c.logs);
    }

    #[test]
    fn figure_tables() {
        let out = run_experiment(&small_synthetic(50)).unwrap();
        let profile_table = emit_plot_data(&out.series, Figure::ProfileProbabilities);
        assert_eq!(
            profile_table.lines().next().unwrap().split(',').count(),
            1 + 2
        );
        assert_eq!(profile_table.lines().count(), 51);
        let error_table = emit_plot_data(&out.series, Figure::RunningError);
        assert_eq!(error_table.lines().next().unwrap(), "k,running_mse");
        let model_table = emit_plot_data(&out.series, Figure::ModelProbabilities);
        assert_eq!(
            model_table.lines().next().unwrap().split(',').count(),
            1 + 15
        );
        assert!("unknown-table".parse::<Figure>().is_err());
        assert_eq!(
            "running-performance".parse::<Figure>().unwrap(),
            Figure::RunningPerformance
        );
    }

    #[test]
    fn log_lines_round_trip() {
        let out = run_experiment(&small_synthetic(20)).unwrap();
        let mut buf = Vec::new();
        write_logs(&mut buf, &out.logs).unwrap();
        let back = read_logs(buf.as_slice()).unwrap();
        assert_eq!(back, out.logs);
        let first: serde_json::Value =
            serde_json::from_str(std::str::from_utf8(&buf).unwrap().lines().next().unwrap())
                .unwrap();
        for key in [
            "k",
            "profile",
            "models",
            "r",
            "R",
            "w",
            "v",
            "mse",
            "trainings",
        ] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
        assert!(read_logs("{not json}\n".as_bytes()).is_err());
    }

    #[test]
    fn empty_sweep_is_empty() {
        assert!(sweep(&[], &[], Execution::Auto).unwrap().is_empty());
        assert_eq!(sweep_csv(&[]).lines().count(), 1);
    }

    #[test]
    fn single_run_sweep_matches_the_run() {
        let c = small_synthetic(400);
        let rows = sweep(std::slice::from_ref(&c), &[c.seed], Execution::Sequential).unwrap();
        let out = run_experiment(&c).unwrap();
        assert_eq!(rows[0].seeds, 1);
        assert_eq!(
            rows[0].median_fraction,
            *out.series.fraction_in_neighbourhood.last().unwrap()
        );
        assert_eq!(
            rows[0].median_final_running_mse,
            *out.series.running_mse.last().unwrap()
        );
    }

    #[test]
    fn sweep_is_independent_of_the_execution_policy() {
        let mut configs = Vec::new();
        for eps in [0.01, 0.02] {
            let mut c = small_synthetic(300);
            c.supervisor = SupervisorConfig::new(eps, 0.05).unwrap();
            c.name = format!("eps{eps}");
            configs.push(c);
        }
        let a = sweep(&configs, &[1, 2, 3], Execution::Sequential).unwrap();
        let b = sweep(&configs, &[1, 2, 3], Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn audit_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let c = small_synthetic(30);
        let out = run_experiment(&c).unwrap();
        write_run(dir.path(), &c, &out).unwrap();
        let report = audit(dir.path()).unwrap();
        assert!(report.ok(), "{:?}", report.mismatches);
        assert_eq!(report.checked.len(), 5);
        let profile_table = dir.path().join("profile-probabilities.csv");
        let text = fs::read_to_string(&profile_table)
            .unwrap()
            .replacen("0.", "1.", 1);
        fs::write(&profile_table, text).unwrap();
        assert!(!audit(dir.path()).unwrap().ok());
    }

    #[test]
    fn synthetic_reference_is_the_best_pair() {
        let c = small_synthetic(10);
        let ScenarioConfig::Synthetic(SyntheticConfig { .. }) = &c.scenario else {
            panic!()
        };
        let out = run_experiment(&c).unwrap();
        assert_eq!(out.series.reference, (1, vec![0, 1, 2, 0]));
    }
}
