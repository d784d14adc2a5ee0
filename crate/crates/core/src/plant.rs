//! Bilinear plant simulation.
//!
//! Dynamics are
//!
//! ```text
//! dx/dt = A x + sum_i u_i (B_i x + D_i d) + D d,    y = C x
//! ```
//!
//! integrated with classical fourth-order Runge-Kutta while the input `u` and
//! disturbance `d` are held over each sampling interval (zero-order hold).

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Runge-Kutta substeps per sampling interval.
pub const DEFAULT_SUBSTEPS: usize = 10;

/// Closed bounded interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(Error::invalid(format!(
                "[{lo}, {hi}] is not a bounded closed interval"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BilinearSystem {
    a: DMatrix<f64>,
    b: Vec<DMatrix<f64>>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
    d_inputs: Vec<DMatrix<f64>>,
    input_domains: Vec<Interval>,
}

impl BilinearSystem {
    /// Builds a system after checking dimensions, domains and that
    /// `A + sum_i u_i B_i` is Hurwitz at every vertex of the input box.
    pub fn new(
        a: DMatrix<f64>,
        b: Vec<DMatrix<f64>>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        d_inputs: Vec<DMatrix<f64>>,
        input_domains: Vec<Interval>,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::invalid("A must be a nonempty square matrix"));
        }
        let m = input_domains.len();
        if b.len() != m {
            return Err(Error::Dimension {
                what: "input matrices B_i",
                expected: m,
                got: b.len(),
            });
        }
        if d_inputs.len() != m {
            return Err(Error::Dimension {
                what: "input matrices D_i",
                expected: m,
                got: d_inputs.len(),
            });
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(Error::Dimension {
                what: "columns of C",
                expected: n,
                got: c.ncols(),
            });
        }
        if d.nrows() != n {
            return Err(Error::Dimension {
                what: "rows of D",
                expected: n,
                got: d.nrows(),
            });
        }
        for bi in &b {
            if bi.nrows() != n || bi.ncols() != n {
                return Err(Error::Dimension {
                    what: "B_i shape",
                    expected: n,
                    got: bi.nrows().max(bi.ncols()),
                });
            }
        }
        for di in &d_inputs {
            if di.nrows() != n || di.ncols() != d.ncols() {
                return Err(Error::Dimension {
                    what: "D_i shape",
                    expected: d.ncols(),
                    got: di.ncols(),
                });
            }
        }
        for dom in &input_domains {
            Interval::new(dom.lo, dom.hi)?;
        }
        let sys = Self {
            a,
            b,
            c,
            d,
            d_inputs,
            input_domains,
        };
        sys.check_vertex_stability()?;
        Ok(sys)
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.input_domains.len()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn disturbance_dim(&self) -> usize {
        self.d.ncols()
    }

    pub fn input_domains(&self) -> &[Interval] {
        &self.input_domains
    }

    fn check_vertex_stability(&self) -> Result<()> {
        let m = self.input_dim();
        for mask in 0..(1usize << m) {
            let u: Vec<f64> = (0..m)
                .map(|i| {
                    let dom = self.input_domains[i];
                    if mask & (1 << i) == 0 {
                        dom.lo
                    } else {
                        dom.hi
                    }
                })
                .collect();
            let a_u = self.frozen_state_matrix(&u);
            let max_re = a_u
                .complex_eigenvalues()
                .iter()
                .map(|z| z.re)
                .fold(f64::NEG_INFINITY, f64::max);
            if !(max_re < 0.0) {
                return Err(Error::invalid(format!(
                    "A + sum u_i B_i is not Hurwitz at vertex {u:?} (max Re = {max_re})"
                )));
            }
        }
        Ok(())
    }

    /// `A + sum_i u_i B_i`.
    pub fn frozen_state_matrix(&self, u: &[f64]) -> DMatrix<f64> {
        let mut m = self.a.clone();
        for (ui, bi) in u.iter().zip(&self.b) {
            m += bi * *ui;
        }
        m
    }

    /// `D + sum_i u_i D_i`.
    pub fn frozen_disturbance_matrix(&self, u: &[f64]) -> DMatrix<f64> {
        let mut m = self.d.clone();
        for (ui, di) in u.iter().zip(&self.d_inputs) {
            m += di * *ui;
        }
        m
    }

    pub fn check_input(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.input_dim() {
            return Err(Error::Dimension {
                what: "input vector",
                expected: self.input_dim(),
                got: u.len(),
            });
        }
        for (i, (ui, dom)) in u.iter().zip(&self.input_domains).enumerate() {
            if !dom.contains(*ui) {
                return Err(Error::DomainViolation {
                    input: i,
                    value: *ui,
                    lo: dom.lo,
                    hi: dom.hi,
                });
            }
        }
        Ok(())
    }

    pub fn derivative(&self, x: &DVector<f64>, u: &[f64], d: &DVector<f64>) -> DVector<f64> {
        let mut dx = &self.a * x + &self.d * d;
        for ((ui, bi), di) in u.iter().zip(&self.b).zip(&self.d_inputs) {
            dx += (bi * x + di * d) * *ui;
        }
        dx
    }

    pub fn output(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.c * x
    }

    /// Steady state for constant `u` and `d`: solves
    /// `(A + sum u_i B_i) x = -(D + sum u_i D_i) d`.
    pub fn equilibrium(&self, u: &[f64], d: &[f64]) -> Result<DVector<f64>> {
        self.check_input(u)?;
        let d = self.disturbance_vector(d)?;
        let rhs = -(self.frozen_disturbance_matrix(u) * d);
        self.frozen_state_matrix(u)
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("singular state matrix at equilibrium".into()))
    }

    fn disturbance_vector(&self, d: &[f64]) -> Result<DVector<f64>> {
        if d.len() != self.disturbance_dim() {
            return Err(Error::Dimension {
                what: "disturbance vector",
                expected: self.disturbance_dim(),
                got: d.len(),
            });
        }
        Ok(DVector::from_column_slice(d))
    }
}

/// Advances the state by `dt` hours with `u` and `d` held constant, using
/// [`DEFAULT_SUBSTEPS`] Runge-Kutta steps.
pub fn simulate_step(
    sys: &BilinearSystem,
    x: &DVector<f64>,
    u: &[f64],
    d: &[f64],
    dt: f64,
) -> Result<DVector<f64>> {
    simulate_step_with(sys, x, u, d, dt, DEFAULT_SUBSTEPS)
}

pub fn simulate_step_with(
    sys: &BilinearSystem,
    x: &DVector<f64>,
    u: &[f64],
    d: &[f64],
    dt: f64,
    substeps: usize,
) -> Result<DVector<f64>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!(
            "step length must be positive, got {dt}"
        )));
    }
    if substeps == 0 {
        return Err(Error::invalid("at least one substep is required"));
    }
    if x.len() != sys.state_dim() {
        return Err(Error::Dimension {
            what: "state vector",
            expected: sys.state_dim(),
            got: x.len(),
        });
    }
    sys.check_input(u)?;
    let d = sys.disturbance_vector(d)?;
    let h = dt / substeps as f64;
    // with u and d held, the dynamics are affine: x' = A_u x + c
    let a_u = sys.frozen_state_matrix(u);
    let c = sys.frozen_disturbance_matrix(u) * d;
    let f = |x: &DVector<f64>| &a_u * x + &c;
    let mut x = x.clone();
    for _ in 0..substeps {
        let k1 = f(&x);
        let k2 = f(&(&x + &k1 * (h / 2.0)));
        let k3 = f(&(&x + &k2 * (h / 2.0)));
        let k4 = f(&(&x + &k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("state diverged".into()));
    }
    Ok(x)
}

/// Sampling and evaluation periods. Evaluations happen every `rho` samples
/// and each one scores the last `samples_per_evaluation` predictions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub sampling_period_hours: f64,
    pub samples_per_evaluation: usize,
    pub rho: usize,
}

impl TimeGrid {
    pub fn new(
        sampling_period_hours: f64,
        samples_per_evaluation: usize,
        rho: usize,
    ) -> Result<Self> {
        if !(sampling_period_hours > 0.0) || !sampling_period_hours.is_finite() {
            return Err(Error::invalid("sampling period must be positive"));
        }
        if samples_per_evaluation == 0 || rho == 0 || rho > samples_per_evaluation {
            return Err(Error::invalid(format!(
                "need 1 <= rho <= N, got rho = {rho}, N = {samples_per_evaluation}"
            )));
        }
        Ok(Self {
            sampling_period_hours,
            samples_per_evaluation,
            rho,
        })
    }

    /// Grid with `rho = N`.
    pub fn aligned(sampling_period_hours: f64, samples_per_evaluation: usize) -> Result<Self> {
        Self::new(
            sampling_period_hours,
            samples_per_evaluation,
            samples_per_evaluation,
        )
    }

    pub fn evaluation_period_hours(&self) -> f64 {
        self.rho as f64 * self.sampling_period_hours
    }

    pub fn time_of(&self, j: usize) -> f64 {
        j as f64 * self.sampling_period_hours
    }
}

/// Exogenous signal sources. Each produces one vector per sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SignalGenerator {
    /// Each channel is redrawn uniformly in `[lo, hi]` every `hold_samples`.
    PiecewiseConstantRandom {
        lo: Vec<f64>,
        hi: Vec<f64>,
        hold_samples: usize,
        seed: u64,
    },
    /// `offset + amplitude * sin(2 pi (t - phase) / period)` per channel.
    Sinusoid {
        offset: Vec<f64>,
        amplitude: Vec<f64>,
        period_hours: f64,
        phase_hours: f64,
    },
    /// Single channel: `peak_k * max(0, sin(2 pi (t - sunrise) / 24))` over
    /// the daylight half of each day, with the daily peak drawn uniformly.
    DailyPulse {
        peak_lo: f64,
        peak_hi: f64,
        sunrise_hours: f64,
        seed: u64,
    },
    /// Replays stored rows; runs shorter than the trace are truncated.
    RecordedTrace { rows: Vec<Vec<f64>> },
    /// Channels of several generators side by side.
    Stack { parts: Vec<SignalGenerator> },
}

impl SignalGenerator {
    pub fn constant(values: Vec<f64>) -> Self {
        let n = values.len();
        SignalGenerator::Sinusoid {
            offset: values,
            amplitude: vec![0.0; n],
            period_hours: 24.0,
            phase_hours: 0.0,
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            SignalGenerator::PiecewiseConstantRandom { lo, .. } => lo.len(),
            SignalGenerator::Sinusoid { offset, .. } => offset.len(),
            SignalGenerator::DailyPulse { .. } => 1,
            SignalGenerator::RecordedTrace { rows } => rows.first().map_or(0, Vec::len),
            SignalGenerator::Stack { parts } => parts.iter().map(Self::channels).sum(),
        }
    }

    /// Values at samples `0..count` on a grid of period `ts` hours.
    pub fn generate(&self, count: usize, ts: f64) -> Result<Vec<Vec<f64>>> {
        match self {
            SignalGenerator::PiecewiseConstantRandom {
                lo,
                hi,
                hold_samples,
                seed,
            } => {
                if lo.len() != hi.len() || *hold_samples == 0 {
                    return Err(Error::invalid(
                        "piecewise-constant generator needs matching bounds and hold >= 1",
                    ));
                }
                let mut rng = RngStream::new(*seed);
                let mut current = vec![0.0; lo.len()];
                let mut rows = Vec::with_capacity(count);
                for j in 0..count {
                    if j % hold_samples == 0 {
                        for (c, (l, h)) in current.iter_mut().zip(lo.iter().zip(hi)) {
                            *c = rng.uniform_in(*l, *h);
                        }
                    }
                    rows.push(current.clone());
                }
                Ok(rows)
            }
            SignalGenerator::Sinusoid {
                offset,
                amplitude,
                period_hours,
                phase_hours,
            } => {
                if offset.len() != amplitude.len() || !(*period_hours > 0.0) {
                    return Err(Error::invalid(
                        "sinusoid needs matching channels and a positive period",
                    ));
                }
                Ok((0..count)
                    .map(|j| {
                        let t = j as f64 * ts;
                        let s =
                            (2.0 * std::f64::consts::PI * (t - phase_hours) / period_hours).sin();
                        offset
                            .iter()
                            .zip(amplitude)
                            .map(|(o, a)| o + a * s)
                            .collect()
                    })
                    .collect())
            }
            SignalGenerator::DailyPulse {
                peak_lo,
                peak_hi,
                sunrise_hours,
                seed,
            } => {
                let mut rng = RngStream::new(*seed);
                let mut peaks: Vec<f64> = Vec::new();
                Ok((0..count)
                    .map(|j| {
                        let t = j as f64 * ts;
                        let day = (t / 24.0).floor() as usize;
                        while peaks.len() <= day {
                            peaks.push(rng.uniform_in(*peak_lo, *peak_hi));
                        }
                        let s = (2.0 * std::f64::consts::PI * (t - sunrise_hours) / 24.0).sin();
                        vec![peaks[day] * s.max(0.0)]
                    })
                    .collect())
            }
            SignalGenerator::RecordedTrace { rows } => {
                if rows.len() < count {
                    return Err(Error::invalid(format!(
                        "recorded trace has {} rows, {count} requested",
                        rows.len()
                    )));
                }
                Ok(rows[..count].to_vec())
            }
            SignalGenerator::Stack { parts } => {
                let columns = parts
                    .iter()
                    .map(|p| p.generate(count, ts))
                    .collect::<Result<Vec<_>>>()?;
                Ok((0..count)
                    .map(|j| columns.iter().flat_map(|c| c[j].iter().copied()).collect())
                    .collect())
            }
        }
    }
}

/// One recorded sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub j: usize,
    pub t_hours: f64,
    pub u: Vec<f64>,
    pub d: Vec<f64>,
    pub y: Vec<f64>,
}

/// Append-only record of input-output pairs at consecutive sampling instants.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    samples: Vec<Sample>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, sample: Sample) -> Result<()> {
        if let Some(last) = self.samples.last() {
            if sample.j <= last.j {
                return Err(Error::invalid(format!(
                    "sample index {} does not follow {}",
                    sample.j, last.j
                )));
            }
        }
        self.samples.push(sample);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    /// Sample at position `j`.
    pub fn get(&self, j: usize) -> Option<&Sample> {
        self.samples.get(j)
    }

    pub fn y(&self, j: usize) -> &[f64] {
        &self.samples[j].y
    }

    pub fn u(&self, j: usize) -> &[f64] {
        &self.samples[j].u
    }

    pub fn d(&self, j: usize) -> &[f64] {
        &self.samples[j].d
    }

    /// First `len` samples.
    pub fn prefix(&self, len: usize) -> History {
        History {
            samples: self.samples[..len.min(self.samples.len())].to_vec(),
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for s in &self.samples {
            serde_json::to_writer(&mut out, s)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut history = History::new();
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            history.push(serde_json::from_str(&line)?)?;
        }
        Ok(history)
    }

    /// Input rows as a replayable generator.
    pub fn input_trace(&self) -> SignalGenerator {
        SignalGenerator::RecordedTrace {
            rows: self.samples.iter().map(|s| s.u.clone()).collect(),
        }
    }

    /// Disturbance rows as a replayable generator.
    pub fn disturbance_trace(&self) -> SignalGenerator {
        SignalGenerator::RecordedTrace {
            rows: self.samples.iter().map(|s| s.d.clone()).collect(),
        }
    }
}

/// Options for [`run_plant`] beyond the signal sources.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOptions {
    /// Starting state; the equilibrium of the first input/disturbance pair when absent.
    pub initial_state: Option<Vec<f64>>,
    /// Standard deviation of additive Gaussian measurement noise on `y`.
    pub noise_sd: f64,
    pub noise_seed: u64,
}

/// Simulates `horizon` sampling intervals and returns `horizon + 1` samples.
pub fn run_plant(
    sys: &BilinearSystem,
    grid: &TimeGrid,
    inputs: &SignalGenerator,
    disturbances: &SignalGenerator,
    horizon: usize,
    options: &RunOptions,
) -> Result<History> {
    let ts = grid.sampling_period_hours;
    let us = inputs.generate(horizon + 1, ts)?;
    let ds = disturbances.generate(horizon + 1, ts)?;
    if !(options.noise_sd >= 0.0) {
        return Err(Error::invalid(
            "noise standard deviation must be nonnegative",
        ));
    }
    let mut x = match &options.initial_state {
        Some(x0) => {
            if x0.len() != sys.state_dim() {
                return Err(Error::Dimension {
                    what: "initial state",
                    expected: sys.state_dim(),
                    got: x0.len(),
                });
            }
            DVector::from_column_slice(x0)
        }
        None => sys.equilibrium(&us[0], &ds[0])?,
    };
    let mut noise = RngStream::new(options.noise_seed);
    let mut history = History::new();
    for j in 0..=horizon {
        sys.check_input(&us[j])?;
        let mut y = sys.output(&x);
        if options.noise_sd > 0.0 {
            for yi in y.iter_mut() {
                *yi += options.noise_sd * noise.standard_normal();
            }
        }
        history.push(Sample {
            j,
            t_hours: grid.time_of(j),
            u: us[j].clone(),
            d: ds[j].clone(),
            y: y.iter().copied().collect(),
        })?;
        if j < horizon {
            x = simulate_step(sys, &x, &us[j], &ds[j], ts)?;
        }
    }
    Ok(history)
}

/// Two-state thermal zone with radiant water heating and mechanical
/// ventilation.
///
/// States: wall temperature, room temperature (deg C). Inputs (normalized to
/// `[0, 1]`): water flow, air flow. Disturbances: outside temperature (deg C),
/// solar gain (normalized), supply-water temperature (deg C). Output: room
/// temperature.
///
/// Without flows the wall relaxes with a time constant of 30 h and the room
/// air with 2 h. Water flow drives the wall toward the supply temperature at
/// up to 0.15 /h; ventilation exchanges room air with outside air at up to
/// 10 /h.
pub fn thermal_zone_preset() -> BilinearSystem {
    const WALL_ROOM: f64 = 1.0 / 40.0;
    const WALL_OUT: f64 = 1.0 / 120.0;
    const ROOM_WALL: f64 = 1.0 / 2.5;
    const ROOM_OUT: f64 = 1.0 / 10.0;
    const SOLAR_GAIN: f64 = 2.0;
    const WATER_RATE: f64 = 0.15;
    const AIR_RATE: f64 = 10.0;

    let a = DMatrix::from_row_slice(
        2,
        2,
        &[
            -(WALL_ROOM + WALL_OUT),
            WALL_ROOM,
            ROOM_WALL,
            -(ROOM_WALL + ROOM_OUT),
        ],
    );
    let b_water = DMatrix::from_row_slice(2, 2, &[-WATER_RATE, 0.0, 0.0, 0.0]);
    let b_air = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -AIR_RATE]);
    let c = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
    let d = DMatrix::from_row_slice(2, 3, &[WALL_OUT, 0.0, 0.0, ROOM_OUT, SOLAR_GAIN, 0.0]);
    let d_water = DMatrix::from_row_slice(2, 3, &[0.0, 0.0, WATER_RATE, 0.0, 0.0, 0.0]);
    let d_air = DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 0.0, AIR_RATE, 0.0, 0.0]);
    let unit = Interval { lo: 0.0, hi: 1.0 };
    BilinearSystem::new(
        a,
        vec![b_water, b_air],
        c,
        d,
        vec![d_water, d_air],
        vec![unit, unit],
    )
    .expect("thermal preset is well formed")
}

/// Rapidly switching water and air flows for the thermal preset.
pub fn thermal_inputs(seed: u64) -> SignalGenerator {
    SignalGenerator::PiecewiseConstantRandom {
        lo: vec![0.0, 0.0],
        hi: vec![1.0, 1.0],
        hold_samples: 6,
        seed,
    }
}

/// Outside temperature on a 24 h sinusoid (2 +- 8 deg C, coldest at 03:00),
/// a seeded daily solar pulse, and 35 deg C supply water.
pub fn thermal_disturbances(seed: u64) -> SignalGenerator {
    SignalGenerator::Stack {
        parts: vec![
            SignalGenerator::Sinusoid {
                offset: vec![2.0],
                amplitude: vec![8.0],
                period_hours: 24.0,
                phase_hours: 9.0,
            },
            SignalGenerator::DailyPulse {
                peak_lo: 0.2,
                peak_hi: 1.0,
                sunrise_hours: 6.0,
                seed,
            },
            SignalGenerator::constant(vec![35.0]),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar_decay() -> BilinearSystem {
        BilinearSystem::new(
            DMatrix::from_element(1, 1, -1.0),
            vec![DMatrix::zeros(1, 1)],
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
            vec![DMatrix::zeros(1, 1)],
            vec![Interval::new(0.0, 1.0).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn scalar_linear_decay() {
        let sys = scalar_decay();
        let x0 = DVector::from_element(1, 1.0);
        for dt in [0.01, 1.0 / 12.0, 0.25] {
            let x = simulate_step(&sys, &x0, &[0.3], &[0.0], dt).unwrap();
            assert_abs_diff_eq!(x[0], (-dt).exp(), epsilon = 1e-8);
        }
        // longer steps: exactly the RK4 amplification factor per substep
        let dt = 0.5;
        let h = dt / DEFAULT_SUBSTEPS as f64;
        let factor: f64 = 1.0 - h + h * h / 2.0 - h.powi(3) / 6.0 + h.powi(4) / 24.0;
        let x = simulate_step(&sys, &x0, &[0.3], &[0.0], dt).unwrap();
        assert_abs_diff_eq!(x[0], factor.powi(DEFAULT_SUBSTEPS as i32), epsilon = 1e-14);
    }

    #[test]
    fn autonomous_step_matches_matrix_exponential() {
        let sys = thermal_zone_preset();
        let u = [0.0, 0.0];
        let d = [0.0, 0.0, 0.0];
        let ts = 1.0 / 12.0;
        let phi = (sys.frozen_state_matrix(&u) * ts).exp();
        let mut x = DVector::from_column_slice(&[20.0, 15.0]);
        let mut exact = x.clone();
        for _ in 0..100 {
            x = simulate_step(&sys, &x, &u, &d, ts).unwrap();
            exact = &phi * exact;
        }
        assert!((x - exact).amax() < 1e-8);
    }

    #[test]
    fn richardson_order_on_thermal_instance() {
        let sys = thermal_zone_preset();
        let x0 = DVector::from_column_slice(&[12.0, 18.0]);
        let u = [0.6, 0.7];
        let d = [3.0, 0.5, 35.0];
        let end = |n| simulate_step_with(&sys, &x0, &u, &d, 1.0, n).unwrap();
        let (a, b, c) = (end(2), end(4), end(8));
        let order = ((&a - &b).norm() / (&b - &c).norm()).log2();
        assert!(order >= 3.7, "observed order {order}");
    }

    #[test]
    fn constant_inputs_settle_at_equilibrium() {
        let sys = thermal_zone_preset();
        let grid = TimeGrid::aligned(1.0 / 12.0, 400).unwrap();
        let u = vec![0.4, 0.3];
        let d = vec![4.0, 0.2, 35.0];
        let options = RunOptions {
            initial_state: Some(vec![0.0, 0.0]),
            ..RunOptions::default()
        };
        let h = run_plant(
            &sys,
            &grid,
            &SignalGenerator::constant(u.clone()),
            &SignalGenerator::constant(d.clone()),
            12 * 24 * 30,
            &options,
        )
        .unwrap();
        // oracle: (A + sum u_i B_i) x = -(D + sum u_i D_i) d
        let lhs = sys.frozen_state_matrix(&u);
        let rhs = -(sys.frozen_disturbance_matrix(&u) * DVector::from_column_slice(&d));
        let xbar = lhs.lu().solve(&rhs).unwrap();
        let last = h.y(h.len() - 1)[0];
        assert_abs_diff_eq!(last, xbar[1], epsilon = 1e-6);
    }

    #[test]
    fn run_plant_is_zero_order_hold_composition() {
        let sys = thermal_zone_preset();
        let grid = TimeGrid::aligned(1.0 / 12.0, 400).unwrap();
        let inputs = thermal_inputs(5);
        let dist = thermal_disturbances(5);
        let options = RunOptions {
            initial_state: Some(vec![15.0, 19.0]),
            ..RunOptions::default()
        };
        let h = run_plant(&sys, &grid, &inputs, &dist, 300, &options).unwrap();
        let us = inputs.generate(301, grid.sampling_period_hours).unwrap();
        let ds = dist.generate(301, grid.sampling_period_hours).unwrap();
        let mut x = DVector::from_column_slice(&[15.0, 19.0]);
        for j in 0..=300 {
            assert_eq!(h.y(j), sys.output(&x).as_slice());
            if j < 300 {
                x = simulate_step(&sys, &x, &us[j], &ds[j], grid.sampling_period_hours).unwrap();
            }
        }
    }

    #[test]
    fn identical_seeds_give_identical_histories() {
        let sys = thermal_zone_preset();
        let grid = TimeGrid::aligned(1.0 / 12.0, 400).unwrap();
        let options = RunOptions {
            noise_sd: 0.3,
            noise_seed: 4,
            ..RunOptions::default()
        };
        let run = || {
            run_plant(
                &sys,
                &grid,
                &thermal_inputs(3),
                &thermal_disturbances(3),
                500,
                &options,
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn recorded_trace_replays_exactly() {
        let sys = thermal_zone_preset();
        let grid = TimeGrid::aligned(1.0 / 12.0, 400).unwrap();
        let h = run_plant(
            &sys,
            &grid,
            &thermal_inputs(6),
            &thermal_disturbances(6),
            200,
            &RunOptions::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        h.write_jsonl(&mut buf).unwrap();
        let back = History::read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, h);
        let replay = run_plant(
            &sys,
            &grid,
            &back.input_trace(),
            &back.disturbance_trace(),
            200,
            &RunOptions::default(),
        )
        .unwrap();
        assert_eq!(replay, h);
    }

    #[test]
    fn out_of_domain_input_rejected() {
        let sys = scalar_decay();
        let x0 = DVector::from_element(1, 1.0);
        let err = simulate_step(&sys, &x0, &[1.5], &[0.0], 0.1).unwrap_err();
        assert!(matches!(err, Error::DomainViolation { input: 0, .. }));
        assert!(simulate_step(&sys, &x0, &[0.5], &[0.0], 0.0).is_err());
    }

    #[test]
    fn unstable_vertex_rejected() {
        let err = BilinearSystem::new(
            DMatrix::from_element(1, 1, -1.0),
            vec![DMatrix::from_element(1, 1, 2.0)],
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
            vec![DMatrix::zeros(1, 1)],
            vec![Interval::new(0.0, 1.0).unwrap()],
        );
        assert!(err.is_err());
    }

    #[test]
    fn inconsistent_dimensions_rejected() {
        let err = BilinearSystem::new(
            DMatrix::from_element(2, 2, -1.0),
            vec![],
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(2, 1),
            vec![],
            vec![],
        );
        assert!(matches!(err, Err(Error::Dimension { .. })));
    }

    #[test]
    fn thermal_preset_invariants() {
        let sys = thermal_zone_preset();
        assert_eq!(sys.state_dim(), 2);
        assert_eq!(sys.input_dim(), 2);
        assert_eq!(sys.output_dim(), 1);
        assert_eq!(sys.disturbance_dim(), 3);
    }

    #[test]
    fn no_flow_room_relaxes_to_outside() {
        let sys = thermal_zone_preset();
        // No flow, no sun: the only driver is the outside temperature.
        let x = sys.equilibrium(&[0.0, 0.0], &[-3.0, 0.0, 35.0]).unwrap();
        assert_abs_diff_eq!(x[1], -3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(x[0], -3.0, epsilon = 1e-9);
    }

    #[test]
    fn more_water_flow_means_warmer_room() {
        let sys = thermal_zone_preset();
        let d = [2.0, 0.3, 35.0];
        let temps: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 1.0]
            .iter()
            .map(|uw| sys.equilibrium(&[*uw, 0.4], &d).unwrap()[1])
            .collect();
        assert!(temps.windows(2).all(|w| w[1] > w[0]), "{temps:?}");
    }

    #[test]
    fn history_rejects_non_increasing_indices() {
        let mut h = History::new();
        let s = |j| Sample {
            j,
            t_hours: 0.0,
            u: vec![],
            d: vec![],
            y: vec![],
        };
        h.push(s(0)).unwrap();
        h.push(s(2)).unwrap();
        assert!(h.push(s(2)).is_err());
        assert!(h.push(s(1)).is_err());
    }

    #[test]
    fn zero_horizon_keeps_initial_sample() {
        let sys = thermal_zone_preset();
        let grid = TimeGrid::aligned(1.0 / 12.0, 400).unwrap();
        let h = run_plant(
            &sys,
            &grid,
            &thermal_inputs(1),
            &thermal_disturbances(1),
            0,
            &RunOptions::default(),
        )
        .unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h.samples()[0].j, 0);
    }

    #[test]
    fn generators_respect_bounds() {
        let rows = thermal_inputs(9).generate(5000, 1.0 / 12.0).unwrap();
        assert!(rows.iter().flatten().all(|u| (0.0..=1.0).contains(u)));
        // held for 6 samples
        assert_eq!(rows[0], rows[5]);
        assert_ne!(rows[5], rows[6]);
        let dist = thermal_disturbances(2)
            .generate(24 * 12 * 3, 1.0 / 12.0)
            .unwrap();
        assert_eq!(dist[0].len(), 3);
        assert!(dist
            .iter()
            .all(|d| d[1] >= 0.0 && d[1] <= 1.0 && d[2] == 35.0));
        assert!(dist
            .iter()
            .all(|d| d[0] >= -6.0 - 1e-12 && d[0] <= 10.0 + 1e-12));
    }

    #[test]
    fn time_grid_validation() {
        assert!(TimeGrid::new(1.0 / 12.0, 400, 401).is_err());
        assert!(TimeGrid::new(0.0, 400, 400).is_err());
        let g = TimeGrid::aligned(1.0 / 12.0, 400).unwrap();
        assert_abs_diff_eq!(g.evaluation_period_hours(), 400.0 / 12.0, epsilon = 1e-12);
    }
}
