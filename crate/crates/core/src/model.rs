//! Output-error regression predictors and the switched predictor built from
//! them.
//!
//! A predictor maps the history up to sample `j` to a one-step-ahead output
//! estimate `phi(j)^T theta`. The regressor `phi(j)` is laid out as
//!
//! ```text
//! [ y_o(j), y_o(j-1), ..., y_o(j-n+1)   for each output o
//!   u_i(j), ..., u_i(j-n+1)             for each input i
//!   d_l(j), ..., d_l(j-n+1)             for each disturbance l
//!   product terms at lag 0 ]
//! ```
//!
//! where `n` is the basis order. Linear bases have no product terms.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::PartitionProfile;
use crate::plant::History;

pub const DEFAULT_RIDGE: f64 = 1e-6;

/// Lag-0 product of an input with an output or a disturbance channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProductTerm {
    InputOutput { input: usize, output: usize },
    InputDisturbance { input: usize, disturbance: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Basis {
    pub order: usize,
    pub outputs: usize,
    pub inputs: usize,
    pub disturbances: usize,
    #[serde(default)]
    pub products: Vec<ProductTerm>,
}

impl Basis {
    pub fn linear(order: usize, outputs: usize, inputs: usize, disturbances: usize) -> Self {
        Self {
            order,
            outputs,
            inputs,
            disturbances,
            products: Vec::new(),
        }
    }

    pub fn bilinear(
        order: usize,
        outputs: usize,
        inputs: usize,
        disturbances: usize,
        products: Vec<ProductTerm>,
    ) -> Self {
        Self {
            order,
            outputs,
            inputs,
            disturbances,
            products,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.order == 0 || self.outputs == 0 {
            return Err(Error::invalid(
                "basis needs order >= 1 and at least one output",
            ));
        }
        for p in &self.products {
            let ok = match *p {
                ProductTerm::InputOutput { input, output } => {
                    input < self.inputs && output < self.outputs
                }
                ProductTerm::InputDisturbance { input, disturbance } => {
                    input < self.inputs && disturbance < self.disturbances
                }
            };
            if !ok {
                return Err(Error::invalid(format!(
                    "product term {p:?} references a missing channel"
                )));
            }
        }
        Ok(())
    }

    pub fn regressor_len(&self) -> usize {
        self.order * (self.outputs + self.inputs + self.disturbances) + self.products.len()
    }

    /// Smallest sample index at which every lag exists.
    pub fn max_lag(&self) -> usize {
        self.order - 1
    }

    pub fn is_bilinear(&self) -> bool {
        !self.products.is_empty()
    }
}

/// A predictor: basis, regularization and (once trained) parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorSpec {
    #[serde(rename = "model_id")]
    pub id: usize,
    pub name: String,
    pub basis: Basis,
    pub ridge: f64,
    /// Column-major `regressor_len x outputs` parameter matrix.
    pub theta: Option<Vec<f64>>,
}

impl PredictorSpec {
    pub fn new(id: usize, name: impl Into<String>, basis: Basis, ridge: f64) -> Result<Self> {
        basis.validate()?;
        if !(ridge >= 0.0) || !ridge.is_finite() {
            return Err(Error::invalid(format!(
                "ridge factor must be nonnegative, got {ridge}"
            )));
        }
        Ok(Self {
            id,
            name: name.into(),
            basis,
            ridge,
            theta: None,
        })
    }

    pub fn is_trained(&self) -> bool {
        self.theta.is_some()
    }

    pub fn with_theta(mut self, theta: Vec<f64>) -> Result<Self> {
        let expected = self.basis.regressor_len() * self.basis.outputs;
        if theta.len() != expected {
            return Err(Error::Dimension {
                what: "parameter vector",
                expected,
                got: theta.len(),
            });
        }
        self.theta = Some(theta);
        Ok(self)
    }

    fn theta_matrix(&self) -> Option<DMatrix<f64>> {
        self.theta
            .as_ref()
            .map(|t| DMatrix::from_column_slice(self.basis.regressor_len(), self.basis.outputs, t))
    }
}

/// How much recent history the training operator looks at.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainingWindow {
    #[default]
    All,
    /// At most this many most recent regressor/target pairs.
    Last(usize),
}

impl TrainingWindow {
    pub fn last(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("training window must be positive"));
        }
        Ok(TrainingWindow::Last(n))
    }
}

/// Regressor at sample `j`, or `None` while some lag is still missing.
pub fn build_regressor(basis: &Basis, h: &History, j: usize) -> Result<Option<DVector<f64>>> {
    if j >= h.len() {
        return Err(Error::invalid(format!(
            "sample {j} is beyond the history of length {}",
            h.len()
        )));
    }
    if j < basis.max_lag() {
        return Ok(None);
    }
    let s = &h.samples()[j];
    check_widths(basis, &s.y, &s.u, &s.d)?;
    let mut phi = DVector::zeros(basis.regressor_len());
    let mut k = 0;
    for o in 0..basis.outputs {
        for lag in 0..basis.order {
            phi[k] = h.y(j - lag)[o];
            k += 1;
        }
    }
    for i in 0..basis.inputs {
        for lag in 0..basis.order {
            phi[k] = h.u(j - lag)[i];
            k += 1;
        }
    }
    for l in 0..basis.disturbances {
        for lag in 0..basis.order {
            phi[k] = h.d(j - lag)[l];
            k += 1;
        }
    }
    for p in &basis.products {
        phi[k] = match *p {
            ProductTerm::InputOutput { input, output } => s.u[input] * s.y[output],
            ProductTerm::InputDisturbance { input, disturbance } => s.u[input] * s.d[disturbance],
        };
        k += 1;
    }
    Ok(Some(phi))
}

fn check_widths(basis: &Basis, y: &[f64], u: &[f64], d: &[f64]) -> Result<()> {
    if y.len() != basis.outputs {
        return Err(Error::Dimension {
            what: "output channels",
            expected: basis.outputs,
            got: y.len(),
        });
    }
    if u.len() != basis.inputs {
        return Err(Error::Dimension {
            what: "input channels",
            expected: basis.inputs,
            got: u.len(),
        });
    }
    if d.len() != basis.disturbances {
        return Err(Error::Dimension {
            what: "disturbance channels",
            expected: basis.disturbances,
            got: d.len(),
        });
    }
    Ok(())
}

/// Sample indices `j` whose pair `(phi(j), y(j + 1))` falls in the window.
pub fn window_indices(
    basis: &Basis,
    h: &History,
    window: TrainingWindow,
) -> std::ops::Range<usize> {
    window_indices_upto(basis, h.len(), window)
}

fn window_indices_upto(
    basis: &Basis,
    len: usize,
    window: TrainingWindow,
) -> std::ops::Range<usize> {
    if len < 2 {
        return 0..0;
    }
    let last = len - 1;
    let start = match window {
        TrainingWindow::All => 0,
        TrainingWindow::Last(n) => last.saturating_sub(n),
    };
    start.max(basis.max_lag())..last
}

/// Regularized least squares on every pair in the window.
pub fn train(spec: &PredictorSpec, h: &History, window: TrainingWindow) -> Result<PredictorSpec> {
    train_where(spec, h, window, |_| true)
}

/// Regularized least squares on the window pairs whose sample index passes
/// `keep`:
///
/// `theta = argmin sum (y(j+1) - phi(j)^T theta)^2 + ridge * |theta|^2`.
pub fn train_where<F: Fn(usize) -> bool>(
    spec: &PredictorSpec,
    h: &History,
    window: TrainingWindow,
    keep: F,
) -> Result<PredictorSpec> {
    train_upto(spec, h, h.len(), window, keep)
}

/// [`train_where`] on the first `len` samples of `h` only.
pub fn train_upto<F: Fn(usize) -> bool>(
    spec: &PredictorSpec,
    h: &History,
    len: usize,
    window: TrainingWindow,
    keep: F,
) -> Result<PredictorSpec> {
    if len > h.len() {
        return Err(Error::invalid(format!(
            "prefix of {len} samples exceeds the history of {}",
            h.len()
        )));
    }
    let basis = &spec.basis;
    let p = basis.regressor_len();
    let q = basis.outputs;
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut cross = DMatrix::<f64>::zeros(p, q);
    let mut pairs = 0usize;
    for j in window_indices_upto(basis, len, window) {
        if !keep(j) {
            continue;
        }
        let Some(phi) = build_regressor(basis, h, j)? else {
            continue;
        };
        gram.syger(1.0, &phi, &phi, 1.0);
        let target = h.y(j + 1);
        for o in 0..q {
            let mut col = cross.column_mut(o);
            col.axpy(target[o], &phi, 1.0);
        }
        pairs += 1;
    }
    if pairs == 0 {
        return Err(Error::invalid(
            "history too short to form a regressor/target pair",
        ));
    }
    // syger fills the lower triangle only
    gram.fill_upper_triangle_with_lower_triangle();
    let theta = solve_normal_equations(gram, cross, spec.ridge)?;
    let mut trained = spec.clone();
    trained.theta = Some(theta.as_slice().to_vec());
    Ok(trained)
}

fn solve_normal_equations(
    mut gram: DMatrix<f64>,
    cross: DMatrix<f64>,
    ridge: f64,
) -> Result<DMatrix<f64>> {
    let p = gram.nrows();
    if ridge == 0.0 {
        let eig = gram.clone().symmetric_eigen();
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if !(max > 0.0) || min <= max * 1e-13 {
            return Err(Error::IllConditioned(format!(
                "normal matrix eigenvalues span [{min:e}, {max:e}] with no regularization"
            )));
        }
    } else {
        for i in 0..p {
            gram[(i, i)] += ridge;
        }
    }
    if let Some(chol) = gram.clone().cholesky() {
        return Ok(chol.solve(&cross));
    }
    gram.svd(true, true)
        .solve(&cross, 0.0)
        .map_err(|e| Error::IllConditioned(e.to_string()))
}

/// Regularized squared loss of `theta` on the window; used to check optimality.
pub fn regularized_loss(
    spec: &PredictorSpec,
    h: &History,
    window: TrainingWindow,
    theta: &[f64],
) -> Result<f64> {
    let basis = &spec.basis;
    let theta = DMatrix::from_column_slice(basis.regressor_len(), basis.outputs, theta);
    let mut loss = spec.ridge * theta.norm_squared();
    for j in window_indices(basis, h, window) {
        let Some(phi) = build_regressor(basis, h, j)? else {
            continue;
        };
        let pred = theta.transpose() * phi;
        for (o, yo) in h.y(j + 1).iter().enumerate() {
            loss += (yo - pred[o]).powi(2);
        }
    }
    Ok(loss)
}

/// What a prediction was based on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PredictionSource {
    Model,
    /// Lags were missing; the last observation was repeated.
    Persistence,
}

/// One-step-ahead prediction of `y(j + 1)` from the history up to `j`.
pub fn predict(spec: &PredictorSpec, h: &History, j: usize) -> Result<Vec<f64>> {
    predict_with_source(spec, h, j).map(|(y, _)| y)
}

pub fn predict_with_source(
    spec: &PredictorSpec,
    h: &History,
    j: usize,
) -> Result<(Vec<f64>, PredictionSource)> {
    let theta = spec.theta_matrix().ok_or(Error::Untrained(spec.id))?;
    match build_regressor(&spec.basis, h, j)? {
        Some(phi) => {
            let y = theta.transpose() * phi;
            Ok((y.iter().copied().collect(), PredictionSource::Model))
        }
        None => Ok((h.y(j).to_vec(), PredictionSource::Persistence)),
    }
}

/// One model per subset of a partition profile.
#[derive(Clone, Debug, PartialEq)]
pub struct SwitchedPredictor {
    profile: PartitionProfile,
    models: Vec<PredictorSpec>,
}

impl SwitchedPredictor {
    /// `models[k]` serves the `k`-th subset in enumeration order.
    pub fn new(profile: PartitionProfile, models: Vec<PredictorSpec>) -> Result<Self> {
        if models.len() != profile.subset_count() {
            return Err(Error::Dimension {
                what: "switched predictor models",
                expected: profile.subset_count(),
                got: models.len(),
            });
        }
        Ok(Self { profile, models })
    }

    pub fn profile(&self) -> &PartitionProfile {
        &self.profile
    }

    pub fn models(&self) -> &[PredictorSpec] {
        &self.models
    }
}

/// Routes the prediction at `j` to the model of the subset containing `u(j)`.
pub fn predict_switched(sw: &SwitchedPredictor, h: &History, j: usize) -> Result<Vec<f64>> {
    let s = h
        .get(j)
        .ok_or_else(|| Error::invalid(format!("sample {j} is beyond the history")))?;
    let k = sw.profile.locate_index(&s.u)?;
    predict(&sw.models[k], h, j)
}

/// Models for a plant with the given channel counts: a 2nd-order linear basis,
/// a 3rd-order linear basis, and a 2nd-order basis extended by `products`.
pub fn model_menu(
    outputs: usize,
    inputs: usize,
    disturbances: usize,
    products: Vec<ProductTerm>,
) -> Result<Vec<PredictorSpec>> {
    Ok(vec![
        PredictorSpec::new(
            0,
            "linear-2",
            Basis::linear(2, outputs, inputs, disturbances),
            DEFAULT_RIDGE,
        )?,
        PredictorSpec::new(
            1,
            "linear-3",
            Basis::linear(3, outputs, inputs, disturbances),
            DEFAULT_RIDGE,
        )?,
        PredictorSpec::new(
            2,
            "bilinear-2",
            Basis::bilinear(2, outputs, inputs, disturbances, products),
            DEFAULT_RIDGE,
        )?,
    ])
}

/// The three-model menu for the thermal preset (one output, water and air
/// flow inputs, outside temperature / solar / supply disturbances). The
/// bilinear model adds each flow times the room temperature and times the
/// outside temperature.
pub fn model_preset_menu() -> Vec<PredictorSpec> {
    let products = vec![
        ProductTerm::InputOutput {
            input: 0,
            output: 0,
        },
        ProductTerm::InputOutput {
            input: 1,
            output: 0,
        },
        ProductTerm::InputDisturbance {
            input: 0,
            disturbance: 0,
        },
        ProductTerm::InputDisturbance {
            input: 1,
            disturbance: 0,
        },
    ];
    model_menu(1, 2, 3, products).expect("preset bases are valid")
}
