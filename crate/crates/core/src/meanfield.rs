//! Mean-field dynamics of the supervisor under fixed mean rewards.
//!
//! With `pi = (1 - lambda) v + lambda / |M|` the expected model-strategy
//! motion of a subset is
//!
//! `g[i] = r[i] pi[i] - v[i] sum_j r[j] pi[j]`,
//!
//! and with `rho = (1 - lambda) w + lambda / |P|` and
//! `Rt[p] = sum_a sum_i r_pa[i] pi_pa[i]` the profile-strategy motion is
//!
//! `f[q] = rho[q] Rt[q] - w[q] sum_p rho[p] Rt[p]`.
//!
//! [`FieldKind::Literal`] evolves every `v_pa` with `g` directly.
//! [`FieldKind::SelectionWeighted`] scales the motion of the blocks of
//! profile `p` by `rho[p]`, the probability that the profile is in use; this
//! is the expected one-step increment of the recursion, where a block only
//! moves while its profile serves. Both share their stationary points.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::scenario::{AssumptionReport, RewardTable};
use crate::simplex::StrategyVector;
use crate::supervisor::SupervisorState;

/// Integration step used unless stated otherwise.
pub const DEFAULT_STEP: f64 = 0.01;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    #[default]
    Literal,
    SelectionWeighted,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeanFieldScenario {
    table: RewardTable,
    lambda: f64,
}

impl MeanFieldScenario {
    pub fn new(table: RewardTable, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::invalid(format!(
                "perturbation must lie in [0, 1], got {lambda}"
            )));
        }
        Ok(Self { table, lambda })
    }

    pub fn table(&self) -> &RewardTable {
        &self.table
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.table.clone(), lambda)
    }

    pub fn report(&self) -> AssumptionReport {
        self.table.check()
    }

    fn models(&self) -> usize {
        self.table.models()
    }

    /// Aggregate `sum_a sum_i r_pa[i] v_pa[i]` of every profile.
    pub fn aggregate(&self, point: &MeanFieldPoint) -> Vec<f64> {
        point
            .v
            .iter()
            .enumerate()
            .map(|(p, blocks)| {
                blocks
                    .iter()
                    .enumerate()
                    .map(|(a, v)| dot(self.table.subset_rewards(p, a), v))
                    .sum()
            })
            .collect()
    }

    /// The pure pair: best profile and best model on every subset.
    pub fn pure_best(&self) -> MeanFieldPoint {
        let m = self.models();
        let w = vertex(self.table.profiles(), self.table.best_profile());
        let v = (0..self.table.profiles())
            .map(|p| {
                self.table
                    .best_models(p)
                    .into_iter()
                    .map(|b| vertex(m, b))
                    .collect()
            })
            .collect();
        MeanFieldPoint { w, v }
    }
}

fn vertex(n: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = 1.0;
    e
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn perturb(v: &[f64], lambda: f64) -> Vec<f64> {
    let n = v.len() as f64;
    v.iter().map(|x| (1.0 - lambda) * x + lambda / n).collect()
}

/// Profile strategy and every model strategy, one block per (profile, subset).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeanFieldPoint {
    pub w: Vec<f64>,
    pub v: Vec<Vec<Vec<f64>>>,
}

impl MeanFieldPoint {
    pub fn uniform(scenario: &MeanFieldScenario) -> Self {
        let m = scenario.models();
        let layout = scenario.table.layout();
        Self {
            w: vec![1.0 / layout.len() as f64; layout.len()],
            v: layout
                .iter()
                .map(|n| vec![vec![1.0 / m as f64; m]; *n])
                .collect(),
        }
    }

    pub fn from_state(state: &SupervisorState) -> Self {
        Self {
            w: state.w().as_slice().to_vec(),
            v: state
                .all_v()
                .iter()
                .map(|blocks| blocks.iter().map(|v| v.as_slice().to_vec()).collect())
                .collect(),
        }
    }

    /// Strategy vectors for seeding a supervisor at this point.
    pub fn to_strategies(&self) -> Result<(StrategyVector, Vec<Vec<StrategyVector>>)> {
        let w = StrategyVector::new(self.w.clone())?;
        let v = self
            .v
            .iter()
            .map(|blocks| {
                blocks
                    .iter()
                    .map(|b| StrategyVector::new(b.clone()))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((w, v))
    }

    /// Independent uniform draws on each simplex block.
    pub fn random_interior(scenario: &MeanFieldScenario, rng: &mut RngStream) -> Self {
        let mut draw = |n: usize| {
            let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.uniform()).ln()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|x| x / s).collect::<Vec<f64>>()
        };
        let layout = scenario.table.layout();
        let w = draw(layout.len());
        let v = layout
            .iter()
            .map(|n| (0..*n).map(|_| draw(scenario.models())).collect())
            .collect();
        Self { w, v }
    }

    fn blocks(&self) -> impl Iterator<Item = &Vec<f64>> {
        std::iter::once(&self.w).chain(self.v.iter().flatten())
    }

    fn blocks_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        std::iter::once(&mut self.w).chain(self.v.iter_mut().flatten())
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.blocks().all(|b| {
            b.iter().all(|x| *x >= -tol && *x <= 1.0 + tol)
                && (b.iter().sum::<f64>() - 1.0).abs() <= tol
        })
    }

    pub fn is_interior(&self) -> bool {
        self.blocks().all(|b| b.iter().all(|x| *x > 0.0))
    }

    /// `w` followed by the blocks in (profile, subset) order.
    pub fn flatten(&self) -> Vec<f64> {
        self.blocks().flatten().copied().collect()
    }

    fn assign(&mut self, flat: &[f64]) {
        let mut k = 0;
        for b in self.blocks_mut() {
            for x in b.iter_mut() {
                *x = flat[k];
                k += 1;
            }
        }
    }

    fn with_flat(&self, flat: &[f64]) -> Self {
        let mut out = self.clone();
        out.assign(flat);
        out
    }

    /// Sup-norm distance over all coordinates.
    pub fn distance(&self, other: &MeanFieldPoint) -> f64 {
        self.flatten()
            .iter()
            .zip(other.flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Sup-norm distance to the set where `w` is the best profile's vertex
    /// and that profile's blocks sit on their best models. Blocks of other
    /// profiles do not enter, since they carry no weight there.
    pub fn distance_to_optimal_set(&self, scenario: &MeanFieldScenario) -> f64 {
        let best = scenario.pure_best();
        let p = scenario.table.best_profile();
        let sup = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        };
        self.v[p]
            .iter()
            .zip(&best.v[p])
            .map(|(a, b)| sup(a, b))
            .fold(sup(&self.w, &best.w), f64::max)
    }

    /// Clips negatives and rescales each block onto the simplex.
    fn renormalize(&mut self) {
        for b in self.blocks_mut() {
            for x in b.iter_mut() {
                *x = x.max(0.0);
            }
            let s: f64 = b.iter().sum();
            for x in b.iter_mut() {
                *x /= s;
            }
        }
    }
}

/// Expected model-strategy motion of a subset with rewards `rewards`.
pub fn g_field(rewards: &[f64], v: &[f64], lambda: f64) -> Vec<f64> {
    let pi = perturb(v, lambda);
    let mean: f64 = dot(rewards, &pi);
    rewards
        .iter()
        .zip(&pi)
        .zip(v)
        .map(|((r, p), vi)| r * p - vi * mean)
        .collect()
}

/// Expected profile-strategy motion.
pub fn f_field(scenario: &MeanFieldScenario, point: &MeanFieldPoint) -> Vec<f64> {
    let lambda = scenario.lambda;
    let r_tilde: Vec<f64> = point
        .v
        .iter()
        .enumerate()
        .map(|(p, blocks)| {
            blocks
                .iter()
                .enumerate()
                .map(|(a, v)| dot(scenario.table.subset_rewards(p, a), &perturb(v, lambda)))
                .sum()
        })
        .collect();
    let rho = perturb(&point.w, lambda);
    let mean = dot(&rho, &r_tilde);
    rho.iter()
        .zip(&r_tilde)
        .zip(&point.w)
        .map(|((q, r), w)| q * r - w * mean)
        .collect()
}

/// Full vector field at `point`.
pub fn field(
    scenario: &MeanFieldScenario,
    point: &MeanFieldPoint,
    kind: FieldKind,
) -> MeanFieldPoint {
    let rho = perturb(&point.w, scenario.lambda);
    let v = point
        .v
        .iter()
        .enumerate()
        .map(|(p, blocks)| {
            let scale = match kind {
                FieldKind::Literal => 1.0,
                FieldKind::SelectionWeighted => rho[p],
            };
            blocks
                .iter()
                .enumerate()
                .map(|(a, b)| {
                    g_field(scenario.table.subset_rewards(p, a), b, scenario.lambda)
                        .into_iter()
                        .map(|x| scale * x)
                        .collect()
                })
                .collect()
        })
        .collect();
    MeanFieldPoint {
        w: f_field(scenario, point),
        v,
    }
}

/// Largest absolute field coordinate.
pub fn residual(scenario: &MeanFieldScenario, point: &MeanFieldPoint) -> f64 {
    field(scenario, point, FieldKind::Literal)
        .flatten()
        .iter()
        .fold(0.0, |m, x| m.max(x.abs()))
}

/// `V = R*(p*, v*) - sum_p w[p] Rbar(p, v)`; zero exactly on the optimal set.
pub fn lyapunov(scenario: &MeanFieldScenario, point: &MeanFieldPoint) -> f64 {
    let best = scenario.table.best_aggregate(scenario.table.best_profile());
    best - dot(&point.w, &scenario.aggregate(point))
}

/// `sum_p w_p sum_a rbar^T V(v_pa) rbar + Rbar^T W(w) Rbar` with
/// `rbar^T V(v) rbar = sum_{i<j} v_i v_j (r_i - r_j)^2`.
pub fn descent_form(scenario: &MeanFieldScenario, point: &MeanFieldPoint) -> f64 {
    let pairwise = |v: &[f64], r: &[f64]| {
        let mut s = 0.0;
        for i in 0..v.len() {
            for j in (i + 1)..v.len() {
                s += v[i] * v[j] * (r[i] - r[j]).powi(2);
            }
        }
        s
    };
    let models: f64 = point
        .v
        .iter()
        .enumerate()
        .map(|(p, blocks)| {
            point.w[p]
                * blocks
                    .iter()
                    .enumerate()
                    .map(|(a, v)| pairwise(v, scenario.table.subset_rewards(p, a)))
                    .sum::<f64>()
        })
        .sum();
    models + pairwise(&point.w, &scenario.aggregate(point))
}

/// Fixed-step fourth-order integration with renormalization after every
/// step. Returns the start followed by one point per step.
pub fn integrate(
    scenario: &MeanFieldScenario,
    start: &MeanFieldPoint,
    step: f64,
    horizon: f64,
    kind: FieldKind,
) -> Result<Vec<MeanFieldPoint>> {
    if !(step > 0.0) || !(horizon >= 0.0) {
        return Err(Error::invalid(format!(
            "need step > 0 and horizon >= 0, got {step} and {horizon}"
        )));
    }
    if !start.is_valid(1e-9) {
        return Err(Error::invalid("integration must start on the simplex"));
    }
    let steps = (horizon / step).round() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(start.clone());
    let mut x = start.clone();
    for _ in 0..steps {
        x = rk4_step(scenario, &x, step, kind);
        if x.flatten().iter().any(|c| !c.is_finite()) {
            return Err(Error::Numerical("mean-field integration diverged".into()));
        }
        out.push(x.clone());
    }
    Ok(out)
}

fn rk4_step(
    scenario: &MeanFieldScenario,
    x: &MeanFieldPoint,
    h: f64,
    kind: FieldKind,
) -> MeanFieldPoint {
    let base = x.flatten();
    let eval = |flat: &[f64]| field(scenario, &x.with_flat(flat), kind).flatten();
    let axpy = |a: f64, k: &[f64]| {
        base.iter()
            .zip(k)
            .map(|(b, k)| b + a * k)
            .collect::<Vec<f64>>()
    };
    let k1 = eval(&base);
    let k2 = eval(&axpy(h / 2.0, &k1));
    let k3 = eval(&axpy(h / 2.0, &k2));
    let k4 = eval(&axpy(h, &k3));
    let next: Vec<f64> = (0..base.len())
        .map(|i| base[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    let mut out = x.with_flat(&next);
    out.renormalize();
    out
}

/// A located zero of the field.
#[derive(Clone, Debug, Serialize)]
pub struct StationaryPoint {
    pub point: MeanFieldPoint,
    pub residual: f64,
    /// Sup-norm distance to the pure best pair.
    pub distance_to_best: f64,
}

/// Zero of the field reached from `init`: the flow carries the point into
/// the basin, then Newton steps in reduced simplex coordinates polish it.
pub fn stationary_point(
    scenario: &MeanFieldScenario,
    init: &MeanFieldPoint,
) -> Result<StationaryPoint> {
    if !(scenario.lambda > 0.0) {
        return Err(Error::invalid(
            "stationary points are located for positive perturbation only",
        ));
    }
    let mut x = init.clone();
    let mut t = 0.0;
    while residual(scenario, &x) > 1e-6 && t < 2000.0 {
        x = rk4_step(scenario, &x, 0.05, FieldKind::Literal);
        t += 0.05;
    }
    for _ in 0..50 {
        let res = residual(scenario, &x);
        if res < 1e-13 {
            break;
        }
        let Some(next) = newton_step(scenario, &x) else {
            break;
        };
        if residual(scenario, &next) >= res {
            break;
        }
        x = next;
    }
    let residual = residual(scenario, &x);
    if !(residual < 1e-10) {
        return Err(Error::Numerical(format!(
            "stationary point residual {residual:e} above 1e-10"
        )));
    }
    let distance_to_best = x.distance(&scenario.pure_best());
    Ok(StationaryPoint {
        point: x,
        residual,
        distance_to_best,
    })
}

/// Positions of the free coordinates: all but the last of each block.
fn reduced_layout(point: &MeanFieldPoint) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut offset = 0;
    for b in point.blocks() {
        out.push((offset, b.len()));
        offset += b.len();
    }
    out
}

fn reduce(layout: &[(usize, usize)], flat: &[f64]) -> Vec<f64> {
    layout
        .iter()
        .flat_map(|(o, n)| flat[*o..o + n - 1].iter().copied())
        .collect()
}

fn expand(layout: &[(usize, usize)], reduced: &[f64], total: usize) -> Vec<f64> {
    let mut flat = vec![0.0; total];
    let mut k = 0;
    for (o, n) in layout {
        let mut s = 0.0;
        for i in 0..n - 1 {
            flat[o + i] = reduced[k];
            s += reduced[k];
            k += 1;
        }
        flat[o + n - 1] = 1.0 - s;
    }
    flat
}

fn newton_step(scenario: &MeanFieldScenario, x: &MeanFieldPoint) -> Option<MeanFieldPoint> {
    let layout = reduced_layout(x);
    let total = x.flatten().len();
    let z = reduce(&layout, &x.flatten());
    let n = z.len();
    if n == 0 {
        return None;
    }
    let f = |z: &[f64]| {
        reduce(
            &layout,
            &field(
                scenario,
                &x.with_flat(&expand(&layout, z, total)),
                FieldKind::Literal,
            )
            .flatten(),
        )
    };
    let f0 = DVector::from_vec(f(&z));
    let mut jac = DMatrix::zeros(n, n);
    for c in 0..n {
        let h = 1e-7;
        let mut plus = z.clone();
        let mut minus = z.clone();
        plus[c] += h;
        minus[c] -= h;
        let col = (DVector::from_vec(f(&plus)) - DVector::from_vec(f(&minus))) / (2.0 * h);
        jac.set_column(c, &col);
    }
    let delta = jac.lu().solve(&(-f0))?;
    let mut scale = 1.0;
    for _ in 0..30 {
        let cand: Vec<f64> = z
            .iter()
            .zip(delta.iter())
            .map(|(a, d)| a + scale * d)
            .collect();
        let point = x.with_flat(&expand(&layout, &cand, total));
        if point.is_valid(1e-12) {
            return Some(point);
        }
        scale /= 2.0;
    }
    None
}

/// Writes a trajectory as CSV: time, then one column per coordinate.
pub fn write_trajectory_csv<W: Write>(
    mut out: W,
    trajectory: &[MeanFieldPoint],
    step: f64,
) -> Result<()> {
    let Some(first) = trajectory.first() else {
        writeln!(out, "t")?;
        return Ok(());
    };
    let mut header = vec!["t".to_string()];
    header.extend((0..first.w.len()).map(|p| format!("w{p}")));
    for (p, blocks) in first.v.iter().enumerate() {
        for (a, b) in blocks.iter().enumerate() {
            header.extend((0..b.len()).map(|m| format!("v{p}_{a}_{m}")));
        }
    }
    writeln!(out, "{}", header.join(","))?;
    for (i, x) in trajectory.iter().enumerate() {
        let row: Vec<String> = std::iter::once(i as f64 * step)
            .chain(x.flatten())
            .map(|c| c.to_string())
            .collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::{perturbed_sample, v_matrix};
    use approx::assert_abs_diff_eq;

    fn scenario(lambda: f64) -> MeanFieldScenario {
        let table = RewardTable::new(vec![
            vec![vec![1.0, 2.0, 0.5]],
            vec![vec![0.4, 1.5, 0.9], vec![1.2, 0.3, 0.6]],
        ])
        .unwrap();
        MeanFieldScenario::new(table, lambda).unwrap()
    }

    #[test]
    fn unperturbed_g_is_v_matrix_times_rewards() {
        assert_eq!(g_field(&[1.0, 3.0], &[0.5, 0.5], 0.0), vec![-0.5, 0.5]);
        let v = StrategyVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        let r = [1.0, 4.0, 2.0];
        let expected = v_matrix(&v) * DVector::from_column_slice(&r);
        for (a, b) in g_field(&r, v.as_slice(), 0.0).iter().zip(expected.iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-15);
        }
    }

    #[test]
    fn unperturbed_fields_vanish_at_vertices() {
        let s = scenario(0.0);
        for m in 0..3 {
            assert!(g_field(&[1.0, 2.0, 0.5], &vertex(3, m), 0.0)
                .iter()
                .all(|x| *x == 0.0));
        }
        let mut x = s.pure_best();
        x.w = vertex(2, 0);
        assert!(residual(&s, &x) == 0.0);
    }

    #[test]
    fn perturbed_field_leaves_non_best_vertices() {
        let r = [1.0, 2.0, 0.5];
        for lambda in [0.01, 0.1] {
            for m in [0, 2] {
                let g = g_field(&r, &vertex(3, m), lambda);
                assert!(g[m] < 0.0, "field keeps non-best vertex {m}: {g:?}");
            }
        }
    }

    #[test]
    fn fields_match_sampling() {
        let s = scenario(0.2);
        let mut rng = RngStream::new(42);
        let point = MeanFieldPoint::random_interior(&s, &mut rng);
        let n = 200_000;
        let (w, v) = point.to_strategies().unwrap();
        let mut sum_f = [0.0; 2];
        let mut sq_f = [0.0; 2];
        for _ in 0..n {
            let p = perturbed_sample(&w, s.lambda(), &mut rng).unwrap();
            let big_r: f64 = (0..v[p].len())
                .map(|a| {
                    s.table().reward(
                        p,
                        a,
                        perturbed_sample(&v[p][a], s.lambda(), &mut rng).unwrap(),
                    )
                })
                .sum();
            for q in 0..2 {
                let e = if q == p { 1.0 } else { 0.0 };
                let x = big_r * (e - point.w[q]);
                sum_f[q] += x;
                sq_f[q] += x * x;
            }
        }
        let f = f_field(&s, &point);
        for q in 0..2 {
            let mean = sum_f[q] / n as f64;
            let se = ((sq_f[q] / n as f64 - mean * mean) / n as f64).sqrt();
            assert!(
                (mean - f[q]).abs() < 4.0 * se,
                "coordinate {q}: {mean} vs {}",
                f[q]
            );
        }
    }

    #[test]
    fn trajectories_stay_on_the_simplex() {
        let s = scenario(0.05);
        let traj = integrate(
            &s,
            &MeanFieldPoint::uniform(&s),
            DEFAULT_STEP,
            20.0,
            FieldKind::Literal,
        )
        .unwrap();
        assert_eq!(traj.len(), 2001);
        assert!(traj.iter().all(|x| x.is_valid(1e-12)));
        assert!(integrate(
            &s,
            &MeanFieldPoint::uniform(&s),
            0.0,
            1.0,
            FieldKind::Literal
        )
        .is_err());
    }

    #[test]
    fn stationary_point_is_invariant_for_both_fields() {
        let s = scenario(0.05);
        let sp = stationary_point(&s, &MeanFieldPoint::uniform(&s)).unwrap();
        assert!(sp.residual < 1e-10);
        for kind in [FieldKind::Literal, FieldKind::SelectionWeighted] {
            let traj = integrate(&s, &sp.point, DEFAULT_STEP, 10.0, kind).unwrap();
            assert!(traj.iter().all(|x| x.distance(&sp.point) < 1e-6));
        }
    }

    #[test]
    fn trivial_menu_has_the_trivial_point() {
        let s =
            MeanFieldScenario::new(RewardTable::new(vec![vec![vec![2.0]]]).unwrap(), 0.1).unwrap();
        let sp = stationary_point(&s, &MeanFieldPoint::uniform(&s)).unwrap();
        assert_eq!(sp.point.w, vec![1.0]);
        assert_eq!(sp.point.v, vec![vec![vec![1.0]]]);
        assert_eq!(sp.residual, 0.0);
    }

    #[test]
    fn flow_from_uniform_enters_the_optimal_neighbourhood() {
        let s = scenario(0.01);
        let traj = integrate(
            &s,
            &MeanFieldPoint::uniform(&s),
            0.05,
            100.0,
            FieldKind::Literal,
        )
        .unwrap();
        let entry = traj
            .iter()
            .position(|x| x.distance_to_optimal_set(&s) < 0.1)
            .expect("never entered");
        assert!(traj[entry..]
            .iter()
            .all(|x| x.distance_to_optimal_set(&s) < 0.1));
    }

    #[test]
    fn lyapunov_vanishes_on_the_optimal_set() {
        let s = scenario(0.0);
        assert_abs_diff_eq!(lyapunov(&s, &s.pure_best()), 0.0, epsilon = 1e-15);
        assert!(lyapunov(&s, &MeanFieldPoint::uniform(&s)) > 0.0);
    }

    #[test]
    fn csv_has_one_column_per_coordinate() {
        let s = scenario(0.1);
        let traj = integrate(
            &s,
            &MeanFieldPoint::uniform(&s),
            0.1,
            0.3,
            FieldKind::Literal,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &traj, 0.1).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0].split(',').count(), 1 + 2 + 9);
        assert!(lines[0].starts_with("t,w0,w1,v0_0_0"));
    }
}
