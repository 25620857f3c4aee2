//! Grid search over noise variance (and further hyperparameters) by running
//! one GCV filter per grid point.
//!
//! A grid point is a named assignment such as {gamma: 30} or
//! {gamma: 0.1, alpha: 0.9}; a factory turns assignments into models once at
//! initialization, after which the bank advances every filter with each new
//! measurement and tracks the point of minimum GCV score. Step-varying
//! context (regressor rows, sampling gaps) lives inside the models
//! themselves, which are queried by step index, so advancing the bank needs
//! only the new measurement.
//!
//! Selection is deterministic: grids are ordered by ascending gamma, then
//! ascending secondary parameter, and ties pick the lowest index. A NaN
//! score never becomes the minimum.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use nalgebra::ComplexField;

use crate::gcv::{gcv_init, gcv_step, GcvState};
use crate::statespace::StateSpaceModel;
use crate::{Error, Result};

/// One grid point: named hyperparameter values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Assignment(BTreeMap<String, f64>);

impl Assignment {
    pub fn new() -> Self {
        Self(BTreeMap::new())
    }

    /// Builder-style insertion.
    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.0.insert(String::from(name), value);
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    /// Like `get`, as an error for factories to propagate.
    pub fn require(&self, name: &'static str) -> Result<f64> {
        self.get(name).ok_or(Error::InvalidArgument {
            arg: name,
            reason: "missing from hyperparameter assignment",
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

/// Geometric sequence from `lo` to `hi` inclusive with `count` points.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo.is_finite() && lo > 0.0) {
        return Err(Error::InvalidArgument {
            arg: "lo",
            reason: "grid endpoints must be positive and finite",
        });
    }
    if !(hi.is_finite() && hi > lo) {
        return Err(Error::InvalidArgument {
            arg: "hi",
            reason: "upper endpoint must be finite and exceed the lower one",
        });
    }
    if count < 2 {
        return Err(Error::InvalidArgument {
            arg: "count",
            reason: "a log grid needs at least two points",
        });
    }
    let step = (ComplexField::ln(hi) - ComplexField::ln(lo)) / (count - 1) as f64;
    let mut grid: Vec<f64> = (0..count)
        .map(|i| ComplexField::exp(ComplexField::ln(lo) + step * i as f64))
        .collect();
    // pin the endpoints exactly
    grid[0] = lo;
    grid[count - 1] = hi;
    Ok(grid)
}

/// Grid over gamma alone, ascending.
pub fn gamma_grid(gammas: &[f64]) -> Vec<Assignment> {
    let mut sorted = gammas.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .into_iter()
        .map(|g| Assignment::new().with("gamma", g))
        .collect()
}

/// Cartesian grid over (gamma, alpha), ascending gamma outer, ascending
/// alpha inner.
pub fn gamma_alpha_grid(gammas: &[f64], alphas: &[f64]) -> Vec<Assignment> {
    let mut gs = gammas.to_vec();
    gs.sort_by(f64::total_cmp);
    let mut als = alphas.to_vec();
    als.sort_by(f64::total_cmp);
    let mut points = Vec::with_capacity(gs.len() * als.len());
    for &g in &gs {
        for &a in &als {
            points.push(Assignment::new().with("gamma", g).with("alpha", a));
        }
    }
    points
}

/// Ordered grid points plus the recipe turning each into a model.
pub struct ParamGrid<M> {
    points: Vec<Assignment>,
    factory: Box<dyn Fn(&Assignment) -> Result<M> + Send + Sync>,
}

impl<M: StateSpaceModel> ParamGrid<M> {
    pub fn new(
        points: Vec<Assignment>,
        factory: impl Fn(&Assignment) -> Result<M> + Send + Sync + 'static,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput {
                what: "grid points",
            });
        }
        Ok(Self {
            points,
            factory: Box::new(factory),
        })
    }

    pub fn points(&self) -> &[Assignment] {
        &self.points
    }
}

/// One GCV filter per grid point plus the running argmin.
pub struct Bank<M> {
    points: Vec<Assignment>,
    models: Vec<M>,
    states: Vec<GcvState>,
    best: usize,
}

/// NaN-proof comparison score: NaN never improves on anything.
fn ordering_score(gcv: f64) -> f64 {
    if gcv.is_nan() {
        f64::INFINITY
    } else {
        gcv
    }
}

fn argmin(states: &[GcvState]) -> usize {
    let mut best = 0;
    for (i, s) in states.iter().enumerate().skip(1) {
        if ordering_score(s.gcv) < ordering_score(states[best].gcv) {
            best = i;
        }
    }
    best
}

impl<M: StateSpaceModel> Bank<M> {
    /// Materializes every grid point into a model and starts its filter on
    /// the first measurement.
    pub fn init(grid: ParamGrid<M>, y1: f64) -> Result<Self> {
        let ParamGrid { points, factory } = grid;
        let models: Vec<M> = points.iter().map(|p| factory(p)).collect::<Result<_>>()?;
        let states: Vec<GcvState> = models.iter().map(|m| gcv_init(m, y1)).collect();
        let best = argmin(&states);
        Ok(Self {
            points,
            models,
            states,
            best,
        })
    }

    /// Advances every filter by one measurement and recomputes the argmin.
    /// On error the bank is left unchanged.
    pub fn step(&mut self, y_next: f64) -> Result<()> {
        let next: Vec<GcvState> = self
            .states
            .iter()
            .zip(&self.models)
            .map(|(s, m)| gcv_step(s, m, y_next))
            .collect::<Result<_>>()?;
        self.states = next;
        self.best = argmin(&self.states);
        Ok(())
    }

    /// Number of measurements absorbed so far.
    pub fn k(&self) -> usize {
        self.states[0].k
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn best_index(&self) -> usize {
        self.best
    }

    /// Winning grid point and its filter state.
    pub fn best(&self) -> (&Assignment, &GcvState) {
        (&self.points[self.best], &self.states[self.best])
    }

    pub fn points(&self) -> &[Assignment] {
        &self.points
    }

    pub fn states(&self) -> &[GcvState] {
        &self.states
    }

    pub fn models(&self) -> &[M] {
        &self.models
    }

    /// Split borrow for drivers that advance the per-point filters
    /// themselves (e.g. in parallel). Call `refresh_best` afterwards; the
    /// caller is responsible for keeping all states on the same step.
    pub fn parts_mut(&mut self) -> (&[M], &mut [GcvState]) {
        (&self.models, &mut self.states)
    }

    /// Recomputes the argmin after external state mutation.
    pub fn refresh_best(&mut self) {
        self.best = argmin(&self.states);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcv::gcv_run;
    use crate::statespace::{stable_spline_gram, TimeInvariantModel};
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    fn scalar_factory(assignment: &Assignment) -> Result<TimeInvariantModel> {
        let gamma = assignment.require("gamma")?;
        TimeInvariantModel::new(
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DVector::from_column_slice(&[1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DVector::from_column_slice(&[0.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            gamma,
        )
    }

    #[test]
    fn log_grid_century_grid() {
        let g = log_grid(0.01, 1e4, 100).unwrap();
        assert_eq!(g.len(), 100);
        assert_eq!(g[0], 0.01);
        assert_eq!(g[99], 1e4);
        let expected_ratio = 1e6f64.powf(1.0 / 99.0);
        for pair in g.windows(2) {
            assert_relative_eq!(pair[1] / pair[0], expected_ratio, max_relative = 1e-12);
        }
    }

    #[test]
    fn log_grid_decades() {
        let g = log_grid(1.0, 100.0, 3).unwrap();
        assert_eq!(g[0], 1.0);
        assert_relative_eq!(g[1], 10.0, max_relative = 1e-14);
        assert_eq!(g[2], 100.0);
    }

    #[test]
    fn log_grid_twenty_points() {
        let g = log_grid(0.01, 1000.0, 20).unwrap();
        assert_eq!(g.len(), 20);
        assert_eq!(g[0], 0.01);
        assert_eq!(g[19], 1000.0);
    }

    #[test]
    fn log_grid_rejects_bad_input() {
        assert!(log_grid(0.0, 1.0, 5).is_err());
        assert!(log_grid(2.0, 1.0, 5).is_err());
        assert!(log_grid(1.0, 2.0, 1).is_err());
    }

    #[test]
    fn grid_ordering_gamma_major() {
        let points = gamma_alpha_grid(&[10.0, 0.1], &[0.9, 0.5]);
        assert_eq!(points.len(), 4);
        assert_eq!(points[0].get("gamma"), Some(0.1));
        assert_eq!(points[0].get("alpha"), Some(0.5));
        assert_eq!(points[1].get("alpha"), Some(0.9));
        assert_eq!(points[3].get("gamma"), Some(10.0));
    }

    #[test]
    fn single_point_bank() {
        let grid = ParamGrid::new(vec![Assignment::new().with("gamma", 1.0)], scalar_factory)
            .unwrap();
        let mut bank = Bank::init(grid, 1.0).unwrap();
        assert_eq!(bank.best_index(), 0);
        bank.step(0.5).unwrap();
        assert_eq!(bank.best_index(), 0);
        assert_eq!(bank.k(), 2);
    }

    #[test]
    fn ties_break_to_lowest_index() {
        let points = vec![
            Assignment::new().with("gamma", 1.0),
            Assignment::new().with("gamma", 1.0),
        ];
        let mut bank = Bank::init(ParamGrid::new(points, scalar_factory).unwrap(), 1.0).unwrap();
        assert_eq!(bank.best_index(), 0);
        bank.step(2.0).unwrap();
        assert_eq!(bank.best_index(), 0);
    }

    #[test]
    fn full_sysid_grid_allocates_140_filters() {
        let gammas = log_grid(0.01, 1000.0, 20).unwrap();
        let alphas = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99];
        let points = gamma_alpha_grid(&gammas, &alphas);
        assert_eq!(points.len(), 140);
        let grid = ParamGrid::new(points, |a| {
            let gamma = a.require("gamma")?;
            let alpha = a.require("alpha")?;
            TimeInvariantModel::new(
                DMatrix::identity(2, 2),
                DVector::from_column_slice(&[1.0, 0.5]),
                DMatrix::zeros(2, 2),
                DVector::zeros(2),
                stable_spline_gram(alpha, 2)?,
                gamma,
            )
        })
        .unwrap();
        let bank = Bank::init(grid, 0.3).unwrap();
        assert_eq!(bank.len(), 140);
        assert_eq!(bank.states().len(), 140);
    }

    #[test]
    fn bank_states_match_standalone_filters() {
        let gammas = log_grid(0.1, 10.0, 5).unwrap();
        let grid = ParamGrid::new(gamma_grid(&gammas), scalar_factory).unwrap();
        let ys: Vec<f64> = (0..10).map(|k| (k as f64 * 0.8).sin()).collect();
        let mut bank = Bank::init(grid, ys[0]).unwrap();
        for &y in &ys[1..] {
            bank.step(y).unwrap();
        }
        for (i, &gamma) in gammas.iter().enumerate() {
            let model = scalar_factory(&Assignment::new().with("gamma", gamma)).unwrap();
            let standalone = gcv_run(&model, &ys).unwrap();
            assert_eq!(&bank.states()[i], standalone.last().unwrap());
        }
    }

    #[test]
    fn permuted_grid_selects_same_value() {
        let gammas = [0.1, 0.5, 2.0, 8.0, 30.0];
        let permuted = [30.0, 0.5, 8.0, 0.1, 2.0];
        let ys: Vec<f64> = (0..25).map(|k| (k as f64 * 0.6).cos() * 2.0).collect();
        let run = |order: &[f64]| {
            let points: Vec<Assignment> = order
                .iter()
                .map(|&g| Assignment::new().with("gamma", g))
                .collect();
            let mut bank =
                Bank::init(ParamGrid::new(points, scalar_factory).unwrap(), ys[0]).unwrap();
            for &y in &ys[1..] {
                bank.step(y).unwrap();
            }
            bank.best().0.get("gamma").unwrap()
        };
        assert_eq!(run(&gammas), run(&permuted));
    }

    #[test]
    fn scaling_scores_keeps_selection() {
        let gammas = log_grid(0.1, 10.0, 7).unwrap();
        let grid = ParamGrid::new(gamma_grid(&gammas), scalar_factory).unwrap();
        let mut bank = Bank::init(grid, 1.3).unwrap();
        for y in [0.4, -0.2, 1.9] {
            bank.step(y).unwrap();
        }
        let before = bank.best_index();
        let (_, states) = bank.parts_mut();
        for s in states.iter_mut() {
            s.gcv *= 42.0;
        }
        bank.refresh_best();
        assert_eq!(bank.best_index(), before);
    }

    #[test]
    fn nan_score_never_wins() {
        let gammas = [0.5, 1.0, 2.0];
        let grid = ParamGrid::new(gamma_grid(&gammas), scalar_factory).unwrap();
        let mut bank = Bank::init(grid, 1.0).unwrap();
        let (_, states) = bank.parts_mut();
        states[0].gcv = f64::NAN;
        states[1].gcv = 5.0;
        states[2].gcv = 7.0;
        bank.refresh_best();
        assert_eq!(bank.best_index(), 1);
    }

    #[test]
    fn empty_grid_rejected() {
        assert!(ParamGrid::new(Vec::new(), scalar_factory).is_err());
    }

    #[test]
    fn factory_error_propagates() {
        let points = vec![Assignment::new().with("alpha", 0.5)];
        let grid = ParamGrid::new(points, scalar_factory).unwrap();
        assert!(Bank::<TimeInvariantModel>::init(grid, 1.0).is_err());
    }
}
