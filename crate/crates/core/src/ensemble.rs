//! Monte Carlo ensembles of QSD trajectories.
//!
//! Trajectory `k` is always driven by `fork(seed, k)`, and every average is
//! reduced over a fixed pairwise tree in trajectory-index order, so results
//! are bitwise identical for any worker count or scheduling.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{QsdError, Result};
use crate::integrator::{run_with_plan, OpenSystemModel, StepPlan, Trajectory, TrajectoryConfig};
use crate::linalg::{
    projector_fidelity, DensityMatrix, OperatorMatrix, StateVector, C64, ONE, ZERO,
};
use crate::noise::NoiseStream;
use crate::oracle::trace_distance;

/// How independent trajectories are scheduled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Rayon work-stealing over trajectories; sequential when the `parallel`
    /// feature is off.
    #[default]
    Parallel,
}

/// Leaf size of the pairwise reduction tree.
const PAIRWISE_LEAF: usize = 8;

/// Trajectories run and reduced together before their snapshots are released.
pub const CHUNK: usize = 64;

#[derive(Clone, Debug)]
pub struct ObservableSeries {
    pub name: String,
    pub mean: Vec<C64>,
    /// Standard error of the mean; `None` when only one trajectory exists.
    pub std_error: Vec<Option<f64>>,
}

#[derive(Clone, Debug)]
pub struct EnsembleResult {
    pub times: Vec<f64>,
    pub mean_density: Vec<DensityMatrix>,
    pub mean_observables: Vec<ObservableSeries>,
    pub trajectory_count: usize,
    pub seed: u64,
    /// Every trajectory, in index order, with state snapshots at `times`.
    pub trajectories: Vec<Trajectory>,
}

impl EnsembleResult {
    pub fn final_states(&self) -> Vec<StateVector> {
        self.trajectories
            .iter()
            .map(|t| t.final_state.clone())
            .collect()
    }

    /// Largest trace distance to a reference series sampled at the same times.
    pub fn max_trace_distance(&self, reference: &[(f64, DensityMatrix)]) -> Result<f64> {
        if reference.len() != self.times.len() {
            return Err(QsdError::InvalidParameter(format!(
                "reference has {} samples, ensemble has {}",
                reference.len(),
                self.times.len()
            )));
        }
        let mut worst = 0.0f64;
        for ((t, rho), (t_ref, rho_ref)) in self.times.iter().zip(&self.mean_density).zip(reference)
        {
            if (t - t_ref).abs() > 1e-9 * t.abs().max(1.0) {
                return Err(QsdError::InvalidParameter(format!(
                    "time grids differ: {t} vs {t_ref}"
                )));
            }
            worst = worst.max(trace_distance(rho, rho_ref)?);
        }
        Ok(worst)
    }
}

/// Scheduling and retention choices for an ensemble run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnsembleOptions {
    pub execution: Execution,
    /// Keep every trajectory's state at every record time. Needed by
    /// [`observable_series`]; large runs should leave it off.
    pub keep_snapshots: bool,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        Self {
            execution: Execution::default(),
            keep_snapshots: true,
        }
    }
}

/// Runs `trajectory_count` trajectories with the default execution mode.
pub fn run_ensemble(
    model: &OpenSystemModel,
    psi0: &StateVector,
    cfg: &TrajectoryConfig,
    trajectory_count: usize,
) -> Result<EnsembleResult> {
    run_ensemble_opts(
        model,
        psi0,
        cfg,
        trajectory_count,
        EnsembleOptions::default(),
    )
}

pub fn run_ensemble_with(
    model: &OpenSystemModel,
    psi0: &StateVector,
    cfg: &TrajectoryConfig,
    trajectory_count: usize,
    execution: Execution,
) -> Result<EnsembleResult> {
    let opts = EnsembleOptions {
        execution,
        ..EnsembleOptions::default()
    };
    run_ensemble_opts(model, psi0, cfg, trajectory_count, opts)
}

/// Trajectories are run and reduced in blocks of [`CHUNK`]: each block's
/// outer products are summed over a pairwise tree, and block sums are added
/// in block order. The association order depends only on the trajectory
/// count.
pub fn run_ensemble_opts(
    model: &OpenSystemModel,
    psi0: &StateVector,
    cfg: &TrajectoryConfig,
    trajectory_count: usize,
    opts: EnsembleOptions,
) -> Result<EnsembleResult> {
    if trajectory_count == 0 {
        return Err(QsdError::InvalidParameter(
            "ensemble needs at least one trajectory".into(),
        ));
    }
    let execution = opts.execution;
    let plan = StepPlan::new(model, cfg.scheme, cfg.dt)?;
    let root = NoiseStream::new(cfg.seed, model.lindblads().len());
    let run_one = |k: usize| {
        run_with_plan(&plan, psi0, cfg, root.fork(k as u64), true).map_err(|e| {
            QsdError::Trajectory {
                index: k,
                seed: cfg.seed,
                source: Box::new(e),
            }
        })
    };

    let mut trajectories: Vec<Trajectory> = Vec::with_capacity(trajectory_count);
    let mut totals: Vec<DMatrix<C64>> = Vec::new();
    for start in (0..trajectory_count).step_by(CHUNK) {
        let len = CHUNK.min(trajectory_count - start);
        let mut chunk = Vec::with_capacity(len);
        for outcome in map_indices(len, execution, |i| run_one(start + i)) {
            chunk.push(outcome?);
        }
        let records = chunk[0].snapshots.len();
        let sums = map_indices(records, execution, |ti| {
            let states: Vec<&StateVector> = chunk.iter().map(|t| &t.snapshots[ti]).collect();
            pairwise_outer_sum(&states, execution)
        });
        if totals.is_empty() {
            totals = sums;
        } else {
            for (total, sum) in totals.iter_mut().zip(sums) {
                *total += sum;
            }
        }
        if !opts.keep_snapshots {
            for t in &mut chunk {
                t.snapshots = Vec::new();
            }
        }
        trajectories.extend(chunk);
    }

    let times: Vec<f64> = trajectories[0].records.iter().map(|r| r.t).collect();
    let scale = C64::from(1.0 / trajectory_count as f64);
    let mean_density = totals
        .into_iter()
        .map(|sum| {
            DensityMatrix::from_matrix_unchecked(sum * scale)
                .expect("square matrix of valid dimension")
        })
        .collect();

    let mut result = EnsembleResult {
        times,
        mean_density,
        mean_observables: Vec::new(),
        trajectory_count,
        seed: cfg.seed,
        trajectories,
    };
    for (j, obs) in cfg.observables.iter().enumerate() {
        let mut mean = Vec::with_capacity(result.times.len());
        let mut std_error = Vec::with_capacity(result.times.len());
        for (ti, rho) in result.mean_density.iter().enumerate() {
            let samples: Vec<C64> = result
                .trajectories
                .iter()
                .map(|t| t.records[ti].expectations[j])
                .collect();
            mean.push(rho.expectation(&obs.op)?);
            std_error.push(standard_error(&samples));
        }
        result.mean_observables.push(ObservableSeries {
            name: obs.name.clone(),
            mean,
            std_error,
        });
    }
    Ok(result)
}

fn map_indices<T, F>(count: usize, execution: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..count).into_par_iter().map(f).collect()
        }
        _ => (0..count).map(f).collect(),
    }
}

fn join<A, B, RA, RB>(execution: Execution, a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => rayon::join(a, b),
        _ => (a(), b()),
    }
}

/// Σ_k |ψ_k⟩⟨ψ_k| summed over a tree whose shape depends only on the length.
fn pairwise_outer_sum(states: &[&StateVector], execution: Execution) -> DMatrix<C64> {
    if states.len() <= PAIRWISE_LEAF {
        let dim = states[0].dim();
        let mut acc = DMatrix::from_element(dim, dim, ZERO);
        for psi in states {
            acc.gerc(ONE, psi.amplitudes(), psi.amplitudes(), ONE);
        }
        return acc;
    }
    let (left, right) = states.split_at(states.len() / 2);
    let (a, b) = join(
        execution,
        || pairwise_outer_sum(left, execution),
        || pairwise_outer_sum(right, execution),
    );
    a + b
}

fn pairwise_sum(values: &[C64]) -> C64 {
    if values.len() <= PAIRWISE_LEAF {
        return values.iter().fold(ZERO, |acc, v| acc + v);
    }
    let (left, right) = values.split_at(values.len() / 2);
    pairwise_sum(left) + pairwise_sum(right)
}

fn standard_error(samples: &[C64]) -> Option<f64> {
    let m = samples.len();
    if m < 2 {
        return None;
    }
    let sample_mean = pairwise_sum(samples) / m as f64;
    let spread: Vec<C64> = samples
        .iter()
        .map(|x| C64::from((x - sample_mean).norm_sqr()))
        .collect();
    let var = pairwise_sum(&spread).re / (m - 1) as f64;
    Some((var / m as f64).sqrt())
}

/// tr(ρ̄(t)·op) per record time with the standard error across trajectories.
/// Requires a result that kept its snapshots.
pub fn observable_series(result: &EnsembleResult, op: &OperatorMatrix) -> Result<ObservableSeries> {
    let mut mean = Vec::with_capacity(result.times.len());
    let mut std_error = Vec::with_capacity(result.times.len());
    for (ti, rho) in result.mean_density.iter().enumerate() {
        mean.push(rho.expectation(op)?);
        let samples = result
            .trajectories
            .iter()
            .map(|traj| match traj.snapshots.get(ti) {
                Some(psi) => crate::linalg::expectation(op, psi),
                None => Err(QsdError::InvalidParameter(
                    "ensemble was run without snapshots".into(),
                )),
            })
            .collect::<Result<Vec<_>>>()?;
        std_error.push(standard_error(&samples));
    }
    Ok(ObservableSeries {
        name: String::new(),
        mean,
        std_error,
    })
}

/// Frequencies with which trajectories settled onto basis states.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BornTally {
    pub counts: BTreeMap<usize, usize>,
    pub unconverged: usize,
    pub total: usize,
}

impl BornTally {
    pub fn frequency(&self, label: usize) -> f64 {
        self.counts.get(&label).copied().unwrap_or(0) as f64 / self.total as f64
    }

    pub fn unconverged_fraction(&self) -> f64 {
        self.unconverged as f64 / self.total as f64
    }
}

/// Assigns each state to the basis label whose weight exceeds `threshold`.
pub fn born_tally(final_states: &[StateVector], classify_threshold: f64) -> Result<BornTally> {
    if !(classify_threshold > 0.5 && classify_threshold <= 1.0) {
        return Err(QsdError::InvalidParameter(format!(
            "classification threshold {classify_threshold} must lie in (0.5, 1]"
        )));
    }
    let mut counts = BTreeMap::new();
    let mut unconverged = 0;
    for psi in final_states {
        let mut label = None;
        for k in 0..psi.dim() {
            if projector_fidelity(psi, k)? > classify_threshold {
                label = Some(k);
                break;
            }
        }
        match label {
            Some(k) => *counts.entry(k).or_insert(0) += 1,
            None => unconverged += 1,
        }
    }
    Ok(BornTally {
        counts,
        unconverged,
        total: final_states.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::Observable;
    use crate::linalg::{fock_annihilation, fock_number, pure_density};

    fn damped(dim: usize) -> OpenSystemModel {
        OpenSystemModel::new(
            crate::expr::eval_expr("0.5*n", dim).unwrap(),
            None,
            vec![fock_annihilation(dim).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn single_trajectory_is_its_own_mean() {
        let dim = 6;
        let model = damped(dim);
        let psi0 = StateVector::superposition(dim, &[1, 2]).unwrap();
        let cfg = TrajectoryConfig::new(0.01, 0.5, 10, 3).with_leak_limit(None);
        let res = run_ensemble(&model, &psi0, &cfg, 1).unwrap();
        for (rho, psi) in res.mean_density.iter().zip(&res.trajectories[0].snapshots) {
            assert!((rho.matrix() - pure_density(psi).matrix()).camax() < 1e-15);
            let ev = rho.eigenvalues();
            assert!(ev[..dim - 1].iter().all(|v| v.abs() < 1e-12));
        }
        let series = observable_series(&res, &fock_number(dim).unwrap()).unwrap();
        assert!(series.std_error.iter().all(Option::is_none));
    }

    #[test]
    fn free_dynamics_keep_the_initial_density() {
        let dim = 10;
        let model =
            OpenSystemModel::new(OperatorMatrix::zeros(dim).unwrap(), None, vec![]).unwrap();
        let psi0 = StateVector::superposition(dim, &[0, 3]).unwrap();
        let cfg = TrajectoryConfig::new(0.1, 1.0, 2, 0);
        let res = run_ensemble(&model, &psi0, &cfg, 5).unwrap();
        let expected = pure_density(&psi0);
        for rho in &res.mean_density {
            assert!((rho.matrix() - expected.matrix()).camax() < 1e-15);
        }
    }

    #[test]
    fn execution_mode_does_not_change_bits() {
        let dim = 5;
        let model = damped(dim);
        let psi0 = StateVector::basis(dim, 2).unwrap();
        let cfg = TrajectoryConfig::new(0.01, 0.3, 5, 11)
            .with_observables(vec![Observable::new("n", fock_number(dim).unwrap())])
            .with_leak_limit(None);
        let a = run_ensemble_with(&model, &psi0, &cfg, 37, Execution::Sequential).unwrap();
        let b = run_ensemble_with(&model, &psi0, &cfg, 37, Execution::Parallel).unwrap();
        assert_eq!(a.mean_density, b.mean_density);
        assert_eq!(a.mean_observables[0].mean, b.mean_observables[0].mean);
        assert_eq!(
            a.mean_observables[0].std_error,
            b.mean_observables[0].std_error
        );
    }

    #[test]
    fn chunked_reduction_matches_direct_average() {
        let dim = 4;
        let model = damped(dim);
        let psi0 = StateVector::superposition(dim, &[0, 1]).unwrap();
        let cfg = TrajectoryConfig::new(0.02, 0.2, 5, 4)
            .with_observables(vec![Observable::new("n", fock_number(dim).unwrap())])
            .with_leak_limit(None);
        let m = 2 * CHUNK + 5;
        let lean = EnsembleOptions {
            keep_snapshots: false,
            ..EnsembleOptions::default()
        };
        let full = run_ensemble(&model, &psi0, &cfg, m).unwrap();
        let slim = run_ensemble_opts(&model, &psi0, &cfg, m, lean).unwrap();
        assert_eq!(full.mean_density, slim.mean_density);
        assert!(slim.trajectories.iter().all(|t| t.snapshots.is_empty()));
        assert!(observable_series(&slim, &fock_number(dim).unwrap()).is_err());
        let last = full.times.len() - 1;
        let direct: DMatrix<C64> = full
            .trajectories
            .iter()
            .map(|t| pure_density(&t.snapshots[last]).into_matrix())
            .fold(DMatrix::zeros(dim, dim), |acc, m| acc + m)
            / C64::from(m as f64);
        assert!((full.mean_density[last].matrix() - direct).camax() < 1e-14);
        let series = observable_series(&full, &fock_number(dim).unwrap()).unwrap();
        assert_eq!(series.mean, full.mean_observables[0].mean);
        assert_eq!(series.std_error, full.mean_observables[0].std_error);
    }

    #[test]
    fn identity_observable_has_unit_mean() {
        let dim = 5;
        let model = damped(dim);
        let psi0 = StateVector::superposition(dim, &[0, 1, 4]).unwrap();
        let cfg = TrajectoryConfig::new(0.01, 0.5, 5, 1).with_leak_limit(None);
        let res = run_ensemble(&model, &psi0, &cfg, 20).unwrap();
        let series = observable_series(&res, &OperatorMatrix::identity(dim).unwrap()).unwrap();
        for (m, se) in series.mean.iter().zip(&series.std_error) {
            assert!((m - ONE).norm() < 1e-8);
            assert!(se.unwrap() < 1e-8);
        }
    }

    #[test]
    fn trajectory_failure_names_index_and_seed() {
        let dim = 4;
        let model = OpenSystemModel::new(
            crate::expr::eval_expr("2i*(adag - a)", dim).unwrap(),
            None,
            vec![],
        )
        .unwrap();
        let psi0 = StateVector::basis(dim, 0).unwrap();
        let cfg = TrajectoryConfig::new(0.01, 3.0, 10, 77);
        match run_ensemble(&model, &psi0, &cfg, 3).unwrap_err() {
            QsdError::Trajectory {
                index,
                seed,
                source,
            } => {
                assert_eq!((index, seed), (0, 77));
                assert!(matches!(*source, QsdError::TruncationLeak { .. }));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn born_tally_examples() {
        let three = StateVector::basis(6, 3).unwrap();
        let tally = born_tally(&[three], 0.99).unwrap();
        assert_eq!(tally.counts, BTreeMap::from([(3, 1)]));
        assert_eq!(tally.unconverged, 0);

        let mixed = StateVector::superposition(6, &[1, 3]).unwrap();
        let tally = born_tally(&[mixed, StateVector::basis(6, 1).unwrap()], 0.99).unwrap();
        assert_eq!(tally.unconverged, 1);
        assert_eq!(tally.frequency(1), 0.5);
        assert!(born_tally(&[], 0.5).is_err());
        assert!(born_tally(&[], 1.01).is_err());
    }
}
