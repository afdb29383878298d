//! Deterministic Lindblad master equation, used as ground truth for QSD
//! ensembles:
//!
//! ```text
//! ρ̇ = −i[H, ρ] + Σ_j (L_j ρ L_j† − ½ L_j†L_j ρ − ½ ρ L_j†L_j)
//! ```
//!
//! Integrated with classical RK4; steps straddling a pulse edge are split so
//! the drive is constant on each substep. Positivity is monitored at the
//! record times, never projected.

use nalgebra::DMatrix;

use crate::error::{QsdError, Result};
use crate::integrator::OpenSystemModel;
use crate::linalg::{hermitian_eigenvalues, DensityMatrix, DensityTolerance, C64, I, ONE, ZERO};

/// ρ̇ for the model with the Hamiltonian evaluated at `t`.
pub fn lindblad_rhs(rho: &DensityMatrix, model: &OpenSystemModel, t: f64) -> Result<DMatrix<C64>> {
    if rho.dim() != model.dim() {
        return Err(QsdError::DimensionMismatch {
            expected: model.dim(),
            found: rho.dim(),
        });
    }
    let plan = MasterPlan::new(model);
    let mut work = MasterWork::new(model.dim());
    let mut out = DMatrix::from_element(model.dim(), model.dim(), ZERO);
    plan.rhs(rho.matrix(), model.force_at(t), &mut work, &mut out);
    Ok(out)
}

struct MasterPlan {
    /// (force, −iH(force) − ½ΣL†L)
    generators: Vec<(f64, DMatrix<C64>)>,
    lindblads: Vec<(DMatrix<C64>, DMatrix<C64>)>,
}

struct MasterWork {
    b: DMatrix<C64>,
    tmp: DMatrix<C64>,
}

impl MasterWork {
    fn new(dim: usize) -> Self {
        Self {
            b: DMatrix::from_element(dim, dim, ZERO),
            tmp: DMatrix::from_element(dim, dim, ZERO),
        }
    }
}

impl MasterPlan {
    fn new(model: &OpenSystemModel) -> Self {
        let dim = model.dim();
        let mut damping = DMatrix::from_element(dim, dim, ZERO);
        let mut lindblads = Vec::new();
        for l in model.lindblads() {
            let ldag = l.matrix().adjoint();
            damping -= &ldag * l.matrix() * C64::from(0.5);
            lindblads.push((l.matrix().clone(), ldag));
        }
        let mut forces = vec![0.0];
        if let Some(s) = model.pulse_schedule() {
            if s.f0 != 0.0 {
                forces.push(s.f0);
            }
        }
        let generators = forces
            .into_iter()
            .map(|force| {
                let h = model.hamiltonian_at_force(force);
                (force, h.matrix() * (-I) + &damping)
            })
            .collect();
        Self {
            generators,
            lindblads,
        }
    }

    fn generator(&self, force: f64) -> &DMatrix<C64> {
        &self
            .generators
            .iter()
            .find(|(f, _)| *f == force)
            .expect("force values come from the pulse schedule")
            .1
    }

    /// out = B + B† with B = Kρ + ½ Σ LρL†, which is hermitian by construction.
    fn rhs(&self, rho: &DMatrix<C64>, force: f64, work: &mut MasterWork, out: &mut DMatrix<C64>) {
        let k = self.generator(force);
        work.b.gemm(ONE, k, rho, ZERO);
        for (l, ldag) in &self.lindblads {
            work.tmp.gemm(ONE, l, rho, ZERO);
            work.b.gemm(C64::from(0.5), &work.tmp, ldag, ONE);
        }
        let n = rho.nrows();
        for c in 0..n {
            for r in 0..n {
                out[(r, c)] = work.b[(r, c)] + work.b[(c, r)].conj();
            }
        }
    }
}

/// Integrates from `rho0` and returns `(t, ρ(t))` every `record_stride` steps
/// (including t = 0).
pub fn integrate_master(
    model: &OpenSystemModel,
    rho0: &DensityMatrix,
    dt: f64,
    t_final: f64,
    record_stride: usize,
) -> Result<Vec<(f64, DensityMatrix)>> {
    if rho0.dim() != model.dim() {
        return Err(QsdError::DimensionMismatch {
            expected: model.dim(),
            found: rho0.dim(),
        });
    }
    if let Some(problem) = rho0.violation(DensityTolerance::default()) {
        return Err(QsdError::InvalidParameter(format!(
            "initial density matrix: {problem}"
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(QsdError::InvalidStep(dt));
    }
    if !(t_final >= dt) || record_stride == 0 {
        return Err(QsdError::InvalidParameter(
            "t_final must be at least dt and record_stride positive".into(),
        ));
    }
    let steps = (t_final / dt).round();
    if (steps * dt - t_final).abs() > 1e-6 * dt {
        return Err(QsdError::InvalidParameter(format!(
            "t_final ({t_final}) is not a multiple of dt ({dt})"
        )));
    }
    let steps = steps as usize;

    let dim = model.dim();
    let plan = MasterPlan::new(model);
    let mut work = MasterWork::new(dim);
    let zeros = || DMatrix::from_element(dim, dim, ZERO);
    let (mut k1, mut k2, mut k3, mut k4, mut stage) = (zeros(), zeros(), zeros(), zeros(), zeros());
    let mut rho = rho0.matrix().clone();
    let mut out = vec![(0.0, rho0.clone())];
    let schedule = model.pulse_schedule().copied();

    for n in 0..steps {
        let t0 = n as f64 * dt;
        let t1 = (n + 1) as f64 * dt;
        let edges = schedule.map_or_else(Vec::new, |s| s.edges_within(t0, t1, 1e-9 * dt));
        let mut a = t0;
        for b in edges.into_iter().chain(std::iter::once(t1)) {
            let h = b - a;
            let force = model.force_at(a + 0.5 * h);
            let hc = C64::from(h);
            plan.rhs(&rho, force, &mut work, &mut k1);
            stage.copy_from(&rho);
            axpy(&mut stage, hc * 0.5, &k1);
            plan.rhs(&stage, force, &mut work, &mut k2);
            stage.copy_from(&rho);
            axpy(&mut stage, hc * 0.5, &k2);
            plan.rhs(&stage, force, &mut work, &mut k3);
            stage.copy_from(&rho);
            axpy(&mut stage, hc, &k3);
            plan.rhs(&stage, force, &mut work, &mut k4);
            k1 += &k4;
            k2 += &k3;
            axpy(&mut rho, hc / 6.0, &k1);
            axpy(&mut rho, hc / 3.0, &k2);
            a = b;
        }
        if !rho.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            return Err(QsdError::StepTooLarge {
                t: t1,
                detail: "density matrix diverged".into(),
            });
        }
        if (n + 1) % record_stride == 0 {
            let snapshot = DensityMatrix::from_matrix_unchecked(rho.clone())?;
            if let Some(problem) = snapshot.violation(DensityTolerance::default()) {
                return Err(QsdError::StepTooLarge {
                    t: t1,
                    detail: problem,
                });
            }
            out.push((t1, snapshot));
        }
    }
    Ok(out)
}

fn axpy(y: &mut DMatrix<C64>, alpha: C64, x: &DMatrix<C64>) {
    y.zip_apply(x, |yi, xi| *yi += alpha * xi);
}

/// ½ Σ |λ_i| over the eigenvalues of ρ1 − ρ2.
pub fn trace_distance(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    if rho1.dim() != rho2.dim() {
        return Err(QsdError::DimensionMismatch {
            expected: rho1.dim(),
            found: rho2.dim(),
        });
    }
    let diff = rho1.matrix() - rho2.matrix();
    Ok(0.5
        * hermitian_eigenvalues(&diff)
            .iter()
            .map(|v| v.abs())
            .sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::eval_expr;
    use crate::linalg::{
        fock_annihilation, fock_number, pure_density, OperatorMatrix, StateVector,
    };

    fn basis_rho(dim: usize, k: usize) -> DensityMatrix {
        pure_density(&StateVector::basis(dim, k).unwrap())
    }

    #[test]
    fn rhs_examples() {
        let dim = 4;
        let free = OpenSystemModel::new(OperatorMatrix::zeros(dim).unwrap(), None, vec![]).unwrap();
        let rho = pure_density(&StateVector::coherent(dim, C64::new(0.4, 0.2)).unwrap());
        assert_eq!(lindblad_rhs(&rho, &free, 0.0).unwrap().norm(), 0.0);

        let damped = OpenSystemModel::new(
            OperatorMatrix::zeros(dim).unwrap(),
            None,
            vec![fock_annihilation(dim).unwrap()],
        )
        .unwrap();
        assert_eq!(
            lindblad_rhs(&basis_rho(dim, 0), &damped, 0.0)
                .unwrap()
                .norm(),
            0.0
        );

        // Hand evaluation for ρ = |1⟩⟨1|: aρa† = |0⟩⟨0|, a†aρ = ρa†a = |1⟩⟨1|.
        let d = lindblad_rhs(&basis_rho(dim, 1), &damped, 0.0).unwrap();
        let mut expected = DMatrix::from_element(dim, dim, ZERO);
        expected[(0, 0)] = ONE;
        expected[(1, 1)] = -ONE;
        assert!((d - expected).norm() < 1e-15);
    }

    #[test]
    fn rhs_is_traceless_and_hermitian() {
        let dim = 7;
        let model = OpenSystemModel::new(
            eval_expr("0.3*adag*adag*a*a + 2i*(adag - a)", dim).unwrap(),
            None,
            vec![
                eval_expr("0.5*a", dim).unwrap(),
                eval_expr("q*p", dim).unwrap(),
            ],
        )
        .unwrap();
        let psi = StateVector::coherent(dim, C64::new(0.8, -0.3)).unwrap();
        let d = lindblad_rhs(&pure_density(&psi), &model, 0.0).unwrap();
        assert!(d.trace().norm() < 1e-12);
        assert!(crate::linalg::hermiticity_defect(&d) < 1e-12);
    }

    #[test]
    fn free_evolution_is_static() {
        let dim = 3;
        let free = OpenSystemModel::new(OperatorMatrix::zeros(dim).unwrap(), None, vec![]).unwrap();
        let rho0 = pure_density(&StateVector::from_amplitudes(&[ONE, I, ONE]).unwrap());
        let out = integrate_master(&free, &rho0, 0.1, 1.0, 5).unwrap();
        assert_eq!(out.len(), 3);
        for (_, rho) in &out {
            assert_eq!(rho, &rho0);
        }
    }

    #[test]
    fn pure_damping_decays_exponentially() {
        let dim = 6;
        let model = OpenSystemModel::new(
            OperatorMatrix::zeros(dim).unwrap(),
            None,
            vec![fock_annihilation(dim).unwrap()],
        )
        .unwrap();
        let n = fock_number(dim).unwrap();
        let out = integrate_master(&model, &basis_rho(dim, 5), 0.01, 2.0, 50).unwrap();
        for (t, rho) in &out {
            let mean = rho.expectation(&n).unwrap().re;
            assert!((mean - 5.0 * (-t).exp()).abs() < 1e-8, "t={t}");
            assert!((rho.trace() - ONE).norm() < 1e-12);
        }
    }

    #[test]
    fn oversized_step_is_reported() {
        let dim = 6;
        let model = OpenSystemModel::new(
            OperatorMatrix::zeros(dim).unwrap(),
            None,
            vec![eval_expr("6*n", dim).unwrap()],
        )
        .unwrap();
        let rho0 = pure_density(&StateVector::superposition(dim, &[0, 5]).unwrap());
        let err = integrate_master(&model, &rho0, 0.5, 5.0, 1).unwrap_err();
        assert!(matches!(err, QsdError::StepTooLarge { .. }), "{err}");
    }

    #[test]
    fn trace_distance_examples() {
        let dim = 3;
        let zero = basis_rho(dim, 0);
        let one = basis_rho(dim, 1);
        assert_eq!(trace_distance(&zero, &zero).unwrap(), 0.0);
        assert!((trace_distance(&zero, &one).unwrap() - 1.0).abs() < 1e-14);
        let mixed = DensityMatrix::new((zero.matrix() + one.matrix()) * C64::from(0.5)).unwrap();
        assert!((trace_distance(&zero, &mixed).unwrap() - 0.5).abs() < 1e-14);
        assert!(trace_distance(&zero, &basis_rho(4, 0)).is_err());
    }
}
