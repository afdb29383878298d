use proptest::prelude::*;

use qsd::output::{parse_table, render_table, Cell, OutputFormat, Table};
use qsd::{
    beta_scale, eval_expr, expectation, fock_annihilation, fock_creation, fock_number,
    integrate_classical, integrate_master, pure_density, run_ensemble_with, run_trajectory, step,
    Execution, KaosParams, OpenSystemModel, OperatorMatrix, PulseSchedule, StateVector,
    TrajectoryConfig, C64,
};

fn state(dim: usize) -> impl Strategy<Value = StateVector> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim)
        .prop_filter("nonzero", |v| {
            v.iter().any(|(r, i)| r.abs() + i.abs() > 1e-3)
        })
        .prop_map(|v| {
            let amp: Vec<C64> = v.into_iter().map(|(r, i)| C64::new(r, i)).collect();
            let norm = amp.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            let amp: Vec<C64> = amp.into_iter().map(|c| c / norm).collect();
            StateVector::from_amplitudes(&amp).unwrap()
        })
}

fn sized_state() -> impl Strategy<Value = (usize, StateVector)> {
    (2usize..12).prop_flat_map(|d| state(d).prop_map(move |s| (d, s)))
}

const TERMS: [&str; 8] = [
    "a",
    "adag",
    "n",
    "q",
    "p",
    "id",
    "adag*a*a",
    "2i*(adag - a)",
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ladder_operators_are_adjoint(dim in 2usize..40) {
        let a = fock_annihilation(dim).unwrap();
        let ad = fock_creation(dim).unwrap();
        prop_assert_eq!(a.matrix().adjoint(), ad.matrix().clone());
        prop_assert!(fock_number(dim).unwrap().is_hermitian());
    }

    #[test]
    fn commutator_is_identity_below_the_top_level(dim in 2usize..40) {
        let a = fock_annihilation(dim).unwrap();
        let ad = fock_creation(dim).unwrap();
        let c = a.commutator(&ad).unwrap();
        for i in 0..dim - 1 {
            for j in 0..dim - 1 {
                let expected = if i == j { 1.0 } else { 0.0 };
                prop_assert!((c.matrix()[(i, j)] - C64::new(expected, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn expectation_is_linear_and_conjugate_symmetric(
        (dim, psi) in sized_state(),
        i in 0usize..TERMS.len(),
        j in 0usize..TERMS.len(),
        cr in -2.0f64..2.0,
        ci in -2.0f64..2.0,
    ) {
        let a = eval_expr(TERMS[i], dim).unwrap();
        let b = eval_expr(TERMS[j], dim).unwrap();
        let c = C64::new(cr, ci);
        let combo = a.scale(c).add(&b).unwrap();
        let lhs = expectation(&combo, &psi).unwrap();
        let rhs = c * expectation(&a, &psi).unwrap() + expectation(&b, &psi).unwrap();
        prop_assert!((lhs - rhs).norm() < 1e-10);
        let adj = expectation(&a.adjoint(), &psi).unwrap();
        prop_assert!((adj - expectation(&a, &psi).unwrap().conj()).norm() < 1e-12);
    }

    #[test]
    fn expression_sum_is_sum_of_terms(dim in 2usize..16, i in 0usize..TERMS.len(), j in 0usize..TERMS.len()) {
        let sum = eval_expr(&format!("({}) + ({})", TERMS[i], TERMS[j]), dim).unwrap();
        let parts = eval_expr(TERMS[i], dim).unwrap().add(&eval_expr(TERMS[j], dim).unwrap()).unwrap();
        prop_assert_eq!(sum.matrix().clone(), parts.matrix().clone());
    }

    #[test]
    fn step_returns_a_unit_vector(
        (dim, psi) in sized_state(),
        dt in 1e-4f64..1e-2,
        noise in prop::collection::vec((-0.1f64..0.1, -0.1f64..0.1), 2),
    ) {
        let model = OpenSystemModel::new(
            eval_expr("0.5*n + 0.2*(a + adag)", dim).unwrap(),
            None,
            vec![eval_expr("a", dim).unwrap(), eval_expr("0.5*n", dim).unwrap()],
        ).unwrap();
        let incs: Vec<C64> = noise.iter().map(|&(r, i)| C64::new(r, i)).collect();
        let out = step(&psi, &model, 0.0, dt, &incs).unwrap();
        prop_assert!((out.state.norm() - 1.0).abs() < 1e-12);
        prop_assert!(out.norm_drift >= 0.0);
    }

    #[test]
    fn eigenstates_of_hermitian_lindblads_are_fixed(dim in 2usize..10, k in 0usize..10, seed in any::<u64>()) {
        let k = k % dim;
        let model = OpenSystemModel::new(
            OperatorMatrix::zeros(dim).unwrap(),
            None,
            vec![eval_expr("1.5*n", dim).unwrap()],
        ).unwrap();
        let psi = StateVector::basis(dim, k).unwrap();
        let cfg = TrajectoryConfig::new(1e-3, 0.2, 50, seed).with_leak_limit(None);
        let run = run_trajectory(&model, &psi, &cfg).unwrap();
        let overlap = run.final_state.inner(&psi).unwrap().norm();
        prop_assert!((overlap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_records(seed in any::<u64>()) {
        let dim = 6;
        let model = OpenSystemModel::new(
            eval_expr("n", dim).unwrap(),
            None,
            vec![eval_expr("0.7*a", dim).unwrap()],
        ).unwrap();
        let psi = StateVector::basis(dim, 3).unwrap();
        let cfg = TrajectoryConfig::new(1e-3, 0.1, 10, seed).with_leak_limit(None);
        let a = run_trajectory(&model, &psi, &cfg).unwrap();
        let b = run_trajectory(&model, &psi, &cfg).unwrap();
        prop_assert_eq!(a.records, b.records);
    }

    #[test]
    fn pulse_is_off_for_the_first_part_of_each_period(
        tau1 in 0.1f64..10.0,
        tau2 in 0.1f64..10.0,
        f0 in -5.0f64..5.0,
        k in 0u32..50,
        frac in 0.0f64..1.0,
    ) {
        let s = PulseSchedule::new(tau1, tau2, f0).unwrap();
        let tau = tau1 + tau2;
        let t = k as f64 * tau + frac * tau;
        let phase = t.rem_euclid(tau);
        // Skip points within rounding of an edge.
        prop_assume!((phase - tau1).abs() > 1e-9 && phase > 1e-9 && tau - phase > 1e-9);
        let expected = if phase < tau1 { 0.0 } else { f0 };
        prop_assert_eq!(s.value(t), expected);
    }

    #[test]
    fn classical_equation_is_scale_invariant(
        beta in 0.5f64..20.0,
        re in -5.0f64..5.0,
        im in -5.0f64..5.0,
    ) {
        let base = KaosParams::standard();
        let dt = 0.01;
        let t_final = 3.0 * base.period();
        let xi0 = C64::new(re, im);
        let reference = integrate_classical(xi0, &base, dt, t_final).unwrap();
        let scaled = beta_scale(&base, beta).unwrap();
        let traj = integrate_classical(xi0 / beta, &scaled, dt / beta, t_final / beta).unwrap();
        prop_assert_eq!(traj.len(), reference.len());
        for ((_, a), (_, b)) in reference.iter().zip(&traj) {
            prop_assert!((a - b * beta).norm() <= 1e-6);
        }
    }

    #[test]
    fn table_round_trip_is_exact(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..20)) {
        let table = Table {
            columns: vec!["t".into(), "x".into()],
            rows: values.iter().enumerate().map(|(i, &v)| vec![Cell::Float(i as f64), Cell::Float(v)]).collect(),
        };
        for format in [OutputFormat::Csv, OutputFormat::JsonLines] {
            let text = render_table(&table, format, None).unwrap();
            let back = parse_table(&text, format).unwrap();
            let col = back.column("x").unwrap();
            for (a, b) in values.iter().zip(&col) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn master_equation_keeps_unit_trace(dim in 2usize..8, rate in 0.1f64..2.0, k in 0usize..8) {
        let model = OpenSystemModel::new(
            eval_expr("n + 0.3*(a + adag)", dim).unwrap(),
            None,
            vec![eval_expr(&format!("{rate}*a"), dim).unwrap(), eval_expr("0.5*n", dim).unwrap()],
        ).unwrap();
        let rho0 = pure_density(&StateVector::basis(dim, k % dim).unwrap());
        let out = integrate_master(&model, &rho0, 1e-3, 1.0, 100).unwrap();
        for (_, rho) in &out {
            prop_assert!((rho.trace() - C64::new(1.0, 0.0)).norm() <= 1e-8);
        }
    }

    #[test]
    fn scheduling_does_not_change_ensembles(seed in any::<u64>(), m in 1usize..40) {
        let dim = 5;
        let model = OpenSystemModel::new(
            OperatorMatrix::zeros(dim).unwrap(),
            None,
            vec![eval_expr("2*n", dim).unwrap(), eval_expr("0.3*a", dim).unwrap()],
        ).unwrap();
        let psi = StateVector::superposition(dim, &[1, 4]).unwrap();
        let cfg = TrajectoryConfig::new(1e-3, 0.05, 25, seed).with_leak_limit(None);
        let seq = run_ensemble_with(&model, &psi, &cfg, m, Execution::Sequential).unwrap();
        let par = run_ensemble_with(&model, &psi, &cfg, m, Execution::Parallel).unwrap();
        for (a, b) in seq.mean_density.iter().zip(&par.mean_density) {
            prop_assert_eq!(a.matrix(), b.matrix());
        }
    }
}
