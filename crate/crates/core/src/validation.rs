//! End-to-end checks of the simulator against analytic results, the master
//! equation and the classical limit. Shared by the `validate` command and
//! the acceptance test target.

use std::time::Instant;

use crate::ensemble::{born_tally, run_ensemble_opts, EnsembleOptions, Execution};
use crate::error::Result;
use crate::integrator::{run_trajectory, Trajectory};
use crate::linalg::{pure_density, C64};
use crate::noise::NoiseStream;
use crate::oracle::integrate_master;
use crate::output::{ensemble_records, render_table, series_table, Header, OutputFormat};
use crate::scenarios::{
    beta_scale, integrate_classical, observable_samples, poincare_section, preset, KaosParams,
    PresetOverrides, Scenario, ScenarioName,
};

/// Index of each standard observable in trajectory records.
const OBS_A: usize = 0;
const OBS_N: usize = 1;
const OBS_Q: usize = 2;
/// Variances exist for the hermitian observables n, q, p only.
const VAR_Q: usize = 1;
const VAR_P: usize = 2;

#[derive(Clone, Debug)]
pub struct CriterionReport {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionReport {
    pub fn line(&self) -> String {
        format!(
            "{} [{:>2}] {}: {} ({:.1} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.detail,
            self.seconds
        )
    }
}

pub struct Criterion {
    pub id: u8,
    pub title: &'static str,
    check: fn() -> Result<(bool, String)>,
}

impl Criterion {
    pub fn run(&self) -> CriterionReport {
        let start = Instant::now();
        let (passed, detail) = match (self.check)() {
            Ok(outcome) => outcome,
            Err(e) => (false, format!("error [{}]: {e}", e.category())),
        };
        CriterionReport {
            id: self.id,
            title: self.title,
            passed,
            detail,
            seconds: start.elapsed().as_secs_f64(),
        }
    }
}

pub const CRITERIA: [Criterion; 10] = [
    Criterion {
        id: 1,
        title: "unraveling identity",
        check: unraveling_identity,
    },
    Criterion {
        id: 2,
        title: "born rule",
        check: born_rule,
    },
    Criterion {
        id: 3,
        title: "driven-damped steady state",
        check: driven_damped_steady_state,
    },
    Criterion {
        id: 4,
        title: "mean-energy decay with jumps",
        check: mean_energy_decay,
    },
    Criterion {
        id: 5,
        title: "thermal floor and uncertainty bound",
        check: thermal_floor,
    },
    Criterion {
        id: 6,
        title: "double-well symmetry breaking",
        check: symmetry_breaking,
    },
    Criterion {
        id: 7,
        title: "classical scaling invariance",
        check: classical_scaling,
    },
    Criterion {
        id: 8,
        title: "quantum-classical correspondence",
        check: quantum_classical_correspondence,
    },
    Criterion {
        id: 9,
        title: "noise statistics",
        check: noise_statistics,
    },
    Criterion {
        id: 10,
        title: "determinism",
        check: determinism,
    },
];

pub fn criterion(id: u8) -> Option<&'static Criterion> {
    CRITERIA.iter().find(|c| c.id == id)
}

fn scenario(name: ScenarioName, o: PresetOverrides) -> Result<Scenario> {
    preset(name, &o)
}

fn lean() -> EnsembleOptions {
    EnsembleOptions {
        execution: Execution::Parallel,
        keep_snapshots: false,
    }
}

fn single(s: &Scenario) -> Result<Trajectory> {
    run_trajectory(&s.model, &s.psi0, &s.cfg)
}

// Jump model at dim 6 from |5⟩ against the RK4 master equation.
fn unraveling_identity() -> Result<(bool, String)> {
    const M: usize = 2000;
    const LIMIT: f64 = 0.05;
    let s = scenario(
        ScenarioName::Fig5,
        PresetOverrides {
            dim: Some(6),
            dt: Some(1e-3),
            t_final: Some(1.0),
            record_stride: Some(100),
            seed: Some(20_240_501),
            leak_check: Some(false),
            ..Default::default()
        },
    )?;
    let ens = run_ensemble_opts(&s.model, &s.psi0, &s.cfg, M, lean())?;
    let oracle = integrate_master(&s.model, &pure_density(&s.psi0), 1e-3, 1.0, 100)?;
    let worst = ens.max_trace_distance(&oracle)?;
    Ok((
        worst <= LIMIT,
        format!(
            "max trace distance {worst:.4} over {} times (limit {LIMIT})",
            ens.times.len()
        ),
    ))
}

// Measurement of a†a on an equal superposition of |1⟩,|3⟩,|5⟩,|7⟩,|9⟩.
fn born_rule() -> Result<(bool, String)> {
    const M: usize = 1000;
    const BAND: f64 = 0.038;
    let s = scenario(
        ScenarioName::Fig1,
        PresetOverrides {
            t_final: Some(5.0),
            record_stride: Some(500),
            seed: Some(1_000_003),
            ..Default::default()
        },
    )?;
    let ens = run_ensemble_opts(&s.model, &s.psi0, &s.cfg, M, lean())?;
    let tally = born_tally(&ens.final_states(), 0.99)?;
    let freqs: Vec<f64> = [1, 3, 5, 7, 9]
        .iter()
        .map(|&k| tally.frequency(k))
        .collect();
    let converged = 1.0 - tally.unconverged_fraction();
    let within = freqs.iter().all(|f| (f - 0.2).abs() <= BAND);
    Ok((
        converged >= 0.95 && within,
        format!(
            "converged {:.1}%, frequencies {:?} (band 0.2 ± {BAND})",
            100.0 * converged,
            freqs
                .iter()
                .map(|f| (f * 1000.0).round() / 1000.0)
                .collect::<Vec<_>>()
        ),
    ))
}

// Resonant drive 2i(a† − a) with L = a relaxes to the coherent state α = 4.
fn driven_damped_steady_state() -> Result<(bool, String)> {
    const M: usize = 500;
    const TARGET: f64 = 16.0;
    let t_final = 14.0;
    let s = scenario(
        ScenarioName::Fig2,
        PresetOverrides {
            dim: Some(64),
            dt: Some(1e-3),
            t_final: Some(t_final),
            record_stride: Some(500),
            seed: Some(7_777),
            ..Default::default()
        },
    )?;
    let oracle = integrate_master(&s.model, &pure_density(&s.psi0), 5e-3, t_final, 100)?;
    let n_op = &s.cfg.observables[OBS_N].op;
    let oracle_n = oracle.last().expect("nonempty").1.expectation(n_op)?.re;
    let ens = run_ensemble_opts(&s.model, &s.psi0, &s.cfg, M, lean())?;
    let ens_n = ens.mean_observables[OBS_N]
        .mean
        .last()
        .expect("nonempty")
        .re;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for tr in &ens.trajectories {
        let last = tr.records.last().expect("nonempty");
        for v in [last.variances[VAR_Q], last.variances[VAR_P]] {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let rel = |x: f64| (x - TARGET).abs() / TARGET;
    let passed = rel(oracle_n) <= 0.02 && rel(ens_n) <= 0.02 && lo >= 0.45 && hi <= 0.55;
    Ok((
        passed,
        format!(
            "oracle <n> = {oracle_n:.3}, ensemble <n> = {ens_n:.3} (16 ± 2%); \
             per-trajectory variances in [{lo:.3}, {hi:.3}]"
        ),
    ))
}

fn staircase_fraction(tr: &Trajectory) -> f64 {
    let near = tr
        .records
        .iter()
        .filter(|r| {
            let n = r.expectations[OBS_N].re;
            (n - n.round()).abs() <= 0.1
        })
        .count();
    near as f64 / tr.records.len() as f64
}

// Strong number measurement with weak damping: smooth mean, staircase runs.
fn mean_energy_decay() -> Result<(bool, String)> {
    const M: usize = 400;
    let base = PresetOverrides {
        dim: Some(11),
        dt: Some(1e-3),
        t_final: Some(60.0),
        ..Default::default()
    };
    let s = scenario(
        ScenarioName::Fig5,
        PresetOverrides {
            record_stride: Some(1000),
            seed: Some(5_550_001),
            ..base.clone()
        },
    )?;
    let ens = run_ensemble_opts(&s.model, &s.psi0, &s.cfg, M, lean())?;
    let series = &ens.mean_observables[OBS_N];
    let mut worst_z = 0.0f64;
    for ((t, mean), se) in ens.times.iter().zip(&series.mean).zip(&series.std_error) {
        let exact = 5.0 * (-0.01 * t).exp();
        let dev = (mean.re - exact).abs();
        let z = match se {
            Some(se) if *se > 0.0 => dev / se,
            _ if dev <= 1e-12 => 0.0,
            _ => f64::INFINITY,
        };
        worst_z = worst_z.max(z);
    }
    let mut staircase = 0;
    let mut fractions = Vec::new();
    for seed in 1..=10u64 {
        let run = scenario(
            ScenarioName::Fig5,
            PresetOverrides {
                record_stride: Some(100),
                seed: Some(seed),
                ..base.clone()
            },
        )?;
        let f = staircase_fraction(&single(&run)?);
        fractions.push((f * 100.0).round() / 100.0);
        if f >= 0.8 {
            staircase += 1;
        }
    }
    Ok((
        worst_z <= 4.0 && staircase >= 8,
        format!(
            "max |<n> - 5e^(-0.01t)| = {worst_z:.2} standard errors (limit 4); \
             staircase runs {staircase}/10 {fractions:?}"
        ),
    ))
}

fn heisenberg_minimum(tr: &Trajectory) -> f64 {
    tr.records
        .iter()
        .map(|r| r.variances[VAR_Q] * r.variances[VAR_P])
        .fold(f64::INFINITY, f64::min)
}

// Zero-temperature bath from |3⟩, plus the uncertainty bound in every preset.
fn thermal_floor() -> Result<(bool, String)> {
    let bath = scenario(
        ScenarioName::Fig3,
        PresetOverrides {
            seed: Some(33),
            ..Default::default()
        },
    )?;
    let run = single(&bath)?;
    let settle_from = 0.75 * bath.cfg.t_final;
    let settled = run.records.iter().filter(|r| r.t >= settle_from);
    let mut worst = 0.0f64;
    for r in settled {
        worst = worst
            .max((r.variances[VAR_Q] - 0.5).abs())
            .max((r.variances[VAR_P] - 0.5).abs());
    }

    let mut floor = heisenberg_minimum(&run);
    let others = [
        (
            ScenarioName::Fig1,
            PresetOverrides {
                record_stride: Some(100),
                ..Default::default()
            },
        ),
        (
            ScenarioName::Fig2,
            PresetOverrides {
                dim: Some(40),
                t_final: Some(14.0),
                ..Default::default()
            },
        ),
        (ScenarioName::Fig4, PresetOverrides::default()),
        (
            ScenarioName::Fig5,
            PresetOverrides {
                dim: Some(11),
                t_final: Some(60.0),
                ..Default::default()
            },
        ),
        (
            ScenarioName::Kaos,
            PresetOverrides {
                periods: Some(20),
                record_stride: Some(99),
                ..Default::default()
            },
        ),
    ];
    let mut leaks = Vec::new();
    for (name, o) in others {
        let run = single(&scenario(name, o)?)?;
        floor = floor.min(heisenberg_minimum(&run));
        let leak = run
            .records
            .iter()
            .map(|r| r.top_level_leak)
            .fold(0.0, f64::max);
        leaks.push(format!("{name} {leak:.1e}"));
    }
    Ok((
        worst <= 0.05 && floor >= 0.25 - 1e-3,
        format!(
            "late-time |var - 1/2| <= {worst:.4} (limit 0.05); \
             min var_q*var_p over all presets {floor:.5} (floor 0.249); \
             recorded leak {}",
            leaks.join(", ")
        ),
    ))
}

// Twenty runs in the double well from the barrier top.
fn symmetry_breaking() -> Result<(bool, String)> {
    const RUNS: usize = 20;
    let s = scenario(
        ScenarioName::Fig4,
        PresetOverrides {
            record_stride: Some(10),
            seed: Some(4_040),
            ..Default::default()
        },
    )?;
    let w = s.params.well_center.expect("resolved");
    let ens = run_ensemble_opts(&s.model, &s.psi0, &s.cfg, RUNS, lean())?;
    let (mut left, mut right, mut bad) = (0, 0, 0);
    let mut finals = Vec::new();
    let mut worst_leak = 0.0f64;
    for tr in &ens.trajectories {
        let leak = tr
            .records
            .iter()
            .map(|r| r.top_level_leak)
            .fold(0.0, f64::max);
        worst_leak = worst_leak.max(leak);
        let last = tr.records.last().expect("nonempty");
        let q = last.expectations[OBS_Q].re;
        let dq = last.variances[VAR_Q].sqrt();
        finals.push((q * 100.0).round() / 100.0);
        if (q - w).abs() <= 1.0 && dq <= 1.0 {
            right += 1;
        } else if (q + w).abs() <= 1.0 && dq <= 1.0 {
            left += 1;
        } else {
            bad += 1;
        }
    }
    Ok((
        bad == 0 && left > 0 && right > 0,
        format!(
            "{right} runs at +{w}, {left} at -{w}, {bad} unsettled; \
             recorded leak up to {worst_leak:.2e}; final <q> {finals:?}"
        ),
    ))
}

// β·ξ̄(t/β) from the scaled equation reproduces ξ(t).
fn classical_scaling() -> Result<(bool, String)> {
    let base = KaosParams::standard();
    let dt = 0.01;
    let t_final = 10.0 * base.period();
    let xi0 = C64::new(3.0, -2.0);
    let reference = integrate_classical(xi0, &base, dt, t_final)?;
    let mut worst = 0.0f64;
    for beta in [2.0, 5.0, 10.0] {
        let scaled = beta_scale(&base, beta)?;
        let traj = integrate_classical(xi0 / beta, &scaled, dt / beta, t_final / beta)?;
        if traj.len() != reference.len() {
            return Ok((
                false,
                format!(
                    "beta {beta}: grid length {} vs {}",
                    traj.len(),
                    reference.len()
                ),
            ));
        }
        for ((_, a), (_, b)) in reference.iter().zip(&traj) {
            worst = worst.max((a - b * beta).norm());
        }
    }
    Ok((
        worst <= 1e-6,
        format!("sup-norm deviation {worst:.3e} (limit 1e-6)"),
    ))
}

// Quantum section at the β = 10 parameter set against the classical one.
fn quantum_classical_correspondence() -> Result<(bool, String)> {
    const DISCARD: usize = 20;
    let s = scenario(
        ScenarioName::Kaos,
        PresetOverrides {
            seed: Some(610),
            ..Default::default()
        },
    )?;
    let params = s.kaos.expect("kaos preset carries its parameters");
    let run = single(&s)?;
    let quantum = poincare_section(
        &observable_samples(&run.records, OBS_A)?,
        &params,
        s.cfg.dt,
        DISCARD,
    )?;
    let classical_traj = integrate_classical(C64::new(0.0, 0.0), &params, s.cfg.dt, s.cfg.t_final)?;
    let classical = poincare_section(&classical_traj, &params, s.cfg.dt, DISCARD)?;
    let close = quantum
        .iter()
        .filter(|q| {
            classical
                .iter()
                .any(|c| (q.re - c.re).hypot(q.im - c.im) <= 1.0)
        })
        .count();
    let fraction = close as f64 / quantum.len().max(1) as f64;

    // Unscaled parameters: qualitative run, sections must stay bounded.
    let fog = scenario(
        ScenarioName::Kaos,
        PresetOverrides {
            beta: Some(1.0),
            dim: Some(160),
            periods: Some(12),
            seed: Some(611),
            ..Default::default()
        },
    )?;
    let fog_params = fog.kaos.expect("kaos preset carries its parameters");
    let fog_run = single(&fog)?;
    let fog_points = poincare_section(
        &observable_samples(&fog_run.records, OBS_A)?,
        &fog_params,
        fog.cfg.dt,
        0,
    )?;
    let fog_radius = fog_points
        .iter()
        .map(|p| p.re.hypot(p.im))
        .fold(0.0, f64::max);
    Ok((
        fraction >= 0.9 && !quantum.is_empty() && fog_radius <= 50.0,
        format!(
            "{close}/{} quantum points within 1.0 of the classical section ({:.1}%, need 90%); \
             unscaled run: {} points, max |<a>| = {fog_radius:.2}",
            quantum.len(),
            100.0 * fraction,
            fog_points.len()
        ),
    ))
}

// Moment suite on 10⁶ complex increments per channel.
fn noise_statistics() -> Result<(bool, String)> {
    const N: usize = 1_000_000;
    let dt = 0.01;
    let mut stream = NoiseStream::new(9_090, 2);
    let mut buf = [C64::new(0.0, 0.0); 2];
    let mut fork_a = [C64::new(0.0, 0.0)];
    let mut fork_b = [C64::new(0.0, 0.0)];

    // Sums of: re, im, re², im², dξ² (re, im), |dξ|², per channel; cross terms.
    let mut sums = [[0.0f64; 7]; 2];
    let mut sq = [[0.0f64; 7]; 2];
    let mut cross = [0.0f64; 4];
    let mut cross_sq = [0.0f64; 4];
    let mut f0 = NoiseStream::new(9_090, 1).fork(0);
    let mut f1 = NoiseStream::new(9_090, 1).fork(1);
    for _ in 0..N {
        stream.fill_increments(dt, &mut buf)?;
        for (c, z) in buf.iter().enumerate() {
            let sq_z = z * z;
            let vals = [
                z.re,
                z.im,
                z.re * z.re,
                z.im * z.im,
                sq_z.re,
                sq_z.im,
                z.norm_sqr(),
            ];
            for (k, v) in vals.iter().enumerate() {
                sums[c][k] += v;
                sq[c][k] += v * v;
            }
        }
        f0.fill_increments(dt, &mut fork_a)?;
        f1.fill_increments(dt, &mut fork_b)?;
        let within = buf[0] * buf[1].conj();
        let between = fork_a[0] * fork_b[0].conj();
        for (k, v) in [within.re, within.im, between.re, between.im]
            .iter()
            .enumerate()
        {
            cross[k] += v;
            cross_sq[k] += v * v;
        }
    }
    let n = N as f64;
    let z_score = |sum: f64, sum_sq: f64, target: f64| {
        let mean = sum / n;
        let var = (sum_sq / n - mean * mean).max(0.0);
        (mean - target).abs() / (var / n).sqrt()
    };
    let mut failures = Vec::new();
    let mean_bound = 4.0 * (dt / (2.0 * n)).sqrt();
    for c in 0..2 {
        for (k, label) in [(0, "re mean"), (1, "im mean")] {
            let m = sums[c][k] / n;
            if m.abs() > mean_bound {
                failures.push(format!("channel {c} {label} {m:.2e}"));
            }
        }
        for (k, label) in [(2, "re variance"), (3, "im variance")] {
            let v = sums[c][k] / n;
            if (v - 0.5 * dt).abs() > 0.01 * 0.5 * dt {
                failures.push(format!("channel {c} {label} {v:.4e}"));
            }
        }
        for (k, target, label) in [
            (4, 0.0, "Re E[dξ²]"),
            (5, 0.0, "Im E[dξ²]"),
            (6, dt, "E|dξ|²"),
        ] {
            let z = z_score(sums[c][k], sq[c][k], target);
            if z > 4.0 {
                failures.push(format!("channel {c} {label} at {z:.1} SE"));
            }
        }
    }
    for (k, label) in ["cross-channel re", "cross-channel im", "fork re", "fork im"]
        .iter()
        .enumerate()
    {
        let z = z_score(cross[k], cross_sq[k], 0.0);
        if z > 4.0 {
            failures.push(format!("{label} covariance at {z:.1} SE"));
        }
    }
    let detail = if failures.is_empty() {
        format!("{N} samples per channel: means, variances, E[dξ²], E|dξ|² and covariances within bounds")
    } else {
        failures.join("; ")
    };
    Ok((failures.is_empty(), detail))
}

fn ensemble_csv(s: &Scenario, m: usize, execution: Execution) -> Result<String> {
    let opts = EnsembleOptions {
        execution,
        keep_snapshots: false,
    };
    let ens = run_ensemble_opts(&s.model, &s.psi0, &s.cfg, m, opts)?;
    let records = ensemble_records(&ens, &s.cfg.observables)?;
    let header = Header {
        version: crate::VERSION.to_string(),
        seed: s.cfg.seed,
        config: serde_json::to_value(&s.params).expect("overrides serialize"),
    };
    render_table(
        &series_table(&records, &s.cfg.observables),
        OutputFormat::Csv,
        Some(&header),
    )
}

// Same seed, different schedules and worker counts: identical bytes.
fn determinism() -> Result<(bool, String)> {
    const M: usize = 150;
    let s = scenario(
        ScenarioName::Fig5,
        PresetOverrides {
            dim: Some(6),
            t_final: Some(0.5),
            record_stride: Some(50),
            seed: Some(31_337),
            leak_check: Some(false),
            ..Default::default()
        },
    )?;
    let reference = ensemble_csv(&s, M, Execution::Sequential)?;
    #[cfg_attr(not(feature = "parallel"), allow(unused_mut))]
    let mut variants = vec![
        ("repeat", ensemble_csv(&s, M, Execution::Sequential)?),
        ("parallel", ensemble_csv(&s, M, Execution::Parallel)?),
    ];
    #[cfg(feature = "parallel")]
    for workers in [1, 3] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| crate::QsdError::InvalidParameter(e.to_string()))?;
        let text = pool.install(|| ensemble_csv(&s, M, Execution::Parallel))?;
        variants.push((
            if workers == 1 {
                "1 worker"
            } else {
                "3 workers"
            },
            text,
        ));
    }
    let mismatched: Vec<&str> = variants
        .iter()
        .filter(|(_, text)| *text != reference)
        .map(|(label, _)| *label)
        .collect();

    let kaos = scenario(
        ScenarioName::Kaos,
        PresetOverrides {
            periods: Some(5),
            ..Default::default()
        },
    )?;
    let a = single(&kaos)?;
    let b = single(&kaos)?;
    let trajectories_equal = a.records == b.records;
    Ok((
        mismatched.is_empty() && trajectories_equal,
        format!(
            "{} ensemble variants compared ({} bytes each), mismatches {:?}; repeated single run identical: {}",
            variants.len(),
            reference.len(),
            mismatched,
            trajectories_equal
        ),
    ))
}
