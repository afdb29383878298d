//! Itô integration of the quantum state diffusion equation
//!
//! ```text
//! |dψ⟩ = −iH|ψ⟩dt − ½ Σ_j (L_j†L_j + ℓ_j*ℓ_j − 2ℓ_j* L_j)|ψ⟩dt + Σ_j (L_j − ℓ_j)|ψ⟩ dξ_j
//! ℓ_j  = ⟨ψ|L_j|ψ⟩
//! ```
//!
//! with an explicit renormalization after every step. Two schemes share the
//! same stochastic part:
//!
//! * [`Scheme::EulerMaruyama`] applies the full drift in one explicit step.
//! * [`Scheme::ExponentialSplit`] propagates the Hamiltonian part exactly with
//!   `exp(−iH dt/2)` on both sides of an Euler–Maruyama step for the
//!   environment terms. It is needed when H has a large spread of
//!   eigenvalues (Kerr terms, double-well potentials) that would make the
//!   explicit step unstable.
//!
//! Time dependence enters only through a rectangular pulse train `F(t)`
//! multiplying a fixed drive operator. Steps that straddle a pulse edge are
//! subdivided so `F` is constant on every substep.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};
use crate::linalg::{
    self, hermitian_eigen, top_level_leak, unitary_from_eigen, OperatorMatrix, StateVector, C64, I,
    ONE, ZERO,
};
use crate::noise::NoiseStream;

/// Amplitude magnitude treated as a numerical blowup.
pub const BLOWUP_THRESHOLD: f64 = 1e6;

/// Default truncation-leak limit before a run is aborted.
pub const DEFAULT_LEAK_LIMIT: f64 = 1e-3;

/// Periodic rectangular pulses: off for `tau1`, then `f0` for `tau2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PulseSchedule {
    pub tau1: f64,
    pub tau2: f64,
    pub f0: f64,
}

impl PulseSchedule {
    pub fn new(tau1: f64, tau2: f64, f0: f64) -> Result<Self> {
        if !(tau1 >= 0.0 && tau2 > 0.0 && tau1.is_finite() && tau2.is_finite() && f0.is_finite()) {
            return Err(QsdError::InvalidParameter(format!(
                "pulse schedule needs tau1 >= 0 and tau2 > 0 (got tau1={tau1}, tau2={tau2})"
            )));
        }
        Ok(Self { tau1, tau2, f0 })
    }

    pub fn period(&self) -> f64 {
        self.tau1 + self.tau2
    }

    /// F(t): zero while `t mod τ < τ1`, `f0` otherwise (including the edge).
    pub fn value(&self, t: f64) -> f64 {
        let phase = t.rem_euclid(self.period());
        if phase < self.tau1 {
            0.0
        } else {
            self.f0
        }
    }

    /// Pulse edges strictly inside `(a, b)`, ascending, ignoring edges within
    /// `tol` of either end.
    pub fn edges_within(&self, a: f64, b: f64, tol: f64) -> Vec<f64> {
        let tau = self.period();
        let first = (a / tau).floor() as i64;
        let last = (b / tau).ceil() as i64;
        let mut edges = Vec::new();
        for k in first..=last {
            let start = k as f64 * tau;
            for e in [start, start + self.tau1] {
                if e > a + tol && e < b - tol {
                    edges.push(e);
                }
            }
        }
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        edges
    }
}

pub fn pulse_value(schedule: &PulseSchedule, t: f64) -> f64 {
    schedule.value(t)
}

/// Pulsed term `F(t) · operator` added to the static Hamiltonian.
#[derive(Clone, Debug)]
pub struct Drive {
    pub operator: OperatorMatrix,
    pub schedule: PulseSchedule,
}

#[derive(Clone, Debug)]
pub struct OpenSystemModel {
    hamiltonian: OperatorMatrix,
    drive: Option<Drive>,
    lindblads: Vec<OperatorMatrix>,
}

impl OpenSystemModel {
    pub fn new(
        hamiltonian: OperatorMatrix,
        drive: Option<Drive>,
        lindblads: Vec<OperatorMatrix>,
    ) -> Result<Self> {
        let dim = hamiltonian.dim();
        let mismatch = |found: usize| QsdError::DimensionMismatch {
            expected: dim,
            found,
        };
        if !hamiltonian.is_hermitian() {
            return Err(QsdError::NotHermitian(format!(
                "static Hamiltonian (defect {:.3e})",
                hamiltonian.hermiticity_defect()
            )));
        }
        if let Some(d) = &drive {
            if d.operator.dim() != dim {
                return Err(mismatch(d.operator.dim()));
            }
            let on = hamiltonian.add(&d.operator.scale(C64::from(d.schedule.f0)))?;
            if !on.is_hermitian() {
                return Err(QsdError::NotHermitian(format!(
                    "driven Hamiltonian at F = {} (defect {:.3e})",
                    d.schedule.f0,
                    on.hermiticity_defect()
                )));
            }
        }
        if let Some(l) = lindblads.iter().find(|l| l.dim() != dim) {
            return Err(mismatch(l.dim()));
        }
        Ok(Self {
            hamiltonian,
            drive,
            lindblads,
        })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn hamiltonian(&self) -> &OperatorMatrix {
        &self.hamiltonian
    }

    pub fn drive(&self) -> Option<&Drive> {
        self.drive.as_ref()
    }

    pub fn lindblads(&self) -> &[OperatorMatrix] {
        &self.lindblads
    }

    pub fn force_at(&self, t: f64) -> f64 {
        self.drive.as_ref().map_or(0.0, |d| d.schedule.value(t))
    }

    /// H(t) = H_static + F(t)·drive.
    pub fn hamiltonian_at(&self, t: f64) -> OperatorMatrix {
        self.hamiltonian_at_force(self.force_at(t))
    }

    pub(crate) fn hamiltonian_at_force(&self, force: f64) -> OperatorMatrix {
        match &self.drive {
            Some(d) if force != 0.0 => OperatorMatrix::new(
                self.hamiltonian.matrix() + d.operator.matrix() * C64::from(force),
            )
            .expect("dimensions checked at construction"),
            _ => self.hamiltonian.clone(),
        }
    }

    pub fn pulse_schedule(&self) -> Option<&PulseSchedule> {
        self.drive.as_ref().map(|d| &d.schedule)
    }

    /// Step size satisfying `dt · max(‖H‖, ‖L_j†L_j‖) ≤ 0.05` (row-sum bound).
    pub fn suggested_dt(&self) -> f64 {
        let mut scale = self
            .hamiltonian_at_force(self.pulse_schedule().map_or(0.0, |s| s.f0))
            .norm_bound();
        for l in &self.lindblads {
            let ll = OperatorMatrix::new(l.matrix().adjoint() * l.matrix())
                .expect("square by construction");
            scale = scale.max(ll.norm_bound());
        }
        if scale == 0.0 {
            return 0.05;
        }
        0.05 / scale
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    EulerMaruyama,
    ExponentialSplit,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::EulerMaruyama => "euler-maruyama",
            Scheme::ExponentialSplit => "exponential-split",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "euler-maruyama" => Some(Scheme::EulerMaruyama),
            "exponential-split" => Some(Scheme::ExponentialSplit),
            _ => None,
        }
    }
}

/// Named observable recorded along a trajectory.
#[derive(Clone, Debug)]
pub struct Observable {
    pub name: String,
    pub op: OperatorMatrix,
}

impl Observable {
    pub fn new(name: impl Into<String>, op: OperatorMatrix) -> Self {
        Self {
            name: name.into(),
            op,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrajectoryConfig {
    pub dt: f64,
    pub t_final: f64,
    pub record_stride: usize,
    pub seed: u64,
    pub observables: Vec<Observable>,
    /// Abort when the top-level leak exceeds this; `None` disables the check
    /// for models that cannot move population upward.
    pub leak_limit: Option<f64>,
    pub scheme: Scheme,
}

impl TrajectoryConfig {
    pub fn new(dt: f64, t_final: f64, record_stride: usize, seed: u64) -> Self {
        Self {
            dt,
            t_final,
            record_stride,
            seed,
            observables: Vec::new(),
            leak_limit: Some(DEFAULT_LEAK_LIMIT),
            scheme: Scheme::EulerMaruyama,
        }
    }

    pub fn with_observables(mut self, observables: Vec<Observable>) -> Self {
        self.observables = observables;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_leak_limit(mut self, limit: Option<f64>) -> Self {
        self.leak_limit = limit;
        self
    }

    /// Number of grid steps; `t_final` must be an integer multiple of `dt`.
    pub fn step_count(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(QsdError::InvalidStep(self.dt));
        }
        if !(self.t_final >= self.dt) {
            return Err(QsdError::InvalidParameter(format!(
                "t_final ({}) must be at least dt ({})",
                self.t_final, self.dt
            )));
        }
        if self.record_stride == 0 {
            return Err(QsdError::InvalidParameter(
                "record_stride must be positive".into(),
            ));
        }
        let steps = (self.t_final / self.dt).round();
        if (steps * self.dt - self.t_final).abs() > 1e-6 * self.dt {
            return Err(QsdError::InvalidParameter(format!(
                "t_final ({}) is not a multiple of dt ({})",
                self.t_final, self.dt
            )));
        }
        Ok(steps as usize)
    }

    /// Times at which records are taken.
    pub fn record_times(&self) -> Result<Vec<f64>> {
        let steps = self.step_count()?;
        Ok((0..=steps)
            .step_by(self.record_stride)
            .map(|n| n as f64 * self.dt)
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub t: f64,
    /// ⟨O⟩ for every configured observable, in order.
    pub expectations: Vec<C64>,
    /// Variances of the hermitian observables only, in order.
    pub variances: Vec<f64>,
    /// |‖ψ‖ − 1| before renormalization on the step that ended here.
    pub norm_drift: f64,
    pub top_level_leak: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
    /// States at the record times, when requested.
    pub snapshots: Vec<StateVector>,
    pub final_state: StateVector,
}

/// Deterministic part of the QSD equation at time `t`.
pub fn drift(psi: &StateVector, model: &OpenSystemModel, t: f64) -> Result<DVector<C64>> {
    check_state(psi, model)?;
    let amp = psi.amplitudes();
    let h = model.hamiltonian_at(t);
    let mut out = (h.matrix() * amp) * (-I);
    for l in model.lindblads() {
        let lpsi = l.matrix() * amp;
        let ell = amp.dotc(&lpsi);
        let ldag_l_psi = l.matrix().adjoint() * &lpsi;
        out -= (ldag_l_psi + amp * C64::from(ell.norm_sqr()) - lpsi * (ell.conj() * 2.0))
            * C64::from(0.5);
    }
    Ok(out)
}

/// `(L_j − ℓ_j)|ψ⟩` for every environment operator.
pub fn diffusion_vectors(psi: &StateVector, model: &OpenSystemModel) -> Result<Vec<DVector<C64>>> {
    check_state(psi, model)?;
    let amp = psi.amplitudes();
    Ok(model
        .lindblads()
        .iter()
        .map(|l| {
            let lpsi = l.matrix() * amp;
            let ell = amp.dotc(&lpsi);
            lpsi - amp * ell
        })
        .collect())
}

fn check_state(psi: &StateVector, model: &OpenSystemModel) -> Result<()> {
    if psi.dim() != model.dim() {
        return Err(QsdError::DimensionMismatch {
            expected: model.dim(),
            found: psi.dim(),
        });
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub state: StateVector,
    pub norm_drift: f64,
}

/// One Euler–Maruyama step of length `dt` from time `t`, then renormalize.
///
/// The drive is evaluated at the midpoint of the step; callers integrating
/// across pulse edges should use [`run_trajectory`], which subdivides.
pub fn step(
    psi: &StateVector,
    model: &OpenSystemModel,
    t: f64,
    dt: f64,
    increments: &[C64],
) -> Result<StepOutcome> {
    check_state(psi, model)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(QsdError::InvalidStep(dt));
    }
    if increments.len() != model.lindblads().len() {
        return Err(QsdError::DimensionMismatch {
            expected: model.lindblads().len(),
            found: increments.len(),
        });
    }
    let plan = StepPlan::new(model, Scheme::EulerMaruyama, dt)?;
    let mut work = Workspace::new(model);
    let mut amp = psi.amplitudes().clone();
    let norm_drift = plan.advance(
        &mut amp,
        &mut work,
        model.force_at(t + 0.5 * dt),
        dt,
        increments,
        t,
    )?;
    Ok(StepOutcome {
        state: StateVector::from_normalized(amp),
        norm_drift,
    })
}

struct ForceLevel {
    force: f64,
    /// Eigen-decomposition of H(force), used by the split scheme.
    eigen: Option<(DMatrix<C64>, Vec<f64>)>,
    /// exp(−iH·dt/2) for the grid step.
    half_step: Option<DMatrix<C64>>,
}

/// Matrices precomputed once per (model, scheme, dt) and shared read-only
/// by every trajectory.
pub struct StepPlan<'m> {
    model: &'m OpenSystemModel,
    scheme: Scheme,
    dt: f64,
    /// −iH_static − ½ΣL†L (Euler–Maruyama) or −½ΣL†L (split).
    effective: DMatrix<C64>,
    /// −i·drive operator, Euler–Maruyama only.
    drive: Option<DMatrix<C64>>,
    levels: Vec<ForceLevel>,
}

/// Per-trajectory scratch buffers.
struct Workspace {
    lpsi: Vec<DVector<C64>>,
    ell: Vec<C64>,
    next: DVector<C64>,
    rotated: DVector<C64>,
    increments: Vec<C64>,
}

impl Workspace {
    fn new(model: &OpenSystemModel) -> Self {
        let dim = model.dim();
        let n = model.lindblads().len();
        Self {
            lpsi: vec![DVector::from_element(dim, ZERO); n],
            ell: vec![ZERO; n],
            next: DVector::from_element(dim, ZERO),
            rotated: DVector::from_element(dim, ZERO),
            increments: vec![ZERO; n],
        }
    }
}

impl<'m> StepPlan<'m> {
    pub fn new(model: &'m OpenSystemModel, scheme: Scheme, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(QsdError::InvalidStep(dt));
        }
        let dim = model.dim();
        let mut effective = DMatrix::from_element(dim, dim, ZERO);
        for l in model.lindblads() {
            effective -= l.matrix().adjoint() * l.matrix() * C64::from(0.5);
        }
        let mut drive = None;
        let mut levels = Vec::new();
        let mut forces = vec![0.0];
        if let Some(d) = model.drive() {
            if d.schedule.f0 != 0.0 {
                forces.push(d.schedule.f0);
            }
        }
        match scheme {
            Scheme::EulerMaruyama => {
                effective -= model.hamiltonian().matrix() * I;
                drive = model.drive().map(|d| d.operator.matrix() * (-I));
                levels.extend(forces.into_iter().map(|force| ForceLevel {
                    force,
                    eigen: None,
                    half_step: None,
                }));
            }
            Scheme::ExponentialSplit => {
                for force in forces {
                    let h = model.hamiltonian_at_force(force);
                    let (vectors, values) = hermitian_eigen(h.matrix());
                    let half = unitary_from_eigen(&vectors, &values, 0.5 * dt);
                    levels.push(ForceLevel {
                        force,
                        eigen: Some((vectors, values)),
                        half_step: Some(half),
                    });
                }
            }
        }
        Ok(Self {
            model,
            scheme,
            dt,
            effective,
            drive,
            levels,
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    fn level(&self, force: f64) -> &ForceLevel {
        self.levels
            .iter()
            .find(|l| l.force == force)
            .expect("force values come from the pulse schedule")
    }

    /// Advances `amp` in place over a substep of length `h` with constant
    /// force; returns the pre-normalization norm drift.
    fn advance(
        &self,
        amp: &mut DVector<C64>,
        work: &mut Workspace,
        force: f64,
        h: f64,
        increments: &[C64],
        t: f64,
    ) -> Result<f64> {
        let rotation = match self.scheme {
            Scheme::EulerMaruyama => None,
            Scheme::ExponentialSplit => {
                let level = self.level(force);
                if (h - self.dt).abs() <= 1e-12 * self.dt {
                    Some(std::borrow::Cow::Borrowed(
                        level.half_step.as_ref().unwrap(),
                    ))
                } else {
                    let (v, l) = level.eigen.as_ref().unwrap();
                    Some(std::borrow::Cow::Owned(unitary_from_eigen(v, l, 0.5 * h)))
                }
            }
        };
        if let Some(u) = &rotation {
            work.rotated.gemv(ONE, u, amp, ZERO);
            std::mem::swap(amp, &mut work.rotated);
        }

        let hc = C64::from(h);
        let next = &mut work.next;
        next.copy_from(amp);
        next.gemv(hc, &self.effective, amp, ONE);
        if let (Some(d), Scheme::EulerMaruyama) = (&self.drive, self.scheme) {
            if force != 0.0 {
                next.gemv(hc * force, d, amp, ONE);
            }
        }
        let mut self_coeff = ZERO;
        for (j, l) in self.model.lindblads().iter().enumerate() {
            let lpsi = &mut work.lpsi[j];
            lpsi.gemv(ONE, l.matrix(), amp, ZERO);
            let ell = amp.dotc(lpsi);
            work.ell[j] = ell;
            // drift: ℓ*·Lψ − ½|ℓ|²ψ ; noise: (Lψ − ℓψ)·dξ
            let dxi = increments[j];
            next.axpy(hc * ell.conj() + dxi, lpsi, ONE);
            self_coeff += -hc * (0.5 * ell.norm_sqr()) - ell * dxi;
        }
        next.axpy(self_coeff, amp, ONE);

        if let Some(u) = &rotation {
            amp.gemv(ONE, u, next, ZERO);
        } else {
            std::mem::swap(amp, next);
        }

        let mut norm_sq = 0.0;
        for c in amp.iter() {
            let m = c.norm_sqr();
            if !(m <= BLOWUP_THRESHOLD * BLOWUP_THRESHOLD) {
                return Err(QsdError::NumericalBlowup { t: t + h });
            }
            norm_sq += m;
        }
        let norm = norm_sq.sqrt();
        if !(norm > 0.0) {
            return Err(QsdError::NumericalBlowup { t: t + h });
        }
        amp.unscale_mut(norm);
        Ok((norm - 1.0).abs())
    }
}

/// Runs one trajectory driven by the root noise stream of `cfg.seed`.
pub fn run_trajectory(
    model: &OpenSystemModel,
    psi0: &StateVector,
    cfg: &TrajectoryConfig,
) -> Result<Trajectory> {
    let plan = StepPlan::new(model, cfg.scheme, cfg.dt)?;
    let noise = NoiseStream::new(cfg.seed, model.lindblads().len());
    run_with_plan(&plan, psi0, cfg, noise, false)
}

/// Runs one trajectory with an explicit noise stream and shared plan.
pub fn run_with_plan(
    plan: &StepPlan<'_>,
    psi0: &StateVector,
    cfg: &TrajectoryConfig,
    mut noise: NoiseStream,
    keep_snapshots: bool,
) -> Result<Trajectory> {
    let model = plan.model;
    check_state(psi0, model)?;
    if plan.scheme != cfg.scheme || plan.dt != cfg.dt {
        return Err(QsdError::InvalidParameter(
            "step plan was built for a different scheme or dt".into(),
        ));
    }
    for obs in &cfg.observables {
        if obs.op.dim() != model.dim() {
            return Err(QsdError::DimensionMismatch {
                expected: model.dim(),
                found: obs.op.dim(),
            });
        }
    }
    let steps = cfg.step_count()?;
    let dt = cfg.dt;
    let edge_tol = 1e-9 * dt;
    let mut work = Workspace::new(model);
    let mut amp = psi0.amplitudes().clone();
    let capacity = steps / cfg.record_stride + 1;
    let mut records = Vec::with_capacity(capacity);
    let mut snapshots = Vec::with_capacity(if keep_snapshots { capacity } else { 0 });

    let mut take_record = |amp: &DVector<C64>, t: f64, norm_drift: f64| -> Result<()> {
        let leak = top_level_leak(amp);
        if let Some(limit) = cfg.leak_limit {
            if leak > limit {
                return Err(QsdError::TruncationLeak { t, leak, limit });
            }
        }
        let psi = StateVector::from_normalized(amp.clone());
        let mut expectations = Vec::with_capacity(cfg.observables.len());
        let mut variances = Vec::new();
        for obs in &cfg.observables {
            expectations.push(linalg::expectation(&obs.op, &psi)?);
            if obs.op.is_hermitian() {
                variances.push(linalg::variance(&obs.op, &psi)?);
            }
        }
        records.push(TrajectoryRecord {
            t,
            expectations,
            variances,
            norm_drift,
            top_level_leak: leak,
        });
        if keep_snapshots {
            snapshots.push(psi);
        }
        Ok(())
    };

    take_record(&amp, 0.0, 0.0)?;
    let schedule = model.pulse_schedule().copied();
    for n in 0..steps {
        let t0 = n as f64 * dt;
        let t1 = (n + 1) as f64 * dt;
        let edges = schedule.map_or_else(Vec::new, |s| s.edges_within(t0, t1, edge_tol));
        let mut drift_max = 0.0f64;
        if edges.is_empty() {
            noise.fill_increments(dt, &mut work.increments)?;
            let incs = std::mem::take(&mut work.increments);
            let force = model.force_at(t0 + 0.5 * dt);
            let r = plan.advance(&mut amp, &mut work, force, dt, &incs, t0);
            work.increments = incs;
            drift_max = r?;
        } else {
            let mut a = t0;
            for b in edges.into_iter().chain(std::iter::once(t1)) {
                let h = b - a;
                noise.fill_increments(h, &mut work.increments)?;
                let incs = std::mem::take(&mut work.increments);
                let force = model.force_at(a + 0.5 * h);
                let r = plan.advance(&mut amp, &mut work, force, h, &incs, a);
                work.increments = incs;
                drift_max = drift_max.max(r?);
                a = b;
            }
        }
        if let Some(limit) = cfg.leak_limit {
            let leak = top_level_leak(&amp);
            if leak > limit {
                return Err(QsdError::TruncationLeak { t: t1, leak, limit });
            }
        }
        if (n + 1) % cfg.record_stride == 0 {
            take_record(&amp, t1, drift_max)?;
        }
    }
    Ok(Trajectory {
        records,
        snapshots,
        final_state: StateVector::from_normalized(amp),
    })
}
