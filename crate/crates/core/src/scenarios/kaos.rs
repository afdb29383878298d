//! Kicked, damped, anharmonic oscillator: classical equation of motion,
//! β-scaling and stroboscopic Poincaré sections.

use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};
use crate::integrator::{PulseSchedule, TrajectoryRecord};
use crate::linalg::C64;

/// Phase-space point ξ; the real part is proportional to position and the
/// imaginary part to momentum.
pub type ClassicalState = C64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KaosParams {
    pub chi: f64,
    pub gamma: f64,
    pub f0: f64,
    pub tau1: f64,
    pub tau2: f64,
}

impl KaosParams {
    pub fn new(chi: f64, gamma: f64, f0: f64, tau1: f64, tau2: f64) -> Result<Self> {
        let params = Self {
            chi,
            gamma,
            f0,
            tau1,
            tau2,
        };
        params.validate()?;
        Ok(params)
    }

    /// χ = 0.004, γ = 0.1, F0 = 2, τ1 = 5, τ2 = 4.9.
    pub fn standard() -> Self {
        Self {
            chi: 0.004,
            gamma: 0.1,
            f0: 2.0,
            tau1: 5.0,
            tau2: 4.9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.chi, self.gamma, self.f0, self.tau1, self.tau2]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(self.gamma > 0.0) || !(self.tau1 + self.tau2 > 0.0) {
            return Err(QsdError::InvalidParameter(format!(
                "KAOS parameters need finite values, gamma > 0 and tau1 + tau2 > 0 (got {self:?})"
            )));
        }
        self.schedule().map(|_| ())
    }

    pub fn schedule(&self) -> Result<PulseSchedule> {
        PulseSchedule::new(self.tau1, self.tau2, self.f0)
    }

    pub fn period(&self) -> f64 {
        self.tau1 + self.tau2
    }
}

/// γ → βγ, χ → β³χ, F0 unchanged, τ1,2 → τ1,2/β.
pub fn beta_scale(params: &KaosParams, beta: f64) -> Result<KaosParams> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(QsdError::InvalidParameter(format!(
            "beta must be positive and finite (got {beta})"
        )));
    }
    KaosParams::new(
        beta.powi(3) * params.chi,
        beta * params.gamma,
        params.f0,
        params.tau1 / beta,
        params.tau2 / beta,
    )
}

fn rhs_with_force(xi: C64, force: f64, p: &KaosParams) -> C64 {
    -0.5 * p.gamma * xi + force - C64::new(0.0, p.chi) * xi.norm_sqr() * xi
}

/// dξ/dt = −½γξ + F(t) − iχ|ξ|²ξ.
pub fn classical_rhs(xi: ClassicalState, t: f64, params: &KaosParams) -> C64 {
    let schedule = PulseSchedule {
        tau1: params.tau1,
        tau2: params.tau2,
        f0: params.f0,
    };
    rhs_with_force(xi, schedule.value(t), params)
}

fn rk4(xi: C64, force: f64, h: f64, p: &KaosParams) -> C64 {
    let k1 = rhs_with_force(xi, force, p);
    let k2 = rhs_with_force(xi + 0.5 * h * k1, force, p);
    let k3 = rhs_with_force(xi + 0.5 * h * k2, force, p);
    let k4 = rhs_with_force(xi + h * k3, force, p);
    xi + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// RK4 on the grid `n·dt`, returning every grid point. Steps that straddle a
/// pulse edge are split there so the force is constant on each piece.
pub fn integrate_classical(
    xi0: ClassicalState,
    params: &KaosParams,
    dt: f64,
    t_final: f64,
) -> Result<Vec<(f64, ClassicalState)>> {
    params.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(QsdError::InvalidStep(dt));
    }
    if !(xi0.re.is_finite() && xi0.im.is_finite()) {
        return Err(QsdError::InvalidParameter(
            "initial state is not finite".into(),
        ));
    }
    let steps = (t_final / dt).round();
    if !(t_final >= dt) || (steps * dt - t_final).abs() > 1e-6 * dt {
        return Err(QsdError::InvalidParameter(format!(
            "t_final ({t_final}) must be a positive multiple of dt ({dt})"
        )));
    }
    let steps = steps as usize;
    let schedule = params.schedule()?;
    let edge_tol = 1e-9 * dt;

    let mut out = Vec::with_capacity(steps + 1);
    let mut xi = xi0;
    out.push((0.0, xi));
    for n in 0..steps {
        let a = n as f64 * dt;
        let b = (n + 1) as f64 * dt;
        let mut start = a;
        for end in schedule
            .edges_within(a, b, edge_tol)
            .into_iter()
            .chain(std::iter::once(b))
        {
            let force = schedule.value(0.5 * (start + end));
            xi = rk4(xi, force, end - start, params);
            start = end;
        }
        if !(xi.re.is_finite() && xi.im.is_finite()) {
            return Err(QsdError::NumericalBlowup { t: b });
        }
        out.push((b, xi));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoincarePoint {
    pub period_index: usize,
    pub re: f64,
    pub im: f64,
}

/// `(t, ⟨O⟩)` pairs from the observable at `index` of each record.
pub fn observable_samples(records: &[TrajectoryRecord], index: usize) -> Result<Vec<(f64, C64)>> {
    records
        .iter()
        .map(|r| {
            r.expectations.get(index).map(|v| (r.t, *v)).ok_or_else(|| {
                QsdError::InvalidParameter(format!(
                    "record at t = {} has no observable {index}",
                    r.t
                ))
            })
        })
        .collect()
}

/// One point per drive period `k·τ`, for `k` from `discard + 1` up to the
/// last full period covered by `samples`. Each point must have a sample
/// within `dt/2` of `k·τ`.
pub fn poincare_section(
    samples: &[(f64, C64)],
    params: &KaosParams,
    dt: f64,
    discard: usize,
) -> Result<Vec<PoincarePoint>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(QsdError::InvalidStep(dt));
    }
    let Some(&(t_last, _)) = samples.last() else {
        return Ok(Vec::new());
    };
    let tau = params.period();
    let half = 0.5 * dt;
    let periods = ((t_last + half) / tau).floor() as usize;
    let mut points = Vec::with_capacity(periods.saturating_sub(discard));
    for k in discard + 1..=periods {
        let target = k as f64 * tau;
        let i = samples.partition_point(|(t, _)| *t < target - half);
        match samples.get(i) {
            Some(&(t, z)) if (t - target).abs() <= half => points.push(PoincarePoint {
                period_index: k,
                re: z.re,
                im: z.im,
            }),
            _ => {
                return Err(QsdError::SpacingMismatch(format!(
                    "no sample within {half} of t = {target} (period {k})"
                )))
            }
        }
    }
    Ok(points)
}
