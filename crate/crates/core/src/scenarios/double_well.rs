//! Local damping operators for a symmetric double well.

use nalgebra::DMatrix;

use crate::error::{QsdError, Result};
use crate::linalg::{momentum, position, position_eigenbasis, OperatorMatrix, C64, I};

/// Projectors onto the nonnegative and negative position eigenspaces.
pub fn half_line_projectors(dim: usize) -> Result<(OperatorMatrix, OperatorMatrix)> {
    let basis = position_eigenbasis(dim)?;
    let v = &basis.transform;
    let mask = |keep: fn(f64) -> bool| {
        let mut scaled = v.clone();
        for (j, &x) in basis.eigenvalues.iter().enumerate() {
            if !keep(x) {
                scaled.column_mut(j).fill(C64::new(0.0, 0.0));
            }
        }
        &scaled * v.adjoint()
    };
    Ok((
        OperatorMatrix::new(mask(|x| x >= 0.0))?,
        OperatorMatrix::new(mask(|x| x < 0.0))?,
    ))
}

/// `L_± = √rate · P_± (q ∓ w + i p)/√2`: each operator damps towards the
/// bottom of its own well and ignores the other half line. The pair obeys
/// `L_− = −Π L_+ Π` with Π the parity operator.
pub fn double_well_operators(
    dim: usize,
    well_center: f64,
    rate: f64,
) -> Result<(OperatorMatrix, OperatorMatrix)> {
    if !(well_center > 0.0 && well_center.is_finite()) {
        return Err(QsdError::InvalidParameter(format!(
            "well centre must be positive (got {well_center})"
        )));
    }
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(QsdError::InvalidParameter(format!(
            "rate must be nonnegative (got {rate})"
        )));
    }
    let basis = position_eigenbasis(dim)?;
    let reach = basis.eigenvalues.last().copied().unwrap_or(0.0);
    if reach < 1.5 * well_center {
        return Err(QsdError::InvalidDimension {
            dim,
            reason: format!(
                "position eigenvalues reach only {reach:.3}, need {:.3}",
                1.5 * well_center
            ),
        });
    }
    let (p_plus, p_minus) = half_line_projectors(dim)?;
    let q = position(dim)?;
    let ip = momentum(dim)?.scale(I);
    let shift = DMatrix::<C64>::identity(dim, dim) * C64::from(well_center);
    let prefactor = C64::from((0.5 * rate).sqrt());
    let lower = |p: &OperatorMatrix, sign: f64| -> Result<OperatorMatrix> {
        let local = q.matrix() - &shift * C64::from(sign) + ip.matrix();
        OperatorMatrix::new(p.matrix() * local * prefactor)
    };
    Ok((lower(&p_plus, 1.0)?, lower(&p_minus, -1.0)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{apply, expectation, StateVector};
    use nalgebra::DVector;

    fn parity(dim: usize) -> DMatrix<C64> {
        DMatrix::from_fn(dim, dim, |i, j| {
            if i != j {
                C64::new(0.0, 0.0)
            } else if i % 2 == 0 {
                C64::new(1.0, 0.0)
            } else {
                C64::new(-1.0, 0.0)
            }
        })
    }

    /// Coherent amplitudes from the closed form e^{−|α|²/2} αⁿ/√n!, evaluated
    /// in log space.
    fn displaced_vacuum(dim: usize, alpha: f64) -> StateVector {
        let amp = DVector::from_fn(dim, |n, _| {
            let log_fact: f64 = (1..=n).map(|k| (k as f64).ln()).sum();
            let log_mag = -0.5 * alpha * alpha + n as f64 * alpha.ln() - 0.5 * log_fact;
            C64::new(log_mag.exp(), 0.0)
        });
        StateVector::new(amp).unwrap()
    }

    #[test]
    fn projectors_resolve_identity() {
        let (pp, pm) = half_line_projectors(40).unwrap();
        let sum = pp.matrix() + pm.matrix();
        assert!((sum - DMatrix::<C64>::identity(40, 40)).camax() < 1e-12);
        let square = pp.matrix() * pp.matrix();
        assert!((square - pp.matrix()).camax() < 1e-12);
    }

    #[test]
    fn operators_are_parity_partners() {
        let dim = 64;
        let (lp, lm) = double_well_operators(dim, 4.0, 0.1).unwrap();
        let pi = parity(dim);
        let mirrored = -(&pi * lp.matrix() * &pi);
        assert!((mirrored - lm.matrix()).camax() < 1e-10);
    }

    #[test]
    fn displaced_vacuum_is_dark_for_its_well() {
        let dim = 128;
        let w = 8.0;
        let psi = displaced_vacuum(dim, w / 2f64.sqrt());
        assert!(psi.top_level_leak() < 1e-6);
        let (lp, lm) = double_well_operators(dim, w, 1.0).unwrap();
        let mean = expectation(&lp, &psi).unwrap();
        let residual = apply(&lp, &psi).unwrap() - psi.amplitudes() * mean;
        assert!(residual.norm() <= 1e-3, "{}", residual.norm());
        assert!(apply(&lm, &psi).unwrap().norm() <= 1e-3);
    }

    #[test]
    fn small_basis_is_rejected() {
        assert!(matches!(
            double_well_operators(16, 8.0, 0.1),
            Err(QsdError::InvalidDimension { dim: 16, .. })
        ));
        assert!(double_well_operators(64, -1.0, 0.1).is_err());
        assert!(double_well_operators(64, 4.0, -0.1).is_err());
    }
}
