//! The continuum limit: the affine maps `β` and `s`, the fixed-point map `φ`
//! and a Banach iteration for its unique fixed point `m*`.
//!
//! With `c_x = λ_x/(1+λ_x)`:
//!
//! ```text
//! β(m)_x = ν_x + Σ_y m_y P_{y,x}
//! s(m)_x = −m_x + σ_x + β(m)_x
//! φ(m)_x = (σ_x − c_x)(1 − e^{−β(m)_x}) + β(m)_x
//! ```
//!
//! When `σ ≤ c` componentwise, `φ` maps `ℝ₊^V` into itself and is a
//! contraction with modulus `μ` (the Perron eigenvalue of `P`) in the
//! η-weighted ℓ¹ norm. Iterating from `0` therefore converges monotonically,
//! and the step length gives an a-posteriori bound on the distance to `m*`.

use thiserror::Error;

use crate::model::{MassVector, ModelError, ModelParams, SpectralData};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LimitError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("odometer density m[{index}] = {value} is negative")]
    NegativeInput { index: usize, value: f64 },
    #[error("tolerance must be positive and finite, got {0}")]
    BadTolerance(f64),
    #[error("fixed-point iteration hit the cap of {iterations} steps (last eta-step {step:e})")]
    IterationCap { iterations: usize, step: f64 },
    #[error("iterate {iteration} decreased in village {village}: {before} -> {after}")]
    NonMonotone {
        iteration: usize,
        village: usize,
        before: f64,
        after: f64,
    },
}

/// The solution `(m*, s*)` with its certified η-norm error.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitSolution {
    pub m_star: MassVector,
    pub s_star: MassVector,
    /// Upper bound on `‖m_star − m*‖_η`.
    pub certified_eta_error: f64,
    pub iterations: usize,
}

fn check_input(params: &ModelParams, m: &[f64]) -> Result<(), LimitError> {
    if m.len() != params.num_villages() {
        return Err(ModelError::DimensionMismatch {
            what: "odometer vector",
            expected: params.num_villages(),
            found: m.len(),
        }
        .into());
    }
    match m.iter().enumerate().find(|(_, v)| v.is_nan() || **v < 0.0) {
        Some((index, &value)) => Err(LimitError::NegativeInput { index, value }),
        None => Ok(()),
    }
}

/// `β(m) = ν + mP`.
pub fn beta(params: &ModelParams, m: &[f64]) -> Result<MassVector, LimitError> {
    check_input(params, m)?;
    Ok(beta_unchecked(params, m).into())
}

pub(crate) fn beta_unchecked(params: &ModelParams, m: &[f64]) -> Vec<f64> {
    let mut b = params.left_apply(m);
    for (bx, nx) in b.iter_mut().zip(params.nu()) {
        *bx += nx;
    }
    b
}

/// `s(m) = −m + σ + β(m)`, unclamped: negative entries are possible away
/// from the fixed point.
pub fn sleep_profile(params: &ModelParams, m: &[f64]) -> Result<MassVector, LimitError> {
    if m.len() != params.num_villages() {
        return Err(ModelError::DimensionMismatch {
            what: "odometer vector",
            expected: params.num_villages(),
            found: m.len(),
        }
        .into());
    }
    Ok(sleep_profile_unchecked(params, m).into())
}

pub(crate) fn sleep_profile_unchecked(params: &ModelParams, m: &[f64]) -> Vec<f64> {
    beta_unchecked(params, m)
        .into_iter()
        .enumerate()
        .map(|(x, b)| -m[x] + params.sigma()[x] + b)
        .collect()
}

/// The fixed-point map `φ`.
pub fn phi(params: &ModelParams, m: &[f64]) -> Result<MassVector, LimitError> {
    check_input(params, m)?;
    Ok(phi_unchecked(params, m).into())
}

pub(crate) fn phi_unchecked(params: &ModelParams, m: &[f64]) -> Vec<f64> {
    beta_unchecked(params, m)
        .into_iter()
        .enumerate()
        .map(|(x, b)| {
            let gap = params.sigma()[x] - params.sleep_probability(x);
            // 1 − e^{−b}
            gap * -(-b).exp_m1() + b
        })
        .collect()
}

/// Right-hand side of the mass-balance equation, `−m + σ + ν + mP`.
pub fn balance_rhs(params: &ModelParams, m: &[f64]) -> Result<MassVector, LimitError> {
    sleep_profile(params, m)
}

/// Right-hand side of the last-exit equation,
/// `σ e^{−β(m)} + c (1 − e^{−β(m)})`.
pub fn last_exit_rhs(params: &ModelParams, m: &[f64]) -> Result<MassVector, LimitError> {
    check_input(params, m)?;
    Ok(beta_unchecked(params, m)
        .into_iter()
        .enumerate()
        .map(|(x, b)| {
            let survive = (-b).exp();
            params.sigma()[x] * survive + params.sleep_probability(x) * -(-b).exp_m1()
        })
        .collect::<Vec<_>>()
        .into())
}

/// Banach iteration `m⁰ = 0`, `m^{k+1} = φ(m^k)`.
///
/// Stops at the first step with `‖m^{k+1} − m^k‖_η ≤ tol·(1 − μ)`. The
/// residual bound then gives `‖m^k − m*‖_η ≤ tol`, and one more contraction
/// step puts the returned `m^{k+1}` at least as close.
pub fn solve_fixed_point(
    params: &ModelParams,
    spectral: &SpectralData,
    tol: f64,
) -> Result<LimitSolution, LimitError> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(LimitError::BadTolerance(tol));
    }
    params.validate(true)?;
    let v = params.num_villages();
    if spectral.eta.len() != v {
        return Err(ModelError::DimensionMismatch {
            what: "spectral data",
            expected: v,
            found: spectral.eta.len(),
        }
        .into());
    }

    let gap = 1.0 - spectral.mu;
    let threshold = tol * gap;
    let mut m = vec![0.0; v];
    let mut step = f64::INFINITY;
    for iteration in 1..=MAX_ITERATIONS {
        let next = phi_unchecked(params, &m);
        for (x, (&before, &after)) in m.iter().zip(&next).enumerate() {
            if after < before - 1e-12 * (1.0 + before.abs()) {
                return Err(LimitError::NonMonotone {
                    iteration,
                    village: x,
                    before,
                    after,
                });
            }
        }
        step = spectral.eta_distance(&next, &m);
        m = next;
        if step <= threshold {
            let s_star = sleep_profile_unchecked(params, &m);
            return Ok(LimitSolution {
                m_star: m.into(),
                s_star: s_star.into(),
                certified_eta_error: step / gap,
                iterations: iteration,
            });
        }
    }
    Err(LimitError::IterationCap {
        iterations: MAX_ITERATIONS,
        step,
    })
}
