//! Perron data of the jump kernel and the weighted ℓ¹ norm it induces.

use thiserror::Error;

use super::{ModelError, ModelParams};

/// Stop once successive normalized iterates differ by at most this much.
pub const ITERATE_TOL: f64 = 1e-13;
/// Bound on `‖Pη − μη‖_∞` accepted at the end.
pub const RESIDUAL_TOL: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error(
        "power iteration did not converge within {iterations} iterations (last step {last_step:e})"
    )]
    NotConverged { iterations: usize, last_step: f64 },
    #[error("principal eigenvalue {mu} is outside [0, 1)")]
    EigenvalueOutOfRange { mu: f64 },
    #[error("eigen-residual {residual:e} exceeds {RESIDUAL_TOL:e}")]
    Residual { residual: f64 },
}

/// Principal eigenvalue `μ` of `P`, its right eigenvector `η` scaled to
/// `max η = 1`, and `η_min`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    pub mu: f64,
    pub eta: Vec<f64>,
    pub eta_min: f64,
    pub iterations: usize,
}

impl SpectralData {
    /// `‖w‖_η = Σ_x |w_x| η_x`.
    pub fn eta_norm(&self, w: &[f64]) -> Result<f64, ModelError> {
        if w.len() != self.eta.len() {
            return Err(ModelError::DimensionMismatch {
                what: "eta-norm argument",
                expected: self.eta.len(),
                found: w.len(),
            });
        }
        Ok(self.eta_norm_unchecked(w))
    }

    #[inline]
    pub(crate) fn eta_norm_unchecked(&self, w: &[f64]) -> f64 {
        w.iter().zip(&self.eta).map(|(a, e)| a.abs() * e).sum()
    }

    pub(crate) fn eta_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.eta)
            .map(|((x, y), e)| (x - y).abs() * e)
            .sum()
    }

    /// Contraction modulus of the fixed-point map in the η-norm.
    pub fn contraction_factor(&self) -> f64 {
        self.mu
    }
}

/// Power iteration on `P + I` from the all-ones vector.
///
/// The identity shift makes the matrix primitive even when the support of
/// `P` is periodic, so the iteration converges to the Perron vector. The
/// eigenvalue is reported as `ρ(P + I) − 1`.
pub fn compute_spectral(params: &ModelParams) -> Result<SpectralData, SpectralError> {
    let v = params.num_villages();
    let mut eta = vec![1.0; v];
    let mut rho = 1.0;
    let mut last_step = f64::INFINITY;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut w = params.right_apply(&eta);
        for (wx, ex) in w.iter_mut().zip(&eta) {
            *wx += ex;
        }
        rho = w.iter().cloned().fold(f64::MIN, f64::max);
        for wx in w.iter_mut() {
            *wx /= rho;
        }
        last_step = super::sup_distance(&w, &eta);
        eta = w;
        if last_step <= ITERATE_TOL {
            break;
        }
    }
    if last_step > ITERATE_TOL {
        return Err(SpectralError::NotConverged {
            iterations,
            last_step,
        });
    }

    let max = eta.iter().cloned().fold(f64::MIN, f64::max);
    for e in eta.iter_mut() {
        *e /= max;
    }

    let mut mu = rho - 1.0;
    // rounding can push a zero eigenvalue a hair below 0
    if mu < 0.0 && mu > -RESIDUAL_TOL {
        mu = 0.0;
    }
    if !(0.0..1.0).contains(&mu) {
        return Err(SpectralError::EigenvalueOutOfRange { mu });
    }

    let p_eta = params.right_apply(&eta);
    let residual = p_eta
        .iter()
        .zip(&eta)
        .fold(0.0_f64, |acc, (pe, e)| acc.max((pe - mu * e).abs()));
    if residual > RESIDUAL_TOL {
        return Err(SpectralError::Residual { residual });
    }

    let eta_min = eta.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(SpectralData {
        mu,
        eta,
        eta_min,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{l1_norm, sup_norm};
    use proptest::prelude::*;

    fn kernel(rows: Vec<Vec<f64>>) -> ModelParams {
        let v = rows.len();
        ModelParams::new(rows, vec![1.0; v], vec![0.0; v], vec![0.0; v]).unwrap()
    }

    #[test]
    fn scalar_kernel() {
        let s = compute_spectral(&kernel(vec![vec![0.5]])).unwrap();
        assert!((s.mu - 0.5).abs() < 1e-14);
        assert_eq!(s.eta, vec![1.0]);
        assert_eq!(s.eta_min, 1.0);
    }

    #[test]
    fn zero_scalar_kernel_has_zero_eigenvalue() {
        let s = compute_spectral(&kernel(vec![vec![0.0]])).unwrap();
        assert_eq!(s.mu, 0.0);
        assert_eq!(s.eta, vec![1.0]);
    }

    #[test]
    fn symmetric_swap_kernel() {
        let s = compute_spectral(&kernel(vec![vec![0.0, 0.3], vec![0.3, 0.0]])).unwrap();
        assert!((s.mu - 0.3).abs() < 1e-12);
        assert_eq!(s.eta, vec![1.0, 1.0]);
    }

    #[test]
    fn asymmetric_periodic_kernel_matches_closed_form() {
        // 2x2 with zero diagonal: μ² = P01·P10 and η ∝ (1, P10/μ).
        let (a, b) = (0.5_f64, 0.4_f64);
        let mu = (a * b).sqrt();
        let eta1 = b / mu;
        let s = compute_spectral(&kernel(vec![vec![0.0, a], vec![b, 0.0]])).unwrap();
        assert!((s.mu - mu).abs() < 1e-12, "{} vs {}", s.mu, mu);
        assert!((s.eta[0] - 1.0).abs() < 1e-12);
        assert!((s.eta[1] - eta1).abs() < 1e-12);
        assert!((s.eta_min - eta1).abs() < 1e-12);
    }

    #[test]
    fn eta_norm_examples() {
        let s = SpectralData {
            mu: 0.3,
            eta: vec![1.0, 1.0],
            eta_min: 1.0,
            iterations: 0,
        };
        assert_eq!(s.eta_norm(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(s.eta_norm(&[3.0, -4.0]).unwrap(), 7.0);
        assert!(s.eta_norm(&[1.0]).is_err());

        let s = compute_spectral(&kernel(vec![vec![0.0, 0.5], vec![0.4, 0.0]])).unwrap();
        let expected = 1.0 + 0.4 / 0.2_f64.sqrt();
        assert!((s.eta_norm(&[1.0, 1.0]).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 1.8944).abs() < 1e-4);
    }

    #[test]
    fn deterministic() {
        let p = kernel(vec![
            vec![0.1, 0.3, 0.2],
            vec![0.0, 0.2, 0.7],
            vec![0.5, 0.0, 0.1],
        ]);
        assert_eq!(compute_spectral(&p).unwrap(), compute_spectral(&p).unwrap());
    }

    fn random_kernel() -> impl Strategy<Value = ModelParams> {
        (1usize..=5).prop_flat_map(|v| {
            (
                prop::collection::vec(0.0f64..1.0, v * v),
                prop::collection::vec(0.05f64..0.99, v),
            )
                .prop_map(move |(raw, scale)| {
                    let mut rows = Vec::with_capacity(v);
                    for x in 0..v {
                        let mut row: Vec<f64> = raw[x * v..(x + 1) * v].to_vec();
                        // a cycle through every village keeps the support irreducible
                        row[(x + 1) % v] += 0.5;
                        let sum: f64 = row.iter().sum();
                        rows.push(row.iter().map(|p| p / sum * scale[x]).collect());
                    }
                    kernel(rows)
                })
        })
    }

    proptest! {
        #[test]
        fn norm_sandwich(p in random_kernel(), seed in prop::collection::vec(-10.0f64..10.0, 5)) {
            let s = compute_spectral(&p).unwrap();
            let w = &seed[..p.num_villages()];
            let eta = s.eta_norm(w).unwrap();
            let l1 = l1_norm(w);
            let sup = sup_norm(w);
            let v = p.num_villages() as f64;
            prop_assert!(s.eta_min * l1 <= eta + 1e-12);
            prop_assert!(eta <= l1 + 1e-12);
            prop_assert!(sup <= l1 + 1e-12);
            prop_assert!(l1 <= v * sup + 1e-12);
        }

        #[test]
        fn eigen_action(p in random_kernel(), seed in prop::collection::vec(0.0f64..10.0, 5)) {
            let s = compute_spectral(&p).unwrap();
            prop_assert!(s.mu > 0.0 && s.mu < 1.0);
            let m = &seed[..p.num_villages()];
            let mp = p.left_apply(m);
            let lhs = s.eta_norm(&mp).unwrap();
            let rhs = s.mu * s.eta_norm(m).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9, "{} vs {}", lhs, rhs);
            let residual = p.right_apply(&s.eta).iter().zip(&s.eta)
                .fold(0.0f64, |a, (pe, e)| a.max((pe - s.mu * e).abs()));
            prop_assert!(residual <= RESIDUAL_TOL);
            prop_assert_eq!(s.eta.iter().cloned().fold(f64::MIN, f64::max), 1.0);
        }
    }
}
