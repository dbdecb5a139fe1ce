//! Model parameters of the village activated random walk and the spectral
//! data of its jump kernel.
//!
//! A model is the tuple `(P, λ, σ, ν)` over a fixed set of villages indexed
//! `0..|V|`. `P` must be sub-stochastic with at least one strictly deficient
//! row and an irreducible support graph; particles that leave through the
//! missing row mass are lost to the graveyard, which is what makes every
//! finite configuration stabilize.

mod file;
mod spectral;

use std::fmt;

use thiserror::Error;

pub use file::{load_model, ModelDocument};
pub use spectral::{compute_spectral, SpectralData, SpectralError};

/// Slack on row sums of `P`.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Slack on `σ_x ≤ λ_x/(1+λ_x)`.
///
/// Limit profiles fed back in as initial sleeper densities sit on the
/// critical profile up to rounding, so an exact comparison would reject them.
pub const SUBCRITICAL_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("model has no villages")]
    Empty,
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{what}[{index}] is not finite")]
    NonFinite { what: &'static str, index: usize },
    #[error("{what}[{index}] = {value} is negative")]
    Negative {
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error("sigma[{index}] = {value} is outside [0, 1]")]
    SigmaOutOfRange { index: usize, value: f64 },
    #[error("kernel row {row} sums to {sum} > 1")]
    RowSumExceedsOne { row: usize, sum: f64 },
    #[error("kernel is not strictly sub-stochastic: every row sums to 1")]
    NoDeficientRow,
    #[error("kernel support is reducible: village {to} is unreachable from village {from}")]
    Reducible { from: usize, to: usize },
    #[error("initial sleepers are supercritical in village {village}: sigma = {sigma} > lambda/(1+lambda) = {threshold}")]
    Supercritical {
        village: usize,
        sigma: f64,
        threshold: f64,
    },
    #[error("malformed model document: {0}")]
    Malformed(String),
    #[error("cannot read model file {path}: {message}")]
    Io { path: String, message: String },
}

/// Parameters of one VARW instance.
///
/// Construction only checks shapes; call [`ModelParams::validate`] (or
/// [`validate_model`]) before handing the parameters to the solver or the
/// simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    num_villages: usize,
    /// Row-major `|V| × |V|`.
    kernel: Vec<f64>,
    lambda: Vec<f64>,
    sigma: Vec<f64>,
    nu: Vec<f64>,
    labels: Option<Vec<String>>,
}

impl ModelParams {
    pub fn new(
        kernel: Vec<Vec<f64>>,
        lambda: Vec<f64>,
        sigma: Vec<f64>,
        nu: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let v = kernel.len();
        if v == 0 {
            return Err(ModelError::Empty);
        }
        let mut flat = Vec::with_capacity(v * v);
        for row in &kernel {
            if row.len() != v {
                return Err(ModelError::DimensionMismatch {
                    what: "kernel row",
                    expected: v,
                    found: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        for (what, vec) in [("lambda", &lambda), ("sigma", &sigma), ("nu", &nu)] {
            if vec.len() != v {
                return Err(ModelError::DimensionMismatch {
                    what,
                    expected: v,
                    found: vec.len(),
                });
            }
        }
        Ok(Self {
            num_villages: v,
            kernel: flat,
            lambda,
            sigma,
            nu,
            labels: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self, ModelError> {
        if labels.len() != self.num_villages {
            return Err(ModelError::DimensionMismatch {
                what: "labels",
                expected: self.num_villages,
                found: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Same kernel and sleep rates, different initial sleeper density.
    pub fn with_sigma(&self, sigma: Vec<f64>) -> Result<Self, ModelError> {
        check_len("sigma", self.num_villages, sigma.len())?;
        Ok(Self {
            sigma,
            ..self.clone()
        })
    }

    /// Same kernel and sleep rates, different immigrant density.
    pub fn with_nu(&self, nu: Vec<f64>) -> Result<Self, ModelError> {
        check_len("nu", self.num_villages, nu.len())?;
        Ok(Self { nu, ..self.clone() })
    }

    #[inline]
    pub fn num_villages(&self) -> usize {
        self.num_villages
    }

    #[inline]
    pub fn p(&self, x: usize, y: usize) -> f64 {
        self.kernel[x * self.num_villages + y]
    }

    #[inline]
    pub fn kernel_row(&self, x: usize) -> &[f64] {
        &self.kernel[x * self.num_villages..(x + 1) * self.num_villages]
    }

    pub fn kernel_rows(&self) -> Vec<Vec<f64>> {
        (0..self.num_villages)
            .map(|x| self.kernel_row(x).to_vec())
            .collect()
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// `λ_x / (1 + λ_x)`: the probability that a landlord notice says sleep.
    #[inline]
    pub fn sleep_probability(&self, x: usize) -> f64 {
        let l = self.lambda[x];
        l / (1.0 + l)
    }

    /// The critical profile `σᶜ_x = λ_x / (1 + λ_x)`.
    pub fn critical_profile(&self) -> Vec<f64> {
        (0..self.num_villages)
            .map(|x| self.sleep_probability(x))
            .collect()
    }

    pub fn is_subcritical(&self) -> bool {
        self.first_supercritical().is_none()
    }

    fn first_supercritical(&self) -> Option<ModelError> {
        (0..self.num_villages).find_map(|x| {
            let threshold = self.sleep_probability(x);
            (self.sigma[x] > threshold + SUBCRITICAL_TOL).then_some(ModelError::Supercritical {
                village: x,
                sigma: self.sigma[x],
                threshold,
            })
        })
    }

    /// Checks every model invariant. Subcriticality is only enforced when
    /// `require_subcritical` is set; the simulator runs without it.
    pub fn validate(&self, require_subcritical: bool) -> Result<(), ModelError> {
        let v = self.num_villages;
        for (i, &p) in self.kernel.iter().enumerate() {
            if !p.is_finite() {
                return Err(ModelError::NonFinite {
                    what: "kernel",
                    index: i,
                });
            }
            if p < 0.0 {
                return Err(ModelError::Negative {
                    what: "kernel",
                    index: i,
                    value: p,
                });
            }
        }
        for (what, vec) in [
            ("lambda", &self.lambda),
            ("sigma", &self.sigma),
            ("nu", &self.nu),
        ] {
            for (index, &value) in vec.iter().enumerate() {
                if !value.is_finite() {
                    return Err(ModelError::NonFinite { what, index });
                }
                if value < 0.0 {
                    return Err(ModelError::Negative { what, index, value });
                }
            }
        }
        if let Some((index, &value)) = self.sigma.iter().enumerate().find(|(_, &s)| s > 1.0) {
            return Err(ModelError::SigmaOutOfRange { index, value });
        }

        let mut deficient = false;
        for x in 0..v {
            let sum: f64 = self.kernel_row(x).iter().sum();
            if sum > 1.0 + ROW_SUM_TOL {
                return Err(ModelError::RowSumExceedsOne { row: x, sum });
            }
            if sum < 1.0 - ROW_SUM_TOL {
                deficient = true;
            }
        }
        if !deficient {
            return Err(ModelError::NoDeficientRow);
        }

        if let Some((from, to)) = self.unreachable_pair() {
            return Err(ModelError::Reducible { from, to });
        }

        if require_subcritical {
            if let Some(err) = self.first_supercritical() {
                return Err(err);
            }
        }
        Ok(())
    }

    /// First ordered pair `(x, y)`, `x ≠ y`, such that `y` cannot be reached
    /// from `x` along strictly positive kernel entries.
    fn unreachable_pair(&self) -> Option<(usize, usize)> {
        let v = self.num_villages;
        let mut reach: Vec<bool> = self.kernel.iter().map(|&p| p > 0.0).collect();
        for x in 0..v {
            reach[x * v + x] = true;
        }
        // Warshall
        for k in 0..v {
            for i in 0..v {
                if !reach[i * v + k] {
                    continue;
                }
                for j in 0..v {
                    if reach[k * v + j] {
                        reach[i * v + j] = true;
                    }
                }
            }
        }
        (0..v)
            .flat_map(|x| (0..v).map(move |y| (x, y)))
            .find(|&(x, y)| !reach[x * v + y])
    }

    /// `(mP)_x = Σ_y m_y P_{y,x}`.
    pub(crate) fn left_apply(&self, m: &[f64]) -> Vec<f64> {
        let v = self.num_villages;
        let mut out = vec![0.0; v];
        for (y, &my) in m.iter().enumerate() {
            if my == 0.0 {
                continue;
            }
            for (x, o) in out.iter_mut().enumerate() {
                *o += my * self.kernel[y * v + x];
            }
        }
        out
    }

    /// `(Pw)_x = Σ_y P_{x,y} w_y`.
    pub(crate) fn right_apply(&self, w: &[f64]) -> Vec<f64> {
        (0..self.num_villages)
            .map(|x| self.kernel_row(x).iter().zip(w).map(|(p, wy)| p * wy).sum())
            .collect()
    }
}

/// Returns the parameters unchanged if every invariant holds.
pub fn validate_model(
    params: ModelParams,
    require_subcritical: bool,
) -> Result<ModelParams, ModelError> {
    params.validate(require_subcritical)?;
    Ok(params)
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<(), ModelError> {
    if expected == found {
        Ok(())
    } else {
        Err(ModelError::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}

/// A real vector indexed by villages: odometer densities, fluxes, sleeper
/// densities.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MassVector(Vec<f64>);

impl MassVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sup_distance(&self, other: &[f64]) -> f64 {
        sup_distance(&self.0, other)
    }
}

impl From<Vec<f64>> for MassVector {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

impl std::ops::Deref for MassVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl fmt::Display for MassVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v:.12}")?;
        }
        f.write_str("]")
    }
}

/// `⌊density · n⌋`, snapping products within 1e-9 (relative) of an integer
/// onto it so that decimal inputs such as `0.29 · 100` count as 29.
pub fn scaled_floor(density: f64, n: u32) -> u64 {
    let product = density * n as f64;
    let nearest = product.round();
    if (product - nearest).abs() <= 1e-9 * nearest.abs().max(1.0) {
        nearest as u64
    } else {
        product.floor() as u64
    }
}

pub fn sup_norm(w: &[f64]) -> f64 {
    w.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub fn l1_norm(w: &[f64]) -> f64 {
    w.iter().map(|x| x.abs()).sum()
}

pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(p: f64, lambda: f64, sigma: f64, nu: f64) -> ModelParams {
        ModelParams::new(vec![vec![p]], vec![lambda], vec![sigma], vec![nu]).unwrap()
    }

    #[test]
    fn scalar_model_is_valid() {
        let m = single(0.5, 1.0, 0.2, 1.0);
        assert_eq!(validate_model(m.clone(), true), Ok(m));
    }

    #[test]
    fn stochastic_kernel_is_rejected() {
        let m = ModelParams::new(
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![1.0; 2],
            vec![0.0; 2],
            vec![0.0; 2],
        )
        .unwrap();
        assert_eq!(m.validate(false), Err(ModelError::NoDeficientRow));
    }

    #[test]
    fn reducible_kernel_is_rejected() {
        let m = ModelParams::new(
            vec![vec![0.0, 0.5], vec![0.0, 0.5]],
            vec![1.0; 2],
            vec![0.0; 2],
            vec![0.0; 2],
        )
        .unwrap();
        assert_eq!(
            m.validate(false),
            Err(ModelError::Reducible { from: 1, to: 0 })
        );
    }

    #[test]
    fn row_sum_above_one_is_rejected() {
        let m = ModelParams::new(
            vec![vec![0.6, 0.5], vec![0.2, 0.1]],
            vec![1.0; 2],
            vec![0.0; 2],
            vec![0.0; 2],
        )
        .unwrap();
        assert!(matches!(
            m.validate(false),
            Err(ModelError::RowSumExceedsOne { row: 0, .. })
        ));
    }

    #[test]
    fn row_sum_within_tolerance_is_accepted() {
        let m = ModelParams::new(
            vec![vec![0.0, 1.0 + 5e-13], vec![0.5, 0.0]],
            vec![1.0; 2],
            vec![0.0; 2],
            vec![0.0; 2],
        )
        .unwrap();
        assert!(m.validate(false).is_ok());
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            ModelParams::new(
                vec![vec![0.5, 0.0], vec![0.0]],
                vec![1.0; 2],
                vec![0.0; 2],
                vec![0.0; 2]
            ),
            Err(ModelError::DimensionMismatch {
                what: "kernel row",
                ..
            })
        ));
        assert!(matches!(
            ModelParams::new(vec![vec![0.5]], vec![1.0; 2], vec![0.0], vec![0.0]),
            Err(ModelError::DimensionMismatch { what: "lambda", .. })
        ));
        assert_eq!(
            ModelParams::new(vec![], vec![], vec![], vec![]),
            Err(ModelError::Empty)
        );
    }

    #[test]
    fn subcriticality_only_when_required() {
        let m = single(0.5, 1.0, 0.6, 1.0);
        assert!(m.validate(false).is_ok());
        assert!(matches!(
            m.validate(true),
            Err(ModelError::Supercritical { village: 0, .. })
        ));
        // exactly critical is fine
        assert!(single(0.5, 1.0, 0.5, 1.0).validate(true).is_ok());
    }

    #[test]
    fn bad_entries() {
        assert!(matches!(
            single(0.5, -1.0, 0.0, 0.0).validate(false),
            Err(ModelError::Negative { what: "lambda", .. })
        ));
        assert!(matches!(
            single(0.5, 1.0, 1.5, 0.0).validate(false),
            Err(ModelError::SigmaOutOfRange { .. })
        ));
        assert!(matches!(
            single(f64::NAN, 1.0, 0.0, 0.0).validate(false),
            Err(ModelError::NonFinite { what: "kernel", .. })
        ));
        assert!(matches!(
            single(-0.1, 1.0, 0.0, 0.0).validate(false),
            Err(ModelError::Negative { what: "kernel", .. })
        ));
    }

    #[test]
    fn zero_kernel_single_village_is_irreducible() {
        assert!(single(0.0, 1.0, 0.0, 0.25).validate(false).is_ok());
    }

    #[test]
    fn scaled_floor_snaps_decimal_products() {
        assert_eq!(scaled_floor(0.29, 100), 29);
        assert_eq!(scaled_floor(0.5, 3), 1);
        assert_eq!(scaled_floor(0.25, 4), 1);
        assert_eq!(scaled_floor(1.0, 7), 7);
        assert_eq!(scaled_floor(0.0, 7), 0);
        assert_eq!(scaled_floor(2.5, 1000), 2500);
        assert_eq!(scaled_floor(1.0 / 3.0, 10), 3);
    }

    #[test]
    fn left_and_right_application() {
        let m = ModelParams::new(
            vec![vec![0.0, 0.5], vec![0.4, 0.0]],
            vec![1.0; 2],
            vec![0.0; 2],
            vec![0.0; 2],
        )
        .unwrap();
        assert_eq!(m.left_apply(&[1.0, 2.0]), vec![0.8, 0.5]);
        assert_eq!(m.right_apply(&[1.0, 2.0]), vec![1.0, 0.4]);
    }
}
