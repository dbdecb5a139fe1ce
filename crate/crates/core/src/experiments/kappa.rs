use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::model::{scaled_floor, ModelParams};
use crate::simulator::{single_loop, single_loop_tilde, SimError};
use crate::stacks::{derive_seed, StackSource};

use super::stats::{chi_square_two_sample, ChiSquareOutcome};
use super::{format_u64s, ExperimentError};

/// Minimum expected count per pooled chi-square bin.
pub const MIN_EXPECTED: f64 = 5.0;

/// How the samples of `Φ` and `Φ̃` share randomness.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Coupling {
    /// Fresh stacks for each sample of either functional.
    #[default]
    Independent,
    /// Trial `t` evaluates both functionals on the same airplane and taxi
    /// stacks.
    Shared,
}

impl Coupling {
    pub fn name(self) -> &'static str {
        match self {
            Coupling::Independent => "independent",
            Coupling::Shared => "shared",
        }
    }
}

#[derive(Debug, Clone)]
pub struct KappaConfig {
    pub params: ModelParams,
    pub n: u32,
    pub m: Vec<u64>,
    pub trials: usize,
    pub seed: u64,
    pub coupling: Coupling,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KappaVillage {
    pub village: usize,
    pub mean_phi: f64,
    pub mean_phi_tilde: f64,
    pub test: ChiSquareOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KappaReport {
    pub n: u32,
    pub m: Vec<u64>,
    pub trials: usize,
    pub seed: u64,
    pub coupling: Coupling,
    pub villages: Vec<KappaVillage>,
}

impl KappaReport {
    pub fn min_p_value(&self) -> f64 {
        self.villages
            .iter()
            .map(|v| v.test.p_value)
            .fold(1.0, f64::min)
    }

    /// `key: value` lines.
    pub fn to_report_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment: kappa");
        let _ = writeln!(s, "n: {}", self.n);
        let _ = writeln!(s, "M: {}", format_u64s(&self.m));
        let _ = writeln!(s, "trials: {}", self.trials);
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "coupling: {}", self.coupling.name());
        for v in &self.villages {
            let x = v.village;
            let _ = writeln!(s, "village_{x}_mean_phi: {}", v.mean_phi);
            let _ = writeln!(s, "village_{x}_mean_phi_tilde: {}", v.mean_phi_tilde);
            let _ = writeln!(s, "village_{x}_chi2: {}", v.test.statistic);
            let _ = writeln!(s, "village_{x}_bins: {}", v.test.bins);
            let _ = writeln!(s, "village_{x}_dof: {}", v.test.dof);
            let _ = writeln!(s, "village_{x}_p_value: {}", v.test.p_value);
        }
        let _ = writeln!(s, "min_p_value: {}", self.min_p_value());
        s
    }
}

fn check_common(
    params: &ModelParams,
    n: u32,
    m: &[u64],
    trials: usize,
) -> Result<(), ExperimentError> {
    if trials == 0 {
        return Err(ExperimentError::InsufficientTrials(
            "need at least one trial".into(),
        ));
    }
    if n == 0 {
        return Err(ExperimentError::Config("n must be positive".into()));
    }
    params.validate(true)?;
    if m.len() != params.num_villages() {
        return Err(ExperimentError::Config(format!(
            "M has {} entries, model has {} villages",
            m.len(),
            params.num_villages()
        )));
    }
    Ok(())
}

fn source(params: &ModelParams, n: u32, seed: u64) -> Result<StackSource, ExperimentError> {
    Ok(StackSource::new(params, n, seed).map_err(SimError::from)?)
}

/// Two-sample chi-square comparison of `Φ⁽ⁿ⁾(M)` against `Φ̃⁽ⁿ⁾(M)`, one
/// test per village.
pub fn run_kappa_equivalence(config: &KappaConfig) -> Result<KappaReport, ExperimentError> {
    let params = &config.params;
    check_common(params, config.n, &config.m, config.trials)?;
    let (n, m) = (config.n, &config.m);

    let samples = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| {
            let base = derive_seed(config.seed, t);
            let aux_seed = derive_seed(base, 2);
            let phi = single_loop(params, n, &mut source(params, n, derive_seed(base, 0))?, m)?.phi;
            let tilde = match config.coupling {
                Coupling::Shared => single_loop_tilde(
                    params,
                    n,
                    &mut source(params, n, derive_seed(base, 0))?,
                    m,
                    aux_seed,
                )?,
                Coupling::Independent => single_loop_tilde(
                    params,
                    n,
                    &mut source(params, n, derive_seed(base, 1))?,
                    m,
                    aux_seed,
                )?,
            };
            Ok((phi, tilde))
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;

    let villages = (0..params.num_villages())
        .map(|x| {
            let a: Vec<u64> = samples.iter().map(|s| s.0[x]).collect();
            let b: Vec<u64> = samples.iter().map(|s| s.1[x]).collect();
            let test = chi_square_two_sample(&a, &b, MIN_EXPECTED).ok_or_else(|| {
                ExperimentError::InsufficientTrials(format!(
                    "{} trials cannot fill a chi-square bin",
                    config.trials
                ))
            })?;
            let mean = |v: &[u64]| v.iter().map(|&x| x as f64).sum::<f64>() / v.len() as f64;
            Ok(KappaVillage {
                village: x,
                mean_phi: mean(&a),
                mean_phi_tilde: mean(&b),
                test,
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;

    Ok(KappaReport {
        n,
        m: m.clone(),
        trials: config.trials,
        seed: config.seed,
        coupling: config.coupling,
        villages,
    })
}

#[derive(Debug, Clone)]
pub struct ConditionalMeanConfig {
    pub params: ModelParams,
    pub n: u32,
    pub m: Vec<u64>,
    pub trials: usize,
    pub seed: u64,
    /// Influx values observed fewer times than this are dropped.
    pub min_samples: usize,
    pub village: usize,
}

impl ConditionalMeanConfig {
    pub fn new(params: ModelParams, n: u32, m: Vec<u64>, trials: usize, seed: u64) -> Self {
        Self {
            params,
            n,
            m,
            trials,
            seed,
            min_samples: 200,
            village: 0,
        }
    }
}

/// Empirical `E[Φ_x | I_x = u]` next to its closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluxBin {
    pub u: u64,
    pub count: usize,
    pub mean: f64,
    pub std_err: f64,
    pub expected: f64,
}

impl InfluxBin {
    /// Within three standard errors. A zero standard error demands an
    /// exact match up to rounding.
    pub fn within(&self) -> bool {
        let dev = (self.mean - self.expected).abs();
        dev <= 3.0 * self.std_err || dev <= 1e-9 * (1.0 + self.expected.abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalMeanReport {
    pub n: u32,
    pub village: usize,
    pub trials: usize,
    pub bins: Vec<InfluxBin>,
}

impl ConditionalMeanReport {
    pub fn all_within(&self) -> bool {
        !self.bins.is_empty() && self.bins.iter().all(InfluxBin::within)
    }

    pub fn to_report_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment: conditional_mean");
        let _ = writeln!(s, "n: {}", self.n);
        let _ = writeln!(s, "village: {}", self.village);
        let _ = writeln!(s, "trials: {}", self.trials);
        let _ = writeln!(s, "retained_u: {}", self.bins.len());
        for b in &self.bins {
            let _ = writeln!(
                s,
                "u_{}: count={} mean={} expected={} std_err={} within={}",
                b.u,
                b.count,
                b.mean,
                b.expected,
                b.std_err,
                b.within()
            );
        }
        let _ = writeln!(s, "all_within: {}", self.all_within());
        s
    }
}

/// `n(⌊σn⌋/n − λ/(1+λ))(1 − (1 − 1/n)^u) + u`.
pub fn conditional_mean_formula(params: &ModelParams, x: usize, n: u32, u: u64) -> f64 {
    let nf = n as f64;
    let floor = scaled_floor(params.sigma()[x], n) as f64;
    let hit = -(u as f64 * (-1.0 / nf).ln_1p()).exp_m1();
    nf * (floor / nf - params.sleep_probability(x)) * hit + u as f64
}

/// Groups single-loop samples of `Φ_x(M)` by the realized influx `I_x` and
/// compares each well-populated group mean with the closed form.
pub fn run_conditional_mean(
    config: &ConditionalMeanConfig,
) -> Result<ConditionalMeanReport, ExperimentError> {
    let params = &config.params;
    check_common(params, config.n, &config.m, config.trials)?;
    let x = config.village;
    if x >= params.num_villages() {
        return Err(ExperimentError::Config(format!("village {x} out of range")));
    }
    let (n, m) = (config.n, &config.m);

    let samples = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut src = source(params, n, derive_seed(config.seed, t))?;
            let r = single_loop(params, n, &mut src, m)?;
            Ok((r.inflow[x], r.phi[x]))
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;

    let mut groups: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for (u, phi) in samples {
        groups.entry(u).or_default().push(phi as f64);
    }
    let bins: Vec<InfluxBin> = groups
        .into_iter()
        .filter(|(_, v)| v.len() >= config.min_samples.max(2))
        .map(|(u, v)| {
            let k = v.len() as f64;
            let mean = v.iter().sum::<f64>() / k;
            let var = v.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (k - 1.0);
            InfluxBin {
                u,
                count: v.len(),
                mean,
                std_err: (var / k).sqrt(),
                expected: conditional_mean_formula(params, x, n, u),
            }
        })
        .collect();
    if bins.is_empty() {
        return Err(ExperimentError::InsufficientTrials(format!(
            "no influx value reached {} samples",
            config.min_samples
        )));
    }
    Ok(ConditionalMeanReport {
        n,
        village: x,
        trials: config.trials,
        bins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(lambda: f64, nu: f64) -> ModelParams {
        ModelParams::new(vec![vec![0.5]], vec![lambda], vec![0.0], vec![nu]).unwrap()
    }

    #[test]
    fn zero_sleep_rate_shared_is_identical() {
        let config = KappaConfig {
            params: scalar(0.0, 0.4),
            n: 30,
            m: vec![10],
            trials: 400,
            seed: 5,
            coupling: Coupling::Shared,
        };
        let r = run_kappa_equivalence(&config).unwrap();
        let v = &r.villages[0];
        assert_eq!(v.mean_phi, v.mean_phi_tilde);
        assert_eq!(v.test.statistic, 0.0);
        assert!((v.test.p_value - 1.0).abs() < 1e-12);
        assert!(r.to_report_string().contains("coupling: shared"));
    }

    #[test]
    fn empty_loop_pools_to_one_bin() {
        let config = KappaConfig {
            params: scalar(1.0, 0.0),
            n: 10,
            m: vec![0],
            trials: 50,
            seed: 1,
            coupling: Coupling::Independent,
        };
        let r = run_kappa_equivalence(&config).unwrap();
        assert_eq!(r.villages[0].test.bins, 1);
        assert_eq!(r.min_p_value(), 1.0);
    }

    #[test]
    fn kappa_rejects_bad_input() {
        let mut config = KappaConfig {
            params: scalar(1.0, 0.5),
            n: 10,
            m: vec![3],
            trials: 0,
            seed: 1,
            coupling: Coupling::Independent,
        };
        assert!(matches!(
            run_kappa_equivalence(&config),
            Err(ExperimentError::InsufficientTrials(_))
        ));
        config.trials = 2;
        assert!(matches!(
            run_kappa_equivalence(&config),
            Err(ExperimentError::InsufficientTrials(_))
        ));
    }

    #[test]
    fn formula_limits() {
        let p = ModelParams::new(vec![vec![0.5]], vec![1.0], vec![0.3], vec![0.5]).unwrap();
        assert_eq!(conditional_mean_formula(&p, 0, 100, 0), 0.0);
        // one arrival: 30 sleepers of 100, jump prob 1/2
        let one = conditional_mean_formula(&p, 0, 100, 1);
        assert!((one - ((0.3 - 0.5) + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn deterministic_influx_without_jumps_matches_exactly() {
        // λ = 0 and no sleepers: every arrival leaves, Φ = I
        let p = ModelParams::new(vec![vec![0.0]], vec![0.0], vec![0.0], vec![0.5]).unwrap();
        let mut config = ConditionalMeanConfig::new(p, 20, vec![0], 50, 3);
        config.min_samples = 10;
        let r = run_conditional_mean(&config).unwrap();
        assert_eq!(r.bins.len(), 1);
        assert_eq!(r.bins[0].u, 10);
        assert_eq!(r.bins[0].mean, 10.0);
        assert!(r.all_within());
    }

    #[test]
    fn conditional_mean_needs_populated_bins() {
        let p = ModelParams::new(vec![vec![0.5]], vec![1.0], vec![0.3], vec![0.5]).unwrap();
        let config = ConditionalMeanConfig::new(p, 100, vec![100], 20, 1);
        assert!(matches!(
            run_conditional_mean(&config),
            Err(ExperimentError::InsufficientTrials(_))
        ));
    }
}
