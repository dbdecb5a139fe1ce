use std::fmt::Write as _;

use rayon::prelude::*;

use crate::limit::{phi, sleep_profile};
use crate::model::{l1_norm, ModelParams};
use crate::simulator::{single_loop, SimError};
use crate::stacks::{derive_seed, StackSource};

use super::stats::binomial_sd;
use super::{format_u64s, ExperimentError};

#[derive(Debug, Clone)]
pub struct ConcentrationConfig {
    pub params: ModelParams,
    pub n: u32,
    /// The odometer `M` at which `Φ⁽ⁿ⁾` and `S⁽ⁿ⁾` are evaluated.
    pub m: Vec<u64>,
    /// Deviation threshold.
    pub a: f64,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationReport {
    pub n: u32,
    pub m: Vec<u64>,
    pub a: f64,
    pub trials: usize,
    pub seed: u64,
    /// Fraction of trials with `‖s⁽ⁿ⁾(M/n) − s(M/n)‖_∞ ≥ a`.
    pub freq_s: f64,
    pub bound_s: f64,
    pub slack_s: f64,
    /// Fraction of trials with `‖φ⁽ⁿ⁾(M/n) − φ(M/n)‖_∞ ≥ a`.
    pub freq_phi: f64,
    pub bound_phi: f64,
    pub slack_phi: f64,
    pub max_dev_s: f64,
    pub max_dev_phi: f64,
}

impl ConcentrationReport {
    pub fn violated_s(&self) -> bool {
        self.freq_s > self.bound_s + self.slack_s
    }

    pub fn violated_phi(&self) -> bool {
        self.freq_phi > self.bound_phi + self.slack_phi
    }

    pub fn violated(&self) -> bool {
        self.violated_s() || self.violated_phi()
    }

    /// `key: value` lines.
    pub fn to_report_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment: concentration");
        let _ = writeln!(s, "n: {}", self.n);
        let _ = writeln!(s, "M: {}", format_u64s(&self.m));
        let _ = writeln!(s, "a: {}", self.a);
        let _ = writeln!(s, "trials: {}", self.trials);
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "freq_s: {}", self.freq_s);
        let _ = writeln!(s, "bound_s: {}", self.bound_s);
        let _ = writeln!(s, "slack_s: {}", self.slack_s);
        let _ = writeln!(s, "violated_s: {}", self.violated_s());
        let _ = writeln!(s, "max_dev_s: {}", self.max_dev_s);
        let _ = writeln!(s, "freq_phi: {}", self.freq_phi);
        let _ = writeln!(s, "bound_phi: {}", self.bound_phi);
        let _ = writeln!(s, "slack_phi: {}", self.slack_phi);
        let _ = writeln!(s, "violated_phi: {}", self.violated_phi());
        let _ = writeln!(s, "max_dev_phi: {}", self.max_dev_phi);
        s
    }
}

/// Right-hand sides of the single-loop tail bounds, `(sleepers, odometer)`:
///
/// ```text
/// 2|V| exp(−2 (an − 2)₊² / ‖M‖₁)
/// 4|V| exp(−2 (an − ‖ν‖₁ − ‖M‖₁/n − 2)₊² / (81 (n + ‖ν‖₁ n + an + ‖M‖₁)))
/// ```
///
/// With `M = 0` the first bound degenerates: it is `0` when `an > 2` and
/// `2|V|` otherwise.
pub fn concentration_bounds(params: &ModelParams, n: u32, m: &[u64], a: f64) -> (f64, f64) {
    let v = params.num_villages() as f64;
    let nf = n as f64;
    let m1: f64 = m.iter().map(|&x| x as f64).sum();
    let nu1 = l1_norm(params.nu());
    let an = a * nf;

    let dev_s = (an - 2.0).max(0.0);
    let bound_s = if dev_s == 0.0 {
        2.0 * v
    } else if m1 == 0.0 {
        0.0
    } else {
        2.0 * v * (-2.0 * dev_s * dev_s / m1).exp()
    };

    let dev_phi = (an - nu1 - m1 / nf - 2.0).max(0.0);
    let denom = 81.0 * (nf + nu1 * nf + an + m1);
    let bound_phi = 4.0 * v * (-2.0 * dev_phi * dev_phi / denom).exp();
    (bound_s, bound_phi)
}

/// Evaluates the single-loop functionals at a fixed `M` over independent
/// stack realizations and compares their tail frequencies with the bounds.
/// A frequency counts as a violation only if it exceeds its bound by more
/// than three binomial standard deviations.
pub fn run_concentration(
    config: &ConcentrationConfig,
) -> Result<ConcentrationReport, ExperimentError> {
    let params = &config.params;
    if !(config.a > 0.0 && config.a.is_finite()) {
        return Err(ExperimentError::Config(format!(
            "threshold a must be positive, got {}",
            config.a
        )));
    }
    if config.trials == 0 {
        return Err(ExperimentError::InsufficientTrials(
            "concentration needs at least one trial".into(),
        ));
    }
    if config.n == 0 {
        return Err(ExperimentError::Config("n must be positive".into()));
    }
    params.validate(true)?;
    if config.m.len() != params.num_villages() {
        return Err(ExperimentError::Config(format!(
            "M has {} entries, model has {} villages",
            config.m.len(),
            params.num_villages()
        )));
    }

    let nf = config.n as f64;
    let scaled: Vec<f64> = config.m.iter().map(|&x| x as f64 / nf).collect();
    let s_cont = sleep_profile(params, &scaled)?;
    let phi_cont = phi(params, &scaled)?;

    let deviations = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let mut src = StackSource::new(params, config.n, derive_seed(config.seed, t as u64))
                .map_err(SimError::from)?;
            let r = single_loop(params, config.n, &mut src, &config.m)?;
            let dev_s =
                r.s.iter()
                    .zip(s_cont.iter())
                    .fold(0.0f64, |acc, (&s, c)| acc.max((s as f64 / nf - c).abs()));
            let dev_phi = r
                .phi
                .iter()
                .zip(phi_cont.iter())
                .fold(0.0f64, |acc, (&p, c)| acc.max((p as f64 / nf - c).abs()));
            Ok((dev_s, dev_phi))
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;

    let trials = config.trials as f64;
    let freq_s = deviations.iter().filter(|d| d.0 >= config.a).count() as f64 / trials;
    let freq_phi = deviations.iter().filter(|d| d.1 >= config.a).count() as f64 / trials;
    let (bound_s, bound_phi) = concentration_bounds(params, config.n, &config.m, config.a);
    Ok(ConcentrationReport {
        n: config.n,
        m: config.m.clone(),
        a: config.a,
        trials: config.trials,
        seed: config.seed,
        freq_s,
        bound_s,
        slack_s: 3.0 * binomial_sd(bound_s, config.trials),
        freq_phi,
        bound_phi,
        slack_phi: 3.0 * binomial_sd(bound_phi, config.trials),
        max_dev_s: deviations.iter().map(|d| d.0).fold(0.0, f64::max),
        max_dev_phi: deviations.iter().map(|d| d.1).fold(0.0, f64::max),
    })
}
