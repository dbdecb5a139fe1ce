use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::limit::{solve_fixed_point, LimitSolution};
use crate::model::{compute_spectral, sup_distance, ModelParams, SpectralData};
use crate::simulator::{single_loop, stabilize, OrderPolicy, StabilizeOptions};
use crate::stacks::StackSource;

use super::stats::quantile;
use super::ExperimentError;

#[derive(Debug, Clone)]
pub struct LlnConfig {
    pub params: ModelParams,
    pub n_values: Vec<u32>,
    pub seeds: Vec<u64>,
    pub tol: f64,
    pub policy: OrderPolicy,
}

impl LlnConfig {
    pub fn new(params: ModelParams, n_values: Vec<u32>, seeds: Vec<u64>) -> Self {
        Self {
            params,
            n_values,
            seeds,
            tol: crate::limit::DEFAULT_TOL,
            policy: OrderPolicy::default(),
        }
    }
}

/// One CSV row: one village of one `(n, seed)` run. The three error
/// columns are per run and repeat across the villages of that run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LlnRow {
    pub experiment: &'static str,
    pub n: u32,
    pub seed: u64,
    pub village: usize,
    pub m_n: f64,
    pub s_n: f64,
    pub m_limit: f64,
    pub s_limit: f64,
    pub err_m_inf: f64,
    pub err_s_inf: f64,
    pub err_m_eta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub n: u32,
    pub seed: u64,
    pub m_star: Vec<u64>,
    pub s_star: Vec<u64>,
    pub err_m_inf: f64,
    pub err_s_inf: f64,
    pub err_m_eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub n: u32,
    pub metric: &'static str,
    pub median: f64,
    pub p90: f64,
    pub runs: usize,
}

#[derive(Debug, Clone)]
pub struct LlnReport {
    pub limit: LimitSolution,
    pub spectral: SpectralData,
    pub runs: Vec<RunSummary>,
    pub rows: Vec<LlnRow>,
    pub summary: Vec<SummaryRow>,
}

pub const METRICS: [&str; 3] = ["err_m_inf", "err_s_inf", "err_m_eta"];

impl LlnReport {
    pub fn write_rows<W: Write>(&self, out: W) -> Result<(), ExperimentError> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary<W: Write>(&self, out: W) -> Result<(), ExperimentError> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.summary {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Summary entry for `(n, metric)`.
    pub fn summary_for(&self, n: u32, metric: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.n == n && r.metric == metric)
    }

    /// Per-run values of `metric` at `n`.
    pub fn errors_at(&self, n: u32, metric: &str) -> Vec<f64> {
        self.runs
            .iter()
            .filter(|r| r.n == n)
            .map(|r| match metric {
                "err_m_inf" => r.err_m_inf,
                "err_s_inf" => r.err_s_inf,
                _ => r.err_m_eta,
            })
            .collect()
    }
}

/// Median and 90th percentile of each error metric at every `n`.
pub fn summarize(n_values: &[u32], runs: &[RunSummary]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    let mut seen = Vec::new();
    for &n in n_values {
        if seen.contains(&n) {
            continue;
        }
        seen.push(n);
        let at_n: Vec<&RunSummary> = runs.iter().filter(|r| r.n == n).collect();
        for metric in METRICS {
            let values: Vec<f64> = at_n
                .iter()
                .map(|r| match metric {
                    "err_m_inf" => r.err_m_inf,
                    "err_s_inf" => r.err_s_inf,
                    _ => r.err_m_eta,
                })
                .collect();
            if let (Some(median), Some(p90)) = (quantile(&values, 0.5), quantile(&values, 0.9)) {
                out.push(SummaryRow {
                    n,
                    metric,
                    median,
                    p90,
                    runs: values.len(),
                });
            }
        }
    }
    out
}

/// Solves the limit once, stabilizes every `(n, seed)` pair and compares
/// the scaled odometer and sleeper counts with `(m*, s*)`.
///
/// Each run must also reproduce itself through the single-loop odometer;
/// one failure fails the sweep.
pub fn run_lln(config: &LlnConfig) -> Result<LlnReport, ExperimentError> {
    if config.n_values.is_empty() || config.seeds.is_empty() {
        return Err(ExperimentError::Config(
            "need at least one n and one seed".into(),
        ));
    }
    if config.n_values.contains(&0) {
        return Err(ExperimentError::Config("n must be positive".into()));
    }
    let params = &config.params;
    params.validate(true)?;
    let spectral = compute_spectral(params)?;
    let limit = solve_fixed_point(params, &spectral, config.tol)?;

    let tasks: Vec<(u32, u64)> = config
        .n_values
        .iter()
        .flat_map(|&n| config.seeds.iter().map(move |&s| (n, s)))
        .collect();
    let runs = tasks
        .par_iter()
        .map(|&(n, seed)| run_one(params, &spectral, &limit, n, seed, config.policy))
        .collect::<Result<Vec<_>, _>>()?;

    let limit_ref = &limit;
    let rows = runs
        .iter()
        .flat_map(|r| {
            let nf = r.n as f64;
            (0..params.num_villages()).map(move |x| LlnRow {
                experiment: "lln",
                n: r.n,
                seed: r.seed,
                village: x,
                m_n: r.m_star[x] as f64 / nf,
                s_n: r.s_star[x] as f64 / nf,
                m_limit: limit_ref.m_star[x],
                s_limit: limit_ref.s_star[x],
                err_m_inf: r.err_m_inf,
                err_s_inf: r.err_s_inf,
                err_m_eta: r.err_m_eta,
            })
        })
        .collect();
    let summary = summarize(&config.n_values, &runs);
    Ok(LlnReport {
        limit,
        spectral,
        runs,
        rows,
        summary,
    })
}

fn run_one(
    params: &ModelParams,
    spectral: &SpectralData,
    limit: &LimitSolution,
    n: u32,
    seed: u64,
    policy: OrderPolicy,
) -> Result<RunSummary, ExperimentError> {
    let mut src = StackSource::new(params, n, seed).map_err(crate::simulator::SimError::from)?;
    let sim = stabilize(params, n, &mut src, StabilizeOptions::with_policy(policy))?;
    sim.check_mass_balance(params)?;
    let check = single_loop(params, n, &mut src, &sim.m_star)?;
    let s_star: Vec<i64> = sim.s_star.iter().map(|&s| s as i64).collect();
    if check.phi != sim.m_star || check.s != s_star {
        return Err(ExperimentError::Invariant(format!(
            "single-loop fixed point failed at n = {n}, seed = {seed}: Phi = {:?}, M* = {:?}, S = {:?}, S* = {:?}",
            check.phi, sim.m_star, check.s, sim.s_star
        )));
    }
    let nf = n as f64;
    let m_n: Vec<f64> = sim.m_star.iter().map(|&m| m as f64 / nf).collect();
    let s_n: Vec<f64> = sim.s_star.iter().map(|&s| s as f64 / nf).collect();
    Ok(RunSummary {
        n,
        seed,
        err_m_inf: sup_distance(&m_n, &limit.m_star),
        err_s_inf: sup_distance(&s_n, &limit.s_star),
        err_m_eta: spectral.eta_distance(&m_n, &limit.m_star),
        m_star: sim.m_star,
        s_star: sim.s_star,
    })
}
