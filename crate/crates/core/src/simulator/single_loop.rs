//! Single-loop odometer function.
//!
//! Given a hypothetical odometer `M`, route `⌊ν_x n⌋` immigrants plus every
//! particle sent by the first `M_y` airplane tickets of each village through
//! the taxi stacks once, then decide each visited house from its landlord
//! notices:
//!
//! ```text
//! I_x   arrivals at village x
//! A_x   houses hit by at least one arrival
//! Q_x   initially sleeping houses hit by none
//! T_x,i particles ever present in house i (arrivals + woken sleeper)
//! N_x,i notices read until T_x,i − 1 jumps happened
//! J_x   visited houses whose notice N_x,i + 1 is a jump
//!
//! Φ_x = ⌊σ_x n⌋ − Q_x + I_x − A_x + J_x
//! S_x = −M_x + ⌊σ_x n⌋ + I_x
//! ```

use crate::model::{scaled_floor, ModelError, ModelParams};
use crate::stacks::{aux_bernoulli, Destination, StackSource};

use super::{check_source, SimError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SingleLoopResult {
    /// `Φ⁽ⁿ⁾(M)`.
    pub phi: Vec<u64>,
    /// `S⁽ⁿ⁾(M)`; negative when `M` overshoots the arrivals.
    pub s: Vec<i64>,
    pub inflow: Vec<u64>,
    pub active: Vec<u64>,
    pub quiet: Vec<u64>,
    pub jumped: Vec<u64>,
}

#[derive(Clone, Copy)]
enum LastNotice {
    Stacks,
    /// Fresh Bernoulli(1/(1+λ_x)) per house from this seed.
    Fresh(u64),
}

pub fn single_loop(
    params: &ModelParams,
    n: u32,
    src: &mut StackSource,
    m: &[u64],
) -> Result<SingleLoopResult, SimError> {
    evaluate(params, n, src, m, LastNotice::Stacks)
}

/// `Φ̃⁽ⁿ⁾(M)`: like [`single_loop`], but the last notice of every visited
/// house is replaced by an independent Bernoulli(1/(1+λ_x)) drawn from
/// `aux_seed`. Landlord stacks are not read.
pub fn single_loop_tilde(
    params: &ModelParams,
    n: u32,
    src: &mut StackSource,
    m: &[u64],
    aux_seed: u64,
) -> Result<Vec<u64>, SimError> {
    evaluate(params, n, src, m, LastNotice::Fresh(aux_seed)).map(|r| r.phi)
}

fn evaluate(
    params: &ModelParams,
    n: u32,
    src: &mut StackSource,
    m: &[u64],
    last: LastNotice,
) -> Result<SingleLoopResult, SimError> {
    check_source(params, n, src)?;
    let v = params.num_villages();
    if m.len() != v {
        return Err(ModelError::DimensionMismatch {
            what: "odometer",
            expected: v,
            found: m.len(),
        }
        .into());
    }

    let mut inflow: Vec<u64> = params.nu().iter().map(|&nu| scaled_floor(nu, n)).collect();
    for (y, &jumps) in m.iter().enumerate() {
        for j in 1..=jumps {
            if let Destination::Village(x) = src.airplane(y, j)? {
                inflow[x] += 1;
            }
        }
    }

    let mut out = SingleLoopResult {
        phi: vec![0; v],
        s: vec![0; v],
        inflow: inflow.clone(),
        active: vec![0; v],
        quiet: vec![0; v],
        jumped: vec![0; v],
    };
    let mut hits = vec![0u32; n as usize];
    for x in 0..v {
        hits.iter_mut().for_each(|h| *h = 0);
        for j in 1..=inflow[x] {
            hits[(src.taxi(x, j)? - 1) as usize] += 1;
        }
        let sleepers = scaled_floor(params.sigma()[x], n).min(n as u64);
        let jump_prob = 1.0 / (1.0 + params.lambda()[x]);

        let (mut active, mut quiet, mut jumped) = (0u64, 0u64, 0u64);
        for (idx, &h) in hits.iter().enumerate() {
            let had_sleeper = (idx as u64) < sleepers;
            if h == 0 {
                quiet += had_sleeper as u64;
                continue;
            }
            active += 1;
            let house = idx as u32 + 1;
            let total = h as u64 + had_sleeper as u64;
            let last_is_jump = match last {
                LastNotice::Stacks => {
                    // scan to the (T − 1)-th jump, then read one more notice
                    let mut seen = 0u64;
                    let mut j = 0u64;
                    while seen < total - 1 {
                        j += 1;
                        seen += src.landlord(x, house, j)?.is_jump() as u64;
                    }
                    src.landlord(x, house, j + 1)?.is_jump()
                }
                LastNotice::Fresh(seed) => aux_bernoulli(seed, x, house, jump_prob),
            };
            jumped += last_is_jump as u64;
        }

        let phi =
            sleepers as i128 - quiet as i128 + inflow[x] as i128 - active as i128 + jumped as i128;
        debug_assert!(phi >= 0);
        out.phi[x] = phi as u64;
        out.s[x] = (-(m[x] as i128) + sleepers as i128 + inflow[x] as i128) as i64;
        out.active[x] = active;
        out.quiet[x] = quiet;
        out.jumped[x] = jumped;
    }
    Ok(out)
}
