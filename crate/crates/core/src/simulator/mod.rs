//! Discrete VARW on `V × [n]`, driven entirely by instruction stacks.
//!
//! [`stabilize`] topples active houses until every house holds at most one
//! sleeping particle. [`single_loop`] evaluates the single-loop odometer
//! `Φ⁽ⁿ⁾(M)` for a hypothetical odometer `M`; on a source that has already
//! been stabilized, `Φ⁽ⁿ⁾(M*) = M*`.
//!
//! Real-time clocks are never simulated: the stable configuration and the
//! odometer do not depend on the toppling order.

mod schedule;
mod single_loop;

use thiserror::Error;

use crate::model::{scaled_floor, ModelError, ModelParams};
use crate::stacks::{Destination, Notice, StackError, StackSource};

use schedule::{Fifo, LowestIndex, RoundRobin, Schedule};

pub use schedule::OrderPolicy;
pub use single_loop::{single_loop, single_loop_tilde, SingleLoopResult};

/// Landlord notices a single stabilization may execute.
pub const DEFAULT_MAX_STEPS: u64 = 1_000_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Stack(#[from] StackError),
    #[error("stabilization exceeded {max_steps} instruction executions")]
    StepCap { max_steps: u64 },
    #[error("stack source was built for n = {source_n}, run asked for n = {n}")]
    HouseCountMismatch { source_n: u32, n: u32 },
    #[error("invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct House {
    pub count: u32,
    /// Meaningful only when `count == 1`.
    pub sleeping: bool,
}

impl House {
    #[inline]
    pub fn is_active(self) -> bool {
        self.count >= 2 || (self.count == 1 && !self.sleeping)
    }

    #[inline]
    fn receive(&mut self) {
        self.count += 1;
        self.sleeping = false;
    }
}

/// Particle counts of every house, village by village.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscreteConfig {
    n: u32,
    villages: Vec<Vec<House>>,
}

impl DiscreteConfig {
    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn num_villages(&self) -> usize {
        self.villages.len()
    }

    /// House `i ∈ 1..=n` of village `x`.
    pub fn house(&self, x: usize, i: u32) -> House {
        self.villages[x][(i - 1) as usize]
    }

    pub fn houses(&self, x: usize) -> &[House] {
        &self.villages[x]
    }

    pub fn sleepers(&self, x: usize) -> u64 {
        self.villages[x]
            .iter()
            .filter(|h| h.count == 1 && h.sleeping)
            .count() as u64
    }

    pub fn particles(&self, x: usize) -> u64 {
        self.villages[x].iter().map(|h| h.count as u64).sum()
    }

    pub fn active_houses(&self) -> usize {
        self.villages
            .iter()
            .flatten()
            .filter(|h| h.is_active())
            .count()
    }

    /// Every house is empty or holds one sleeping particle.
    pub fn is_stable(&self) -> bool {
        self.villages
            .iter()
            .flatten()
            .all(|h| h.count == 0 || (h.count == 1 && h.sleeping))
    }
}

/// Instructions consumed per village.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Consumption {
    pub airplane: Vec<u64>,
    pub taxi: Vec<u64>,
    /// Summed over the houses of the village.
    pub landlord: Vec<u64>,
}

impl Consumption {
    fn new(v: usize) -> Self {
        Self {
            airplane: vec![0; v],
            taxi: vec![0; v],
            landlord: vec![0; v],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimResult {
    pub n: u32,
    /// Jumps out of each village during stabilization.
    pub m_star: Vec<u64>,
    /// Sleeping particles per village in the final configuration.
    pub s_star: Vec<u64>,
    /// Arrivals at each village's airport, immigrants included.
    pub inflow: Vec<u64>,
    pub consumed: Consumption,
    pub final_config: DiscreteConfig,
}

impl SimResult {
    /// `S*_x = ⌊σ_x n⌋ + inflow_x − M*_x` for every village, plus the
    /// consumption identities and stability of the final configuration.
    pub fn check_mass_balance(&self, params: &ModelParams) -> Result<(), SimError> {
        for x in 0..self.m_star.len() {
            let initial = scaled_floor(params.sigma()[x], self.n);
            let lhs = self.s_star[x] as i128;
            let rhs = initial as i128 + self.inflow[x] as i128 - self.m_star[x] as i128;
            if lhs != rhs {
                return Err(SimError::Invariant(format!(
                    "mass balance in village {x}: S* = {lhs}, floor(sigma n) + inflow - M* = {rhs}"
                )));
            }
            if self.consumed.taxi[x] != self.inflow[x] {
                return Err(SimError::Invariant(format!(
                    "village {x}: {} taxi tickets used for {} arrivals",
                    self.consumed.taxi[x], self.inflow[x]
                )));
            }
            if self.consumed.airplane[x] != self.m_star[x] {
                return Err(SimError::Invariant(format!(
                    "village {x}: {} airplane tickets used for {} jumps",
                    self.consumed.airplane[x], self.m_star[x]
                )));
            }
        }
        if !self.final_config.is_stable() {
            return Err(SimError::Invariant(
                "final configuration is not stable".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StabilizeOptions {
    pub policy: OrderPolicy,
    pub max_steps: u64,
}

impl Default for StabilizeOptions {
    fn default() -> Self {
        Self {
            policy: OrderPolicy::default(),
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

impl StabilizeOptions {
    pub fn with_policy(policy: OrderPolicy) -> Self {
        Self {
            policy,
            ..Self::default()
        }
    }
}

fn check_source(params: &ModelParams, n: u32, src: &StackSource) -> Result<(), SimError> {
    if src.n() != n {
        return Err(SimError::HouseCountMismatch {
            source_n: src.n(),
            n,
        });
    }
    if src.num_villages() != params.num_villages() {
        return Err(ModelError::DimensionMismatch {
            what: "stack source villages",
            expected: params.num_villages(),
            found: src.num_villages(),
        }
        .into());
    }
    Ok(())
}

/// Initial sleepers in the lowest houses, then the immigrants by taxi.
/// Returns the configuration and the number of immigrants per village.
fn initialize(
    params: &ModelParams,
    n: u32,
    src: &mut StackSource,
) -> Result<(DiscreteConfig, Vec<u64>), SimError> {
    check_source(params, n, src)?;
    let v = params.num_villages();
    let mut villages = Vec::with_capacity(v);
    let mut immigrants = Vec::with_capacity(v);
    for x in 0..v {
        let mut houses = vec![House::default(); n as usize];
        let sleepers = scaled_floor(params.sigma()[x], n).min(n as u64) as usize;
        for h in &mut houses[..sleepers] {
            *h = House {
                count: 1,
                sleeping: true,
            };
        }
        let arrivals = scaled_floor(params.nu()[x], n);
        for j in 1..=arrivals {
            let i = src.taxi(x, j)?;
            houses[(i - 1) as usize].receive();
        }
        villages.push(houses);
        immigrants.push(arrivals);
    }
    Ok((DiscreteConfig { n, villages }, immigrants))
}

/// The configuration right after immigration, before any toppling.
pub fn init_config(
    params: &ModelParams,
    n: u32,
    src: &mut StackSource,
) -> Result<DiscreteConfig, SimError> {
    initialize(params, n, src).map(|(config, _)| config)
}

/// Runs the stack dynamics to a stable configuration.
///
/// One step reveals the next landlord notice of the selected active house.
/// A sleep notice puts a lone particle to sleep and is a no-op otherwise; a
/// jump notice sends one particle through the next airplane ticket of its
/// village and, unless it hits the graveyard, the next taxi ticket of the
/// destination village, waking whatever sleeps there.
pub fn stabilize(
    params: &ModelParams,
    n: u32,
    src: &mut StackSource,
    options: StabilizeOptions,
) -> Result<SimResult, SimError> {
    let v = params.num_villages();
    match options.policy {
        OrderPolicy::FifoHouseQueue => run(params, n, src, options.max_steps, Fifo::default()),
        OrderPolicy::VillageRoundRobin => {
            run(params, n, src, options.max_steps, RoundRobin::new(v))
        }
        OrderPolicy::LowestIndexFirst => {
            run(params, n, src, options.max_steps, LowestIndex::default())
        }
    }
}

fn run<S: Schedule>(
    params: &ModelParams,
    n: u32,
    src: &mut StackSource,
    max_steps: u64,
    mut schedule: S,
) -> Result<SimResult, SimError> {
    let v = params.num_villages();
    let (mut config, immigrants) = initialize(params, n, src)?;
    let mut consumed = Consumption::new(v);
    let mut m_star = vec![0u64; v];
    let mut inflow = immigrants.clone();
    consumed.taxi.copy_from_slice(&immigrants);
    // notices already revealed per house
    let mut revealed: Vec<Vec<u32>> = vec![vec![0; n as usize]; v];

    for (x, houses) in config.villages.iter().enumerate() {
        for (i, h) in houses.iter().enumerate() {
            if h.is_active() {
                schedule.push(x as u32, i as u32);
            }
        }
    }

    let mut steps = 0u64;
    while let Some((xu, iu)) = schedule.pop() {
        let (x, i) = (xu as usize, iu as usize);
        steps += 1;
        if steps > max_steps {
            return Err(SimError::StepCap { max_steps });
        }
        revealed[x][i] += 1;
        consumed.landlord[x] += 1;
        let notice = src.landlord(x, iu + 1, revealed[x][i] as u64)?;

        let house = &mut config.villages[x][i];
        match notice {
            Notice::Sleep => {
                if house.count == 1 {
                    house.sleeping = true;
                } else {
                    schedule.push(xu, iu);
                }
            }
            Notice::Jump => {
                house.count -= 1;
                if house.is_active() {
                    schedule.push(xu, iu);
                }
                m_star[x] += 1;
                consumed.airplane[x] += 1;
                if let Destination::Village(y) = src.airplane(x, consumed.airplane[x])? {
                    consumed.taxi[y] += 1;
                    inflow[y] += 1;
                    let k = src.taxi(y, consumed.taxi[y])?;
                    let target = &mut config.villages[y][(k - 1) as usize];
                    let was_active = target.is_active();
                    target.receive();
                    if !was_active {
                        schedule.push(y as u32, k - 1);
                    }
                }
            }
        }
    }

    let s_star = (0..v).map(|x| config.sleepers(x)).collect();
    let result = SimResult {
        n,
        m_star,
        s_star,
        inflow,
        consumed,
        final_config: config,
    };
    result.check_mass_balance(params)?;
    Ok(result)
}
