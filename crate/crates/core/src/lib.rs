//! Village model of activated random walk (VARW).
//!
//! Each vertex `x` of a finite graph is replaced by a village of `n` houses.
//! Active particles jump out of their village according to a strictly
//! sub-stochastic kernel `P`, land in a uniform house of the destination
//! village, and a lone particle in village `x` falls asleep with
//! probability `λ_x/(1+λ_x)` per instruction. Sleepers wake when someone
//! lands on them. Mass leaking out of `P` guarantees stabilization.
//!
//! The crate provides:
//!
//! - [`model`]: parameters, validation, Perron data of `P` and the η-norm;
//! - [`limit`]: the continuum fixed-point map and its certified solver;
//! - [`stacks`]: seeded, memoized instruction stacks;
//! - [`simulator`]: stack-driven stabilization and the single-loop odometer;
//! - [`experiments`]: law-of-large-numbers sweeps and distributional checks.

pub mod experiments;
pub mod limit;
pub mod model;
pub mod simulator;
pub mod stacks;

pub use limit::{solve_fixed_point, LimitError, LimitSolution};
pub use model::{
    compute_spectral, validate_model, MassVector, ModelError, ModelParams, SpectralData,
    SpectralError,
};
pub use simulator::{
    init_config, single_loop, single_loop_tilde, stabilize, DiscreteConfig, OrderPolicy, SimError,
    SimResult, SingleLoopResult, StabilizeOptions,
};
pub use stacks::{Destination, Injection, Notice, StackError, StackSource};
