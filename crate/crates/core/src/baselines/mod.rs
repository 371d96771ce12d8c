//! Classical reserving baselines: chain-ladder, Mack, bootstrap and the
//! over-dispersed Poisson GLM.

pub mod bootstrap;
pub mod chain_ladder;
pub mod glm;
pub mod mack;

pub use bootstrap::{bootstrap_chain_ladder, BootstrapConfig, BootstrapResult};
pub use chain_ladder::{chain_ladder, complete, development_factors, ChainLadder, DevelopmentFactors, RunOff};
pub use glm::{odp_glm, GlmFit};
pub use mack::{mack, MackConfig, MackResult};
