//! Dynamic-simulation Monte Carlo tree search for NoGo.
//!
//! A PUCT search whose per-move budget is cut short when learned
//! uncertainty predictors say further simulations are unlikely to change
//! the chosen move. The crate covers the rules engine, a small
//! three-headed conv net with manual backprop, the search and its traces,
//! uncertainty labelling, data generation, the stopping controller and a
//! match harness.

pub mod data;
pub mod ds;
pub mod error;
pub mod features;
pub mod game;
pub mod harness;
pub mod mcts;
pub mod nn;
pub mod pipeline;
pub mod seed;
pub mod tensor;
pub mod training;
pub mod uncertainty;

pub use error::{Error, Result};
pub use game::{GameState, Move, Player};
pub use mcts::{search, Evaluator, SearchConfig, SearchTrace};
pub use nn::{Architecture, Network};
pub use tensor::Tensor;
