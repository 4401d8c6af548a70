//! Replicator dynamics on linear congestion games and network coordination
//! games.
//!
//! The crate provides:
//!
//! - the two game families and their expected cost/utility tables ([`game`]),
//! - the replicator vector field, an adaptive integrator on products of
//!   simplices, and limit-point detection ([`dynamics`]),
//! - conserved and monotone quantities of the flow together with drift
//!   measurement ([`invariants`]),
//! - Nash / weak-stability / spectral classification of fixed points
//!   ([`equilibria`]),
//! - regions of attraction: the exact Stag Hunt partition, polytope bounds
//!   for the `G(w)` family, the star-graph limit oracle, and Monte Carlo
//!   estimation of the average price of anarchy ([`basins`]).

#![forbid(unsafe_code)]

pub mod basins;
pub mod dynamics;
pub mod error;
pub mod equilibria;
pub mod game;
pub mod invariants;
pub mod profile;
pub mod star;

pub use error::{Error, Result};
pub use game::{
    balls_bins, g_w_game, star_stag_hunt, AnyGame, CongestionGame, Game, GameSpec,
    NetworkCoordinationGame, ObjectiveSense, ValueTable,
};
pub use profile::MixedProfile;
