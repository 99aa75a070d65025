//! Mallows Block Model toolkit.
//!
//! A Mallows Block Model over rankings of `m` items is described by a central
//! ranking `pi0`, a partition of the discordance stages `1..=m` into `d` blocks
//! and one spread parameter `phi_i ∈ [0, 1]` per block. The probability of a
//! ranking `pi` is proportional to `Π_i phi_i^{T_i(pi)}` where `T_i` sums the
//! per-stage discordance counts of block `i`.
//!
//! Modules, bottom-up:
//!
//! | module | contents |
//! |--------|----------|
//! | [`perm`] | rank-vector permutations, Kendall tau, discordance (inversion) vectors |
//! | [`tg`] | the truncated geometric distribution `TG(phi, k)` |
//! | [`expfam`] | one-parameter exponential families: KL, Chernoff bound, mean inversion |
//! | [`model`] | block partitions and the Mallows Block Model itself |
//! | [`estimate`] | central-ranking and spread estimators |
//! | [`divergence`] | KL / TV between models, exact and Monte Carlo |
//! | [`experiments`] | reproducible sample-complexity and lower-bound experiments |

pub mod divergence;
pub mod error;
pub mod estimate;
pub mod expfam;
pub mod experiments;
pub mod model;
pub mod numeric;
pub mod perm;
pub mod tg;

pub use error::{Error, Result};
pub use model::{BlockPartition, LogProb, MallowsBlockModel};
pub use perm::{DiscordanceVector, Permutation};
pub use tg::TruncatedGeometric;
