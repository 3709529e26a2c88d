//! Hierarchical Gaussian filtering with volatility updates that keep the
//! posterior precision positive over the whole parameter space.
//!
//! Modules, bottom up:
//!
//! * [`special`]: Lambert W₀ and stable logistic helpers.
//! * [`energy`]: the canonical variational energy and its derivatives.
//! * [`approx`]: classic and positivity-preserving Gaussian updates.
//! * [`oracle`]: quadrature ground truth and KL divergences.
//! * [`network`]: the filtering engine over a generalised node network.

pub mod approx;
pub mod energy;
mod gaussian;
pub mod network;
pub mod oracle;
pub mod special;

pub use approx::{
    blend_weight, canonical_mode, classic_update, expansion_l1, expansion_l2, moment_match, uhgf_update, Expansion,
    NegativePrecision, UpdateDiagnostics,
};
pub use energy::{CanonicalParams, EnergyComponents};
pub use gaussian::Gaussian;
