//! Nearest-neighbor Z^2 subshifts of finite type with single-site
//! fillability: admissibility checks, the penalty potential and its
//! range-one perturbations, the shell-by-shell repair construction, an
//! experiment harness for the stability inequalities, and strip entropy.

pub mod entropy;
pub mod error;
pub mod harness;
pub mod lattice;
pub mod potential;
pub mod repair;
pub mod sft;

pub use error::{Error, Result};
pub use lattice::{Rect, Site, SparsePatch, Symbol, Window};
pub use potential::{PerturbedPotential, RangeOnePerturbation};
pub use repair::{repair, FillRule, Repair, ShellDecomposition};
pub use sft::NnSft;
