//! Anisotropic, cone-structured jump kernels and the numerical machinery
//! around them: deterministic quadrature of the nonlocal operator and of
//! tail quantities, thinning-based simulation of the jump process, and
//! Monte Carlo estimators for exit times, hitting probabilities, Harnack
//! quotients and Hölder exponents.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod geometry;
pub mod kernel;
pub mod numint;
pub mod quadrature;
pub mod region;
pub mod regvar;
pub mod simulate;
pub mod sphere;
pub mod vecmath;

pub use error::{Error, Result};
pub use kernel::{
    half_angle_from_chordal, nondegeneracy_matrix, tail_mass, validate_kernel, Cap, ConeSystem, JumpKernel,
    Modulator, RadialProfile, TailRule, UnitVector, ValidationGrid, ValidationReport,
};
pub use geometry::{build_chain, verify_chain, ChainConfig, Cone};
pub use region::{ExteriorData, Region};
pub use regvar::SlowlyVarying;
pub use simulate::{Ball, ExitSample, JumpSampler, MCEstimate, SimConfig};
pub use vecmath::Pt;
