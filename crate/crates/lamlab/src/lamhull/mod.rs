//! Iterated lamination hulls of sets of diagonal matrices.
//!
//! The layer is organized around four pieces:
//!
//! * [`boxset`] — the exact box-union representation of a set, one
//!   lamination step, iterated hulls, the level of the zero matrix, and
//!   maximal rank-one segments;
//! * [`oracle`] — an independent brute-force lattice model of the same
//!   iteration, kept around purely to cross-check the box algebra;
//! * [`staircase`] — point families of any prescribed level;
//! * [`witness`] — exact convex decompositions of the zero matrix,
//!   extracted from hull provenance and re-verifiable bottom-up.
//!
//! JSON parsing and printing of exact coordinates lives in [`coord`].

pub mod boxset;
pub mod coord;
pub mod oracle;
pub mod staircase;
pub mod witness;

pub use boxset::{
    lamination_hull, lamination_level, lamination_step, lamination_tower, maximal_interval,
    normalize, Box2, BoxOrigin, BoxSet, Interval, Level, Rat,
};
pub use staircase::{staircase, MAX_STAIRCASE_N};
pub use witness::{extract_witness, TopConfig, WitnessNode, WitnessTree};
