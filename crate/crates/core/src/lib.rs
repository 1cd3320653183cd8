//! Affine-group averaging, exact pattern counting and inequality
//! verification over small finite fields GF(p^k).
//!
//! The crate is organized around the diagonal action of the affine
//! group {x ↦ ux + v} on F^m:
//!
//! - [`field`]: exact arithmetic, canonical element enumeration and
//!   discrete-log tables;
//! - [`space`]: subsets, product sets and grid functions with the
//!   Koopman action and the projections P_A, P_M;
//! - [`averages`]: averaging identities and deviation bounds, emitted
//!   as verdict records;
//! - [`patterns`]: exact counting of {p(x)+y, xy}, {v, u+v, uv} and
//!   {u, v, u+v, uv} patterns with big-integer size thresholds;
//! - [`colouring`]: the colour-class schedule, factorized product
//!   measures and monochromatic pattern search;
//! - [`report`]: verdict records and their serialization;
//! - [`rng`]: the seeded generator behind every randomised input.

pub mod averages;
pub mod colouring;
pub mod field;
pub mod patterns;
pub mod report;
pub mod rng;
pub mod space;

pub use field::{Elem, Field, FieldError, Poly};
pub use space::{GridFn, ProductSet, Rational, SetRule, SpaceError, Subset};
