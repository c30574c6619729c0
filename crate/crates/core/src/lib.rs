//! Decoder workbench for topological stabilizer codes.
//!
//! The crate is organized bottom-up:
//!
//! - [`gf2`]: bit-packed GF(2) linear algebra, the symplectic form, and the
//!   small dense real kernels (Householder QR, least squares).
//! - [`codes`]: the four supported code families (unrotated / rotated surface,
//!   666 / 488 color) as [`codes::StabilizerCode`] values with check matrix,
//!   logical generators, pure-error map, and 2D geometry.
//! - [`noise`]: i.i.d. Pauli noise models with counter-based sampling, so
//!   sample `i` of a stream is the same no matter how work is split.
//! - [`diagnosis`]: diagnosis matrices `H_g`, the class-extraction geometry
//!   (`D`, its left inverse) and the analysis metrics `m`, `M`, `N`.
//! - [`dataset`]: (syndrome, diagnosis) training pairs and their on-disk
//!   format.
//! - [`nn`]: a deterministic feed-forward neural engine (dense / conv /
//!   batchnorm, Adam) written directly against the shapes this problem needs.
//! - [`decode`]: the linear prediction pipeline plus exact small-instance
//!   oracles (conditional-mean diagnosis, optimal class).
//! - [`baselines`]: minimum-distance and matching-based reference decoders.
//! - [`experiment`]: end-to-end experiment orchestration and CSV emission.

pub mod baselines;
pub mod codes;
pub mod dataset;
pub mod decode;
pub mod diagnosis;
pub mod experiment;
pub mod gf2;
pub mod nn;
pub mod noise;
