//! Joint movable-antenna placement and robust power minimization for a
//! full-duplex satellite serving uplink and downlink user terminals.
//!
//! The crate is organised bottom-up:
//!
//! * [`units`] and [`scenario`] generate problem instances and own unit conversions.
//! * [`channel`] evaluates field-response vectors, the self-interference matrix and
//!   the line-of-sight user channels for a given antenna layout.
//! * [`receiver`] holds the zero-forcing receive bank, SINRs and rates.
//! * [`conic`] is a small modelling layer over a symmetric-cone solver.
//! * [`robust`] assembles and solves the inner robust SDP for fixed positions.
//! * [`pso`] is the outer particle-swarm search over antenna positions.
//! * [`experiments`] and [`plot`] drive the command-line experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod conic;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod plot;
pub mod pso;
pub mod receiver;
pub mod robust;
pub mod scenario;
pub mod units;

// Links the system OpenBLAS/LAPACK used by the solver's PSD cones.
extern crate openblas_src;

pub use error::{Error, Result};
pub use num_complex::Complex64;
