//! Map-relative vehicle localization with a Decentralized Kalman Filter with
//! Feedback (DKFF).
//!
//! The crate fuses GPS, odometry, 3D-sensor landmarks and mono-camera
//! point/line observations against a 3D polyline map. Independent local
//! filters each process one sensor kind against a shared prior; a master
//! filter fuses their posteriors in information form and feeds the result
//! back as everyone's next prior.
//!
//! Module map:
//!
//! * [`geometry`]: poses, pinhole projection, Plücker lines, Hesse normal form.
//! * [`dynamics`]: bicycle + vertical-clothoid motion model, Jacobians, RK4 step.
//! * [`measurement`]: sensor prediction functions, innovations and Jacobians.
//! * [`filter`]: local/master information filters, feedback, centralized oracle.
//! * [`map`]: polyline/landmark map, visibility queries, vertical profile fit.
//! * [`sim`]: scenario simulation, filter runs, error metrics and studies.
//! * [`cli`]: the `dkff` command-line front end.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod filter;
pub mod geometry;
pub mod linalg;
pub mod map;
pub mod measurement;
pub mod rng;
pub mod selftest;
pub mod sim;

pub use error::{Error, Result};
