//! Keypoint-based planar tool manipulation.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`] point clouds, planar transforms, Chamfer distance, RANSAC and clustering
//! * [`toolgen`] procedural hammer / non-hammer tools built from convex parts
//! * [`simulator`] quasi-static hammering, pushing and reaching tasks
//! * [`keypoints`] the keypoint data model and the heuristic / template generators
//! * [`optimizer`] keypoints to grasp + final tool pose through a small QP
//! * [`learner`] point-set encoder with proposal (CVAE) and evaluation heads
//! * [`selfsup`] episode execution and the self-supervised data loop
//! * [`creator`] composing new tools by gradient ascent on the evaluation score
//! * [`harness`] configuration, evaluation protocol, reports and rendering

pub mod creator;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod keypoints;
pub mod learner;
pub mod optimizer;
pub mod rng;
pub mod selfsup;
pub mod simulator;
pub mod toolgen;

pub use error::{Error, Result};
