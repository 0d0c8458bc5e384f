//! Attitude, body air-velocity and altitude estimation from IMU, Pitot,
//! barometer and magnetometer data, with an observability toolkit and a
//! Monte Carlo simulation harness.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod geometry;
pub mod harness;
pub mod observability;
pub mod observer;
pub mod parallel;
pub mod sensors;
