//! Plants used by the scenarios: a generic CT filter realization, a two-link
//! arm, the solar-heated house and two pole-placement loops.

pub mod appc;
pub mod general;
pub mod robot;
pub mod solar;
