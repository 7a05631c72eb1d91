//! Data generation for the 1-D toy scenario and the variable impedance
//! actuator (VIA) scenario.

pub mod toy;
pub mod via;
