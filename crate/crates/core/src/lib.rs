//! Power-grid fault analysis: network modelling, power flow, phasor-domain
//! transient simulation, labelled PMU dataset generation, and the learned
//! models that forecast voltage deviation, classify fault type and locate
//! the faulted bus.

pub mod dataset;
pub mod grid;
pub mod neuro;
pub mod powerflow;
pub mod tasks;
pub mod transient;
