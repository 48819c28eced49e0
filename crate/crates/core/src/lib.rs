//! Gaze-contingent tactile feedback for sustained-attention experiments.
//!
//! The crate covers the whole loop: screen gaze is classified into four
//! quadrants and mapped onto wrist and ankle vibration sites by a feedback
//! controller, a three-choice vigilance task is generated and scored, a
//! twelve-session within-subject study is orchestrated over a JSON line
//! protocol, every event is logged for replay, and the analysis module
//! recomputes gaze entropy and repeated-measures statistics from the logs.
//! A virtual participant closes the loop for testing without people.

pub mod actuator;
pub mod analysis;
pub mod controller;
pub mod event_log;
pub mod gaze;
pub mod session;
pub mod sim;
pub mod task;
