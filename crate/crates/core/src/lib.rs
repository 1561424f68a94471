//! Inference of extended finite state machines from a black-box system
//! that cannot be reset.
//!
//! The learner drives a [`sul::Sul`] through homing, characterising and
//! transfer sequences, builds a sampled control machine, and then
//! generalises the recorded register samples into guards and output
//! functions.

pub mod bundled;
pub mod cli;
pub mod expr;
pub mod generalise;
pub mod learner;
pub mod machine;
pub mod oracle;
pub mod sul;
pub mod value;
