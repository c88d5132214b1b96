//! Desk-scale laboratory for learning quadruped bounding.
//!
//! The pipeline mirrors a pretrain-then-finetune workflow for legged
//! locomotion: a planar sagittal-plane simulator ([`sim`]) hosts a
//! 12-joint quadruped; a model-based SLIP bounding controller
//! ([`control`]) generates reference motion; the actor network
//! ([`neural`]) is pre-fitted to that motion by supervised regression
//! ([`prefit`]) and then fine-tuned with PPO under a contact-based gait
//! reward ([`reward`]) and domain randomization ([`trainer`]).
//!
//! The `bounder` binary exposes the pipeline as subcommands; see the
//! repository README for a walkthrough.

pub mod config;
pub mod control;
pub mod env;
pub mod error;
pub mod eval;
pub mod metrics;
pub mod neural;
pub mod observation;
pub mod prefit;
pub mod reward;
pub mod rng;
pub mod robot;
pub mod sim;
pub mod trainer;

pub use error::BounderError;
