//! Graphomotor and handwriting assessment pipeline.
//!
//! Parses pen-digitizer recordings, extracts an online handwriting/drawing
//! feature catalog, fits grade-wise normative tables, scores manifestation
//! severity and global components, and emits assessment profiles. A
//! synthetic ink generator provides an oracle corpus and demo cohort.

pub mod catalog;
pub mod complexity;
pub mod geometry;
pub mod ink;
pub mod kinematics;
pub mod modeling;
pub mod scoring;
pub mod siglognormal;
pub mod stats;
pub mod synth;
