//! Feeder model enhancement from smart-meter and feeder-head data.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod estimator;
pub mod ingest;
pub mod ivkernel;
pub mod netmodel;
pub mod nlp;
pub mod oracle;
pub mod report;
pub mod sparse;
pub mod synth;
