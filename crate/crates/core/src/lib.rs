//! Static Execution-Cache-Memory and Roofline performance models for
//! streaming and stencil loop kernels.
//!
//! The pipeline is: [`kernel`] parses a restricted C loop nest, [`cache`]
//! predicts per-level cache-line traffic for one cache line of work,
//! [`incore`] supplies in-core timings, and [`model`] composes the ECM and
//! Roofline predictions. [`report`] drives the command line front end.

pub mod kernel;
pub mod machine;
pub mod cache;
pub mod incore;
pub mod model;
pub mod report;
