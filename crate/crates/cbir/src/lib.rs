//! Service and tooling around `cbir-core`: the HTTP/JSON API, the
//! command-line interface, label files and the CRR/FRR evaluation harness.

pub mod api;
pub mod cli;
pub mod eval;
pub mod labels;
