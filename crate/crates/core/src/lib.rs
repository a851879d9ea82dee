#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive;
pub mod cli;
pub mod config;
pub mod error;
pub mod gegenbauer;
pub mod io;
pub mod nlp;
pub mod par;
pub mod problem;
pub mod quadrature;
pub mod registry;
pub mod sweep;
pub mod transcription;
