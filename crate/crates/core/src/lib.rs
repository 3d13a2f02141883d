#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod fisher;
pub mod harness;
pub mod linalg;
pub mod nn;
pub mod optim;
