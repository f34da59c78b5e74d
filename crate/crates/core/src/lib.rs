#![no_std]

extern crate alloc;

pub mod liegroups;
pub mod object_model;
pub mod spatial;
pub mod ambiguity;
pub mod pose_init;
pub mod graph;
pub mod metrics;
pub mod sim;
pub mod pipeline;
