#![allow(dead_code)]

pub mod active_set;
