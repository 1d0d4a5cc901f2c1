#![allow(dead_code)]

pub mod graph;
pub mod reeds_shepp;
