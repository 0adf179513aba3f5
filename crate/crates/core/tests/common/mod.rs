#![allow(dead_code)]

pub mod naive_loss;
pub mod shapes;
