#![allow(dead_code)]

pub mod gradcheck;
pub mod natural;
pub mod oracles;
