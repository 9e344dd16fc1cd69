#![allow(dead_code)]

pub use zipmerge::selftest::{explore, lively_params, random_frame};
