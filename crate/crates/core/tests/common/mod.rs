#![allow(dead_code)]

pub mod smo;
pub mod lab_series;
