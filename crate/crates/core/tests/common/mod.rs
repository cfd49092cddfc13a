#![allow(dead_code)]

pub mod grad_cases;
pub mod mconv_oracle;
