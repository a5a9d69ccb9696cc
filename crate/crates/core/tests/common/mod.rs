#![allow(dead_code)]

pub mod data;
pub mod oracle;
pub mod reference;
