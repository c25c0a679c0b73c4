pub mod cluster;
pub mod reproduce;
pub mod rf;
pub mod sir;
pub mod stats;
