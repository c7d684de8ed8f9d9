pub mod ctmc;
pub mod error;
pub mod latmodel;
pub mod optimize;
pub mod sim;
pub mod strategy;
